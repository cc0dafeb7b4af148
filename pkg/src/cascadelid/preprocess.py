"""
Social-media text normalization applied before featurization.

Five pattern classes can be stripped from raw text:

``url``
    ``http://`` / ``https://`` up to the next whitespace, and bare ``t.co/...``.
``mention``
    ``@`` followed by one or more word characters.
``hashtag``
    ``#`` followed by one or more word characters (body included).
``emoji``
    Any run of code points from the blocks in :data:`EMOJI_RANGES`.
``emoticon``
    Whole whitespace-delimited tokens from :data:`EMOTICONS`. Matching is
    case-insensitive and ignores repeated characters, so ``:DDD`` and ``:d``
    both count as ``:D``.

Every removed span becomes a single space; whitespace is then collapsed.
"""

import re
from dataclasses import dataclass, field

PATTERN_CLASSES = ("url", "mention", "hashtag", "emoji", "emoticon")

# (first, last) inclusive code point ranges treated as emoji.
EMOJI_RANGES = (
    (0x200D, 0x200D),  # zero width joiner
    (0x20E3, 0x20E3),  # combining enclosing keycap
    (0x2300, 0x23FF),  # miscellaneous technical
    (0x2600, 0x26FF),  # miscellaneous symbols
    (0x2700, 0x27BF),  # dingbats
    (0x2B00, 0x2BFF),  # miscellaneous symbols and arrows
    (0xFE0E, 0xFE0F),  # text / emoji variation selectors
    (0x1F000, 0x1F02F),  # mahjong tiles
    (0x1F0A0, 0x1F0FF),  # playing cards
    (0x1F100, 0x1F1FF),  # enclosed alphanumeric supplement, regional indicators
    (0x1F200, 0x1F2FF),  # enclosed ideographic supplement
    (0x1F300, 0x1F5FF),  # miscellaneous symbols and pictographs, skin tones
    (0x1F600, 0x1F64F),  # emoticons
    (0x1F650, 0x1F67F),  # ornamental dingbats
    (0x1F680, 0x1F6FF),  # transport and map symbols
    (0x1F700, 0x1F77F),  # alchemical symbols
    (0x1F780, 0x1F7FF),  # geometric shapes extended
    (0x1F800, 0x1F8FF),  # supplemental arrows-c
    (0x1F900, 0x1F9FF),  # supplemental symbols and pictographs
    (0x1FA00, 0x1FA6F),  # chess symbols
    (0x1FA70, 0x1FAFF),  # symbols and pictographs extended-a
    (0xE0020, 0xE007F),  # tag characters (flag sequences)
)

EMOTICONS = (
    ":-)", ":)", ":-(", ":(", ":-D", ":D", ";-)", ";)", ";D", ":-P", ":P",
    ";P", ":-O", ":O", ":-/", ":/", ":\\", ":-|", ":|", ":-*", ":*", ":'(",
    ":')", ":]", ":[", ":3", ":S", ":$", ":@", "xD", "xP", "D:", ">:(",
    "=)", "=(", "=D", "<3", "</3", "^^", "^_^", "-_-", "o_O", "B-)", "8-)",
)


def _emoji_class():
    return "".join(f"\\U{lo:08X}-\\U{hi:08X}" for lo, hi in EMOJI_RANGES)


URL_RE = re.compile(r"https?://\S*|\bt\.co/\S*", re.IGNORECASE)
MENTION_RE = re.compile(r"@\w+")
HASHTAG_RE = re.compile(r"#\w+")
EMOJI_RE = re.compile(f"[{_emoji_class()}]+")
_RUN_RE = re.compile(r"(.)\1+", re.DOTALL)
_WS_RE = re.compile(r"\s+")

_REGEX_PATTERNS = (("url", URL_RE), ("mention", MENTION_RE), ("hashtag", HASHTAG_RE), ("emoji", EMOJI_RE))


def _emoticon_key(token):
    return _RUN_RE.sub(r"\1", token.lower())


_EMOTICON_KEYS = frozenset(_emoticon_key(e) for e in EMOTICONS)


def is_emoticon(token):
    return _emoticon_key(token) in _EMOTICON_KEYS


@dataclass(frozen=True)
class PreprocessConfig:
    lowercase: bool = False
    elongation_cap: int = 2
    strip_patterns: frozenset = field(default_factory=lambda: frozenset(PATTERN_CLASSES))

    def __post_init__(self):
        if isinstance(self.elongation_cap, bool) or int(self.elongation_cap) != self.elongation_cap:
            raise ValueError("elongation_cap must be an integer")
        if self.elongation_cap < 1:
            raise ValueError(f"elongation_cap must be >= 1, got {self.elongation_cap}")
        patterns = frozenset(self.strip_patterns)
        unknown = patterns - set(PATTERN_CLASSES)
        if unknown:
            raise ValueError(f"unknown strip patterns: {sorted(unknown)}")
        object.__setattr__(self, "strip_patterns", patterns)


DEFAULT_CONFIG = PreprocessConfig()


def _strip_once(text, patterns):
    for name, regex in _REGEX_PATTERNS:
        if name in patterns:
            text = regex.sub(" ", text)
    tokens = text.split()
    if "emoticon" in patterns:
        tokens = [t for t in tokens if not is_emoticon(t)]
    return " ".join(tokens)


def strip_social_tokens(text, cfg=DEFAULT_CONFIG):
    """Remove URLs, mentions, hashtags, emoji and emoticons from ``text``.

    Removal is repeated until nothing more matches, so a span exposed by an
    earlier removal is caught as well. Whitespace in the result is collapsed
    to single spaces and trimmed.

    >>> strip_social_tokens("nice :-) day")
    'nice day'
    """
    patterns = cfg.strip_patterns
    text = " ".join(text.split())
    while True:
        stripped = _strip_once(text, patterns)
        if stripped == text:
            return stripped
        text = stripped


def normalize_elongation(token, cap=2):
    """Shorten every run of one repeated character longer than ``cap`` to ``cap``."""
    if cap < 1:
        raise ValueError(f"cap must be >= 1, got {cap}")
    return re.sub(r"(.)\1{%d,}" % cap, lambda m: m.group(1) * cap, token, flags=re.DOTALL)


def _pipeline(text, cfg):
    text = strip_social_tokens(text, cfg)
    if cfg.lowercase:
        text = text.lower()
    return [normalize_elongation(t, cfg.elongation_cap) for t in text.split()]


def tokenize(text, cfg=DEFAULT_CONFIG):
    """Strip, optionally lowercase, split on whitespace and cap elongations.

    Lowercasing or shortening a run can turn a token into something that
    matches a strip pattern (``htttps://x`` becomes ``https://x``), so the
    pipeline is re-applied until its output no longer changes.
    """
    tokens = _pipeline(text, cfg)
    # each extra pass can only delete or shorten; the bound guards odd case mappings
    for _ in range(16):
        again = _pipeline(" ".join(tokens), cfg)
        if again == tokens:
            break
        tokens = again
    return tokens
