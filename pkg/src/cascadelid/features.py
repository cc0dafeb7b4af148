"""Character n-gram extraction and feature hashing.

Each token is framed as ``<token>`` and cut into every contiguous run of
``minn..maxn`` code points. An n-gram's bucket is the 64-bit FNV-1a hash of
its UTF-8 bytes modulo the bucket count; collisions are accepted.
"""

from dataclasses import dataclass

import numpy as np

from ._backend import kernels
from .errors import InvalidTokenError

BOW = "<"
EOW = ">"


@dataclass(frozen=True)
class FeatureConfig:
    minn: int = 2
    maxn: int = 5
    buckets: int = 1_000_000
    # also hash the whole marked token, as a word-level feature
    word_feature: bool = False

    def __post_init__(self):
        if self.minn < 1:
            raise ValueError(f"minn must be >= 1, got {self.minn}")
        if self.maxn < self.minn:
            raise ValueError(f"maxn ({self.maxn}) must be >= minn ({self.minn})")
        if not 1 <= self.buckets < 2**63:
            raise ValueError(f"buckets must be in [1, 2^63), got {self.buckets}")


def fnv1a64(data):
    """64-bit FNV-1a of a byte string (str is UTF-8 encoded first)."""
    if isinstance(data, str):
        data = data.encode("utf-8")
    return kernels.fnv1a64(bytes(data))


def extract_char_ngrams(token, minn=2, maxn=5):
    """All n-grams of ``<token>`` for n in ``[minn, maxn]``, by increasing n.

    >>> extract_char_ngrams("a")
    ['<a', 'a>', '<a>']
    """
    if not token:
        raise InvalidTokenError("cannot extract n-grams from an empty token")
    padded = BOW + token + EOW
    m = len(padded)
    return [padded[i:i + n] for n in range(minn, min(maxn, m) + 1) for i in range(m - n + 1)]


def featurize(tokens, cfg=FeatureConfig()):
    """Bag of bucket ids for a token sequence, as an int64 array.

    Order inside the bag carries no meaning; duplicates are kept.
    """
    tokens = list(tokens)
    if not tokens:
        return np.empty(0, dtype=np.int64)
    if any(not t for t in tokens):
        raise InvalidTokenError("token sequence contains an empty token")
    bag = kernels.hash_token_ngrams(tokens, cfg.minn, cfg.maxn, cfg.buckets)
    if cfg.word_feature:
        words = [fnv1a64((BOW + t + EOW).encode("utf-8", "surrogatepass")) % cfg.buckets for t in tokens]
        bag = np.concatenate([bag, np.array(words, dtype=np.int64)])
    return bag
