"""Corpus I/O, seeded splitting and rebalancing, and a synthetic corpus generator."""

import io
import json
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataFormatError


@dataclass
class LabeledCorpus:
    records: list
    provenance: str = ""

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def label_counts(self):
        return dict(sorted(Counter(label for label, _ in self.records).items()))


@dataclass(frozen=True)
class SplitSpec:
    train_frac: float = 0.80
    valid_frac: float = 0.05
    test_frac: float = 0.15
    seed: int = 42

    def __post_init__(self):
        fracs = (self.train_frac, self.valid_frac, self.test_frac)
        if min(fracs) < 0:
            raise ValueError(f"split fractions must be non-negative, got {fracs}")
        if abs(sum(fracs) - 1.0) > 1e-9:
            raise ValueError(f"split fractions must sum to 1, got {sum(fracs)}")


def parse_tsv(data, provenance="<bytes>"):
    if isinstance(data, str):
        data = data.encode("utf-8")
    records = []
    for lineno, raw in enumerate(data.split(b"\n"), start=1):
        if raw.endswith(b"\r"):
            raw = raw[:-1]
        if not raw:
            # only a final empty line (trailing newline) is allowed
            if lineno == data.count(b"\n") + 1:
                break
            raise DataFormatError("empty line", lineno)
        try:
            line = raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise DataFormatError(f"invalid UTF-8 ({exc.reason})", lineno) from None
        label, sep, text = line.partition("\t")
        if not sep:
            raise DataFormatError("missing TAB between label and text", lineno)
        if not label:
            raise DataFormatError("empty label", lineno)
        records.append((label, text))
    return LabeledCorpus(records, provenance)


def load_tsv(source):
    """Read ``label<TAB>text`` lines; ``source`` is a path or binary file."""
    if hasattr(source, "read"):
        data = source.read()
        return parse_tsv(data, getattr(source, "name", "<stream>"))
    with open(source, "rb") as fh:
        return parse_tsv(fh.read(), str(source))


def format_tsv(corpus):
    out = io.StringIO()
    for label, text in corpus:
        if "\t" in label or "\n" in label or "\n" in text:
            raise DataFormatError(f"record ({label!r}, {text[:30]!r}) cannot be written as one TSV line")
        out.write(f"{label}\t{text}\n")
    return out.getvalue()


def write_tsv(corpus, destination):
    data = format_tsv(corpus).encode("utf-8")
    if hasattr(destination, "write"):
        destination.write(data)
    else:
        with open(destination, "wb") as fh:
            fh.write(data)


def split(corpus, spec=SplitSpec()):
    """Shuffle with the seed, then cut floor-sized train and valid parts; the rest is test."""
    records = list(corpus)
    n = len(records)
    order = np.random.default_rng(spec.seed).permutation(n)
    n_train = math.floor(spec.train_frac * n)
    n_valid = math.floor(spec.valid_frac * n)
    parts = (order[:n_train], order[n_train:n_train + n_valid], order[n_train + n_valid:])
    prov = getattr(corpus, "provenance", "")
    names = ("train", "valid", "test")
    return tuple(LabeledCorpus([records[i] for i in idx], f"{prov}:{name}") for idx, name in zip(parts, names))


def rebalance(corpus, cap, seed=42):
    """Downsample each class to at most ``cap`` records, keeping original order.

    ``cap`` is an int for every class or a ``{label: cap}`` mapping; labels
    absent from the mapping are kept whole.
    """
    records = list(corpus)
    by_label = defaultdict(list)
    for i, (label, _) in enumerate(records):
        by_label[label].append(i)
    rng = np.random.default_rng(seed)
    keep = []
    for label in sorted(by_label):
        limit = cap.get(label) if isinstance(cap, dict) else cap
        idx = by_label[label]
        if limit is None or len(idx) <= limit:
            keep.extend(idx)
            continue
        if limit < 1:
            raise ValueError(f"cap for {label!r} must be >= 1, got {limit}")
        keep.extend(rng.choice(idx, size=limit, replace=False).tolist())
    keep.sort()
    return LabeledCorpus([records[i] for i in keep], getattr(corpus, "provenance", ""))


@dataclass
class SyntheticLanguage:
    label: str
    alphabet: str
    weights: list = None

    def __post_init__(self):
        if not self.alphabet:
            raise ConfigError(f"language {self.label!r} has an empty alphabet")
        if any(c.isspace() for c in self.alphabet):
            raise ConfigError(f"language {self.label!r}: alphabet may not contain whitespace")
        if self.weights is not None:
            if len(self.weights) != len(self.alphabet):
                raise ConfigError(f"language {self.label!r}: {len(self.weights)} weights for "
                                  f"{len(self.alphabet)} characters")
            if min(self.weights) < 0 or sum(self.weights) <= 0:
                raise ConfigError(f"language {self.label!r}: weights must be non-negative with a positive sum")


@dataclass
class SyntheticSpec:
    languages: list
    docs_per_lang: int = 100
    word_len_range: tuple = (2, 8)
    doc_len_range: tuple = (4, 12)
    seed: int = 42

    def __post_init__(self):
        if len(self.languages) < 2:
            raise ConfigError("a synthetic corpus needs at least two languages")
        labels = [lang.label for lang in self.languages]
        if len(set(labels)) != len(labels):
            raise ConfigError(f"duplicate language labels {labels}")
        for name in ("word_len_range", "doc_len_range"):
            lo, hi = getattr(self, name)
            if not 1 <= lo <= hi:
                raise ConfigError(f"{name} must satisfy 1 <= lo <= hi, got {(lo, hi)}")
            setattr(self, name, (int(lo), int(hi)))

    @classmethod
    def from_dict(cls, raw):
        try:
            langs = [SyntheticLanguage(d["label"], d["alphabet"], d.get("weights")) for d in raw["languages"]]
            return cls(langs, int(raw.get("docs_per_lang", 100)), tuple(raw.get("word_len_range", (2, 8))),
                       tuple(raw.get("doc_len_range", (4, 12))), int(raw.get("seed", 42)))
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed synthetic spec: {exc}") from exc

    @classmethod
    def from_json(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self):
        return {
            "languages": [{"label": l.label, "alphabet": l.alphabet, "weights": l.weights} for l in self.languages],
            "docs_per_lang": self.docs_per_lang,
            "word_len_range": list(self.word_len_range),
            "doc_len_range": list(self.doc_len_range),
            "seed": self.seed,
        }


BASE_ALPHABET = "abcdefghijklmnopqrstuvwxyz"
MARKED_CHARS = ("äöü", "éèç", "ñáí", "åøæ", "ëïĳ", "ãõâ", "łśż", "ðþý")


def default_synthetic_spec(n_languages=5, docs_per_lang=2000, seed=42):
    """Languages sharing a base alphabet with distinct frequency profiles.

    Each language adds three marked characters of its own and draws a Zipf-like
    weight for every base letter from a seeded permutation, so the classes
    overlap heavily in characters but differ in their statistics.
    """
    if not 2 <= n_languages <= len(MARKED_CHARS):
        raise ConfigError(f"n_languages must be in [2, {len(MARKED_CHARS)}]")
    rng = np.random.default_rng([seed, 7])
    zipf = 1.0 / np.arange(1, len(BASE_ALPHABET) + 1)
    languages = []
    for i in range(n_languages):
        ranks = rng.permutation(len(BASE_ALPHABET))
        weights = [round(float(w), 6) for w in zipf[ranks]] + [0.08, 0.05, 0.03]
        languages.append(SyntheticLanguage(f"lang{i}", BASE_ALPHABET + MARKED_CHARS[i], weights))
    return SyntheticSpec(languages, docs_per_lang, (2, 8), (4, 12), seed)


def generate_synthetic(spec):
    """Documents of space-separated pseudo-words, one block of docs per language."""
    rng = np.random.default_rng(spec.seed)
    records = []
    for lang in spec.languages:
        chars = list(lang.alphabet)
        if lang.weights is None:
            p = None
        else:
            w = np.asarray(lang.weights, dtype=np.float64)
            p = w / w.sum()
        for _ in range(spec.docs_per_lang):
            n_words = int(rng.integers(spec.doc_len_range[0], spec.doc_len_range[1] + 1))
            lengths = rng.integers(spec.word_len_range[0], spec.word_len_range[1] + 1, size=n_words)
            flat = rng.choice(len(chars), size=int(lengths.sum()), p=p)
            words, pos = [], 0
            for length in lengths:
                words.append("".join(chars[j] for j in flat[pos:pos + length]))
                pos += length
            records.append((lang.label, " ".join(words)))
    return LabeledCorpus(records, f"synthetic(seed={spec.seed})")
