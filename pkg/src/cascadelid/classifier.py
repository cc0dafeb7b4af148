"""Linear classifier over averaged hashed n-gram embeddings.

A document's hidden vector is the mean of the input-table rows selected by
its feature bag; logits are ``output_table @ hidden`` (no bias) and the
prediction is their softmax. Training is plain per-document SGD on the
cross-entropy loss with a linearly decaying learning rate.
"""

import io
import logging
import math
import struct
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from ._backend import kernels
from .errors import (
    BadMagicError,
    EmptyDocumentError,
    ModelFormatError,
    NonFiniteWeightError,
    TrainingError,
    TruncatedModelError,
    VersionMismatchError,
)
from .features import FeatureConfig, featurize
from .preprocess import PreprocessConfig, tokenize

log = logging.getLogger(__name__)

MAGIC = b"CLID"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIQIIIIBB")


@dataclass(frozen=True)
class Hyperparams:
    dim: int = 50
    epochs: int = 30
    lr0: float = 0.1
    feature_cfg: FeatureConfig = field(default_factory=FeatureConfig)
    preprocess_cfg: PreprocessConfig = field(default_factory=PreprocessConfig)
    seed: int = 42

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if not self.lr0 > 0:
            raise ValueError(f"lr0 must be > 0, got {self.lr0}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")


@dataclass(frozen=True, eq=False)
class Model:
    labels: tuple
    input_table: np.ndarray
    output_table: np.ndarray
    hyperparams: Hyperparams

    def __post_init__(self):
        labels = tuple(self.labels)
        object.__setattr__(self, "labels", labels)
        if len(labels) < 2:
            raise ValueError("a model needs at least two labels")
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate labels: {labels}")
        dim = self.hyperparams.dim
        if self.input_table.shape != (self.hyperparams.feature_cfg.buckets, dim):
            raise ValueError(f"input table shape {self.input_table.shape} does not match hyperparams")
        if self.output_table.shape != (len(labels), dim):
            raise ValueError(f"output table shape {self.output_table.shape} does not match labels/dim")

    @property
    def num_labels(self):
        return len(self.labels)

    def label_index(self, label):
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"label {label!r} not in model labels {list(self.labels)}") from None

    def bag(self, text):
        """Feature bag of ``text`` under the model's frozen preprocessing."""
        hp = self.hyperparams
        return featurize(tokenize(text, hp.preprocess_cfg), hp.feature_cfg)


@dataclass(frozen=True)
class Prediction:
    probs: dict
    argmax: str


@dataclass
class TrainResult:
    model: Model
    skipped: int
    class_counts: dict
    epoch_losses: list


def learning_rate(t, total, lr0):
    """Rate used for update ``t`` out of ``total``: ``lr0 * (1 - t / total)``."""
    if total <= 0:
        return 0.0
    return lr0 * (1.0 - t / total)


def _softmax(logits):
    z = logits - logits.max()
    e = np.exp(z)
    return e / e.sum()


def _hidden(model, bag):
    if len(bag) == 0:
        return np.zeros(model.hyperparams.dim)
    return model.input_table[bag].astype(np.float64).sum(axis=0) / len(bag)


def forward(model, bag):
    """Prediction for an already featurized document.

    An empty bag maps to the zero hidden vector, hence a uniform distribution.
    """
    hidden = _hidden(model, np.asarray(bag, dtype=np.int64))
    probs = _softmax(model.output_table.astype(np.float64) @ hidden)
    best = int(np.argmax(probs))
    return Prediction(dict(zip(model.labels, probs.tolist())), model.labels[best])


def loss_and_gradients(model, bag, y):
    """Cross-entropy loss and its gradients for one document.

    Returns ``(loss, grad_output, grad_inputs)`` with ``grad_inputs`` mapping
    each distinct bucket id to the gradient of its input-table row.
    """
    bag = np.asarray(bag, dtype=np.int64)
    if len(bag) == 0:
        raise EmptyDocumentError("empty feature bag")
    if not 0 <= y < model.num_labels:
        raise IndexError(f"label index {y} out of range")
    hidden = _hidden(model, bag)
    out = model.output_table.astype(np.float64)
    logits = out @ hidden
    zmax = logits.max()
    lse = math.log(np.exp(logits - zmax).sum()) + zmax
    loss = float(lse - logits[y])
    err = _softmax(logits)
    err[y] -= 1.0
    grad_output = np.outer(err, hidden)
    back = out.T @ err
    ids, counts = np.unique(bag, return_counts=True)
    grad_inputs = {int(i): (c / len(bag)) * back for i, c in zip(ids, counts)}
    return max(loss, 0.0), grad_output, grad_inputs


def init_tables(hp, k):
    """Seeded initial tables: input ~ U(-1/dim, 1/dim), output all zeros."""
    rng = np.random.default_rng(hp.seed)
    bound = 1.0 / hp.dim
    shape = (hp.feature_cfg.buckets, hp.dim)
    input_table = (rng.random(shape, dtype=np.float32) * np.float32(2 * bound) - np.float32(bound))
    output_table = np.zeros((k, hp.dim), dtype=np.float32)
    return input_table, output_table


def fit(dataset, hp=Hyperparams()):
    """Train on ``(label, text)`` pairs and report what happened.

    Documents with no features after preprocessing are skipped and counted.
    The decay horizon is ``epochs * (number of usable documents)``.
    """
    dataset = list(dataset)
    labels = tuple(sorted({label for label, _ in dataset}))
    if len(labels) < 2:
        raise TrainingError(f"need at least two distinct labels, got {list(labels)}")
    index = {label: i for i, label in enumerate(labels)}

    bags, targets, skipped = [], [], 0
    for label, text in dataset:
        bag = featurize(tokenize(text, hp.preprocess_cfg), hp.feature_cfg)
        if len(bag) == 0:
            skipped += 1
            continue
        bags.append(bag)
        targets.append(index[label])
    if not bags:
        raise TrainingError("every training document is empty after preprocessing")
    if skipped:
        log.warning("skipped %d training documents that were empty after preprocessing", skipped)

    ids = np.concatenate(bags).astype(np.int64)
    offsets = np.zeros(len(bags) + 1, dtype=np.int64)
    offsets[1:] = np.cumsum([len(b) for b in bags])
    targets = np.asarray(targets, dtype=np.int64)

    input_table, output_table = init_tables(hp, len(labels))
    rng = np.random.default_rng([hp.seed, 1])
    total = hp.epochs * len(bags)
    t = 0
    epoch_losses = []
    for epoch in range(hp.epochs):
        order = rng.permutation(len(bags)).astype(np.int64)
        loss_sum, t = kernels.sgd_epoch(input_table, output_table, ids, offsets, targets, order, float(hp.lr0), t, total)
        if not (np.isfinite(input_table).all() and np.isfinite(output_table).all()):
            raise TrainingError(f"non-finite weights after epoch {epoch + 1}; lower the learning rate")
        epoch_losses.append(loss_sum / len(bags))
        log.info("epoch %d/%d loss %.6f", epoch + 1, hp.epochs, epoch_losses[-1])

    input_table.flags.writeable = False
    output_table.flags.writeable = False
    model = Model(labels, input_table, output_table, hp)
    counts = Counter(label for label, _ in dataset)
    return TrainResult(model, skipped, dict(sorted(counts.items())), epoch_losses)


def train(dataset, hp=Hyperparams()):
    return fit(dataset, hp).model


def predict(model, text):
    return forward(model, model.bag(text))


def _check_saveable(model):
    hp = model.hyperparams
    if hp.feature_cfg.word_feature:
        raise ModelFormatError("word_feature models cannot be stored in format version 1")
    if hp.preprocess_cfg.strip_patterns != PreprocessConfig().strip_patterns:
        raise ModelFormatError("format version 1 stores only the default strip patterns")
    if hp.preprocess_cfg.elongation_cap > 255:
        raise ModelFormatError("elongation cap does not fit in one byte")


def dumps_model(model):
    """Serialize to the little-endian CLID v1 byte layout."""
    _check_saveable(model)
    hp = model.hyperparams
    fc = hp.feature_cfg
    buf = io.BytesIO()
    buf.write(_HEADER.pack(MAGIC, FORMAT_VERSION, fc.buckets, hp.dim, model.num_labels,
                           fc.minn, fc.maxn, int(hp.preprocess_cfg.lowercase), hp.preprocess_cfg.elongation_cap))
    for label in model.labels:
        raw = label.encode("utf-8")
        buf.write(struct.pack("<I", len(raw)))
        buf.write(raw)
    buf.write(np.ascontiguousarray(model.input_table, dtype="<f4").tobytes())
    buf.write(np.ascontiguousarray(model.output_table, dtype="<f4").tobytes())
    return buf.getvalue()


def save_model(model, destination):
    data = dumps_model(model)
    if hasattr(destination, "write"):
        destination.write(data)
    else:
        with open(destination, "wb") as fh:
            fh.write(data)


class _Reader:
    def __init__(self, data):
        self.data = memoryview(data)
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.data):
            raise TruncatedModelError(f"truncated model file while reading {what}")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk


def loads_model(data):
    r = _Reader(data)
    if bytes(r.data[:4]) != MAGIC:
        raise BadMagicError(f"bad magic {bytes(r.data[:4])!r}, expected {MAGIC!r}")
    (_, version) = struct.unpack("<4sI", r.take(8, "header"))
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"unsupported model format version {version}")
    r.pos = 0
    _, _, buckets, dim, k, minn, maxn, lower, cap = _HEADER.unpack(r.take(_HEADER.size, "header"))
    labels = []
    for i in range(k):
        (n,) = struct.unpack("<I", r.take(4, f"label {i} length"))
        try:
            labels.append(bytes(r.take(n, f"label {i}")).decode("utf-8"))
        except UnicodeDecodeError as exc:
            raise ModelFormatError(f"label {i} is not valid UTF-8") from exc
    input_table = np.frombuffer(r.take(buckets * dim * 4, "input table"), dtype="<f4").reshape(buckets, dim)
    output_table = np.frombuffer(r.take(k * dim * 4, "output table"), dtype="<f4").reshape(k, dim)
    if r.pos != len(r.data):
        raise ModelFormatError(f"{len(r.data) - r.pos} trailing bytes after output table")
    if not (np.isfinite(input_table).all() and np.isfinite(output_table).all()):
        raise NonFiniteWeightError("model file contains NaN or infinite weights")
    try:
        hp = Hyperparams(dim=dim, epochs=0, feature_cfg=FeatureConfig(minn, maxn, buckets),
                         preprocess_cfg=PreprocessConfig(lowercase=bool(lower), elongation_cap=cap))
        return Model(tuple(labels), input_table.astype(np.float32), output_table.astype(np.float32), hp)
    except ValueError as exc:
        raise ModelFormatError(f"invalid model header: {exc}") from exc


def load_model(source):
    if hasattr(source, "read"):
        return loads_model(source.read())
    with open(source, "rb") as fh:
        return loads_model(fh.read())
