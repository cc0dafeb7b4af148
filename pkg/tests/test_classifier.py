import io
import math
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cascadelid.classifier import (
    Hyperparams,
    Model,
    dumps_model,
    fit,
    forward,
    learning_rate,
    load_model,
    loads_model,
    loss_and_gradients,
    predict,
    save_model,
    train,
)
from cascadelid.errors import (
    BadMagicError,
    EmptyDocumentError,
    NonFiniteWeightError,
    TrainingError,
    TruncatedModelError,
    VersionMismatchError,
)
from cascadelid.features import FeatureConfig
from cascadelid.preprocess import PreprocessConfig


def make_model(k, dim, buckets, rng=None, dtype=np.float64, labels=None):
    hp = Hyperparams(dim=dim, epochs=0, feature_cfg=FeatureConfig(buckets=buckets))
    if rng is None:
        inp = np.zeros((buckets, dim), dtype=dtype)
        out = np.zeros((k, dim), dtype=dtype)
    else:
        inp = rng.normal(size=(buckets, dim)).astype(dtype)
        out = rng.normal(size=(k, dim)).astype(dtype)
    return Model(tuple(labels or [f"l{i}" for i in range(k)]), inp, out, hp)


def numeric_grads(model, bag, y, eps=1e-4):
    def loss():
        return loss_and_gradients(model, bag, y)[0]

    g_out = np.zeros_like(model.output_table)
    for idx in np.ndindex(*model.output_table.shape):
        orig = model.output_table[idx]
        model.output_table[idx] = orig + eps
        up = loss()
        model.output_table[idx] = orig - eps
        down = loss()
        model.output_table[idx] = orig
        g_out[idx] = (up - down) / (2 * eps)
    g_in = {}
    for row in set(bag.tolist()):
        g = np.zeros(model.hyperparams.dim)
        for c in range(model.hyperparams.dim):
            orig = model.input_table[row, c]
            model.input_table[row, c] = orig + eps
            up = loss()
            model.input_table[row, c] = orig - eps
            down = loss()
            model.input_table[row, c] = orig
            g[c] = (up - down) / (2 * eps)
        g_in[row] = g
    return g_out, g_in


def rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-12)


def gradcheck_case(rng):
    k = int(rng.integers(2, 6))
    dim = int(rng.integers(1, 9))
    buckets = 16
    model = make_model(k, dim, buckets, rng)
    bag = rng.integers(0, buckets, size=int(rng.integers(1, 11)))
    y = int(rng.integers(0, k))
    _, g_out, g_in = loss_and_gradients(model, bag, y)
    n_out, n_in = numeric_grads(model, bag, y)
    errs = [rel_err(g_out, n_out)] + [rel_err(g_in[r], n_in[r]) for r in n_in]
    assert set(g_in) == set(n_in)
    return max(errs)


def test_forward_zero_weights_is_uniform():
    model = make_model(3, 4, 8)
    pred = forward(model, np.array([1, 2, 2]))
    assert pred.probs == pytest.approx({"l0": 1 / 3, "l1": 1 / 3, "l2": 1 / 3})
    assert pred.argmax == "l0"


def test_forward_empty_bag_is_uniform():
    model = make_model(4, 3, 8, np.random.default_rng(0))
    pred = forward(model, np.array([], dtype=np.int64))
    assert list(pred.probs.values()) == pytest.approx([0.25] * 4)


def test_forward_softmax_value():
    model = make_model(2, 1, 1)
    model.input_table[0, 0] = 1.0
    model.output_table[0, 0] = math.log(3)
    pred = forward(model, np.array([0]))
    assert [pred.probs["l0"], pred.probs["l1"]] == pytest.approx([0.75, 0.25], abs=1e-12)


def test_forward_is_stable_for_huge_logits():
    model = make_model(2, 1, 1)
    model.input_table[0, 0] = 1.0
    model.output_table[:, 0] = [1e4, -1e4]
    pred = forward(model, np.array([0]))
    assert pred.probs["l0"] == 1.0 and np.isfinite(list(pred.probs.values())).all()


def test_loss_zero_weights_is_ln2():
    loss, g_out, _ = loss_and_gradients(make_model(2, 3, 4), np.array([0, 1]), 1)
    assert loss == pytest.approx(math.log(2))
    assert g_out.shape == (2, 3)


def test_loss_near_perfect_prediction():
    model = make_model(2, 1, 1)
    model.input_table[0, 0] = 1.0
    model.output_table[:, 0] = [50.0, -50.0]
    loss, g_out, g_in = loss_and_gradients(model, np.array([0]), 0)
    assert loss < 1e-40
    assert np.abs(g_out).max() < 1e-40


def test_loss_rejects_empty_bag():
    with pytest.raises(EmptyDocumentError):
        loss_and_gradients(make_model(2, 2, 2), np.array([], dtype=np.int64), 0)


def test_duplicate_ids_scale_gradient():
    model = make_model(3, 2, 4, np.random.default_rng(1))
    _, _, g = loss_and_gradients(model, np.array([1, 1, 2]), 0)
    assert np.allclose(g[1], 2 * g[2])


def test_gradcheck_small_case():
    assert gradcheck_case(np.random.default_rng(123)) < 1e-4


def test_learning_rate_schedule():
    rates = [learning_rate(t, 10, 0.1) for t in range(11)]
    assert rates[0] == 0.1 and rates[-1] == 0.0
    assert all(a >= b for a, b in zip(rates, rates[1:]))
    assert all(0 <= r <= 0.1 for r in rates)


def disjoint_corpus(n=200, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        label, alphabet = ("A", "ab") if i % 2 == 0 else ("B", "xy")
        words = ["".join(rng.choice(list(alphabet), size=int(rng.integers(2, 6)))) for _ in range(4)]
        out.append((label, " ".join(words)))
    return out


FAST = dict(feature_cfg=FeatureConfig(buckets=2048))


def test_train_zero_epochs_returns_initialization():
    model = train(disjoint_corpus(20), Hyperparams(dim=4, epochs=0, **FAST))
    assert not model.output_table.any()
    assert model.labels == ("A", "B")
    bound = 1 / 4
    assert np.abs(model.input_table).max() <= bound


def test_train_disjoint_alphabets_separates():
    data = disjoint_corpus(200)
    result = fit(data, Hyperparams(dim=10, epochs=5, **FAST))
    model = result.model
    acc = np.mean([predict(model, text).argmax == label for label, text in data])
    assert acc == 1.0
    assert predict(model, "abab").argmax == "A"
    losses = result.epoch_losses
    assert all(a >= b for a, b in zip(losses, losses[1:]))


def test_train_is_deterministic():
    data = disjoint_corpus(60)
    hp = Hyperparams(dim=6, epochs=3, seed=77, **FAST)
    assert dumps_model(train(data, hp)) == dumps_model(train(data, hp))
    other = Hyperparams(dim=6, epochs=3, seed=78, **FAST)
    assert dumps_model(train(data, hp)) != dumps_model(train(data, other))


def test_train_skips_empty_documents():
    data = disjoint_corpus(20) + [("A", "https://t.co/x"), ("B", "@someone")]
    result = fit(data, Hyperparams(dim=4, epochs=1, **FAST))
    assert result.skipped == 2
    assert result.class_counts == {"A": 11, "B": 11}


def test_train_errors():
    with pytest.raises(TrainingError):
        train([("A", "abc"), ("A", "def")], Hyperparams(dim=2, epochs=1, **FAST))
    with pytest.raises(TrainingError):
        train([("A", "@x"), ("B", "http://y")], Hyperparams(dim=2, epochs=1, **FAST))


def test_train_detects_divergence():
    with pytest.raises(TrainingError, match="non-finite"):
        train(disjoint_corpus(40), Hyperparams(dim=4, epochs=2, lr0=1e38, **FAST))


def test_predict_special_inputs(small_model):
    k = small_model.num_labels
    for text in ["", "@user http://x.co"]:
        assert list(predict(small_model, text).probs.values()) == pytest.approx([1 / k] * k)


@settings(max_examples=100, deadline=None)
@given(st.text(max_size=40))
def test_probabilities_are_a_distribution(small_model, text):
    # hypothesis cannot mix function-scoped fixtures, but session scope is safe
    probs = list(predict(small_model, text).probs.values())
    assert abs(sum(probs) - 1) < 1e-6
    assert all(0 <= p <= 1 for p in probs)


def test_hyperparam_validation():
    for kwargs in (dict(dim=0), dict(epochs=-1), dict(lr0=0)):
        with pytest.raises(ValueError):
            Hyperparams(**kwargs)


# model file format

def test_save_load_round_trip(tmp_path, small_model):
    path = tmp_path / "m.clid"
    save_model(small_model, path)
    loaded = load_model(path)
    assert loaded.labels == small_model.labels
    assert np.array_equal(loaded.input_table, small_model.input_table)
    rng = np.random.default_rng(4)
    for _ in range(100):
        text = " ".join("".join(rng.choice(list("abcdefghäöü "), size=6)) for _ in range(3))
        assert predict(loaded, text).probs == predict(small_model, text).probs
    assert path.read_bytes() == dumps_model(loaded)


def test_file_layout_is_exact():
    model = make_model(2, 3, 5, np.random.default_rng(0), dtype=np.float32, labels=["gsw", "de"])
    data = dumps_model(model)
    header = struct.pack("<4sIQIIIIBB", b"CLID", 1, 5, 3, 2, 2, 5, 0, 2)
    labels = struct.pack("<I", 3) + b"gsw" + struct.pack("<I", 2) + b"de"
    assert data.startswith(header + labels)
    assert len(data) == len(header) + len(labels) + (5 * 3 + 2 * 3) * 4
    tail = np.frombuffer(data[len(header) + len(labels):], dtype="<f4")
    assert np.array_equal(tail[:15].reshape(5, 3), model.input_table)
    assert np.array_equal(tail[15:].reshape(2, 3), model.output_table)


def test_lowercase_flag_and_cap_round_trip():
    hp = Hyperparams(dim=2, epochs=0, feature_cfg=FeatureConfig(3, 4, 8),
                     preprocess_cfg=PreprocessConfig(lowercase=True, elongation_cap=3))
    model = Model(("a", "b"), np.zeros((8, 2), np.float32), np.zeros((2, 2), np.float32), hp)
    loaded = loads_model(dumps_model(model))
    assert loaded.hyperparams.preprocess_cfg == hp.preprocess_cfg
    assert loaded.hyperparams.feature_cfg == hp.feature_cfg


@pytest.fixture
def model_bytes():
    return dumps_model(make_model(2, 3, 5, np.random.default_rng(0), dtype=np.float32))


def test_load_bad_magic(model_bytes):
    with pytest.raises(BadMagicError, match="bad magic"):
        loads_model(b"XLID" + model_bytes[4:])


def test_load_version_mismatch(model_bytes):
    with pytest.raises(VersionMismatchError):
        loads_model(model_bytes[:4] + struct.pack("<I", 2) + model_bytes[8:])


@pytest.mark.parametrize("cut", [3, 10, 40, -5])
def test_load_truncated(model_bytes, cut):
    with pytest.raises((TruncatedModelError, BadMagicError)) as info:
        loads_model(model_bytes[:cut])
    if cut > 4:
        assert info.type is TruncatedModelError
        assert "truncated" in str(info.value)


def test_load_non_finite(model_bytes):
    data = bytearray(model_bytes)
    data[-4:] = struct.pack("<f", float("nan"))
    with pytest.raises(NonFiniteWeightError):
        loads_model(bytes(data))


def test_load_from_stream(model_bytes):
    assert loads_model(model_bytes).labels == load_model(io.BytesIO(model_bytes)).labels
