"""Compare the compiled kernels against the pure-Python fallback.

    python benchmarks/bench_kernels.py [--docs-per-lang N] [--epochs E]

Reports featurization and SGD-epoch throughput for each available backend
and checks the two produce matching results.
"""

import argparse
import time

import numpy as np

from cascadelid import _pykernels
from cascadelid.classifier import Hyperparams, init_tables
from cascadelid.data import default_synthetic_spec, generate_synthetic
from cascadelid.features import FeatureConfig
from cascadelid.preprocess import tokenize

try:
    from cascadelid import _kernels
except ImportError:
    _kernels = None


def prepare(docs_per_lang):
    corpus = generate_synthetic(default_synthetic_spec(5, docs_per_lang, seed=0))
    token_lists = [tokenize(text) for _, text in corpus]
    labels = sorted({label for label, _ in corpus})
    targets = np.array([labels.index(label) for label, _ in corpus], dtype=np.int64)
    return token_lists, targets, len(labels)


def bench_featurize(mod, token_lists, cfg):
    start = time.perf_counter()
    bags = [mod.hash_token_ngrams(tokens, cfg.minn, cfg.maxn, cfg.buckets) for tokens in token_lists]
    return time.perf_counter() - start, bags


def bench_sgd(mod, bags, targets, k, hp):
    ids = np.concatenate(bags)
    offsets = np.concatenate([[0], np.cumsum([len(b) for b in bags])]).astype(np.int64)
    inp, out = init_tables(hp, k)
    total = hp.epochs * len(bags)
    rng = np.random.default_rng(0)
    t = 0
    start = time.perf_counter()
    for _ in range(hp.epochs):
        order = rng.permutation(len(bags)).astype(np.int64)
        loss, t = mod.sgd_epoch(inp, out, ids, offsets, targets, order, hp.lr0, t, total)
    return time.perf_counter() - start, out, loss / len(bags)


def main():
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--docs-per-lang", type=int, default=1000)
    parser.add_argument("--epochs", type=int, default=2)
    parser.add_argument("--dim", type=int, default=16)
    args = parser.parse_args()

    token_lists, targets, k = prepare(args.docs_per_lang)
    fc = FeatureConfig(buckets=1 << 18)
    hp = Hyperparams(dim=args.dim, epochs=args.epochs, feature_cfg=fc)
    backends = [("python", _pykernels)] + ([("cython", _kernels)] if _kernels else [])
    n_docs = len(token_lists)
    results = {}
    print(f"{n_docs} documents, dim {args.dim}, {args.epochs} epochs")
    print(f"{'backend':<8} {'featurize s':>12} {'docs/s':>10} {'sgd s':>10} {'updates/s':>11} {'last loss':>10}")
    for name, mod in backends:
        ft, bags = bench_featurize(mod, token_lists, fc)
        st, out, loss = bench_sgd(mod, bags, targets, k, hp)
        results[name] = (ft, st, bags, out)
        print(f"{name:<8} {ft:12.3f} {n_docs / ft:10.0f} {st:10.3f} {n_docs * args.epochs / st:11.0f} {loss:10.5f}")
    if len(results) == 2:
        (pf, ps, pb, po), (cf, cs, cb, co) = results["python"], results["cython"]
        same = all(np.array_equal(a, b) for a, b in zip(pb, cb))
        print(f"speedup: featurize x{pf / cf:.1f}, sgd x{ps / cs:.1f}")
        print(f"identical bags: {same}; max |output table diff|: {np.abs(po - co).max():.2e}")
    else:
        print("compiled kernels not built; only the fallback was measured")


if __name__ == "__main__":
    main()
