"""Pure-Python implementations of the hot kernels.

Used when the compiled ``_kernels`` extension is unavailable, and as the
reference the extension is checked against. Both modules expose the same
functions with the same argument order.
"""

import numpy as np

FNV_OFFSET_BASIS = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


def fnv1a64(data):
    h = FNV_OFFSET_BASIS
    for b in data:
        h = ((h ^ b) * FNV_PRIME) & _MASK64
    return h


def _char_offsets(raw):
    # byte offset of every code point start, plus the end
    offsets = [i for i, b in enumerate(raw) if b & 0xC0 != 0x80]
    offsets.append(len(raw))
    return offsets


def hash_token_ngrams(tokens, minn, maxn, buckets):
    """Hash the n-grams of every ``<token>`` into ``[0, buckets)``.

    Emission order is start-major (all n-grams beginning at one character,
    shortest first), which is what the incremental hash produces.
    """
    out = []
    for token in tokens:
        raw = ("<" + token + ">").encode("utf-8", "surrogatepass")
        offsets = _char_offsets(raw)
        m = len(offsets) - 1
        for i in range(m):
            h = FNV_OFFSET_BASIS
            for n in range(1, min(maxn, m - i) + 1):
                for b in raw[offsets[i + n - 1]:offsets[i + n]]:
                    h = ((h ^ b) * FNV_PRIME) & _MASK64
                if n >= minn:
                    out.append(h % buckets)
    return np.array(out, dtype=np.int64)


def sgd_epoch(input_table, output_table, ids, offsets, targets, order, lr0, t, total):
    """One pass of per-document SGD; tables are updated in place.

    Returns ``(loss_sum, t)`` where ``t`` is the advanced update counter.
    """
    loss_sum = 0.0
    # divergence is detected by the caller after the epoch
    with np.errstate(all="ignore"):
        for doc in order:
            bag = ids[offsets[doc]:offsets[doc + 1]]
            loss_sum += _sgd_step(input_table, output_table, bag, targets[doc], lr0 * (1.0 - t / total))
            t += 1
    return float(loss_sum), t


def _sgd_step(input_table, output_table, bag, y, lr):
    n = len(bag)
    hidden = input_table[bag].astype(np.float64).sum(axis=0) / n
    out = output_table.astype(np.float64)
    logits = out @ hidden
    zmax = logits.max()
    expz = np.exp(logits - zmax)
    norm = expz.sum()
    err = expz / norm
    err[y] -= 1.0
    grad_hidden = out.T @ err
    output_table -= np.outer(lr * err, hidden).astype(np.float32)
    np.subtract.at(input_table, bag, (lr / n * grad_hidden).astype(np.float32))
    return np.log(norm) + zmax - logits[y]
