"""Brute-force reference implementations of every loss.

Everything here is written with explicit Python loops and scalar math on
purpose: these functions share no code with the library's tensor
implementations, so agreement between the two is evidence of correctness
rather than repetition.  They are slow and meant only for verification
(the `losses --oracle` path and the test suite).
"""

from __future__ import annotations

import math

import numpy as np


def _sqdist(a, b) -> float:
    return float(sum((float(x) - float(y)) ** 2 for x, y in zip(a, b)))


def _kernel(a, b, bandwidths) -> float:
    d2 = _sqdist(a, b)
    return sum(math.exp(-d2 / (2.0 * s * s)) for s in bandwidths)


def naive_mmd2(x: np.ndarray, y: np.ndarray, bandwidths) -> float:
    n, m = len(x), len(y)
    xx = sum(_kernel(x[i], x[j], bandwidths)
             for i in range(n) for j in range(n))
    xy = sum(_kernel(x[i], y[j], bandwidths)
             for i in range(n) for j in range(m))
    yy = sum(_kernel(y[i], y[j], bandwidths)
             for i in range(m) for j in range(m))
    return xx / (n * n) - 2.0 * xy / (n * m) + yy / (m * m)


def naive_plmmd_weights(onehot: np.ndarray, probs: np.ndarray,
                        eps: float = 1e-6):
    """Per-class normalized columns, outer products, averaged over the
    classes present on both sides."""
    n, k = onehot.shape
    m = probs.shape[0]
    w_xx = [[0.0] * n for _ in range(n)]
    w_xy = [[0.0] * m for _ in range(n)]
    w_yy = [[0.0] * m for _ in range(m)]
    common = []
    for c in range(k):
        src_mass = sum(float(onehot[i][c]) for i in range(n))
        tgt_mass = sum(float(probs[j][c]) for j in range(m))
        if src_mass > 0.0 and tgt_mass > eps:
            common.append((c, src_mass, tgt_mass))
    if not common:
        return np.array(w_xx), np.array(w_xy), np.array(w_yy), 0
    for c, src_mass, tgt_mass in common:
        a = [float(onehot[i][c]) / src_mass for i in range(n)]
        b = [float(probs[j][c]) / tgt_mass for j in range(m)]
        for i in range(n):
            for j in range(n):
                w_xx[i][j] += a[i] * a[j]
            for j in range(m):
                w_xy[i][j] += a[i] * b[j]
        for i in range(m):
            for j in range(m):
                w_yy[i][j] += b[i] * b[j]
    cnt = len(common)
    for mat in (w_xx, w_xy, w_yy):
        for row in mat:
            for j in range(len(row)):
                row[j] /= cnt
    return np.array(w_xx), np.array(w_xy), np.array(w_yy), cnt


def naive_plmmd(x: np.ndarray, y: np.ndarray, onehot: np.ndarray,
                probs: np.ndarray, bandwidths) -> float:
    w_xx, w_xy, w_yy, _ = naive_plmmd_weights(onehot, probs)
    # back to plain Python floats so the accumulation stays scalar
    w_xx, w_xy, w_yy = w_xx.tolist(), w_xy.tolist(), w_yy.tolist()
    n, m = len(x), len(y)
    total = 0.0
    for i in range(n):
        for j in range(n):
            total += w_xx[i][j] * _kernel(x[i], x[j], bandwidths)
    for i in range(n):
        for j in range(m):
            total -= 2.0 * w_xy[i][j] * _kernel(x[i], y[j], bandwidths)
    for i in range(m):
        for j in range(m):
            total += w_yy[i][j] * _kernel(y[i], y[j], bandwidths)
    return total


def naive_softmax_row(row, temperature: float = 1.0):
    scaled = [float(z) / temperature for z in row]
    top = max(scaled)
    exps = [math.exp(z - top) for z in scaled]
    total = sum(exps)
    return [e / total for e in exps]


def naive_entropy(p) -> float:
    return -sum(float(q) * math.log(max(1e-12, float(q))) for q in p)


def naive_clc(logits: np.ndarray, labels) -> float:
    n = len(logits)
    total = 0.0
    for i in range(n):
        p = naive_softmax_row(logits[i])
        total -= math.log(max(1e-12, p[int(labels[i])]))
    return total / n


def naive_mcc(logits: np.ndarray, temperature: float) -> float:
    n, k = logits.shape
    rows = [naive_softmax_row(logits[i], temperature) for i in range(n)]
    ents = [naive_entropy(r) for r in rows]
    denom = sum(1.0 + math.exp(-h) for h in ents)
    weights = [n * (1.0 + math.exp(-h)) / denom for h in ents]
    c = [[0.0] * k for _ in range(k)]
    for j in range(k):
        for jp in range(k):
            c[j][jp] = sum(weights[i] * rows[i][j] * rows[i][jp]
                           for i in range(n))
    off = 0.0
    for j in range(k):
        row_sum = sum(c[j])
        for jp in range(k):
            if jp != j:
                off += c[j][jp] / max(1e-12, row_sum)
    return off / k


def naive_im(probs: np.ndarray) -> float:
    n, k = probs.shape
    mean_h = sum(naive_entropy(probs[i]) for i in range(n)) / n
    marginal = [sum(float(probs[i][j]) for i in range(n)) / n
                for j in range(k)]
    return mean_h - naive_entropy(marginal)


def naive_disc(d_source, d_target) -> float:
    eps = 1e-7
    s = [min(1.0, max(eps, float(v))) for v in np.asarray(d_source).ravel()]
    t = [min(1.0, max(eps, 1.0 - float(v))) for v in np.asarray(d_target).ravel()]
    return (-sum(math.log(v) for v in s) / len(s)
            - sum(math.log(v) for v in t) / len(t))
