"""Numeric inner loops, each in a numpy flavour and a numba flavour.

The public names at the bottom of the module dispatch to one flavour, fixed at
import time (see :mod:`idprisk._jit`). Both flavours consume the same inputs,
including any random draws, so results agree to floating-point summation order.
"""

from __future__ import annotations

import math

import numpy as np

from ._jit import njit, numba_enabled

# --------------------------------------------------------------------------
# hockey-stick divergence of a discrete privacy-loss distribution


def hockey_stick_numpy(losses, pmf, inf_mass, eps):
    losses = np.asarray(losses, dtype=np.float64)
    pmf = np.asarray(pmf, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    out = np.empty(eps.shape, dtype=np.float64)
    starts = np.searchsorted(losses, eps, side="right")
    for j, (e, k) in enumerate(zip(eps.ravel(), starts.ravel())):
        tail = losses[k:]
        out.flat[j] = inf_mass + np.dot(pmf[k:], -np.expm1(e - tail))
    return out


@njit
def hockey_stick_numba(losses, pmf, inf_mass, eps):
    n = losses.shape[0]
    out = np.empty(eps.shape[0], dtype=np.float64)
    for j in range(eps.shape[0]):
        e = eps[j]
        # binary search for the first loss strictly above e
        lo, hi = 0, n
        while lo < hi:
            mid = (lo + hi) // 2
            if losses[mid] <= e:
                lo = mid + 1
            else:
                hi = mid
        acc = 0.0
        for k in range(lo, n):
            acc += pmf[k] * -math.expm1(e - losses[k])
        out[j] = inf_mass + acc
    return out


# --------------------------------------------------------------------------
# trade-off curve as the upper envelope of hockey-stick constraints


def tradeoff_envelope_numpy(eps, delta, alpha):
    eps = np.asarray(eps, dtype=np.float64)[None, :]
    slack = 1.0 - np.asarray(delta, dtype=np.float64)[None, :]
    a = np.asarray(alpha, dtype=np.float64)[:, None]
    first = slack - np.exp(eps) * a
    second = np.exp(-eps) * (slack - a)
    best = np.maximum(first, second).max(axis=1)
    return np.maximum(best, 0.0)


@njit
def tradeoff_envelope_numba(eps, delta, alpha):
    out = np.empty(alpha.shape[0], dtype=np.float64)
    grow = np.exp(eps)
    shrink = np.exp(-eps)
    for i in range(alpha.shape[0]):
        a = alpha[i]
        best = 0.0
        for j in range(eps.shape[0]):
            slack = 1.0 - delta[j]
            v = slack - grow[j] * a
            if v > best:
                best = v
            v = shrink[j] * (slack - a)
            if v > best:
                best = v
        out[i] = best
    return out


# --------------------------------------------------------------------------
# per-trial log-likelihood-ratio scores of the subsampled Gaussian


def llr_scores_numpy(z, u, rate, sigma):
    """Row sums of the exact per-step log-likelihood ratio.

    ``z`` holds standard normal draws, ``u`` uniform draws deciding whether the
    target was sampled in that step (``u < rate``); pass ``u=None`` for the
    world where the target is absent.
    """
    y = sigma * z
    if u is not None:
        y = y + (u < rate)
    log_keep = math.log1p(-rate) if rate < 1.0 else -np.inf
    log_rate = math.log(rate) if rate > 0.0 else -np.inf
    step = np.logaddexp(log_keep, log_rate + (2.0 * y - 1.0) / (2.0 * sigma * sigma))
    return step.sum(axis=1)


@njit
def _llr_numba(z, u, rate, sigma, present):
    n, steps = z.shape
    out = np.empty(n, dtype=np.float64)
    log_keep = math.log1p(-rate) if rate < 1.0 else -np.inf
    log_rate = math.log(rate) if rate > 0.0 else -np.inf
    inv = 1.0 / (2.0 * sigma * sigma)
    for i in range(n):
        acc = 0.0
        for t in range(steps):
            y = sigma * z[i, t]
            if present and u[i, t] < rate:
                y += 1.0
            b = log_rate + (2.0 * y - 1.0) * inv
            # logaddexp(log_keep, b)
            if log_keep == -np.inf:
                acc += b
            elif b == -np.inf:
                acc += log_keep
            elif b > log_keep:
                acc += b + math.log1p(math.exp(log_keep - b))
            else:
                acc += log_keep + math.log1p(math.exp(b - log_keep))
        out[i] = acc
    return out


def llr_scores_numba(z, u, rate, sigma):
    z = np.ascontiguousarray(z, dtype=np.float64)
    if u is None:
        return _llr_numba(z, np.empty((1, 1)), float(rate), float(sigma), False)
    u = np.ascontiguousarray(u, dtype=np.float64)
    return _llr_numba(z, u, float(rate), float(sigma), True)


# --------------------------------------------------------------------------
# Jonckheere-Terpstra pair counting


def jt_pair_count_numpy(values, labels, n_groups):
    """Return (#concordant pairs, #tied pairs) across ordered groups."""
    values = np.asarray(values, dtype=np.float64)
    labels = np.asarray(labels)
    groups = [np.sort(values[labels == g]) for g in range(n_groups)]
    concordant = 0.0
    ties = 0.0
    for j in range(1, n_groups):
        later = groups[j]
        for i in range(j):
            left = np.searchsorted(groups[i], later, side="left")
            right = np.searchsorted(groups[i], later, side="right")
            concordant += float(left.sum())
            ties += float((right - left).sum())
    return concordant, ties


@njit
def jt_pair_count_numba(values, labels, n_groups):
    counts = np.zeros(n_groups, dtype=np.int64)
    for i in range(labels.shape[0]):
        counts[labels[i]] += 1
    starts = np.zeros(n_groups + 1, dtype=np.int64)
    for g in range(n_groups):
        starts[g + 1] = starts[g] + counts[g]
    # values regrouped by label, each block sorted
    packed = np.empty(values.shape[0], dtype=np.float64)
    fill = starts[:-1].copy()
    for i in range(values.shape[0]):
        packed[fill[labels[i]]] = values[i]
        fill[labels[i]] += 1
    for g in range(n_groups):
        packed[starts[g]:starts[g + 1]] = np.sort(packed[starts[g]:starts[g + 1]])
    concordant = 0.0
    ties = 0.0
    for j in range(1, n_groups):
        later = packed[starts[j]:starts[j + 1]]
        for i in range(j):
            block = packed[starts[i]:starts[i + 1]]
            left = np.searchsorted(block, later, side="left")
            right = np.searchsorted(block, later, side="right")
            concordant += float(left.sum())
            ties += float((right - left).sum())
    return concordant, ties


# --------------------------------------------------------------------------
# greedy balanced split rows


def greedy_split_numpy(group_of, n_groups, take, noise):
    """Fill an ``(m, N)`` inclusion matrix row by row.

    Each row takes ``take[g]`` columns from group ``g``, preferring the
    columns included least often so far; ``noise`` (uniform in [0, 1)) breaks
    ties between equally used columns.
    """
    m, n = noise.shape
    out = np.zeros((m, n), dtype=np.uint8)
    counts = np.zeros(n, dtype=np.int64)
    members = [np.flatnonzero(group_of == g) for g in range(n_groups)]
    for r in range(m):
        for g in range(n_groups):
            cols = members[g]
            k = int(take[g])
            if k == 0:
                continue
            keys = counts[cols] + 0.5 * noise[r, cols]
            chosen = cols[np.argpartition(keys, k - 1)[:k]]
            out[r, chosen] = 1
            counts[chosen] += 1
    return out


@njit
def greedy_split_numba(group_of, n_groups, take, noise):
    m, n = noise.shape
    out = np.zeros((m, n), dtype=np.uint8)
    counts = np.zeros(n, dtype=np.int64)
    order = np.argsort(group_of, kind="mergesort")
    starts = np.zeros(n_groups + 1, dtype=np.int64)
    for c in range(n):
        starts[group_of[c] + 1] += 1
    for g in range(n_groups):
        starts[g + 1] += starts[g]
    for r in range(m):
        for g in range(n_groups):
            k = take[g]
            if k == 0:
                continue
            cols = order[starts[g]:starts[g + 1]]
            keys = np.empty(cols.shape[0], dtype=np.float64)
            for i in range(cols.shape[0]):
                keys[i] = counts[cols[i]] + 0.5 * noise[r, cols[i]]
            # least-used columns first; ties between equal counts broken by noise
            best = np.argsort(keys)
            for i in range(k):
                c = cols[best[i]]
                out[r, c] = 1
                counts[c] += 1
    return out


# --------------------------------------------------------------------------

def _hockey_stick_vectorised(losses, pmf, inf_mass, eps):
    return hockey_stick_numpy(losses, pmf, inf_mass, np.atleast_1d(eps))


def _greedy_split_vectorised(group_of, n_groups, take, noise):
    return greedy_split_numpy(np.asarray(group_of), int(n_groups), np.asarray(take), noise)


def _tradeoff_envelope_compiled(eps, delta, alpha):
    return tradeoff_envelope_numba(
        np.ascontiguousarray(eps, dtype=np.float64),
        np.ascontiguousarray(delta, dtype=np.float64),
        np.ascontiguousarray(alpha, dtype=np.float64),
    )


# Kernels whose numpy flavour uses SIMD expm1, argpartition or sorted search
# stay vectorised even with numba available: the compiled loops measured
# slower (benchmarks/bench_kernels.py). The compiled flavours remain
# importable for the benchmark and the equivalence tests.
hockey_stick = _hockey_stick_vectorised
jt_pair_count = jt_pair_count_numpy
greedy_split = _greedy_split_vectorised

if numba_enabled():
    BACKEND = "numba"
    tradeoff_envelope = _tradeoff_envelope_compiled
    llr_scores = llr_scores_numba
else:
    BACKEND = "numpy"
    tradeoff_envelope = tradeoff_envelope_numpy
    llr_scores = llr_scores_numpy
