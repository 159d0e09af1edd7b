"""Monte-Carlo membership inference on the dominating pair, plus audit statistics.

A trial plays out ``steps`` rounds of the subsampled Gaussian on the target's
one-dimensional sufficient statistic: in the IN world round ``t`` releases
``b_t + sigma * z_t`` with ``b_t ~ Bernoulli(q)``, in the OUT world just
``sigma * z_t``. The attacker scores a trial by the exact log-likelihood
ratio, which is the most powerful test, so the empirical advantage can only
approach the analytic one from below (up to sampling error).

Random streams are keyed by ``(seed, stream, world, chunk)`` on a
counter-based generator. Chunks have a fixed size, so results do not depend on
how many workers run them.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from . import kernels
from .accountant import DEFAULT_PLD, PldConfig, SubsampledGaussian, mechanism_advantage
from .calibration import (DEFAULT_BACKEND, MechanismParams, PrivacySpec, ScaleParams,
                          calibrate_sampling_idp, calibrate_sensitivity_idp)
from .errors import DomainError, IdpError
from .parallel import ordered_map

CHUNK_DRAWS = 1 << 20
Z_CI = 1.959963984540054


@dataclass(frozen=True, eq=False)
class TrialBatch:
    scores_in: np.ndarray
    scores_out: np.ndarray
    n_trials: int
    seed: int
    rate: float = float("nan")
    sigma: float = float("nan")
    steps: int = 0

    def __post_init__(self):
        a = np.asarray(self.scores_in, dtype=np.float64)
        b = np.asarray(self.scores_out, dtype=np.float64)
        if a.shape != b.shape or a.ndim != 1:
            raise DomainError("scores_in and scores_out must be 1-d and of equal length")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise DomainError("scores must be finite")
        object.__setattr__(self, "scores_in", a)
        object.__setattr__(self, "scores_out", b)


def _as_mechanism(params, group: int) -> SubsampledGaussian:
    if isinstance(params, SubsampledGaussian):
        return params
    if isinstance(params, (MechanismParams, ScaleParams)):
        return params.mechanism(group)
    raise DomainError("params must be MechanismParams, ScaleParams or SubsampledGaussian")


def _chunk_scores(chunk: tuple[int, int], seed: int, stream: int, world: int,
                  rate: float, sigma: float, steps: int) -> np.ndarray:
    index, rows = chunk
    ss = np.random.SeedSequence(seed, spawn_key=(stream, world, index))
    rng = np.random.Generator(np.random.Philox(ss))
    z = rng.standard_normal((rows, steps))
    u = rng.random((rows, steps)) if world == 1 else None
    return kernels.llr_scores(z, u, rate, sigma)


def simulate_world(mech: SubsampledGaussian, in_world: bool, n_trials: int, seed: int,
                   stream: int = 0, jobs: int = 1) -> np.ndarray:
    """LLR scores of ``n_trials`` independent runs in one world."""
    if int(n_trials) != n_trials or n_trials < 1:
        raise DomainError("n_trials must be a positive integer")
    rows = max(1, CHUNK_DRAWS // mech.steps)
    chunks = [(i, min(rows, n_trials - start))
              for i, start in enumerate(range(0, int(n_trials), rows))]
    work = functools.partial(_chunk_scores, seed=int(seed), stream=int(stream),
                             world=int(bool(in_world)), rate=mech.sample_rate,
                             sigma=mech.effective_noise, steps=mech.steps)
    return np.concatenate(ordered_map(work, chunks, jobs))


def simulate_target(params, group: int, n_trials: int, seed: int, stream: int = 0,
                    jobs: int = 1) -> TrialBatch:
    """Both worlds for the target of ``group`` under ``params``."""
    mech = _as_mechanism(params, group)
    scores_in = simulate_world(mech, True, n_trials, seed, stream, jobs)
    scores_out = simulate_world(mech, False, n_trials, seed, stream, jobs)
    return TrialBatch(scores_in, scores_out, int(n_trials), int(seed),
                      mech.sample_rate, mech.effective_noise, mech.steps)


# --------------------------------------------------------------------------
# ROC and privacy score


@dataclass(frozen=True, eq=False)
class RocSummary:
    thresholds: np.ndarray
    tpr: np.ndarray
    fpr: np.ndarray
    advantage: float
    best_threshold: float
    ci_halfwidth: float
    priv: float
    priv_infinite: bool
    mean_in: float
    mean_out: float
    std_in: float
    std_out: float

    def to_dict(self) -> dict:
        return {"advantage": self.advantage, "best_threshold": self.best_threshold,
                "ci_halfwidth": self.ci_halfwidth, "priv": self.priv,
                "priv_infinite": self.priv_infinite, "mean_in": self.mean_in,
                "mean_out": self.mean_out, "std_in": self.std_in, "std_out": self.std_out}


def roc_summary(batch: TrialBatch) -> RocSummary:
    """Threshold sweep (predict IN when score >= t) and the privacy score."""
    a, b = batch.scores_in, batch.scores_out
    if a.size == 0:
        raise DomainError("empty batch")
    pooled = np.concatenate([a, b])
    is_in = np.concatenate([np.ones(a.size), np.zeros(b.size)])
    order = np.argsort(-pooled, kind="stable")
    pooled, is_in = pooled[order], is_in[order]
    # evaluate only where the threshold moves past a run of equal scores
    last = np.r_[pooled[1:] != pooled[:-1], True]
    tp = np.cumsum(is_in)[last]
    fp = np.cumsum(1.0 - is_in)[last]
    thresholds = np.r_[np.inf, pooled[last]]
    tpr = np.r_[0.0, tp / a.size]
    fpr = np.r_[0.0, fp / b.size]
    gap = tpr - fpr
    k = int(np.argmax(gap))
    adv = max(float(gap[k]), 0.0)
    hw = Z_CI * math.sqrt(tpr[k] * (1 - tpr[k]) / a.size + fpr[k] * (1 - fpr[k]) / b.size)

    mu_in, mu_out = float(a.mean()), float(b.mean())
    ddof = 1 if a.size > 1 else 0
    s_in, s_out = float(a.std(ddof=ddof)), float(b.std(ddof=ddof))
    spread = s_in + s_out
    if spread > 0:
        priv, infinite = abs(mu_in - mu_out) / spread, False
    elif mu_in == mu_out:
        priv, infinite = 0.0, False
    else:
        priv, infinite = math.inf, True
    return RocSummary(thresholds, tpr, fpr, adv, float(thresholds[k]), hw, priv, infinite,
                      mu_in, mu_out, s_in, s_out)


# --------------------------------------------------------------------------
# Jonckheere-Terpstra trend test


EXACT_JT_MAX = 100


@dataclass(frozen=True)
class JtResult:
    statistic: float
    mean: float
    variance: float
    z: float
    p_value: float
    method: str = "normal"

    @property
    def effect_size(self) -> float:
        """Reported as the z score; no other effect-size definition is assumed."""
        return self.z

    def to_dict(self) -> dict:
        return {"statistic": self.statistic, "mean": self.mean, "variance": self.variance,
                "z": self.z, "p_value": self.p_value, "method": self.method,
                "effect_size_z": self.z}


def _pooled(ordered_groups):
    if len(ordered_groups) < 2:
        raise DomainError("need at least two groups")
    arrays = [np.asarray(g, dtype=np.float64).ravel() for g in ordered_groups]
    if any(x.size == 0 for x in arrays):
        raise DomainError("every group must be non-empty")
    values = np.concatenate(arrays)
    labels = np.concatenate([np.full(x.size, i) for i, x in enumerate(arrays)])
    return arrays, values, labels


def jt_statistic(values, labels, n_groups) -> float:
    concordant, ties = kernels.jt_pair_count(values, labels, n_groups)
    return concordant + 0.5 * ties


def _mann_whitney_counts(m: int, n: int) -> list[int]:
    """Number of orderings giving each U = 0..mn: coefficients of the q-binomial [m+n, n]."""
    c = [0] * (m * n + 1)
    c[0] = 1
    for i in range(1, n + 1):
        # multiply by (1 - q^(m+i)), then divide by (1 - q^i)
        for k in range(m * n, m + i - 1, -1):
            c[k] -= c[k - m - i]
        for k in range(i, m * n + 1):
            c[k] += c[k - i]
    return c


def _exact_upper_tail(sizes: Sequence[int], observed: int) -> float:
    # group k against everything before it contributes an independent U statistic
    dist = [1]
    before = sizes[0]
    for n in sizes[1:]:
        u = _mann_whitney_counts(before, n)
        out = [0] * (len(dist) + len(u) - 1)
        for i, a in enumerate(dist):
            if a:
                for j, b in enumerate(u):
                    out[i + j] += a * b
        dist = out
        before += n
    return sum(dist[observed:]) / sum(dist)


def jonckheere_terpstra(ordered_groups: Sequence[Sequence[float]],
                        exact: bool | None = None) -> JtResult:
    """Test for a monotone increasing trend across the group order.

    Null mean and tie-corrected variance come from group sizes and tie
    counts. The one-sided p value is exact for untied samples of at most
    ``EXACT_JT_MAX`` values (or when ``exact`` is forced), normal otherwise.
    """
    arrays, values, labels = _pooled(ordered_groups)
    jt = jt_statistic(values, labels, len(arrays))
    n = np.array([x.size for x in arrays], dtype=np.float64)
    big = float(n.sum())
    _, t = np.unique(values, return_counts=True)
    t = t.astype(np.float64)
    mean = (big ** 2 - np.sum(n ** 2)) / 4.0
    var = (big * (big - 1) * (2 * big + 5) - np.sum(n * (n - 1) * (2 * n + 5))
           - np.sum(t * (t - 1) * (2 * t + 5))) / 72.0
    if big > 2:
        var += (np.sum(n * (n - 1) * (n - 2)) * np.sum(t * (t - 1) * (t - 2))
                / (36.0 * big * (big - 1) * (big - 2)))
    if big > 1:
        var += np.sum(n * (n - 1)) * np.sum(t * (t - 1)) / (8.0 * big * (big - 1))
    var = float(var)
    z = 0.0 if var <= 0 else (jt - mean) / math.sqrt(var)
    tied = bool(np.any(t > 1))
    if exact is None:
        exact = not tied and big <= EXACT_JT_MAX
    if exact:
        if tied:
            raise DomainError("the exact null distribution assumes no ties")
        p = _exact_upper_tail([x.size for x in arrays], int(round(jt)))
        return JtResult(float(jt), float(mean), var, float(z), float(p), "exact")
    return JtResult(float(jt), float(mean), var, float(z), float(stats.norm.sf(z)))


def jt_permutation_pvalue(ordered_groups: Sequence[Sequence[float]], n_perm: int = 2000,
                          seed: int = 0) -> float:
    """One-sided permutation p value of the JT statistic (label shuffles)."""
    arrays, values, labels = _pooled(ordered_groups)
    k = len(arrays)
    observed = jt_statistic(values, labels, k)
    rng = np.random.default_rng(seed)
    hits = 0
    for _ in range(int(n_perm)):
        if jt_statistic(values, rng.permutation(labels), k) >= observed - 1e-9:
            hits += 1
    return (hits + 1) / (n_perm + 1)


# --------------------------------------------------------------------------
# IN/OUT split matrices


@dataclass(frozen=True, eq=False)
class SplitMatrix:
    matrix: np.ndarray
    group_of: np.ndarray
    seed: int
    complement: bool = False

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    def column_sums(self) -> np.ndarray:
        return self.matrix.sum(axis=0, dtype=np.int64)

    def row_counts(self) -> np.ndarray:
        """``(m, groups)`` count of selected columns per row and group."""
        n_groups = int(self.group_of.max()) + 1
        return np.stack([self.matrix[:, self.group_of == g].sum(axis=1, dtype=np.int64)
                         for g in range(n_groups)], axis=1)

    def check(self, tolerance: int = 2) -> dict:
        m, n = self.matrix.shape
        sizes = np.bincount(self.group_of)
        rows = self.row_counts()
        cols = self.column_sums()
        report = {
            "rows_exact": bool(np.all(rows == sizes // 2)),
            "row_total_exact": bool(np.all(rows.sum(axis=1) == n // 2)),
            "column_min": int(cols.min()), "column_max": int(cols.max()),
            "columns_within": bool(np.all(np.abs(cols - m / 2) <= tolerance)),
        }
        report["passed"] = report["rows_exact"] and report["row_total_exact"] and report["columns_within"]
        return report


def generate_split_matrix(group_sizes: Sequence[int], m: int, seed: int,
                          complement: bool = False) -> SplitMatrix:
    """Inclusion matrix for ``m`` shadow models over groups laid out consecutively.

    Each row takes exactly half of every group, always from the columns used
    least so far (seeded noise breaks ties). With ``complement`` the rows come
    in pairs whose second row is the complement of the first.
    """
    sizes = [int(s) for s in group_sizes]
    if not sizes or any(s <= 0 for s in sizes):
        raise DomainError("group sizes must be positive")
    odd = [s for s in sizes if s % 2]
    if odd:
        raise DomainError(f"group sizes {odd} are odd; pad the group or change the proportions "
                          "so every group splits exactly in half")
    if int(m) != m or m < 2:
        raise DomainError("m must be an integer >= 2")
    if complement and m % 2:
        raise DomainError("complement mode needs an even m")
    group_of = np.repeat(np.arange(len(sizes)), sizes)
    take = np.array(sizes) // 2
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))
    base_rows = m // 2 if complement else m
    noise = rng.random((base_rows, group_of.size))
    out = kernels.greedy_split(group_of, len(sizes), take, noise)
    if complement:
        out = np.stack([out, 1 - out], axis=1).reshape(m, group_of.size).astype(np.uint8)
    split = SplitMatrix(out, group_of, int(seed), complement)
    report = split.check()
    if not report["passed"]:
        raise IdpError(f"split matrix violates its constraints: {report}")
    return split


# --------------------------------------------------------------------------
# proportion sweeps


@dataclass(frozen=True)
class SweepRow:
    proportion: float
    group: int
    replicate: int
    rate: float
    sigma: float
    analytic_advantage: float
    advantage: float
    priv: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class SweepReport:
    mode: str
    focus: int
    proportions: tuple[float, ...]
    rows: tuple[SweepRow, ...]
    trend: JtResult
    seed: int
    n_trials: int
    replicates: int

    def priv_samples(self, group: int | None = None) -> list[list[float]]:
        g = self.focus if group is None else group
        return [[r.priv for r in self.rows if r.group == g and r.proportion == p]
                for p in self.proportions]

    def to_dict(self) -> dict:
        return {"mode": self.mode, "focus": self.focus, "proportions": list(self.proportions),
                "seed": self.seed, "n_trials": self.n_trials, "replicates": self.replicates,
                "trend": self.trend.to_dict(), "rows": [r.to_dict() for r in self.rows]}


def sweep_proportions(eps: tuple[float, float], delta: float, total: int,
                      proportions: Sequence[float], rate: float, steps: int, n_trials: int,
                      seed: int, replicates: int = 10, mode: str = "sampling", focus: int = 0,
                      backend: str = DEFAULT_BACKEND, jobs: int = 1,
                      config: PldConfig = DEFAULT_PLD) -> SweepReport:
    """Privacy scores of both groups as the first group's share varies.

    ``proportions`` are shares of the first group. Replicate ``r`` of group
    ``g`` draws from the same stream at every proportion (common random
    numbers), so differences across proportions come from the mechanism
    alone. The trend test runs on the ``focus`` group's priv samples.
    """
    if mode not in ("sampling", "sensitivity"):
        raise DomainError("mode must be 'sampling' or 'sensitivity'")
    if len(eps) != 2:
        raise DomainError("the sweep template has exactly two groups")
    if any(not 0.0 < p < 1.0 for p in proportions) or len(proportions) < 2:
        raise DomainError("need at least two proportions in (0, 1)")
    if replicates < 1:
        raise DomainError("replicates must be positive")
    rows = []
    for p in proportions:
        spec = PrivacySpec.two_groups(eps[0], eps[1], delta, total, 1.0 - p)
        if mode == "sampling":
            params = calibrate_sampling_idp(spec, rate, steps, backend=backend)
        else:
            params = calibrate_sensitivity_idp(spec, rate, steps, backend=backend)
        for g in (0, 1):
            mech = params.mechanism(g)
            analytic = mechanism_advantage(mech, config)
            for r in range(replicates):
                summary = roc_summary(simulate_target(mech, g, n_trials, seed,
                                                      stream=g * replicates + r, jobs=jobs))
                rows.append(SweepRow(float(p), g, r, mech.sample_rate, mech.effective_noise,
                                     analytic, summary.advantage, summary.priv))
    props = tuple(float(p) for p in proportions)
    samples = [[r.priv for r in rows if r.group == focus and r.proportion == p] for p in props]
    return SweepReport(mode, focus, props, tuple(rows), jonckheere_terpstra(samples),
                       int(seed), int(n_trials), int(replicates))
