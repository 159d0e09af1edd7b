"""Parameter searches for individualized DP-SGD.

Two families are covered:

* sampling-based: one shared noise multiplier, a sampling rate per budget
  group, with the average rate pinned to a target batch rate;
* sensitivity-based: one shared sampling rate and noise scale, a clipping
  bound per budget group.

Every search stays on the certified side: a returned parameter set is one the
chosen accountant backend accepts for the requested budget.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy import optimize

from .accountant import BACKENDS, SubsampledGaussian, delta_for
from .errors import CalibrationError, DomainError

NOISE_BRACKET = (1e-2, 1e4)
NOISE_RTOL = 1e-4
RATE_ATOL = 1e-6
SCALE_STEP = 0.999
BATCH_RTOL = 1e-3
MAX_SCALINGS = 100_000
METHODS = ("search", "loop", "exact")
POLICIES = ("fixed-batch", "min-eps", "max-eps", "mean-eps")
DEFAULT_BACKEND = "rdp-exact"


# --------------------------------------------------------------------------
# specs and parameter records


@dataclass(frozen=True)
class BudgetGroup:
    eps: float
    delta: float
    size: int

    def __post_init__(self):
        if not (math.isfinite(self.eps) and self.eps > 0):
            raise DomainError(f"group eps must be positive and finite, got {self.eps!r}")
        if not (0.0 < self.delta < 1.0):
            raise DomainError(f"group delta must lie in (0, 1), got {self.delta!r}")
        if int(self.size) != self.size or self.size < 1:
            raise DomainError(f"group size must be a positive integer, got {self.size!r}")
        object.__setattr__(self, "size", int(self.size))


@dataclass(frozen=True)
class PrivacySpec:
    """Per-group budgets ``(eps_i, delta_i)`` with group sizes."""

    groups: tuple[BudgetGroup, ...]

    def __post_init__(self):
        groups = tuple(g if isinstance(g, BudgetGroup) else BudgetGroup(*g) for g in self.groups)
        if not groups:
            raise DomainError("a privacy spec needs at least one group")
        object.__setattr__(self, "groups", groups)

    @classmethod
    def from_lists(cls, eps: Sequence[float], delta, sizes: Sequence[int]) -> "PrivacySpec":
        deltas = [delta] * len(eps) if np.isscalar(delta) else list(delta)
        if not (len(eps) == len(deltas) == len(sizes)):
            raise DomainError("eps, delta and sizes must have the same length")
        return cls(tuple(BudgetGroup(float(e), float(d), int(n)) for e, d, n in zip(eps, deltas, sizes)))

    @classmethod
    def two_groups(cls, eps1: float, eps2: float, delta: float, total: int,
                   share2: float) -> "PrivacySpec":
        """Two groups where the second holds ``share2`` of ``total`` records."""
        n2 = int(round(total * share2))
        if not 0 < n2 < total:
            raise DomainError("share2 must leave both groups non-empty")
        return cls.from_lists([eps1, eps2], delta, [total - n2, n2])

    @classmethod
    def from_dict(cls, data: dict) -> "PrivacySpec":
        return cls(tuple(BudgetGroup(float(g["eps"]), float(g["delta"]), int(g["size"]))
                         for g in data["groups"]))

    def to_dict(self) -> dict:
        return {"groups": [asdict(g) for g in self.groups]}

    @property
    def total(self) -> int:
        return sum(g.size for g in self.groups)

    @property
    def eps(self) -> np.ndarray:
        return np.array([g.eps for g in self.groups])

    @property
    def deltas(self) -> np.ndarray:
        return np.array([g.delta for g in self.groups])

    @property
    def weights(self) -> np.ndarray:
        return np.array([g.size for g in self.groups], dtype=np.float64) / self.total


@dataclass(frozen=True)
class MechanismParams:
    """Sampling-based iDP parameters: shared noise, one rate per group."""

    sigma: float
    rates: tuple[float, ...]
    steps: int
    clip: float = 1.0
    avg_rate: float = float("nan")
    saturated: tuple[bool, ...] = ()
    backend: str = DEFAULT_BACKEND
    policy: str = "fixed-batch"
    target_rate: float | None = None
    scalings: int = 0
    trace: tuple = field(default=(), repr=False, compare=False)

    def mechanism(self, group: int) -> SubsampledGaussian:
        """The subsampled Gaussian seen by records of ``group``."""
        return SubsampledGaussian(self.rates[group], self.sigma, self.steps)

    def to_dict(self) -> dict:
        return {
            "kind": "sampling",
            "sigma": self.sigma,
            "rates": list(self.rates),
            "steps": self.steps,
            "clip": self.clip,
            "avg_rate": self.avg_rate,
            "target_rate": self.target_rate,
            "saturated": list(self.saturated),
            "backend": self.backend,
            "policy": self.policy,
            "scalings": self.scalings,
            "tolerances": {"noise_rtol": NOISE_RTOL, "rate_atol": RATE_ATOL,
                           "batch_rtol": BATCH_RTOL, "scale_step": SCALE_STEP},
        }


@dataclass(frozen=True)
class ScaleParams:
    """Sensitivity-based iDP parameters: shared noise scale, one clip per group.

    ``group_sigmas`` are the per-group noise multipliers the clips were
    derived from; ``mechanism`` uses them so the noise-to-sensitivity ratio of
    a group is exactly its own calibration, independent of the other groups.
    """

    sigma_scale: float
    clips: tuple[float, ...]
    base_clip: float
    rate: float
    steps: int
    group_sigmas: tuple[float, ...]
    backend: str = DEFAULT_BACKEND

    def noise_ratio(self, group: int) -> float:
        """Noise std over ``group``'s sensitivity: (sigma_scale * C) / c_i = sigma_i."""
        return self.group_sigmas[group]

    def mechanism(self, group: int) -> SubsampledGaussian:
        # only the ratio matters, so express it at unit sensitivity
        return SubsampledGaussian(self.rate, self.group_sigmas[group], self.steps)

    def to_dict(self) -> dict:
        return {
            "kind": "sensitivity",
            "sigma_scale": self.sigma_scale,
            "clips": list(self.clips),
            "base_clip": self.base_clip,
            "rate": self.rate,
            "steps": self.steps,
            "group_sigmas": list(self.group_sigmas),
            "backend": self.backend,
            # the printed scale-parameter loop names c_p where sigma_p is meant
            "erratum_clip_loop": True,
        }


# --------------------------------------------------------------------------
# single-budget searches


def _check_budget(eps, delta, steps):
    if not (math.isfinite(eps) and eps > 0):
        raise DomainError(f"eps must be positive and finite, got {eps!r}")
    if not (0.0 < delta < 1.0):
        raise DomainError(f"delta must lie in (0, 1), got {delta!r}")
    if int(steps) != steps or steps < 1:
        raise DomainError(f"steps must be a positive integer, got {steps!r}")
    return int(steps)


def _check_backend(backend):
    if backend not in BACKENDS:
        raise DomainError(f"unknown backend {backend!r}; expected one of {BACKENDS}")


def _certifies(q, sigma, steps, eps, delta, backend) -> bool:
    return delta_for(SubsampledGaussian(q, sigma, steps), eps, backend) <= delta


def get_noise(eps: float, delta: float, rate: float, steps: int,
              backend: str = DEFAULT_BACKEND, rtol: float = NOISE_RTOL) -> float:
    """Smallest certified noise multiplier for ``(eps, delta)``.

    Bisection in log-space over ``NOISE_BRACKET`` to relative width
    ``rtol``; the upper end of the final bracket is returned. If the lower
    bracket edge already certifies, that edge is returned.
    """
    steps = _check_budget(eps, delta, steps)
    _check_backend(backend)
    if not (0.0 < rate <= 1.0):
        raise DomainError(f"rate must lie in (0, 1], got {rate!r}")
    lo, hi = NOISE_BRACKET
    if _certifies(rate, lo, steps, eps, delta, backend):
        return lo
    if not _certifies(rate, hi, steps, eps, delta, backend):
        raise CalibrationError(
            f"({eps}, {delta}) not reachable at rate {rate} even with noise {hi}", edge=hi)
    if not rtol > 0:
        raise DomainError("rtol must be positive")
    while hi / lo > 1.0 + rtol:
        mid = math.sqrt(lo * hi)
        if _certifies(rate, mid, steps, eps, delta, backend):
            hi = mid
        else:
            lo = mid
    return hi


@dataclass(frozen=True)
class RateResult:
    rate: float
    saturated: bool


def get_sample_rate(eps: float, delta: float, sigma: float, steps: int,
                    backend: str = DEFAULT_BACKEND, atol: float = RATE_ATOL,
                    hint: float | None = None) -> RateResult:
    """Largest certified sampling rate for ``(eps, delta)`` at noise ``sigma``.

    The root of ``log delta(q) - log delta`` is located with Brent's method
    (bracketed around ``hint`` when one is given) and then nudged down until
    it certifies.
    """
    steps = _check_budget(eps, delta, steps)
    _check_backend(backend)
    if not (math.isfinite(sigma) and sigma > 0):
        raise DomainError(f"sigma must be positive and finite, got {sigma!r}")
    if _certifies(1.0, sigma, steps, eps, delta, backend):
        return RateResult(1.0, True)
    log_target = math.log(delta)

    def gap(q):
        d = delta_for(SubsampledGaussian(q, sigma, steps), eps, backend)
        return (math.log(d) if d > 0 else -745.0) - log_target

    if hint is not None and 0.0 < hint < 1.0:
        a, b = hint / 1.02, min(hint * 1.02, 1.0)
        ga, gb = gap(a), gap(b)
        for _ in range(8):
            if ga <= 0 < gb:
                q = optimize.brentq(gap, a, b, xtol=atol * 1e-2, rtol=1e-12)
                while q > 0 and gap(q) > 0:
                    q = max(q - atol * 1e-2, 0.0)
                return RateResult(q, False)
            if ga > 0:
                b, gb = a, ga
                a = a / 2.0
                ga = gap(a)
            else:
                if b >= 1.0:
                    break
                a, ga = b, gb
                b = min(b * 2.0, 1.0)
                gb = gap(b)
    lo = atol
    if gap(lo) > 0:
        # even a tiny rate overshoots; fall back to plain bisection on [0, atol]
        hi = lo
        lo = 0.0
        while hi - lo > atol * 1e-3:
            mid = 0.5 * (lo + hi)
            if gap(mid) <= 0:
                lo = mid
            else:
                hi = mid
        return RateResult(lo, False)
    q = optimize.brentq(gap, lo, 1.0, xtol=atol * 1e-2, rtol=1e-12)
    while q > 0 and gap(q) > 0:
        q = max(q - atol * 1e-2, 0.0)
    return RateResult(q, False)


# --------------------------------------------------------------------------
# sampling-based iDP


def _shared_delta(spec: PrivacySpec) -> float:
    deltas = spec.deltas
    if not np.all(deltas == deltas[0]):
        raise DomainError("sampling-based calibration needs one delta shared by all groups")
    return float(deltas[0])


class _RateTable:
    """Per-group rates at a given sigma, memoised over distinct budgets."""

    def __init__(self, spec, delta, steps, backend):
        self.spec, self.delta, self.steps, self.backend = spec, delta, steps, backend
        self.cache = {}
        self.last = {}

    def rates(self, sigma):
        out = []
        for g in self.spec.groups:
            key = (g.eps, sigma)
            if key not in self.cache:
                prev = self.last.get(g.eps)
                hint = None
                if prev is not None and not prev[1].saturated and prev[1].rate > 0:
                    # rates scale roughly like sigma^2 near the calibration point
                    hint = prev[1].rate * (sigma / prev[0]) ** 2
                res = get_sample_rate(g.eps, self.delta, sigma, self.steps, self.backend, hint=hint)
                self.cache[key] = res
                self.last[g.eps] = (sigma, res)
            out.append(self.cache[key])
        return out

    def average(self, sigma):
        res = self.rates(sigma)
        return float(np.dot(self.spec.weights, [r.rate for r in res])), res


def calibrate_sampling_idp(spec: PrivacySpec, target_rate: float, steps: int,
                           policy: str = "fixed-batch", backend: str = DEFAULT_BACKEND,
                           method: str = "search", clip: float = 1.0) -> MechanismParams:
    """Sampling-based iDP parameters for ``spec``.

    With the fixed-batch policy the shared noise starts at the value certified
    for the smallest budget at ``target_rate`` and is shrunk by ``SCALE_STEP``
    per pass until the size-weighted mean rate is within ``BATCH_RTOL`` of
    ``target_rate``. ``method="loop"`` runs the passes one by one;
    ``method="search"`` finds the same pass count by bisection (the mean rate
    is monotone in the noise) and, if that pass overshoots the tolerance band,
    bisects the noise between the last two passes. ``method="exact"`` skips
    the pass grid and solves for the noise whose mean rate equals the target;
    sweeps use it so neighbouring cells do not jitter within the band. Other policies derive the
    noise from the min, max or mean budget and skip the loop.
    """
    if policy not in POLICIES:
        raise DomainError(f"policy must be one of {POLICIES}")
    if method not in METHODS:
        raise DomainError(f"method must be one of {METHODS}")
    if not (0.0 < target_rate < 1.0):
        raise DomainError(f"target rate must lie in (0, 1), got {target_rate!r}")
    _check_backend(backend)
    delta = _shared_delta(spec)
    steps = int(steps)
    table = _RateTable(spec, delta, steps, backend)
    eps = spec.eps

    def finish(sigma, avg, res, scalings, trace):
        return MechanismParams(
            sigma=float(sigma), rates=tuple(r.rate for r in res), steps=steps, clip=clip,
            avg_rate=avg, saturated=tuple(r.saturated for r in res), backend=backend,
            policy=policy, target_rate=target_rate, scalings=scalings, trace=tuple(trace))

    if policy != "fixed-batch":
        anchor = {"min-eps": eps.min(), "max-eps": eps.max(), "mean-eps": eps.mean()}[policy]
        sigma = get_noise(float(anchor), delta, target_rate, steps, backend)
        avg, res = table.average(sigma)
        return finish(sigma, avg, res, 0, [(sigma, avg)])

    sigma0 = get_noise(float(eps.min()), delta, target_rate, steps, backend)
    trace = []

    def within(avg):
        return abs(avg - target_rate) / target_rate <= BATCH_RTOL

    def at(k):
        sigma = sigma0 * SCALE_STEP ** k
        avg, res = table.average(sigma)
        trace.append((sigma, avg))
        return sigma, avg, res

    if method == "loop":
        for k in range(MAX_SCALINGS + 1):
            sigma, avg, res = at(k)
            if within(avg):
                return finish(sigma, avg, res, k, trace)
        raise CalibrationError("mean sampling rate did not converge", edge=sigma, trace=trace)

    sigma, avg, res = at(0)
    if within(avg):
        return finish(sigma, avg, res, 0, trace)
    if avg < target_rate:
        raise CalibrationError(
            "mean sampling rate is already below the target; shrinking the noise cannot help",
            edge=sigma, trace=trace)
    # the printed loop stops at the first pass k with mean rate <= upper edge;
    # locate the noise where the mean rate crosses that edge, then read off k
    upper = target_rate if method == "exact" else target_rate * (1.0 + BATCH_RTOL)
    log_s = math.log(SCALE_STEP)

    def excess(log_sigma):
        return table.average(math.exp(log_sigma))[0] - upper

    lo_log = math.log(sigma0)
    floor = lo_log + log_s * MAX_SCALINGS
    step = 16 * log_s
    while True:
        nxt = max(lo_log + step, floor)
        if excess(nxt) <= 0:
            break
        if nxt == floor:
            raise CalibrationError("mean sampling rate did not converge", edge=math.exp(floor),
                                   trace=trace)
        lo_log, step = nxt, step * 2
    if method == "exact":
        cross = optimize.brentq(excess, nxt, lo_log, xtol=1e-12, rtol=1e-14)
        sigma = math.exp(cross)
        avg, res = table.average(sigma)
        trace.append((sigma, avg))
        return finish(sigma, avg, res, round((cross - math.log(sigma0)) / log_s), trace)
    cross = optimize.brentq(excess, nxt, lo_log, xtol=2e-4)
    guess = min(max(math.ceil((cross - math.log(sigma0)) / log_s - 1e-9), 1), MAX_SCALINGS)
    lo, hi = guess - 1, guess
    # repair the guess so that k = hi is exactly the first pass below the edge
    while hi > 1 and at(hi - 1)[1] <= upper:
        lo, hi = hi - 2, hi - 1
    while at(hi)[1] > upper:
        if hi >= MAX_SCALINGS:
            raise CalibrationError("mean sampling rate did not converge", edge=sigma, trace=trace)
        lo, hi = hi, hi + 1
    sigma, avg, res = at(hi)
    if within(avg):
        return finish(sigma, avg, res, hi, trace)
    # overshoot: the printed loop would not stop; refine between passes
    s_lo, s_hi = sigma, sigma0 * SCALE_STEP ** lo
    for _ in range(200):
        mid = math.sqrt(s_lo * s_hi)
        avg, res = table.average(mid)
        trace.append((mid, avg))
        if within(avg):
            return finish(mid, avg, res, hi, trace)
        if avg > target_rate:
            s_hi = mid
        else:
            s_lo = mid
    raise CalibrationError("noise refinement did not meet the batch-rate band",
                           edge=s_lo, trace=trace)


# --------------------------------------------------------------------------
# sensitivity-based iDP


def calibrate_sensitivity_idp(spec: PrivacySpec, rate: float, steps: int, clip: float = 1.0,
                              backend: str = DEFAULT_BACKEND) -> ScaleParams:
    """Sensitivity-based iDP: per-group clips under one noise scale.

    The scale is the size-weighted harmonic mean of the per-group noise
    multipliers and each clip is ``sigma_scale * clip / sigma_i``.
    """
    if not (math.isfinite(clip) and clip > 0):
        raise DomainError(f"clip must be positive and finite, got {clip!r}")
    memo = {}
    sigmas = []
    for g in spec.groups:
        key = (g.eps, g.delta)
        if key not in memo:
            memo[key] = get_noise(g.eps, g.delta, rate, steps, backend)
        sigmas.append(memo[key])
    sigmas = np.array(sigmas)
    sigma_scale = float(1.0 / np.dot(spec.weights, 1.0 / sigmas))
    clips = tuple(float(sigma_scale * clip / s) for s in sigmas)
    return ScaleParams(sigma_scale, clips, float(clip), float(rate), int(steps),
                       tuple(float(s) for s in sigmas), backend)


# --------------------------------------------------------------------------
# verification


@dataclass(frozen=True)
class GroupCheck:
    group: int
    eps: float
    delta_target: float
    delta_achieved: float
    passed: bool

    @property
    def margin(self) -> float:
        return self.delta_target - self.delta_achieved


@dataclass(frozen=True)
class CertificationReport:
    groups: tuple[GroupCheck, ...]
    backend: str

    @property
    def passed(self) -> bool:
        return all(g.passed for g in self.groups)


def check_params(params: MechanismParams | ScaleParams, spec: PrivacySpec,
                 backend: str | None = None) -> CertificationReport:
    """Recompute every group's delta at its own eps and compare with the budget."""
    backend = backend or params.backend
    _check_backend(backend)
    n = len(params.rates) if isinstance(params, MechanismParams) else len(params.clips)
    if n != len(spec.groups):
        raise DomainError(f"params describe {n} groups, spec has {len(spec.groups)}")
    checks = []
    for i, g in enumerate(spec.groups):
        d = delta_for(params.mechanism(i), g.eps, backend)
        checks.append(GroupCheck(i, g.eps, g.delta, d, d <= g.delta))
    return CertificationReport(tuple(checks), backend)
