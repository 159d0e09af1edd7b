"""Delta-divergence between trade-off curves and the excess-vulnerability contract.

``Delta(f || g)`` is the smallest ``k`` such that ``f(a + k) - k <= g(a)`` for
every ``a``: shifting ``f`` by ``k`` along both axes puts it below ``g``. The
symmetric version takes the larger of the two directions. A mechanism meets
the contract at bound ``D`` when, for every group, its trade-off curve is
within symmetric distance ``D`` of a standard single-budget mechanism
calibrated to that group's ``(eps, delta)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .accountant import (DEFAULT_PLD, PldConfig, SubsampledGaussian, TradeoffCurve,
                         mechanism_tradeoff)
from .calibration import (DEFAULT_BACKEND, BudgetGroup, MechanismParams, PrivacySpec,
                          ScaleParams, calibrate_sampling_idp, calibrate_sensitivity_idp,
                          get_noise)
from .errors import DomainError, IdpError

KAPPA_TOL = 1e-5
SLACK = 1e-9
GRID_POINTS = 4097


@dataclass(frozen=True)
class DeltaResult:
    kappa: float
    direction: str
    witness_alpha: float
    forward: float | None = None
    backward: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.kappa <= 1.0:
            raise DomainError(f"kappa must lie in [0, 1], got {self.kappa!r}")
        if self.direction not in ("forward", "backward", "symmetric"):
            raise DomainError(f"unknown direction {self.direction!r}")


def _as_curve(curve) -> TradeoffCurve:
    if not isinstance(curve, TradeoffCurve):
        raise DomainError("expected a TradeoffCurve")
    return curve


def _worst_gap(f: TradeoffCurve, g: TradeoffCurve, kappa: float, base: np.ndarray):
    """max_a f(a + k) - k - g(a) over every breakpoint of the piecewise-linear gap."""
    shifted = f.alpha_grid - kappa
    shifted = shifted[(shifted >= 0.0) & (shifted <= 1.0)]
    alpha = np.concatenate([base, shifted])
    gap = f(alpha + kappa) - kappa - g(alpha)
    i = int(np.argmax(gap))
    return float(gap[i]), float(alpha[i])


def delta_divergence(f: TradeoffCurve, g: TradeoffCurve, tol: float = KAPPA_TOL) -> DeltaResult:
    """``Delta(f || g)`` by bisection on the feasibility of ``k``."""
    f, g = _as_curve(f), _as_curve(g)
    base = np.unique(np.concatenate([np.linspace(0.0, 1.0, GRID_POINTS), f.alpha_grid, g.alpha_grid]))
    gap0, witness = _worst_gap(f, g, 0.0, base)
    if gap0 <= SLACK:
        return DeltaResult(0.0, "forward", witness)
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _worst_gap(f, g, mid, base)[0] <= SLACK:
            hi = mid
        else:
            lo = mid
    # witness: where the constraint is tightest just below the returned kappa
    witness = _worst_gap(f, g, lo, base)[1]
    return DeltaResult(hi, "forward", witness)


def symmetric_delta(f: TradeoffCurve, g: TradeoffCurve, tol: float = KAPPA_TOL) -> DeltaResult:
    fwd = delta_divergence(f, g, tol)
    bwd = delta_divergence(g, f, tol)
    top = fwd if fwd.kappa >= bwd.kappa else bwd
    return DeltaResult(top.kappa, "symmetric", top.witness_alpha, fwd.kappa, bwd.kappa)


def contract_band(f: TradeoffCurve, bound: float, alpha=None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Region of curves within symmetric distance ``bound`` of ``f``.

    Returns ``(alpha, lower, upper)`` where ``lower = f(a + D) - D`` and
    ``upper = f(a - D) + D`` (no constraint from the second direction for
    ``a < D``), both clipped to ``[0, 1 - a]``.
    """
    if not 0.0 <= bound <= 1.0:
        raise DomainError("bound must lie in [0, 1]")
    a = np.linspace(0.0, 1.0, 1001) if alpha is None else np.asarray(alpha, dtype=np.float64)
    lower = np.clip(f(a + bound) - bound, 0.0, None)
    upper = np.where(a >= bound, f(np.clip(a - bound, 0.0, 1.0)) + bound, 1.0)
    upper = np.minimum(upper, 1.0 - a)
    return a, np.minimum(lower, 1.0 - a), upper


# --------------------------------------------------------------------------
# contract validation


@dataclass(frozen=True)
class GroupVerdict:
    group: int
    baseline: SubsampledGaussian | None
    candidate: SubsampledGaussian | None
    delta: float
    bound: float
    passed: bool
    forward: float = float("nan")
    backward: float = float("nan")
    error: str | None = None

    def to_dict(self) -> dict:
        def mech(m):
            return None if m is None else {"rate": m.sample_rate, "sigma": m.noise_multiplier,
                                           "steps": m.steps, "sensitivity": m.sensitivity}
        return {"group": self.group, "baseline": mech(self.baseline),
                "candidate": mech(self.candidate), "delta": self.delta,
                "forward": self.forward, "backward": self.backward,
                "bound": self.bound, "passed": self.passed, "error": self.error}


@dataclass(frozen=True)
class ContractVerdict:
    groups: tuple[GroupVerdict, ...]
    bound: float

    @property
    def passed(self) -> bool:
        return all(g.passed for g in self.groups)

    def to_dict(self) -> dict:
        return {"bound": self.bound, "passed": self.passed,
                "groups": [g.to_dict() for g in self.groups]}


def baseline_mechanism(group: BudgetGroup, rate: float, steps: int,
                       backend: str = DEFAULT_BACKEND) -> SubsampledGaussian:
    """Standard single-budget mechanism for one group's ``(eps, delta)``."""
    return SubsampledGaussian(rate, get_noise(group.eps, group.delta, rate, steps, backend), steps)


def validate_contract(spec: PrivacySpec, candidate: MechanismParams | ScaleParams, bound: float,
                      baseline_rate: float | None = None, backend: str | None = None,
                      config: PldConfig = DEFAULT_PLD) -> ContractVerdict:
    """Check every group's symmetric Delta against ``bound``.

    The baseline for group ``i`` is the plain subsampled Gaussian at
    ``baseline_rate`` with the noise certified for ``(eps_i, delta_i)``; its
    default rate is the candidate's target rate (or its shared rate).
    Failures in one group are recorded without aborting the others.
    """
    if not 0.0 <= bound <= 1.0:
        raise DomainError("bound must lie in [0, 1]")
    backend = backend or candidate.backend
    if baseline_rate is None:
        baseline_rate = (candidate.target_rate if isinstance(candidate, MechanismParams)
                         else candidate.rate)
    if baseline_rate is None or not 0.0 < baseline_rate < 1.0:
        raise DomainError("baseline rate must lie in (0, 1)")
    verdicts = []
    curves = {}
    for i, g in enumerate(spec.groups):
        base = cand = None
        try:
            base = baseline_mechanism(g, baseline_rate, candidate.steps, backend)
            cand = candidate.mechanism(i)
            for m in (base, cand):
                if m not in curves:
                    curves[m] = mechanism_tradeoff(m, config=config)
            res = symmetric_delta(curves[base], curves[cand])
            verdicts.append(GroupVerdict(i, base, cand, res.kappa, bound, res.kappa <= bound,
                                         res.forward, res.backward))
        except IdpError as exc:
            verdicts.append(GroupVerdict(i, base, cand, float("nan"), bound, False, error=str(exc)))
    return ContractVerdict(tuple(verdicts), bound)


# --------------------------------------------------------------------------
# mechanism selection


@dataclass(frozen=True)
class PaddingSuggestion:
    size: int
    eps: float
    delta: float
    params: MechanismParams
    verdict: ContractVerdict


@dataclass(frozen=True)
class MetaDecision:
    recommendation: str
    sampling: MechanismParams
    verdict: ContractVerdict
    failing: tuple[tuple[int, float], ...] = ()
    sensitivity: ScaleParams | None = None
    padding: PaddingSuggestion | None = None
    padding_trace: tuple = field(default=(), repr=False)

    def to_dict(self) -> dict:
        out = {"recommendation": self.recommendation, "sampling": self.sampling.to_dict(),
               "verdict": self.verdict.to_dict(),
               "failing": [{"group": i, "delta": d} for i, d in self.failing]}
        if self.sensitivity is not None:
            out["sensitivity"] = self.sensitivity.to_dict()
        if self.padding is not None:
            out["padding"] = {"size": self.padding.size, "eps": self.padding.eps,
                              "delta": self.padding.delta, "params": self.padding.params.to_dict()}
        return out


def padded_spec(spec: PrivacySpec, size: int, eps: float) -> PrivacySpec:
    """``spec`` plus a public padding group appended last."""
    delta = spec.groups[0].delta
    return PrivacySpec(spec.groups + (BudgetGroup(eps, delta, size),))


def padding_verdict(spec: PrivacySpec, size: int, eps: float, bound: float, rate: float,
                    steps: int, backend: str = DEFAULT_BACKEND):
    """Calibrate with padding and validate only the original groups."""
    params = calibrate_sampling_idp(padded_spec(spec, size, eps), rate, steps, backend=backend)
    n = len(spec.groups)
    own = MechanismParams(params.sigma, params.rates[:n], params.steps, params.clip,
                          params.avg_rate, params.saturated[:n], params.backend,
                          params.policy, params.target_rate, params.scalings)
    return params, validate_contract(spec, own, bound, rate, backend)


def meta_select(spec: PrivacySpec, bound: float, rate: float, steps: int, clip: float = 1.0,
                backend: str = DEFAULT_BACKEND, padding_factors: Sequence[float] = (0.25, 0.5, 1, 2, 4, 8),
                padding_eps: Sequence[float] | None = None) -> MetaDecision:
    """Pick sampling-based iDP if it meets the contract, else propose fallbacks.

    Fallbacks are the sensitivity-based parameters and the smallest public
    padding group (size as a multiple of the dataset size, budget from
    ``padding_eps``, by default the spec's own budgets) that brings every
    original group within ``bound``.
    """
    params = calibrate_sampling_idp(spec, rate, steps, backend=backend, clip=clip)
    verdict = validate_contract(spec, params, bound, rate, backend)
    if verdict.passed:
        return MetaDecision("sampling", params, verdict)
    failing = tuple((g.group, g.delta) for g in verdict.groups if not g.passed)
    sens = calibrate_sensitivity_idp(spec, rate, steps, clip, backend)
    budgets = sorted(set(spec.eps.tolist())) if padding_eps is None else list(padding_eps)
    best = None
    trace = []
    for factor in sorted(padding_factors):
        size = max(1, int(round(factor * spec.total)))
        for eps in budgets:
            try:
                p, v = padding_verdict(spec, size, eps, bound, rate, steps, backend)
            except IdpError as exc:
                trace.append((size, eps, None, str(exc)))
                continue
            worst = max((g.delta for g in v.groups), default=0.0)
            trace.append((size, eps, worst, None))
            if v.passed:
                best = PaddingSuggestion(size, eps, spec.groups[0].delta, p, v)
                break
        if best is not None:
            break
    return MetaDecision("sensitivity", params, verdict, failing, sens, best, tuple(trace))
