"""Budget-manipulation and collusion attacks on sampling-based iDP.

Under a fixed expected batch size the shared noise and every group's rate
depend on the whole budget distribution. An adversary who controls the
budgets of other records (all of them centrally, or a coalition's own) can
therefore pick budgets that raise a target's membership-inference advantage
while every group, the target included, still meets its stated ``(eps, delta)``.

The planner searches a declared grid of budgets and scores each assignment by
the target's PLD advantage.
"""

from __future__ import annotations

import functools
import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

from .accountant import DEFAULT_PLD, PldConfig, mechanism_advantage
from .calibration import (DEFAULT_BACKEND, BudgetGroup, CertificationReport, MechanismParams,
                          PrivacySpec, calibrate_sampling_idp, check_params)
from .divergence import ContractVerdict, validate_contract
from .errors import DomainError
from .parallel import ordered_map

MODES = ("central", "collusion")


@dataclass(frozen=True)
class ThreatConfig:
    """Who may change which budgets, and the fixed training context.

    ``eps_max`` and ``sizes`` describe every group; group ``target`` keeps
    its maximal budget. In central mode every other group is manipulable, in
    collusion mode only the ``coalition`` groups are; the rest keep their
    maximal budgets.
    """

    mode: str
    target: int
    eps_max: tuple[float, ...]
    sizes: tuple[int, ...]
    candidate_budgets: tuple[float, ...]
    rate: float
    steps: int
    delta: float
    coalition: frozenset = frozenset()
    utility_cap: float | None = None
    backend: str = DEFAULT_BACKEND
    product_grid: bool = False

    def __post_init__(self):
        object.__setattr__(self, "eps_max", tuple(float(e) for e in self.eps_max))
        object.__setattr__(self, "sizes", tuple(int(n) for n in self.sizes))
        object.__setattr__(self, "candidate_budgets", tuple(float(e) for e in self.candidate_budgets))
        object.__setattr__(self, "coalition", frozenset(int(c) for c in self.coalition))
        if self.mode not in MODES:
            raise DomainError(f"mode must be one of {MODES}")
        n = len(self.eps_max)
        if len(self.sizes) != n or n == 0:
            raise DomainError("eps_max and sizes must describe the same non-empty set of groups")
        if not 0 <= self.target < n:
            raise DomainError("target must index a group")
        if self.target in self.coalition:
            raise DomainError("the target cannot be part of the coalition")
        if any(not 0 <= c < n for c in self.coalition):
            raise DomainError("coalition members must index groups")
        if self.mode == "central" and self.coalition:
            raise DomainError("central mode takes no coalition")
        if not self.candidate_budgets:
            raise DomainError("candidate_budgets must not be empty")
        for i in self.manipulable:
            bad = [e for e in self.candidate_budgets if not 0 < e <= self.eps_max[i]]
            if bad:
                raise DomainError(f"candidate budgets {bad} exceed eps_max of group {i}")
        if self.utility_cap is not None and not self.utility_cap > 0:
            raise DomainError("utility_cap must be positive")

    @property
    def manipulable(self) -> tuple[int, ...]:
        if self.mode == "central":
            return tuple(i for i in range(len(self.eps_max)) if i != self.target)
        return tuple(sorted(self.coalition))

    @property
    def coalition_fraction(self) -> float:
        total = sum(self.sizes)
        return sum(self.sizes[i] for i in self.manipulable) / total

    def spec_for(self, assignment: Sequence[float]) -> PrivacySpec:
        return PrivacySpec(tuple(BudgetGroup(e, self.delta, n)
                                 for e, n in zip(assignment, self.sizes)))


@dataclass(frozen=True)
class Evaluation:
    assignment: tuple[float, ...]
    sigma: float
    target_rate: float
    advantage: float
    excess: float
    utility_ratio: float
    feasible: bool

    def row(self) -> dict:
        return {"assignment": " ".join(f"{e:g}" for e in self.assignment),
                "sigma": self.sigma, "q_target": self.target_rate, "advantage": self.advantage,
                "excess": self.excess, "utility_ratio": self.utility_ratio,
                "feasible": int(self.feasible)}


@dataclass(frozen=True)
class AttackPlan:
    assignment: tuple[float, ...]
    baseline_advantage: float
    attacked_advantage: float
    excess: float
    sigma: float
    rates: tuple[float, ...]
    utility_ratio: float
    params: MechanismParams
    baseline_params: MechanismParams
    config: ThreatConfig
    table: tuple[Evaluation, ...] = field(repr=False, default=())
    infeasible: bool = False

    @property
    def coalition_fraction(self) -> float:
        return self.config.coalition_fraction

    def to_dict(self) -> dict:
        return {
            "mode": self.config.mode, "target": self.config.target,
            "assignment": list(self.assignment),
            "baseline_advantage": self.baseline_advantage,
            "attacked_advantage": self.attacked_advantage, "excess": self.excess,
            "sigma": self.sigma, "rates": list(self.rates), "utility_ratio": self.utility_ratio,
            "coalition_fraction": self.coalition_fraction, "infeasible": self.infeasible,
            "backend": self.config.backend,
        }


def _evaluate(assignment, cfg: ThreatConfig, config: PldConfig):
    params = calibrate_sampling_idp(cfg.spec_for(assignment), cfg.rate, cfg.steps,
                                    backend=cfg.backend)
    return params, mechanism_advantage(params.mechanism(cfg.target), config)


def _assignments(cfg: ThreatConfig):
    base = list(cfg.eps_max)
    moved = cfg.manipulable
    out = [tuple(base)]
    if not moved:
        return out
    if cfg.product_grid:
        count = len(cfg.candidate_budgets) ** len(moved)
        warnings.warn(f"product grid evaluates {count} assignments, each a full calibration",
                      stacklevel=3)
        combos = itertools.product(cfg.candidate_budgets, repeat=len(moved))
    else:
        combos = ((e,) * len(moved) for e in cfg.candidate_budgets)
    for combo in combos:
        a = list(base)
        for i, e in zip(moved, combo):
            a[i] = e
        if tuple(a) not in out:
            out.append(tuple(a))
    return out


def _plan(cfg: ThreatConfig, jobs: int, config: PldConfig) -> AttackPlan:
    assignments = _assignments(cfg)
    results = ordered_map(functools.partial(_evaluate, cfg=cfg, config=config), assignments, jobs)
    base_params, base_adv = results[0]
    table = []
    for a, (params, adv) in zip(assignments, results):
        ratio = params.sigma / base_params.sigma
        ok = cfg.utility_cap is None or ratio <= cfg.utility_cap
        table.append(Evaluation(a, params.sigma, params.rates[cfg.target], adv, adv - base_adv,
                                ratio, ok))

    def key(n):
        ev = table[n]
        # best advantage; ties toward larger manipulated budgets, then lexicographic
        return (-ev.advantage, tuple(-ev.assignment[i] for i in cfg.manipulable), ev.assignment)

    feasible = [n for n in range(len(table)) if table[n].feasible]
    pool = feasible or list(range(len(table)))
    best = min(pool, key=key)
    params, adv = results[best]
    ev = table[best]
    return AttackPlan(ev.assignment, base_adv, adv, adv - base_adv, params.sigma, params.rates,
                      ev.utility_ratio, params, base_params, cfg, tuple(table),
                      infeasible=not feasible)


def plan_budget_manipulation(cfg: ThreatConfig, jobs: int = 1,
                             config: PldConfig = DEFAULT_PLD) -> AttackPlan:
    """Central adversary: choose every non-target budget to maximise the target's advantage."""
    if cfg.mode != "central":
        raise DomainError("budget manipulation needs mode='central'")
    return _plan(cfg, jobs, config)


def plan_collusion(cfg: ThreatConfig, jobs: int = 1, config: PldConfig = DEFAULT_PLD) -> AttackPlan:
    """Coalition adversary: only the coalition's own budgets move."""
    if cfg.mode != "collusion":
        raise DomainError("collusion planning needs mode='collusion'")
    return _plan(cfg, jobs, config)


@dataclass(frozen=True)
class ExcessReport:
    excess: float
    bound: float
    certified: CertificationReport
    contract: ContractVerdict
    target: int

    @property
    def rejected(self) -> bool:
        """True when the target's contract check fails at ``bound``."""
        return not self.contract.groups[self.target].passed

    @property
    def unnoticed_by_eps_delta(self) -> bool:
        """Every group, target included, still meets its stated (eps, delta)."""
        return self.certified.passed

    def to_dict(self) -> dict:
        return {"excess": self.excess, "bound": self.bound, "rejected": self.rejected,
                "certified": self.certified.passed,
                "unnoticed_by_eps_delta": self.unnoticed_by_eps_delta,
                "target_delta": self.contract.groups[self.target].delta,
                "contract": self.contract.to_dict()}


def excess_report(plan: AttackPlan, bound: float) -> ExcessReport:
    """Would the contract at ``bound`` have caught the attacked mechanism?"""
    cfg = plan.config
    spec = cfg.spec_for(plan.assignment)
    certified = check_params(plan.params, spec, cfg.backend)
    if not math.isfinite(bound) or not 0.0 <= bound <= 1.0:
        raise DomainError("bound must lie in [0, 1]")
    contract = validate_contract(spec, plan.params, bound, cfg.rate, cfg.backend)
    return ExcessReport(plan.excess, bound, certified, contract, cfg.target)
