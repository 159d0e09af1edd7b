"""``idprisk`` command line: JSON config in, CSV/JSON/SVG out.

Every command reads one JSON config (``--config``), validates it against the
schema for that command (unknown keys are errors) and writes its outputs into
``--out`` (default ``$IDPRISK_OUT`` or ``./idprisk-out``). Exit codes: 0 on
success, 2 for a bad config or arguments, 3 when a calibration or accounting
step fails.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import outputs
from .accountant import (BACKENDS, SubsampledGaussian, default_eps_grid, mechanism_advantage,
                         mechanism_tradeoff, pld_profile, profile_to_tradeoff)
from .attacks import ThreatConfig, excess_report, plan_budget_manipulation, plan_collusion
from .calibration import (DEFAULT_BACKEND, METHODS, POLICIES, MechanismParams, PrivacySpec,
                          calibrate_sampling_idp, calibrate_sensitivity_idp, check_params)
from .divergence import contract_band, meta_select, symmetric_delta, validate_contract
from .errors import IdpError
from .simlab import generate_split_matrix, roc_summary, simulate_target, sweep_proportions
from .sweeps import advantage_surface, training_context

OUT_ENV = "IDPRISK_OUT"
SCHEMA_VERSION = 1
COMMANDS = ("calibrate", "profile", "tradeoff", "advantage", "sweep", "delta", "validate",
            "attack", "simulate", "splits")

# --------------------------------------------------------------------------
# schema

_POS = {"type": "number", "exclusiveMinimum": 0}
_PROB = {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}
_RATE = {"type": "number", "minimum": 0, "maximum": 1}
_INT1 = {"type": "integer", "minimum": 1}


def _obj(props: dict, required=()) -> dict:
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False}


_MECH = _obj({"name": {"type": "string"}, "rate": _RATE, "sigma": _POS, "steps": _INT1,
              "sensitivity": _POS}, ["rate", "sigma", "steps"])
_GROUP = _obj({"eps": _POS, "delta": _PROB, "size": _INT1}, ["eps", "delta", "size"])
_TRAINING = {
    "oneOf": [
        _obj({"rate": _PROB, "steps": _INT1}, ["rate", "steps"]),
        _obj({"batch_size": _INT1, "epochs": _POS, "total": _INT1}, ["batch_size", "epochs"]),
    ]
}
_BLOCKS = {
    "version": {"const": SCHEMA_VERSION},
    "seed": {"type": "integer", "minimum": 0, "maximum": 2 ** 64 - 1},
    "backend": {"enum": list(BACKENDS)},
    "jobs": _INT1,
    "spec": _obj({"groups": {"type": "array", "items": _GROUP, "minItems": 1}}, ["groups"]),
    "training": _TRAINING,
    "calibration": _obj({"kind": {"enum": ["sampling", "sensitivity"]},
                         "policy": {"enum": list(POLICIES)}, "method": {"enum": list(METHODS)},
                         "clip": _POS}),
    "mechanisms": {"type": "array", "items": _MECH, "minItems": 1},
    "grid": _obj({"eps_max": _POS, "alpha_points": {"type": "integer", "minimum": 2}}),
    "surface": _obj({"eps1": _POS, "eps2": {"type": "array", "items": _POS, "minItems": 1},
                     "shares": {"type": "array", "items": _PROB, "minItems": 1},
                     "delta": _PROB, "total": _INT1, "method": {"enum": list(METHODS)}},
                    ["eps1", "eps2", "shares", "delta", "total"]),
    "contract": _obj({"bound": {"type": "number", "minimum": 0, "maximum": 1},
                      "baseline": _MECH, "candidates": {"type": "array", "items": _MECH},
                      "baseline_rate": _PROB, "meta": {"type": "boolean"}}, ["bound"]),
    "threat": _obj({"mode": {"enum": ["central", "collusion"]},
                    "target": {"type": "integer", "minimum": 0},
                    "eps_max": {"type": "array", "items": _POS, "minItems": 1},
                    "sizes": {"type": "array", "items": _INT1, "minItems": 1},
                    "candidate_budgets": {"type": "array", "items": _POS, "minItems": 1},
                    "delta": _PROB,
                    "coalition": {"type": "array", "items": {"type": "integer", "minimum": 0}},
                    "utility_cap": _POS, "product_grid": {"type": "boolean"},
                    "bound": {"type": "number", "minimum": 0, "maximum": 1}},
                   ["mode", "target", "eps_max", "sizes", "candidate_budgets", "delta"]),
    "simulation": _obj({"n_trials": _INT1,
                        "mechanism": _MECH, "roc_points": {"type": "integer", "minimum": 2},
                        "sweep": _obj({"eps": {"type": "array", "items": _POS,
                                               "minItems": 2, "maxItems": 2},
                                       "delta": _PROB, "total": _INT1,
                                       "proportions": {"type": "array", "items": _PROB, "minItems": 2},
                                       "replicates": _INT1,
                                       "mode": {"enum": ["sampling", "sensitivity", "both"]},
                                       "focus": {"type": "integer", "minimum": 0, "maximum": 1}},
                                      ["eps", "delta", "total", "proportions"])},
                       ["n_trials"]),
    "splits": _obj({"group_sizes": {"type": "array", "items": _INT1, "minItems": 1},
                    "m": {"type": "integer", "minimum": 2}, "complement": {"type": "boolean"}},
                   ["group_sizes", "m"]),
}
_REQUIRED = {
    "calibrate": ["spec", "training"],
    "profile": [], "tradeoff": [], "advantage": [],
    "sweep": ["surface", "training"],
    "delta": ["contract"],
    "validate": ["spec", "training", "contract"],
    "attack": ["threat", "training"],
    "simulate": ["simulation"],
    "splits": ["splits"],
}


def schema_for(command: str) -> dict:
    schema = _obj(_BLOCKS, ["version", *_REQUIRED[command]])
    if command in ("profile", "tradeoff", "advantage"):
        schema["anyOf"] = [{"required": ["mechanisms"]}, {"required": ["spec", "training"]}]
    return schema


class ConfigError(Exception):
    pass


def load_config(command: str, path: str | None) -> dict:
    if path is None:
        raise ConfigError("--config is required")
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        jsonschema.validate(cfg, schema_for(command))
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config rejected at {where}: {exc.message}") from exc
    return cfg


# --------------------------------------------------------------------------
# helpers


class Run:
    """Resolved run options shared by all commands."""

    def __init__(self, args, cfg):
        self.cfg = cfg
        self.out = Path(args.out or os.environ.get(OUT_ENV) or "idprisk-out")
        self.seed = args.seed if args.seed is not None else cfg.get("seed", 0)
        self.backend = args.backend or cfg.get("backend", DEFAULT_BACKEND)
        self.jobs = args.jobs or cfg.get("jobs", 1)
        self.svg = not args.no_svg
        self.written: list[Path] = []

    def csv(self, name, rows, columns=None, comments=()):
        self.written.append(outputs.write_csv(self.out / name, rows, columns,
                                              [f"seed={self.seed}", *comments]))

    def json(self, name, data):
        self.written.append(outputs.write_json(self.out / name, {"seed": self.seed, **data}))

    def text(self, name, text):
        self.written.append(outputs.write_atomic(self.out / name, text))

    def plot(self, name, svg_text):
        if self.svg:
            self.written.append(outputs.write_svg(self.out / name, svg_text))


def _training(block: dict, total: int | None = None) -> tuple[float, int]:
    if "rate" in block:
        return float(block["rate"]), int(block["steps"])
    n = block.get("total", total)
    if n is None:
        raise ConfigError("training by batch_size needs a total record count")
    return training_context(int(n), int(block["batch_size"]), float(block["epochs"]))


def _mech(block: dict) -> SubsampledGaussian:
    return SubsampledGaussian(block["rate"], block["sigma"], block["steps"],
                              block.get("sensitivity", 1.0))


def _calibrated(run: Run):
    cfg = run.cfg
    spec = PrivacySpec.from_dict(cfg["spec"])
    rate, steps = _training(cfg["training"], spec.total)
    cal = cfg.get("calibration", {})
    if cal.get("kind", "sampling") == "sensitivity":
        params = calibrate_sensitivity_idp(spec, rate, steps, cal.get("clip", 1.0), run.backend)
    else:
        params = calibrate_sampling_idp(spec, rate, steps, cal.get("policy", "fixed-batch"),
                                        run.backend, cal.get("method", "search"),
                                        cal.get("clip", 1.0))
    return spec, rate, steps, params


def _named_mechanisms(run: Run) -> list[tuple[str, SubsampledGaussian]]:
    if "mechanisms" in run.cfg:
        return [(m.get("name", f"mechanism{i}"), _mech(m))
                for i, m in enumerate(run.cfg["mechanisms"])]
    spec, _, _, params = _calibrated(run)
    return [(f"group{i}", params.mechanism(i)) for i in range(len(spec.groups))]


def _eps_grid(run: Run):
    grid = run.cfg.get("grid", {})
    return default_eps_grid(grid.get("eps_max", 40.0))


def _alpha_grid(run: Run):
    return np.linspace(0.0, 1.0, run.cfg.get("grid", {}).get("alpha_points", 1001))


def _summary(spec: PrivacySpec, params) -> str:
    lines = []
    if isinstance(params, MechanismParams):
        lines.append(f"sampling-based: sigma={params.sigma:.6g} steps={params.steps} "
                     f"mean rate={params.avg_rate:.6g} (target {params.target_rate:.6g})")
        for i, g in enumerate(spec.groups):
            sat = " (saturated)" if params.saturated[i] else ""
            lines.append(f"  group {i}: eps={g.eps:g} delta={g.delta:g} size={g.size} "
                         f"q={params.rates[i]:.6g}{sat}")
    else:
        lines.append(f"sensitivity-based: sigma_scale={params.sigma_scale:.6g} "
                     f"rate={params.rate:.6g} steps={params.steps}")
        for i, g in enumerate(spec.groups):
            lines.append(f"  group {i}: eps={g.eps:g} delta={g.delta:g} size={g.size} "
                         f"clip={params.clips[i]:.6g} noise/clip={params.noise_ratio(i):.6g}")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# commands


def cmd_calibrate(run: Run) -> int:
    spec, _, _, params = _calibrated(run)
    report = check_params(params, spec, run.backend)
    summary = _summary(spec, params)
    run.json("params.json", {"spec": spec.to_dict(), "params": params.to_dict(),
                             "certified": report.passed,
                             "checks": [g.__dict__ for g in report.groups]})
    run.text("summary.txt", summary)
    print(summary, end="")
    return 0 if report.passed else 3


def cmd_profile(run: Run) -> int:
    eps = _eps_grid(run)
    rows, series = [], {}
    for name, m in _named_mechanisms(run):
        prof = pld_profile(m, eps)
        rows += [{"mechanism": name, "eps": e, "delta": d} for e, d in zip(prof.eps_grid, prof.delta)]
        series[name] = (prof.eps_grid, prof.delta)
    run.csv("profile.csv", rows, ["mechanism", "eps", "delta"])
    run.plot("profile.svg", outputs.line_svg(series, "privacy profile", "eps", "delta"))
    return 0


def cmd_tradeoff(run: Run) -> int:
    eps, alpha = _eps_grid(run), _alpha_grid(run)
    rows, series = [], {}
    for name, m in _named_mechanisms(run):
        curve = profile_to_tradeoff(pld_profile(m, eps), alpha)
        rows += [{"mechanism": name, "alpha": a, "beta": b} for a, b in zip(curve.alpha_grid, curve.f)]
        series[name] = (curve.alpha_grid, curve.f)
    series["random guess"] = ([0.0, 1.0], [1.0, 0.0])
    run.csv("tradeoff.csv", rows, ["mechanism", "alpha", "beta"])
    run.plot("tradeoff.svg", outputs.line_svg(series, "trade-off", "FPR (alpha)", "FNR (beta)",
                                              (0, 1), (0, 1)))
    return 0


def cmd_advantage(run: Run) -> int:
    rows = []
    for name, m in _named_mechanisms(run):
        adv = mechanism_advantage(m)
        rows.append({"mechanism": name, "rate": m.sample_rate, "sigma": m.effective_noise,
                     "steps": m.steps, "advantage": adv})
        print(f"{name}: advantage {adv:.6f}")
    run.csv("advantage.csv", rows)
    return 0


def cmd_sweep(run: Run) -> int:
    s = run.cfg["surface"]
    rate, steps = _training(run.cfg["training"], s["total"])
    surf = advantage_surface(s["eps1"], s["eps2"], s["shares"], s["delta"], s["total"], rate,
                             steps, run.backend, s.get("method", "exact"), run.jobs)
    run.csv("surface.csv", [c.to_dict() for c in surf.cells],
            comments=[f"eps1={surf.eps1:g} delta={surf.delta:g} rate={rate:g} steps={steps}"])
    grid = surf.grid(1)
    run.plot("surface.svg", outputs.heatmap_svg(surf.shares, surf.eps2, grid,
                                                f"group-1 advantage, eps1={surf.eps1:g}",
                                                "share of group 2", "eps2"))
    print(f"group-1 advantage range: {grid.min():.4f} .. {grid.max():.4f}")
    return 0


def _band_outputs(run: Run, base_curve, bound, candidates):
    a, lo, hi = contract_band(base_curve, bound)
    run.csv("band.csv", [{"alpha": x, "lower": l, "upper": u, "baseline": b}
                         for x, l, u, b in zip(a, lo, hi, base_curve(a))])
    series = {"baseline": (a, base_curve(a))}
    for name, curve in candidates:
        series[name] = (curve.alpha_grid, curve.f)
    run.plot("band.svg", outputs.line_svg(series, f"valid region, bound {bound:g}", "alpha", "beta",
                                          (0, 1), (0, 1), bands={"band": (a, lo, hi)}))


def cmd_delta(run: Run) -> int:
    c = run.cfg["contract"]
    if "baseline" not in c:
        raise ConfigError("contract.baseline is required for delta")
    bound = c["bound"]
    base = mechanism_tradeoff(_mech(c["baseline"]))
    results, curves = [], []
    for i, m in enumerate(c.get("candidates", [])):
        name = m.get("name", f"candidate{i}")
        curve = mechanism_tradeoff(_mech(m))
        res = symmetric_delta(base, curve)
        curves.append((name, curve))
        results.append({"candidate": name, "forward": res.forward, "backward": res.backward,
                        "delta": res.kappa, "witness_alpha": res.witness_alpha,
                        "passed": res.kappa <= bound})
        print(f"{name}: Delta={res.kappa:.5f} {'pass' if res.kappa <= bound else 'fail'}")
    run.json("delta.json", {"bound": bound, "results": results})
    _band_outputs(run, base, bound, curves)
    return 0


def cmd_validate(run: Run) -> int:
    spec, rate, steps, params = _calibrated(run)
    c = run.cfg["contract"]
    brate = c.get("baseline_rate", rate)
    if c.get("meta"):
        decision = meta_select(spec, c["bound"], brate, steps, backend=run.backend)
        run.json("meta.json", decision.to_dict())
        verdict = decision.verdict
        print(f"recommendation: {decision.recommendation}")
    else:
        verdict = validate_contract(spec, params, c["bound"], brate, run.backend)
    run.json("verdict.json", verdict.to_dict())
    for g in verdict.groups:
        print(f"group {g.group}: Delta={g.delta:.5f} {'pass' if g.passed else 'fail'}")
    errors = [g for g in verdict.groups if g.error]
    if verdict.groups and verdict.groups[0].baseline is not None:
        base = mechanism_tradeoff(verdict.groups[0].baseline)
        cand = [(f"group{g.group}", mechanism_tradeoff(g.candidate))
                for g in verdict.groups if g.candidate is not None]
        _band_outputs(run, base, c["bound"], cand)
    return 3 if errors else 0


def cmd_attack(run: Run) -> int:
    t = run.cfg["threat"]
    rate, steps = _training(run.cfg["training"], sum(t["sizes"]))
    cfg = ThreatConfig(t["mode"], t["target"], t["eps_max"], t["sizes"], t["candidate_budgets"],
                       rate, steps, t["delta"], frozenset(t.get("coalition", ())),
                       t.get("utility_cap"), run.backend, t.get("product_grid", False))
    planner = plan_budget_manipulation if cfg.mode == "central" else plan_collusion
    plan = planner(cfg, jobs=run.jobs)
    out = {"plan": plan.to_dict()}
    if "bound" in t:
        out["excess_report"] = excess_report(plan, t["bound"]).to_dict()
    run.json("attack.json", out)
    run.csv("attack_table.csv", [e.row() for e in plan.table])
    print(f"baseline advantage {plan.baseline_advantage:.4f} -> attacked "
          f"{plan.attacked_advantage:.4f} with budgets {list(plan.assignment)}")
    return 0


def cmd_simulate(run: Run) -> int:
    s = run.cfg["simulation"]
    n = s["n_trials"]
    done = False
    if "mechanism" in s:
        mech = _mech(s["mechanism"])
        summary = roc_summary(simulate_target(mech, 0, n, run.seed, jobs=run.jobs))
        analytic = mechanism_advantage(mech)
        points = s.get("roc_points", 512)
        idx = np.unique(np.linspace(0, summary.tpr.size - 1, points).round().astype(int))
        run.csv("roc.csv", [{"fpr": summary.fpr[i], "tpr": summary.tpr[i]} for i in idx])
        run.json("simulation.json", {"summary": summary.to_dict(), "analytic_advantage": analytic,
                                     "n_trials": n})
        run.plot("roc.svg", outputs.line_svg({"empirical": (summary.fpr[idx], summary.tpr[idx]),
                                              "chance": ([0, 1], [0, 1])},
                                             "ROC", "FPR", "TPR", (0, 1), (0, 1)))
        print(f"empirical advantage {summary.advantage:.4f} (+-{summary.ci_halfwidth:.4f}), "
              f"analytic {analytic:.4f}, priv {summary.priv:.4f}")
        done = True
    if "sweep" in s:
        sw = s["sweep"]
        rate, steps = _training(run.cfg.get("training", {"rate": 0.2, "steps": 20}), sw["total"])
        modes = ["sampling", "sensitivity"] if sw.get("mode", "sampling") == "both" else [sw.get("mode", "sampling")]
        trends = {}
        for mode in modes:
            rep = sweep_proportions(tuple(sw["eps"]), sw["delta"], sw["total"], sw["proportions"],
                                    rate, steps, n, run.seed, sw.get("replicates", 10), mode,
                                    sw.get("focus", 0), run.backend, run.jobs)
            run.csv(f"trend_{mode}.csv", [r.to_dict() for r in rep.rows])
            trends[mode] = rep.trend.to_dict()
            print(f"{mode}: JT={rep.trend.statistic:g} z={rep.trend.z:.3f} p={rep.trend.p_value:.3g}")
        run.json("trend.json", {"trends": trends, "rate": rate, "steps": steps, "n_trials": n})
        done = True
    if not done:
        raise ConfigError("simulation needs a mechanism or a sweep block")
    return 0


def cmd_splits(run: Run) -> int:
    s = run.cfg["splits"]
    split = generate_split_matrix(s["group_sizes"], s["m"], run.seed, s.get("complement", False))
    report = split.check()
    lines = [f"# seed={run.seed}", ",".join(f"c{j}" for j in range(split.shape[1]))]
    lines += [",".join(map(str, row)) for row in split.matrix.tolist()]
    run.text("splits.csv", "\n".join(lines) + "\n")
    run.json("splits_report.json", report)
    print("constraints: " + ("all pass" if report["passed"] else "FAILED") +
          f" (column sums {report['column_min']}..{report['column_max']})")
    return 0 if report["passed"] else 3


HANDLERS = {name: globals()[f"cmd_{name}"] for name in COMMANDS}


HELP = {
    "calibrate": "calibrate sampling- or sensitivity-based parameters for a spec",
    "profile": "privacy profiles delta(eps) per mechanism or group",
    "tradeoff": "trade-off curves per mechanism or group",
    "advantage": "membership-inference advantage per mechanism or group",
    "sweep": "advantage surface over a second group's budget and share",
    "delta": "Delta-divergence of candidates against a baseline, with the valid band",
    "validate": "check a calibrated spec against the excess-vulnerability contract",
    "attack": "plan a budget-manipulation or collusion attack",
    "simulate": "Monte-Carlo membership inference and proportion sweeps",
    "splits": "balanced IN/OUT split matrix for shadow models",
}


def _add_common(p, default):
    # subcommands repeat the global flags; SUPPRESS keeps them from clobbering
    # values given before the command name
    p.add_argument("--config", default=default, help="JSON config file")
    p.add_argument("--out", default=default,
                   help=f"output directory (default ${OUT_ENV} or ./idprisk-out)")
    p.add_argument("--seed", type=int, default=default, help="random seed (unsigned 64-bit)")
    p.add_argument("--backend", choices=BACKENDS, default=default,
                   help="accountant used for calibration")
    p.add_argument("--jobs", type=int, default=default, help="worker processes")
    p.add_argument("--no-svg", action="store_true",
                   default=False if default is None else default, help="skip SVG plots")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="idprisk",
                                     description="Privacy risk of individualised DP-SGD.")
    _add_common(parser, None)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        _add_common(sub.add_parser(name, help=HELP[name]), argparse.SUPPRESS)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.seed is not None and not 0 <= args.seed < 2 ** 64:
        parser.error("--seed must be an unsigned 64-bit integer")
    if args.jobs is not None and args.jobs < 1:
        parser.error("--jobs must be positive")
    try:
        cfg = load_config(args.command, args.config)
        run = Run(args, cfg)
        code = HANDLERS[args.command](run)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except IdpError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    for p in run.written:
        print(f"wrote {p}")
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
