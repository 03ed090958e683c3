"""Command-line entry point.

Exit codes: 0 success, 1 bad configuration (nothing written), 2 solver
failure, 3 invariant violation (artifacts and manifest are still written).
"""
from __future__ import annotations

import argparse
import platform
import sys
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from .io import (
    REFERENCE_BATHS,
    ConfigBaths,
    ConfigError,
    config_digest,
    load_config,
    validate_config,
    write_csv,
    write_json,
)
from .lindblad import build_liouvillian, channel_table
from .mcwf import CoherentChannelError, run_ensemble
from .models import BATHS, ModelKind, build_model
from .stages import STAGES, BreakdownViolation, breakdown, diagnose, verify_breakdown
from .sweep import (
    NoCoolingWindow,
    bound_check,
    cooling_edges,
    cooling_intervals,
    entropy_share_scan,
    max_cop,
    optimize_cooling,
    row_violations,
    sweep_characteristic,
)
from .thermo import SteadyStateError, carnot_cop, solve

SUBCOMMANDS = ("steady", "breakdown", "diagnose", "mcwf", "sweep", "optimize", "repro-fig2")

SWEEP_HEADER = [
    "omega_c", "Qdot_c", "Qdot_h", "Qdot_w", "cop", "dS", "dS_plus", "dS_minus", "dS_leak",
    "cooling", "tag", "error",
]  # fmt: skip
BREAKDOWN_HEADER = (
    ["omega_c", "I_plus", "I_minus", "I_leak"]
    + [f"Qdot_{a}_{s}" for a in BATHS for s in (*STAGES, "total")]
    + [f"dS_{s}" for s in (*STAGES, "total")]
)
SHARE_HEADER = ["omega_c", "dS_plus", "dS_minus", "dS_leak", "dS_total"]


class SolverFailure(RuntimeError):
    pass


@dataclass
class Outcome:
    """What a subcommand produced: files to write and named invariant checks."""

    files: list[tuple[str, Callable[[Path], Path]]] = field(default_factory=list)
    checks: dict[str, bool] = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    seed: int | None = None


# ---------------------------------------------------------------------------
# config helpers
# ---------------------------------------------------------------------------


def _model_cfg(cfg, need_omega_c=True):
    m = cfg.get("model")
    if m is None:
        raise ConfigError("config error at model: section required for this subcommand")
    if need_omega_c and "omega_c" not in m:
        raise ConfigError("config error at model/omega_c: required for this subcommand")
    return m


def _baths(cfg, omega_h):
    return ConfigBaths.from_config(cfg.get("baths", REFERENCE_BATHS), omega_h)


def _build(m, omega_c=None):
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return build_model(
                m["kind"], m["omega_c"] if omega_c is None else omega_c, m["omega_h"], m.get("g", 0.0), m.get("kappa", 0.0)
            )
    except ValueError as exc:
        raise ConfigError(f"config error at model: {exc}") from None


def _temps(baths_at):
    return baths_at.temperatures()


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_steady(cfg, args) -> Outcome:
    m = _model_cfg(cfg)
    model = _build(m)
    baths = _baths(cfg, m["omega_h"])(m["omega_c"])
    L = build_liouvillian(model, baths)
    rep = solve(model, baths, L)
    scale = max(abs(v) for v in rep.currents.values())
    out = Outcome()
    out.checks = {
        "conservation": rep.conservation_error() <= 1e-10,
        "second_law": rep.entropy_rate >= -1e-12,
        "residual": rep.residual <= 1e-10 * max(float(np.abs(L.total).max()), 1.0),
    }
    doc = {"model": m, **rep.to_json()}
    out.files.append(("steady.json", lambda p: write_json(p, doc)))
    if args.dump_channels:
        rows = channel_table(L)
        out.files.append(("channels.csv", lambda p: write_csv(p, ["bath", "omega", "rate_down", "rate_up"], rows)))
    out.summary = {"currents": rep.currents, "cop": rep.cop, "cooling": rep.cooling, "scale": scale}
    return out


def _breakdown_rows(report):
    rows = []
    for r in report.rows:
        sc, se = r["stage_currents"], r["stage_entropy"]
        row = [r["omega_c"], r["i_plus"], r["i_minus"], r["i_leak"]]
        for a in BATHS:
            row += [sc[(s, a)] for s in STAGES] + [r["currents"][a]]
        row += [se[s] for s in STAGES] + [sum(se.values())]
        rows.append(row)
    return rows


def cmd_breakdown(cfg, args) -> Outcome:
    m = _model_cfg(cfg, need_omega_c=False)
    if ModelKind(m["kind"]) is not ModelKind.FOUR_LEVEL:
        raise ConfigError("config error at model/kind: breakdown needs FourLevel")
    g, wh = m.get("g", 0.0), m["omega_h"]
    if not g > 0:
        raise ConfigError("config error at model/g: breakdown needs g > 0")
    sec = cfg.get("breakdown", {})
    lo = sec.get("omega_c_min", 2 * g)
    hi = sec.get("omega_c_max", wh - 2 * g)
    grid = [float(x) for x in np.linspace(lo, hi, sec.get("n_points", 50))]
    _build(m, lo), _build(m, hi)
    baths_at = _baths(cfg, wh)
    out = Outcome()
    try:
        rep = verify_breakdown(wh, g, baths_at, grid)
        out.checks["identity"] = True
    except BreakdownViolation as exc:
        out.checks["identity"] = False
        out.summary["violation"] = str(exc)
        return out
    tc = _temps(baths_at)["c"]
    s_tol = 1e-12 * max(max(abs(v) for v in r["currents"].values()) for r in rep.rows) / tc
    out.checks["stage_second_law"] = all(v >= -s_tol for r in rep.rows for v in r["stage_entropy"].values())
    out.checks["leak_sign"] = all(r["i_leak"] <= 0 for r in rep.rows)
    rows = _breakdown_rows(rep)
    out.files.append(("breakdown.csv", lambda p: write_csv(p, BREAKDOWN_HEADER, rows)))
    out.summary = {"max_identity_error": rep.max_identity_error, "pairing": rep.pairing, "n_points": len(grid)}
    return out


def cmd_diagnose(cfg, args) -> Outcome:
    m = _model_cfg(cfg)
    model = _build(m)
    rep = diagnose(model, _baths(cfg, m["omega_h"])(m["omega_c"]))
    doc = {"model": m, **rep.to_json()}
    out = Outcome(summary={"stages": len(rep.stages), "endoreversible": rep.endoreversible})
    out.files.append(("diagnosis.json", lambda p: write_json(p, doc)))
    return out


def cmd_mcwf(cfg, args) -> Outcome:
    m = _model_cfg(cfg)
    model = _build(m)
    baths = _baths(cfg, m["omega_h"])(m["omega_c"])
    sec = cfg.get("mcwf", {})
    n = sec.get("n_trajectories", 1000)
    gamma = baths["h"].gamma
    duration = sec.get("duration", 1e5 / (gamma * m["omega_h"] ** 3))
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    try:
        ens = run_ensemble(model, baths, n, duration, seed)
    except CoherentChannelError as exc:
        raise SolverFailure(str(exc)) from None
    ref = solve(model, baths)
    est = ens.currents
    z = {a: (est.mean[a] - ref.currents[a]) / est.stderr[a] if est.stderr[a] > 0 else None for a in BATHS}
    doc = {
        "model": m,
        "seed": seed,
        "n_trajectories": n,
        "duration": duration,
        "n_events": ens.n_events,
        "currents": {"mean": est.mean, "stderr": est.stderr, "reference": ref.currents, "z": z},
        "occupation": {
            "mean": ens.occupation.tolist(),
            "stderr": ens.occupation_stderr.tolist(),
            "reference": ref.populations.tolist(),
        },
        "cycle_counts": ens.tally.counts,
        "cycle_flux": {"mean": ens.cycle_flux, "stderr": ens.cycle_flux_stderr},
        "cycle_convention": "loop erasure of each trajectory; loops rotated to start at their lowest state",
    }
    if model.kind is ModelKind.FOUR_LEVEL and m.get("g", 0.0) > 0:
        bd = breakdown(m["omega_c"], m["omega_h"], m["g"], baths)
        doc["cycle_flux"]["reference"] = {"C1-C2": bd.i_plus, "C3-C4": bd.i_minus, "C5-C6": -bd.i_leak / 2}
    out = Outcome(seed=seed, summary={"z": z})
    out.checks["reference_conservation"] = ref.conservation_error() <= 1e-10
    out.files.append(("mcwf.json", lambda p: write_json(p, doc)))
    return out


def _sweep_rows(rows):
    out = []
    for r in rows:
        sh = r.shares if r.shares is not None else (None, None, None)
        out.append([r.omega_c, r.q_c, r.q_h, r.q_w, r.cop, r.entropy_rate, *sh, r.cooling, r.tag, r.error])
    return out


def _run_sweep(kind, wh, baths_at, g, kappa, lo, hi, n, refine):
    rows = sweep_characteristic(kind, wh, baths_at, (lo, hi) if lo is not None else None, n, g, kappa, refine)
    if all(not r.ok for r in rows):
        raise SolverFailure(f"every sweep point failed, first error: {rows[0].error}")
    return rows


def cmd_sweep(cfg, args) -> Outcome:
    m = _model_cfg(cfg, need_omega_c=False)
    sec = cfg.get("sweep", {})
    lo, hi = sec.get("omega_c_min"), sec.get("omega_c_max")
    if (lo is None) != (hi is None):
        raise ConfigError("config error at sweep: give both omega_c_min and omega_c_max or neither")
    try:
        rows = _run_sweep(
            m["kind"], m["omega_h"], _baths(cfg, m["omega_h"]), m.get("g", 0.0), m.get("kappa", 0.0),
            lo, hi, sec.get("n_points", 101), sec.get("refine_edges", True),
        )  # fmt: skip
    except ValueError as exc:
        raise ConfigError(f"config error at sweep: {exc}") from None
    bad = [v for r in rows for v in row_violations(r)]
    out = Outcome()
    out.checks = {"row_invariants": not bad}
    out.summary = {
        "violations": bad[:10],
        "failed_rows": sum(not r.ok for r in rows),
        "edges": cooling_edges(rows),
        "max_cop": max_cop(rows),
    }
    table = _sweep_rows(rows)
    out.files.append(("sweep.csv", lambda p: write_csv(p, SWEEP_HEADER, table)))
    return out


def cmd_optimize(cfg, args) -> Outcome:
    m = _model_cfg(cfg, need_omega_c=False)
    sec = cfg.get("optimize", {})
    bounds = None
    if "omega_c_min" in sec or "omega_c_max" in sec:
        if not ("omega_c_min" in sec and "omega_c_max" in sec):
            raise ConfigError("config error at optimize: give both omega_c_min and omega_c_max or neither")
        bounds = (sec["omega_c_min"], sec["omega_c_max"])
    try:
        rep = optimize_cooling(
            m["kind"], m["omega_h"], _baths(cfg, m["omega_h"]), m.get("g", 0.0), m.get("kappa", 0.0),
            bounds, sec.get("n_grid", 64), sec.get("xtol", 1e-6),
        )  # fmt: skip
    except NoCoolingWindow as exc:
        raise SolverFailure(str(exc)) from None
    ok, margin = bound_check(rep)
    doc = {"model": m, **rep.to_json(), "bound_margin": margin}
    out = Outcome(summary={"epsilon_star": rep.epsilon_star, "bound": rep.bound, "bound_satisfied": ok})
    out.checks["optimum_not_below_grid"] = rep.q_c_max >= rep.grid_max
    out.files.append(("optimum.json", lambda p: write_json(p, doc)))
    return out


def cmd_repro_fig2(cfg, args) -> Outcome:
    m = cfg.get("model", {"kind": "FourLevel", "omega_h": 6.0})
    wh = m["omega_h"]
    fig = cfg.get("fig2", {})
    g_values = fig.get("g_values", [0.1, 0.3, 0.5])
    open_g = fig.get("open_g", 0.1)
    share_g = fig.get("share_g", 0.1)
    n = fig.get("n_points", 101)
    plain = ConfigBaths.from_config([{k: v for k, v in b.items() if k != "filter"} for b in cfg.get("baths", REFERENCE_BATHS)], wh)
    temps = plain.temperatures()
    eps_c = carnot_cop(temps["w"], temps["h"], temps["c"])
    tracked = ConfigBaths.from_config(
        [
            {**{k: v for k, v in b.items() if k != "filter"},
             **({"filter": {"type": "HighCutoff", "track": "omega_w"}} if b["label"] == "w" else {})}
            for b in cfg.get("baths", REFERENCE_BATHS)
        ],
        wh,
    )  # fmt: skip
    out = Outcome()
    cops = []
    bad = []
    for g in g_values:
        rows = _run_sweep(ModelKind.FOUR_LEVEL, wh, plain, g, 0.0, None, None, n, True)
        bad += [v for r in rows for v in row_violations(r)]
        edges = [r for r in rows if r.tag == "edge"]
        closed = (
            len(cooling_intervals(rows)) == 1
            and len(edges) == 2
            and all(abs(r.q_c) <= 1e-9 * max(abs(x.q_c) for x in rows if x.ok) for r in edges)
            and all(r.cop is not None and abs(r.cop) <= 1e-6 for r in edges)
        )
        out.checks[f"closed_curve_g{g!r}"] = closed
        cops.append(max_cop(rows))
        table = _sweep_rows(rows)
        out.files.append((f"fig2a_closed_g{g!r}.csv", lambda p, t=table: write_csv(p, SWEEP_HEADER, t)))
    if len(g_values) > 1:
        order = np.argsort(g_values)
        out.checks["max_cop_decreasing_in_g"] = all(
            cops[order[i]] > cops[order[i + 1]] for i in range(len(order) - 1)
        )
    rows = _run_sweep(ModelKind.FOUR_LEVEL, wh, tracked, open_g, 0.0, None, None, n, True)
    bad += [v for r in rows for v in row_violations(r)]
    open_max = max_cop(rows)
    out.checks["open_curve_reaches_carnot"] = open_max >= eps_c - 1e-3
    out.checks["open_curve_below_carnot"] = open_max <= eps_c + 1e-9
    table = _sweep_rows(rows)
    out.files.append((f"fig2a_open_g{open_g!r}.csv", lambda p: write_csv(p, SWEEP_HEADER, table)))

    shares = entropy_share_scan(wh, share_g, plain(None), n_points=fig.get("share_points", 201))
    out.checks["leak_share_positive"] = all(r.ds_leak > 0 for r in shares)
    share_rows = [[r.omega_c, r.ds_plus, r.ds_minus, r.ds_leak, r.ds_total] for r in shares]
    out.files.append((f"fig2b_entropy_g{share_g!r}.csv", lambda p: write_csv(p, SHARE_HEADER, share_rows)))
    out.checks["row_invariants"] = not bad
    out.summary = {"max_cop": dict(zip(map(repr, g_values), cops)), "open_max_cop": open_max, "carnot": eps_c}
    return out


HANDLERS = {
    "steady": cmd_steady,
    "breakdown": cmd_breakdown,
    "diagnose": cmd_diagnose,
    "mcwf": cmd_mcwf,
    "sweep": cmd_sweep,
    "optimize": cmd_optimize,
    "repro-fig2": cmd_repro_fig2,
}


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON run configuration")
    common.add_argument("--out", type=Path, default=Path("."), help="output directory (default: .)")
    common.add_argument("--seed", type=int, help="RNG seed, overrides the config")
    common.add_argument("--check", action="store_true", help="run the invariant checks only, write nothing")
    common.add_argument("--quiet", action="store_true", help="no summary on stdout")
    common.add_argument("--dump-channels", action="store_true", help="steady: also write channels.csv")
    p = argparse.ArgumentParser(prog="chiller", description="Quantum absorption chiller toolkit.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common])
    return p


def _say(args, msg):
    if not args.quiet:
        print(msg)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return 1
    t0 = time.perf_counter()
    try:
        if args.config is not None:
            cfg = load_config(args.config)
        elif args.command == "repro-fig2":
            cfg = validate_config({})
        else:
            raise ConfigError("--config is required for this subcommand")
        outcome = HANDLERS[args.command](cfg, args)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except (SolverFailure, SteadyStateError, np.linalg.LinAlgError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 2

    passed = all(outcome.checks.values())
    manifest = {
        "tool": "chiller",
        "version": __version__,
        "subcommand": args.command,
        "config_sha256": config_digest(cfg),
        "seed": outcome.seed,
        "wall_time_s": round(time.perf_counter() - t0, 3),
        "checks": outcome.checks,
        "all_checks_passed": passed,
        "python": platform.python_version(),
        "outputs": [name for name, _ in outcome.files] + ["manifest.json"],
    }
    if args.check:
        _say(args, "\n".join(f"{'PASS' if ok else 'FAIL'} {name}" for name, ok in outcome.checks.items()))
    else:
        args.out.mkdir(parents=True, exist_ok=True)
        for name, writer in outcome.files:
            writer(args.out / name)
        write_json(args.out / "manifest.json", manifest)
        _say(args, f"{args.command}: wrote {len(outcome.files) + 1} file(s) to {args.out}")
        for name, ok in outcome.checks.items():
            _say(args, f"  {'PASS' if ok else 'FAIL'} {name}")
    return 0 if passed else 3


if __name__ == "__main__":
    sys.exit(main())
