"""Command-line front end: ``levyfpe {validate,solve,simulate,compare,coeffs}``.

Exit codes: 0 success, 1 parse or validation error, 2 numerical failure,
3 a comparison exceeded the scenario tolerance.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, ScenarioConfig, load_config
from .expr import ExpressionError
from .fpe_solver import DensityTrajectory, StabilityViolation, solve_fpe, write_trajectory_csv
from .generator import JumpAdjoint, Series, UnsupportedPolicy
from .grid import GridFunction, l1_distance
from .levy_core import InvalidParameter, MomentDivergent, series_coefficients, validate_jump_measure
from .marcus import FlowBlowup, build_map, solve_marcus_fpe, write_marcus_csv
from .mc_oracle import PathBlowup, simulate_paths, write_samples_csv
from .model import Convention, SigmaVanishes

log = logging.getLogger("levyfpe")

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL, EXIT_TOLERANCE = 0, 1, 2, 3


class ValidationFailed(ValueError):
    pass


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _fmt(v: float) -> str:
    return f"{v:.12g}"


def _coefficient_lines(cfg: ScenarioConfig, K: int):
    """Lines describing ``c_1..c_K``; second value says whether the series exists."""
    try:
        cs = series_coefficients(cfg.triplet(), K)
    except MomentDivergent as exc:
        return [f"c_k divergent for k ≥ {exc.k} {exc.region.value} region; "
                "series policy unavailable, integral policy required"], False
    return [f"c{k} = {_fmt(c)}" for k, c in enumerate(cs, start=1)], True


def _check_runnable(cfg: ScenarioConfig, series_ok: bool) -> None:
    """Reject scenarios whose solver choice cannot work, before any heavy lifting."""
    model = cfg.sde_model()
    policy = cfg.solver_config().policy
    if isinstance(policy, Series) and not series_ok:
        raise ValidationFailed("solver.policy: series policy unavailable for this measure "
                               "(divergent moments); use 'pushforward' or 'integral'")
    if model.convention is Convention.MARCUS:
        try:
            build_map(model, cfg.grid, cfg.solver.base_point)
        except (SigmaVanishes, ValueError) as exc:
            raise ValidationFailed(f"model.sigma: {exc}") from None
    else:
        try:
            JumpAdjoint(model, cfg.grid, policy)
        except UnsupportedPolicy as exc:
            raise ValidationFailed(f"solver.policy: {exc}") from None


def _out_dir(cfg: ScenarioConfig, args) -> Path:
    d = Path(args.out or cfg.output_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _run_fpe(cfg: ScenarioConfig, out: Path):
    model = cfg.sde_model()
    scfg = cfg.solver_config()
    q0 = cfg.initial_density()
    path = out / f"{cfg.name}_fpe.csv"
    if model.convention is Convention.MARCUS:
        traj = solve_marcus_fpe(model, q0, cfg.T, scfg, n_y=cfg.solver.marcus_ny,
                                base_point=cfg.solver.base_point)
        write_marcus_csv(traj, path)
    else:
        traj = solve_fpe(model, q0, cfg.T, scfg)
        write_trajectory_csv(traj, path)
    return traj, path


def _run_mc(cfg: ScenarioConfig, out: Path, threads):
    m = cfg.mc
    res = simulate_paths(cfg.sde_model(), cfg.initial_sampler(), cfg.T, m.dt, m.eps, m.N, m.seed,
                         checkpoints=cfg.times(), threads=threads)
    write_samples_csv(res, out / f"{cfg.name}_samples.csv")
    frames = tuple(res.density(t, cfg.grid) for t in res.checkpoint_times)
    dens = DensityTrajectory(res.checkpoint_times, frames, np.ones(len(frames)))
    write_trajectory_csv(dens, out / f"{cfg.name}_mc_density.csv")
    return res, dens


def _lognormal(cfg: ScenarioConfig, t: float) -> GridFunction:
    """Closed-form law of ``dX = X dt + X dL`` for Brownian ``L`` with drift ``b``."""
    m = cfg.model
    x = cfg.grid.nodes
    mu = math.log(cfg.initial.center) + (1.0 + m.b - 0.5 * m.A) * t
    var = m.A * t
    with np.errstate(divide="ignore", invalid="ignore"):
        v = np.where(x > 0, np.exp(-(np.log(x) - mu) ** 2 / (2 * var)) / (x * math.sqrt(2 * math.pi * var)), 0.0)
    return GridFunction(cfg.grid, v)


def _check_reference(cfg: ScenarioConfig) -> None:
    m = cfg.model
    if cfg.reference == "lognormal" and not (m.f.strip() == "x" and m.sigma.strip() == "x"
                                              and m.measure == "null" and m.A > 0
                                              and cfg.initial.center > 0):
        raise ValidationFailed("compare.reference: the lognormal reference needs f = sigma = x, "
                               "no jumps, A > 0 and a positive initial centre")


def _write_summary(out: Path, cfg: ScenarioConfig, payload: dict) -> Path:
    path = out / "summary.json"
    body = {"scenario": cfg.to_dict(), **payload}
    path.write_text(json.dumps(body, indent=2, sort_keys=True) + "\n")
    return path


def _trajectory_summary(traj: DensityTrajectory) -> dict:
    return {"times": traj.times.tolist(), "mass_log": traj.mass_log.tolist(),
            "negativity": traj.negativity_log().tolist()}


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_validate(args) -> int:
    cfg = load_config(args.config)
    tr = cfg.triplet()
    report = validate_jump_measure(tr.nu)
    print(f"scenario: {cfg.name}")
    print(f"model: f = {cfg.model.f}, sigma = {cfg.model.sigma}, convention = {cfg.model.convention}")
    print(f"triplet: b = {_fmt(tr.b)}, A = {_fmt(tr.A)}, nu = {tr.nu.describe()}")
    print(f"jump measure valid: {report.ok} (inner second moment {_fmt(report.inner_mass2)})")
    lines, ok = _coefficient_lines(cfg, cfg.solver.K)
    print(f"series coefficients (K = {cfg.solver.K}):")
    for line in lines:
        print(f"  {line}")
    if not report.ok:
        raise ValidationFailed(f"model.triplet: {report.detail}")
    _check_runnable(cfg, ok)
    _check_reference(cfg)
    print("valid")
    return EXIT_OK


def cmd_coeffs(args) -> int:
    cfg = load_config(args.config)
    K = args.K or cfg.solver.K
    try:
        cs = series_coefficients(cfg.triplet(), K)
    except MomentDivergent as exc:
        print(f"c_k divergent for k ≥ {exc.k} {exc.region.value} region; "
              "series policy unavailable, integral policy required")
        return EXIT_OK
    print(f"{'k':>3}  c_k")
    for k, c in enumerate(cs, start=1):
        print(f"{k:>3}  {c:.17g}")
    return EXIT_OK


def cmd_solve(args) -> int:
    cfg = load_config(args.config)
    _check_runnable(cfg, _coefficient_lines(cfg, cfg.solver.K)[1])
    out = _out_dir(cfg, args)
    t0 = time.perf_counter()
    traj, path = _run_fpe(cfg, out)
    runtime = time.perf_counter() - t0
    summary = {"command": "solve", "trajectory_csv": path.name, "runtime_s": runtime,
               **_trajectory_summary(traj)}
    _write_summary(out, cfg, summary)
    print(f"wrote {path}")
    for t, m, neg in zip(traj.times, traj.mass_log, summary["negativity"]):
        print(f"  t = {t:.6g}  mass = {m:.12f}  negativity = {neg:.3g}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = _with_seed(cfg, args.seed)
    out = _out_dir(cfg, args)
    t0 = time.perf_counter()
    res, dens = _run_mc(cfg, out, args.threads)
    summary = {"command": "simulate", "runtime_s": time.perf_counter() - t0,
               "times": res.checkpoint_times.tolist(), "blown_fraction": res.blown_fraction,
               "mean": [float(np.mean(s)) for s in res.samples]}
    _write_summary(out, cfg, summary)
    print(f"wrote {out / (cfg.name + '_samples.csv')} and {out / (cfg.name + '_mc_density.csv')}")
    for t, mu in zip(summary["times"], summary["mean"]):
        print(f"  t = {t:.6g}  sample mean = {mu:.8g}")
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = _with_seed(cfg, args.seed)
    _check_runnable(cfg, _coefficient_lines(cfg, cfg.solver.K)[1])
    _check_reference(cfg)
    out = _out_dir(cfg, args)
    t0 = time.perf_counter()
    traj, _ = _run_fpe(cfg, out)
    res, dens = _run_mc(cfg, out, args.threads)
    rows = []
    ok = True
    for t in res.checkpoint_times:
        row = {"t": float(t), "l1_fpe_mc": l1_distance(traj.frame_at(t), dens.frame_at(t))}
        if cfg.reference == "lognormal":
            exact = _lognormal(cfg, t)
            row["l1_fpe_reference"] = l1_distance(traj.frame_at(t), exact)
            row["l1_mc_reference"] = l1_distance(dens.frame_at(t), exact)
        row["pass"] = all(v <= cfg.tolerance for k, v in row.items() if k.startswith("l1"))
        ok &= row["pass"]
        rows.append(row)
    summary = {"command": "compare", "runtime_s": time.perf_counter() - t0,
               "tolerance": cfg.tolerance, "checkpoints": rows, "pass": ok,
               "blown_fraction": res.blown_fraction, **_trajectory_summary(traj)}
    _write_summary(out, cfg, summary)
    for row in rows:
        extra = "".join(f"  {k} = {v:.4g}" for k, v in row.items() if k.startswith("l1") and k != "l1_fpe_mc")
        print(f"t = {row['t']:.6g}  L1(FPE, MC) = {row['l1_fpe_mc']:.4g}{extra}  "
              f"[{'pass' if row['pass'] else 'FAIL'} at {cfg.tolerance:g}]")
    return EXIT_OK if ok else EXIT_TOLERANCE


def _with_seed(cfg: ScenarioConfig, seed: int) -> ScenarioConfig:
    import dataclasses
    if seed < 0:
        raise ValidationFailed("--seed must be non-negative")
    return dataclasses.replace(cfg, mc=dataclasses.replace(cfg.mc, seed=seed))


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="levyfpe", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=False, threads=False, out=False):
        p.add_argument("--config", required=True, metavar="PATH", help="scenario file (.toml or .json)")
        if out:
            p.add_argument("--out", metavar="DIR", help="output directory (overrides outputs.directory)")
        if seed:
            p.add_argument("--seed", type=int, metavar="U64", help="Monte Carlo seed (overrides mc.seed)")
        if threads:
            p.add_argument("--threads", type=int, metavar="N", help="Monte Carlo worker threads")
        return p

    common(sub.add_parser("validate", help="check a scenario and print its series coefficients"))
    common(sub.add_parser("solve", help="solve the forward equation"), out=True)
    common(sub.add_parser("simulate", help="run the Monte Carlo oracle"), seed=True, threads=True, out=True)
    common(sub.add_parser("compare", help="solver vs Monte Carlo L1 distances"),
           seed=True, threads=True, out=True)
    p = common(sub.add_parser("coeffs", help="print the series coefficients c_k"))
    p.add_argument("--K", type=int, help="number of coefficients (default: solver.K)")
    return parser


_COMMANDS = {"validate": cmd_validate, "solve": cmd_solve, "simulate": cmd_simulate,
             "compare": cmd_compare, "coeffs": cmd_coeffs}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    if getattr(args, "threads", None) is not None and args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_INVALID
    try:
        return _COMMANDS[args.command](args)
    except (StabilityViolation, FlowBlowup, PathBlowup, MomentDivergent, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, ExpressionError, InvalidParameter, SigmaVanishes, UnsupportedPolicy,
            ValidationFailed, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
