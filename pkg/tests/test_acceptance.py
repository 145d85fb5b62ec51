"""Acceptance criteria, one test per criterion.

Each test prints a single ``criterion N: PASS|FAIL ...`` line, visible in the
terminal even when pytest captures output.  Criteria that cannot be met are
evaluated at their stated tolerance and left failing.
"""
import math
import time
from pathlib import Path

import numpy as np
import pytest

from levyfpe import cli
from levyfpe.config import load_config
from levyfpe.fpe_solver import SolverConfig, solve_backward_kolmogorov, solve_fpe
from levyfpe.generator import (IntegralAdditive, adjoint_pairing_residual,
                               apply_adjoint_jump_integral_additive, apply_adjoint_jump_series)
from levyfpe.grid import GridFunction, GridSpec, l1_distance, trapezoid_weights
from levyfpe.levy_core import DiracAtOne, GaussianCompoundPoisson, LevyTriplet, series_coefficients
from levyfpe.marcus import marcus_jump_term, solve_marcus_fpe
from levyfpe.mc_oracle import simulate_paths
from levyfpe.model import Convention, SdeModel

from conftest import additive, gaussian, gbm_density, linear, multiplicative

SCENARIOS = Path(__file__).resolve().parents[1] / "src" / "levyfpe" / "scenarios"


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
        return ok
    return emit


def scenario(name):
    return load_config(SCENARIOS / f"{name}.toml")


def run_fpe(cfg):
    model = cfg.sde_model()
    kw = dict(n_y=cfg.solver.marcus_ny, base_point=cfg.solver.base_point)
    if model.convention is Convention.MARCUS:
        return solve_marcus_fpe(model, cfg.initial_density(), cfg.T, cfg.solver_config(), **kw)
    return solve_fpe(model, cfg.initial_density(), cfg.T, cfg.solver_config())


def run_mc(cfg, t):
    m = cfg.mc
    res = simulate_paths(cfg.sde_model(), cfg.initial_sampler(), cfg.T, m.dt, m.eps, m.N, m.seed,
                         checkpoints=cfg.times())
    return res.density(t, cfg.grid)


def test_criterion_1_adjoint_duality(report):
    t0 = time.perf_counter()
    cases = {
        "example1": (multiplicative(LevyTriplet(0.0, 1.0, DiracAtOne(1.0))), GridSpec(0.01, 10.0, 1024),
                     (2.0, 1.5), (1.5, 0.2)),
        "example2": (multiplicative(LevyTriplet(0.0, 0.0, GaussianCompoundPoisson(1.0))),
                     GridSpec(-10.0, 10.0, 1024), (0.5, 1.5), (0.75, 0.3)),
    }
    res = {k: adjoint_pairing_residual(m, gaussian(s, *phi), gaussian(s, *p)) for k, (m, s, phi, p) in cases.items()}
    elapsed = time.perf_counter() - t0
    ok = all(r <= 1e-4 for r in res.values()) and elapsed <= 10.0
    detail = ", ".join(f"{k} residual {v:.2e}" for k, v in res.items())
    assert report(1, ok, f"{detail} (tol 1e-4), {elapsed:.2f}s")


def test_criterion_2_series_vs_integral(report):
    spec = GridSpec(-20.0, 20.0, 801)
    rows, ok = [], True
    for nu in (DiracAtOne(1.0), GaussianCompoundPoisson(1.0)):
        model = additive(LevyTriplet(0.0, 0.0, nu))
        for width in (1.0, 1.5, 2.0):
            p = gaussian(spec, 0.0, width)
            series = apply_adjoint_jump_series(model, p, K=12).values
            err = np.max(np.abs(series - apply_adjoint_jump_integral_additive(model.triplet, p).values))
            ok &= err <= 1e-4
            rows.append(f"{type(nu).__name__} w={width:g}: {err:.1e}")
    assert report(2, ok, "; ".join(rows) + " (tol 1e-4)")


def test_criterion_3_example1_coefficients(report):
    worst = 0.0
    for lam in (0.5, 1.0, 2.0, 7.3):
        cs = series_coefficients(LevyTriplet(0.0, 1.0, DiracAtOne(lam)), 8)
        expected = [lam * (-1) ** k / math.factorial(k) + (0.5 if k == 2 else 0.0) for k in range(1, 9)]
        worst = max(worst, float(np.max(np.abs(np.array(cs) - expected))))
    assert report(3, worst <= 1e-12, f"max |c_k - expected| = {worst:.1e} over 4 rates, k <= 8 (tol 1e-12)")


def _gbm_errors(n):
    spec = GridSpec(0.05, 8.0, n)
    model = multiplicative(LevyTriplet(0.0, 1.0))
    p0 = gaussian(spec, 1.0, 0.05)
    p0 = p0.with_values(p0.values / (trapezoid_weights(spec) @ p0.values))
    p = solve_fpe(model, p0, 0.5, SolverConfig(dt=1e-3)).final
    exact = GridFunction(spec, gbm_density(spec.nodes, 0.5))
    return float(np.max(np.abs(p.values - exact.values))), l1_distance(p, exact)


def test_criterion_4_gaussian_limit(report):
    t0 = time.perf_counter()
    linf, l1 = _gbm_errors(1024)
    coarse, _ = _gbm_errors(512)
    ratio = coarse / linf
    elapsed = time.perf_counter() - t0
    ok = linf <= 1e-2 and l1 <= 0.03 and ratio >= 3 and elapsed <= 60
    assert report(4, ok, f"Linf {linf:.2e} (tol 1e-2), L1 {l1:.2e} (tol 0.03), "
                         f"dx-halving ratio {ratio:.2f} (need >= 3), {elapsed:.1f}s")


@pytest.mark.slow
def test_criterion_5_fpe_vs_monte_carlo(report):
    t0 = time.perf_counter()
    rows, ok = [], True
    for name in ("example1_ito", "example2_ito"):
        cfg = scenario(name)
        assert cfg.mc.N == 100_000
        d = l1_distance(run_fpe(cfg).frame_at(0.3), run_mc(cfg, 0.3))
        ok &= d <= 0.05
        rows.append(f"{name} L1 {d:.4f}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed <= 300
    assert report(5, ok, "; ".join(rows) + f" (tol 0.05, N=1e5), {elapsed:.1f}s")


@pytest.mark.slow
def test_criterion_6_marcus(report):
    # (a) unit noise intensity: Marcus and Itô agree bit for bit
    spec = GridSpec(-12.0, 12.0, 1024)
    same = True
    for nu in (DiracAtOne(1.0), GaussianCompoundPoisson(1.0)):
        ito = additive(LevyTriplet(0.2, 0.5, nu), f=lambda x, t=0.0: -x)
        mar = ito.with_convention(Convention.MARCUS)
        p0 = gaussian(spec, 1.0, 0.3)
        cfg = SolverConfig(dt=1e-3, checkpoints=[0.15, 0.3])
        a, b = solve_fpe(ito, p0, 0.3, cfg), solve_marcus_fpe(mar, p0, 0.3, cfg)
        same &= all(np.array_equal(x.values, y.values) for x, y in zip(a.frames, b.frames))
        kw = dict(x0=1.0, T=0.3, dt=1e-3, eps=0.1, N=20_000, seed=17)
        same &= np.array_equal(simulate_paths(ito, **kw).samples, simulate_paths(mar, **kw).samples)
    # (b) Example 1 in the Marcus convention against Marcus Monte Carlo
    cfg = scenario("example1_marcus")
    d = l1_distance(run_fpe(cfg).frame_at(0.3), run_mc(cfg, 0.3))
    # (c) direct jump term against its closed form
    spec = GridSpec(0.02, 20.0, 2048)
    lam = 1.0
    model = SdeModel(linear, linear, LevyTriplet(0.0, 1.0, DiracAtOne(lam)), Convention.MARCUS, True)
    qf = lambda x: np.exp(-(np.log(x) - 0.5) ** 2 / 0.5) / x
    x = spec.nodes
    exact = lam * (x / math.e * qf(x / math.e) * (x / math.e >= spec.x_min) - x * qf(x))
    jump_err = float(np.max(np.abs(marcus_jump_term(model, GridFunction(spec, qf(x))).values - exact)))
    ok = same and d <= 0.05 and jump_err <= 1e-4
    assert report(6, ok, f"(a) bitwise equal {same}; (b) L1 {d:.4f} (tol 0.05); "
                         f"(c) jump term error {jump_err:.1e} (tol 1e-4)")


@pytest.mark.slow
def test_criterion_7_mass_and_positivity(report):
    rows, ok = [], True
    for path in sorted(SCENARIOS.glob("*.toml")):
        cfg = load_config(path)
        assert not cfg.solver.renormalize
        traj = run_fpe(cfg)
        dm = float(np.max(np.abs(traj.mass_log - 1)))
        neg = float(np.min(traj.negativity_log()))
        ok &= dm <= 1e-3 and neg >= -1e-3
        rows.append(f"{cfg.name} |dm| {dm:.1e} neg {neg:.1e}")
    assert report(7, ok, "; ".join(rows) + " (tol 1e-3)")


def test_criterion_8_example3(report, tmp_path, capsys):
    flagged = True
    for alpha in (0.5, 1.5):
        path = tmp_path / f"e3_{alpha}.toml"
        text = (SCENARIOS / "example1_ito.toml").read_text()
        text = text.replace('preset = "example1"', 'preset = "example3"').replace("lambda = 1.0", f"alpha = {alpha}")
        path.write_text(text)
        code = cli.main(["validate", "--config", str(path)])
        out = capsys.readouterr().out
        flagged &= code == 0 and "series policy unavailable, integral policy required" in out
    cfg = scenario("example3_additive")
    model, spec = cfg.sde_model(), cfg.grid
    resid = adjoint_pairing_residual(model, gaussian(spec, 0.5, 2.0), gaussian(spec, 0.0, 0.5),
                                     policy=IntegralAdditive())
    dm = float(np.max(np.abs(run_fpe(cfg).mass_log - 1)))
    ok = flagged and resid <= 1e-3 and dm <= 1e-3
    assert report(8, ok, f"divergence reported for alpha 0.5, 1.5: {flagged}; additive duality "
                         f"{resid:.1e} (tol 1e-3); |dm| {dm:.1e} (tol 1e-3)")


def test_criterion_9_backward_forward(report):
    spec = GridSpec(0.01, 32.0, 2048)
    model = multiplicative(LevyTriplet(0.0, 1.0, DiracAtOne(1.0)))
    w = trapezoid_weights(spec)
    p0, phi = gaussian(spec, 1.0, 0.1), gaussian(spec, 2.0, 1.0, normalise=False)
    cfg = SolverConfig(dt=1e-3)
    lhs = w @ (phi.values * solve_fpe(model, p0, 0.25, cfg).final.values)
    rhs = w @ (solve_backward_kolmogorov(model, phi, 0.25, cfg).final.values * p0.values)
    assert report(9, abs(lhs - rhs) <= 1e-3, f"<phi, p_t> = {lhs:.12f}, <u_t, p_0> = {rhs:.12f}, "
                                             f"diff {abs(lhs - rhs):.1e} (tol 1e-3)")
