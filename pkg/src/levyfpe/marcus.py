"""Marcus-convention machinery: jump flow, Lamperti transform and the Marcus FPE.

Under the Marcus convention a jump of size ``r`` moves the state along the
flow of ``dy/dz = r sigma(y)`` for unit time.  The Lamperti map
``H(x) = int du / sigma(u)`` straightens that flow: ``Y = H(X)`` solves an
additive SDE with drift ``f(H^-1(y)) / sigma(H^-1(y))`` driven by the same
Lévy process, so its density obeys the additive forward equation.  The
density of ``X`` follows by the change of variables ``q(x) = p_Y(H(x)) / |sigma(x)|``.
"""
from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import integrate

from .fpe_solver import DensityTrajectory, SolverConfig, solve_fpe, write_trajectory_csv
from .generator import IntegralAdditive, _additive_values
from .grid import GridFunction, GridSpec, SplineField, first_derivative_matrix, mass
from .levy_core import DiracAtOne, LevyTriplet, NullMeasure
from .model import Convention, SdeModel, SigmaVanishes
from .quadrature import MonotoneTable

__all__ = ["FlowBlowup", "MonotoneMap", "marcus_flow", "lamperti", "transformed_drift",
           "solve_marcus_fpe", "marcus_jump_term", "marcus_rhs_direct", "write_marcus_csv",
           "FLOW_BOUND"]

log = logging.getLogger(__name__)

FLOW_BOUND = 1e8


class FlowBlowup(ArithmeticError):
    """The jump flow left the configured magnitude bound before ``z = 1``."""


def flow_batch(r, sigma: Callable, x, bound: float = FLOW_BOUND, tol: float = 1e-10):
    """Time-one flow for arrays ``r`` and ``x``; returns ``(y, blown)``.

    Components that reach ``bound`` are frozen there and flagged in ``blown``.
    """
    r = np.asarray(r, dtype=float).ravel()
    x = np.asarray(x, dtype=float).ravel()
    r, x = np.broadcast_arrays(r, x)
    y = x.astype(float).copy()
    if y.size == 0:
        return y, np.zeros(0, dtype=bool)
    moving = (r != 0.0) & (np.abs(x) < bound)
    if np.any(moving):
        rm = r[moving]

        def field(z, v):
            inside = np.abs(v) < bound
            return np.where(inside, rm * np.asarray(sigma(np.clip(v, -bound, bound)), dtype=float), 0.0)

        sol = integrate.solve_ivp(field, (0.0, 1.0), y[moving], method="RK45",
                                  rtol=tol, atol=tol, vectorized=False)
        if not sol.success:
            raise FlowBlowup(f"jump flow integration failed: {sol.message}")
        y[moving] = sol.y[:, -1]
    blown = ~np.isfinite(y) | (np.abs(y) >= bound)
    return y, blown


def marcus_flow(r, sigma: Callable, x, bound: float = FLOW_BOUND):
    """``xi(r, sigma, x)``: solution at ``z = 1`` of ``dy/dz = r sigma(y)``, ``y(0) = x``.

    Scalars in, scalar out; arrays are handled element-wise.
    """
    scalar = np.ndim(r) == 0 and np.ndim(x) == 0
    shape = np.broadcast(np.asarray(r), np.asarray(x)).shape
    y, blown = flow_batch(r, sigma, x, bound)
    if np.any(blown):
        raise FlowBlowup(f"jump flow exceeded |y| = {bound:g} before z = 1")
    return float(y[0]) if scalar else y.reshape(shape)


# ---------------------------------------------------------------------------
# Lamperti transform
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class MonotoneMap:
    """Tabulated Lamperti map ``H`` on a grid together with its inverse."""

    spec: GridSpec
    values: np.ndarray
    base_point: float
    sigma_nodes: np.ndarray
    affine: Optional[float] = None
    _table: Optional[MonotoneTable] = None

    @property
    def increasing(self) -> bool:
        return bool(self.values[-1] > self.values[0])

    @property
    def y_range(self):
        return float(min(self.values[0], self.values[-1])), float(max(self.values[0], self.values[-1]))

    def forward(self, x):
        x = np.asarray(x, dtype=float)
        if self.affine is not None:
            return (x - self.base_point) / self.affine
        return self._table.forward(x)

    def inverse(self, y):
        y = np.asarray(y, dtype=float)
        if self.affine is not None:
            return self.base_point + self.affine * y
        return self._table.inverse(y)


def _simpson_cumulative(g, spec: GridSpec, sub: int = 4):
    """Cumulative integral of ``g`` from ``x_min`` to each node, composite Simpson."""
    h = spec.dx / sub
    x = spec.x_min + h * np.arange((spec.n - 1) * sub + 1)
    # sub is even: Simpson on each cell
    vals = g(x)
    cells = vals[:-1].reshape(spec.n - 1, sub)
    ends = vals[sub::sub]
    odd = cells[:, 1::2].sum(axis=1)
    even = cells[:, 2::2].sum(axis=1)
    per_cell = h / 3.0 * (cells[:, 0] + 4.0 * odd + 2.0 * even + ends)
    return np.concatenate([[0.0], np.cumsum(per_cell)])


def _default_base(spec: GridSpec) -> float:
    return 0.0 if spec.x_min <= 0.0 <= spec.x_max else 0.5 * (spec.x_min + spec.x_max)


def lamperti(sigma: Callable, spec: GridSpec, base_point: Optional[float] = None,
             sigma_constant: Optional[float] = None) -> MonotoneMap:
    """``H(x) = int_{base}^{x} du / sigma(u)`` tabulated on ``spec``.

    ``sigma`` takes a single array argument.  ``sigma_constant`` selects the
    exact affine map.  ``base_point`` defaults to 0 when it lies in the grid
    and to the grid midpoint otherwise; for constant ``sigma`` it defaults to 0.
    """
    x = spec.nodes
    if sigma_constant is not None:
        c = float(sigma_constant)
        if abs(c) < 1e-12:
            raise SigmaVanishes("sigma is identically zero")
        base = 0.0 if base_point is None else float(base_point)
        m = MonotoneMap(spec, (x - base) / c, base, np.full(spec.n, c), affine=c)
        return m
    base = _default_base(spec) if base_point is None else float(base_point)
    if not spec.x_min <= base <= spec.x_max:
        raise ValueError(f"base point {base} lies outside the grid [{spec.x_min}, {spec.x_max}]")
    s = np.asarray(sigma(x), dtype=float) * np.ones(spec.n)
    if np.any(np.abs(s) < 1e-12):
        raise SigmaVanishes("sigma vanishes on the grid; restrict the grid to one sign component")
    if np.any(s > 0) and np.any(s < 0):
        raise SigmaVanishes("sigma changes sign on the grid")
    inv = lambda u: 1.0 / np.asarray(sigma(u), dtype=float)
    H = _simpson_cumulative(inv, spec)
    # shift so that H(base) = 0, integrating from the nearest node to the base point
    j = int(np.clip(round((base - spec.x_min) / spec.dx), 0, spec.n - 1))
    u = np.linspace(x[j], base, 17)
    H = H - (H[j] + integrate.simpson(inv(u), x=u))
    table = MonotoneTable(x, H, 1.0 / s)
    return MonotoneMap(spec, H, base, s, None, table)


def transformed_drift(f: Callable, sigma: Callable, hmap: MonotoneMap) -> Callable:
    """``f~(y, t) = f(H^-1(y), t) / sigma(H^-1(y))``.

    ``y`` outside the tabulated range is clamped to it, with a logged warning.
    """
    lo, hi = hmap.y_range

    def ftilde(y, t=0.0):
        y = np.asarray(y, dtype=float)
        yc = np.clip(y, lo, hi)
        if hmap.affine is None and np.any(yc != y):
            log.warning("transformed drift evaluated outside [%g, %g]; clamped", lo, hi)
        xs = hmap.inverse(yc)
        return np.asarray(f(xs, t), dtype=float) / np.asarray(sigma(xs), dtype=float)

    return ftilde


# ---------------------------------------------------------------------------
# Marcus forward equation
# ---------------------------------------------------------------------------


def _resample(spec: GridSpec, values, z):
    """Spline values at ``z``; exact node values when ``z`` is the node array itself."""
    z = np.asarray(z, dtype=float)
    if z.shape == (spec.n,) and np.array_equal(z, spec.nodes):
        return np.array(values, dtype=float)
    return SplineField(spec, values)(z)


def _y_grid(hmap: MonotoneMap, n_y: int) -> GridSpec:
    lo, hi = hmap.y_range
    if hmap.affine is not None and hmap.affine == 1.0 and hmap.base_point == 0.0 and n_y == hmap.spec.n:
        return hmap.spec
    return GridSpec(lo, hi, n_y)


def _sigma1(model: SdeModel):
    return lambda u: model.noise(u, 0.0)


def build_map(model: SdeModel, spec: GridSpec, base_point=None) -> MonotoneMap:
    model.check_marcus(spec.nodes)
    return lamperti(_sigma1(model), spec, base_point, model.sigma_constant)


def solve_marcus_fpe(model: SdeModel, q0: GridFunction, T: float, cfg: SolverConfig,
                     n_y: Optional[int] = None, base_point: Optional[float] = None) -> DensityTrajectory:
    """Density of a Marcus SDE, solved in Lamperti coordinates and pulled back.

    The returned trajectory lives on the x-grid of ``q0``; ``extra`` carries
    the map (``"map"``), the transformed-coordinate trajectory
    (``"y_trajectory"``) and the node values ``H(x)`` (``"y"``).
    """
    if model.convention is not Convention.MARCUS:
        raise ValueError("solve_marcus_fpe expects a Marcus-convention model")
    spec = q0.spec
    hmap = build_map(model, spec, base_point)
    yspec = _y_grid(hmap, n_y or spec.n)
    y = yspec.nodes
    xs = hmap.inverse(y)
    sig_nodes = model.noise(xs)
    pY0 = _resample(spec, q0.values, xs) * np.abs(sig_nodes)
    pY0 = np.where(np.isfinite(pY0), pY0, 0.0)
    ftilde = transformed_drift(model.f, _sigma1(model), hmap)
    ymodel = SdeModel(ftilde, lambda u, t: np.ones_like(u), model.triplet, Convention.ITO,
                      autonomous=model.autonomous, sigma_constant=1.0)
    ycfg = dataclasses.replace(cfg, policy=IntegralAdditive(), renormalize=False)
    ytraj = solve_fpe(ymodel, GridFunction(yspec, pY0), T, ycfg)
    Hx = hmap.values if hmap.affine is None else hmap.forward(spec.nodes)
    sig_x = np.abs(model.noise(spec.nodes))
    frames = []
    for fy in ytraj.frames:
        frames.append(GridFunction(spec, _resample(yspec, fy.values, Hx) / sig_x))
    masses = np.array([mass(fr) for fr in frames])
    if cfg.renormalize:
        frames = [fr.with_values(fr.values / m) if m > 0 else fr for fr, m in zip(frames, masses)]
    return DensityTrajectory(ytraj.times, tuple(frames), masses,
                             {"map": hmap, "y_trajectory": ytraj, "y": np.asarray(Hx)})


def write_marcus_csv(traj: DensityTrajectory, path) -> None:
    """``t,x,y,p`` rows with ``y = H(x)``."""
    write_trajectory_csv(traj, path, {"y": traj.extra["y"]})


# ---------------------------------------------------------------------------
# direct evaluation of the Marcus right-hand side
# ---------------------------------------------------------------------------


def marcus_jump_term(model: SdeModel, q: GridFunction, hmap: Optional[MonotoneMap] = None,
                     n_y: Optional[int] = None) -> GridFunction:
    """``int [(sigma q)(H^-1(H(x) - r)) - (sigma q)(x) + 1{|r|<1} r sigma d(sigma q)] nu(dr)``.

    This is the jump term of the Marcus equation written for ``sigma dq/dt``.
    Point masses are applied through the inverse map directly; continuous
    measures through the additive kernel on a uniform grid in ``y = H(x)``.
    """
    spec = q.spec
    hmap = hmap or build_map(model, spec)
    nu = model.triplet.nu
    sigma_q = hmap.sigma_nodes * q.values
    if isinstance(nu, NullMeasure):
        return q.with_values(np.zeros(spec.n))
    Hx = hmap.values if hmap.affine is None else hmap.forward(spec.nodes)
    if isinstance(nu, DiracAtOne):
        lo, hi = hmap.y_range
        target = Hx - 1.0
        inside = (target >= lo) & (target <= hi)
        src = np.zeros(spec.n)
        src[inside] = _resample(spec, sigma_q, hmap.inverse(target[inside]))
        return q.with_values(nu.lam * (src - sigma_q))
    yspec = _y_grid(hmap, n_y or spec.n)
    g = _resample(spec, sigma_q, hmap.inverse(yspec.nodes))
    out_y = _additive_values(nu, yspec, np.where(np.isfinite(g), g, 0.0))
    return q.with_values(_resample(yspec, out_y, Hx))


def marcus_rhs_direct(model: SdeModel, q: GridFunction, hmap: Optional[MonotoneMap] = None) -> GridFunction:
    """``dq/dt`` of the Marcus equation evaluated directly on the x-grid."""
    spec = q.spec
    hmap = hmap or build_map(model, spec)
    x = spec.nodes
    s = hmap.sigma_nodes
    D = first_derivative_matrix(spec.n, spec.dx)
    tr: LevyTriplet = model.triplet
    sq = s * q.values
    rhs = -s * (D @ (model.drift(x) * q.values)) - tr.b * s * (D @ sq)
    if tr.A:
        rhs += 0.5 * tr.A * s * (D @ (s * (D @ sq)))
    rhs += marcus_jump_term(model, q, hmap).values
    return q.with_values(rhs / s)
