"""Method-of-lines integration of the forward and backward Kolmogorov equations.

Spatial operators come from :mod:`levyfpe.generator`.  The local
(drift/diffusion) part is a sparse matrix; the jump part is applied as a
function.  Boundary nodes are held at their initial values, which for
densities that decay inside the domain is the zero-density truncation.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .generator import (GeneratorJump, JumpAdjoint, Policy, Pushforward,
                        adjoint_drift_diffusion_matrix, generator_drift_diffusion_matrix)
from .grid import GridFunction, GridSpec, l1_distance, mass, negativity
from .model import Convention, SdeModel

__all__ = ["Scheme", "SolverConfig", "DensityTrajectory", "StabilityViolation",
           "solve_fpe", "solve_backward_kolmogorov", "write_trajectory_csv",
           "mass", "l1_distance", "negativity", "EXPLICIT_DIFFUSION_LIMIT"]

EXPLICIT_DIFFUSION_LIMIT = 0.4
_GAMMA = 1.0 - 1.0 / math.sqrt(2.0)
_DELTA = 1.0 - 1.0 / (2.0 * _GAMMA)


class StabilityViolation(ArithmeticError):
    """The discrete solution became non-finite or grew without bound."""


class Scheme(enum.Enum):
    EXPLICIT_RK4 = "rk4"
    IMEX = "imex"


@dataclass(frozen=True)
class SolverConfig:
    """Time-stepping parameters.

    ``checkpoints`` lists the output times in ``(0, T]``; ``None`` means the
    final time only.  Each interval between checkpoints is divided into
    equal steps no longer than ``dt``.
    """

    dt: float
    scheme: Scheme = Scheme.IMEX
    policy: Policy = Pushforward()
    renormalize: bool = False
    checkpoints: Optional[Sequence[float]] = None

    def __post_init__(self):
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ValueError(f"dt must be positive, got {self.dt!r}")
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        if self.checkpoints is not None:
            object.__setattr__(self, "checkpoints", tuple(float(c) for c in self.checkpoints))


@dataclass(frozen=True, eq=False)
class DensityTrajectory:
    times: np.ndarray
    frames: tuple
    mass_log: np.ndarray
    extra: dict = field(default_factory=dict)

    @property
    def spec(self) -> GridSpec:
        return self.frames[0].spec

    @property
    def final(self) -> GridFunction:
        return self.frames[-1]

    def negativity_log(self) -> np.ndarray:
        return np.array([negativity(f) for f in self.frames])

    def frame_at(self, t: float) -> GridFunction:
        i = int(np.argmin(np.abs(self.times - t)))
        if not math.isclose(self.times[i], t, rel_tol=1e-9, abs_tol=1e-12):
            raise KeyError(f"no frame stored at t={t}")
        return self.frames[i]


def write_trajectory_csv(traj: DensityTrajectory, path, columns: Optional[dict] = None) -> None:
    """Write ``t,x,p`` rows (time-outer) with 17 significant digits.

    ``columns`` maps extra column names to per-node arrays appended after ``x``.
    """
    spec = traj.spec
    columns = columns or {}
    m, n = len(traj.frames), spec.n
    cols = [np.repeat(traj.times, n), np.tile(spec.nodes, m)]
    cols += [np.tile(np.asarray(v, dtype=float), m) for v in columns.values()]
    cols.append(np.concatenate([f.values for f in traj.frames]))
    header = ",".join(["t", "x", *columns.keys(), "p"])
    np.savetxt(path, np.column_stack(cols), fmt="%.17g", delimiter=",", header=header, comments="")


# ---------------------------------------------------------------------------
# time stepping
# ---------------------------------------------------------------------------


class _Stepper:
    """``du/dt = L(t) u + N(u, t)`` with frozen boundary nodes."""

    def __init__(self, spec: GridSpec, linear: Callable, nonlinear: Callable, autonomous: bool):
        self.n = spec.n
        keep = np.ones(spec.n)
        keep[0] = keep[-1] = 0.0
        self._mask = keep
        self._rowmask = sparse.diags(keep)
        self._linear = linear
        self._nonlinear = nonlinear
        self.autonomous = autonomous
        self._L = {}
        self._lu = {}

    def L(self, t):
        key = 0.0 if self.autonomous else t
        if key not in self._L:
            if len(self._L) > 8:
                self._L.clear()
            self._L[key] = sparse.csr_matrix(self._rowmask @ self._linear(t))
        return self._L[key]

    def N(self, u, t):
        return self._mask * self._nonlinear(u, t)

    def rhs(self, u, t):
        return self.L(t) @ u + self.N(u, t)

    def _solve(self, h, t, b):
        key = (h, 0.0 if self.autonomous else t)
        lu = self._lu.get(key)
        if lu is None:
            if len(self._lu) > 8:
                self._lu.clear()
            a = sparse.identity(self.n, format="csc") - h * self.L(t).tocsc()
            lu = self._lu[key] = splu(a.tocsc())
        return lu.solve(b)

    def imex(self, u, t, dt):
        g = _GAMMA
        n0 = self.N(u, t)
        t2 = t + g * dt
        u2 = self._solve(g * dt, t2, u + g * dt * n0)
        n2 = self.N(u2, t2)
        b = u + dt * (_DELTA * n0 + (1.0 - _DELTA) * n2) + dt * (1.0 - g) * (self.L(t2) @ u2)
        return self._solve(g * dt, t + dt, b)

    def rk4(self, u, t, dt):
        k1 = self.rhs(u, t)
        k2 = self.rhs(u + 0.5 * dt * k1, t + 0.5 * dt)
        k3 = self.rhs(u + 0.5 * dt * k2, t + 0.5 * dt)
        k4 = self.rhs(u + dt * k3, t + dt)
        return u + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _checkpoint_times(T, cfg):
    if not (math.isfinite(T) and T > 0):
        raise ValueError(f"horizon T must be positive, got {T!r}")
    cps = cfg.checkpoints or (T,)
    cps = sorted(set(float(c) for c in cps))
    if cps[0] <= 0 or cps[-1] > T * (1 + 1e-12):
        raise ValueError(f"checkpoints must lie in (0, T={T}]")
    return cps


def _check_explicit_bound(model: SdeModel, spec: GridSpec, cfg: SolverConfig, t=0.0):
    if cfg.scheme is not Scheme.EXPLICIT_RK4 or not model.triplet.A:
        return
    smax = float(np.max(np.abs(model.noise(spec.nodes, t))))
    if smax == 0.0:
        return
    limit = EXPLICIT_DIFFUSION_LIMIT * spec.dx ** 2 / (model.triplet.A * smax ** 2)
    if cfg.dt > limit:
        raise ValueError(f"dt={cfg.dt:g} exceeds the explicit diffusion limit {limit:.3g}; "
                         "reduce dt or use the IMEX scheme")


def _integrate(stepper: _Stepper, u0, T, cfg: SolverConfig):
    times = [0.0]
    states = [u0.copy()]
    scale = 1e12 * max(1.0, float(np.max(np.abs(u0))))
    step = stepper.imex if cfg.scheme is Scheme.IMEX else stepper.rk4
    u, t = u0.copy(), 0.0
    for tb in _checkpoint_times(T, cfg):
        nsteps = max(1, math.ceil((tb - t) / cfg.dt - 1e-9))
        h = (tb - t) / nsteps
        t0 = t
        for i in range(nsteps):
            u = step(u, t, h)
            t = t0 + (i + 1) * h
            if not np.all(np.isfinite(u)) or np.max(np.abs(u)) > scale:
                raise StabilityViolation(f"solution blew up at t={t:.6g}; reduce dt or "
                                         "check the jump policy")
        t = tb
        times.append(tb)
        states.append(u.copy())
    return np.array(times), states


def _trajectory(spec, times, states, renormalize):
    raw = [GridFunction(spec, s) for s in states]
    masses = np.array([mass(f) for f in raw])
    if renormalize:
        raw = [f.with_values(f.values / m) if m > 0 else f for f, m in zip(raw, masses)]
    return DensityTrajectory(times, tuple(raw), masses)


def solve_fpe(model: SdeModel, p0: GridFunction, T: float, cfg: SolverConfig) -> DensityTrajectory:
    """Integrate ``dp/dt = Q* p`` from ``p0`` to ``T``."""
    if model.convention is not Convention.ITO:
        raise ValueError("solve_fpe handles the Itô convention; use marcus.solve_marcus_fpe")
    if negativity(p0) < -1e-12:
        raise ValueError("initial density has negative values")
    m0 = mass(p0)
    if abs(m0 - 1.0) > 1e-6:
        raise ValueError(f"initial density must have unit mass, got {m0:.9g}")
    spec = p0.spec
    _check_explicit_bound(model, spec, cfg)
    jump = JumpAdjoint(model, spec, cfg.policy)
    stepper = _Stepper(spec, lambda t: adjoint_drift_diffusion_matrix(model, spec, t),
                       jump, model.autonomous)
    times, states = _integrate(stepper, p0.values.copy(), T, cfg)
    return _trajectory(spec, times, states, cfg.renormalize)


def solve_backward_kolmogorov(model: SdeModel, phi: GridFunction, T: float,
                              cfg: SolverConfig) -> DensityTrajectory:
    """Integrate ``du/dt = Q u`` with ``u(., 0) = phi``; frames hold ``u(., t)``.

    ``mass_log`` records the trapezoid integral of each frame; it carries no
    conservation meaning here.
    """
    if model.convention is not Convention.ITO:
        raise ValueError("the backward equation is implemented for the Itô convention")
    spec = phi.spec
    _check_explicit_bound(model, spec, cfg)
    jump = GeneratorJump(model, spec)
    stepper = _Stepper(spec, lambda t: generator_drift_diffusion_matrix(model, spec, t),
                       jump, model.autonomous)
    times, states = _integrate(stepper, phi.values.copy(), T, cfg)
    return _trajectory(spec, times, states, False)
