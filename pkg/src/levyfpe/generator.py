"""Generator ``Q`` of an Itô SDE and its adjoint ``Q* = A1* + A2*`` on a uniform grid.

The jump part of the adjoint can be discretised three ways, selected by a
policy object:

``Series(K)``
    truncated Kramers-Moyal expansion ``sum_k m_k d^k(sigma^k p)``; needs
    finite moments.
``IntegralAdditive()``
    the nonlocal convolution form, valid for ``sigma == 1`` only.
``Pushforward()``
    the nonlocal form for general ``sigma``: the density arriving at ``x``
    is gathered from the pre-jump states that map onto ``x``.

The generator itself is always evaluated from its defining integral by a
quadrature that is independent of the adjoint discretisations, so the
pairing residual is a genuine consistency check.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy import sparse, special

from .grid import (GridFunction, GridSpec, SplineField, first_derivative_matrix,
                   second_derivative_matrix, trapezoid_weights)
from .levy_core import (DiracAtOne, Divergent, GaussianCompoundPoisson, LevyTriplet,
                        MomentDivergent, MomentRegion, NullMeasure, SymmetricAlphaStable,
                        jump_moment)
from .model import Convention, SdeModel
from .quadrature import MonotoneTable, additive_kernel, y_quadrature

__all__ = [
    "Series", "IntegralAdditive", "Pushforward", "Policy", "GridTooCoarseWarning",
    "UnsupportedPolicy", "MAX_SERIES_ORDER",
    "apply_generator", "apply_adjoint_drift_diffusion", "apply_adjoint_jump_series",
    "apply_adjoint_jump_integral_additive", "apply_adjoint_jump_pushforward",
    "apply_fpe_rhs", "adjoint_pairing_residual", "JumpAdjoint", "GeneratorJump",
    "adjoint_drift_diffusion_matrix", "generator_drift_diffusion_matrix",
]

MAX_SERIES_ORDER = 12


class GridTooCoarseWarning(UserWarning):
    """Typical jumps displace the state by more than the grid span."""


class UnsupportedPolicy(ValueError):
    """The requested jump discretisation does not apply to this model."""


@dataclass(frozen=True)
class Series:
    K: int = 8

    def __post_init__(self):
        if int(self.K) != self.K or self.K < 1:
            raise ValueError(f"series order must be a positive integer, got {self.K!r}")
        if self.K > MAX_SERIES_ORDER:
            raise ValueError(f"series order {self.K} exceeds the supported maximum "
                             f"{MAX_SERIES_ORDER} (stencil accuracy floor)")


@dataclass(frozen=True)
class IntegralAdditive:
    pass


@dataclass(frozen=True)
class Pushforward:
    pass


Policy = Union[Series, IntegralAdditive, Pushforward]


def _require_ito(model: SdeModel) -> None:
    if model.convention is not Convention.ITO:
        raise ValueError("operator is defined for the Itô convention; "
                         "Marcus models are handled by levyfpe.marcus")


def _is_unit_sigma(model: SdeModel, x, t) -> bool:
    if model.sigma_constant is not None:
        return model.sigma_constant == 1.0
    return bool(np.all(model.noise(x, t) == 1.0))


def _constant_sigma(model: SdeModel, x, t):
    if model.sigma_constant is not None:
        return float(model.sigma_constant)
    s = model.noise(x, t)
    return float(s[0]) if np.all(s == s[0]) else None


def _check_reach(model: SdeModel, spec: GridSpec, t) -> None:
    nu = model.triplet.nu
    if isinstance(nu, DiracAtOne):
        typical = 1.0
    elif isinstance(nu, GaussianCompoundPoisson):
        typical = 3.0
    else:
        return
    # warn only when even the smallest typical displacement leaves the grid
    reach = typical * float(np.min(np.abs(model.noise(spec.nodes, t))))
    if reach > spec.span:
        warnings.warn(f"typical jumps move the state by at least {reach:.3g}, "
                      f"more than the grid span {spec.span:.3g}",
                      GridTooCoarseWarning, stacklevel=3)


# ---------------------------------------------------------------------------
# continuous part
# ---------------------------------------------------------------------------


def adjoint_drift_diffusion_matrix(model: SdeModel, spec: GridSpec, t=0.0) -> sparse.csr_matrix:
    """Matrix of ``p -> -d[(f + b sigma) p] + (A/2) d^2(sigma^2 p)``."""
    x = spec.nodes
    tr = model.triplet
    D = first_derivative_matrix(spec.n, spec.dx)
    sig = model.noise(x, t)
    m = -(D @ sparse.diags(model.drift(x, t) + tr.b * sig))
    if tr.A:
        m = m + (0.5 * tr.A) * (second_derivative_matrix(spec.n, spec.dx) @ sparse.diags(sig * sig))
    return sparse.csr_matrix(m)


def generator_drift_diffusion_matrix(model: SdeModel, spec: GridSpec, t=0.0) -> sparse.csr_matrix:
    """Matrix of ``phi -> (f + b sigma) phi' + (A/2) sigma^2 phi''``."""
    x = spec.nodes
    tr = model.triplet
    sig = model.noise(x, t)
    m = sparse.diags(model.drift(x, t) + tr.b * sig) @ first_derivative_matrix(spec.n, spec.dx)
    if tr.A:
        m = m + sparse.diags(0.5 * tr.A * sig * sig) @ second_derivative_matrix(spec.n, spec.dx)
    return sparse.csr_matrix(m)


def apply_adjoint_drift_diffusion(model: SdeModel, p: GridFunction, t=0.0) -> GridFunction:
    _require_ito(model)
    return p.with_values(adjoint_drift_diffusion_matrix(model, p.spec, t) @ p.values)


# ---------------------------------------------------------------------------
# jump part of the generator
# ---------------------------------------------------------------------------


class GeneratorJump:
    """``phi -> int [phi(x + y sigma) - phi - 1{|y|<1} y sigma phi'] nu(dy)`` on a grid."""

    def __init__(self, model: SdeModel, spec: GridSpec):
        self.model = model
        self.spec = spec

    def __call__(self, phi: np.ndarray, t=0.0) -> np.ndarray:
        nu = self.model.triplet.nu
        spec = self.spec
        x = spec.nodes
        if isinstance(nu, NullMeasure):
            return np.zeros(spec.n)
        sig = self.model.noise(x, t)
        if isinstance(nu, SymmetricAlphaStable):
            # self-similarity: the jump amplitude sigma(x) rescales C_alpha by |sigma(x)|^alpha
            k = additive_kernel(nu, spec)
            core = (k.gather_forward(phi) - k.mass * phi
                    + 0.5 * k.inner_m2 * (second_derivative_matrix(spec.n, spec.dx) @ phi))
            return np.abs(sig) ** nu.alpha * core
        field = SplineField(spec, phi)
        if isinstance(nu, DiracAtOne):
            return nu.lam * (field(x + sig) - phi)
        y, w, tail = y_quadrature(nu)
        out = np.empty(spec.n)
        chunk = max(1, 2 ** 22 // y.size)
        for lo in range(0, spec.n, chunk):
            hi = min(spec.n, lo + chunk)
            z = x[lo:hi, None] + sig[lo:hi, None] * y[None, :]
            out[lo:hi] = field(z) @ w
        return out - (w.sum() + tail) * phi


def apply_generator(model: SdeModel, phi: GridFunction, t=0.0) -> GridFunction:
    """Apply ``Q`` to ``phi``: drift, diffusion and the jump integral."""
    _require_ito(model)
    _check_reach(model, phi.spec, t)
    local = generator_drift_diffusion_matrix(model, phi.spec, t) @ phi.values
    return phi.with_values(local + GeneratorJump(model, phi.spec)(phi.values, t))


# ---------------------------------------------------------------------------
# jump part of the adjoint
# ---------------------------------------------------------------------------


def _finite(value, k, region):
    if isinstance(value, Divergent):
        raise MomentDivergent(k, region, value.reason)
    return float(value)


def series_moments(nu, K: int):
    """Weights ``m_k = int (-y)^k/k! nu(dy)`` for ``k = 1..K`` and the inner first moment."""
    m = [_finite(jump_moment(nu, k, MomentRegion.FULL), k, MomentRegion.FULL)
         * (-1.0) ** k / math.factorial(k) for k in range(1, K + 1)]
    inner = _finite(jump_moment(nu, 1, MomentRegion.INNER), 1, MomentRegion.INNER)
    return m, inner


def _series_values(model, spec, p, t, K):
    nu = model.triplet.nu
    if isinstance(nu, NullMeasure):
        return np.zeros(spec.n)
    m, inner = series_moments(nu, K)
    D = first_derivative_matrix(spec.n, spec.dx)
    sig = model.noise(spec.nodes, t)
    acc = m[K - 1] * sig ** K * p
    for k in range(K - 1, 0, -1):
        acc = m[k - 1] * sig ** k * p + D @ acc
    return D @ (acc + inner * sig * p)


def apply_adjoint_jump_series(model: SdeModel, p: GridFunction, t=0.0, K: int = 8) -> GridFunction:
    """Truncated series ``sum_k m_k d^k(sigma^k p) + M1_inner d(sigma p)``."""
    _require_ito(model)
    Series(K)
    return p.with_values(_series_values(model, p.spec, p.values, t, K))


def _additive_values(nu, spec, p):
    if isinstance(nu, NullMeasure):
        return np.zeros(spec.n)
    k = additive_kernel(nu, spec)
    out = k.gather_backward(p) - k.mass * p
    if k.compensator:
        out += k.compensator * (first_derivative_matrix(spec.n, spec.dx) @ p)
    if k.inner_m2:
        out += 0.5 * k.inner_m2 * (second_derivative_matrix(spec.n, spec.dx) @ p)
    return out


def apply_adjoint_jump_integral_additive(triplet: LevyTriplet, p: GridFunction) -> GridFunction:
    """``int [p(x-y) - p(x) + 1{|y|<1} y p'(x)] nu(dy)`` (unit noise intensity)."""
    return p.with_values(_additive_values(triplet.nu, p.spec, p.values))


class JumpAdjoint:
    """Jump part of ``Q*`` for one model, grid and policy.

    Holds whatever precomputation the policy needs (kernel matrices, inverse
    maps) and reuses it across calls while the model is autonomous.
    """

    def __init__(self, model: SdeModel, spec: GridSpec, policy: Policy):
        _require_ito(model)
        self.model, self.spec, self.policy = model, spec, policy
        self._cache_t = None
        self._cache = None
        nu = model.triplet.nu
        if isinstance(policy, Series):
            series_moments(nu, policy.K)
        elif isinstance(policy, IntegralAdditive):
            if not _is_unit_sigma(model, spec.nodes, 0.0):
                raise UnsupportedPolicy("IntegralAdditive requires sigma == 1; "
                                        "use Pushforward or Series for multiplicative noise")
        elif not isinstance(policy, Pushforward):
            raise TypeError(f"unknown policy {policy!r}")

    def __call__(self, p: np.ndarray, t=0.0) -> np.ndarray:
        pol = self.policy
        nu = self.model.triplet.nu
        if isinstance(pol, Series):
            return _series_values(self.model, self.spec, p, t, pol.K)
        if isinstance(pol, IntegralAdditive) or isinstance(nu, NullMeasure):
            return _additive_values(nu, self.spec, p)
        return self._pushforward(p, t)

    def _prepared(self, t):
        if self._cache is not None and (self.model.autonomous or self._cache_t == t):
            return self._cache
        self._cache = self._prepare(t)
        self._cache_t = t
        return self._cache

    def _prepare(self, t):
        spec, nu = self.spec, self.model.triplet.nu
        x = spec.nodes
        c = _constant_sigma(self.model, x, t)
        if isinstance(nu, SymmetricAlphaStable):
            return ("stable", np.abs(self.model.noise(x, t)) ** nu.alpha)
        if c == 1.0:
            return ("additive", None)
        if isinstance(nu, DiracAtOne):
            return ("dirac",) + _dirac_preimage(self.model, spec, t, c)
        return ("kernel", _gaussian_kernel_matrix(nu, spec, self.model.noise(x, t)))

    def _pushforward(self, p, t):
        kind, *data = self._prepared(t)
        spec, nu = self.spec, self.model.triplet.nu
        if kind == "additive":
            return _additive_values(nu, spec, p)
        if kind == "stable":
            return _additive_values(nu, spec, data[0] * p)
        if kind == "dirac":
            inside, pre, jac = data
            arrived = np.zeros(spec.n)
            arrived[inside] = SplineField(spec, p)(pre) * jac
            return nu.lam * (arrived - p)
        return data[0] @ p - nu.lam * p


def _dirac_preimage(model, spec, t, c):
    """Nodes reachable by ``x -> x + sigma(x)``, their preimages and the Jacobian ``|h'|``."""
    x = spec.nodes
    if c is not None:
        pre = x - c
        inside = (pre >= spec.x_min - 2 * spec.dx) & (pre <= spec.x_max + 2 * spec.dx)
        return inside, pre[inside], np.ones(int(inside.sum()))
    sig = model.noise(x, t)
    try:
        table = MonotoneTable(x, x + sig, 1.0 + model.noise_derivative(x, t))
    except ValueError:
        raise UnsupportedPolicy("pushforward of a unit jump needs x + sigma(x) strictly "
                                "monotone on the grid") from None
    lo, hi = table.range
    inside = (x >= lo) & (x <= hi)
    pre = table.inverse(x[inside])
    jac = np.abs(table.inverse_derivative(x[inside]))
    return inside, pre, jac


def _gaussian_kernel_matrix(nu: GaussianCompoundPoisson, spec: GridSpec, sig):
    """Source-space kernel: column ``j`` spreads the jumps leaving node ``j``.

    Each column is scaled so that its trapezoid integral equals the exact
    rate of jumps from ``x_j`` that land inside the grid.
    """
    x = spec.nodes
    w = trapezoid_weights(spec)
    n = spec.n
    M = np.zeros((n, n))
    s = np.abs(sig)
    tiny = s < 1e-12 * max(1.0, float(s.max()))
    cols = np.nonzero(~tiny)[0]
    for lo in range(0, cols.size, 512):
        j = cols[lo:lo + 512]
        z = (x[:, None] - x[None, j]) / s[None, j]
        M[:, j] = nu.density(z) / s[None, j]
        landed = nu.lam * (special.ndtr((spec.x_max - x[j]) / s[j])
                           - special.ndtr((spec.x_min - x[j]) / s[j]))
        have = w @ M[:, j]
        scale = np.divide(landed, have, out=np.zeros_like(landed), where=have > 0)
        M[:, j] *= scale[None, :]
    for j in np.nonzero(tiny)[0]:
        M[j, j] = nu.lam / w[j]
    # p enters through its trapezoid weights
    return M * w[None, :]


def apply_adjoint_jump_pushforward(model: SdeModel, p: GridFunction, t=0.0) -> GridFunction:
    """Nonlocal jump adjoint for general ``sigma`` (see :class:`Pushforward`)."""
    return p.with_values(JumpAdjoint(model, p.spec, Pushforward())(p.values, t))


# ---------------------------------------------------------------------------
# full right-hand side and duality
# ---------------------------------------------------------------------------


def apply_fpe_rhs(model: SdeModel, p: GridFunction, t=0.0, policy: Policy = Pushforward()) -> GridFunction:
    """``Q* p``: the right-hand side of the forward equation."""
    _require_ito(model)
    local = adjoint_drift_diffusion_matrix(model, p.spec, t) @ p.values
    return p.with_values(local + JumpAdjoint(model, p.spec, policy)(p.values, t))


def adjoint_pairing_residual(model: SdeModel, phi: GridFunction, p: GridFunction, t=0.0,
                             policy: Policy = Pushforward()) -> float:
    """``|<Q phi, p> - <phi, Q* p>|`` in the trapezoid inner product."""
    w = trapezoid_weights(p.spec)
    lhs = np.dot(w, apply_generator(model, phi, t).values * p.values)
    rhs = np.dot(w, phi.values * apply_fpe_rhs(model, p, t, policy).values)
    return float(abs(lhs - rhs))
