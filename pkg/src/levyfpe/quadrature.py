"""Discretisation of jump integrals against grid functions.

Two building blocks are provided:

* :class:`AdditiveKernel` -- translation-invariant weights ``w_k`` such that
  ``int p(x_i - y) nu(dy) ~ sum_m c_m w_{i-m}`` where ``c`` are the cubic
  B-spline coefficients of ``p``.  The weights integrate the spline exactly
  piece by piece (composite Gauss-Legendre), so the generator and its adjoint
  are exact transposes of one another.  Jumps with ``|y| < delta`` are
  replaced by their second-order Taylor surrogate.
* :func:`y_quadrature` -- composite Gauss-Legendre nodes/weights in jump-size
  space, for operators with state-dependent jump amplitude.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy import interpolate, signal

from .grid import GridSpec, cubic_bspline, spline_coefficients
from .levy_core import (DiracAtOne, GaussianCompoundPoisson, JumpMeasure, NullMeasure,
                        SymmetricAlphaStable)

__all__ = ["DELTA", "TAIL_MASS", "AdditiveKernel", "additive_kernel", "y_quadrature",
           "gaussian_tail_cut", "MonotoneTable"]

DELTA = 1e-4
TAIL_MASS = 1e-10
_GL_T, _GL_W = np.polynomial.legendre.leggauss(8)


def gaussian_tail_cut(tail: float = TAIL_MASS) -> float:
    """Smallest ``Y`` with ``P(|Z| > Y) < tail`` for a standard normal ``Z``."""
    from scipy import special
    return float(-special.ndtri(0.5 * tail))


def _gl_pieces(a, b):
    """GL nodes and weights on each interval ``[a_j, b_j]``; arrays of shape (pieces, 8)."""
    a = np.asarray(a, dtype=float)[:, None]
    b = np.asarray(b, dtype=float)[:, None]
    half = 0.5 * (b - a)
    return 0.5 * (a + b) + half * _GL_T, half * _GL_W


@dataclass(frozen=True, eq=False)
class AdditiveKernel:
    """Discrete form of ``p -> int [p(x-y) - p(x) + 1{|y|<1} y p'(x)] nu(dy)``.

    ``weights[j]`` belongs to offset ``k0 + j`` (in grid cells).  ``mass`` is
    the total jump intensity seen by the ``-p(x)`` term, ``compensator`` the
    first moment over ``delta <= |y| < 1`` and ``inner_m2`` the second moment
    over ``|y| < delta`` used by the Taylor surrogate.
    """

    spec: GridSpec
    k0: int
    weights: np.ndarray
    mass: float
    compensator: float
    inner_m2: float

    def _shifted(self, coef, k0, w):
        n = coef.size
        if w.size > 64:
            full = signal.fftconvolve(coef, w)
        else:
            full = np.convolve(coef, w)
        out = np.zeros(n)
        idx = np.arange(n) - k0
        ok = (idx >= 0) & (idx < full.size)
        out[ok] = full[idx[ok]]
        return out

    def gather_backward(self, values: np.ndarray) -> np.ndarray:
        """``int p(x_i - y) nu(dy)`` over ``delta <= |y|``, from the spline of ``values``."""
        return self._shifted(spline_coefficients(values), self.k0, self.weights)

    def gather_forward(self, values: np.ndarray) -> np.ndarray:
        """``int phi(x_i + y) nu(dy)`` over ``delta <= |y|``."""
        k1 = self.k0 + self.weights.size - 1
        return self._shifted(spline_coefficients(values), -k1, self.weights[::-1])


def _dirac_kernel(nu: DiracAtOne, spec: GridSpec) -> AdditiveKernel:
    s = 1.0 / spec.dx
    k = np.arange(math.floor(s) - 1, math.floor(s) + 3)
    w = nu.lam * cubic_bspline(k - s)
    return AdditiveKernel(spec, int(k[0]), w, nu.lam, 0.0, 0.0)


def _continuous_kernel(nu, spec: GridSpec, delta: float) -> AdditiveKernel:
    dx = spec.dx
    if isinstance(nu, GaussianCompoundPoisson):
        ymax = min(spec.span + 3.0 * dx, gaussian_tail_cut())
    else:
        ymax = spec.span + 3.0 * dx
    e = delta / dx
    smax = ymax / dx
    # geometric pieces on [e, 1] (cell units), unit pieces beyond, clipped at smax
    geo = e * 2.0 ** np.arange(max(0, math.ceil(math.log2(1.0 / e))))
    right = np.concatenate([geo[geo < 1.0], np.arange(1.0, math.ceil(smax)), [smax]])
    right = np.unique(right[right <= smax])
    a_pos, b_pos = right[:-1], right[1:]
    s_pos, ws_pos = _gl_pieces(a_pos, b_pos)
    s_all = np.concatenate([s_pos, -s_pos])
    w_all = np.concatenate([ws_pos, ws_pos]) * nu.density(np.concatenate([s_pos, -s_pos]) * dx) * dx
    base = np.floor(s_all).astype(np.int64)
    kmin = int(base.min()) - 1
    kmax = int(base.max()) + 2
    weights = np.zeros(kmax - kmin + 1)
    for off in (-1, 0, 1, 2):
        k = base + off
        np.add.at(weights, (k - kmin).ravel(), (w_all * cubic_bspline(k - s_all)).ravel())
    tail = nu.mass_between(ymax, math.inf)
    return AdditiveKernel(spec, kmin, weights, float(weights.sum() + tail),
                          float(nu.moment_between(1, delta, 1.0)),
                          float(nu.moment_between(2, 0.0, delta)))


@functools.lru_cache(maxsize=64)
def additive_kernel(nu: JumpMeasure, spec: GridSpec, delta: float = DELTA) -> AdditiveKernel:
    """Build (and cache) the additive jump kernel of ``nu`` on ``spec``."""
    if isinstance(nu, NullMeasure):
        return AdditiveKernel(spec, 0, np.zeros(1), 0.0, 0.0, 0.0)
    if isinstance(nu, DiracAtOne):
        return _dirac_kernel(nu, spec)
    if isinstance(nu, (GaussianCompoundPoisson, SymmetricAlphaStable)):
        return _continuous_kernel(nu, spec, delta)
    raise TypeError(f"unsupported jump measure {type(nu).__name__}")


@functools.lru_cache(maxsize=16)
def y_quadrature(nu: JumpMeasure, panel: float = 0.125):
    """Composite GL nodes and weights for ``nu`` (finite-activity continuous measures).

    Returns ``(y, w, tail)`` with ``tail`` the mass beyond the cut.
    """
    if isinstance(nu, DiracAtOne):
        return np.array([1.0]), np.array([nu.lam]), 0.0
    if not isinstance(nu, GaussianCompoundPoisson):
        raise TypeError(f"no jump-size quadrature for {type(nu).__name__}")
    ymax = gaussian_tail_cut()
    m = int(math.ceil(2 * ymax / panel))
    edges = np.linspace(-ymax, ymax, m + 1)
    y, w = _gl_pieces(edges[:-1], edges[1:])
    y, w = y.ravel(), w.ravel()
    return y, w * nu.density(y), float(nu.mass_between(ymax, math.inf))


class MonotoneTable:
    """Strictly monotone tabulated function with a monotone cubic Hermite inverse.

    Slopes supplied at the nodes are limited (Fritsch-Carlson) only where
    needed to keep both interpolants monotone, so smooth well-resolved data
    keep fourth-order accuracy.
    """

    def __init__(self, x, v, dvdx):
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        dvdx = np.asarray(dvdx, dtype=float)
        dv = np.diff(v)
        if not (np.all(dv > 0) or np.all(dv < 0)):
            raise ValueError("tabulated map is not strictly monotone")
        self.increasing = bool(dv[0] > 0)
        self.x, self.v = x, v
        slopes = _limit_slopes(x, v, dvdx)
        self._forward = interpolate.CubicHermiteSpline(x, v, slopes, extrapolate=False)
        order = slice(None) if self.increasing else slice(None, None, -1)
        inv_slopes = _limit_slopes(v[order], x[order], 1.0 / dvdx[order])
        self._inverse = interpolate.CubicHermiteSpline(v[order], x[order], inv_slopes,
                                                       extrapolate=False)

    @property
    def range(self):
        return float(self.v.min()), float(self.v.max())

    def forward(self, x):
        return self._forward(_snap(x, self.x[0], self.x[-1]))

    def inverse(self, v):
        lo, hi = self.range
        return self._inverse(_snap(v, lo, hi))

    def inverse_derivative(self, v):
        lo, hi = self.range
        return self._inverse.derivative()(_snap(v, lo, hi))


def _snap(z, lo, hi):
    """Pull points within rounding distance of ``[lo, hi]`` onto the interval."""
    z = np.asarray(z, dtype=float)
    tol = 1e-12 * max(hi - lo, abs(lo), abs(hi))
    return np.where((z >= lo - tol) & (z <= hi + tol), np.clip(z, lo, hi), z)


def _limit_slopes(x, y, d):
    d = np.array(d, dtype=float)
    delta = np.diff(y) / np.diff(x)
    a = d[:-1] / delta
    b = d[1:] / delta
    r = a * a + b * b
    bad = r > 9.0
    if np.any(bad):
        tau = 3.0 / np.sqrt(r[bad])
        idx = np.nonzero(bad)[0]
        d[idx] = tau * a[bad] * delta[bad]
        d[idx + 1] = tau * b[bad] * delta[bad]
    d[:-1] = np.where(a < 0, 0.0, d[:-1])
    d[1:] = np.where(b < 0, 0.0, d[1:])
    return d

