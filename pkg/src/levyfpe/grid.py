"""Uniform 1-D grids, grid functions, difference stencils and interpolation."""
from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np
from scipy import linalg, sparse

__all__ = [
    "GridMismatch",
    "GridSpec",
    "GridFunction",
    "trapezoid_weights",
    "first_derivative_matrix",
    "second_derivative_matrix",
    "SplineField",
    "mass",
    "l1_distance",
    "negativity",
]


class GridMismatch(ValueError):
    """Two grid functions live on incompatible grids."""


@dataclass(frozen=True)
class GridSpec:
    x_min: float
    x_max: float
    n: int

    def __post_init__(self):
        if not self.x_min < self.x_max:
            raise ValueError(f"need x_min < x_max, got [{self.x_min}, {self.x_max}]")
        if int(self.n) != self.n or self.n < 16:
            raise ValueError(f"grid needs an integer node count >= 16, got {self.n}")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.n - 1)

    @property
    def span(self) -> float:
        return self.x_max - self.x_min

    @functools.cached_property
    def nodes(self) -> np.ndarray:
        x = np.linspace(self.x_min, self.x_max, self.n)
        x.setflags(write=False)
        return x


@dataclass(frozen=True, eq=False)
class GridFunction:
    spec: GridSpec
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.spec.n,):
            raise GridMismatch(f"expected {self.spec.n} values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("grid function values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_callable(cls, spec: GridSpec, fn) -> "GridFunction":
        return cls(spec, np.broadcast_to(fn(spec.nodes), (spec.n,)))

    @property
    def x(self) -> np.ndarray:
        return self.spec.nodes

    def with_values(self, values) -> "GridFunction":
        return GridFunction(self.spec, values)


def trapezoid_weights(spec: GridSpec) -> np.ndarray:
    w = np.full(spec.n, spec.dx)
    w[0] = w[-1] = 0.5 * spec.dx
    return w


# ---------------------------------------------------------------------------
# stencils: 4th order centred in the interior, 2nd order next to the edges
# ---------------------------------------------------------------------------


def _banded(n, coeffs, edge_rows):
    m = sparse.diags([np.full(n - abs(k), c) for k, c in coeffs], [k for k, _ in coeffs],
                     shape=(n, n), format="lil")
    for i, (start, row) in edge_rows.items():
        m.rows[i] = []
        m.data[i] = []
        for j, value in enumerate(row):
            m[i, start + j] = value
    return m.tocsr()


@functools.lru_cache(maxsize=32)
def first_derivative_matrix(n: int, dx: float) -> sparse.csr_matrix:
    """Sparse first-derivative operator on ``n`` uniformly spaced nodes."""
    coeffs = [(-2, 1 / 12), (-1, -8 / 12), (1, 8 / 12), (2, -1 / 12)]
    edges = {0: (0, [-1.5, 2.0, -0.5]),
             1: (0, [-0.5, 0.0, 0.5]),
             n - 2: (n - 3, [-0.5, 0.0, 0.5]),
             n - 1: (n - 3, [0.5, -2.0, 1.5])}
    return _banded(n, coeffs, edges) / dx


@functools.lru_cache(maxsize=32)
def second_derivative_matrix(n: int, dx: float) -> sparse.csr_matrix:
    """Sparse second-derivative operator on ``n`` uniformly spaced nodes."""
    coeffs = [(-2, -1 / 12), (-1, 16 / 12), (0, -30 / 12), (1, 16 / 12), (2, -1 / 12)]
    edges = {0: (0, [2.0, -5.0, 4.0, -1.0]),
             1: (0, [1.0, -2.0, 1.0]),
             n - 2: (n - 3, [1.0, -2.0, 1.0]),
             n - 1: (n - 4, [-1.0, 4.0, -5.0, 2.0])}
    return _banded(n, coeffs, edges) / (dx * dx)


# ---------------------------------------------------------------------------
# zero-padded cubic B-spline interpolation
# ---------------------------------------------------------------------------


def _bspline_basis(t):
    """Weights of coefficients j-1, j, j+1, j+2 at fractional offset t in [0, 1)."""
    t2 = t * t
    t3 = t2 * t
    omt = 1.0 - t
    return (omt * omt * omt / 6.0,
            (3.0 * t3 - 6.0 * t2 + 4.0) / 6.0,
            (-3.0 * t3 + 3.0 * t2 + 3.0 * t + 1.0) / 6.0,
            t3 / 6.0)


def cubic_bspline(s):
    """Centred cubic B-spline, support ``[-2, 2]``."""
    a = np.abs(np.asarray(s, dtype=float))
    out = np.zeros_like(a)
    inner = a < 1.0
    outer = (a >= 1.0) & (a < 2.0)
    out[inner] = (4.0 - 6.0 * a[inner] ** 2 + 3.0 * a[inner] ** 3) / 6.0
    out[outer] = (2.0 - a[outer]) ** 3 / 6.0
    return out


def spline_coefficients(values: np.ndarray) -> np.ndarray:
    """Coefficients of the cubic B-spline interpolant with zero padding beyond the grid."""
    n = values.size
    ab = np.empty((3, n))
    ab[0] = 1.0 / 6.0
    ab[1] = 4.0 / 6.0
    ab[2] = 1.0 / 6.0
    return linalg.solve_banded((1, 1), ab, values)


class SplineField:
    """C2 cubic spline through grid values, decaying to zero within two cells off the grid."""

    def __init__(self, spec: GridSpec, values):
        self.spec = spec
        self.values = np.asarray(values, dtype=float)
        self.coef = spline_coefficients(self.values)

    def __call__(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        u = (z - self.spec.x_min) / self.spec.dx
        j = np.floor(u)
        t = u - j
        j = j.astype(np.int64)
        n = self.spec.n
        out = np.zeros(z.shape)
        for offset, w in zip((-1, 0, 1, 2), _bspline_basis(t)):
            idx = j + offset
            ok = (idx >= 0) & (idx < n)
            out[ok] += w[ok] * self.coef[idx[ok]]
        return out


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------


def _values(p):
    return p.values if isinstance(p, GridFunction) else np.asarray(p, dtype=float)


def mass(p: GridFunction) -> float:
    """Trapezoid integral of ``p`` over its grid."""
    return float(np.dot(trapezoid_weights(p.spec), p.values))


def l1_distance(p: GridFunction, q: GridFunction) -> float:
    if p.spec != q.spec:
        raise GridMismatch(f"grids differ: {p.spec} vs {q.spec}")
    return float(np.dot(trapezoid_weights(p.spec), np.abs(p.values - q.values)))


def negativity(p: GridFunction) -> float:
    """Most negative value of ``p`` (0 if ``p`` is nonnegative)."""
    return float(min(0.0, np.min(_values(p))))
