"""
Lévy triplets and jump measures.

A scalar Lévy process is fixed by its generating triplet ``(b, A, nu)``: a
drift, the variance scale of the Brownian part and a jump measure on
``R \\ {0}``.  This module ships the four jump measures used throughout the
package, the moment integrals that the series form of the Fokker-Planck
operator needs, and a sampler for increments built from the Lévy-Itô
decomposition (drift + Brownian part + compensated small jumps + large
jumps).

Truncation convention: the compensator acts on ``0 < |y| < 1`` (open unit
interval). A jump of size exactly one is a *large* jump.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy import integrate, special

__all__ = [
    "InvalidParameter",
    "MomentDivergent",
    "Divergent",
    "MomentRegion",
    "NullMeasure",
    "DiracAtOne",
    "GaussianCompoundPoisson",
    "SymmetricAlphaStable",
    "JumpMeasure",
    "LevyTriplet",
    "ValidityReport",
    "validate_jump_measure",
    "jump_moment",
    "series_coefficients",
    "small_jump_variance",
    "large_jump_rate",
    "compensator_drift",
    "sample_large_jumps",
    "sample_increment",
]

_SQRT2PI = math.sqrt(2.0 * math.pi)


class InvalidParameter(ValueError):
    """A measure or triplet parameter lies outside its admissible range."""


class MomentDivergent(ArithmeticError):
    """A moment required by the series form of the operator is infinite."""

    def __init__(self, k: int, region: "MomentRegion", message: str = ""):
        self.k = k
        self.region = region
        super().__init__(message or f"moment of order {k} over {region.value} region diverges")


class MomentRegion(enum.Enum):
    INNER = "inner"  # 0 < |y| < 1
    OUTER = "outer"  # |y| >= 1
    FULL = "full"    # R \ {0}


@dataclass(frozen=True)
class Divergent:
    """Marker returned by :func:`jump_moment` for non-absolutely-convergent moments.

    ``principal_value`` is set when the symmetric principal value exists
    (odd moments of a symmetric measure near the origin).
    """

    k: int
    region: MomentRegion
    principal_value: Optional[float] = None
    reason: str = ""


# ---------------------------------------------------------------------------
# jump measures
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NullMeasure:
    """No jumps."""

    is_discrete = True
    is_symmetric = True
    finite_activity = True

    def mass_between(self, lo, hi):
        return 0.0

    def moment_between(self, k, lo, hi):
        return 0.0

    def describe(self):
        return "Null"


@dataclass(frozen=True)
class DiracAtOne:
    """Point mass ``lam`` at ``y = 1`` (Brownian motion plus a Poisson process)."""

    lam: float

    is_discrete = True
    is_symmetric = False
    finite_activity = True

    def __post_init__(self):
        _check_measure(self)

    def mass_between(self, lo, hi):
        return self.lam if lo <= 1.0 < hi else 0.0

    def moment_between(self, k, lo, hi):
        return self.lam if lo <= 1.0 < hi else 0.0

    def describe(self):
        return f"DiracAtOne(lambda={self.lam:g})"


@dataclass(frozen=True)
class GaussianCompoundPoisson:
    """Compound Poisson jumps at rate ``lam`` with standard normal sizes.

    The measure has density ``lam * exp(-y**2/2) / sqrt(2 pi)``.
    """

    lam: float

    is_discrete = False
    is_symmetric = True
    finite_activity = True

    def __post_init__(self):
        _check_measure(self)

    def density(self, y):
        y = np.asarray(y, dtype=float)
        return self.lam * np.exp(-0.5 * y * y) / _SQRT2PI

    def mass_between(self, lo, hi):
        upper = 0.0 if math.isinf(hi) else special.ndtr(-hi)
        return 2.0 * self.lam * (special.ndtr(-lo) - upper)

    def moment_between(self, k, lo, hi):
        if k % 2:
            return 0.0
        a = 0.5 * (k + 1)
        # int_lo^hi y^k phi(y) dy = 2^{(k-1)/2} / sqrt(2 pi) * [Gamma(a, lo^2/2) - Gamma(a, hi^2/2)]
        upper_hi = 0.0 if math.isinf(hi) else special.gammaincc(a, 0.5 * hi * hi)
        segment = special.gammaincc(a, 0.5 * lo * lo) - upper_hi
        return 2.0 * self.lam * 2.0 ** (0.5 * (k - 1)) / _SQRT2PI * special.gamma(a) * segment

    def describe(self):
        return f"GaussianCompoundPoisson(lambda={self.lam:g})"


@dataclass(frozen=True)
class SymmetricAlphaStable:
    """Jump density ``c_alpha * |y|**(-1 - alpha)`` with ``0 < alpha < 2``.

    ``c_alpha`` is taken as given; no normalisation convention is implied.
    """

    alpha: float
    c_alpha: float

    is_discrete = False
    is_symmetric = True
    finite_activity = False

    def __post_init__(self):
        _check_measure(self)

    def density(self, y):
        y = np.abs(np.asarray(y, dtype=float))
        with np.errstate(divide="ignore"):
            return self.c_alpha * y ** (-1.0 - self.alpha)

    def mass_between(self, lo, hi):
        if lo <= 0.0:
            return math.inf
        upper = 0.0 if math.isinf(hi) else hi ** (-self.alpha)
        return 2.0 * self.c_alpha * (lo ** (-self.alpha) - upper) / self.alpha

    def moment_between(self, k, lo, hi):
        # callers guarantee convergence; odd moments vanish by symmetry
        if k % 2:
            return 0.0
        p = k - self.alpha
        lo_term = 0.0 if lo == 0.0 else lo ** p
        return 2.0 * self.c_alpha * (hi ** p - lo_term) / p

    def describe(self):
        return f"SymmetricAlphaStable(alpha={self.alpha:g}, C_alpha={self.c_alpha:g})"


JumpMeasure = Union[NullMeasure, DiracAtOne, GaussianCompoundPoisson, SymmetricAlphaStable]


def _check_measure(nu) -> None:
    if isinstance(nu, (DiracAtOne, GaussianCompoundPoisson)):
        if not (np.isfinite(nu.lam) and nu.lam > 0):
            raise InvalidParameter(f"jump rate lambda must be > 0, got {nu.lam!r}")
    elif isinstance(nu, SymmetricAlphaStable):
        if not (0.0 < nu.alpha < 2.0):
            raise InvalidParameter(f"stability index alpha must lie in (0, 2), got {nu.alpha!r}")
        if not (np.isfinite(nu.c_alpha) and nu.c_alpha > 0):
            raise InvalidParameter(f"C_alpha must be > 0, got {nu.c_alpha!r}")
    elif not isinstance(nu, NullMeasure):
        raise TypeError(f"unsupported jump measure {type(nu).__name__}")


@dataclass(frozen=True)
class LevyTriplet:
    """Generating triplet ``(b, A, nu)`` of a scalar Lévy process."""

    b: float = 0.0
    A: float = 0.0
    nu: JumpMeasure = NullMeasure()

    def __post_init__(self):
        if not np.isfinite(self.b):
            raise InvalidParameter(f"drift b must be finite, got {self.b!r}")
        if not (np.isfinite(self.A) and self.A >= 0):
            raise InvalidParameter(f"diffusion coefficient A must be >= 0, got {self.A!r}")
        _check_measure(self.nu)


# ---------------------------------------------------------------------------
# moments and validity
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ValidityReport:
    ok: bool
    inner_mass2: float
    detail: str


def validate_jump_measure(nu: JumpMeasure) -> ValidityReport:
    """Check the Lévy integrability condition ``int min(y^2, 1) nu(dy) < inf``.

    The condition is split into the inner second moment over ``0 < |y| < 1``
    and the outer mass over ``|y| >= 1``.  Discrete measures are evaluated
    exactly, the Gaussian measure by adaptive quadrature and the stable
    measure by its closed forms (the inner integrand is singular at 0).

    Raises
    ------
    InvalidParameter
        If the measure parameters are out of range.
    """
    _check_measure(nu)
    if isinstance(nu, NullMeasure):
        inner, outer = 0.0, 0.0
    elif isinstance(nu, DiracAtOne):
        inner, outer = 0.0, nu.lam
    elif isinstance(nu, GaussianCompoundPoisson):
        inner = integrate.quad(lambda y: y * y * nu.density(y), -1.0, 1.0, epsabs=1e-13)[0]
        outer = 2.0 * integrate.quad(nu.density, 1.0, np.inf, epsabs=1e-13)[0]
    else:
        inner = 2.0 * nu.c_alpha / (2.0 - nu.alpha)
        outer = 2.0 * nu.c_alpha / nu.alpha
    ok = bool(np.isfinite(inner) and np.isfinite(outer))
    detail = (f"{nu.describe()}: int_(0<|y|<1) y^2 nu(dy) = {inner:.12g}, "
              f"nu(|y|>=1) = {outer:.12g}")
    return ValidityReport(ok=ok, inner_mass2=float(inner), detail=detail)


def jump_moment(nu: JumpMeasure, k: int, region: MomentRegion) -> Union[float, Divergent]:
    """Return ``int_region y**k nu(dy)``, or a :class:`Divergent` marker.

    Divergence is judged on absolute convergence.  For the stable measure
    the inner first moment of an ``alpha >= 1`` measure is reported as
    divergent with principal value 0.
    """
    if k < 1:
        raise ValueError("moment order k must be >= 1")
    region = MomentRegion(region)
    if isinstance(nu, SymmetricAlphaStable):
        return _stable_moment(nu, k, region)
    lo, hi = {MomentRegion.INNER: (0.0, 1.0),
              MomentRegion.OUTER: (1.0, math.inf),
              MomentRegion.FULL: (0.0, math.inf)}[region]
    return float(nu.moment_between(k, lo, hi))


def _stable_moment(nu: SymmetricAlphaStable, k, region):
    a, c = nu.alpha, nu.c_alpha
    inner_ok = k > a
    outer_ok = k < a
    if region is MomentRegion.INNER:
        if inner_ok:
            return 0.0 if k % 2 else 2.0 * c / (k - a)
        return Divergent(k, region, principal_value=0.0,
                         reason=f"|y|^{k} |y|^(-1-{a:g}) is not integrable at 0")
    if region is MomentRegion.OUTER:
        if outer_ok:
            return 0.0  # only k = 1 < alpha, odd
        return Divergent(k, region, principal_value=0.0 if k % 2 else None,
                         reason=f"tail |y|^{k} |y|^(-1-{a:g}) is not integrable for k >= alpha")
    return Divergent(k, region, reason="stable moments are never absolutely finite on R\\{0}")


def series_coefficients(triplet: LevyTriplet, K: int) -> list:
    """Coefficients ``c_1 .. c_K`` of the finite-moment series form of the FPE.

    ``c_1 = -b - int_{|y|>=1} y nu``, ``c_2 = A/2 + int y^2 nu / 2`` and
    ``c_k = int (-y)^k / k! nu`` for ``k >= 3``.

    Raises
    ------
    MomentDivergent
        For the first ``k`` whose moment is infinite.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    nu = triplet.nu
    m1 = jump_moment(nu, 1, MomentRegion.OUTER)
    if isinstance(m1, Divergent):
        raise MomentDivergent(1, MomentRegion.OUTER, m1.reason)
    coeffs = [-triplet.b - m1 + 0.0]
    for k in range(2, K + 1):
        mk = jump_moment(nu, k, MomentRegion.FULL)
        if isinstance(mk, Divergent):
            # name the region that actually fails
            outer = jump_moment(nu, k, MomentRegion.OUTER)
            bad = outer if isinstance(outer, Divergent) else jump_moment(nu, k, MomentRegion.INNER)
            raise MomentDivergent(k, bad.region, bad.reason)
        if k == 2:
            coeffs.append(0.5 * triplet.A + 0.5 * mk)
        else:
            coeffs.append((-1) ** k * mk / math.factorial(k) + 0.0)
    return coeffs


# ---------------------------------------------------------------------------
# increments
# ---------------------------------------------------------------------------


def small_jump_variance(nu: JumpMeasure, eps: float) -> float:
    """Variance rate ``int_{0<|y|<eps} y^2 nu(dy)`` of the jumps below the cutoff."""
    return float(nu.moment_between(2, 0.0, eps))


def large_jump_rate(nu: JumpMeasure, eps: float) -> float:
    """Intensity ``nu(|y| >= eps)`` of the explicitly simulated jumps."""
    return float(nu.mass_between(eps, math.inf))


def compensator_drift(nu: JumpMeasure, eps: float) -> float:
    """``int_{eps<=|y|<1} y nu(dy)``, subtracted per unit time from the path."""
    return float(nu.moment_between(1, eps, 1.0))


def sample_large_jumps(nu: JumpMeasure, eps: float, rng: np.random.Generator, size: int) -> np.ndarray:
    """Draw ``size`` jump sizes from ``nu`` restricted to ``|y| >= eps`` and normalised."""
    if size == 0 or isinstance(nu, NullMeasure):
        return np.zeros(size)
    if isinstance(nu, DiracAtOne):
        return np.ones(size)
    u = rng.random(size)
    sign = np.where(rng.random(size) < 0.5, -1.0, 1.0)
    if isinstance(nu, GaussianCompoundPoisson):
        magnitude = -special.ndtri(u * special.ndtr(-eps))
    else:
        magnitude = eps * (1.0 - u) ** (-1.0 / nu.alpha)
    return sign * magnitude


def sample_increment(triplet: LevyTriplet, dt: float, eps: float, rng: np.random.Generator,
                     size=None):
    """Sample the Lévy increment over a step ``dt``.

    The increment is assembled as ``b dt + sqrt(A dt) Z`` plus a Gaussian with
    variance ``dt * int_{|y|<eps} y^2 nu`` standing in for the jumps below the
    cutoff, minus the compensator ``dt * int_{eps<=|y|<1} y nu``, plus a
    compound-Poisson sum of the jumps with ``|y| >= eps``.

    Parameters
    ----------
    triplet : LevyTriplet
    dt : float
        Step length, ``> 0``.
    eps : float
        Small-jump cutoff in ``(0, 1]``.
    rng : numpy.random.Generator
    size : int or None
        Number of independent increments; ``None`` returns a float.
    """
    if not dt > 0:
        raise ValueError("dt must be > 0")
    if not 0.0 < eps <= 1.0:
        raise ValueError("eps must lie in (0, 1]")
    nu = triplet.nu
    n = 1 if size is None else int(size)
    mean = (triplet.b - compensator_drift(nu, eps)) * dt
    var = (triplet.A + small_jump_variance(nu, eps)) * dt
    out = mean + math.sqrt(var) * rng.standard_normal(n)
    counts = rng.poisson(large_jump_rate(nu, eps) * dt, n)
    total = int(counts.sum())
    if total:
        sizes = sample_large_jumps(nu, eps, rng, total)
        out += np.bincount(np.repeat(np.arange(n), counts), weights=sizes, minlength=n)
    return float(out[0]) if size is None else out
