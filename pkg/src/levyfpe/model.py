"""Scalar SDE models ``dX = f(X,t) dt + sigma(X-,t) dL`` (Itô) or with ``sigma ◇ dL`` (Marcus)."""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .levy_core import LevyTriplet

__all__ = ["Convention", "SdeModel", "SigmaVanishes"]


class SigmaVanishes(ValueError):
    """The noise intensity is zero somewhere it must not be."""


class Convention(enum.Enum):
    ITO = "ito"
    MARCUS = "marcus"


@dataclass(frozen=True)
class SdeModel:
    """Drift, noise intensity, integral convention and driving Lévy triplet.

    ``f`` and ``sigma`` are vectorised callables ``(x, t) -> array``.
    ``autonomous`` declares that neither depends on ``t`` (lets solvers
    reuse factorisations); ``sigma_constant`` records a known constant value
    of ``sigma`` so that code paths which are exact for constant fields can
    be taken.
    """

    f: Callable
    sigma: Callable
    triplet: LevyTriplet
    convention: Convention = Convention.ITO
    autonomous: bool = False
    sigma_constant: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "convention", Convention(self.convention))

    def drift(self, x, t=0.0) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.asarray(self.f(x, t), dtype=float), x.shape).copy()

    def noise(self, x, t=0.0) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.sigma_constant is not None:
            return np.full(x.shape, float(self.sigma_constant))
        return np.broadcast_to(np.asarray(self.sigma(x, t), dtype=float), x.shape).copy()

    def noise_derivative(self, x, t=0.0) -> np.ndarray:
        """``d sigma / dx`` by centred differences (exact zero for constant sigma)."""
        x = np.asarray(x, dtype=float)
        if self.sigma_constant is not None:
            return np.zeros(x.shape)
        h = 1e-5 * np.maximum(1.0, np.abs(x))
        return (self.noise(x + h, t) - self.noise(x - h, t)) / (2.0 * h)

    def with_convention(self, convention) -> "SdeModel":
        return SdeModel(self.f, self.sigma, self.triplet, Convention(convention),
                        self.autonomous, self.sigma_constant)

    def check_marcus(self, x) -> None:
        """Marcus models need a time-independent sigma without zeros on the grid."""
        if not self.autonomous:
            raise ValueError("Marcus convention requires a time-independent sigma(x)")
        s = self.noise(x)
        if np.any(np.abs(s) < 1e-12):
            raise SigmaVanishes("sigma vanishes on the grid; restrict the grid to one sign component")
        if np.any(s > 0) and np.any(s < 0):
            raise SigmaVanishes("sigma changes sign on the grid")
