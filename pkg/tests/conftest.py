import math

import numpy as np
import pytest

from levyfpe.grid import GridFunction, GridSpec
from levyfpe.levy_core import (DiracAtOne, GaussianCompoundPoisson, LevyTriplet, NullMeasure,
                               SymmetricAlphaStable)
from levyfpe.model import Convention, SdeModel


def linear(x, t=0.0):
    return np.asarray(x, dtype=float)


def one(x, t=0.0):
    return np.ones_like(np.asarray(x, dtype=float))


def multiplicative(triplet, convention=Convention.ITO):
    return SdeModel(linear, linear, triplet, convention, autonomous=True)


def additive(triplet, f=linear, convention=Convention.ITO):
    return SdeModel(f, one, triplet, convention, autonomous=True, sigma_constant=1.0)


def gaussian(spec, mean, sd, normalise=True):
    x = spec.nodes
    v = np.exp(-0.5 * ((x - mean) / sd) ** 2)
    if normalise:
        v = v / (sd * math.sqrt(2 * math.pi))
    return GridFunction(spec, v)


@pytest.fixture
def example1():
    return multiplicative(LevyTriplet(0.0, 1.0, DiracAtOne(1.0)))


@pytest.fixture
def example2():
    return multiplicative(LevyTriplet(0.0, 0.0, GaussianCompoundPoisson(1.0)))


@pytest.fixture
def gbm():
    return multiplicative(LevyTriplet(0.0, 1.0, NullMeasure()))


@pytest.fixture
def stable_additive():
    return additive(LevyTriplet(0.0, 0.0, SymmetricAlphaStable(1.5, 1.0)), f=lambda x, t=0.0: 0.0 * x)


@pytest.fixture
def wide_grid():
    return GridSpec(-20.0, 20.0, 401)


def gbm_density(x, t, x0=1.0, sd0=0.05, A=1.0, nodes=80):
    """Law at ``t`` of ``dX = X dt + sqrt(A) X dW`` started from ``N(x0, sd0^2)``.

    The lognormal kernel is averaged over the initial law by Gauss-Hermite
    quadrature; starting points below zero carry negligible weight for the
    intended parameters and are dropped.
    """
    z, w = np.polynomial.hermite_e.hermegauss(nodes)
    w = w / w.sum()
    starts = x0 + sd0 * z
    keep = starts > 0
    x = np.asarray(x, dtype=float)[:, None]
    s, w = starts[keep][None, :], w[keep][None, :]
    mu = np.log(s) + (1.0 - 0.5 * A) * t
    var = A * t
    with np.errstate(divide="ignore", invalid="ignore"):
        k = np.where(x > 0, np.exp(-(np.log(np.where(x > 0, x, 1.0)) - mu) ** 2 / (2 * var))
                     / (np.where(x > 0, x, 1.0) * math.sqrt(2 * math.pi * var)), 0.0)
    return (k * w).sum(axis=1)
