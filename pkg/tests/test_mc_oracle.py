import math

import numpy as np
import pytest
from scipy import stats

from levyfpe.grid import GridFunction, GridSpec, l1_distance, mass
from levyfpe.levy_core import DiracAtOne, GaussianCompoundPoisson, LevyTriplet, SymmetricAlphaStable
from levyfpe.mc_oracle import (BLOCK_SIZE, PathBlowup, empirical_density, silverman_bandwidth,
                               simulate_paths, write_samples_csv)
from levyfpe.model import Convention, SdeModel

from conftest import additive, linear, one


def zero(x, t=0.0):
    return 0.0 * np.asarray(x, dtype=float)


def test_noise_free_paths_stay_put():
    model = SdeModel(zero, one, LevyTriplet(), autonomous=True)
    res = simulate_paths(model, 0.7, 1.0, 0.1, 0.1, 500, seed=1)
    assert np.all(res.samples == 0.7)


def test_gbm_mean(gbm):
    res = simulate_paths(gbm, 1.0, 0.5, 1e-3, 0.1, 100_000, seed=3)
    s = res.at(0.5)
    assert abs(s.mean() - math.exp(0.5)) <= 4 * s.std(ddof=1) / math.sqrt(s.size)


@pytest.mark.parametrize("nu", [DiracAtOne(2.0), GaussianCompoundPoisson(1.0)])
def test_unit_sigma_marcus_equals_ito(nu):
    model = additive(LevyTriplet(0.1, 0.5, nu), f=lambda x, t=0.0: -x)
    kw = dict(x0=0.5, T=0.3, dt=1e-2, eps=0.1, N=5000, seed=9, checkpoints=[0.1, 0.3])
    a = simulate_paths(model, **kw)
    b = simulate_paths(model.with_convention(Convention.MARCUS), **kw)
    assert np.array_equal(a.samples, b.samples)


def test_thread_count_does_not_change_samples(example1):
    n = 2 * BLOCK_SIZE + 17
    kw = dict(x0=lambda rng, k: 1 + 0.1 * rng.standard_normal(k), T=0.1, dt=1e-2, eps=0.1, N=n, seed=5)
    a = simulate_paths(example1, threads=1, **kw)
    b = simulate_paths(example1, threads=3, **kw)
    assert np.array_equal(a.samples, b.samples)
    assert a.samples.shape == (1, n)


def test_seed_changes_samples(example1):
    a = simulate_paths(example1, 1.0, 0.1, 1e-2, 0.1, 100, seed=1)
    b = simulate_paths(example1, 1.0, 0.1, 1e-2, 0.1, 100, seed=2)
    assert not np.array_equal(a.samples, b.samples)


def test_marcus_jumps_follow_the_flow():
    model = SdeModel(zero, linear, LevyTriplet(0.0, 0.0, DiracAtOne(1.0)), Convention.MARCUS, True)
    s = simulate_paths(model, 1.0, 1.0, 0.1, 0.1, 2000, seed=4).at(1.0)
    k = np.log(s)
    np.testing.assert_allclose(k, np.round(k), atol=1e-8)
    # number of jumps is Poisson(1)
    assert np.mean(np.round(k) == 0) == pytest.approx(math.exp(-1), abs=0.04)


def test_ito_jumps_are_linear():
    model = SdeModel(zero, linear, LevyTriplet(0.0, 0.0, DiracAtOne(1.0)), Convention.ITO, True)
    s = simulate_paths(model, 1.0, 1.0, 0.1, 0.1, 2000, seed=4).at(1.0)
    k = np.log2(s)
    np.testing.assert_allclose(k, np.round(k), atol=1e-12)


def test_stable_increments_scale():
    nu = SymmetricAlphaStable(1.5, 1.0)
    model = additive(LevyTriplet(0.0, 0.0, nu), f=zero)
    s = simulate_paths(model, 0.0, 1.0, 1e-2, 0.05, 40_000, seed=8).at(1.0)
    # E cos(u L_1) = exp(-c |u|^alpha), c = -2 C Gamma(-alpha) cos(pi alpha / 2)
    c = -2.0 * math.gamma(-1.5) * math.cos(0.75 * math.pi)
    for u in (0.5, 1.0):
        assert np.mean(np.cos(u * s)) == pytest.approx(math.exp(-c * u ** 1.5), abs=0.02)


def test_blowup_is_flagged():
    model = SdeModel(lambda x, t=0.0: x ** 3, one, LevyTriplet(0.0, 0.0), autonomous=True)
    res = simulate_paths(model, 5.0, 1.0, 1e-2, 0.1, 64, seed=0)
    assert res.blown_fraction == 1.0
    with pytest.raises(PathBlowup):
        simulate_paths(model, 5.0, 1.0, 1e-2, 0.1, 64, seed=0, raise_on_blowup=True)


@pytest.mark.parametrize("kw", [dict(dt=0.0), dict(N=0), dict(eps=1.5), dict(checkpoints=[2.0])])
def test_argument_checks(example1, kw):
    args = dict(x0=1.0, T=1.0, dt=0.1, eps=0.1, N=10, seed=0)
    args.update(kw)
    with pytest.raises(ValueError):
        simulate_paths(example1, **args)


def test_samples_csv(tmp_path, example1):
    res = simulate_paths(example1, 1.0, 0.2, 0.1, 0.1, 3, seed=0, checkpoints=[0.1, 0.2])
    write_samples_csv(res, tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "path_id,t,x" and len(lines) == 7
    assert lines[1].startswith("0,0.10000000000000001,") and lines[3].startswith("1,")


class TestDensity:
    def test_spike(self):
        spec = GridSpec(-1.0, 1.0, 201)
        d = empirical_density(np.full(500, 0.25), spec, bandwidth=0.05)
        assert spec.nodes[np.argmax(d.values)] == pytest.approx(0.25, abs=spec.dx)
        assert mass(d) == pytest.approx(1.0, abs=1e-12)

    def test_normal_consistency(self):
        spec = GridSpec(-6.0, 6.0, 1201)
        s = np.random.default_rng(0).standard_normal(1_000_000)
        d = empirical_density(s, spec)
        exact = GridFunction(spec, stats.norm.pdf(spec.nodes))
        assert l1_distance(d, exact) <= 0.02

    @pytest.mark.parametrize("bw", ["auto", 0.001, 0.3])
    def test_unit_mass(self, bw):
        spec = GridSpec(0.0, 10.0, 500)
        s = np.random.default_rng(1).lognormal(0.5, 0.4, 5000)
        assert mass(empirical_density(s, spec, bw)) == pytest.approx(1.0, abs=1e-9)

    def test_binned_matches_direct(self):
        spec = GridSpec(-5.0, 5.0, 1001)
        s = np.random.default_rng(2).standard_normal(20_000)
        h = 0.2
        binned = empirical_density(s, spec, h)
        z = (spec.nodes[:, None] - s[None, :]) / h
        direct = np.exp(-0.5 * z * z).sum(axis=1) / (s.size * h * math.sqrt(2 * math.pi))
        direct /= mass(GridFunction(spec, direct))
        assert np.max(np.abs(binned.values - direct)) <= 1e-3

    def test_silverman(self):
        s = np.random.default_rng(3).standard_normal(10_000)
        assert silverman_bandwidth(s) == pytest.approx(0.9 * 10_000 ** -0.2, rel=0.05)

    def test_too_few_samples(self):
        with pytest.raises(ValueError):
            empirical_density(np.zeros(10), GridSpec(-1.0, 1.0, 32))
