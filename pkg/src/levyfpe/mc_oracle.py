"""Monte Carlo paths of Lévy-driven SDEs and kernel density estimates.

Between jumps the path follows an Euler step driven by the continuous part
of the Lévy-Itô decomposition: drift, Brownian motion, a Gaussian stand-in for
the jumps below ``eps`` and the compensator of the jumps in ``eps <= |y| < 1``.
Jumps with ``|y| >= eps`` arrive on a per-path exponential clock and split the
Euler step, so the jump always sees the pre-jump state.

Reproducibility: paths are simulated in fixed-size blocks, each with its own
stream derived from ``(seed, block index)``.  The result does not depend on
how many worker threads process the blocks.
"""
from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy import signal, stats

from .grid import GridFunction, GridSpec, trapezoid_weights
from .levy_core import (compensator_drift, large_jump_rate, sample_large_jumps,
                        small_jump_variance)
from .marcus import flow_batch
from .model import Convention, SdeModel

__all__ = ["EnsembleResult", "PathBlowup", "simulate_paths", "empirical_density",
           "silverman_bandwidth", "write_samples_csv", "BLOCK_SIZE", "PATH_BOUND"]

log = logging.getLogger(__name__)

BLOCK_SIZE = 4096
PATH_BOUND = 1e8


class PathBlowup(ArithmeticError):
    """Raised on request when any path exceeded the magnitude bound."""


@dataclass(frozen=True, eq=False)
class EnsembleResult:
    """Samples of ``X_t`` at the checkpoint times.

    ``samples[i]`` holds the ``n_paths`` values at ``checkpoint_times[i]``.
    ``blown`` flags paths that left ``|x| < PATH_BOUND``; their samples are
    frozen at the last state inside the bound.
    """

    checkpoint_times: np.ndarray
    samples: np.ndarray
    seed: int
    n_paths: int
    blown: np.ndarray = field(default=None)

    @property
    def blown_fraction(self) -> float:
        return float(np.mean(self.blown)) if self.blown is not None else 0.0

    def at(self, t: float) -> np.ndarray:
        i = int(np.argmin(np.abs(self.checkpoint_times - t)))
        if not math.isclose(self.checkpoint_times[i], t, rel_tol=1e-9, abs_tol=1e-12):
            raise KeyError(f"no samples stored at t={t}")
        return self.samples[i]

    def density(self, t: float, spec: GridSpec, bandwidth="auto") -> GridFunction:
        """KDE of the unflagged samples at time ``t``."""
        s = self.at(t)
        if self.blown is not None:
            s = s[~self.blown]
        return empirical_density(s, spec, bandwidth)


def _initial(x0, rng, n):
    if callable(x0):
        return np.asarray(x0(rng, n), dtype=float).copy()
    return np.full(n, float(x0))


class _Block:
    """State and stepping of one block of paths."""

    def __init__(self, model: SdeModel, eps: float, rng: np.random.Generator, x: np.ndarray):
        self.model = model
        self.rng = rng
        self.x = x
        nu = model.triplet.nu
        tr = model.triplet
        self.nu = nu
        self.eps = eps
        self.rate = large_jump_rate(nu, eps)
        self.var = tr.A + small_jump_variance(nu, eps)
        self.mean = tr.b - compensator_drift(nu, eps)
        self.marcus = model.convention is Convention.MARCUS
        self.blown = np.zeros(x.size, dtype=bool)
        self.clock = self._draw_clock(x.size)

    def _draw_clock(self, n):
        if self.rate == 0.0:
            return np.full(n, math.inf)
        return self.rng.exponential(1.0 / self.rate, n)

    def _continuous(self, idx, t, h):
        x = self.x[idx]
        m = self.model
        sig = m.noise(x, t)
        z = self.rng.standard_normal(idx.size)
        dx = m.drift(x, t) * h + sig * (self.mean * h + np.sqrt(self.var * h) * z)
        if self.marcus:
            # Stratonovich correction of the continuous and small-jump parts
            dx = dx + 0.5 * sig * m.noise_derivative(x, t) * self.var * h
        self.x[idx] = x + dx

    def _jump(self, idx, t):
        y = sample_large_jumps(self.nu, self.eps, self.rng, idx.size)
        x = self.x[idx]
        m = self.model
        if not self.marcus:
            self.x[idx] = x + m.noise(x, t) * y
        elif m.sigma_constant is not None:
            self.x[idx] = x + m.sigma_constant * y
        else:
            new, blown = flow_batch(y, lambda u: m.noise(u, t), x, PATH_BOUND)
            self.x[idx] = np.where(blown, x, new)
            self.blown[idx] |= blown
        self.clock[idx] = self._draw_clock(idx.size)

    def step(self, t, h):
        """Advance every live path from ``t`` to ``t + h``."""
        live = np.nonzero(~self.blown)[0]
        elapsed = np.zeros(live.size)
        while live.size:
            remaining = h - elapsed
            sub = np.minimum(self.clock[live], remaining)
            moving = sub > 0
            if np.any(moving):
                self._continuous(live[moving], t + elapsed[moving], sub[moving])
            self.clock[live] -= sub
            elapsed = np.where(sub == remaining, h, elapsed + sub)
            jumping = self.clock[live] <= 0.0
            if np.any(jumping):
                self._jump(live[jumping], t + elapsed[jumping])
            self._flag(live)
            keep = (elapsed < h) & ~self.blown[live]
            live, elapsed = live[keep], elapsed[keep]

    def _flag(self, idx):
        x = self.x[idx]
        bad = ~np.isfinite(x) | (np.abs(x) >= PATH_BOUND)
        if np.any(bad):
            self.blown[idx[bad]] = True
            self.x[idx[bad]] = np.clip(np.nan_to_num(x[bad], nan=PATH_BOUND), -PATH_BOUND, PATH_BOUND)


def _run_block(model, x0, T, dt, eps, seed, block, size, checkpoints):
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(block,)))
    b = _Block(model, eps, rng, _initial(x0, rng, size))
    out = np.empty((len(checkpoints), size))
    t = 0.0
    for i, tb in enumerate(checkpoints):
        nsteps = max(1, math.ceil((tb - t) / dt - 1e-9)) if tb > t else 0
        h = (tb - t) / nsteps if nsteps else 0.0
        t0 = t
        for k in range(nsteps):
            b.step(t0 + k * h, h)
        t = tb
        out[i] = b.x
    return out, b.blown


def simulate_paths(model: SdeModel, x0: Union[float, Callable], T: float, dt: float, eps: float,
                   N: int, seed: int, checkpoints: Optional[Sequence[float]] = None,
                   threads: Optional[int] = None, raise_on_blowup: bool = False) -> EnsembleResult:
    """Simulate ``N`` paths to ``T`` and record them at ``checkpoints`` (default ``[T]``).

    ``x0`` is a number or a callable ``(rng, n) -> array`` sampling the
    initial law.  Flagged (blown-up) paths are logged and kept; pass
    ``raise_on_blowup`` to turn them into a :class:`PathBlowup` error.
    """
    if not dt > 0:
        raise ValueError("dt must be > 0")
    if int(N) != N or N < 1:
        raise ValueError("N must be a positive integer")
    if not 0.0 < eps <= 1.0:
        raise ValueError("eps must lie in (0, 1]")
    if model.convention is Convention.MARCUS and not model.autonomous:
        raise ValueError("Marcus convention requires a time-independent sigma(x)")
    cps = sorted(set(float(c) for c in (checkpoints or (T,))))
    if cps[0] < 0 or cps[-1] > T * (1 + 1e-12):
        raise ValueError(f"checkpoints must lie in [0, T={T}]")
    N = int(N)
    sizes = [min(BLOCK_SIZE, N - start) for start in range(0, N, BLOCK_SIZE)]
    workers = threads or min(len(sizes), os.cpu_count() or 1)

    def job(block):
        return _run_block(model, x0, T, dt, eps, seed, block, sizes[block], cps)

    if workers <= 1:
        parts = [job(b) for b in range(len(sizes))]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(job, range(len(sizes))))
    samples = np.concatenate([p[0] for p in parts], axis=1)
    blown = np.concatenate([p[1] for p in parts])
    if np.any(blown):
        log.warning("%d of %d paths exceeded |x| = %g and were flagged", int(blown.sum()), N, PATH_BOUND)
        if raise_on_blowup:
            raise PathBlowup(f"{int(blown.sum())} paths exceeded |x| = {PATH_BOUND:g}")
    return EnsembleResult(np.array(cps), samples, int(seed), N, blown)


# ---------------------------------------------------------------------------
# density estimation
# ---------------------------------------------------------------------------


def silverman_bandwidth(samples) -> float:
    s = np.asarray(samples, dtype=float)
    sd = float(np.std(s, ddof=1))
    iqr = float(stats.iqr(s))
    spread = min(sd, iqr / 1.34) if iqr > 0 else sd
    return 0.9 * spread * s.size ** (-0.2)


def empirical_density(samples, spec: GridSpec, bandwidth: Union[str, float] = "auto") -> GridFunction:
    """Gaussian-kernel density estimate on ``spec``, scaled to unit trapezoid mass.

    ``bandwidth="auto"`` uses Silverman's rule, falling back to the grid
    spacing for degenerate samples.
    """
    s = np.asarray(samples, dtype=float)
    s = s[np.isfinite(s)]
    if s.size < 100:
        raise ValueError(f"need at least 100 finite samples, got {s.size}")
    h = silverman_bandwidth(s) if bandwidth == "auto" else float(bandwidth)
    if not h > 0:
        h = spec.dx
    x = spec.nodes
    if h >= 2.0 * spec.dx:
        values = _binned_kde(s, spec, h)
    else:
        values = np.zeros(spec.n)
        for lo in range(0, s.size, 2048):
            z = (x[:, None] - s[None, lo:lo + 2048]) / h
            values += np.exp(-0.5 * z * z).sum(axis=1)
        values /= s.size * h * math.sqrt(2.0 * math.pi)
    total = float(trapezoid_weights(spec) @ values)
    if not total > 0:
        raise ValueError("no sample mass falls on the grid")
    return GridFunction(spec, values / total)


def _binned_kde(s, spec: GridSpec, h):
    """Linear binning on a padded copy of the grid, then a sampled-kernel convolution."""
    dx = spec.dx
    pad = int(math.ceil(6.0 * h / dx))
    u = (s - spec.x_min) / dx + pad
    m = spec.n + 2 * pad
    inside = (u >= 0) & (u <= m - 1)
    u = u[inside]
    j = np.minimum(np.floor(u).astype(np.int64), m - 2)
    frac = u - j
    counts = np.bincount(j, weights=1.0 - frac, minlength=m) + np.bincount(j + 1, weights=frac, minlength=m)
    k = np.arange(-pad, pad + 1) * dx / h
    kernel = np.exp(-0.5 * k * k) / (h * math.sqrt(2.0 * math.pi))
    dens = signal.fftconvolve(counts[:m], kernel, mode="same") / s.size
    return np.maximum(dens[pad:pad + spec.n], 0.0)


def write_samples_csv(result: EnsembleResult, path) -> None:
    """``path_id,t,x`` rows, path-outer, 17 significant digits."""
    m, n = result.samples.shape
    ids = np.repeat(np.arange(n), m)
    t = np.tile(result.checkpoint_times, n)
    x = result.samples.T.ravel()
    np.savetxt(path, np.column_stack([ids, t, x]), fmt=["%d", "%.17g", "%.17g"],
               delimiter=",", header="path_id,t,x", comments="")
