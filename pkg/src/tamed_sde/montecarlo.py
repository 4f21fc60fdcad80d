"""Reproducible random streams, coupled Brownian lattices and ensemble runs.

Random numbers are counter addressed. A draw is identified by
``(master_seed, draw_type, level, scheme, path, position)``:

* ``tag = SeedSequence(master_seed, spawn_key=(draw_type, level, scheme))``
  reduced to one ``uint64`` via ``generate_state``;
* the generator is ``numpy.random.Philox(key=[tag, path])`` with the counter
  starting at zero, so raw 64-bit word ``j`` sits at counter ``j // 4``,
  lane ``j % 4``;
* a uniform is ``((word >> 11) + 0.5) * 2**-53`` and a standard normal is
  ``scipy.special.ndtri`` of that uniform.

Any draw is therefore computable without replaying other paths, and results
do not depend on how paths are grouped into blocks or spread over workers.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.random import Philox, SeedSequence
from scipy.special import ndtri

from .problems import BatchSampler, SdeProblem
from .schemes import SCHEMES, check_scheme, integrate_batch
from .taming import TamingConfig

__all__ = [
    "GAUSSIAN",
    "BATCH",
    "SAMPLER_NOISE",
    "SAMPLER_BATCH",
    "SeedSpec",
    "BrownianLattice",
    "EnsembleResult",
    "coarsen",
    "simulate_coupled",
    "default_workers",
    "tree_sum",
]

log = logging.getLogger(__name__)

# draw types
GAUSSIAN = 0
BATCH = 1
SAMPLER_NOISE = 2
SAMPLER_BATCH = 3

_U53 = 2.0**-53

# cap on lattice elements held in memory per block of paths
_BLOCK_ELEMENTS = 1 << 23


@lru_cache(maxsize=256)
def _tag(master_seed, draw_type, level, scheme):
    ss = SeedSequence(master_seed, spawn_key=(draw_type, level, scheme))
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class SeedSpec:
    master_seed: int = 0

    def __post_init__(self):
        if not (0 <= int(self.master_seed) < 2**64):
            raise ValueError("master_seed must be a 64-bit unsigned integer")

    def tag(self, draw_type, level=0, scheme=0):
        return _tag(int(self.master_seed), int(draw_type), int(level), int(scheme))

    def raw(self, path, count, draw_type, level=0, scheme=0, start=0):
        """``count`` raw 64-bit words of one path's stream from word ``start``."""
        key = [self.tag(draw_type, level, scheme), int(path)]
        bg = Philox(key=key, counter=[start // 4, 0, 0, 0])
        words = bg.random_raw(count + start % 4)
        return words[start % 4:]

    def uniforms(self, path, count, draw_type, level=0, scheme=0, start=0):
        words = self.raw(path, count, draw_type, level, scheme, start)
        return ((words >> np.uint64(11)).astype(np.float64) + 0.5) * _U53

    def normals(self, path, count, draw_type, level=0, scheme=0, start=0):
        return ndtri(self.uniforms(path, count, draw_type, level, scheme, start))

    def normals_block(self, paths, n_steps, width, draw_type, level=0, scheme=0):
        """Standard normals of shape ``(n_steps, len(paths), width)``."""
        tag = self.tag(draw_type, level, scheme)
        out = np.empty((len(paths), n_steps * width), dtype=np.uint64)
        for i, p in enumerate(paths):
            out[i] = Philox(key=[tag, int(p)]).random_raw(n_steps * width)
        u = ((out >> np.uint64(11)).astype(np.float64) + 0.5) * _U53
        z = ndtri(u).reshape(len(paths), n_steps, width)
        return np.ascontiguousarray(z.transpose(1, 0, 2))

    def indices_block(self, paths, n_steps, sampler: BatchSampler, level, scheme,
                      draw_type=BATCH):
        """Batch indices of shape ``(n_steps, len(paths))``."""
        tag = self.tag(draw_type, level, scheme)
        out = np.empty((len(paths), n_steps), dtype=np.uint64)
        for i, p in enumerate(paths):
            out[i] = Philox(key=[tag, int(p)]).random_raw(n_steps)
        u = ((out >> np.uint64(11)).astype(np.float64) + 0.5) * _U53
        return np.ascontiguousarray(sampler.draw(u).T)


@dataclass
class BrownianLattice:
    """Fine-grid Brownian increments for a block of paths.

    ``increments`` has shape ``(n_fine, n_paths, noise_dim)`` with variance
    ``h_ref`` per coordinate.
    """

    fine_level: int
    h_ref: float
    increments: np.ndarray

    @classmethod
    def generate(cls, seed: SeedSpec, paths, fine_level, horizon, noise_dim):
        h_ref = 2.0**-fine_level
        n_fine = _step_count(horizon, h_ref)
        z = seed.normals_block(paths, n_fine, noise_dim, GAUSSIAN)
        z *= np.sqrt(h_ref)
        return cls(fine_level, h_ref, z)

    @property
    def n_fine(self):
        return self.increments.shape[0]


def _step_count(horizon, h):
    n = horizon / h
    if n != int(n) or n < 0:
        raise ValueError(f"horizon {horizon} is not a whole number of steps of {h}")
    return int(n)


def coarsen(lattice, m):
    """Increments at step ``2**m * h_ref``.

    Level ``m`` is built from level ``m - 1`` by adding adjacent pairs, so a
    coarse increment is the nested pairwise sum of its fine increments and
    the Brownian value at any shared grid time is the same tree sum at every
    level. ``m = 0`` returns the fine increments unchanged.
    """
    inc = lattice.increments if isinstance(lattice, BrownianLattice) else np.asarray(lattice)
    fine_level = lattice.fine_level if isinstance(lattice, BrownianLattice) else None
    if m < 0 or (fine_level is not None and m > fine_level):
        raise ValueError(f"coarsening level {m} out of range")
    n = inc.shape[0]
    if n % (1 << m):
        raise ValueError(f"{n} fine steps do not split into blocks of {1 << m}")
    for _ in range(m):
        inc = inc[0::2] + inc[1::2]
    return inc


def tree_sum(values, axis=0):
    """Pairwise sum along ``axis`` with a fixed nesting (odd tails carried)."""
    v = np.moveaxis(np.asarray(values, dtype=float), axis, 0)
    if v.shape[0] == 0:
        return np.zeros(v.shape[1:])
    while v.shape[0] > 1:
        if v.shape[0] % 2:
            head = v[:-1:2] + v[1::2]
            v = np.concatenate([head, v[-1:]], axis=0)
        else:
            v = v[0::2] + v[1::2]
    return v[0]


@dataclass
class EnsembleResult:
    """Terminal states of coupled runs.

    ``terminal[(scheme, k)]`` and ``reference`` are ``(M, d)`` arrays where
    ``k`` is the step exponent (``h = 2**-k``). ``active[(scheme, k)]``
    counts taming-active steps per path.
    """

    problem: str
    schemes: tuple
    levels: tuple
    k_ref: int
    M: int
    seed: SeedSpec
    reference: np.ndarray
    terminal: dict = field(default_factory=dict)
    active: dict = field(default_factory=dict)
    reference_active: np.ndarray | None = None
    horizon: float = 1.0

    def h(self, k):
        return 2.0**-k

    def steps(self, k):
        return _step_count(self.horizon, 2.0**-k)

    def diverged(self, scheme, k):
        return int(np.sum(~np.all(np.isfinite(self.terminal[(scheme, k)]), axis=1)))

    @property
    def reference_diverged(self):
        return int(np.sum(~np.all(np.isfinite(self.reference), axis=1)))


def default_workers():
    env = os.environ.get("TAMED_SDE_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _block_size(n_fine, width):
    b = max(4, _BLOCK_ELEMENTS // max(1, n_fine * width))
    return b - b % 4


def _run_block(problem, schemes, cfg, k_ref, levels, seed, start, stop):
    paths = range(start, stop)
    lattice = BrownianLattice.generate(
        seed, paths, k_ref, problem.horizon, problem.noise_dim
    )
    ref, ref_act = integrate_batch("mte", problem, cfg, lattice.h_ref, lattice.increments)
    terminal, active = {}, {}
    for k in levels:
        m = k_ref - k
        inc = coarsen(lattice, m)
        h = 2.0**-k
        for s in schemes:
            xi = None
            if s == "mte_rbm":
                sampler = BatchSampler(problem.drift.component_count)
                xi = seed.indices_block(paths, inc.shape[0], sampler, k, SCHEMES.index(s))
            x, act = integrate_batch(s, problem, cfg, h, inc, xi)
            terminal[(s, k)] = x
            active[(s, k)] = act
    return ref, ref_act, terminal, active


def simulate_coupled(
    problem: SdeProblem,
    schemes,
    cfg: TamingConfig,
    k_ref: int,
    levels,
    M: int,
    seed: SeedSpec,
    workers: int | None = 1,
    block_size: int | None = None,
) -> EnsembleResult:
    """Run the fine-grid mte reference and every scheme at every coarse level.

    All runs of one path share one Brownian lattice; coarse increments are
    exact pairwise aggregates of the fine ones. ``levels`` are step exponents
    ``k`` (``h = 2**-k``) with ``k < k_ref``. Output is independent of
    ``workers`` and ``block_size``.
    """
    schemes = tuple(schemes)
    levels = tuple(int(k) for k in levels)
    if not schemes:
        raise ValueError("no schemes requested")
    if M < 1:
        raise ValueError("path count must be at least 1")
    for s in schemes:
        check_scheme(s, problem)
    for k in levels:
        if k >= k_ref:
            raise ValueError(f"level 2^-{k} is not coarser than the reference 2^-{k_ref}")
        _step_count(problem.horizon, 2.0**-k)
    n_fine = _step_count(problem.horizon, 2.0**-k_ref)
    bs = block_size or _block_size(n_fine, problem.noise_dim)
    bounds = [(a, min(a + bs, M)) for a in range(0, M, bs)]
    args = (problem, schemes, cfg, k_ref, levels, seed)
    workers = workers or default_workers()
    log.info("simulate_coupled: %s, %d paths in %d blocks, %d workers",
             problem.name, M, len(bounds), workers)
    if workers > 1 and len(bounds) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(bounds))) as ex:
            futures = [ex.submit(_run_block, *args, a, b) for a, b in bounds]
            parts = [f.result() for f in futures]
    else:
        parts = [_run_block(*args, a, b) for a, b in bounds]

    res = EnsembleResult(
        problem=problem.name, schemes=schemes, levels=levels, k_ref=k_ref, M=M,
        seed=seed,
        reference=np.concatenate([p[0] for p in parts]),
        reference_active=np.concatenate([p[1] for p in parts]),
        horizon=problem.horizon,
    )
    for key in parts[0][2]:
        res.terminal[key] = np.concatenate([p[2][key] for p in parts])
        res.active[key] = np.concatenate([p[3][key] for p in parts])
    return res
