"""Tamed stochastic-gradient Langevin dynamics (T-SGLD) and stationary diagnostics.

The chain is

    x_{i+1} = x_i + h * tame_modified(b^xi_i(x_i)) + sqrt(2 h / beta) * zeta_i

with fresh i.i.d. batch indices ``xi_i`` and standard normals ``zeta_i``.
Several independent chains can run side by side; chain ``c`` draws its noise
from the counter-addressed stream ``path = c`` of the configured seed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .montecarlo import SAMPLER_BATCH, SAMPLER_NOISE, SeedSpec, tree_sum
from .problems import BatchSampler, DriftField, batch_drift
from .taming import TamingConfig, tame_modified_with_flag

__all__ = [
    "SamplerConfig",
    "Chain",
    "tsgld_step",
    "run_chain",
    "lyapunov",
    "kl_histogram",
    "stationary_moment",
    "moment_stderr",
    "quartic_log_density",
]

log = logging.getLogger(__name__)

DIVERGENCE_RADIUS = 1e10

# elements of pre-drawn noise held per block of chains
_NOISE_BLOCK = 1 << 22
_CHAINS_PER_BLOCK = 1 << 14


@dataclass(frozen=True)
class SamplerConfig:
    drift: DriftField
    beta: float = 1.0
    h: float = 0.01
    taming: TamingConfig = field(default_factory=TamingConfig)
    n_steps: int = 10_000
    burn_in: int = 0
    thin: int = 1
    seed: SeedSpec = field(default_factory=SeedSpec)
    n_chains: int = 1
    x0: tuple = (0.0,)
    use_batches: bool = True
    checkpoint_every: int = 1000
    delta: float = 0.05

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.h <= 0:
            raise ValueError("step size must be positive")
        if self.n_steps < 0 or self.burn_in < 0:
            raise ValueError("n_steps and burn_in must be non-negative")
        if self.burn_in > self.n_steps:
            raise ValueError("burn_in exceeds n_steps")
        if self.thin < 1:
            raise ValueError("thin must be at least 1")
        if self.n_chains < 1:
            raise ValueError("n_chains must be at least 1")

    @property
    def dim(self):
        return len(self.x0)

    @property
    def batched(self):
        return self.use_batches and self.drift.component_count >= 2

    def retained_indices(self):
        """Iteration indices kept as samples: ``range(burn_in, n_steps, thin)``.

        When ``burn_in == n_steps`` the single state at that index is kept.
        """
        stop = max(self.n_steps, self.burn_in + 1)
        return np.arange(self.burn_in, stop, self.thin)


@dataclass
class Chain:
    """Retained samples of one or more chains.

    ``samples`` is ``(n_samples, d)``, chain-major; ``chain_ids`` gives the
    chain of every row. ``checkpoints`` rows are
    ``(step, mean lyapunov, max |X| so far)``.
    """

    samples: np.ndarray
    chain_ids: np.ndarray
    checkpoints: np.ndarray
    diverged_chains: np.ndarray
    max_abs: float

    @property
    def diverged(self):
        return bool(np.any(self.diverged_chains))


def tsgld_step(x, cfg: SamplerConfig, xi, zeta):
    """One T-SGLD update for a state ``(d,)`` or a batch ``(n, d)``.

    ``xi`` is ignored (and may be ``None``) unless the config uses batches.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x2 = np.atleast_2d(x)
    z = np.asarray(zeta, dtype=float).reshape(x2.shape)
    out = _step(x2, cfg, xi, z)
    return out[0] if single else out


def _drift(x, cfg, xi):
    if cfg.batched:
        sampler = BatchSampler(cfg.drift.component_count)
        return batch_drift(cfg.drift, sampler, xi, 0.0, x)
    return cfg.drift(0.0, x)


def _step(x, cfg, xi, z):
    b, _ = tame_modified_with_flag(_drift(x, cfg, xi), cfg.h, cfg.taming, check=False)
    return x + cfg.h * b + np.sqrt(2.0 * cfg.h / cfg.beta) * z


def lyapunov(x, delta):
    """``exp(delta * sqrt(1 + |x|^2))``; overflow gives ``inf``."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    x = np.asarray(x, dtype=float)
    with np.errstate(over="ignore"):
        v = np.exp(delta * np.sqrt(1.0 + np.sum(x * x, axis=-1)))
    return float(v) if np.ndim(v) == 0 else v


def _chain_block(cfg: SamplerConfig, chains):
    n, d = len(chains), cfg.dim
    keep = cfg.retained_indices()
    keep_pos = {int(i): j for j, i in enumerate(keep)}
    samples = np.full((len(keep), n, d), np.nan)
    x = np.empty((n, d))
    x[:] = cfg.x0
    alive = np.ones(n, dtype=bool)
    max_abs = float(np.max(np.abs(x))) if x.size else 0.0
    checkpoints = []
    n_iter = int(keep[-1])
    chunk = max(4, _NOISE_BLOCK // max(1, n * d))
    chunk -= chunk % 4
    sampler = BatchSampler(cfg.drift.component_count) if cfg.batched else None
    for s0 in range(0, n_iter + 1, chunk):
        s1 = min(s0 + chunk, n_iter + 1)
        zeta = _noise_chunk(cfg.seed, chains, s0, s1 - s0, d)
        xis = None
        if sampler is not None:
            xis = _index_chunk(cfg.seed, chains, s0, s1 - s0, sampler)
        for i in range(s0, s1):
            if i in keep_pos:
                samples[keep_pos[i]] = x
            if i and cfg.checkpoint_every and i % cfg.checkpoint_every == 0:
                lv = lyapunov(x[alive], cfg.delta) if np.any(alive) else np.array([np.inf])
                checkpoints.append((i, float(np.mean(lv)), max_abs))
            if i == n_iter:
                break
            xi = None if xis is None else xis[i - s0]
            with np.errstate(over="ignore", invalid="ignore"):
                xn = _step(x, cfg, xi, zeta[i - s0])
                bad = ~np.all(np.isfinite(xn) & (np.abs(xn) <= DIVERGENCE_RADIUS), axis=1)
            if np.any(bad & alive):
                alive &= ~bad
                log.warning("chain divergence at step %d (%d chains)", i + 1, int(bad.sum()))
            x = np.where(alive[:, None], xn, x)
            if np.any(alive):
                max_abs = max(max_abs, float(np.max(np.abs(x[alive]))))
            if not np.any(alive):
                break
        if not np.any(alive):
            break
    return samples, ~alive, np.array(checkpoints).reshape(-1, 3), max_abs


def _noise_chunk(seed, chains, start, steps, d):
    out = np.empty((steps, len(chains), d))
    for j, c in enumerate(chains):
        out[:, j, :] = seed.normals(c, steps * d, SAMPLER_NOISE, start=start * d).reshape(steps, d)
    return out


def _index_chunk(seed, chains, start, steps, sampler):
    out = np.empty((steps, len(chains)), dtype=np.int64)
    for j, c in enumerate(chains):
        out[:, j] = sampler.draw(seed.uniforms(c, steps, SAMPLER_BATCH, start=start))
    return out


def run_chain(cfg: SamplerConfig) -> Chain:
    """Run ``cfg.n_chains`` independent T-SGLD chains.

    A chain that leaves the ball of radius 1e10 or turns non-finite is
    stopped; its samples from the divergence step on are dropped.
    """
    per_block = _CHAINS_PER_BLOCK
    blocks = [range(a, min(a + per_block, cfg.n_chains))
              for a in range(0, cfg.n_chains, per_block)]
    sample_parts, id_parts, div_parts, cps = [], [], [], []
    max_abs = 0.0
    for chains in blocks:
        s, div, cp, ma = _chain_block(cfg, chains)
        # chain-major layout; NaN rows mark steps after a divergence
        s = s.transpose(1, 0, 2)
        for j, c in enumerate(chains):
            rows = s[j]
            rows = rows[np.all(np.isfinite(rows), axis=1)]
            sample_parts.append(rows)
            id_parts.append(np.full(len(rows), c, dtype=np.int64))
        div_parts.append(div)
        cps.append(cp)
        max_abs = max(max_abs, ma)
    checkpoints = _merge_checkpoints(cps, [len(b) for b in blocks])
    return Chain(
        samples=np.concatenate(sample_parts),
        chain_ids=np.concatenate(id_parts),
        checkpoints=checkpoints,
        diverged_chains=np.concatenate(div_parts),
        max_abs=max_abs,
    )


def _merge_checkpoints(parts, sizes):
    parts = [p for p in parts if len(p)]
    if not parts:
        return np.zeros((0, 3))
    n = min(len(p) for p in parts)
    w = np.array(sizes[: len(parts)], dtype=float)
    stack = np.stack([p[:n] for p in parts])
    out = stack[0].copy()
    out[:, 1] = np.einsum("b,bn->n", w, stack[:, :, 1]) / w.sum()
    out[:, 2] = stack[:, :, 2].max(axis=0)
    return out


def stationary_moment(samples, k):
    """Mean of ``X**k`` in one dimension, of ``|X|**k`` otherwise."""
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[1] == 1:
        vals = x[:, 0] ** k
    else:
        vals = np.sum(x * x, axis=1) ** (k / 2.0)
    return float(tree_sum(vals) / len(vals))


def moment_stderr(chain: Chain, k, n_batches=50):
    """Standard error of :func:`stationary_moment` for a chain.

    Uses the spread of per-chain means when there are several chains and
    batch means along the single chain otherwise.
    """
    x = chain.samples
    vals = x[:, 0] ** k if x.shape[1] == 1 else np.sum(x * x, axis=1) ** (k / 2.0)
    ids = np.unique(chain.chain_ids)
    if len(ids) > 1:
        means = np.array([vals[chain.chain_ids == c].mean() for c in ids])
    else:
        usable = len(vals) - len(vals) % n_batches
        means = vals[:usable].reshape(n_batches, -1).mean(axis=1)
    return float(means.std(ddof=1) / np.sqrt(len(means)))


def quartic_log_density(x, beta=1.0):
    """Unnormalised log density of the Gibbs measure with ``U = x^4 / 4``."""
    x = np.asarray(x, dtype=float)
    return -beta * np.sum(x**4, axis=-1) / 4.0


def _bin_masses_1d(logp, lo, hi, bins, refine):
    width = (hi - lo) / bins
    # extended grid of the same spacing; tails fold into the boundary bins
    pad = bins
    n_fine = (bins + 2 * pad) * refine
    step = width / refine
    mids = lo - pad * width + step * (np.arange(n_fine) + 0.5)
    dens = np.exp(logp(mids[:, None]))
    mass = dens.reshape(-1, refine).sum(axis=1) * step
    inner = mass[pad: pad + bins].copy()
    inner[0] += mass[:pad].sum()
    inner[-1] += mass[pad + bins:].sum()
    return inner


def _bin_masses_2d(logp, lo, hi, bins, refine):
    width = (hi - lo) / bins
    pad = bins
    n_fine = (bins + 2 * pad) * refine
    step = width / refine
    g = lo - pad * width + step * (np.arange(n_fine) + 0.5)
    xx, yy = np.meshgrid(g, g, indexing="ij")
    dens = np.exp(logp(np.stack([xx, yy], axis=-1)))
    nb = bins + 2 * pad
    mass = dens.reshape(nb, refine, nb, refine).sum(axis=(1, 3)) * step * step
    # fold the padding into the boundary rows/columns
    idx = np.clip(np.arange(nb) - pad, 0, bins - 1)
    folded = np.zeros((bins, bins))
    np.add.at(folded, (idx[:, None], idx[None, :]), mass)
    return folded


def kl_histogram(samples, target_log_density, bins=128, range=(-4.0, 4.0), refine=8):
    """Plug-in KL divergence of the sample histogram from the binned target.

    The target is normalised on the bin grid by composite midpoint
    quadrature; probability outside ``range`` (target mass and samples
    alike) is folded into the boundary bins. Supports 1 and 2 dimensions.
    The plug-in estimate is biased upwards by roughly
    ``(bins**d - 1) / (2 n)``.
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    d = x.shape[1]
    if d not in (1, 2):
        raise ValueError("kl_histogram supports 1 or 2 dimensions")
    lo, hi = map(float, range)
    if not hi > lo:
        raise ValueError("empty histogram range")
    inside = np.all((x >= lo) & (x <= hi), axis=1)
    if not np.any(inside):
        raise ValueError("kl_histogram: all samples outside the histogram range")
    masses = (_bin_masses_1d if d == 1 else _bin_masses_2d)(
        target_log_density, lo, hi, bins, refine
    )
    total = masses.sum()
    if not total > 0:
        raise ValueError("kl_histogram: target quadrature mass is not positive")
    q = np.maximum(masses / total, np.finfo(float).tiny)
    width = (hi - lo) / bins
    idx = np.clip(np.floor((x - lo) / width).astype(np.int64), 0, bins - 1)
    if d == 1:
        counts = np.bincount(idx[:, 0], minlength=bins)
    else:
        counts = np.bincount(idx[:, 0] * bins + idx[:, 1], minlength=bins * bins)
        counts = counts.reshape(bins, bins)
    p = counts / counts.sum()
    nz = p > 0
    return float(np.sum(p[nz] * np.log(p[nz] / q[nz])))
