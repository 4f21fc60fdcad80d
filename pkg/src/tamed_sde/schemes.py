"""One-step explicit integrators and their fold over a uniform grid.

Coefficients are frozen at the left grid point. Kernels operate on a batch
of states ``x`` with shape ``(n, d)``; :func:`step` also accepts a single
state of shape ``(d,)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .problems import BatchSampler, SdeProblem, batch_drift
from .taming import (
    TamingConfig,
    project_radial,
    tame_classic,
    tame_modified_with_flag,
)

__all__ = [
    "SCHEMES",
    "StepInput",
    "UnsupportedSchemeError",
    "step",
    "step_batch",
    "integrate_path",
    "integrate_batch",
    "check_scheme",
]

SCHEMES = (
    "euler_maruyama",
    "tamed_euler",
    "mte",
    "mte_rbm",
    "milstein",
    "modified_tamed_milstein",
    "truncated_euler",
)

_MILSTEIN = ("milstein", "modified_tamed_milstein")


class UnsupportedSchemeError(ValueError):
    pass


@dataclass(frozen=True)
class StepInput:
    t: float
    x: np.ndarray
    h: float
    dW: np.ndarray
    xi: object = None


def check_scheme(scheme: str, problem: SdeProblem):
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; valid names: {', '.join(SCHEMES)}")
    diff = problem.diffusion
    if scheme in _MILSTEIN and not diff.is_additive:
        if diff.sigma_grad is None:
            raise UnsupportedSchemeError(f"{scheme} needs sigma_grad for {problem.name}")
        if diff.noise_dim > 1 and not diff.is_diagonal:
            raise UnsupportedSchemeError(
                f"{scheme} supports scalar, diagonal or additive noise only"
            )
    if scheme == "mte_rbm" and problem.drift.component_count < 2:
        raise UnsupportedSchemeError(f"{problem.name} has no batch decomposition")


def _noise(sig, dW):
    return np.einsum("nik,nk->ni", sig, dW)


def _milstein_correction(problem, t, x, sig, dW, h):
    # 0.5 * sum_{j,k} sigma_jk d_j sigma_ik (dW_k^2 - h); exact for scalar or
    # diagonal noise, where the iterated integrals reduce to (dW^2 - h) / 2
    grad = problem.diffusion.sigma_grad(t, x)
    lsig = np.einsum("njk,nikj->nik", sig, grad)
    return 0.5 * np.einsum("nik,nk->ni", lsig, dW * dW - h)


def step_batch(scheme, problem, cfg, t, x, h, dW, xi=None):
    """Advance a batch of states one step.

    Returns ``(x_next, active)`` where ``active`` flags the rows whose drift
    was modified by taming or truncation.
    """
    drift = problem.drift
    if scheme == "truncated_euler":
        radius = h ** (-cfg.alpha)
        xp = project_radial(x, radius)
        active = np.sum(x * x, axis=-1) > radius * radius
        return x + drift(t, xp) * h + _noise(problem.diffusion(t, xp), dW), active
    if scheme == "mte_rbm":
        if xi is None:
            raise ValueError("mte_rbm needs a batch index per step")
        b = batch_drift(drift, BatchSampler(drift.component_count), xi, t, x)
    else:
        if xi is not None:
            raise ValueError(f"{scheme} takes no batch index")
        b = drift(t, x)

    if scheme in ("mte", "mte_rbm", "modified_tamed_milstein"):
        b, active = tame_modified_with_flag(b, h, cfg, check=False)
    elif scheme == "tamed_euler":
        b = tame_classic(b, h, cfg.alpha, check=False)
        active = np.any(b != 0.0, axis=-1)
    elif scheme in ("euler_maruyama", "milstein"):
        active = np.zeros(x.shape[0], dtype=bool)
    else:
        raise ValueError(f"unknown scheme {scheme!r}; valid names: {', '.join(SCHEMES)}")

    sig = problem.diffusion(t, x)
    x_next = x + b * h + _noise(sig, dW)
    if scheme in _MILSTEIN and not problem.diffusion.is_additive:
        x_next = x_next + _milstein_correction(problem, t, x, sig, dW, h)
    return x_next, active


def step(scheme: str, problem: SdeProblem, cfg: TamingConfig, inp: StepInput):
    """Return the next state for one step of ``scheme``."""
    check_scheme(scheme, problem)
    if inp.h <= 0:
        raise ValueError("step size must be positive")
    x = np.asarray(inp.x, dtype=float)
    single = x.ndim == 1
    x2 = np.atleast_2d(x)
    dW = np.asarray(inp.dW, dtype=float).reshape(x2.shape[0], -1)
    if dW.shape[1] != problem.noise_dim:
        raise ValueError(
            f"dW has width {dW.shape[1]}, diffusion expects {problem.noise_dim}"
        )
    if (inp.xi is None) != (scheme != "mte_rbm"):
        raise ValueError("xi must be given exactly when scheme is mte_rbm")
    out, _ = step_batch(scheme, problem, cfg, inp.t, x2, inp.h, dW, inp.xi)
    return out[0] if single else out


def integrate_batch(
    scheme, problem, cfg, h, increments, xi_stream=None, x0=None, t0=0.0,
    observer=None, stop_on_nonfinite=True,
):
    """Fold :func:`step_batch` over ``increments`` of shape ``(steps, n, d')``.

    Returns ``(terminal_states, active_counts)``; ``active_counts[i]`` is the
    number of steps on which path ``i`` had its drift modified. ``observer``,
    when given, is called as ``observer(k, x)`` after every step ``k``.
    Paths that turn non-finite are frozen at that non-finite value.
    """
    check_scheme(scheme, problem)
    inc = np.asarray(increments, dtype=float)
    if inc.ndim != 3:
        raise ValueError("increments must have shape (steps, paths, noise_dim)")
    n_steps, n, m = inc.shape
    if m != problem.noise_dim:
        raise ValueError(f"increment width {m} != noise dimension {problem.noise_dim}")
    if (xi_stream is None) != (scheme != "mte_rbm"):
        raise ValueError("xi_stream must be given exactly when scheme is mte_rbm")
    if xi_stream is not None:
        xi_stream = np.asarray(xi_stream)
        if xi_stream.shape != (n_steps, n):
            raise ValueError(
                f"xi_stream shape {xi_stream.shape} != (steps, paths) {(n_steps, n)}"
            )
    x = np.empty((n, problem.dim))
    x[:] = problem.x0 if x0 is None else x0
    active = np.zeros(n, dtype=np.int64)
    alive = None
    for k in range(n_steps):
        xi = None if xi_stream is None else xi_stream[k]
        t = t0 + k * h
        if alive is None:
            with np.errstate(over="ignore", invalid="ignore"):
                x, act = step_batch(scheme, problem, cfg, t, x, h, inc[k], xi)
            active += act
            if stop_on_nonfinite and not np.all(np.isfinite(x)):
                alive = np.all(np.isfinite(x), axis=-1)
        else:
            idx = np.flatnonzero(alive)
            sub_xi = None if xi is None else xi[idx]
            with np.errstate(over="ignore", invalid="ignore"):
                xs, act = step_batch(scheme, problem, cfg, t, x[idx], h, inc[k, idx], sub_xi)
            x[idx] = xs
            active[idx] += act
            alive[idx] = np.all(np.isfinite(xs), axis=-1)
        if observer is not None:
            observer(k, x)
    return x, active


def integrate_path(scheme, problem, cfg, h, increments, xi_stream=None):
    """Terminal state of a single path driven by ``increments`` ``(steps, d')``."""
    inc = np.asarray(increments, dtype=float)
    if inc.ndim == 1:
        inc = inc[:, None]
    inc = inc.reshape(inc.shape[0], 1, -1) if inc.size else np.zeros((0, 1, problem.noise_dim))
    xi = None if xi_stream is None else np.asarray(xi_stream).reshape(-1, 1)
    x, _ = integrate_batch(scheme, problem, cfg, h, inc, xi)
    return x[0]
