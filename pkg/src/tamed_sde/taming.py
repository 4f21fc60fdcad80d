"""Drift-transform kernels: the cut-off function and the tamed/truncated drifts.

All kernels accept either a single d-vector of shape ``(d,)`` or a batch of
vectors of shape ``(n, d)``; norms are taken over the last axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "TamingConfig",
    "cutoff_psi",
    "tame_modified",
    "tame_modified_with_flag",
    "tame_classic",
    "project_radial",
    "truncate_drift",
]

# Inside this distance from the branch points the bridge is replaced by the
# neighbouring constant branch; (r - 1)**-1 would otherwise overflow first.
_EDGE = 1e-12


@dataclass(frozen=True)
class TamingConfig:
    """Parameters of the modified taming ``b / (1 + psi(gamma h^alpha |b|))``."""

    alpha: float = 0.5
    gamma: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.alpha <= 0.5):
            raise ValueError(f"alpha outside (0, 1/2]: {self.alpha}")
        if not (self.gamma > 0.0 and np.isfinite(self.gamma)):
            raise ValueError(f"gamma must be positive and finite: {self.gamma}")


def _bridge(r):
    # smooth step weight on (1, 2); exp underflows to 0 gracefully near the ends
    with np.errstate(over="ignore", divide="ignore"):
        lo = np.exp(-1.0 / (r - 1.0))
        hi = np.exp(-1.0 / (2.0 - r))
    return lo / (lo + hi) * r


def cutoff_psi(r):
    """Cut-off function: 0 on [0, 1], identity on [2, inf), smooth in between.

    Works on scalars and arrays. Raises ``ValueError`` on negative or
    non-finite input.
    """
    arr = np.asarray(r, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("cutoff_psi: non-finite argument")
    if np.any(arr < 0):
        raise ValueError("cutoff_psi: negative argument")
    out = _psi(arr)
    if np.ndim(r) == 0:
        return float(out)
    return out


def _psi(arr):
    out = np.where(arr >= 2.0 - _EDGE, arr, 0.0)
    mid = (arr > 1.0 + _EDGE) & (arr < 2.0 - _EDGE)
    if np.any(mid):
        out = np.where(mid, _bridge(np.where(mid, arr, 1.5)), out)
    return out


def _norm(v):
    return np.sqrt(np.sum(v * v, axis=-1, keepdims=True))


def tame_modified_with_flag(b_value, h, cfg: TamingConfig, check=True):
    """Modified tamed drift plus a boolean mask of where taming was active.

    The mask has the batch shape of ``b_value`` (trailing axis dropped).
    ``check=False`` skips input validation; integrators use it so that
    diverging paths propagate inf/nan instead of raising.
    """
    b = np.asarray(b_value, dtype=float)
    if check:
        if h <= 0:
            raise ValueError(f"step size must be positive: {h}")
        if not np.all(np.isfinite(b)):
            raise ValueError("tame_modified: non-finite drift value")
    r = cfg.gamma * h**cfg.alpha * _norm(b)
    active = r > 1.0
    if not np.any(active):
        # identity region: return the input untouched, bit for bit
        return b.copy(), active[..., 0]
    with np.errstate(invalid="ignore"):
        psi = _psi(np.where(active, r, 0.0))
    return np.where(active, b / (1.0 + psi), b), active[..., 0]


def tame_modified(b_value, h, cfg: TamingConfig):
    """Return ``b / (1 + psi(gamma h^alpha |b|))``.

    Equals ``b`` exactly wherever ``gamma h^alpha |b| <= 1`` and is bounded
    in norm by ``min(2 / (gamma h^alpha), |b|)``.
    """
    return tame_modified_with_flag(b_value, h, cfg)[0]


def tame_classic(b_value, h, alpha, check=True):
    """Classical taming ``b / (1 + h^alpha |b|)``."""
    b = np.asarray(b_value, dtype=float)
    if check:
        if h <= 0:
            raise ValueError(f"step size must be positive: {h}")
        if not np.all(np.isfinite(b)):
            raise ValueError("tame_classic: non-finite drift value")
    return b / (1.0 + h**alpha * _norm(b))


def project_radial(x, radius):
    """Map ``x`` to ``min(|x|, radius) x / |x|``; zero stays zero."""
    if radius <= 0:
        raise ValueError(f"radius must be positive: {radius}")
    x = np.asarray(x, dtype=float)
    nrm = _norm(x)
    outside = nrm > radius
    if not np.any(outside):
        return x
    scale = np.where(outside, radius / np.where(outside, nrm, 1.0), 1.0)
    return np.where(outside, x * scale, x)


def truncate_drift(drift, t, x, radius):
    """Evaluate ``drift(t, .)`` at the radially projected state."""
    return drift(t, project_radial(x, radius))
