"""Strong/weak error estimators, order fitting and taming diagnostics."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .montecarlo import EnsembleResult, SeedSpec, GAUSSIAN, tree_sum
from .problems import SdeProblem, test_function
from .schemes import integrate_batch
from .taming import TamingConfig, tame_modified_with_flag

__all__ = [
    "ErrorRow",
    "OrderReport",
    "strong_error",
    "weak_error",
    "fit_order",
    "error_table",
    "taming_probe",
    "moment_track",
]

log = logging.getLogger(__name__)


def _mean_and_stderr(values):
    # fixed-order pairwise reduction, so results do not depend on blocking
    v = np.asarray(values, dtype=float)
    n = v.shape[0]
    mean = tree_sum(v) / n
    if n < 2:
        return mean, 0.0
    var = tree_sum((v - mean) ** 2) / (n - 1)
    return mean, float(np.sqrt(var / n))


def _finite_rows(*arrays):
    ok = np.ones(arrays[0].shape[0], dtype=bool)
    for a in arrays:
        ok &= np.all(np.isfinite(a.reshape(a.shape[0], -1)), axis=1)
    return ok


def strong_error(reference, approx):
    """RMS pathwise error and its delta-method standard error.

    Rows where either state is non-finite are dropped.
    """
    ref = np.atleast_2d(np.asarray(reference, dtype=float).T).T
    apx = np.atleast_2d(np.asarray(approx, dtype=float).T).T
    if ref.shape != apx.shape:
        raise ValueError(f"shape mismatch {ref.shape} vs {apx.shape}")
    if ref.shape[0] == 0:
        raise ValueError("strong_error: empty input")
    ok = _finite_rows(ref, apx)
    if not np.any(ok):
        raise ValueError("strong_error: no finite pairs")
    diff = (ref[ok] - apx[ok]).reshape(int(ok.sum()), -1)
    sq = np.sum(diff * diff, axis=1)
    ms, ms_se = _mean_and_stderr(sq)
    rmse = float(np.sqrt(ms))
    # d sqrt(m) = dm / (2 sqrt(m))
    se = ms_se / (2.0 * rmse) if rmse > 0 else 0.0
    return rmse, float(se)


def weak_error(reference, approx, f):
    """``|mean(f(X_ref) - f(X_approx))|`` over coupled pairs and its stderr.

    ``f`` is a test-function name or a callable on ``(n, d)`` arrays.
    """
    ref = np.asarray(reference, dtype=float)
    apx = np.asarray(approx, dtype=float)
    if ref.shape != apx.shape:
        raise ValueError(f"shape mismatch {ref.shape} vs {apx.shape}")
    if ref.shape[0] == 0:
        raise ValueError("weak_error: empty input")
    fn = (lambda x: test_function(f, x)) if isinstance(f, str) else f
    with np.errstate(over="ignore", invalid="ignore"):
        d = np.asarray(fn(ref), dtype=float) - np.asarray(fn(apx), dtype=float)
    bad = ~np.isfinite(d)
    if np.all(bad):
        raise ValueError(f"weak_error: all {bad.size} test-function differences non-finite")
    if np.any(bad):
        warnings.warn(f"weak_error: dropped {int(bad.sum())} non-finite values")
    mean, se = _mean_and_stderr(d[~bad])
    return float(abs(mean)), float(se)


@dataclass(frozen=True)
class ErrorRow:
    scheme: str
    h: float
    strong_rmse: float
    strong_stderr: float
    fname: str
    weak_err: float
    weak_stderr: float
    taming_active_fraction: float
    diverged: int


@dataclass(frozen=True)
class OrderReport:
    scheme: str
    error_kind: str
    fname: str
    slope: float
    intercept: float
    residual: float
    h_min: float
    h_max: float
    rows_used: int


def fit_order(h, errors, scheme="", error_kind="strong", fname=""):
    """Least-squares slope of ``log2(error)`` against ``log2(h)``.

    Non-positive or non-finite errors are dropped with a warning; fewer than
    three usable rows raise ``ValueError``. ``residual`` is the RMS of the
    fit residuals in log2 units.
    """
    h = np.asarray(h, dtype=float)
    e = np.asarray(errors, dtype=float)
    ok = np.isfinite(e) & (e > 0)
    if np.any(~ok):
        warnings.warn(f"fit_order: excluded {int((~ok).sum())} non-positive error rows")
    if ok.sum() < 3:
        raise ValueError(f"fit_order needs at least 3 usable rows, got {int(ok.sum())}")
    x, y = np.log2(h[ok]), np.log2(e[ok])
    A = np.column_stack([x, np.ones_like(x)])
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = float(np.sqrt(np.mean((y - A @ [slope, intercept]) ** 2)))
    return OrderReport(
        scheme, error_kind, fname, float(slope), float(intercept), resid,
        float(h[ok].min()), float(h[ok].max()), int(ok.sum()),
    )


def error_table(result: EnsembleResult, fnames):
    """One :class:`ErrorRow` per (scheme, h, test function).

    Rows are ordered by scheme then decreasing ``h``. With no test functions
    each (scheme, h) still gets one row with empty weak columns.
    """
    rows = []
    fnames = list(fnames) or [""]
    for s in result.schemes:
        for k in sorted(result.levels):
            x = result.terminal[(s, k)]
            n_steps = result.steps(k)
            div = result.diverged(s, k)
            rmse, rse = strong_error(result.reference, x)
            frac = float(np.sum(result.active[(s, k)])) / (n_steps * result.M)
            for fn in fnames:
                if fn:
                    we, wse = weak_error(result.reference, x, fn)
                else:
                    we, wse = float("nan"), float("nan")
                rows.append(ErrorRow(s, 2.0**-k, rmse, rse, fn, we, wse, frac, div))
    return rows


def taming_probe(problem: SdeProblem, cfg: TamingConfig, h, M, T=None,
                 seed: SeedSpec | None = None):
    """Fraction of mte steps with active taming and the mean ``|b - b^h|^2``.

    Both are averaged over all ``M`` paths and all steps on ``[0, T]``.
    """
    T = problem.horizon if T is None else T
    seed = seed or SeedSpec(0)
    n_steps = int(round(T / h))
    if abs(n_steps * h - T) > 1e-12 * T:
        raise ValueError(f"T={T} is not a multiple of h={h}")
    inc = seed.normals_block(range(M), n_steps, problem.noise_dim, GAUSSIAN)
    inc *= np.sqrt(h)
    gap = np.zeros(M)
    # re-run the step loop here so the pre-taming drift is available
    x = np.empty((M, problem.dim))
    x[:] = problem.x0
    active_steps = 0
    for k in range(n_steps):
        t = k * h
        b = problem.drift(t, x)
        bh, act = tame_modified_with_flag(b, h, cfg, check=False)
        active_steps += int(act.sum())
        gap += np.sum((b - bh) ** 2, axis=1)
        sig = problem.diffusion(t, x)
        x = x + bh * h + np.einsum("nik,nk->ni", sig, inc[k])
    total = M * n_steps
    return active_steps / total, float(tree_sum(gap) / total)


def moment_track(scheme, problem, cfg, h, M, p, seed: SeedSpec | None = None,
                 xi_stream=None):
    """Max over grid times of the ensemble mean ``|X(t)|^p`` for ``scheme``.

    Returns ``(max_moment, nonfinite_count)``; non-finite states are left out
    of the mean and counted instead.
    """
    if p < 1:
        raise ValueError("moment exponent must be >= 1")
    seed = seed or SeedSpec(0)
    n_steps = int(round(problem.horizon / h))
    inc = seed.normals_block(range(M), n_steps, problem.noise_dim, GAUSSIAN)
    inc *= np.sqrt(h)
    nrm0 = np.linalg.norm(problem.x0)
    best = [nrm0**p, 0]

    def observe(k, x):
        with np.errstate(over="ignore", invalid="ignore"):
            r = np.sum(x * x, axis=1) ** (p / 2.0)
        ok = np.isfinite(r)
        best[1] = max(best[1], int((~ok).sum()))
        if np.any(ok):
            best[0] = max(best[0], float(np.mean(r[ok])))

    integrate_batch(scheme, problem, cfg, h, inc, xi_stream, observer=observe)
    return best[0], best[1]
