import warnings

import numpy as np
import pytest

from tamed_sde.analysis import (
    error_table,
    fit_order,
    moment_track,
    strong_error,
    taming_probe,
    weak_error,
)
from tamed_sde.montecarlo import SeedSpec, simulate_coupled
from tamed_sde.problems import builtin_problem, without_noise, zero_drift
from tamed_sde.taming import TamingConfig

GL = builtin_problem("ginzburg_landau_1d")


def test_strong_error_examples():
    x = np.arange(6.0).reshape(3, 2)
    assert strong_error(x, x) == (0.0, 0.0)
    rmse, _ = strong_error(np.zeros((2, 1)), np.array([[1.0], [-1.0]]))
    assert rmse == 1.0


def test_strong_error_stderr_delta_method():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((4000, 1))
    rmse, se = strong_error(np.zeros_like(a), a)
    sq = a[:, 0] ** 2
    assert se == pytest.approx(sq.std(ddof=1) / np.sqrt(4000) / (2 * rmse), rel=1e-10)


def test_strong_error_drops_nonfinite():
    ref = np.zeros((3, 1))
    apx = np.array([[1.0], [np.inf], [1.0]])
    assert strong_error(ref, apx)[0] == 1.0


def test_weak_error_examples():
    x = np.random.default_rng(1).standard_normal((100, 1))
    assert weak_error(x, x, "cos_x")[0] == 0.0
    assert weak_error(x, x + 1.0, lambda y: np.full(len(y), 3.0))[0] == 0.0
    with pytest.raises(ValueError):
        weak_error(x, x[:5], "cos_x")


def test_weak_error_warns_on_nonfinite():
    ref = np.zeros((3, 1))
    apx = np.array([[0.0], [np.nan], [0.0]])
    with pytest.warns(UserWarning):
        weak_error(ref, apx, "cos_x")


def test_fit_order_examples():
    h = [0.5, 0.25, 0.125]
    assert fit_order(h, h).slope == pytest.approx(1.0, abs=1e-14)
    assert fit_order(h, 3 * np.sqrt(h)).slope == pytest.approx(0.5, abs=1e-14)


def test_fit_order_jittered():
    rng = np.random.default_rng(42)
    h = 2.0 ** -np.arange(3, 9)
    e = h * (1 + rng.uniform(-0.1, 0.1, h.size))
    slope = fit_order(h, e).slope
    assert 0.85 <= slope <= 1.15
    assert slope == pytest.approx(1.002471945037167, rel=1e-12)


def test_fit_order_excludes_rows():
    with pytest.warns(UserWarning, match="excluded 1"):
        rep = fit_order([1, 0.5, 0.25, 0.125], [1, 0.5, 0.0, 0.125])
    assert rep.rows_used == 3
    with pytest.raises(ValueError):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            fit_order([1, 0.5, 0.25], [1, -1, 0.25])


def test_error_table_rows():
    res = simulate_coupled(GL, ["mte", "tamed_euler"], TamingConfig(), 8, [4, 5], 50,
                           SeedSpec(3))
    rows = error_table(res, ["cos_x", "cos_exp_x"])
    assert len(rows) == 2 * 2 * 2
    assert [r.h for r in rows[:4]] == [2.0**-4, 2.0**-4, 2.0**-5, 2.0**-5]
    assert all(r.diverged == 0 and r.strong_rmse > 0 for r in rows)
    assert all(0.0 <= r.taming_active_fraction <= 1.0 for r in rows)
    bare = error_table(res, [])
    assert len(bare) == 4 and np.isnan(bare[0].weak_err)


def test_gl_weak_ratio():
    # pinned from the first run at M=2000: halving h halves the weak error
    res = simulate_coupled(GL, ["mte"], TamingConfig(), 11, [6, 7], 2000, SeedSpec(20240501))
    e6, _ = weak_error(res.reference, res.terminal[("mte", 6)], "cos_x")
    e7, _ = weak_error(res.reference, res.terminal[("mte", 7)], "cos_x")
    assert 1.0 <= e6 / e7 <= 3.0


def test_taming_probe_identity():
    ou = builtin_problem("ou_1d")
    assert taming_probe(ou, TamingConfig(), 2.0**-8, 50) == (0.0, 0.0)


def test_taming_probe_gl():
    # pinned: (6.25e-05, 1.99e-18) at 2^-4, then (0, 0) at 2^-6 and 2^-8
    out = [taming_probe(GL, TamingConfig(), 2.0**-k, 1000, T=1.0, seed=SeedSpec(3))
           for k in (4, 6, 8)]
    gaps = [g for _, g in out]
    assert gaps[0] >= gaps[1] >= gaps[2]
    assert out[2][0] < 1e-3
    assert out[0][0] == pytest.approx(6.25e-5, rel=1e-9)


def test_moment_track_examples():
    still = zero_drift(without_noise(GL)).with_x0([2.0])
    assert moment_track("mte", still, TamingConfig(), 0.25, 3, 4) == (16.0, 0)
    m, bad = moment_track("mte", GL, TamingConfig(), 2.0**-5, 1000, 4, SeedSpec(1))
    assert np.isfinite(m) and m < 1e3 and bad == 0
    boom = without_noise(GL).with_x0([3.0])
    m, _ = moment_track("euler_maruyama", boom, TamingConfig(), 0.5, 1, 4)
    assert m > 1e6
