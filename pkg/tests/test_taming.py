import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tamed_sde.problems import builtin_problem
from tamed_sde.taming import (
    TamingConfig,
    cutoff_psi,
    project_radial,
    tame_classic,
    tame_modified,
    truncate_drift,
)


def _psi_bridge_direct(r):
    # independent transcription of the bridge formula
    a = math.exp(-1.0 / (r - 1.0))
    b = math.exp(-1.0 / (2.0 - r))
    return a / (a + b) * r


@pytest.mark.parametrize("r, expected", [(0.5, 0.0), (3.0, 3.0), (1.5, 0.75), (2.0, 2.0),
                                         (0.0, 0.0), (1.0, 0.0)])
def test_cutoff_examples(r, expected):
    assert cutoff_psi(r) == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("r", [1.1, 1.3, 1.5, 1.77, 1.95])
def test_cutoff_bridge_matches_formula(r):
    assert cutoff_psi(r) == pytest.approx(_psi_bridge_direct(r), rel=1e-14)


def test_cutoff_rejects_bad_input():
    with pytest.raises(ValueError):
        cutoff_psi(float("nan"))
    with pytest.raises(ValueError):
        cutoff_psi(np.array([1.0, np.inf]))
    with pytest.raises(ValueError):
        cutoff_psi(-0.5)


def test_cutoff_near_branch_points_is_finite():
    r = np.array([1.0 + 1e-13, 1.0 + 1e-11, 2.0 - 1e-11, 2.0 - 1e-13])
    out = cutoff_psi(r)
    assert np.all(np.isfinite(out))
    assert out[0] == 0.0 and out[-1] == r[-1]


def test_cutoff_shape_invariants():
    r = np.linspace(0, 5, 50001)
    p = cutoff_psi(r)
    assert np.all(p[r <= 1] == 0)
    assert np.array_equal(p[r >= 2], r[r >= 2])
    assert np.all(np.diff(p) >= 0)
    assert np.all((p >= 0) & (p <= r))


@pytest.mark.parametrize("centre", [1.0, 2.0])
def test_cutoff_continuity(centre):
    r = centre + np.linspace(-1e-4, 1e-4, 20001)
    assert np.max(np.abs(cutoff_psi(r + 1e-8) - cutoff_psi(r))) <= 1e-6


def test_taming_config_validation():
    TamingConfig(0.5, 1.0)
    with pytest.raises(ValueError, match="alpha"):
        TamingConfig(0.7)
    with pytest.raises(ValueError):
        TamingConfig(0.0)
    with pytest.raises(ValueError):
        TamingConfig(0.5, 0.0)


def test_tame_modified_examples():
    cfg = TamingConfig(0.5, 1.0)
    assert np.array_equal(tame_modified(np.array([-1.0]), 1.0, cfg), [-1.0])
    assert tame_modified(np.array([4.0]), 1.0, cfg) == pytest.approx([0.8])
    assert np.array_equal(tame_modified(np.zeros(2), 0.3, cfg), np.zeros(2))


def test_tame_classic_examples():
    assert tame_classic(np.array([1.0]), 1.0, 0.5) == pytest.approx([0.5])
    assert np.array_equal(tame_classic(np.array([0.0]), 0.1, 0.5), [0.0])
    assert tame_classic(np.array([3.0]), 0.25, 0.5) == pytest.approx([1.2])


def test_tamed_drifts_reject_nonfinite():
    with pytest.raises(ValueError):
        tame_modified(np.array([np.nan]), 0.1, TamingConfig())
    with pytest.raises(ValueError):
        tame_classic(np.array([np.inf]), 0.1, 0.5)
    with pytest.raises(ValueError):
        tame_modified(np.array([1.0]), 0.0, TamingConfig())


def test_taming_bound_randomised():
    # 1e5 draws across scales, step sizes and parameters
    rng = np.random.default_rng(2024)
    n = 100_000
    b = rng.standard_normal((n, 3)) * 10.0 ** rng.uniform(-4, 8, (n, 1))
    out = np.empty_like(b)
    hs = 10.0 ** rng.uniform(-6, 0, 100)
    alphas = rng.uniform(1e-3, 0.5, 100)
    gammas = 10.0 ** rng.uniform(-2, 2, 100)
    caps = np.empty(n)
    for j in range(100):
        sl = slice(j * 1000, (j + 1) * 1000)
        cfg = TamingConfig(alphas[j], gammas[j])
        out[sl] = tame_modified(b[sl], hs[j], cfg)
        caps[sl] = 2.0 / (gammas[j] * hs[j] ** alphas[j])
    nb = np.linalg.norm(b, axis=1)
    no = np.linalg.norm(out, axis=1)
    assert np.all(no <= np.minimum(caps, nb))


@settings(max_examples=300, deadline=None)
@given(
    b=st.lists(st.floats(-1e12, 1e12), min_size=1, max_size=4),
    h=st.floats(1e-8, 1.0),
    alpha=st.floats(1e-3, 0.5),
    gamma=st.floats(1e-3, 1e3),
)
def test_tame_modified_properties(b, h, alpha, gamma):
    b = np.array(b)
    cfg = TamingConfig(alpha, gamma)
    out = tame_modified(b, h, cfg)
    nb, no = np.linalg.norm(b), np.linalg.norm(out)
    assert no <= min(2.0 / (gamma * h**alpha), nb)
    if gamma * h**alpha * nb <= 1.0:
        assert np.array_equal(out, b)
    # nonnegative multiple of b
    if nb > 0:
        lam = np.dot(out, b) / np.dot(b, b)
        assert lam >= 0
        assert np.allclose(out, lam * b, rtol=1e-12, atol=0)


@settings(max_examples=200, deadline=None)
@given(b=st.lists(st.floats(-1e8, 1e8), min_size=1, max_size=3), h=st.floats(1e-8, 1.0))
def test_tame_classic_bound(b, h):
    b = np.array(b)
    out = tame_classic(b, h, 0.5)
    assert np.linalg.norm(out) <= min(h**-0.5, np.linalg.norm(b)) * (1 + 1e-15)


def test_identity_region_batch():
    rng = np.random.default_rng(1)
    h = 2.0**-8
    cfg = TamingConfig(0.5, 1.0)
    b = rng.uniform(-16, 16, (10_000, 1))
    assert np.array_equal(tame_modified(b, h, cfg), b)


def test_truncate_drift_examples():
    cube = lambda t, x: -(x**3)
    assert truncate_drift(cube, 0.0, np.array([1.0]), 2.0) == pytest.approx([-1.0])
    assert truncate_drift(cube, 0.0, np.array([4.0]), 2.0) == pytest.approx([-8.0])
    b0 = lambda t, x: x + 5.0
    assert np.array_equal(truncate_drift(b0, 0.0, np.zeros(2), 0.3), [5.0, 5.0])


def test_project_radial_direction():
    x = np.array([[3.0, 4.0], [0.3, 0.4]])
    p = project_radial(x, 1.0)
    assert np.allclose(p[0], [0.6, 0.8])
    assert np.array_equal(p[1], x[1])


def _tamed_gl(x, h):
    b = -(x**3 + 1.875 * x)
    return tame_modified(b[:, None], h, TamingConfig())[:, 0]


def test_gradient_growth_probe():
    # |grad b^h| / (|b^h| + 1) stays bounded by one constant across h
    x = np.linspace(-50, 50, 10_000)
    eps = 1e-6
    consts = []
    for k in range(5, 13):
        h = 2.0**-k
        grad = (_tamed_gl(x + eps, h) - _tamed_gl(x - eps, h)) / (2 * eps)
        consts.append(np.max(np.abs(grad) / (np.abs(_tamed_gl(x, h)) + 1.0)))
    consts = np.array(consts)
    assert np.all(np.isfinite(consts))
    assert consts.max() <= 2.0 * consts.min()
