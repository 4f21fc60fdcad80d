"""Invariant checks for taming, schemes and the Monte Carlo plumbing.

Each check returns ``(name, passed, detail)``. The kernels under test can be
swapped out through keyword arguments, which is how the mutation tests feed
in deliberately broken versions.
"""

from __future__ import annotations

import numpy as np

from . import montecarlo, taming
from .montecarlo import BrownianLattice, SeedSpec, simulate_coupled
from .problems import builtin_problem, without_noise
from .schemes import integrate_batch, integrate_path
from .taming import TamingConfig

__all__ = ["run_checks", "CHECKS"]


def check_taming_bound(n=20_000, seed=7, tame=taming.tame_modified):
    rng = np.random.default_rng(seed)
    d = rng.integers(1, 4)
    b = rng.standard_normal((n, d)) * 10.0 ** rng.uniform(-3, 6, (n, 1))
    h = rng.uniform(1e-6, 1.0)
    cfg = TamingConfig(alpha=rng.uniform(1e-3, 0.5), gamma=10.0 ** rng.uniform(-2, 2))
    out = tame(b, h, cfg)
    nb = np.linalg.norm(b, axis=1)
    no = np.linalg.norm(out, axis=1)
    cap = 2.0 / (cfg.gamma * h**cfg.alpha)
    ok = bool(np.all(no <= np.minimum(cap, nb)))
    return "taming_bound", ok, f"max |b^h|/cap = {np.max(no / cap):.6g}"


def check_identity_region(n=20_000, seed=8, tame=taming.tame_modified):
    rng = np.random.default_rng(seed)
    h = 2.0**-6
    cfg = TamingConfig()
    cap = 1.0 / (cfg.gamma * h**cfg.alpha)
    b = rng.standard_normal((n, 2))
    b *= (rng.uniform(0, 1, (n, 1)) * cap) / np.linalg.norm(b, axis=1, keepdims=True)
    ok = bool(np.array_equal(tame(b, h, cfg), b))
    return "taming_identity_region", ok, f"{n} samples below threshold"


def check_cutoff_branches(psi=taming.cutoff_psi):
    vals = {0.5: 0.0, 1.0: 0.0, 1.5: 0.75, 2.0: 2.0, 3.0: 3.0}
    err = max(abs(float(psi(r)) - v) for r, v in vals.items())
    return "cutoff_branches", err <= 1e-12, f"max error {err:.3g}"


def check_cutoff_continuity(psi=taming.cutoff_psi, eps=1e-8, tol=1e-6):
    worst = 0.0
    for c in (1.0, 2.0):
        r = c + np.linspace(-1e-3, 1e-3, 2001)
        worst = max(worst, float(np.max(np.abs(psi(r + eps) - psi(r)))))
    # interior of the bridge, where a misweighted blend jumps
    r = np.linspace(0.0, 3.0, 30001)
    worst = max(worst, float(np.max(np.abs(psi(r + eps) - psi(r)))))
    mono = bool(np.all(np.diff(psi(r)) >= 0))
    return "cutoff_continuity", worst <= tol and mono, f"max jump {worst:.3g}, monotone={mono}"


def check_below_threshold_equivalence(seed=3):
    prob = builtin_problem("ou_1d")
    h = 2.0**-8
    inc = SeedSpec(seed).normals_block(range(64), 256, 1, montecarlo.GAUSSIAN) * np.sqrt(h)
    a, act = integrate_batch("mte", prob, TamingConfig(), h, inc)
    b, _ = integrate_batch("euler_maruyama", prob, TamingConfig(), h, inc)
    ok = bool(np.array_equal(a, b)) and int(act.sum()) == 0
    return "mte_equals_em_below_threshold", ok, f"active steps {int(act.sum())}"


def check_additive_reduction(seed=4):
    prob = builtin_problem("langevin_2d")
    cfg = TamingConfig(0.5, 0.1)
    h = 2.0**-7
    inc = SeedSpec(seed).normals_block(range(64), 128, 2, montecarlo.GAUSSIAN) * np.sqrt(h)
    a, _ = integrate_batch("mte", prob, cfg, h, inc)
    b, _ = integrate_batch("modified_tamed_milstein", prob, cfg, h, inc)
    return "milstein_additive_reduction", bool(np.array_equal(a, b)), "langevin_2d"


def check_blowup_contrast():
    prob = without_noise(builtin_problem("ginzburg_landau_1d")).with_x0([3.0])
    h = 0.5
    cfg = TamingConfig()
    path = {}
    for s in ("euler_maruyama", "mte"):
        xs = [3.0]

        def obs(k, x, xs=xs):
            xs.append(float(x[0, 0]))

        integrate_batch(s, prob, cfg, h, np.zeros((50, 1, 1)), observer=obs)
        path[s] = np.abs(np.array(xs))
    with np.errstate(invalid="ignore"):
        em_blows = bool(np.nanmax(path["euler_maruyama"][:6]) > 1e6)
    mte_ok = bool(np.max(path["mte"]) <= 10.0)
    return "euler_blowup_contrast", em_blows and mte_ok, (
        f"EM max in 5 steps {np.nanmax(path['euler_maruyama'][:6]):.3g}, "
        f"mte sup {np.max(path['mte']):.3g}"
    )


def check_coupling_identity(coarsen=montecarlo.coarsen, seed=5):
    lat = BrownianLattice.generate(SeedSpec(seed), range(8), 6, 1.0, 2)
    fine = lat.increments
    ok = True
    for m in range(1, 7):
        c = coarsen(lat, m)
        block = 1 << m
        if c.shape[0] != fine.shape[0] // block:
            ok = False
            break
        expect = montecarlo.tree_sum(fine.reshape(-1, block, *fine.shape[1:]), axis=1)
        ok &= bool(np.array_equal(c, expect))
        # W at shared grid times agrees across levels
        ok &= bool(np.allclose(np.cumsum(c, axis=0), np.cumsum(fine, axis=0)[block - 1::block],
                               rtol=0, atol=1e-13))
    return "coupling_identity", ok, "levels 1..6"


def check_gaussianity(seed=6, M=4000):
    lat = BrownianLattice.generate(SeedSpec(seed), range(M), 4, 1.0, 1)
    inc = lat.increments[:, :, 0]
    h = lat.h_ref
    mean_ok = bool(np.all(np.abs(inc.mean(axis=1)) <= 5 * np.sqrt(h / M)))
    var = inc.var(axis=1)
    se = h * np.sqrt(2.0 / M)
    var_ok = bool(np.all(np.abs(var - h) <= 5 * se))
    return "lattice_gaussianity", mean_ok and var_ok, f"{M} paths, h_ref={h}"


def check_worker_determinism(seed=9):
    prob = builtin_problem("ginzburg_landau_1d")
    kw = dict(schemes=["mte", "mte_rbm"], cfg=TamingConfig(), k_ref=8, levels=[4, 6],
              M=40, seed=SeedSpec(seed))
    a = simulate_coupled(prob, workers=1, block_size=40, **kw)
    b = simulate_coupled(prob, workers=1, block_size=8, **kw)
    ok = np.array_equal(a.reference, b.reference) and all(
        np.array_equal(a.terminal[k], b.terminal[k]) for k in a.terminal
    )
    return "block_determinism", bool(ok), "block sizes 40 vs 8"


def check_single_path_consistency(seed=10):
    prob = builtin_problem("ginzburg_landau_1d")
    lat = BrownianLattice.generate(SeedSpec(seed), range(4), 7, 1.0, 1)
    batch, _ = integrate_batch("mte", prob, TamingConfig(), lat.h_ref, lat.increments)
    single = [integrate_path("mte", prob, TamingConfig(), lat.h_ref, lat.increments[:, i, :])
              for i in range(4)]
    return "batch_matches_single_path", bool(np.array_equal(batch, np.array(single))), ""


CHECKS = {
    "taming": [check_taming_bound, check_identity_region, check_cutoff_branches,
               check_cutoff_continuity],
    "schemes": [check_below_threshold_equivalence, check_additive_reduction,
                check_blowup_contrast, check_single_path_consistency],
    "montecarlo": [check_coupling_identity, check_gaussianity, check_worker_determinism],
}


def run_checks(psi=None, coarsen=None, tame=None):
    """Run every check; returns a list of ``(suite, name, passed, detail)``."""
    results = []
    for suite, fns in CHECKS.items():
        for fn in fns:
            kwargs = {}
            if psi is not None and "psi" in fn.__code__.co_varnames:
                kwargs["psi"] = psi
            if coarsen is not None and "coarsen" in fn.__code__.co_varnames:
                kwargs["coarsen"] = coarsen
            if tame is not None and "tame" in fn.__code__.co_varnames:
                kwargs["tame"] = tame
            try:
                name, ok, detail = fn(**kwargs)
            except Exception as exc:  # a crashing check is a failing check
                name, ok, detail = fn.__name__.removeprefix("check_"), False, repr(exc)
            results.append((suite, name, bool(ok), detail))
    return results
