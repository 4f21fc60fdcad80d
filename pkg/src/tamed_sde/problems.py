"""SDE problem definitions, random-batch drift splitting and the built-in registry.

Drift and diffusion callables take ``(t, x)`` with ``x`` of shape ``(n, d)``
and return arrays of shape ``(n, d)`` and ``(n, d, d_noise)`` respectively.
Everything here is defined with module-level functions and
:func:`functools.partial` so problems pickle cleanly into worker processes.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import partial
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "DriftField",
    "DiffusionField",
    "SdeProblem",
    "BatchSampler",
    "batch_drift",
    "builtin_problem",
    "problem_names",
    "test_function",
    "test_function_names",
    "without_noise",
]

VectorField = Callable[[float, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class DriftField:
    """Drift ``full(t, x)`` with an optional additive split into components."""

    full: VectorField
    components: tuple = ()

    def __call__(self, t, x):
        return self.full(t, x)

    @property
    def component_count(self):
        return len(self.components)


@dataclass(frozen=True)
class DiffusionField:
    """Diffusion coefficient.

    ``sigma_grad(t, x)`` returns the tensor ``d sigma_ik / d x_j`` with shape
    ``(n, d, d_noise, d)``; only the Milstein-family schemes need it.
    """

    sigma: VectorField
    noise_dim: int
    sigma_grad: VectorField | None = None
    is_additive: bool = False
    is_diagonal: bool = False

    def __call__(self, t, x):
        return self.sigma(t, x)


@dataclass(frozen=True)
class SdeProblem:
    name: str
    dim: int
    drift: DriftField
    diffusion: DiffusionField
    x0: np.ndarray
    horizon: float = 1.0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        x0 = np.asarray(self.x0, dtype=float).reshape(-1)
        if x0.shape != (self.dim,):
            raise ValueError(f"x0 has dimension {x0.size}, problem has {self.dim}")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        object.__setattr__(self, "x0", x0)

    @property
    def noise_dim(self):
        return self.diffusion.noise_dim

    def with_x0(self, x0):
        return replace(self, x0=np.asarray(x0, dtype=float))

    def with_horizon(self, horizon):
        return replace(self, horizon=float(horizon))


@dataclass(frozen=True)
class BatchSampler:
    """Uniform draw of a single drift component, reweighted by the count.

    ``weight * P(xi = i) = 1`` for every index, so averaging
    ``weight * component_xi`` over ``xi`` reproduces the full drift.
    """

    component_count: int

    def __post_init__(self):
        if self.component_count < 1:
            raise ValueError("component_count must be positive")

    @property
    def weight(self):
        return float(self.component_count)

    def probability(self, i):
        self._check(i)
        return 1.0 / self.component_count

    def draw(self, u):
        """Map uniforms in [0, 1) to indices."""
        idx = np.floor(np.asarray(u) * self.component_count).astype(np.int64)
        return np.minimum(idx, self.component_count - 1)

    def _check(self, i):
        i = np.asarray(i)
        if np.any((i < 0) | (i >= self.component_count)):
            raise IndexError(
                f"batch index out of range [0, {self.component_count}): {i}"
            )


def batch_drift(drift: DriftField, sampler: BatchSampler, xi, t, x):
    """Unbiased single-component drift estimate ``weight * component_xi(t, x)``.

    ``xi`` is a scalar index or one index per row of ``x``.
    """
    if drift.component_count < 2:
        raise ValueError("batch_drift needs a drift with at least two components")
    if sampler.component_count != drift.component_count:
        raise ValueError("sampler and drift disagree on the component count")
    sampler._check(xi)
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi)
    if xi.ndim == 0:
        return sampler.weight * drift.components[int(xi)](t, x)
    out = np.empty_like(x)
    for i, comp in enumerate(drift.components):
        sel = xi == i
        if np.any(sel):
            out[sel] = sampler.weight * comp(t, x[sel])
    return out


# -- drift and diffusion building blocks -------------------------------------


def _cubic(t, x, coef=1.0):
    # -coef |x|^2 x; reduces to -coef x^3 in one dimension
    return -coef * np.sum(x * x, axis=-1, keepdims=True) * x


def _linear(t, x, coef):
    return coef * x


def _sum_fields(t, x, parts):
    out = parts[0](t, x)
    for p in parts[1:]:
        out = out + p(t, x)
    return out


def _constant_sigma(t, x, matrix):
    x = np.asarray(x)
    return np.broadcast_to(matrix, x.shape[:-1] + matrix.shape)


def _constant_sigma_grad(t, x, shape):
    x = np.asarray(x)
    return np.zeros(x.shape[:-1] + shape)


def _linear_sigma(t, x, coef):
    # sigma_i1(x) = coef * x_i, scalar noise
    return coef * np.asarray(x)[..., None]


def _linear_sigma_grad(t, x, coef):
    x = np.asarray(x)
    d = x.shape[-1]
    eye = np.eye(d)[:, None, :] * coef
    return np.broadcast_to(eye, x.shape[:-1] + (d, 1, d))


def _zero_field(t, x):
    return np.zeros_like(np.asarray(x, dtype=float))


def _split_drift(parts):
    return DriftField(partial(_sum_fields, parts=tuple(parts)), tuple(parts))


def _additive(d, scale):
    mat = scale * np.eye(d)
    return DiffusionField(
        sigma=partial(_constant_sigma, matrix=mat),
        noise_dim=d,
        sigma_grad=partial(_constant_sigma_grad, shape=(d, d, d)),
        is_additive=True,
        is_diagonal=True,
    )


def _ginzburg_landau():
    return SdeProblem(
        name="ginzburg_landau_1d",
        dim=1,
        drift=_split_drift([partial(_cubic, coef=1.0), partial(_linear, coef=-1.875)]),
        diffusion=DiffusionField(
            sigma=partial(_linear_sigma, coef=0.5),
            noise_dim=1,
            sigma_grad=partial(_linear_sigma_grad, coef=0.5),
        ),
        x0=np.array([1.0]),
    )


def _langevin_2d():
    return SdeProblem(
        name="langevin_2d",
        dim=2,
        drift=_split_drift([partial(_cubic, coef=1.0), partial(_linear, coef=1.0)]),
        diffusion=_additive(2, 1.0),
        x0=np.array([1.0 / 4.0, 1.0 / 3.0]),
        params={"beta": 0.5},
    )


def _ou():
    return SdeProblem(
        name="ou_1d",
        dim=1,
        drift=DriftField(partial(_linear, coef=-1.0)),
        diffusion=_additive(1, 1.0),
        x0=np.array([1.0]),
        params={"beta": 2.0},
    )


def _quartic(beta=1.0):
    return SdeProblem(
        name="quartic_langevin_1d",
        dim=1,
        drift=DriftField(partial(_cubic, coef=1.0)),
        diffusion=_additive(1, np.sqrt(2.0 / beta)),
        x0=np.array([0.0]),
        params={"beta": beta},
    )


_REGISTRY = {
    "ginzburg_landau_1d": _ginzburg_landau,
    "langevin_2d": _langevin_2d,
    "ou_1d": _ou,
    "quartic_langevin_1d": _quartic,
}


def problem_names():
    return sorted(_REGISTRY)


def builtin_problem(name: str, **kwargs) -> SdeProblem:
    """Return a built-in test problem by name.

    ``quartic_langevin_1d`` accepts a ``beta`` keyword (default 1).
    """
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise KeyError(
            f"unknown problem {name!r}; valid names: {', '.join(problem_names())}"
        ) from None
    return factory(**kwargs)


def without_noise(problem: SdeProblem) -> SdeProblem:
    """Same problem with the diffusion forced to zero."""
    d, m = problem.dim, problem.noise_dim
    diff = DiffusionField(
        sigma=partial(_constant_sigma, matrix=np.zeros((d, m))),
        noise_dim=m,
        sigma_grad=partial(_constant_sigma_grad, shape=(d, m, d)),
        is_additive=True,
        is_diagonal=problem.diffusion.is_diagonal,
    )
    return replace(problem, diffusion=diff)


def zero_drift(problem: SdeProblem) -> SdeProblem:
    return replace(problem, drift=DriftField(_zero_field))


# -- observables --------------------------------------------------------------

_TEST_FUNCTIONS = {
    "cos_x": (1, lambda x: np.cos(x[..., 0])),
    "cos_exp_x": (1, lambda x: np.cos(np.exp(x[..., 0]))),
    "exp_sumsq": (2, lambda x: np.exp(np.sum(x * x, axis=-1))),
    "cos_exp_sum": (2, lambda x: np.cos(np.exp(np.sum(x, axis=-1)))),
}


def test_function_names():
    return sorted(_TEST_FUNCTIONS)


def test_function(name: str, x) -> np.ndarray | float:
    """Evaluate a named observable on a d-vector or a batch ``(n, d)``."""
    try:
        dim, fn = _TEST_FUNCTIONS[name]
    except KeyError:
        raise KeyError(
            f"unknown test function {name!r}; valid names: "
            f"{', '.join(test_function_names())}"
        ) from None
    x = np.asarray(x, dtype=float)
    if x.ndim == 0 or x.shape[-1] != dim:
        raise ValueError(f"{name} expects dimension {dim}, got shape {x.shape}")
    out = fn(x)
    return float(out) if np.ndim(out) == 0 else out


test_function.__test__ = False  # keep pytest from collecting it


def test_function_dim(name: str) -> int:
    return _TEST_FUNCTIONS[name][0]


test_function_dim.__test__ = False


def check_names(names: Sequence[str], valid: Sequence[str], what: str):
    bad = [n for n in names if n not in valid]
    if bad:
        raise ValueError(f"unknown {what} {bad}; valid names: {', '.join(valid)}")
