"""Experiment configuration files.

Configs are INI files with the sections ``[experiment]``, ``[taming]``,
``[montecarlo]``, ``[sampler]`` and ``[output]``. Parsing is strict: unknown
sections or keys are rejected, and every missing required key is reported
in a single error. Lists are comma separated.

Example::

    [experiment]
    kind = converge
    problem = ginzburg_landau_1d
    schemes = tamed_euler, mte, mte_rbm
    test_functions = cos_x

    [montecarlo]
    k_ref = 13
    levels = 5, 6, 7, 8, 9
    paths = 10000
"""

from __future__ import annotations

import configparser
import io
from dataclasses import asdict, dataclass, field, replace

from .montecarlo import default_workers
from .problems import check_names, problem_names, test_function_dim, test_function_names
from .schemes import SCHEMES

__all__ = ["ConfigError", "ExperimentConfig", "SamplerSection", "parse_config", "load_config"]

KINDS = ("converge", "sample", "validate")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SamplerSection:
    problem: str = "quartic_langevin_1d"
    beta: float = 1.0
    step_sizes: tuple = ()
    n_steps: int = 0
    burn_in: int = 0
    thin: int = 1
    chains: int = 1
    delta: float = 0.05
    bins: int = 128
    hist_range: tuple = (-4.0, 4.0)
    moment_k: int = 2
    write_samples: bool = True


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    problem: str = ""
    schemes: tuple = ()
    test_functions: tuple = ()
    horizon: float = 1.0
    alpha: float = 0.5
    gamma: float = 1.0
    k_ref: int = 0
    levels: tuple = ()
    paths: int = 0
    seed: int = 0
    workers: int = field(default_factory=default_workers)
    output_dir: str = "out"
    sampler: SamplerSection | None = None

    def with_overrides(self, seed=None, out=None, workers=None):
        kw = {}
        if seed is not None:
            kw["seed"] = int(seed)
        if out is not None:
            kw["output_dir"] = str(out)
        if workers is not None:
            kw["workers"] = int(workers)
        return replace(self, **kw)

    def to_text(self):
        """Serialise back to the INI format accepted by :func:`parse_config`."""
        cp = configparser.ConfigParser()
        exp = {"kind": self.kind, "horizon": _fmt(self.horizon)}
        if self.problem:
            exp["problem"] = self.problem
        if self.schemes:
            exp["schemes"] = ", ".join(self.schemes)
        if self.test_functions:
            exp["test_functions"] = ", ".join(self.test_functions)
        cp["experiment"] = exp
        cp["taming"] = {"alpha": _fmt(self.alpha), "gamma": _fmt(self.gamma)}
        mc = {"seed": str(self.seed), "workers": str(self.workers)}
        if self.kind == "converge":
            mc.update(k_ref=str(self.k_ref), levels=", ".join(map(str, self.levels)),
                      paths=str(self.paths))
        cp["montecarlo"] = mc
        if self.sampler is not None:
            s = asdict(self.sampler)
            s["step_sizes"] = ", ".join(_fmt(v) for v in self.sampler.step_sizes)
            s["hist_range"] = ", ".join(_fmt(v) for v in self.sampler.hist_range)
            s["write_samples"] = "true" if self.sampler.write_samples else "false"
            cp["sampler"] = {k: v if isinstance(v, str) else _fmt(v) for k, v in s.items()}
        cp["output"] = {"dir": self.output_dir}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()


def _fmt(v):
    return repr(v) if isinstance(v, float) else str(v)


_SCHEMA = {
    "experiment": {"kind", "problem", "schemes", "test_functions", "horizon"},
    "taming": {"alpha", "gamma"},
    "montecarlo": {"k_ref", "levels", "paths", "seed", "workers"},
    "sampler": {f for f in SamplerSection.__dataclass_fields__},
    "output": {"dir"},
}


def _list(text, conv=str):
    return tuple(conv(v.strip()) for v in text.split(",") if v.strip())


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate an experiment config; raises :class:`ConfigError`."""
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None

    errors = []
    for sec in cp.sections():
        if sec not in _SCHEMA:
            errors.append(f"unknown section [{sec}]")
            continue
        for key in cp[sec]:
            if key not in _SCHEMA[sec]:
                errors.append(f"unknown key {sec}.{key}")
    if errors:
        raise ConfigError("; ".join(errors))

    def get(sec, key, conv=str, default=None):
        if cp.has_option(sec, key):
            raw = cp.get(sec, key)
            try:
                return conv(raw)
            except (TypeError, ValueError) as exc:
                errors.append(f"bad value for {sec}.{key}: {raw!r} ({exc})")
                return default
        return default

    kind = get("experiment", "kind")
    if kind is None:
        raise ConfigError("missing required keys: experiment.kind")
    if kind not in KINDS:
        raise ConfigError(f"unknown kind {kind!r}; valid kinds: {', '.join(KINDS)}")

    required = {
        "converge": [("experiment", "problem"), ("experiment", "schemes"),
                     ("montecarlo", "k_ref"), ("montecarlo", "levels"),
                     ("montecarlo", "paths")],
        "sample": [("sampler", "step_sizes"), ("sampler", "n_steps")],
        "validate": [],
    }[kind]
    missing = [f"{s}.{k}" for s, k in required if not cp.has_option(s, k)]
    if missing:
        raise ConfigError("missing required keys: " + ", ".join(missing))

    cfg = ExperimentConfig(
        kind=kind,
        problem=get("experiment", "problem", default=""),
        schemes=get("experiment", "schemes", _list, ()),
        test_functions=get("experiment", "test_functions", _list, ()),
        horizon=get("experiment", "horizon", float, 1.0),
        alpha=get("taming", "alpha", float, 0.5),
        gamma=get("taming", "gamma", float, 1.0),
        k_ref=get("montecarlo", "k_ref", int, 0),
        levels=get("montecarlo", "levels", lambda t: _list(t, int), ()),
        paths=get("montecarlo", "paths", int, 0),
        seed=get("montecarlo", "seed", int, 0),
        workers=get("montecarlo", "workers", int, None) or default_workers(),
        output_dir=get("output", "dir", default="out"),
        sampler=_sampler_section(cp, get) if cp.has_section("sampler") else None,
    )
    if errors:
        raise ConfigError("; ".join(errors))
    _validate(cfg)
    return cfg


def _sampler_section(cp, get):
    d = SamplerSection()
    return SamplerSection(
        problem=get("sampler", "problem", default=d.problem),
        beta=get("sampler", "beta", float, d.beta),
        step_sizes=get("sampler", "step_sizes", lambda t: _list(t, float), ()),
        n_steps=get("sampler", "n_steps", int, d.n_steps),
        burn_in=get("sampler", "burn_in", int, d.burn_in),
        thin=get("sampler", "thin", int, d.thin),
        chains=get("sampler", "chains", int, d.chains),
        delta=get("sampler", "delta", float, d.delta),
        bins=get("sampler", "bins", int, d.bins),
        hist_range=get("sampler", "hist_range", lambda t: _list(t, float), d.hist_range),
        moment_k=get("sampler", "moment_k", int, d.moment_k),
        write_samples=get("sampler", "write_samples", _bool, d.write_samples),
    )


def _validate(cfg: ExperimentConfig):
    try:
        if not (0.0 < cfg.alpha <= 0.5):
            raise ConfigError(f"alpha outside (0, 1/2]: {cfg.alpha}")
        if cfg.gamma <= 0:
            raise ConfigError(f"gamma must be positive: {cfg.gamma}")
        if cfg.seed < 0:
            raise ConfigError("seed must be non-negative")
        if cfg.workers < 1:
            raise ConfigError("workers must be at least 1")
        if cfg.kind == "converge":
            check_names([cfg.problem], problem_names(), "problem")
            if not cfg.schemes:
                raise ConfigError("empty scheme list")
            check_names(cfg.schemes, SCHEMES, "scheme")
            check_names(cfg.test_functions, test_function_names(), "test function")
            if cfg.paths < 1:
                raise ConfigError("paths must be at least 1")
            if len(cfg.levels) == 0:
                raise ConfigError("empty level list")
            if any(k >= cfg.k_ref for k in cfg.levels):
                raise ConfigError("every level must be coarser than k_ref")
            if cfg.horizon <= 0:
                raise ConfigError("horizon must be positive")
        if cfg.kind == "sample":
            s = cfg.sampler
            check_names([s.problem], ("quartic_langevin_1d", "ou_1d"), "sampler problem")
            if not s.step_sizes:
                raise ConfigError("empty step size list")
            if any(h <= 0 for h in s.step_sizes):
                raise ConfigError("step sizes must be positive")
            if s.burn_in > s.n_steps:
                raise ConfigError("burn_in exceeds n_steps")
            if s.thin < 1 or s.chains < 1 or s.bins < 1:
                raise ConfigError("thin, chains and bins must be at least 1")
            if s.beta <= 0 or s.delta <= 0:
                raise ConfigError("beta and delta must be positive")
            if len(s.hist_range) != 2 or not s.hist_range[1] > s.hist_range[0]:
                raise ConfigError("hist_range must be two increasing numbers")
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if cfg.kind == "converge":
        for f in cfg.test_functions:
            if test_function_dim(f) != _problem_dim(cfg.problem):
                raise ConfigError(f"test function {f} does not match the dimension of {cfg.problem}")


def _problem_dim(name):
    from .problems import builtin_problem
    return builtin_problem(name).dim


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
