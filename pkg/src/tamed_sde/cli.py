"""Command line runner: ``tamed-sde {converge,sample,validate} --config PATH``.

Exit codes: 0 success, 1 config error, 2 run failure, 3 validation failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import sys
import time
import warnings
from pathlib import Path

import numpy as np
from scipy import integrate

from . import __version__
from .analysis import error_table, fit_order
from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .montecarlo import SeedSpec, simulate_coupled
from .problems import builtin_problem
from .sampler import (
    SamplerConfig,
    kl_histogram,
    moment_stderr,
    run_chain,
    stationary_moment,
)
from .taming import TamingConfig
from .validate import run_checks

log = logging.getLogger("tamed_sde")

EXIT_OK, EXIT_CONFIG, EXIT_RUN, EXIT_VALIDATE = 0, 1, 2, 3

ERRORS_HEADER = ["scheme", "h", "strong_rmse", "strong_stderr", "fname", "weak_err",
                 "weak_stderr", "taming_active_fraction", "diverged"]
ORDERS_HEADER = ["scheme", "error_kind", "fname", "slope", "intercept", "residual"]
METRICS_HEADER = ["h", "n_samples", "diverged_chains", "moment_k", "moment",
                  "moment_stderr", "moment_oracle", "moment_error", "kl", "max_abs"]


class RunError(RuntimeError):
    pass


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_cell(v) for v in r])


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out_dir, cfg: ExperimentConfig, files, started):
    manifest = {
        "tool": "tamed_sde",
        "version": __version__,
        "config": cfg.to_text(),
        "wall_seconds": round(time.time() - started, 3),
        "checksums": {Path(f).name: _sha256(f) for f in files},
    }
    path = Path(out_dir) / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return manifest


def run_converge(cfg: ExperimentConfig):
    """Coupled convergence study; writes errors.csv, orders.csv, manifest.json."""
    started = time.time()
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    problem = builtin_problem(cfg.problem).with_horizon(cfg.horizon)
    taming = TamingConfig(cfg.alpha, cfg.gamma)
    result = simulate_coupled(problem, cfg.schemes, taming, cfg.k_ref, cfg.levels,
                              cfg.paths, SeedSpec(cfg.seed), workers=cfg.workers)
    if result.reference_diverged:
        raise RunError(f"{result.reference_diverged} reference paths diverged")
    rows = error_table(result, cfg.test_functions)
    write_csv(out / "errors.csv", ERRORS_HEADER,
              [[getattr(r, c) for c in ERRORS_HEADER] for r in rows])

    orders = []
    for s in cfg.schemes:
        srows = sorted({r.h: r for r in rows if r.scheme == s}.values(), key=lambda r: -r.h)
        orders.append(_fit(s, "strong", "", [r.h for r in srows], [r.strong_rmse for r in srows]))
        for fn in cfg.test_functions:
            frows = [r for r in rows if r.scheme == s and r.fname == fn]
            orders.append(_fit(s, "weak", fn, [r.h for r in frows], [r.weak_err for r in frows]))
    write_csv(out / "orders.csv", ORDERS_HEADER,
              [[o[c] for c in ORDERS_HEADER] for o in orders])
    files = [out / "errors.csv", out / "orders.csv"]
    write_manifest(out, cfg, files, started)
    return rows, orders


def _fit(scheme, kind, fname, h, err):
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            rep = fit_order(h, err, scheme, kind, fname)
        slope, icpt, res = rep.slope, rep.intercept, rep.residual
    except ValueError as exc:
        log.warning("no order fit for %s/%s/%s: %s", scheme, kind, fname, exc)
        slope = icpt = res = float("nan")
    return {"scheme": scheme, "error_kind": kind, "fname": fname,
            "slope": slope, "intercept": icpt, "residual": res}


def _log_density(problem_name, beta):
    if problem_name == "quartic_langevin_1d":
        return lambda x: -beta * np.sum(np.asarray(x) ** 4, axis=-1) / 4.0
    if problem_name == "ou_1d":
        return lambda x: -beta * np.sum(np.asarray(x) ** 2, axis=-1) / 2.0
    raise ValueError(f"no Gibbs density for {problem_name}")


def gibbs_moment(problem_name, beta, k):
    """E[X^k] under the 1D Gibbs target of a sampler problem, by quadrature."""
    logp = _log_density(problem_name, beta)
    dens = lambda x: math.exp(float(logp(np.array([x]))))
    z, _ = integrate.quad(dens, -np.inf, np.inf)
    m, _ = integrate.quad(lambda x: x**k * dens(x), -np.inf, np.inf)
    return m / z


def run_sample(cfg: ExperimentConfig):
    """T-SGLD runs per step size; writes samples.csv, diagnostics.csv, metrics.csv."""
    started = time.time()
    s = cfg.sampler
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    problem = builtin_problem(s.problem)
    logp = _log_density(s.problem, s.beta)
    oracle = gibbs_moment(s.problem, s.beta, s.moment_k)
    metrics, diag = [], []
    sample_path = out / "samples.csv"
    fh = open(sample_path, "w", newline="", encoding="utf-8") if s.write_samples else None
    try:
        if fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["h", "chain"] + [f"x{i + 1}" for i in range(problem.dim)])
        for h in s.step_sizes:
            sc = SamplerConfig(
                drift=problem.drift, beta=s.beta, h=h, taming=TamingConfig(cfg.alpha, cfg.gamma),
                n_steps=s.n_steps, burn_in=s.burn_in, thin=s.thin, seed=SeedSpec(cfg.seed),
                n_chains=s.chains, x0=tuple(problem.x0), delta=s.delta,
            )
            chain = run_chain(sc)
            n_div = int(np.sum(chain.diverged_chains))
            if n_div:
                log.error("h=%g: %d diverged chains", h, n_div)
            if len(chain.samples):
                mom = stationary_moment(chain.samples, s.moment_k)
                mse = moment_stderr(chain, s.moment_k) if len(chain.samples) > 50 else float("nan")
                try:
                    kl = kl_histogram(chain.samples, logp, s.bins, s.hist_range)
                except ValueError:
                    kl = float("nan")
            else:
                mom = mse = kl = float("nan")
            metrics.append([h, len(chain.samples), n_div, s.moment_k, mom, mse, oracle,
                            abs(mom - oracle), kl, chain.max_abs])
            diag.extend([h, int(c[0]), c[1], c[2]] for c in chain.checkpoints)
            if fh:
                for cid, row in zip(chain.chain_ids, chain.samples):
                    w.writerow([_cell(h), str(int(cid))] + [_cell(v) for v in row])
    finally:
        if fh:
            fh.close()
    write_csv(out / "metrics.csv", METRICS_HEADER, metrics)
    write_csv(out / "diagnostics.csv", ["h", "checkpoint", "lyapunov", "max_abs"], diag)
    files = [out / "metrics.csv", out / "diagnostics.csv"] + ([sample_path] if s.write_samples else [])
    write_manifest(out, cfg, files, started)
    return metrics


def run_validate(cfg: ExperimentConfig, **mutants):
    """Run the invariant suites; writes validate.csv. Returns True when all pass."""
    started = time.time()
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    results = run_checks(**mutants)
    write_csv(out / "validate.csv", ["suite", "check", "result", "detail"],
              [[s, n, "pass" if ok else "fail", d] for s, n, ok, d in results])
    write_manifest(out, cfg, [out / "validate.csv"], started)
    for s, n, ok, d in results:
        log.info("%-10s %-32s %s %s", s, n, "PASS" if ok else "FAIL", d)
    return all(ok for *_, ok, _ in results)


def build_parser():
    p = argparse.ArgumentParser(prog="tamed-sde", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("converge", "sample", "validate"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=Path, required=(name != "validate"),
                        help="experiment config file")
        sp.add_argument("--out", type=Path, help="output directory (overrides config)")
        sp.add_argument("--seed", type=int, help="master seed (overrides config)")
        sp.add_argument("--threads", type=int,
                        help="worker processes (default: config, then $TAMED_SDE_THREADS)")
    return p


def main(argv=None):
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        if args.config is None:
            cfg = parse_config("[experiment]\nkind = validate\n")
        else:
            cfg = load_config(args.config)
        if cfg.kind != args.command:
            raise ConfigError(f"config kind {cfg.kind!r} does not match command {args.command!r}")
        cfg = cfg.with_overrides(seed=args.seed, out=args.out, workers=args.threads)
    except (ConfigError, OSError) as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    try:
        if cfg.kind == "converge":
            run_converge(cfg)
        elif cfg.kind == "sample":
            run_sample(cfg)
        else:
            return EXIT_OK if run_validate(cfg) else EXIT_VALIDATE
    except (RunError, MemoryError, RuntimeError, ValueError) as exc:
        log.error("run failed: %s", exc)
        return EXIT_RUN
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
