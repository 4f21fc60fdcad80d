import csv
import hashlib
import json
import math
from importlib import resources

import numpy as np
import pytest

from tamed_sde import montecarlo, taming
from tamed_sde.cli import (
    ERRORS_HEADER,
    EXIT_CONFIG,
    EXIT_OK,
    EXIT_RUN,
    METRICS_HEADER,
    ORDERS_HEADER,
    gibbs_moment,
    main,
)
from tamed_sde.config import ConfigError, parse_config
from tamed_sde.validate import run_checks

MINIMAL = """
[experiment]
kind = converge
problem = ginzburg_landau_1d
schemes = mte, tamed_euler
[montecarlo]
k_ref = 8
levels = 4, 5, 6
paths = 40
"""

SAMPLE = """
[experiment]
kind = sample
[montecarlo]
seed = 7
[sampler]
problem = quartic_langevin_1d
step_sizes = {hs}
n_steps = {n}
burn_in = {burn}
thin = {thin}
chains = {chains}
write_samples = {write}
"""


def _bundled():
    root = resources.files("tamed_sde") / "configs"
    return sorted(p for p in root.iterdir() if p.name.endswith(".cfg"))


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_minimal_config_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg.schemes == ("mte", "tamed_euler")
    assert (cfg.alpha, cfg.gamma, cfg.horizon, cfg.seed) == (0.5, 1.0, 1.0, 0)
    assert cfg.test_functions == ()


@pytest.mark.parametrize("path", _bundled(), ids=lambda p: p.name)
def test_bundled_configs_round_trip(path):
    cfg = parse_config(path.read_text())
    assert parse_config(cfg.to_text()) == cfg


def test_alpha_rejected():
    with pytest.raises(ConfigError, match=r"alpha outside \(0, 1/2\]"):
        parse_config(MINIMAL + "[taming]\nalpha = 0.7\n")


def test_unknown_scheme_lists_valid_names():
    with pytest.raises(ConfigError, match="modified_tamed_milstein"):
        parse_config(MINIMAL.replace("mte, tamed_euler", "mte, rk4"))


def test_empty_scheme_list():
    with pytest.raises(ConfigError, match="empty scheme list"):
        parse_config(MINIMAL.replace("mte, tamed_euler", ""))


def test_strict_keys_and_sections():
    with pytest.raises(ConfigError, match="unknown key montecarlo.pathz"):
        parse_config(MINIMAL + "pathz = 3\n")
    with pytest.raises(ConfigError, match=r"unknown section \[extra\]"):
        parse_config(MINIMAL + "[extra]\na = 1\n")
    with pytest.raises(ConfigError, match="montecarlo.k_ref, montecarlo.levels"):
        parse_config("[experiment]\nkind = converge\nproblem = ou_1d\nschemes = mte\n"
                     "[montecarlo]\npaths = 3\n")


def test_sample_config_errors():
    text = SAMPLE.format(hs="", n=10, burn=0, thin=1, chains=1, write="true")
    with pytest.raises(ConfigError, match="step size"):
        parse_config(text)
    with pytest.raises(ConfigError, match="test function"):
        parse_config(MINIMAL.replace("schemes = mte, tamed_euler",
                                     "schemes = mte\ntest_functions = exp_sumsq"))


def test_exit_codes(tmp_path):
    assert main(["converge", "--config", str(tmp_path / "missing.cfg")]) == EXIT_CONFIG
    bad = tmp_path / "bad.cfg"
    bad.write_text(MINIMAL + "[taming]\nalpha = 0.7\n")
    assert main(["converge", "--config", str(bad)]) == EXIT_CONFIG
    good = tmp_path / "good.cfg"
    good.write_text(MINIMAL)
    assert main(["sample", "--config", str(good)]) == EXIT_CONFIG
    # horizon that is not a whole number of coarse steps fails at run time
    odd = tmp_path / "odd.cfg"
    odd.write_text(MINIMAL.replace("kind = converge", "kind = converge\nhorizon = 0.3"))
    assert main(["converge", "--config", str(odd), "--out", str(tmp_path / "o")]) == EXIT_RUN


def test_converge_outputs(tmp_path):
    cfgp = tmp_path / "c.cfg"
    cfgp.write_text(MINIMAL.replace("tamed_euler", "tamed_euler, mte_rbm"))
    out = tmp_path / "run"
    assert main(["converge", "--config", str(cfgp), "--out", str(out), "--seed", "3",
                 "--threads", "1"]) == EXIT_OK
    errors = _rows(out / "errors.csv")
    assert errors[0] == ERRORS_HEADER
    assert len(errors) == 1 + 3 * 3
    orders = _rows(out / "orders.csv")
    assert orders[0] == ORDERS_HEADER
    assert [r[:2] for r in orders[1:]] == [["mte", "strong"], ["tamed_euler", "strong"],
                                          ["mte_rbm", "strong"]]
    manifest = json.loads((out / "manifest.json").read_text())
    for name in ("errors.csv", "orders.csv"):
        digest = hashlib.sha256((out / name).read_bytes()).hexdigest()
        assert manifest["checksums"][name] == digest
    assert "seed = 3" in manifest["config"]


def test_converge_weak_columns(tmp_path):
    cfgp = tmp_path / "c.cfg"
    cfgp.write_text(MINIMAL.replace("schemes = mte, tamed_euler",
                                    "schemes = mte\ntest_functions = cos_x, cos_exp_x"))
    out = tmp_path / "run"
    assert main(["converge", "--config", str(cfgp), "--out", str(out)]) == EXIT_OK
    rows = _rows(out / "errors.csv")[1:]
    assert {r[4] for r in rows} == {"cos_x", "cos_exp_x"}
    orders = _rows(out / "orders.csv")[1:]
    assert [r[1:3] for r in orders] == [["strong", ""], ["weak", "cos_x"],
                                        ["weak", "cos_exp_x"]]


def test_sample_thinning_row_count(tmp_path):
    cfgp = tmp_path / "s.cfg"
    cfgp.write_text(SAMPLE.format(hs="0.01", n=100_000, burn=0, thin=10, chains=1,
                                  write="true"))
    out = tmp_path / "s"
    assert main(["sample", "--config", str(cfgp), "--out", str(out)]) == EXIT_OK
    rows = _rows(out / "samples.csv")
    assert rows[0] == ["h", "chain", "x1"]
    assert len(rows) - 1 == 10_000
    metrics = _rows(out / "metrics.csv")
    assert metrics[0] == METRICS_HEADER
    diag = _rows(out / "diagnostics.csv")
    assert len(diag) - 1 == 99


def test_sample_moment_errors_decrease(tmp_path):
    # pinned from the first run with seed 7: 0.00729, 0.00319, 0.00213
    cfgp = tmp_path / "s.cfg"
    cfgp.write_text(SAMPLE.format(hs="0.02, 0.01, 0.005", n=4000, burn=1000, thin=10,
                                  chains=2000, write="false"))
    out = tmp_path / "s"
    assert main(["sample", "--config", str(cfgp), "--out", str(out)]) == EXIT_OK
    assert not (out / "samples.csv").exists()
    rows = _rows(out / "metrics.csv")[1:]
    err = [float(r[METRICS_HEADER.index("moment_error")]) for r in rows]
    assert err[0] > err[1] > err[2]
    assert err == pytest.approx([0.00729, 0.00319, 0.00213], abs=5e-5)
    assert all(r[2] == "0" for r in rows)


def test_gibbs_moment_oracle():
    assert gibbs_moment("quartic_langevin_1d", 1.0, 2) == pytest.approx(
        2 * math.gamma(0.75) / math.gamma(0.25), rel=1e-9)
    assert gibbs_moment("ou_1d", 2.0, 2) == pytest.approx(0.5, rel=1e-9)


def test_validate_default_passes(tmp_path):
    assert main(["validate", "--out", str(tmp_path / "v")]) == EXIT_OK
    rows = _rows(tmp_path / "v" / "validate.csv")
    assert rows[0] == ["suite", "check", "result", "detail"]
    assert all(r[2] == "pass" for r in rows[1:])


def _misweighted_psi(r):
    # bridge weight uses the wrong exponential in the numerator
    r = np.asarray(r, dtype=float)
    out = np.where(r >= 2, r, 0.0)
    mid = (r > 1) & (r < 2)
    a = np.exp(-1.0 / (r[mid] - 1.0))
    b = np.exp(-1.0 / (2.0 - r[mid]))
    out[mid] = r[mid] * b / (a + b)
    return out


def _off_by_one_coarsen(lattice, m):
    inc = montecarlo.coarsen(lattice, m)
    return np.concatenate([inc[1:], inc[:1]])


def _checks(**mutants):
    return {name: ok for _, name, ok, _ in run_checks(**mutants)}


def test_psi_mutation_caught():
    res = _checks(psi=_misweighted_psi)
    assert not res["cutoff_continuity"]
    assert res["coupling_identity"]


def test_coarsen_mutation_caught():
    res = _checks(coarsen=_off_by_one_coarsen)
    assert not res["coupling_identity"]
    assert res["cutoff_continuity"]


def test_classic_taming_fails_identity_check():
    res = _checks(tame=lambda b, h, cfg: taming.tame_classic(b, h, cfg.alpha))
    assert not res["taming_identity_region"]


def test_validate_mutation_exit_code(tmp_path, monkeypatch):
    import tamed_sde.cli as cli
    orig = cli.run_checks
    monkeypatch.setattr(cli, "run_checks", lambda: orig(psi=_misweighted_psi))
    assert main(["validate", "--out", str(tmp_path)]) == cli.EXIT_VALIDATE
