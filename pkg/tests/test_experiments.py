import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from norminflation import norms
from norminflation.construction import build_frequency_family, build_initial_data, geometric_magnitudes
from norminflation.errors import BudgetExceeded, ConfigError
from norminflation.experiments import (ExperimentConfig, RunManifest, build_time_ladder, config_hash,
                                       fit_power_law, measure_scaling, run_inflation_experiment, sweep,
                                       sweep_points)


def fam(r, ratio=4, K=2):
    return build_frequency_family(K, r, magnitudes=geometric_magnitudes(K, r, ratio))


def test_ladder_visits_every_shell():
    lad = build_time_ladder(2.0, fam(4))
    assert lad.beta == 4 and lad.beta_uncapped == 8.0
    assert [e.r_alpha for e in lad.entries] == [3, 2, 1, 0]
    f = fam(4)
    assert lad.entries[0].T_alpha == f.magnitudes[2] ** -2.0
    assert lad.entries[-1].T_alpha == 1 / 4


def test_ladder_even_division_and_single_shell():
    lad = build_time_ladder(1.0, fam(3))  # Q^3 = 1 divides r
    assert lad.entries[-1].r_alpha == 0 and lad.entries[-1].T_alpha == 1 / 4
    single = build_time_ladder(3.0, fam(1))
    assert len(single.entries) == 1 and single.entries[0].T_alpha == 1 / 4
    with pytest.raises(ConfigError):
        build_time_ladder(0.5, fam(2))


@given(st.floats(1.0, 3.0), st.integers(1, 6))
def test_ladder_increasing(Q, r):
    lad = build_time_ladder(Q, fam(r, ratio=2))
    ts = lad.times()
    assert all(a < b for a, b in zip(ts, ts[1:]))
    assert len({e.r_alpha for e in lad.entries}) == len(lad.entries)
    assert lad.beta <= r


def test_fit_power_law():
    x = np.array([1.0, 2.0, 4.0, 8.0])
    e, ci = fit_power_law(x, 3 * x**-0.7)
    assert abs(e + 0.7) < 1e-12 and ci[0] <= e <= ci[1]
    with pytest.raises(ConfigError):
        fit_power_law([1, 2], [1, 2])
    with pytest.raises(ConfigError):
        fit_power_law([1, 2, 3], [1, 2, 3])  # span below x4
    with pytest.raises(ConfigError):
        fit_power_law([1, 2, 4], [0, 0, 0])


def test_measure_scaling_Q_axis():
    fit = measure_scaling("u0_besov", "Q", [1, 2, 4], r=1)
    assert abs(fit.exponent - 1) <= 1e-9
    fit = measure_scaling("u10_besov", "Q", [1, 2, 4], r=1)
    assert abs(fit.exponent - 2) <= 1e-6


def test_measure_scaling_refuses_zero():
    with pytest.raises(ConfigError):
        measure_scaling("u0_besov", "Q", [0.0, 0.0, 0.0])


def small_cfg(tmp_path, **kw):
    base = dict(magnitudes=[8, 16], Q=1.0, N=64, T_end=0.2, xt_T=0.1, output_dir=str(tmp_path / "run"))
    base.update(kw)
    return ExperimentConfig(**base)


def test_inflation_pipeline_artifacts(tmp_path):
    cfg = small_cfg(tmp_path)
    rep = run_inflation_experiment(cfg)
    out = tmp_path / "run"
    for name in ("manifest.json", "initial_data.json", "u1.json", "report.json", "diagnostics.csv",
                 "besov_curve.dat", "besov_curve.gp", "u_tstar.nsgf"):
        assert (out / name).exists(), name
    assert rep.audit["holds"]
    assert rep.y_xt["identity_ok"] and all(e["identity_ok"] for e in rep.y_ladder)
    xs = [e["xt"] for e in rep.y_ladder]
    assert all(a <= b + 1e-12 for a, b in zip(xs, xs[1:]))
    d = build_initial_data(cfg.family(), cfg.Q)
    w = rep.u0_besov["witnesses"]
    assert abs(norms.besov_witness_value(d.field, w) / rep.u0_besov["value"] - 1) <= 1e-12
    assert rep.solver["max_divergence"] <= 1e-10
    assert json.loads((out / "report.json").read_text())["manifest_hash"] == config_hash(cfg)


def test_linear_regime_no_inflation(tmp_path):
    rep = run_inflation_experiment(small_cfg(tmp_path, Q=0.05, family_norms=False), write=False)
    assert abs(rep.ratio_all_t - 1) <= 0.05


def test_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"bogus": 1})
    with pytest.raises(ConfigError):
        ExperimentConfig(magnitudes=[8, 32], shell_ratio=4).validate()
    with pytest.raises(BudgetExceeded):
        ExperimentConfig(sweep_Q=list(range(1, 9)), sweep_r=[1, 2, 3, 4, 5, 6, 7, 8, 9], shell_ratio=2).validate()
    with pytest.raises(ConfigError):
        sweep_points(ExperimentConfig(magnitudes=[8, 32], sweep_r=[1, 2]))


def test_manifest_and_hash(tmp_path):
    a = small_cfg(tmp_path)
    b = small_cfg(tmp_path, output_dir="elsewhere")
    assert config_hash(a) == config_hash(b)
    assert config_hash(a) != config_hash(small_cfg(tmp_path, Q=1.5))
    m = RunManifest.for_config(a).to_dict()
    assert m["config"]["Q"] == 1.0 and len(m["config_hash"]) == 64
    path = tmp_path / "c.json"
    path.write_text(json.dumps(a.to_dict()))
    assert ExperimentConfig.load(path) == a


def test_sweep_single_point_matches_run(tmp_path):
    cfg = small_cfg(tmp_path, family_norms=False, output_dir=str(tmp_path / "sw"))
    csv_path, idx_path = sweep(cfg)
    lines = csv_path.read_text().splitlines()
    assert len(lines) == 2
    rep = run_inflation_experiment(cfg, write=False)
    assert repr(rep.inflation_ratio) in lines[1]
    assert json.loads(idx_path.read_text())["rows"] == 1


def test_sweep_deterministic(tmp_path):
    cfg = small_cfg(tmp_path, family_norms=False, sweep_Q=[0.5, 1.0], T_end=0.1, xt_T=0.05)
    a = sweep(ExperimentConfig(**{**cfg.to_dict(), "output_dir": str(tmp_path / "a")}))[0].read_bytes()
    b = sweep(ExperimentConfig(**{**cfg.to_dict(), "output_dir": str(tmp_path / "b")}))[0].read_bytes()
    assert a == b and a.count(b"\n") == 3
