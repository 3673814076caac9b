import json
import math
import subprocess
import sys
import warnings

import numpy as np
import pytest

from sparseapprox.cli import EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, main
from sparseapprox.index_sets import hyperbolic_cross
from sparseapprox.experiments import (
    PRESETS,
    ConfigError,
    ExperimentConfig,
    aggregate_log_stats,
    parse_quadrature,
    preset,
    run_experiment,
)


def small_iterations_cfg(**kw):
    base = dict(experiment="custom", plot="iterations", function="f1", d=2, n=30, m=60,
                zeta=[1e-4, 1e-8], quadrature="cc:4", iterations=120, error_every=10)
    base.update(kw)
    return ExperimentConfig(**base)


def small_sweep_cfg(**kw):
    base = dict(experiment="custom", plot="m-sweep", function="f1", d=2, n=30,
                m_grid=[20, 40, 80], zeta=[1e-8], trials=3, quadrature="cc:4",
                iterations=2000)
    base.update(kw)
    return ExperimentConfig(**base)


def test_aggregate_log_stats():
    mean, lo, hi = aggregate_log_stats([2.5, 2.5, 2.5])
    assert mean == pytest.approx(2.5) and lo == pytest.approx(2.5) and hi == pytest.approx(2.5)
    assert aggregate_log_stats([math.e, math.e**3])[0] == pytest.approx(math.e**2)
    v = np.random.default_rng(0).lognormal(size=17)
    logs = [math.log(x) for x in v]
    mu = sum(logs) / len(logs)
    sd = math.sqrt(sum((l - mu) ** 2 for l in logs) / (len(logs) - 1))
    np.testing.assert_allclose(aggregate_log_stats(v), (math.exp(mu), math.exp(mu - sd), math.exp(mu + sd)),
                               rtol=1e-13)
    with pytest.warns(RuntimeWarning):
        assert aggregate_log_stats([1.0, -1.0, 0.0, 4.0])[0] == pytest.approx(2.0)
    with pytest.warns(RuntimeWarning):
        assert math.isnan(aggregate_log_stats([0.0])[0])


def test_config_round_trip():
    for name in PRESETS:
        cfg = preset(name)
        cfg.validate()
        assert ExperimentConfig.from_ini(cfg.to_ini()) == cfg
    cfg = small_sweep_cfg(zeta=[1e-4, 0.1 + 0.2])
    assert ExperimentConfig.from_ini(cfg.to_ini()) == cfg


def test_config_errors():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_ini("[other]\nx = 1\n")
    with pytest.raises(ConfigError):
        ExperimentConfig.from_ini("[experiment]\nbogus = 1\n")
    with pytest.raises(ConfigError):
        ExperimentConfig.from_ini("[experiment]\nm = many\n")
    with pytest.raises(ConfigError):
        ExperimentConfig.from_ini("not an ini")
    with pytest.raises(ConfigError):
        small_sweep_cfg(m_grid=[]).validate()
    with pytest.raises(ConfigError):
        small_iterations_cfg(function="f3", d=3).validate()
    with pytest.raises(ConfigError):
        small_iterations_cfg().with_overrides(["m"])
    with pytest.raises(ConfigError):
        preset("fig9")
    with pytest.raises(ConfigError):
        parse_quadrature("cc:10", 16)
    with pytest.raises(ConfigError):
        parse_quadrature("gauss:3", 2)
    assert parse_quadrature("mc:100:7", 30) == ("mc", 100, 7)


def test_preset_caption_sizes():
    assert preset("fig1").N_caption == 997
    assert preset("fig2").N_caption == 8277
    assert preset("fig6").trials == 10 and preset("fig6").full_trials == 50


def test_iterations_run(tmp_path):
    outdir, failed = run_experiment(small_iterations_cfg(), root=tmp_path)
    assert failed == 0
    lines = (outdir / "trial_000.csv").read_text().splitlines()
    assert lines[0] == ("iteration,pd_iterate,pd_ergodic,pdr_iterate_zeta=1e-04,pdr_ergodic_zeta=1e-04,"
                        "pdr_iterate_zeta=1e-08,pdr_ergodic_zeta=1e-08,theory")
    assert len(lines) == 13
    rows = np.loadtxt(outdir / "trial_000.csv", delimiter=",", skiprows=1)
    assert np.all(np.isfinite(rows))
    # the restarted ergodic error beats the plain ergodic one by the end
    assert rows[-1, 6] < rows[-1, 2]
    man = json.loads((outdir / "manifest.json").read_text())
    assert man["index_set"]["N_enumerated"] == len(hyperbolic_cross(30, 2)) == 111
    assert set(man) >= {"config", "seeds", "versions", "failures"}
    assert (outdir / "plot.gp").read_text().startswith("# gnuplot")
    assert ExperimentConfig.from_ini((outdir / "config.ini").read_text()) == small_iterations_cfg()


def test_determinism(tmp_path):
    cfg = small_iterations_cfg()
    a, _ = run_experiment(cfg, root=tmp_path / "a")
    b, _ = run_experiment(cfg, root=tmp_path / "b")
    for name in ("trial_000.csv", "aggregate.csv", "manifest.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_sweep_run_and_parallel(tmp_path):
    cfg = small_sweep_cfg()
    out1, failed = run_experiment(cfg, root=tmp_path / "serial")
    assert failed == 0
    agg = (out1 / "aggregate.csv").read_text().splitlines()
    assert agg[0] == "m,geo_mean,band_lower,band_upper,trials" and len(agg) == 4
    man = json.loads((out1 / "manifest.json").read_text())
    assert isinstance(man["monotone_trend"], bool)
    out2, _ = run_experiment(cfg, root=tmp_path / "parallel", jobs=2)
    for t in range(3):
        name = f"trial_{t:03d}.csv"
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()


def test_fig5_reduced_monotone(tmp_path):
    cfg = preset("fig5").with_overrides(["trials=10", "m_grid=100,250", "n=60"])
    outdir, failed = run_experiment(cfg, root=tmp_path)
    man = json.loads((outdir / "manifest.json").read_text())
    assert failed == 0 and man["monotone_trend"] is True


def test_caption_mismatch_flag(tmp_path):
    cfg = small_iterations_cfg(N_caption=112, iterations=20)
    outdir, _ = run_experiment(cfg, root=tmp_path)
    info = json.loads((outdir / "manifest.json").read_text())["index_set"]
    assert info == {"n": 30, "N_enumerated": 111, "N_caption": 112, "N_mismatch": True}


def test_partial_failures_recorded(tmp_path, monkeypatch):
    import sparseapprox.experiments as ex

    real = ex._sweep_trial

    def flaky(cfg, trial, quad, fvals):
        if trial == 1:
            raise ex.DivergenceError("boom")
        return real(cfg, trial, quad, fvals)

    monkeypatch.setattr(ex, "_sweep_trial", flaky)
    outdir, failed = run_experiment(small_sweep_cfg(), root=tmp_path)
    assert failed == 1
    man = json.loads((outdir / "manifest.json").read_text())
    assert "1" in man["failures"] and not (outdir / "trial_001.csv").exists()
    assert (outdir / "trial_002.csv").exists()
    code = main(["run", str(outdir / "config.ini"), "--output-root", str(tmp_path / "again")])
    assert code == EXIT_NUMERICAL


def test_cli_commands(tmp_path, monkeypatch, capsys):
    assert main(["presets"]) == EXIT_OK
    assert "fig8" in capsys.readouterr().out
    assert main(["presets", "--write", str(tmp_path / "cfgs")]) == EXIT_OK
    assert len(list((tmp_path / "cfgs").glob("fig*.ini"))) == 8
    assert main(["validate", str(tmp_path / "cfgs" / "fig3.ini")]) == EXIT_OK
    assert main(["validate", "fig2", "--set", "trials=2"]) == EXIT_OK
    assert main(["validate", "fig2", "--set", "quadrature=cc:9"]) == EXIT_CONFIG
    assert main(["validate", str(tmp_path / "missing.ini")]) == EXIT_CONFIG
    monkeypatch.setenv("APPROX_OUTPUT_ROOT", str(tmp_path / "env"))
    code = main(["run", "fig1", "--set", "n=30", "--set", "iterations=40", "--set", "error_every=20",
                 "--set", "output_dir=quick"])
    assert code == EXIT_OK
    assert (tmp_path / "env" / "quick" / "aggregate.csv").exists()


def test_console_script(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "sparseapprox.cli", "validate", "fig1"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "ok: fig1" in proc.stdout
    proc = subprocess.run([sys.executable, "-m", "sparseapprox.cli", "validate", "nope.ini"],
                          capture_output=True, text=True)
    assert proc.returncode == 2


def test_hilbert_valued_iterations(tmp_path):
    cfg = small_iterations_cfg(function="f3", mesh_q=9, iterations=60)
    outdir, failed = run_experiment(cfg, root=tmp_path)
    assert failed == 0
    rows = np.loadtxt(outdir / "aggregate.csv", delimiter=",", skiprows=1)
    assert rows[-1, 6] < 0.1 * rows[0, 6]
