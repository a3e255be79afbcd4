import dataclasses
import json

import numpy as np
import pytest

from rdcal.experiments import (
    BENCHMARK_SCHEMA,
    SNR_CAP_DB,
    TRIAL_SCHEMA,
    BenchmarkRecord,
    ConfigError,
    ExperimentConfig,
    SchemaError,
    build_context,
    pool_size,
    read_records_csv,
    rmse,
    run_benchmark,
    run_calibration_study,
    run_mq_sweep,
    run_perturbation_study,
    snr,
    summarize,
    write_records_csv,
    write_timings_csv,
)


def strip_times(records):
    return [dataclasses.replace(r, times={}) for r in records]


def test_rmse_values():
    a = np.arange(5.0)
    assert rmse(a, a) == 0.0
    assert rmse(a, a + 0.25) == pytest.approx(0.25)
    with pytest.raises(ValueError):
        rmse(a, a[:4])


def test_snr_values():
    x = np.sin(np.arange(50.0))
    assert snr(x, np.zeros(50)) == pytest.approx(0.0)
    assert snr(x, x * (1 - 1e-3)) == pytest.approx(60.0)
    assert snr(x, x) == SNR_CAP_DB
    with pytest.raises(ValueError):
        snr(np.zeros(5), np.ones(5))
    with pytest.raises(ValueError):
        snr(x, x[:3])


def test_config_derived_dimensions():
    cfg = ExperimentConfig()
    assert (cfg.N, cfg.M, cfg.R, cfg.L) == (12600, 1050, 12, 108)
    assert ExperimentConfig(filter="chebyshev").L == 228
    assert ExperimentConfig(filter="accumulate-and-dump").L == 12
    assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg


@pytest.mark.parametrize(
    "bad",
    [
        {"filter": "bessel"},
        {"trials": 0},
        {"sample_rate_hz": 1000.0},
        {"reconstruct": ["magic"]},
        {"sigma_fraction": -0.1},
        {"m_q": 0},
        {"impulse_length": 20000},
    ],
)
def test_config_rejects(bad):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(bad)


def test_config_unknown_key():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"grid_rate": 1.0})


def test_context_uses_default_lengths():
    ctx = build_context(ExperimentConfig())
    assert ctx.h.length == 108 and ctx.system.R == 12
    assert ctx.h.samples.sum() == pytest.approx(1.0, rel=1e-4)


def test_perturbation_study_is_deterministic(small_cfg):
    a = run_perturbation_study(small_cfg)
    b = run_perturbation_study(small_cfg)
    assert strip_times(a) == strip_times(b)
    assert [r.trial for r in a] == [0, 1]
    for r in a:
        assert r.error is None
        assert r.rmse_uncalibrated > 0
        assert r.snr_oracle_model >= r.snr_nominal_model
        assert r.snr_calibrated is None


def test_zero_tolerance_makes_models_agree(small_cfg):
    cfg = dataclasses.replace(small_cfg, sigma_fraction=1e-14, actual_length=small_cfg.L)
    for r in run_perturbation_study(cfg):
        assert r.rmse_uncalibrated < 1e-15
        assert r.snr_nominal_model == pytest.approx(r.snr_oracle_model, abs=1e-3)


def test_calibration_study(small_cfg):
    recs = run_calibration_study(small_cfg)
    for r in recs:
        assert r.branch == "least-squares"
        assert r.rmse_calibrated < r.rmse_uncalibrated
        assert r.snr_calibrated > r.snr_nominal_model
        assert set(r.times) >= {"perturb", "calibrate", "calibrated"}
    s = summarize(recs)
    assert s["trials"] == 2 and s["failed"] == 0
    assert s["rmse_reduction_factor"] > 5


def test_failed_trial_is_recorded(small_cfg):
    cfg = dataclasses.replace(small_cfg, m_q=5, trials=1, reconstruct=())
    (rec,) = run_calibration_study(cfg)
    assert rec.error is not None and "m_q" in rec.error
    assert rec.rmse_uncalibrated > 0


def test_parallel_matches_sequential(small_cfg, monkeypatch):
    cfg = dataclasses.replace(small_cfg, reconstruct=())
    seq = run_calibration_study(cfg, workers=1)
    par = run_calibration_study(cfg, workers=2)
    assert strip_times(seq) == strip_times(par)


def test_pool_size_env(monkeypatch):
    monkeypatch.setenv("RD_CALIB_THREADS", "1")
    assert pool_size() == 1
    monkeypatch.setenv("RD_CALIB_THREADS", "lots")
    assert pool_size() == 1
    monkeypatch.delenv("RD_CALIB_THREADS")
    assert pool_size() == 1


def test_mq_sweep_rows(small_cfg):
    rows = run_mq_sweep(dataclasses.replace(small_cfg, trials=3), [105, 189], [5, 10])
    assert [(r["m_q"], r["k"]) for r in rows] == [(105, 5), (189, 5), (105, 10), (189, 10)]
    by = {(r["m_q"], r["k"]): r for r in rows}
    assert by[(105, 10)]["branch"] == "tikhonov"
    assert by[(189, 10)]["mean_rmse_calibrated"] < by[(105, 10)]["mean_rmse_calibrated"]


def test_benchmark_small(small_cfg):
    cfg = dataclasses.replace(small_cfg, m_q=350, reconstruct=("calibrated", "oracle"))
    recs = run_benchmark(cfg)
    assert [r.rmse_uncalibrated for r in recs] == sorted(r.rmse_uncalibrated for r in recs)
    for r in recs:
        assert r.samples_mbc == 350
        assert r.samples_dftti == cfg.N * cfg.M and r.probes_dftti == cfg.N
        assert r.rmse_dftti <= r.rmse_mbc + 1e-14
        assert r.snr_dftti > 80 and r.snr_nominal_model is None
    assert "time_ratio_dftti_over_mbc" in summarize(recs)


def test_accumulate_and_dump_has_no_component_model():
    cfg = ExperimentConfig(filter="accumulate-and-dump", trials=1, grid_rate_hz=4200.0, sample_rate_hz=350.0)
    assert np.all(build_context(cfg).h.samples == 1.0)
    with pytest.raises(ConfigError):
        run_perturbation_study(cfg)


def test_trial_csv_round_trip(small_cfg, tmp_path):
    recs = run_calibration_study(dataclasses.replace(small_cfg, reconstruct=()))
    path = write_records_csv(recs, tmp_path / "t.csv")
    schema, rows = read_records_csv(path)
    assert schema == TRIAL_SCHEMA and len(rows) == 2
    assert rows[1]["rmse_calibrated"] == recs[1].rmse_calibrated
    assert rows[0]["c1"] == recs[0].components["c1"]
    assert "time_" not in path.read_text()
    timing = write_timings_csv(recs, tmp_path / "time.csv").read_text().splitlines()
    assert timing[0].startswith("trial,time_perturb") and len(timing) == 3


def test_benchmark_csv_schema(tmp_path):
    rec = BenchmarkRecord(0, 1e-4, 1e-6, 1e-16, 80.0, 40.0, 120.0, 120.0, 0.1, 10.0, 189, 100, 10)
    schema, rows = read_records_csv(write_records_csv([rec], tmp_path / "b.csv"))
    assert schema == BENCHMARK_SCHEMA and rows[0]["probes_dftti"] == 10


def test_schema_mismatch_fails_loudly(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text(f"# schema: {TRIAL_SCHEMA}\ntrial,whatever\n0,1\n")
    with pytest.raises(SchemaError):
        read_records_csv(bad)
    bad.write_text("trial\n0\n")
    with pytest.raises(SchemaError):
        read_records_csv(bad)
    bad.write_text("# schema: rdcal-trials/99\ntrial\n")
    with pytest.raises(SchemaError):
        read_records_csv(bad)


def test_summary_is_json_serializable(small_cfg):
    recs = run_perturbation_study(dataclasses.replace(small_cfg, trials=1))
    json.dumps(summarize(recs))
    assert summarize([]) == {"trials": 0}
