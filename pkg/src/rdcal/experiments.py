"""Monte-Carlo studies: perturbation damage, calibration, M_q sweep and the probing benchmark.

Every trial draws its randomness from ``SeedSequence(seed, spawn_key=(1, trial))``
so results do not depend on execution order or pool size.
"""
from __future__ import annotations

import csv
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from functools import lru_cache
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator

from .calibrate import (
    CalibrationInput,
    calibration_system,
    dftti_calibrate,
    impulse_from_phi,
    mbc_calibrate,
    rebuild_system,
    system_sampler,
    truncated_rows,
)
from .discretize import (
    DEFAULT_LENGTHS,
    ImpulseResponse,
    accumulate_and_dump_response,
    bilinear_transform,
    energy_truncation_length,
    impulse_response,
    partial_fractions,
)
from .filters import (
    REACTIVE,
    LcComponents,
    ToleranceModel,
    lc_transfer_function,
    perturb_components,
    synthesize_nominal,
)
from .rd import (
    FourierDictionary,
    RdSystem,
    apply_phi,
    generate_chipping,
    generate_multitone,
    measurement_operator,
)
from .solvers import BpdnConfig, solve_bpdn

logger = logging.getLogger(__name__)

__all__ = [
    "ExperimentConfig",
    "TrialRecord",
    "BenchmarkRecord",
    "ConfigError",
    "rmse",
    "snr",
    "SNR_CAP_DB",
    "build_context",
    "run_perturbation_study",
    "run_calibration_study",
    "run_mq_sweep",
    "run_benchmark",
    "summarize",
    "write_records_csv",
    "write_timings_csv",
    "read_records_csv",
    "TRIAL_SCHEMA",
    "BENCHMARK_SCHEMA",
    "SWEEP_SCHEMA",
]

SNR_CAP_DB = 300.0
TRIAL_SCHEMA = "rdcal-trials/1"
BENCHMARK_SCHEMA = "rdcal-benchmark/1"
SWEEP_SCHEMA = "rdcal-mq-sweep/1"
FILTERS = ("butterworth", "chebyshev", "accumulate-and-dump")
RECONSTRUCTIONS = ("nominal", "oracle", "calibrated")


class ConfigError(ValueError):
    pass


def rmse(a, b) -> float:
    """``||a - b||_2 / sqrt(L)``."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size != b.size:
        raise ValueError(f"length mismatch: {a.size} vs {b.size}")
    return float(np.linalg.norm(a - b) / np.sqrt(a.size))


def snr(x, x_hat) -> float:
    """Reconstruction SNR in dB; an exact match reports ``SNR_CAP_DB``."""
    x = np.asarray(x, dtype=float).ravel()
    x_hat = np.asarray(x_hat).real.ravel()
    if x.size != x_hat.size:
        raise ValueError(f"length mismatch: {x.size} vs {x_hat.size}")
    ref = np.linalg.norm(x)
    if ref == 0:
        raise ValueError("reference signal is zero")
    err = np.linalg.norm(x - x_hat)
    if err == 0:
        return SNR_CAP_DB
    return float(20 * np.log10(ref / err))


# ---------------------------------------------------------------- configuration


@dataclass(frozen=True)
class ExperimentConfig:
    """Monte-Carlo study settings; JSON keys carry their units."""

    filter: str = "butterworth"
    trials: int = 100
    seed: int = 0
    sigma_fraction: float = 0.02
    truncation_sigmas: float = 1.0
    perturb: tuple = REACTIVE
    grid_rate_hz: float = 12600.0
    duration_s: float = 1.0
    sample_rate_hz: float = 1050.0
    impulse_length: int | None = None
    actual_length: int | None = None
    actual_energy_tol: float = 1e-16
    discretization_rate_hz: float | None = None
    transfer_form: str = "circuit"
    k_input: int = 5
    k_calibration: int = 10
    m_q: int = 189
    random_phase: bool = False
    reconstruct: tuple = RECONSTRUCTIONS
    zeta_relative: float = 1e-6
    max_iterations: int = 2500
    optimality_tolerance: float = 1e-4

    def __post_init__(self):
        object.__setattr__(self, "perturb", tuple(self.perturb))
        object.__setattr__(self, "reconstruct", tuple(self.reconstruct))
        if self.filter not in FILTERS:
            raise ConfigError(f"unknown filter {self.filter!r}; expected one of {FILTERS}")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.N % self.M:
            raise ConfigError(f"N={self.N} is not a multiple of M={self.M}")
        if self.m_q < 1:
            raise ConfigError("m_q must be >= 1")
        bad = set(self.reconstruct) - set(RECONSTRUCTIONS)
        if bad:
            raise ConfigError(f"unknown reconstructions {sorted(bad)}")
        if self.L > self.N:
            raise ConfigError("impulse length exceeds N")
        try:
            ToleranceModel(self.sigma_fraction, self.truncation_sigmas)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @property
    def N(self) -> int:
        return int(round(self.grid_rate_hz * self.duration_s))

    @property
    def M(self) -> int:
        return int(round(self.sample_rate_hz * self.duration_s))

    @property
    def R(self) -> int:
        return self.N // self.M

    @property
    def L(self) -> int:
        if self.impulse_length is not None:
            return int(self.impulse_length)
        if self.filter == "accumulate-and-dump":
            return self.R
        return DEFAULT_LENGTHS[self.filter]

    @property
    def tolerance(self) -> ToleranceModel:
        return ToleranceModel(self.sigma_fraction, self.truncation_sigmas, self.seed)

    @property
    def solver(self) -> BpdnConfig:
        return BpdnConfig(
            relative_zeta=self.zeta_relative,
            max_iterations=self.max_iterations,
            optimality_tolerance=self.optimality_tolerance,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["perturb"] = list(self.perturb)
        d["reconstruct"] = list(self.reconstruct)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names - {"study", "mq_list", "k_list"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs = {k: v for k, v in data.items() if k in names}
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def with_overrides(self, **kw) -> "ExperimentConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **kw)


# ---------------------------------------------------------------- shared context


@dataclass
class Context:
    cfg: ExperimentConfig
    nominal: LcComponents | None
    h: ImpulseResponse
    system: RdSystem
    dictionary: FourierDictionary

    @property
    def discretization_rate(self) -> float:
        return self.cfg.discretization_rate_hz or self.cfg.grid_rate_hz

    def responses(self, components: LcComponents):
        """(first ``L`` taps, actual long response) for a component set."""
        cfg = self.cfg
        tf = lc_transfer_function(components, cfg.transfer_form)
        form = partial_fractions(bilinear_transform(tf, self.discretization_rate))
        if cfg.actual_length is None:
            n_true = energy_truncation_length(form, cfg.actual_energy_tol, max_length=cfg.N)
        else:
            n_true = cfg.actual_length
        n_true = min(max(n_true, cfg.L), cfg.N)
        full = impulse_response(form, n_true)
        rate = self.discretization_rate
        return ImpulseResponse(full.samples[: cfg.L], rate), ImpulseResponse(full.samples, rate)


def _trial_rng(cfg: ExperimentConfig, trial: int, stream: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(1, trial, stream)))


def build_context(cfg: ExperimentConfig) -> Context:
    chip = generate_chipping(cfg.N, np.random.SeedSequence(cfg.seed, spawn_key=(0,)))
    if cfg.filter == "accumulate-and-dump":
        nominal = None
        h = accumulate_and_dump_response(cfg.R, cfg.grid_rate_hz)
        if cfg.L != cfg.R:
            raise ConfigError("accumulate-and-dump response has length R")
    else:
        nominal = synthesize_nominal(cfg.filter)
        ctx = Context(cfg, nominal, ImpulseResponse(np.zeros(1)), None, None)
        h, _ = ctx.responses(nominal)
    system = RdSystem(chip, h, cfg.N, cfg.M)
    return Context(cfg, nominal, h, system, FourierDictionary(cfg.N))


@lru_cache(maxsize=8)
def _cached_context(cfg_json: str) -> Context:
    return build_context(ExperimentConfig.from_dict(json.loads(cfg_json)))


def _context(cfg: ExperimentConfig) -> Context:
    return _cached_context(json.dumps(cfg.to_dict(), sort_keys=True))


def reconstruct(system_or_operator, y, dictionary: FourierDictionary, cfg: BpdnConfig):
    """BPDN recovery; returns ``(x_hat, result)`` with ``x_hat = Re(Psi alpha)``."""
    if isinstance(system_or_operator, RdSystem):
        A = measurement_operator(system_or_operator, dictionary)
    else:
        A = system_or_operator
    res = solve_bpdn(A, y, cfg)
    return dictionary.synthesize(res.x).real, res


def matrix_operator(phi: np.ndarray, dictionary: FourierDictionary, drop_tol: float = 1e-15) -> LinearOperator:
    """``Phi Psi`` for an explicit matrix; entries below ``drop_tol * max|Phi|`` are dropped."""
    thr = drop_tol * np.max(np.abs(phi))
    S = sp.csr_matrix(np.where(np.abs(phi) > thr, phi, 0.0))
    St = S.T.tocsr()
    return LinearOperator(
        phi.shape,
        matvec=lambda a: S @ dictionary.synthesize(np.ravel(a)),
        rmatvec=lambda u: dictionary.analyze(St @ np.ravel(u)),
        dtype=complex,
    )


# ---------------------------------------------------------------- records


@dataclass
class TrialRecord:
    trial: int
    components: dict
    rmse_uncalibrated: float
    rmse_calibrated: float | None = None
    snr_nominal_model: float | None = None
    snr_oracle_model: float | None = None
    snr_calibrated: float | None = None
    branch: str | None = None
    m_q: int | None = None
    error: str | None = None
    times: dict = field(default_factory=dict)

    def row(self) -> dict:
        out = {k: getattr(self, k) for k in _TRIAL_SCALARS}
        for k in COMPONENT_FIELDS:
            out[k] = self.components.get(k) if self.components else None
        return out

    def timing_row(self) -> dict:
        return {"trial": self.trial, **{"time_" + k: self.times.get(k) for k in TIME_FIELDS}}


@dataclass
class BenchmarkRecord:
    trial: int
    rmse_uncalibrated: float
    rmse_mbc: float
    rmse_dftti: float
    snr_calibrated: float | None
    snr_nominal_model: float | None
    snr_oracle_model: float | None
    snr_dftti: float | None
    time_mbc: float
    time_dftti: float
    samples_mbc: int
    samples_dftti: int
    probes_dftti: int

    def row(self) -> dict:
        return {k: v for k, v in asdict(self).items() if not k.startswith("time_")}

    def timing_row(self) -> dict:
        return {"trial": self.trial, "time_mbc": self.time_mbc, "time_dftti": self.time_dftti}


COMPONENT_FIELDS = ("c1", "c3", "l2", "l4", "rs", "rl")
TIME_FIELDS = ("perturb", "sample", "nominal", "oracle", "calibrate", "calibrated")
_TRIAL_SCALARS = (
    "trial",
    "rmse_uncalibrated",
    "rmse_calibrated",
    "snr_nominal_model",
    "snr_oracle_model",
    "snr_calibrated",
    "branch",
    "m_q",
    "error",
)
# Wall-clock values live in a separate timings file so result files are reproducible.
TRIAL_COLUMNS = _TRIAL_SCALARS + COMPONENT_FIELDS
BENCHMARK_COLUMNS = tuple(f.name for f in fields(BenchmarkRecord) if not f.name.startswith("time_"))
SWEEP_COLUMNS = (
    "m_q",
    "k",
    "trials",
    "branch",
    "mean_rmse_uncalibrated",
    "mean_rmse_calibrated",
    "median_rmse_calibrated",
    "mean_time_s",
)


# ---------------------------------------------------------------- trials


def _draw(ctx: Context, trial: int):
    cfg = ctx.cfg
    rng = _trial_rng(cfg, trial, 0)
    if ctx.nominal is None:
        raise ConfigError("accumulate-and-dump filter has no component model to perturb")
    comps = perturb_components(ctx.nominal, cfg.tolerance, cfg.perturb, rng)
    h_hat, h_true = ctx.responses(comps)
    return comps, h_hat, h_true


def _one_trial(cfg: ExperimentConfig, trial: int, calibrate: bool) -> TrialRecord:
    ctx = _context(cfg)
    times = {}
    t = time.perf_counter()
    comps, h_hat, h_true = _draw(ctx, trial)
    times["perturb"] = time.perf_counter() - t
    rec = TrialRecord(trial, comps.to_dict(), rmse(ctx.h, h_hat), times=times)
    try:
        actual = ctx.system.with_h(h_true)
        want = set(cfg.reconstruct)
        x = y_hat = None
        if want & {"nominal", "oracle"} or (calibrate and "calibrated" in want):
            t = time.perf_counter()
            sig = generate_multitone(
                cfg.k_input, _trial_rng(cfg, trial, 1), cfg.grid_rate_hz, cfg.duration_s,
                n_samples=cfg.N, random_phase=cfg.random_phase,
            )
            x = sig.samples
            y_hat = apply_phi(actual, x)
            times["sample"] = time.perf_counter() - t
        if "nominal" in want:
            t = time.perf_counter()
            rec.snr_nominal_model = snr(x, reconstruct(ctx.system, y_hat, ctx.dictionary, cfg.solver)[0])
            times["nominal"] = time.perf_counter() - t
        if "oracle" in want:
            t = time.perf_counter()
            rec.snr_oracle_model = snr(x, reconstruct(actual, y_hat, ctx.dictionary, cfg.solver)[0])
            times["oracle"] = time.perf_counter() - t
        if calibrate:
            t = time.perf_counter()
            result = _calibrate(ctx, h_true, cfg.m_q, cfg.k_calibration, _trial_rng(cfg, trial, 2))
            times["calibrate"] = time.perf_counter() - t
            rec.rmse_calibrated = rmse(result.h_ring, h_hat)
            rec.branch = result.branch
            rec.m_q = cfg.m_q
            if "calibrated" in want:
                t = time.perf_counter()
                cal_sys = rebuild_system(ctx.system, result.h_ring)
                rec.snr_calibrated = snr(x, reconstruct(cal_sys, y_hat, ctx.dictionary, cfg.solver)[0])
                times["calibrated"] = time.perf_counter() - t
    except Exception as exc:  # failed trials are recorded, not dropped
        logger.exception("trial %d failed", trial)
        rec.error = f"{type(exc).__name__}: {exc}"
    return rec


def _calibrate(ctx: Context, h_true: ImpulseResponse, m_q: int, k: int, rng):
    cfg = ctx.cfg
    if m_q <= truncated_rows(cfg.L, cfg.R):
        raise ConfigError(f"m_q={m_q} leaves no fully supported calibration rows")
    nominal_q = calibration_system(ctx.system, m_q)
    actual_q = calibration_system(ctx.system, m_q, h_true)
    sig = generate_multitone(k, rng, cfg.grid_rate_hz, n_samples=nominal_q.N, random_phase=cfg.random_phase)
    y_meas = apply_phi(actual_q, sig.samples)
    return mbc_calibrate(CalibrationInput(sig.samples, nominal_q, y_meas))


def _worker(args):
    cfg_dict, kind, trial = args
    cfg = ExperimentConfig.from_dict(cfg_dict)
    if kind == "perturbation":
        return _one_trial(cfg, trial, calibrate=False)
    if kind == "calibration":
        return _one_trial(cfg, trial, calibrate=True)
    if kind == "benchmark":
        return _benchmark_trial(cfg, trial)
    raise ValueError(kind)


def pool_size() -> int:
    env = os.environ.get("RD_CALIB_THREADS")
    cpus = os.cpu_count() or 1
    if env:
        try:
            return max(1, min(int(env), cpus))
        except ValueError:
            logger.warning("ignoring non-integer RD_CALIB_THREADS=%r", env)
    return 1


def _run(cfg: ExperimentConfig, kind: str, workers: int | None = None) -> list:
    jobs = [(cfg.to_dict(), kind, t) for t in range(cfg.trials)]
    workers = pool_size() if workers is None else workers
    if workers <= 1:
        out = [_worker(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            out = list(ex.map(_worker, jobs))
    return sorted(out, key=lambda r: r.trial)


def run_perturbation_study(cfg: ExperimentConfig, workers: int | None = None) -> list[TrialRecord]:
    """Per trial: perturb, sample with the actual filter, recover with the nominal and oracle models."""
    cfg = replace(cfg, reconstruct=tuple(r for r in cfg.reconstruct if r != "calibrated"))
    return _run(cfg, "perturbation", workers)


def run_calibration_study(cfg: ExperimentConfig, workers: int | None = None) -> list[TrialRecord]:
    """The perturbation study plus calibration and recovery with the calibrated model."""
    return _run(cfg, "calibration", workers)


def run_mq_sweep(cfg: ExperimentConfig, mq_list, k_list) -> list[dict]:
    """Mean calibrated RMSE and wall time per (M_q, K) cell.

    Every cell reuses the same ``cfg.trials`` component draws; calibration
    signals depend on (trial, K) only.
    """
    ctx = _context(cfg)
    draws = [_draw(ctx, t) for t in range(cfg.trials)]
    rows = []
    for k in k_list:
        for m_q in mq_list:
            cal, unc, secs, branches = [], [], [], set()
            for t, (_, h_hat, h_true) in enumerate(draws):
                rng = _trial_rng(cfg, t, 100 + int(k))
                t0 = time.perf_counter()
                res = _calibrate(ctx, h_true, int(m_q), int(k), rng)
                secs.append(time.perf_counter() - t0)
                cal.append(rmse(res.h_ring, h_hat))
                unc.append(rmse(ctx.h, h_hat))
                branches.add(res.branch)
            rows.append(
                {
                    "m_q": int(m_q),
                    "k": int(k),
                    "trials": cfg.trials,
                    "branch": "/".join(sorted(branches)),
                    "mean_rmse_uncalibrated": float(np.mean(unc)),
                    "mean_rmse_calibrated": float(np.mean(cal)),
                    "median_rmse_calibrated": float(np.median(cal)),
                    "mean_time_s": float(np.mean(secs)),
                }
            )
    return rows


def _benchmark_trial(cfg: ExperimentConfig, trial: int) -> BenchmarkRecord:
    ctx = _context(cfg)
    _, h_hat, h_true = _draw(ctx, trial)
    actual = ctx.system.with_h(h_true)
    sig = generate_multitone(
        cfg.k_input, _trial_rng(cfg, trial, 1), cfg.grid_rate_hz, n_samples=cfg.N,
        random_phase=cfg.random_phase,
    )
    x = sig.samples
    y_hat = apply_phi(actual, x)

    t = time.perf_counter()
    res = _calibrate(ctx, h_true, cfg.m_q, cfg.k_calibration, _trial_rng(cfg, trial, 2))
    cal_sys = rebuild_system(ctx.system, res.h_ring)
    time_mbc = time.perf_counter() - t

    dftti = dftti_calibrate(system_sampler(actual), cfg.N, cfg.M)
    h_d = impulse_from_phi(dftti.phi, ctx.system.chipping, cfg.R, cfg.L)

    want = set(cfg.reconstruct)
    solver = cfg.solver
    snr_c = snr(x, reconstruct(cal_sys, y_hat, ctx.dictionary, solver)[0]) if "calibrated" in want else None
    snr_n = snr(x, reconstruct(ctx.system, y_hat, ctx.dictionary, solver)[0]) if "nominal" in want else None
    snr_o = snr(x, reconstruct(actual, y_hat, ctx.dictionary, solver)[0]) if "oracle" in want else None
    snr_d = None
    if want:
        snr_d = snr(x, reconstruct(matrix_operator(dftti.phi, ctx.dictionary), y_hat, ctx.dictionary, solver)[0])
    return BenchmarkRecord(
        trial=trial,
        rmse_uncalibrated=rmse(ctx.h, h_hat),
        rmse_mbc=rmse(res.h_ring, h_hat),
        rmse_dftti=rmse(h_d, h_hat),
        snr_calibrated=snr_c,
        snr_nominal_model=snr_n,
        snr_oracle_model=snr_o,
        snr_dftti=snr_d,
        time_mbc=time_mbc,
        time_dftti=dftti.seconds,
        samples_mbc=cfg.m_q,
        samples_dftti=dftti.samples,
        probes_dftti=dftti.probes,
    )


def run_benchmark(cfg: ExperimentConfig, workers: int | None = None) -> list[BenchmarkRecord]:
    """MBC against DFT probing; records come back sorted by uncalibrated RMSE."""
    recs = _run(cfg, "benchmark", workers)
    return sorted(recs, key=lambda r: r.rmse_uncalibrated)


# ---------------------------------------------------------------- summaries & files


def _stats(values) -> dict | None:
    v = np.array([x for x in values if x is not None and np.isfinite(x)], dtype=float)
    if v.size == 0:
        return None
    return {"mean": float(v.mean()), "median": float(np.median(v)), "min": float(v.min()), "max": float(v.max())}


def summarize(records) -> dict:
    if not records:
        return {"trials": 0}
    out = {"trials": len(records)}
    if isinstance(records[0], TrialRecord):
        keys = ("rmse_uncalibrated", "rmse_calibrated", "snr_nominal_model", "snr_oracle_model", "snr_calibrated")
        out["failed"] = sum(r.error is not None for r in records)
        for k in keys:
            out[k] = _stats(getattr(r, k) for r in records)
        unc, cal = out["rmse_uncalibrated"], out["rmse_calibrated"]
        if unc and cal and cal["mean"] > 0:
            out["rmse_reduction_factor"] = unc["mean"] / cal["mean"]
            out["degraded_trials"] = sum(
                r.rmse_calibrated is not None and r.rmse_calibrated > r.rmse_uncalibrated for r in records
            )
        out["branches"] = sorted({r.branch for r in records if r.branch})
    else:
        for k in [f.name for f in fields(BenchmarkRecord)][1:]:
            out[k] = _stats(getattr(r, k) for r in records)
        tm, td = out["time_mbc"], out["time_dftti"]
        if tm and td and tm["mean"] > 0:
            out["time_ratio_dftti_over_mbc"] = td["mean"] / tm["mean"]
    return out


def write_records_csv(records, path, schema: str | None = None) -> Path:
    path = Path(path)
    if records and isinstance(records[0], BenchmarkRecord):
        schema, columns = BENCHMARK_SCHEMA, BENCHMARK_COLUMNS
        rows = [r.row() for r in records]
    elif records and isinstance(records[0], dict):
        schema, columns = SWEEP_SCHEMA, SWEEP_COLUMNS
        rows = records
    else:
        schema = schema or TRIAL_SCHEMA
        columns = {TRIAL_SCHEMA: TRIAL_COLUMNS, BENCHMARK_SCHEMA: BENCHMARK_COLUMNS, SWEEP_SCHEMA: SWEEP_COLUMNS}[schema]
        rows = [r.row() for r in records]
    with path.open("w", newline="", encoding="utf-8") as fh:
        fh.write(f"# schema: {schema}\n")
        w = csv.DictWriter(fh, fieldnames=list(columns))
        w.writeheader()
        for row in rows:
            w.writerow({k: ("" if row.get(k) is None else _fmt(row.get(k))) for k in columns})
    return path


def write_timings_csv(records, path) -> Path:
    """Per-trial wall-clock seconds; not covered by the determinism guarantee."""
    path = Path(path)
    rows = [r.timing_row() for r in records]
    columns = list(rows[0]) if rows else ["trial"]
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=columns)
        w.writeheader()
        for row in rows:
            w.writerow({k: ("" if row.get(k) is None else _fmt(row.get(k))) for k in columns})
    return path


def _fmt(v):
    return repr(v) if isinstance(v, float) else v


class SchemaError(ValueError):
    pass


def read_records_csv(path) -> tuple[str, list[dict]]:
    """Return ``(schema, rows)``; values are parsed to float where possible."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        first = fh.readline()
        if not first.startswith("# schema:"):
            raise SchemaError(f"{path}: missing schema line")
        schema = first.split(":", 1)[1].strip()
        expected = {TRIAL_SCHEMA: TRIAL_COLUMNS, BENCHMARK_SCHEMA: BENCHMARK_COLUMNS, SWEEP_SCHEMA: SWEEP_COLUMNS}.get(schema)
        if expected is None:
            raise SchemaError(f"{path}: unknown schema {schema!r}")
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            return schema, []
        if tuple(reader.fieldnames) != tuple(expected):
            raise SchemaError(f"{path}: columns {reader.fieldnames} do not match schema {schema}")
        rows = []
        for raw in reader:
            rows.append({k: _parse(v) for k, v in raw.items()})
    return schema, rows


def _parse(v: str):
    if v == "":
        return None
    try:
        return float(v)
    except ValueError:
        return v
