"""``rdcal`` command line: run studies, emit plot data, print a system report."""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .calibrate import CalibrationInput, calibration_system, mbc_calibrate
from .discretize import bilinear_transform
from .experiments import (
    ConfigError,
    ExperimentConfig,
    SchemaError,
    build_context,
    read_records_csv,
    run_benchmark,
    run_calibration_study,
    run_mq_sweep,
    run_perturbation_study,
    summarize,
    write_records_csv,
    write_timings_csv,
)
from .filters import lc_transfer_function, perturb_components
from .rd import apply_phi, generate_multitone

logger = logging.getLogger("rdcal")

STUDIES = ("perturbation", "calibration", "mq-sweep", "benchmark")
FIGURES = ("impulse-responses", "snr-histogram", "rmse-histogram", "mq-sweep", "benchmark")
EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3
DEFAULT_MQ = (126, 189, 1050, 8400)
DEFAULT_K = (10,)


# ---------------------------------------------------------------- config & manifest


def config_hash(data: dict) -> str:
    """SHA-256 of the canonical (key-sorted) JSON form."""
    text = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _resolve_path(name: str) -> Path:
    p = Path(name)
    if p.exists():
        return p
    bundled = resources.files("rdcal") / "configs" / p.name
    if bundled.is_file():
        return Path(str(bundled))
    raise ConfigError(f"config file not found: {name}")


def load_config(path: str) -> dict:
    """Raw config dict.  A run manifest is accepted and replays its stored config."""
    p = _resolve_path(path)
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: malformed JSON ({exc})") from None
    except OSError as exc:
        raise ConfigError(f"{p}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{p}: top level must be an object")
    if "config_hash" in data and "config" in data:
        return dict(data["config"])
    return data


def resolve(raw: dict, study=None, seed=None, trials=None) -> tuple[str, ExperimentConfig, dict]:
    study = study or raw.get("study", "calibration")
    if study not in STUDIES:
        raise ConfigError(f"unknown study {study!r}; expected one of {STUDIES}")
    cfg = ExperimentConfig.from_dict(raw).with_overrides(seed=seed, trials=trials)
    extra = {}
    if study == "mq-sweep":
        extra["mq_list"] = [int(v) for v in raw.get("mq_list", DEFAULT_MQ)]
        extra["k_list"] = [int(v) for v in raw.get("k_list", DEFAULT_K)]
    return study, cfg, extra


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def write_manifest(out: Path, resolved: dict, started: str, outputs: list, status: str) -> Path:
    manifest = {
        "config_hash": config_hash(resolved),
        "tool_version": __version__,
        "master_seed": resolved.get("seed"),
        "started_utc": started,
        "finished_utc": _now(),
        "status": status,
        "outputs": sorted(str(Path(o).name) for o in outputs),
        "config": resolved,
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8")
    return path


# ---------------------------------------------------------------- run


def cmd_run(args) -> int:
    try:
        raw = load_config(args.config)
        study, cfg, extra = resolve(raw, args.study, args.seed, args.trials)
    except (ConfigError, ValueError, TypeError) as exc:
        print(f"rdcal: invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"rdcal: cannot create {out}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    resolved = {"study": study, **cfg.to_dict(), **extra}
    started = _now()
    outputs = []
    (out / "config.json").write_text(json.dumps(resolved, indent=2, sort_keys=True), encoding="utf-8")
    outputs.append(out / "config.json")
    try:
        if study == "mq-sweep":
            records = run_mq_sweep(cfg, extra["mq_list"], extra["k_list"])
            outputs.append(write_records_csv(records, out / "mq_sweep.csv"))
            summary = {"cells": len(records)}
        else:
            runner = {
                "perturbation": run_perturbation_study,
                "calibration": run_calibration_study,
                "benchmark": run_benchmark,
            }[study]
            records = runner(cfg)
            name = "benchmark.csv" if study == "benchmark" else "trials.csv"
            outputs.append(write_records_csv(records, out / name))
            outputs.append(write_timings_csv(records, out / "timings.csv"))
            summary = summarize(records)
        summary_path = out / "summary.json"
        summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True), encoding="utf-8")
        outputs.append(summary_path)
    except Exception as exc:
        logger.exception("study failed")
        print(f"rdcal: runtime failure: {exc}", file=sys.stderr)
        write_manifest(out, resolved, started, outputs, "failed")
        return EXIT_RUNTIME
    write_manifest(out, resolved, started, outputs, "ok")
    print(f"wrote {len(outputs) + 1} files to {out}")
    return EXIT_OK


# ---------------------------------------------------------------- plot data


def _write_table(path: Path, header, rows) -> Path:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow(["" if v is None else v for v in r])
    return path


def _column(rows, key):
    return np.array([r[key] for r in rows if r.get(key) is not None], dtype=float)


def _snr_histogram(rows, path):
    series = ("snr_nominal_model", "snr_oracle_model", "snr_calibrated")
    edges = np.arange(0.0, 135.0, 5.0)
    counts = [np.histogram(np.clip(_column(rows, k), edges[0], edges[-1]), bins=edges)[0] for k in series]
    table = [(edges[i], edges[i + 1], *(int(c[i]) for c in counts)) for i in range(edges.size - 1)]
    return _write_table(path, ("bin_low_db", "bin_high_db", *series), table)


def _rmse_histogram(rows, path):
    series = ("rmse_uncalibrated", "rmse_calibrated")
    vals = [_column(rows, k) for k in series]
    pos = np.concatenate([v[v > 0] for v in vals]) if any(v.size for v in vals) else np.array([])
    if pos.size == 0:
        return _write_table(path, ("bin_low", "bin_high", *series), [])
    lo, hi = np.floor(np.log10(pos.min())), np.ceil(np.log10(pos.max()))
    edges = np.logspace(lo, max(hi, lo + 1), int(4 * (max(hi, lo + 1) - lo)) + 1)
    counts = [np.histogram(v, bins=edges)[0] for v in vals]
    table = [(edges[i], edges[i + 1], *(int(c[i]) for c in counts)) for i in range(edges.size - 1)]
    return _write_table(path, ("bin_low", "bin_high", *series), table)


def _benchmark_series(rows, path):
    keys = (
        "rmse_uncalibrated",
        "rmse_mbc",
        "rmse_dftti",
        "snr_calibrated",
        "snr_nominal_model",
        "snr_oracle_model",
        "snr_dftti",
    )
    rows = sorted(rows, key=lambda r: r["rmse_uncalibrated"])
    table = [(i, *(r.get(k) for k in keys)) for i, r in enumerate(rows)]
    return _write_table(path, ("rank", *keys), table)


def _mq_series(rows, path):
    rows = sorted(rows, key=lambda r: (r["k"], r["m_q"]))
    table = [(int(r["m_q"]), int(r["k"]), r["mean_rmse_calibrated"], r["mean_time_s"]) for r in rows]
    return _write_table(path, ("m_q", "k", "mean_rmse_calibrated", "mean_time_s"), table)


def _impulse_responses(cfg: ExperimentConfig, path: Path):
    ctx = build_context(cfg)
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(1, 0, 0)))
    if ctx.nominal is None:
        h = ctx.h.samples
        return _write_table(path, ("index", "nominal"), [(i, v) for i, v in enumerate(h)])
    comps = perturb_components(ctx.nominal, cfg.tolerance, cfg.perturb, rng)
    h_hat, h_true = ctx.responses(comps)
    nom_q = calibration_system(ctx.system, cfg.m_q)
    act_q = calibration_system(ctx.system, cfg.m_q, h_true)
    sig = generate_multitone(cfg.k_calibration, rng, cfg.grid_rate_hz, n_samples=nom_q.N)
    res = mbc_calibrate(CalibrationInput(sig.samples, nom_q, apply_phi(act_q, sig.samples)))
    table = zip(range(cfg.L), ctx.h.samples, h_hat.samples, res.h_ring.samples)
    return _write_table(path, ("index", "nominal", "perturbed", "calibrated"), table)


def cmd_plot(args) -> int:
    if args.figure not in FIGURES:
        print(f"rdcal: unknown figure {args.figure!r}; expected one of {FIGURES}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    target = out / f"{args.figure}.csv"
    if args.figure == "impulse-responses":
        if not args.config:
            print("rdcal: impulse-responses needs --config", file=sys.stderr)
            return EXIT_CONFIG
        try:
            _, cfg, _ = resolve(load_config(args.config), seed=args.seed)
        except (ConfigError, ValueError, TypeError) as exc:
            print(f"rdcal: invalid config: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        _impulse_responses(cfg, target)
        print(f"wrote {target}")
        return EXIT_OK
    if not args.results:
        print("rdcal: --results is required for this figure", file=sys.stderr)
        return EXIT_CONFIG
    src = Path(args.results)
    if not src.exists():
        print(f"rdcal: results file not found: {src}", file=sys.stderr)
        return EXIT_CONFIG
    if src.stat().st_size == 0:
        logger.warning("results file %s is empty; writing empty plot data", src)
        print(f"rdcal: warning: {src} is empty", file=sys.stderr)
        target.write_text("", encoding="utf-8")
        return EXIT_OK
    try:
        schema, rows = read_records_csv(src)
    except SchemaError as exc:
        print(f"rdcal: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if not rows:
        print(f"rdcal: warning: {src} holds no records", file=sys.stderr)
    writers = {
        "snr-histogram": ("rdcal-trials", _snr_histogram),
        "rmse-histogram": ("rdcal-trials", _rmse_histogram),
        "benchmark": ("rdcal-benchmark", _benchmark_series),
        "mq-sweep": ("rdcal-mq-sweep", _mq_series),
    }
    want, fn = writers[args.figure]
    if args.figure == "rmse-histogram" and schema.startswith("rdcal-benchmark"):
        rows = [{"rmse_uncalibrated": r["rmse_uncalibrated"], "rmse_calibrated": r["rmse_mbc"]} for r in rows]
    elif not schema.startswith(want):
        print(f"rdcal: figure {args.figure} needs {want} results, got {schema}", file=sys.stderr)
        return EXIT_CONFIG
    fn(rows, target)
    print(f"wrote {target}")
    return EXIT_OK


# ---------------------------------------------------------------- show-system


def system_report(cfg: ExperimentConfig, head: int = 8) -> str:
    ctx = build_context(cfg)
    lines = [
        f"filter        {cfg.filter}",
        f"N             {cfg.N}",
        f"M             {cfg.M}",
        f"R             {cfg.R}",
        f"L             {cfg.L}",
        f"f_grid [Hz]   {cfg.grid_rate_hz:g}",
        f"f_s [Hz]      {cfg.sample_rate_hz:g}",
    ]
    if ctx.nominal is not None:
        tf = lc_transfer_function(ctx.nominal, cfg.transfer_form)
        dz = bilinear_transform(tf, ctx.discretization_rate)
        fmt = lambda v: " ".join(f"{c:.6e}" for c in v)  # noqa: E731
        lines += [
            f"f_disc [Hz]   {ctx.discretization_rate:g}",
            f"components    {json.dumps(ctx.nominal.to_dict())}",
            f"analog num    {fmt(tf.numerator)}",
            f"analog den    {fmt(tf.denominator)}",
            f"digital num   {fmt(dz.numerator)}",
            f"digital den   {fmt(dz.denominator)}",
        ]
    h = ctx.h.samples
    lines.append(f"h[0:{min(head, h.size)}]       " + " ".join(f"{v:.6e}" for v in h[:head]))
    return "\n".join(lines)


def cmd_show_system(args) -> int:
    try:
        _, cfg, _ = resolve(load_config(args.config), seed=args.seed)
        print(system_report(cfg, args.head))
    except (ConfigError, ValueError, TypeError) as exc:
        print(f"rdcal: invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rdcal", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a Monte-Carlo study")
    run.add_argument("--config", required=True, help="JSON config, bundled config name, or run manifest")
    run.add_argument("--out", default="results")
    run.add_argument("--study", choices=STUDIES)
    run.add_argument("--seed", type=int)
    run.add_argument("--trials", type=int)
    run.set_defaults(func=cmd_run)

    plot = sub.add_parser("plot", help="write plot-data tables")
    plot.add_argument("--figure", required=True, help=f"one of {', '.join(FIGURES)}")
    plot.add_argument("--results", help="CSV written by 'run'")
    plot.add_argument("--config", help="needed for impulse-responses")
    plot.add_argument("--seed", type=int)
    plot.add_argument("--out", default="plots")
    plot.set_defaults(func=cmd_plot)

    show = sub.add_parser("show-system", help="print the resolved acquisition model")
    show.add_argument("--config", required=True)
    show.add_argument("--seed", type=int)
    show.add_argument("--head", type=int, default=8)
    show.set_defaults(func=cmd_show_system)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
