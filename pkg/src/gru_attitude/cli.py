"""Command-line entry point: ``gru-attitude run`` and ``gru-attitude verify``."""

import argparse
import json
import logging
import sys
import time
import traceback
from dataclasses import asdict
from datetime import datetime, timezone
from pathlib import Path

from . import __version__, analysis, artifacts, seeding
from .compensator import run_campaign
from .config import load_config, with_overrides, write_effective
from .errors import ConfigError, GruAttitudeError, TrainingDiverged, VerificationFailed

log = logging.getLogger("gru_attitude")

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2


def _error_record(outdir, exc, stage):
    record = {"status": "error", "stage": stage, "type": type(exc).__name__, "message": str(exc)}
    for attr in ("line", "key", "field", "constraint"):
        if getattr(exc, attr, None) is not None:
            record[attr] = getattr(exc, attr)
    if isinstance(exc, VerificationFailed):
        record["mismatches"] = exc.mismatches
    if isinstance(exc, TrainingDiverged):
        record["completed_iterations"] = len(exc.records)
    text = json.dumps(record, indent=2, sort_keys=True)
    print(text, file=sys.stderr)
    if outdir is not None:
        try:
            Path(outdir).mkdir(parents=True, exist_ok=True)
            (Path(outdir) / "error.json").write_text(text + "\n", encoding="utf-8")
        except OSError:
            pass


def _write_records(outdir, records):
    for rec in records:
        artifacts.write_iteration(outdir, rec)
    report = analysis.campaign_report(records)
    artifacts.write_report(outdir, report)
    return report


def cmd_run(args) -> int:
    outdir = Path(args.out)
    try:
        cfg = load_config(args.config) if args.config else None
        if cfg is None:
            from .config import load_config_text
            cfg = load_config_text("")
        cfg = with_overrides(cfg, seed=args.seed, iterations=args.iterations, quick=args.quick)
    except ConfigError as exc:
        _error_record(outdir, exc, "config")
        return EXIT_CONFIG
    try:
        outdir.mkdir(parents=True, exist_ok=True)
        stale = outdir / "error.json"
        if stale.exists():
            stale.unlink()
        write_effective(cfg, outdir)
        started = time.perf_counter()
        try:
            records = run_campaign(cfg.scenario, cfg.iteration, cfg.train, seed=cfg.seed)
        except TrainingDiverged as exc:
            _write_records(outdir, exc.records)
            raise
        report = _write_records(outdir, records)
        stable = {
            "package_version": __version__,
            "seed": cfg.seed,
            "seeds": {
                "disturbance": cfg.scenario.disturbance.rng_seed,
                **{f"train_iter_{k + 1}": seeding.derive_seed(cfg.seed, f"train/{k}")
                   for k in range(len(records))},
            },
            "config": cfg.raw,
            "iterations": len(records),
            "files": sorted(p.name for p in outdir.iterdir() if p.name != "manifest.json"),
            "flags": report.flags,
        }
        volatile = {
            "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
            "wall_time_s": round(time.perf_counter() - started, 3),
            "training_time_s": [round(r.training.wall_time, 3) for r in records],
        }
        artifacts.write_manifest(outdir, stable, volatile)
    except GruAttitudeError as exc:
        _error_record(outdir, exc, "run")
        return EXIT_FAILED
    except Exception as exc:  # surface anything unexpected as a record, too
        log.debug("%s", traceback.format_exc())
        _error_record(outdir, exc, "run")
        return EXIT_FAILED
    for it in report.iterations:
        log.info("iteration %d: mean attitude RMSE %.6g rad, max PSD peak %.6g",
                 it.iteration, it.mean_attitude_rmse, it.max_psd_peak)
    log.info("flags: %s", report.flags)
    return EXIT_OK


def cmd_verify(args) -> int:
    try:
        report = artifacts.verify(args.out)
    except (GruAttitudeError, OSError, ValueError) as exc:
        _error_record(None, exc, "verify")
        return EXIT_FAILED
    print(f"verify: OK ({len(report.iterations)} iteration(s), flags {report.flags})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gru-attitude", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a campaign and write the output tree")
    run.add_argument("--config", help="YAML config (defaults if omitted)")
    run.add_argument("--out", required=True)
    run.add_argument("--seed", type=int)
    run.add_argument("--iterations", type=int)
    run.add_argument("--quick", action="store_true", help="one iteration, one training restart")
    run.set_defaults(func=cmd_run)
    ver = sub.add_parser("verify", help="recompute the report from telemetry and diff it")
    ver.add_argument("--out", required=True)
    ver.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
