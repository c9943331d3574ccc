"""Run-directory layout: CSV bundles, model files, manifest, and re-verification.

All numbers are written with 17 significant digits so a CSV read back gives
the exact doubles that were written. Iteration numbers in file names are
1-based. Everything except the manifest's ``volatile`` line is a pure function
of (config, seed).
"""

import csv
import json
import math
from pathlib import Path

import numpy as np

from . import analysis, gru
from .analysis import CHANNELS
from .errors import VerificationFailed

FMT = "%.17g"
REPORT_COLUMNS = ("iteration", "channel", "rmse", "mean", "median", "q1", "q3", "iqr",
                  "min", "max", "psd_peak", "psd_peak_freq")
PSD_UNITS = ("rad^2/Hz",) * 3 + ("(rad/s)^2/Hz",) * 3
VERIFY_RTOL = 1e-9
XYZ = ("x", "y", "z")


def _num(x) -> str:
    return FMT % x


def _vec(prefix):
    return [f"{prefix}_{a}" for a in XYZ]


def telemetry_columns(num_models: int):
    cols = ["t", *CHANNELS]
    cols += _vec("u_pid") + _vec("correction") + _vec("u_cmd")
    for i in range(num_models):
        cols += _vec(f"delta{i + 1}")
    cols += _vec("tau") + _vec("tau_thruster") + _vec("m") + _vec("B")
    cols += ["thruster", "gimbal"]
    cols += _vec("d_true") + _vec("d_est") + _vec("d_virtual")
    return cols


def telemetry_table(rec) -> np.ndarray:
    parts = [rec.times[:, None], rec.euler, rec.omega, rec.u_pid, rec.correction_total, rec.u_cmd]
    parts += list(rec.corrections)
    parts += [rec.tau, rec.tau_thruster, rec.dipole, rec.field,
              rec.thruster[:, None].astype(float), rec.gimbal[:, None].astype(float),
              rec.d_true, rec.d_est.samples, rec.d_virtual.samples]
    return np.hstack(parts)


def _write_matrix(path, header, table):
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in table:
            fh.write(",".join(_num(v) for v in row) + "\n")


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_num(v) if isinstance(v, float) else v for v in row])


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def read_telemetry(path):
    """Return (times, channels (n, 6)) from an iteration telemetry CSV."""
    header, rows = read_csv(path)
    data = np.array(rows, dtype=float)
    idx = [header.index(c) for c in CHANNELS]
    return data[:, header.index("t")], data[:, idx]


def write_iteration(outdir: Path, rec, train_log=None):
    k = rec.k + 1
    m = rec.corrections.shape[0]
    _write_matrix(outdir / f"iter_{k}_telemetry.csv", telemetry_columns(m), telemetry_table(rec))
    rows = []
    truth = type(rec.d_est)(rec.d_true, rec.d_est.dt, rec.d_est.t0, "ground_truth")
    for series in (truth, rec.d_est, rec.d_virtual):
        rows += [[float(t), *map(float, s), series.kind] for t, s in zip(series.times, series.samples)]
    _write_rows(outdir / f"iter_{k}_disturbance.csv", ["t", "dx", "dy", "dz", "kind"], rows)
    if rec.model is not None:
        gru.save_model(rec.model, outdir / f"iter_{k}_model.bin")
    log = train_log if train_log is not None else rec.training
    if log is not None:
        rows = [[r.restart, e + 1, float(loss)] for r in log.restarts for e, loss in enumerate(r.epoch_losses)]
        _write_rows(outdir / f"iter_{k}_training.csv", ["restart", "epoch", "loss"], rows)


def write_report(outdir: Path, report: analysis.CampaignReport):
    _write_rows(outdir / "report.csv", REPORT_COLUMNS,
                [[row[c] for c in REPORT_COLUMNS] for row in report.rows()])
    for it in report.iterations:
        header = ["frequency [Hz]"] + [f"{c} [{u}]" for c, u in zip(CHANNELS, PSD_UNITS)]
        _write_matrix(outdir / f"psd_iter_{it.iteration}.csv", header,
                      np.column_stack([it.spectrum.frequencies, it.spectrum.psd]))
    rows = []
    for it in report.iterations:
        rows.append(["mean_attitude_rmse", it.iteration, it.mean_attitude_rmse])
        rows.append(["max_psd_peak", it.iteration, it.max_psd_peak])
    for name, flag in report.flags.items():
        rows.append([name, "", str(bool(flag)).lower()])
    _write_rows(outdir / "summary.csv", ["metric", "iteration", "value"], rows)


def manifest_text(stable: dict, volatile: dict) -> str:
    """JSON with every volatile field on one dedicated line."""
    body = json.dumps(stable, indent=2, sort_keys=True)
    line = json.dumps(volatile, sort_keys=True, separators=(",", ":"))
    return body[:-2] + f',\n  "volatile": {line}\n}}\n'


def write_manifest(outdir: Path, stable: dict, volatile: dict):
    (outdir / "manifest.json").write_text(manifest_text(stable, volatile), encoding="utf-8")


# -- verification ------------------------------------------------------------------

def _close(a: float, b: float) -> bool:
    if math.isnan(a) or math.isnan(b):
        return math.isnan(a) and math.isnan(b)
    return abs(a - b) <= VERIFY_RTOL * max(abs(a), abs(b), 1e-300)


def recompute_report(outdir) -> analysis.CampaignReport:
    outdir = Path(outdir)
    paths = sorted(outdir.glob("iter_*_telemetry.csv"), key=lambda p: int(p.name.split("_")[1]))
    if not paths:
        raise VerificationFailed([f"no iteration telemetry in {outdir}"])
    its = []
    for i, path in enumerate(paths):
        times, channels = read_telemetry(path)
        its.append(analysis.iteration_report(i + 1, channels, float(times[1] - times[0])))
    return analysis.summarize(its)


def verify(outdir):
    """Recompute metrics from telemetry and diff them against the stored report.

    Returns the recomputed report; raises VerificationFailed on any mismatch.
    """
    outdir = Path(outdir)
    fresh = recompute_report(outdir)
    header, rows = read_csv(outdir / "report.csv")
    mismatches = []
    expected = {(str(r["iteration"]), r["channel"]): r for r in fresh.rows()}
    seen = set()
    for row in rows:
        rec = dict(zip(header, row))
        key = (rec["iteration"], rec["channel"])
        seen.add(key)
        if key not in expected:
            mismatches.append(f"iteration {key[0]} channel {key[1]}: row has no telemetry")
            continue
        for col in REPORT_COLUMNS[2:]:
            stored, recomputed = float(rec[col]), float(expected[key][col])
            if not _close(stored, recomputed):
                mismatches.append(f"iteration {key[0]} channel {key[1]} {col}: "
                                  f"stored {stored!r} recomputed {recomputed!r}")
    for key in sorted(set(expected) - seen):
        mismatches.append(f"iteration {key[0]} channel {key[1]}: missing from report")

    _, srows = read_csv(outdir / "summary.csv")
    by_iter = {it.iteration: it for it in fresh.iterations}
    for name, it_s, value in (r for r in srows if r[1] != ""):
        it = by_iter.get(int(it_s))
        recomputed = getattr(it, name, None) if it is not None else None
        if recomputed is None or not _close(float(value), recomputed):
            mismatches.append(f"summary {name} iteration {it_s}: stored {value} recomputed {recomputed!r}")
    flags = {r[0]: r[2] for r in srows if r[1] == ""}
    for name, flag in fresh.flags.items():
        if flags.get(name) != str(bool(flag)).lower():
            mismatches.append(f"flag {name}: stored {flags.get(name)} recomputed {str(bool(flag)).lower()}")
    if mismatches:
        raise VerificationFailed(mismatches)
    return fresh
