"""CSV writers and readers for telemetry, controller traces, wheel speeds and replay profiles."""

import csv
from pathlib import Path

import numpy as np

from .simulation import AccelProfile
from .ugv import WHEEL_ORDER, wheel_speeds

FLOAT_FORMAT = "%.9g"


def _fmt(v):
    return FLOAT_FORMAT % v


def telemetry_header(n):
    cols = ["t", "rP_x", "rP_y", "rP_z", "phiP_dot", "thetaP_dot",
            "rB_x", "rB_y", "rB_z", "phiB", "thetaB", "psiB"]
    for i in range(1, n + 1):
        cols += [f"ugv{i}_x", f"ugv{i}_y", f"ugv{i}_theta", f"ugv{i}_vx", f"ugv{i}_vy"]
    cols.append("T_P")
    cols += [f"T_{i}" for i in range(1, n + 1)]
    cols += [f"slack_{i}" for i in range(1, n + 1)]
    for i in range(1, n + 1):
        cols += [f"u_{i}_1", f"u_{i}_2", f"u_{i}_3"]
    return cols


def telemetry_row(rec):
    vals = [rec.time, *rec.payload_position, *rec.swing_rate, *rec.balloon_pose]
    for u in rec.ugvs:
        vals += [u[0], u[1], u[2], u[3], u[4]]
    vals.append(rec.payload_tension)
    vals += list(rec.ugv_tensions)
    row = [_fmt(v) for v in vals]
    row += [str(int(s)) for s in rec.slack]
    row += [_fmt(v) for v in np.asarray(rec.inputs).ravel()]
    return row


def _write(path, header, rows):
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_telemetry(path, records, n):
    _write(path, telemetry_header(n), (telemetry_row(r) for r in records))


def read_telemetry(path):
    """Returns ``(header, data)`` with ``data`` a float array, one row per record."""
    with Path(path).open(encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float).reshape(len(rows) - 1, len(rows[0]))


def write_trace(path, trace, n):
    header = ["t", "status", "iterations", "cost", "n_active", "failsafe"]
    header += [f"T_{i}" for i in range(1, n + 1)]
    for i in range(1, n + 1):
        header += [f"u_{i}_1", f"u_{i}_2", f"u_{i}_3"]
    rows = ([_fmt(r.time), r.status, str(r.iterations), _fmt(r.cost), str(r.n_active), str(int(r.failsafe))]
            + [_fmt(v) for v in r.first_input] for r in trace)
    _write(path, header, rows)


def write_wheel_speeds(path, records, geom):
    n = len(records[0].ugvs) if records else 0
    header = ["t"] + [f"ugv{i}_{w}" for i in range(1, n + 1) for w in WHEEL_ORDER]
    rows = ([_fmt(r.time)] + [_fmt(v) for u in r.ugvs for v in wheel_speeds(u, geom)] for r in records)
    _write(path, header, rows)


def write_profile(path, profile):
    T, n, _ = profile.accels.shape
    header = ["t"] + [f"a_{i}_{j}" for i in range(1, n + 1) for j in (1, 2, 3)]
    rows = ([_fmt(t)] + [_fmt(v) for v in a.ravel()] for t, a in zip(profile.times, profile.accels))
    _write(path, header, rows)


def read_profile(path):
    """Parse a replay CSV: ``t`` followed by three acceleration columns per rover."""
    with Path(path).open(encoding="utf-8", newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise ValueError(f"{path}: empty profile")
    header, body = rows[0], rows[1:]
    if header[0].strip() != "t" or (len(header) - 1) % 3 != 0 or len(header) < 4:
        raise ValueError(f"{path}: header must be 't' plus 3 columns per rover")
    n = (len(header) - 1) // 3
    try:
        data = np.array(body, dtype=float).reshape(len(body), len(header))
    except ValueError as exc:
        raise ValueError(f"{path}: malformed row: {exc}") from exc
    return AccelProfile(data[:, 0].copy(), data[:, 1:].reshape(len(body), n, 3))
