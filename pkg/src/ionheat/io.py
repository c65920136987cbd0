"""CSV/JSON file formats.

Floats are written with ``repr`` so files round-trip exactly and identical
inputs give byte-identical outputs.  Each data CSV may carry a JSON sidecar
with the same stem (``trace.csv`` -> ``trace.json``).
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .errors import DataQualityError
from .rates import HeatingDataset, HeatingPoint, to_mhz
from .recool import RecoolTrace
from .sideband import SidebandScan

TRACE_COLUMNS = ("delay_s", "bin_start_s", "bin_width_s", "counts", "repeats")
SCAN_COLUMNS = ("detuning_hz", "mean_counts", "stderr")
DATASET_COLUMNS = ("delay_s", "nbar", "stderr", "trap_frequency_mhz", "method")
RATES_COLUMNS = ("trap_frequency_mhz", "rate", "stderr")


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_rows(path, columns, rows):
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
    return path


def read_rows(path, columns):
    """Rows as dicts of strings; checks the required columns are present."""
    path = Path(path)
    if not path.exists():
        raise DataQualityError(f"{path}: no such file", "io")
    with path.open(newline="") as fh:
        lines = [ln for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    reader = csv.DictReader(lines)
    missing = [c for c in columns if c not in (reader.fieldnames or [])]
    if missing:
        raise DataQualityError(f"{path}: missing columns {missing}", "io")
    return list(reader)


def _num(row, key, path, line, cast=float):
    try:
        v = cast(row[key])
    except (TypeError, ValueError):
        raise DataQualityError(f"{path} row {line}: bad {key} value {row[key]!r}", "io") from None
    if cast is float and not math.isfinite(v):
        raise DataQualityError(f"{path} row {line}: non-finite {key}", "io")
    return v


def sidecar_path(path):
    return Path(path).with_suffix(".json")


def write_json(path, obj):
    path = Path(path)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


def _json_default(o):
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def read_json(path):
    path = Path(path)
    try:
        return json.loads(path.read_text())
    except FileNotFoundError:
        raise DataQualityError(f"{path}: no such file", "io") from None
    except json.JSONDecodeError as err:
        raise DataQualityError(f"{path}: invalid JSON ({err})", "io") from None


# --- recool traces --------------------------------------------------------

def write_traces(path, traces):
    rows = []
    for tr in traces:
        for start, width, c in zip(tr.bin_edges[:-1], tr.bin_width, tr.counts):
            rows.append((float(tr.delay), float(start), float(width), int(c), int(tr.repeats)))
    return write_rows(path, TRACE_COLUMNS, rows)


def read_traces(path):
    """One :class:`RecoolTrace` per distinct delay, in file order."""
    rows = read_rows(path, TRACE_COLUMNS)
    groups = {}
    for i, r in enumerate(rows, start=2):
        d = _num(r, "delay_s", path, i)
        groups.setdefault(d, []).append((
            _num(r, "bin_start_s", path, i), _num(r, "bin_width_s", path, i),
            _num(r, "counts", path, i, int), _num(r, "repeats", path, i, int)))
    traces = []
    for d, g in groups.items():
        start = np.array([x[0] for x in g])
        width = np.array([x[1] for x in g])
        if np.any(width <= 0):
            raise DataQualityError(f"{path}: non-positive bin width at delay {d}", "io")
        if not np.allclose(start[1:], start[:-1] + width[:-1], rtol=1e-9, atol=1e-15):
            raise DataQualityError(f"{path}: bins at delay {d} are not contiguous", "io")
        reps = {x[3] for x in g}
        if len(reps) != 1:
            raise DataQualityError(f"{path}: mixed repeat counts at delay {d}", "io")
        edges = np.append(start, start[-1] + width[-1])
        traces.append(RecoolTrace(d, edges, np.array([x[2] for x in g]), reps.pop()))
    return traces


# --- sideband scans -------------------------------------------------------

def write_scan(path, scan: SidebandScan):
    rows = zip(scan.detunings.tolist(), scan.signal.tolist(), scan.stderr.tolist())
    return write_rows(path, SCAN_COLUMNS, rows)


def scan_metadata(scan: SidebandScan):
    return {"probe_duration_s": scan.probe_duration, "shots": scan.shots,
            "trap_frequency_mhz": to_mhz(scan.trap_frequency)}


def read_scan(path, probe_duration=None, shots=0, trap_frequency=None):
    """Read a scan CSV; metadata missing from the arguments comes from the sidecar."""
    rows = read_rows(path, SCAN_COLUMNS)
    meta = {}
    side = sidecar_path(path)
    if side.exists():
        meta = read_json(side).get("scan", {})
    x = np.array([_num(r, "detuning_hz", path, i) for i, r in enumerate(rows, 2)])
    y = np.array([_num(r, "mean_counts", path, i) for i, r in enumerate(rows, 2)])
    s = np.array([_num(r, "stderr", path, i) for i, r in enumerate(rows, 2)])
    if probe_duration is None:
        probe_duration = float(meta.get("probe_duration_s", float("nan")))
    if not shots:
        shots = int(meta.get("shots", 0))
    if trap_frequency is None and "trap_frequency_mhz" in meta:
        trap_frequency = 2 * math.pi * 1e6 * float(meta["trap_frequency_mhz"])
    return SidebandScan(x, y, s, probe_duration, shots, trap_frequency or 0.0)


# --- heating datasets and rate tables -------------------------------------

def write_dataset(path, ds: HeatingDataset):
    f = to_mhz(ds.trap_frequency)
    rows = [(p.delay, p.nbar, p.stderr, f, ds.method) for p in ds.points]
    return write_rows(path, DATASET_COLUMNS, rows)


def read_dataset(path):
    rows = read_rows(path, DATASET_COLUMNS)
    if not rows:
        raise DataQualityError(f"{path}: dataset has no rows", "io")
    pts = [HeatingPoint(_num(r, "delay_s", path, i), _num(r, "nbar", path, i),
                        _num(r, "stderr", path, i)) for i, r in enumerate(rows, 2)]
    freqs = {_num(r, "trap_frequency_mhz", path, i) for i, r in enumerate(rows, 2)}
    methods = {r["method"].strip() for r in rows}
    if len(freqs) != 1 or len(methods) != 1:
        raise DataQualityError(f"{path}: one trap frequency and method per dataset", "io")
    return HeatingDataset(pts, 2 * math.pi * 1e6 * freqs.pop(), methods.pop())


def read_rate_table(path):
    """(omega rad/s, rate, stderr) triples for power-law fits."""
    rows = read_rows(path, RATES_COLUMNS)
    return [(2 * math.pi * 1e6 * _num(r, "trap_frequency_mhz", path, i),
             _num(r, "rate", path, i), _num(r, "stderr", path, i))
            for i, r in enumerate(rows, 2)]


def write_rate_table(path, triples):
    rows = [(to_mhz(w), r, s) for w, r, s in triples]
    return write_rows(path, RATES_COLUMNS, rows)


def write_xy(path, x, y, yerr, columns=("x", "y", "yerr")):
    """Plot-ready three-column CSV."""
    return write_rows(path, columns, zip(np.asarray(x, float).tolist(),
                                         np.asarray(y, float).tolist(),
                                         np.asarray(yerr, float).tolist()))
