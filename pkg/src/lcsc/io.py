"""Deterministic CSV and JSON writers for cycles and sensitivity curves."""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .integrator import LimitCycle, _refine

FLOAT_FMT = ".12g"


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        if np.isnan(v):
            return "nan"
        return format(float(v), FLOAT_FMT)
    return str(v)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence], comment=None) -> Path:
    """Write ``rows`` under a header row; ``comment`` lines are prefixed with ``#``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        if comment:
            lines = [comment] if isinstance(comment, str) else list(comment)
            for line in lines:
                fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
    return path


def read_csv(path):
    """Header and float rows of a file written by :func:`write_csv`."""
    with Path(path).open() as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader)
    rows = []
    for r in reader:
        out = []
        for v in r:
            try:
                out.append(float(v))
            except ValueError:
                out.append(v)
        rows.append(out)
    return header, rows


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return float(obj) if np.isfinite(obj) else str(float(obj))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if hasattr(obj, "value") and hasattr(obj, "name"):
        return obj.value
    return obj


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")
    return path


def event_dict(e) -> dict:
    return {
        "kind": e.kind.value,
        "target": e.target,
        "time": e.time,
        "state": e.state,
        "normal": e.normal,
        "mode_before": e.mode_before.label(),
        "mode_after": e.mode_after.label(),
    }


def cycle_summary(lc: LimitCycle) -> dict:
    return {
        "period": lc.period,
        "anchor": {"kind": lc.anchor[0], "target": lc.anchor[1]},
        "anchor_state": lc.anchor_state,
        "closure_defect": lc.closure_defect,
        "params": dict(lc.params),
        "events": [event_dict(e) for e in lc.events],
        "liftoff_states": lc.liftoff_states(),
        "rtol": lc.rtol,
        "atol": lc.atol,
    }


def cycle_rows(lc: LimitCycle, per_step: int = 2):
    """Rows ``t, x_1..x_n, mode, event`` with one extra row per event."""
    n = lc.system.dimension
    header = ["t"] + [f"x_{i + 1}" for i in range(n)] + ["mode", "event"]
    rows = []
    ev_by_time: dict = {}
    for e in lc.events:
        ev_by_time.setdefault(round(e.time, 12), []).append(f"{e.kind.value}{e.target}")
    for s in lc.segments:
        grid = _refine(s.ts, per_step)
        vals = s.sol(grid).T
        label = s.mode.label()
        for k, (t, x) in enumerate(zip(grid, vals)):
            ev = ""
            if k == 0:
                ev = "+".join(ev_by_time.get(round(t, 12), []))
            rows.append([t, *x, label, ev])
    x_end = lc.closure_state
    rows.append([lc.period, *x_end, lc.segments[-1].mode.label(), "+".join(ev_by_time.get(0.0, []))])
    return header, rows


def curve_rows(curve, prefix: str, per_step: int = 4):
    """Rows ``t, <prefix>_1..n, disc``; ``disc`` is -1/+1 at left/right limits."""
    ts, vals, flags = curve.samples(per_step)
    n = vals.shape[1]
    header = ["t"] + [f"{prefix}_{i + 1}" for i in range(n)] + ["disc"]
    rows = [[t, *v, int(f)] for t, v, f in zip(ts, vals, flags)]
    return header, rows


def matrix_json(M) -> dict:
    M = np.asarray(M)
    w = np.linalg.eigvals(M)
    return {
        "matrix": M,
        "eigenvalues_real": w.real,
        "eigenvalues_imag": w.imag,
    }
