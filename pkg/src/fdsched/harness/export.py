"""Write reports as CSV or JSON lines.

Three tables are written per report, each with a fixed column order:

* ``traces``: one row per (cell, drop, scheduler, checkpoint) of a learning run;
* ``drops``: one row per (cell, drop, scheduler, window);
* ``summary``: one row per (cell, scheduler, window), aggregated over drops.

``meta.json`` echoes the configuration. Column meanings are listed in the README.
Floats are written with ``repr`` so values round-trip exactly; missing values
are empty cells in CSV and ``null`` in JSON lines.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .experiments import MetricsReport

FORMATS = ("csv", "jsonl")


def _per_user(prefix: str, n: int) -> list[str]:
    return [f"{prefix}_{i}" for i in range(1, n + 1)]


def trace_columns(n: int) -> list[str]:
    return (["experiment", "cell", "drop", "scheduler", "slot", "utility_bps_hz", "utility_mbps"]
            + _per_user("share_ul", n) + _per_user("share_dl", n)
            + _per_user("lambda_ul", n) + _per_user("lambda_dl", n))


def drop_columns(n: int) -> list[str]:
    return (["experiment", "cell", "drop", "scheduler", "window", "n_slots", "utility_sum",
             "utility_bps_hz", "utility_mbps", "n_windows", "violations",
             "window_utility_mean", "window_utility_std", "checksum"]
            + _per_user("share_ul", n) + _per_user("share_dl", n)
            + _per_user("steady_ul", n) + _per_user("steady_dl", n)
            + _per_user("lambda_ul", n) + _per_user("lambda_dl", n))


def summary_columns(n: int) -> list[str]:
    return (["experiment", "cell", "scheduler", "window", "n_drops", "mean_utility_bps_hz",
             "se_utility_bps_hz", "mean_utility_mbps", "gain_pct", "violations"]
            + _per_user("mean_share_ul", n) + _per_user("mean_share_dl", n))


def trace_rows(rep: MetricsReport) -> list[dict]:
    out = []
    for t in rep.traces:
        row = {"experiment": rep.experiment, "cell": t.cell, "drop": t.drop,
               "scheduler": t.scheduler, "slot": t.slot, "utility_bps_hz": t.utility,
               "utility_mbps": rep.mbps(t.utility)}
        for name, vals in (("share_ul", t.shares_ul), ("share_dl", t.shares_dl),
                           ("lambda_ul", t.lambda_ul), ("lambda_dl", t.lambda_dl)):
            row.update(zip(_per_user(name, len(vals)), vals))
        out.append(row)
    return out


def drop_rows(rep: MetricsReport) -> list[dict]:
    out = []
    for r in rep.records:
        wu = np.asarray(r.window_utility, dtype=float)
        row = {"experiment": rep.experiment, "cell": r.cell, "drop": r.drop,
               "scheduler": r.scheduler, "window": r.window, "n_slots": r.n_slots,
               "utility_sum": r.utility_sum, "utility_bps_hz": r.utility,
               "utility_mbps": rep.mbps(r.utility), "n_windows": r.n_windows,
               "violations": r.violations,
               "window_utility_mean": float(wu.mean()) if len(wu) else None,
               "window_utility_std": float(wu.std(ddof=1)) if len(wu) > 1 else None,
               "checksum": r.checksum}
        for name, vals in (("share_ul", r.shares_ul), ("share_dl", r.shares_dl),
                           ("steady_ul", r.steady_ul), ("steady_dl", r.steady_dl),
                           ("lambda_ul", r.lambda_ul), ("lambda_dl", r.lambda_dl)):
            row.update(zip(_per_user(name, len(vals)), vals))
        out.append(row)
    return out


def summary_rows(rep: MetricsReport) -> list[dict]:
    out = []
    keys = list(dict.fromkeys((r.cell, r.scheduler, r.window) for r in rep.records))
    for cell, sched, window in keys:
        recs = rep.select(cell, sched, window)
        u = rep.mean_utility(cell, sched, window)
        gain = None
        if window == 0 and sched == "tbs" and rep.select(cell, "hd"):
            gain = rep.gain(cell)
        row = {"experiment": rep.experiment, "cell": cell, "scheduler": sched, "window": window,
               "n_drops": len(recs), "mean_utility_bps_hz": u,
               "se_utility_bps_hz": rep.se_utility(cell, sched, window),
               "mean_utility_mbps": rep.mbps(u), "gain_pct": gain,
               "violations": int(sum(r.violations for r in recs))}
        su = np.mean([r.shares_ul for r in recs], axis=0)
        sd = np.mean([r.shares_dl for r in recs], axis=0)
        row.update(zip(_per_user("mean_share_ul", len(su)), su.tolist()))
        row.update(zip(_per_user("mean_share_dl", len(sd)), sd.tolist()))
        out.append(row)
    return out


def _clean(v):
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return None if math.isnan(v) else v
    if isinstance(v, np.integer):
        return int(v)
    return v


def _csv_cell(v):
    v = _clean(v)
    if v is None:
        return ""
    return repr(v) if isinstance(v, float) else v


def _write_csv(path: Path, columns: list[str], rows: list[dict]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(columns)
        for row in rows:
            w.writerow([_csv_cell(row.get(c)) for c in columns])


def _write_jsonl(path: Path, columns: list[str], rows: list[dict]) -> None:
    with open(path, "w") as f:
        for row in rows:
            f.write(json.dumps({c: _clean(row.get(c)) for c in columns}, allow_nan=False) + "\n")


def export(rep: MetricsReport, out_dir: str | Path, fmt: str = "csv") -> list[Path]:
    """Write ``traces``, ``drops``, ``summary`` and ``meta.json`` into ``out_dir``."""
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}; use one of {FORMATS}")
    out = Path(out_dir)
    n = int(rep.config["cell"]["n_users"])
    tables = (("traces", trace_columns(n), trace_rows(rep)),
              ("drops", drop_columns(n), drop_rows(rep)),
              ("summary", summary_columns(n), summary_rows(rep)))
    try:
        out.mkdir(parents=True, exist_ok=True)
        paths = []
        for name, cols, rows in tables:
            p = out / f"{name}.{fmt}"
            (_write_csv if fmt == "csv" else _write_jsonl)(p, cols, rows)
            paths.append(p)
        meta = out / "meta.json"
        meta.write_text(json.dumps({"experiment": rep.experiment, "bandwidth_hz": rep.bandwidth,
                                    "config": rep.config}, indent=2, default=_clean))
        paths.append(meta)
    except OSError as e:
        raise OSError(f"cannot write results to {out}: {e.strerror or e}") from e
    return paths


def _parse(v: str):
    if v == "":
        return None
    for cast in (int, float):
        try:
            return cast(v)
        except ValueError:
            pass
    return v


def read_csv(path: str | Path) -> list[dict]:
    with open(path, newline="") as f:
        return [{k: _parse(v) for k, v in row.items()} for row in csv.DictReader(f)]


def read_jsonl(path: str | Path) -> list[dict]:
    with open(path) as f:
        return [json.loads(line) for line in f if line.strip()]
