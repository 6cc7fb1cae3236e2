"""Depth-completion error metrics and benchmark tables.

RMSE and MAE are in meters. iRMSE and iMAE are computed on inverse depth in
1/m and reported either per meter or per millimeter (value / 1000).
"""

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

# divisor applied to inverse-depth errors in 1/m
INVERSE_UNITS = {"m": 1.0, "mm": 1000.0}
METRIC_COLUMNS = ("RMSE", "MAE", "iRMSE", "iMAE")
AVERAGE = "Average"


@dataclass(frozen=True)
class MetricReport:
    rmse: float
    mae: float
    irmse: float
    imae: float
    inverse_unit: str = "m"
    n_pixels: int = 1
    condition: str = "synthetic"

    def values(self):
        return (self.rmse, self.mae, self.irmse, self.imae)

    def to_unit(self, unit):
        f = INVERSE_UNITS[self.inverse_unit] / INVERSE_UNITS[unit]
        return MetricReport(self.rmse, self.mae, self.irmse * f, self.imae * f, unit,
                            self.n_pixels, self.condition)


def compute_metrics(pred, gt, inverse_unit="m", condition=None):
    if inverse_unit not in INVERSE_UNITS:
        raise ValueError(f"inverse unit must be one of {sorted(INVERSE_UNITS)}")
    p = np.asarray(pred.depth if hasattr(pred, "depth") else pred, dtype=np.float64)
    g = np.asarray(gt.depth if hasattr(gt, "depth") else gt, dtype=np.float64)
    valid = np.asarray(gt.valid if hasattr(gt, "valid") else np.ones(g.shape, bool), dtype=bool)
    if p.shape != g.shape:
        raise ValueError(f"prediction {p.shape} and ground truth {g.shape} differ in shape")
    n = int(valid.sum())
    if n == 0:
        raise ValueError("no valid ground-truth cell to evaluate")
    pv, gv = p[valid], g[valid]
    bad = ~(np.isfinite(pv) & (pv > 0))
    if bad.any():
        cell = tuple(int(i) for i in np.argwhere(valid)[np.argmax(bad)])
        raise ValueError(f"prediction {pv[np.argmax(bad)]!r} at cell {cell} is not a positive depth")
    err = gv - pv
    ierr = 1.0 / gv - 1.0 / pv
    scale = INVERSE_UNITS[inverse_unit]
    return MetricReport(
        rmse=math.sqrt(np.mean(err * err)),
        mae=float(np.mean(np.abs(err))),
        irmse=math.sqrt(np.mean(ierr * ierr)) / scale,
        imae=float(np.mean(np.abs(ierr))) / scale,
        inverse_unit=inverse_unit,
        n_pixels=n,
        condition=condition or getattr(gt, "condition", None) or "synthetic",
    )


@dataclass
class BenchTable:
    """Rows keyed by (method, condition); every method also gets an Average row
    holding the unweighted mean of its condition rows."""

    inverse_unit: str = "m"
    rows: list = field(default_factory=list)     # (method, condition, (rmse, mae, irmse, imae))
    failed: list = field(default_factory=list)

    def methods(self):
        seen = []
        for m, _, _ in self.rows:
            if m not in seen:
                seen.append(m)
        return seen

    def get(self, method, condition=AVERAGE):
        for m, c, v in self.rows:
            if m == method and c == condition:
                return v
        raise KeyError((method, condition))


def aggregate(reports, method="method", table=None, condition_order=None):
    """Mean per condition of ``reports`` plus an Average row, appended to ``table``."""
    reports = list(reports)
    units = {r.inverse_unit for r in reports}
    if table is not None:
        units.add(table.inverse_unit)
    if len(units) > 1:
        raise ValueError(f"mixed inverse units in one table: {sorted(units)}")
    unit = units.pop() if units else "m"
    table = table or BenchTable(unit)
    by_cond = {}
    for r in reports:
        by_cond.setdefault(r.condition, []).append(r.values())
    conds = list(condition_order or []) + sorted(set(by_cond) - set(condition_order or []))
    cond_rows = []
    for c in conds:
        if c in by_cond:
            v = tuple(float(x) for x in np.mean(np.asarray(by_cond[c]), axis=0))
            cond_rows.append(v)
            table.rows.append((method, c, v))
    if cond_rows:
        table.rows.append((method, AVERAGE, tuple(float(x) for x in np.mean(np.asarray(cond_rows), axis=0))))
    return table


def add_rows(table, method, per_condition):
    """Append pre-computed condition rows (dict condition -> 4-tuple) and their Average."""
    vals = []
    for c, v in per_condition.items():
        v = tuple(float(x) for x in v)
        table.rows.append((method, c, v))
        vals.append(v)
    if vals:
        table.rows.append((method, AVERAGE, tuple(float(x) for x in np.mean(np.asarray(vals), axis=0))))
    return table


def _unit_label(unit):
    return f"1/{unit}"


def emit_table(table, fmt="markdown", decimals=3):
    inv = _unit_label(table.inverse_unit)
    heads = ["Method", "TestSet"] + [
        f"{c} ({'m' if c in ('RMSE', 'MAE') else inv})" for c in METRIC_COLUMNS]
    body = [[m, c] + [f"{x:.{decimals}f}" for x in v] for m, c, v in table.rows]
    body += [[m, "failed"] + ["-"] * 4 for m in table.failed]
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(heads)
        writer.writerows(body)
        return buf.getvalue()
    if fmt == "markdown":
        lines = ["| " + " | ".join(heads) + " |",
                 "|" + "|".join(["---"] * 2 + ["---:"] * 4) + "|"]
        lines += ["| " + " | ".join(r) + " |" for r in body]
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown table format {fmt!r}")


def parse_table(text, fmt="csv"):
    """Rows of an emitted table as (method, condition, 4 floats)."""
    if fmt == "csv":
        rows = list(csv.reader(io.StringIO(text)))[1:]
    else:
        rows = [[c.strip() for c in ln.strip().strip("|").split("|")]
                for ln in text.strip().splitlines()[2:]]
    return [(r[0], r[1], tuple(float(x) for x in r[2:6])) for r in rows if r[1] != "failed"]
