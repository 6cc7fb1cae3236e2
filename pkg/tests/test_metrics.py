import math
from pathlib import Path

import numpy as np
import pytest

from cops.data import DepthGrid
from cops.metrics import (AVERAGE, BenchTable, MetricReport, add_rows, aggregate, compute_metrics,
                          emit_table, parse_table)

GOLDEN = Path(__file__).parent / "golden"


def golden_table():
    table = BenchTable("m")
    add_rows(table, "L_base", {"day": (1.0, 0.5, 0.004, 0.002), "night": (2.0, 1.0, 0.006, 0.004)})
    add_rows(table, "COPS", {"day": (0.9, 0.4, 0.003, 0.002), "night": (2.1, 1.2, 0.007, 0.006)})
    return table


def test_two_pixel_example():
    gt = DepthGrid.dense(np.array([[4.0, 10.0]]))
    r = compute_metrics(np.array([[5.0, 10.0]]), gt)
    assert abs(r.mae - 0.5) <= 1e-12
    assert abs(r.rmse - math.sqrt(0.5)) <= 1e-12
    assert abs(r.imae - 0.025) <= 1e-12
    assert abs(r.irmse - math.sqrt(0.00125)) <= 1e-12


def test_perfect_prediction_is_zero():
    gt = DepthGrid.dense(np.random.default_rng(0).uniform(1, 50, (6, 6)))
    assert compute_metrics(gt.depth.copy(), gt).values() == (0.0, 0.0, 0.0, 0.0)


def test_millimeter_factor_exact():
    rng = np.random.default_rng(1)
    gt = DepthGrid.dense(rng.uniform(1, 50, (6, 6)))
    pred = rng.uniform(1, 50, (6, 6))
    m = compute_metrics(pred, gt, "m")
    mm = compute_metrics(pred, gt, "mm")
    assert (m.rmse, m.mae) == (mm.rmse, mm.mae)
    assert m.irmse / mm.irmse == pytest.approx(1000.0, rel=1e-15)
    assert m.imae / mm.imae == pytest.approx(1000.0, rel=1e-15)
    assert m.to_unit("mm").irmse == pytest.approx(mm.irmse, rel=1e-15)


def test_symmetric_in_linear_errors_and_homogeneous():
    rng = np.random.default_rng(2)
    g = rng.uniform(1, 50, (5, 5))
    p = rng.uniform(1, 50, (5, 5))
    a = compute_metrics(p, DepthGrid.dense(g))
    b = compute_metrics(g, DepthGrid.dense(p))
    assert (a.rmse, a.mae) == pytest.approx((b.rmse, b.mae), rel=1e-14)
    c = compute_metrics(3.0 * p, DepthGrid.dense(3.0 * g))
    assert c.rmse == pytest.approx(3 * a.rmse, rel=1e-13)
    assert c.irmse == pytest.approx(a.irmse / 3, rel=1e-13)


def test_only_valid_cells_scored():
    gt = DepthGrid(np.array([[4.0, 1.0]]), np.array([[True, False]]))
    r = compute_metrics(np.array([[5.0, 1e6]]), gt)
    assert r.n_pixels == 1 and r.mae == 1.0


def test_errors():
    gt = DepthGrid.dense(np.ones((2, 2)))
    with pytest.raises(ValueError):
        compute_metrics(np.ones((2, 3)), gt)
    with pytest.raises(ValueError, match=r"\(1, 0\)"):
        compute_metrics(np.array([[1.0, 1.0], [0.0, 1.0]]), gt)
    with pytest.raises(ValueError):
        compute_metrics(np.ones((2, 2)), gt, "km")
    with pytest.raises(ValueError):
        compute_metrics(np.ones((1, 1)), DepthGrid(np.ones((1, 1)), np.zeros((1, 1), bool)))


def test_average_row_unweighted():
    reports = [MetricReport(1, 1, 1, 1, condition="day"), MetricReport(3, 3, 3, 3, condition="day"),
               MetricReport(4, 4, 4, 4, condition="day"), MetricReport(3, 3, 3, 3, condition="night")]
    t = aggregate(reports, "m1", condition_order=["day", "night"])
    assert t.get("m1", "day") == (8 / 3,) * 4
    assert t.get("m1", AVERAGE) == pytest.approx(((8 / 3 + 3) / 2,) * 4)


def test_average_of_two_conditions():
    t = aggregate([MetricReport(2, 2, 2, 2, condition="a"), MetricReport(3, 3, 3, 3, condition="b")], "m")
    assert t.get("m", AVERAGE) == (2.5, 2.5, 2.5, 2.5)


def test_mixed_units_rejected():
    with pytest.raises(ValueError, match="mixed"):
        aggregate([MetricReport(1, 1, 1, 1, "m"), MetricReport(1, 1, 1, 1, "mm")])


@pytest.mark.parametrize("fmt,name", [("markdown", "table.md"), ("csv", "table.csv")])
def test_golden_tables(fmt, name):
    assert emit_table(golden_table(), fmt) == (GOLDEN / name).read_text()


def test_formats_parse_identically():
    t = golden_table()
    assert parse_table(emit_table(t, "csv"), "csv") == parse_table(emit_table(t, "markdown"), "markdown")


def test_mm_header_and_empty_table():
    text = emit_table(BenchTable("mm"), "csv")
    assert text == "Method,TestSet,RMSE (m),MAE (m),iRMSE (1/mm),iMAE (1/mm)\n"
    assert len(emit_table(BenchTable(), "markdown").splitlines()) == 2
    with pytest.raises(ValueError):
        emit_table(BenchTable(), "html")


def test_failed_rows_marked():
    t = golden_table()
    t.failed.append("n=90")
    assert emit_table(t, "csv").splitlines()[-1] == "n=90,failed,-,-,-,-"
