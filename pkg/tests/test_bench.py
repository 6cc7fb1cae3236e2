import numpy as np
import pytest

from cops.bench import BASELINE_LABEL, SweepSpec, evaluate, median_rows, run_sweep, sweep_series
from cops.metrics import AVERAGE, emit_table
from cops.model import ModelSpec
from cops.synth import SuiteSpec
from cops.train import TrainConfig

TINY_SUITE = SuiteSpec(n_train=3, n_test=3, size=24)
TINY_CFG = TrainConfig(epochs=2, model=ModelSpec(hidden=(8,), emb_dim=4, proj_dim=4))


def tiny_spec(param, values, **kw):
    return SweepSpec(param, tuple(values), seeds=(0, 1), base=TINY_CFG, suite=TINY_SUITE, **kw)


def test_margin_sweep_rows():
    table = run_sweep(tiny_spec("n", [45, 60, 75, 90]))
    assert table.methods() == [BASELINE_LABEL, "n=45", "n=60", "n=75", "n=90"]
    # three conditions plus the Average row per method
    assert len(table.rows) == 5 * 4
    labels, values = sweep_series(table)
    assert labels == ["n=45", "n=60", "n=75", "n=90"] and all(np.isfinite(values))


def test_alpha_sweep_without_baseline():
    table = run_sweep(tiny_spec("alpha", [0.25, 0.5], include_baseline=False))
    assert table.methods() == ["alpha=0.25", "alpha=0.5"]


def test_infinite_margin_label():
    table = run_sweep(tiny_spec("psi_max", [None], include_baseline=False))
    assert table.methods() == ["psi_max=-"]


def test_sweep_deterministic():
    spec = tiny_spec("w_pseudo", [0.2])
    assert emit_table(run_sweep(spec), "csv") == emit_table(run_sweep(spec), "csv")


def test_median_skips_failed_runs():
    rows = median_rows([{"day": (1, 1, 1, 1)}, None, {"day": (3, 3, 3, 3)}, {"day": (2, 2, 2, 2)}])
    assert rows == {"day": (2.0, 2.0, 2.0, 2.0)}


def test_spec_validation_and_dict():
    with pytest.raises(ValueError):
        SweepSpec("gamma", (1,))
    with pytest.raises(ValueError):
        SweepSpec("n", ())
    spec = SweepSpec.from_dict({"param": "n", "values": [45], "seeds": [3],
                                "base": {"epochs": 4}, "suite": {"n_train": 2, "n_test": 1, "size": 16}})
    assert spec.seeds == (3,) and spec.base.epochs == 4 and spec.suite.size == 16


def test_evaluate_reports_condition(tmp_path):
    from cops.model import TinyModel
    from cops.numerics import RngStream
    from cops.synth import standard_suite
    _, test_set = standard_suite(0, TINY_SUITE)
    reports = evaluate(TinyModel.init(ModelSpec(), RngStream(0)), test_set)
    assert [r.condition for r in reports] == [s.condition for s in test_set]
    assert all(r.rmse > 0 for r in reports)
    assert AVERAGE not in {r.condition for r in reports}
