"""Held-out evaluation and the hyper-parameter sweep harness."""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .metrics import AVERAGE, BenchTable, add_rows, compute_metrics
from .synth import CONDITION_CYCLE, SuiteSpec, standard_suite
from .train import TrainConfig, TrainingDiverged, train

log = logging.getLogger(__name__)

SWEEP_PARAMS = ("n", "psi_max", "alpha", "tau", "w_pseudo")
BASELINE_LABEL = "L_base"


def evaluate(model, scenes, inverse_unit="m"):
    reports = []
    for s in scenes:
        pred, _ = model.predict(s)
        reports.append(compute_metrics(pred, s.gt, inverse_unit, condition=s.condition))
    return reports


def condition_means(reports, order=CONDITION_CYCLE):
    by = {}
    for r in reports:
        by.setdefault(r.condition, []).append(r.values())
    conds = [c for c in order if c in by] + sorted(set(by) - set(order))
    return {c: tuple(float(x) for x in np.mean(np.asarray(by[c]), axis=0)) for c in conds}


def base_only(cfg):
    return replace(cfg, use_contr=False, use_si=False, w_pseudo=0.0)


def train_and_eval(cfg, seed, suite=SuiteSpec(), inverse_unit="m"):
    """Train on the standard suite for ``seed`` and return per-condition means."""
    train_set, test_set = standard_suite(seed, suite)
    model, history = train(train_set, replace(cfg, seed=seed))
    return condition_means(evaluate(model, test_set, inverse_unit)), history


def _job(args):
    cfg, seed, suite, unit = args
    try:
        return train_and_eval(cfg, seed, suite, unit)[0]
    except TrainingDiverged as exc:
        log.warning("run diverged (seed %d): %s", seed, exc)
        return None


def _label(name, value):
    if value is None or (isinstance(value, float) and math.isinf(value)):
        return f"{name}=-"
    return f"{name}={value:g}" if isinstance(value, float) else f"{name}={value}"


@dataclass(frozen=True)
class SweepSpec:
    param: str
    values: tuple
    seeds: tuple = (0, 1, 2, 3, 4)
    base: TrainConfig = TrainConfig()
    suite: SuiteSpec = SuiteSpec()
    include_baseline: bool = True
    inverse_unit: str = "m"

    def __post_init__(self):
        if self.param not in SWEEP_PARAMS:
            raise ValueError(f"sweep parameter must be one of {SWEEP_PARAMS}")
        if not self.values:
            raise ValueError("sweep needs at least one value")
        if not self.seeds:
            raise ValueError("sweep needs at least one seed")

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        base = TrainConfig.from_dict(d.pop("base", {}))
        suite = SuiteSpec(**d.pop("suite", {})) if "suite" in d else SuiteSpec()
        return cls(param=d.pop("param"), values=tuple(d.pop("values")),
                   seeds=tuple(d.pop("seeds", (0, 1, 2, 3, 4))), base=base, suite=suite, **d)


def median_rows(results):
    """Per-condition, per-metric median over seeds of successful runs."""
    ok = [r for r in results if r is not None]
    conds = list(ok[0])
    return {c: tuple(float(x) for x in np.median(np.asarray([r[c] for r in ok]), axis=0)) for c in conds}


def run_sweep(spec, workers=1):
    """One model per (value, seed); rows hold seed medians, plus a base-only row."""
    configs = []
    if spec.include_baseline:
        configs.append((BASELINE_LABEL, base_only(spec.base)))
    for v in spec.values:
        configs.append((_label(spec.param, v), spec.base.with_param(spec.param, v)))
    jobs = [(cfg, seed, spec.suite, spec.inverse_unit) for _, cfg in configs for seed in spec.seeds]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_job, jobs))
    else:
        results = [_job(j) for j in jobs]
    table = BenchTable(spec.inverse_unit)
    k = len(spec.seeds)
    for i, (label, _) in enumerate(configs):
        chunk = results[i * k:(i + 1) * k]
        if all(r is None for r in chunk):
            table.failed.append(label)
            continue
        add_rows(table, label, median_rows(chunk))
    return table


def sweep_series(table, metric="RMSE", condition=AVERAGE):
    """(labels, values) of one metric across the sweep rows, baseline excluded."""
    col = ("RMSE", "MAE", "iRMSE", "iMAE").index(metric)
    labels = [m for m in table.methods() if m != BASELINE_LABEL]
    return labels, [table.get(m, condition)[col] for m in labels]
