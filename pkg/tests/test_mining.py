import math

import numpy as np
import pytest

from cops.mining import MarginConfig, SampleSets, mine, mine_pairs, select_anchors
from cops.numerics import RngStream


def brute_force_partition(sets, cls, gt, cfg):
    """Re-derive every membership decision from the class distance alone."""
    ref = sets.meta["ref"]
    for q, pos, neg in zip(sets.queries, sets.positives, sets.negatives):
        pos, neg = set(pos.tolist()), set(neg.tolist())
        assert not pos & neg
        for k in ref:
            k = int(k)
            gap = abs(int(cls[q]) - int(cls[k]))
            if k == q:
                assert k not in pos and k not in neg
            elif gap < cfg.psi_min:
                assert k in pos and k not in neg
            elif gap <= cfg.psi_max:
                assert k in neg and k not in pos
            else:
                assert k not in pos and k not in neg
        assert pos | neg <= set(ref.tolist())
        assert not gt[list(pos | neg)].any()
    assert not gt[sets.queries].any()


def check_caps(sets, cls, gt, n):
    ref = sets.meta["ref"]
    for c in np.unique(cls[ref]):
        eligible = int(np.sum((cls == c) & ~gt))
        assert np.sum(cls[ref] == c) == min(n, eligible)
    for c in np.unique(cls[sets.queries]):
        assert np.sum(cls[sets.queries] == c) <= n


def test_four_pixel_example():
    classes = np.array([[3, 3, 10, 50]])
    gt = np.zeros((1, 4), bool)
    sets = mine_pairs([0], classes, gt, MarginConfig(1, 20, 60), RngStream(0))
    assert sets.positives[0].tolist() == [1]
    assert sets.negatives[0].tolist() == [2]
    assert sets.dropped == 0


def test_unit_margin_positives_are_same_class():
    rng = np.random.default_rng(1)
    classes = rng.integers(0, 6, (8, 8))
    gt = np.zeros((8, 8), bool)
    sets = mine(classes, gt, MarginConfig(1, 20, 1000), RngStream(1))
    flat = classes.reshape(-1)
    for q, pos in zip(sets.queries, sets.positives):
        assert set(pos.tolist()) == set(np.flatnonzero(flat == flat[q]).tolist()) - {q}


def test_infinite_margin_negatives_are_all_other_classes():
    rng = np.random.default_rng(2)
    classes = rng.integers(0, 30, (8, 8))
    gt = rng.uniform(size=(8, 8)) < 0.3
    sets = mine(classes, gt, MarginConfig(1, math.inf, 1000), RngStream(2))
    flat, g = classes.reshape(-1), gt.reshape(-1)
    for q, neg in zip(sets.queries, sets.negatives):
        assert set(neg.tolist()) == set(np.flatnonzero((flat != flat[q]) & ~g).tolist())


def test_partition_caps_and_leakage_random_maps():
    cfg = MarginConfig(1, 20, 60)
    for trial in range(100):
        rng = np.random.default_rng(trial)
        n_classes = int(rng.integers(2, 60))
        classes = rng.integers(0, n_classes, (16, 16))
        gt = rng.uniform(size=(16, 16)) < rng.uniform(0, 0.6)
        sets = mine(classes, gt, cfg, RngStream(trial))
        cls, g = classes.reshape(-1), gt.reshape(-1)
        brute_force_partition(sets, cls, g, cfg)
        check_caps(sets, cls, g, cfg.n)


def test_select_anchors_caps():
    classes = np.zeros((100, 100), int)
    classes[0, :3] = 1
    gt = np.zeros((100, 100), bool)
    anchors = select_anchors(classes, gt, 60, RngStream(0))
    flat = classes.reshape(-1)
    assert np.sum(flat[anchors] == 0) == 60
    assert np.sum(flat[anchors] == 1) == 3


def test_select_anchors_excludes_gt_and_errors_when_empty():
    classes = np.zeros((4, 4), int)
    gt = np.ones((4, 4), bool)
    gt[0, 0] = False
    assert select_anchors(classes, gt, 60, RngStream(0)).tolist() == [0]
    with pytest.raises(ValueError):
        select_anchors(classes, np.ones((4, 4), bool), 60, RngStream(0))


def test_invalid_class_cells_never_selected():
    classes = np.array([[0, 0, -1, 1, 1]])
    sets = mine(classes, np.zeros((1, 5), bool), MarginConfig(), RngStream(0))
    for lst in [sets.queries, *sets.positives, *sets.negatives]:
        assert 2 not in np.asarray(lst).tolist()


def test_singletons_dropped_and_counted():
    classes = np.array([[0, 0, 5, 9]])
    sets = mine_pairs([0, 2, 3], classes, np.zeros((1, 4), bool), MarginConfig(), RngStream(0))
    assert sets.queries.tolist() == [0]
    assert sets.dropped == 2


def test_negative_criterion_symmetric():
    rng = np.random.default_rng(5)
    classes = rng.integers(0, 40, (10, 10))
    gt = rng.uniform(size=(10, 10)) < 0.2
    cfg = MarginConfig(1, 20, 10_000)
    eligible = np.flatnonzero(~gt.reshape(-1))
    sets = mine_pairs(eligible, classes, gt, cfg, RngStream(0))
    neg = {int(q): set(n.tolist()) for q, n in zip(sets.queries, sets.negatives)}
    for q in neg:
        for k in neg[q]:
            if k in neg:
                assert q in neg[k]


def test_mining_deterministic():
    classes = np.random.default_rng(0).integers(0, 10, (16, 16))
    gt = np.zeros((16, 16), bool)
    a = mine(classes, gt, MarginConfig(n=5), RngStream(3))
    b = mine(classes, gt, MarginConfig(n=5), RngStream(3))
    assert np.array_equal(a.queries, b.queries)
    assert all(np.array_equal(x, y) for x, y in zip(a.negatives, b.negatives))


def test_config_validation():
    with pytest.raises(ValueError):
        MarginConfig(psi_min=0)
    with pytest.raises(ValueError):
        MarginConfig(psi_min=3, psi_max=2)
    with pytest.raises(ValueError):
        MarginConfig(n=0)
    with pytest.raises(ValueError):
        SampleSets([0])
