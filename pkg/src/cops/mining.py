"""Anchor selection and margin-based positive/negative mining over pseudo-classes.

Only pixels without a ground-truth measurement take part. For a query q a
reference pixel k is positive when |y_q - y_k| < psi_min and negative when
psi_min <= |y_q - y_k| <= psi_max; anything farther is ignored.
"""

import logging
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MarginConfig:
    psi_min: int = 1
    psi_max: float = 20      # math.inf disables the far cut-off
    n: int = 60

    def __post_init__(self):
        if self.psi_min < 1 or self.psi_max < self.psi_min:
            raise ValueError(f"need 1 <= psi_min <= psi_max, got ({self.psi_min}, {self.psi_max})")
        if self.n < 1:
            raise ValueError("per-class cap n must be >= 1")


class SampleSets:
    """Query pixels with their positive and negative index lists.

    When built by :func:`mine_pairs` the lists are materialized lazily from
    dense query x reference masks kept in ``meta``.
    """

    def __init__(self, queries, positives=None, negatives=None, dropped=0, meta=None):
        self.queries = np.asarray(queries, dtype=np.int64)
        self.dropped = dropped
        self.meta = meta or {}
        if positives is None or negatives is None:
            if "pos_mask" not in self.meta:
                raise ValueError("SampleSets needs explicit lists or dense masks")
        self._positives = positives
        self._negatives = negatives

    def _rows(self, mask):
        ref = self.meta["ref"]
        return [ref[row] for row in self.meta[mask]]

    @property
    def positives(self):
        if self._positives is None:
            self._positives = self._rows("pos_mask")
        return self._positives

    @property
    def negatives(self):
        if self._negatives is None:
            self._negatives = self._rows("neg_mask")
        return self._negatives

    def __len__(self):
        return len(self.queries)


def _eligible(classes, gt_mask):
    cls = np.asarray(classes.classes if hasattr(classes, "classes") else classes).reshape(-1)
    ok = cls >= 0
    if gt_mask is not None:
        ok &= ~np.asarray(gt_mask, dtype=bool).reshape(-1)
    return cls, ok


def _per_class_subset(cls, ok, n, rng):
    """Uniform subset of at most n eligible pixels from every class."""
    picked = {}
    for c in np.unique(cls[ok]):
        members = np.flatnonzero(ok & (cls == c))
        if members.size > n:
            members = np.sort(members[rng.choice(members.size, n)])
        picked[int(c)] = members
    return picked


def select_anchors(classes, gt_mask, n, rng):
    cls, ok = _eligible(classes, gt_mask)
    if not ok.any():
        raise ValueError("no pixel outside the ground-truth mask is available for anchors")
    picked = _per_class_subset(cls, ok, n, rng)
    return np.concatenate([picked[c] for c in sorted(picked)])


def mine_pairs(queries, classes, gt_mask, config, rng):
    """Positive and negative index sets per query.

    One capped reference subset (at most ``config.n`` pixels per class) is
    drawn and shared by all queries; a query is never its own positive.
    Queries left with no positive are dropped and counted in ``dropped``.
    The dense query x reference masks are kept in ``meta`` for the loss.
    """
    queries = np.asarray(queries, dtype=np.int64)
    if queries.size == 0:
        raise ValueError("mine_pairs needs at least one query")
    cls, ok = _eligible(classes, gt_mask)
    if not ok[queries].all():
        raise ValueError("queries must be eligible (non-ground-truth, classed) pixels")
    refs = _per_class_subset(cls, ok, config.n, rng)
    ref = np.concatenate([refs[c] for c in sorted(refs)])

    dist = np.abs(cls[queries][:, None] - cls[ref][None, :])
    pos = (dist < config.psi_min) & (queries[:, None] != ref[None, :])
    neg = (dist >= config.psi_min) & (dist <= config.psi_max)
    keep = pos.any(axis=1)
    dropped = int((~keep).sum())
    if dropped:
        log.debug("dropped %d queries without positives", dropped)
    queries, pos, neg = queries[keep], pos[keep], neg[keep]
    return SampleSets(queries, dropped=dropped, meta={"ref": ref, "pos_mask": pos, "neg_mask": neg})


def mine(classes, gt_mask, config, rng):
    """Anchor selection followed by pair mining."""
    anchors = select_anchors(classes, gt_mask, config.n, rng)
    return mine_pairs(anchors, classes, gt_mask, config, rng)
