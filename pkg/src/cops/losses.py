"""Depth supervision terms with analytic gradients w.r.t. the predicted depth.

All functions take plain float arrays or :class:`DepthGrid` objects and
return ``(loss, grad)`` where ``grad`` has the shape of the prediction.
"""

from dataclasses import dataclass

import numpy as np

FORMULATIONS = ("conventional", "as-printed")


def _arr(x):
    return np.asarray(x.depth if hasattr(x, "depth") else x, dtype=np.float64)


def _mask(x, shape):
    if hasattr(x, "valid"):
        return np.asarray(x.valid, dtype=bool)
    return np.ones(shape, dtype=bool)


@dataclass(frozen=True)
class SILossConfig:
    lam: float = 0.5
    alpha: float = 0.25
    formulation: str = "conventional"

    def __post_init__(self):
        if not 0 <= self.lam <= 1:
            raise ValueError("lambda must lie in [0, 1]")
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        if self.formulation not in FORMULATIONS:
            raise ValueError(f"formulation must be one of {FORMULATIONS}")


@dataclass(frozen=True)
class BaseLossWeights:
    w_e: float = 0.01
    w_gt: float = 1.0

    def __post_init__(self):
        if self.w_e < 0 or self.w_gt < 0:
            raise ValueError("loss weights must be non-negative")


def draw_si_sample(pred, pseudo, alpha, rng):
    """Flat indices of a uniform subset of round(alpha * |eligible|) cells
    valid in both maps."""
    p = _arr(pred)
    eligible = np.flatnonzero((_mask(pred, p.shape) & _mask(pseudo, p.shape)).reshape(-1))
    count = int(round(alpha * eligible.size))
    if count < 2:
        raise ValueError(f"scale-invariant loss needs at least 2 sampled cells, got {count}")
    return np.sort(eligible[rng.choice(eligible.size, count)])


def si_loss(pred, pseudo, config=SILossConfig(), rng=None, sample=None):
    """Scale-invariant log-depth loss on a random subset R of cells.

    With d = log(pseudo) - log(pred) over R:
      conventional  mean(d^2) - lam * mean(d)^2
      as-printed    (sum(d^2) - lam * sum(d)^2) / |R|
    Pass ``sample`` (flat indices) to fix R; otherwise it is drawn from ``rng``.
    """
    p = _arr(pred)
    t = _arr(pseudo)
    if sample is None:
        if rng is None:
            raise ValueError("si_loss needs an rng or an explicit sample")
        sample = draw_si_sample(pred, pseudo, config.alpha, rng)
    sample = np.asarray(sample, dtype=np.int64)
    if sample.size < 2:
        raise ValueError("scale-invariant loss needs at least 2 sampled cells")
    dp = p.reshape(-1)[sample]
    dt = t.reshape(-1)[sample]
    bad = ~((dp > 0) & (dt > 0) & np.isfinite(dp) & np.isfinite(dt))
    if bad.any():
        cell = np.unravel_index(sample[np.argmax(bad)], p.shape)
        raise ValueError(f"non-positive depth in the sampled set at cell {tuple(int(i) for i in cell)}")
    d = np.log(dt) - np.log(dp)
    n = d.size
    lam = config.lam
    if config.formulation == "conventional":
        mean = d.mean()
        loss = float(np.mean(d * d) - lam * mean * mean)
        g_d = (2.0 * d - 2.0 * lam * mean) / n
    else:
        s = d.sum()
        loss = float((np.sum(d * d) - lam * s * s) / n)
        g_d = (2.0 * d - 2.0 * lam * s) / n
    grad = np.zeros(p.size)
    grad[sample] = -g_d / dp          # dd/dpred = -1/pred
    return loss, grad.reshape(p.shape)


def edge_smooth_loss(pred, intensity):
    """Edge-aware smoothness |dD/dx| exp(-|dI/dx|) + |dD/dy| exp(-|dI/dy|),
    averaged over cells that have both forward neighbours."""
    d = _arr(pred)
    img = np.asarray(intensity.values if hasattr(intensity, "values") else intensity, dtype=np.float64)
    if d.shape != img.shape:
        raise ValueError(f"prediction {d.shape} and intensity {img.shape} differ in shape")
    h, w = d.shape
    if h < 2 or w < 2:
        return 0.0, np.zeros_like(d)
    dx = d[:-1, 1:] - d[:-1, :-1]
    dy = d[1:, :-1] - d[:-1, :-1]
    wx = np.exp(-np.abs(img[:-1, 1:] - img[:-1, :-1]))
    wy = np.exp(-np.abs(img[1:, :-1] - img[:-1, :-1]))
    n = (h - 1) * (w - 1)
    loss = float(np.sum(np.abs(dx) * wx + np.abs(dy) * wy) / n)
    gx = np.sign(dx) * wx / n
    gy = np.sign(dy) * wy / n
    grad = np.zeros_like(d)
    grad[:-1, 1:] += gx
    grad[:-1, :-1] -= gx
    grad[1:, :-1] += gy
    grad[:-1, :-1] -= gy
    return loss, grad


def smooth_l1_loss(pred, gt):
    """Mean smooth-L1 (Huber, delta 1) over ground-truth-valid cells."""
    p = _arr(pred)
    g = _arr(gt)
    valid = _mask(gt, g.shape)
    n = int(valid.sum())
    if n == 0:
        raise ValueError("smooth-L1 loss needs at least one valid ground-truth cell")
    e = np.where(valid, g - p, 0.0)
    a = np.abs(e)
    quad = a < 1.0
    per = np.where(quad, 0.5 * e * e, a - 0.5)
    loss = float(np.sum(per[valid]) / n)
    grad = np.where(valid, -np.where(quad, e, np.sign(e)) / n, 0.0)
    return loss, grad


def base_loss(pred, gt, intensity, weights=BaseLossWeights()):
    le, ge = edge_smooth_loss(pred, intensity)
    lg, gg = smooth_l1_loss(pred, gt)
    return weights.w_e * le + weights.w_gt * lg, weights.w_e * ge + weights.w_gt * gg
