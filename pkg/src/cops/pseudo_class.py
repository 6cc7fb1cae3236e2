"""Pseudo-class discretization of a dense pseudo-depth map.

The depth range [d_min, d_max] is cut into M half-open intervals of width
delta_d; a pixel gets class i when d_i <= D < d_{i+1}. With d_min = 0 and
M = 2 * d_max the interval width is 0.5 m.
"""

import math
from dataclasses import dataclass

import numpy as np

DEFAULT_WIDTH = 0.5


@dataclass(frozen=True)
class DiscretizationConfig:
    d_min: float
    d_max: float
    M: int

    def __post_init__(self):
        if not (self.d_max > self.d_min >= 0):
            raise ValueError(f"need d_max > d_min >= 0, got [{self.d_min}, {self.d_max}]")
        if self.M < 1:
            raise ValueError("M must be >= 1")

    @property
    def delta_d(self):
        return (self.d_max - self.d_min) / self.M

    def boundaries(self):
        return self.d_min + np.arange(self.M + 1) * self.delta_d


@dataclass(frozen=True, eq=False)
class PseudoClassMap:
    classes: np.ndarray
    config: DiscretizationConfig


def build_discretization(pseudo, width=DEFAULT_WIDTH):
    """d_min = 0, d_max = max valid pseudo depth, M = ceil(d_max / width)."""
    vals = pseudo.depth[pseudo.valid]
    vals = vals[vals > 0]
    if vals.size == 0:
        raise ValueError("pseudo-depth map has no valid positive cell")
    d_max = float(vals.max())
    M = max(1, math.ceil(d_max / width))
    return DiscretizationConfig(0.0, d_max, M)


def assign_classes(pseudo, config):
    d = pseudo.depth if hasattr(pseudo, "depth") else np.asarray(pseudo, dtype=np.float64)
    valid = pseudo.valid if hasattr(pseudo, "valid") else np.ones(d.shape, dtype=bool)
    bad = valid & ~(np.isfinite(d) & (d >= config.d_min))
    if bad.any():
        cell = tuple(int(i) for i in np.argwhere(bad)[0])
        raise ValueError(f"pseudo depth {d[cell]!r} at cell {cell} is below d_min or non-finite")
    cls = np.floor((d - config.d_min) / config.delta_d)
    # floor can land one interval off at exact boundaries; correct against d_i
    b = config.boundaries()
    cls = np.clip(cls, 0, config.M - 1).astype(np.int64)
    cls = np.where(d < b[cls], cls - 1, cls)
    cls = np.where((cls + 1 < config.M) & (d >= b[np.minimum(cls + 1, config.M)]), cls + 1, cls)
    cls = np.clip(cls, 0, config.M - 1)
    cls = np.where(valid, cls, -1)
    return PseudoClassMap(cls, config)


def assign_classes_scan(depths, config):
    """Literal interval scan: the first i with d_i <= D < d_{i+1}; D = d_max
    falls into the top class."""
    b = config.boundaries()
    out = np.empty(len(depths), dtype=np.int64)
    for j, x in enumerate(depths):
        cls = config.M - 1
        for i in range(config.M):
            if b[i] <= x < b[i + 1]:
                cls = i
                break
        out[j] = cls
    return out
