"""Synthetic scene generation: structured ground truth, thermal-like intensity,
LiDAR-style sparsification with a rain dropout swath, and a scale-drifted
dense pseudo-depth oracle.
"""

import logging
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .data import DepthGrid, IntensityImage, Scene, sample_sparse
from .numerics import RngStream

log = logging.getLogger(__name__)

PSEUDO_FLOOR = 1e-3


class ClampWarning(UserWarning):
    pass


@dataclass(frozen=True)
class SceneSpec:
    height: int = 64
    width: int = 64
    object_count: int = 4
    depth_range: tuple = (2.0, 20.0)
    layout_seed: int = 0
    background_slope: float = 1.0   # 0 gives a flat background at the far limit
    object_depths: tuple = None     # override the random per-object depths
    contrast: float = 0.7
    intensity_noise: float = 0.0
    intensity_blur: float = 1.0

    def __post_init__(self):
        lo, hi = self.depth_range
        if not 0 < lo < hi:
            raise ValueError(f"bad depth range {self.depth_range}")
        if self.object_count < 1:
            raise ValueError("object_count must be >= 1")
        if self.object_depths is not None and len(self.object_depths) != self.object_count:
            raise ValueError("object_depths must list one depth per object")


@dataclass(frozen=True)
class LidarSpec:
    scanlines: int = 32
    keep_prob: float = 1.0
    swath: float = 0.0

    def __post_init__(self):
        if self.scanlines < 1:
            raise ValueError("scanlines must be >= 1")
        if not 0 < self.keep_prob <= 1:
            raise ValueError("keep_prob must lie in (0, 1]")
        if not 0 <= self.swath < 1:
            raise ValueError("swath must lie in [0, 1)")


@dataclass(frozen=True)
class PseudoOracleSpec:
    scale: float = 1.05
    shift: float = 0.3
    noise: float = 0.15
    blur_radius: int = 1

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError("oracle scale must be positive")
        if self.noise < 0 or self.blur_radius < 0:
            raise ValueError("noise and blur radius must be non-negative")


def _scene_rng(spec, rng):
    return rng if rng is not None else RngStream(spec.layout_seed)


def gen_gt(spec, rng=None):
    rng = _scene_rng(spec, rng)
    h, w = spec.height, spec.width
    lo, hi = spec.depth_range
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    # ground-plane style background: far at the top row, nearer further down
    t = yy / max(h - 1, 1)
    depth = hi - spec.background_slope * 0.5 * (hi - lo) * t
    depth = depth.copy()

    if spec.object_depths is not None:
        depths = np.asarray(spec.object_depths, dtype=np.float64)
    else:
        depths = lo + (hi - lo) * 0.85 * rng.uniform(spec.object_count)
    # paint far to near so nearer objects occlude
    for k in np.argsort(-depths, kind="stable"):
        cy, cx = rng.uniform(2) * [h, w]
        ry, rx = (0.08 + 0.17 * rng.uniform(2)) * [h, w]
        if rng.uniform() < 0.5:
            mask = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
        else:
            mask = (np.abs(yy - cy) <= ry) & (np.abs(xx - cx) <= rx)
        depth[mask] = depths[k]
    return DepthGrid.dense(np.clip(depth, lo, hi), "ground-truth")


def gen_intensity(gt, spec, rng=None):
    rng = _scene_rng(spec, rng)
    lo = spec.depth_range[0]
    inv = lo / gt.depth                       # in (0, 1]
    img = 0.5 + spec.contrast * (inv - 0.5)
    if spec.intensity_blur > 0:
        img = ndimage.gaussian_filter(img, spec.intensity_blur, mode="nearest")
    if spec.intensity_noise > 0:
        img = img + rng.normal(0.0, spec.intensity_noise, img.shape)
    return IntensityImage(np.clip(img, 0.0, 1.0))


def gen_scene(spec, rng=None, condition="synthetic"):
    """Dense ground truth plus intensity; sparse and pseudo are left as copies
    of the ground truth for the caller to replace."""
    rng = _scene_rng(spec, rng)
    gt = gen_gt(spec, rng)
    intensity = gen_intensity(gt, spec, rng)
    return Scene(gt=gt, sparse=gt.with_kind("sparse-input"), pseudo=gt.with_kind("pseudo"),
                 intensity=intensity, condition=condition)


def scanline_rows(height, count):
    count = min(count, height)
    return np.unique(np.rint(np.linspace(0, height - 1, count)).astype(int))


def sparsify(gt, spec, rng, return_swath=False):
    h, w = gt.shape
    valid = np.zeros((h, w), dtype=bool)
    rows = scanline_rows(h, spec.scanlines)
    valid[rows] = rng.uniform((rows.size, w)) < spec.keep_prob
    band = (0, 0)
    width = int(round(spec.swath * w))
    if width > 0:
        start = int(rng.integers(0, w - width + 1))
        valid[:, start:start + width] = False
        band = (start, start + width)
    valid &= gt.valid
    if not valid.any():
        raise ValueError("sparsification left no valid cells; raise scanlines/keep_prob or shrink the swath")
    out = DepthGrid(gt.depth, valid, "sparse-input")
    return (out, band) if return_swath else out


def pseudo_oracle(gt, spec, rng):
    d = spec.scale * gt.depth + spec.shift
    if spec.blur_radius > 0:
        d = ndimage.uniform_filter(d, size=2 * spec.blur_radius + 1, mode="nearest")
    if spec.noise > 0:
        d = d + rng.normal(0.0, spec.noise, d.shape)
    clamped = d < PSEUDO_FLOOR
    frac = clamped.mean()
    if frac > 0.01:
        msg = f"pseudo oracle clamped {frac:.1%} of cells to {PSEUDO_FLOOR} m"
        log.warning(msg)
        warnings.warn(msg, ClampWarning, stacklevel=2)
    d = np.where(clamped, PSEUDO_FLOOR, d)
    return DepthGrid.dense(d, "pseudo")


# ---------------------------------------------------------------- standard suite

@dataclass(frozen=True)
class SuiteSpec:
    n_train: int = 64
    n_test: int = 16
    size: int = 64
    objects: tuple = (3, 6)
    depth_range: tuple = (2.0, 20.0)
    gt_lidar: LidarSpec = LidarSpec(scanlines=32, keep_prob=0.9, swath=0.0)
    rain_swath: float = 0.35
    sparse_count: int = 200
    oracle: PseudoOracleSpec = PseudoOracleSpec()


CONDITION_CYCLE = ("day", "night", "rain")


def make_scene(index, condition, suite, rng, dense_gt=False):
    """One suite scene. Training scenes carry semi-dense LiDAR ground truth;
    ``dense_gt`` keeps the full synthetic truth for evaluation."""
    night = condition == "night"
    spec = SceneSpec(
        height=suite.size, width=suite.size,
        object_count=int(rng.integers(suite.objects[0], suite.objects[1] + 1)),
        depth_range=suite.depth_range, layout_seed=index,
        contrast=0.35 if night else 0.7,
        intensity_noise=0.04 if night else 0.01,
        intensity_blur=1.5 if night else 1.0,
    )
    base = gen_scene(spec, rng, condition)
    swath = suite.rain_swath if condition == "rain" else 0.0
    lidar = LidarSpec(suite.gt_lidar.scanlines, suite.gt_lidar.keep_prob, swath)
    semi = sparsify(base.gt, lidar, rng).with_kind("ground-truth")
    sparse = sample_sparse(semi, min(suite.sparse_count, semi.n_valid), rng)
    pseudo = pseudo_oracle(base.gt, suite.oracle, rng)
    gt = base.gt if dense_gt else semi
    return Scene(gt=gt, sparse=sparse, pseudo=pseudo, intensity=base.intensity,
                 condition=condition, name=f"s{index:04d}")


def standard_suite(seed, suite=SuiteSpec()):
    """(train, test) scene lists; fully determined by ``seed``."""
    root = RngStream(seed).child(0x5EED)
    train = [make_scene(i, CONDITION_CYCLE[i % 3], suite, root.child(1, i))
             for i in range(suite.n_train)]
    test = [make_scene(suite.n_train + i, CONDITION_CYCLE[i % 3], suite, root.child(2, i), dense_gt=True)
            for i in range(suite.n_test)]
    return train, test
