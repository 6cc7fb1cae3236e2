"""Depth maps, intensity images, scene bundles and their on-disk formats.

Depth is stored in meters in memory with an explicit validity mask. On disk
depth maps are single-channel 16-bit PNGs with ``raw = depth / scale`` and raw
0 marking an invalid cell (KITTI convention, scale 1/256 m per unit).
"""

import json
import os
from dataclasses import dataclass, field, replace

import cv2
import numpy as np

DEFAULT_DEPTH_SCALE = 1.0 / 256.0
DEPTH_KINDS = ("ground-truth", "prediction", "pseudo", "sparse-input")
CONDITIONS = ("day", "night", "rain", "indoor-bright", "indoor-dark", "synthetic")
MANIFEST_VERSION = 1


class FormatError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class DepthGrid:
    depth: np.ndarray
    valid: np.ndarray
    kind: str = "ground-truth"

    def __post_init__(self):
        depth = np.asarray(self.depth, dtype=np.float64)
        valid = np.asarray(self.valid, dtype=bool)
        if depth.ndim != 2 or depth.shape != valid.shape:
            raise ValueError(f"depth {depth.shape} and mask {valid.shape} must be matching 2-D grids")
        if self.kind not in DEPTH_KINDS:
            raise ValueError(f"unknown depth kind {self.kind!r}")
        dv = depth[valid]
        if dv.size and not (np.all(np.isfinite(dv)) and np.all(dv > 0)):
            raise ValueError("valid cells must hold finite, positive depth")
        depth = np.where(valid, depth, 0.0)
        depth.flags.writeable = False
        valid = valid.copy()
        valid.flags.writeable = False
        object.__setattr__(self, "depth", depth)
        object.__setattr__(self, "valid", valid)

    @classmethod
    def dense(cls, depth, kind="ground-truth"):
        depth = np.asarray(depth, dtype=np.float64)
        return cls(depth, np.ones(depth.shape, dtype=bool), kind)

    @property
    def shape(self):
        return self.depth.shape

    @property
    def n_valid(self):
        return int(self.valid.sum())

    def with_kind(self, kind):
        return DepthGrid(self.depth, self.valid, kind)


@dataclass(frozen=True, eq=False)
class IntensityImage:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError("intensity must be a single-channel 2-D grid")
        if not np.all(np.isfinite(v)) or v.min(initial=0.0) < 0.0 or v.max(initial=0.0) > 1.0:
            raise ValueError("intensity values must lie in [0, 1]")
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def shape(self):
        return self.values.shape


@dataclass(frozen=True, eq=False)
class Scene:
    gt: DepthGrid
    sparse: DepthGrid
    pseudo: DepthGrid
    intensity: IntensityImage
    condition: str = "synthetic"
    name: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        shapes = {self.gt.shape, self.sparse.shape, self.pseudo.shape, self.intensity.shape}
        if len(shapes) != 1:
            raise ValueError(f"scene members disagree in shape: {sorted(shapes)}")
        if self.condition not in CONDITIONS:
            raise ValueError(f"unknown condition {self.condition!r}")

    @property
    def shape(self):
        return self.gt.shape


# ---------------------------------------------------------------- PNG I/O

def _imread(path, what):
    if not os.path.isfile(path):
        raise FileNotFoundError(f"cannot read {what} png {path}")
    return cv2.imread(os.fspath(path), cv2.IMREAD_UNCHANGED)


def load_depth_png16(path, scale=DEFAULT_DEPTH_SCALE, kind="ground-truth"):
    raw = _imread(path, "depth")
    if raw is None:
        raise FileNotFoundError(f"cannot read depth png {path}")
    if raw.ndim != 2:
        raise FormatError(f"{path}: expected single-channel PNG, got shape {raw.shape}")
    if raw.dtype != np.uint16:
        raise FormatError(f"{path}: expected 16-bit PNG, got {raw.dtype}")
    valid = raw > 0
    return DepthGrid(raw.astype(np.float64) * scale, valid, kind)


def depth_to_raw(depth, scale=DEFAULT_DEPTH_SCALE):
    d = np.rint(depth.depth[depth.valid] / scale)
    if d.size and d.max() > 65535:
        raise OverflowError(f"depth {d.max() * scale:.3f} m does not fit a 16-bit PNG at scale {scale}")
    raw = np.zeros(depth.shape, dtype=np.uint16)
    # valid cells never round down to the invalid sentinel
    raw[depth.valid] = np.clip(d, 1, 65535).astype(np.uint16)
    return raw


def save_depth_png16(depth, path, scale=DEFAULT_DEPTH_SCALE):
    raw = depth_to_raw(depth, scale)
    if not cv2.imwrite(os.fspath(path), raw):
        raise OSError(f"failed to write {path}")


def load_intensity_png(path):
    raw = _imread(path, "intensity")
    if raw is None:
        raise FileNotFoundError(f"cannot read intensity png {path}")
    if raw.ndim != 2:
        raise FormatError(f"{path}: intensity must be grayscale")
    if raw.dtype == np.uint8:
        return IntensityImage(raw.astype(np.float64) / 255.0)
    if raw.dtype == np.uint16:
        return IntensityImage(raw.astype(np.float64) / 65535.0)
    raise FormatError(f"{path}: unsupported intensity dtype {raw.dtype}")


def save_intensity_png(image, path):
    raw = np.rint(image.values * 65535.0).astype(np.uint16)
    if not cv2.imwrite(os.fspath(path), raw):
        raise OSError(f"failed to write {path}")


# ---------------------------------------------------------------- manifests

def write_manifest(path, entries, scale=DEFAULT_DEPTH_SCALE, extra=None):
    doc = {"version": MANIFEST_VERSION, "depth_scale": scale, "samples": list(entries)}
    if extra:
        doc.update(extra)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_manifest(path):
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("version") != MANIFEST_VERSION:
        raise FormatError(f"{path}: unsupported manifest version {doc.get('version')!r}")
    if not isinstance(doc.get("samples"), list):
        raise FormatError(f"{path}: manifest has no sample list")
    for s in doc["samples"]:
        missing = {"id", "gt", "sparse", "pseudo", "intensity", "condition"} - set(s)
        if missing:
            raise FormatError(f"{path}: sample {s.get('id', '?')} lacks {sorted(missing)}")
    return doc


def save_scene(scene, root, sample_id, split="train", scale=DEFAULT_DEPTH_SCALE):
    """Write one scene's PNGs under ``root``; returns its manifest entry."""
    entry = {"id": sample_id, "split": split, "condition": scene.condition}
    for key, grid in (("gt", scene.gt), ("sparse", scene.sparse), ("pseudo", scene.pseudo)):
        rel = os.path.join(key, f"{sample_id}.png")
        os.makedirs(os.path.join(root, key), exist_ok=True)
        save_depth_png16(grid, os.path.join(root, rel), scale)
        entry[key] = rel
    rel = os.path.join("intensity", f"{sample_id}.png")
    os.makedirs(os.path.join(root, "intensity"), exist_ok=True)
    save_intensity_png(scene.intensity, os.path.join(root, rel))
    entry["intensity"] = rel
    return entry


def load_scenes(manifest_path, split=None):
    doc = read_manifest(manifest_path)
    root = os.path.dirname(os.path.abspath(manifest_path))
    scale = float(doc.get("depth_scale", DEFAULT_DEPTH_SCALE))
    scenes = []
    for s in doc["samples"]:
        if split is not None and s.get("split") != split:
            continue
        p = lambda key: os.path.join(root, s[key])  # noqa: E731
        scenes.append(Scene(
            gt=load_depth_png16(p("gt"), scale, "ground-truth"),
            sparse=load_depth_png16(p("sparse"), scale, "sparse-input"),
            pseudo=load_depth_png16(p("pseudo"), scale, "pseudo"),
            intensity=load_intensity_png(p("intensity")),
            condition=s["condition"],
            name=s["id"],
        ))
    return scenes


# ---------------------------------------------------------------- protocol

def sample_sparse(gt, count, rng):
    """Uniformly keep ``count`` of the valid cells of ``gt``."""
    idx = np.flatnonzero(gt.valid)
    if idx.size < count:
        raise ValueError(f"requested {count} sparse points but only {idx.size} valid cells available")
    keep = idx[rng.choice(idx.size, count)]
    valid = np.zeros(gt.valid.size, dtype=bool)
    valid[keep] = True
    return DepthGrid(gt.depth, valid.reshape(gt.shape), "sparse-input")


def crop_offsets(height, width, h, w):
    if h > height or w > width:
        raise ValueError(f"crop {h}x{w} larger than source {height}x{width}")
    return (height - h) // 2, (width - w) // 2


def _crop_grid(g, top, left, h, w):
    return DepthGrid(g.depth[top:top + h, left:left + w], g.valid[top:top + h, left:left + w], g.kind)


def center_crop(scene, h, w):
    top, left = crop_offsets(*scene.shape, h, w)
    return replace(
        scene,
        gt=_crop_grid(scene.gt, top, left, h, w),
        sparse=_crop_grid(scene.sparse, top, left, h, w),
        pseudo=_crop_grid(scene.pseudo, top, left, h, w),
        intensity=IntensityImage(scene.intensity.values[top:top + h, left:left + w]),
    )
