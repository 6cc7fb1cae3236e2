"""A small per-pixel MLP depth-completion model with manual backpropagation.

Each pixel is described by handcrafted features (nearest sparse depth,
distance to that sample, intensity and its gradients, image coordinates).
A tanh MLP feeds two heads: a positive depth output

    depth = softplus(depth_scale * (h Wd + x Ws + bd))

where the linear skip ``x Ws`` on the raw features lets the network learn to
pass the nearest-sample fill through, and an embedding vector that the
projection head maps into the contrastive space.
"""

import hashlib
import json
from dataclasses import asdict, dataclass

import numpy as np
from scipy import ndimage

from .contrastive import ProjectionHead
from .data import DepthGrid

N_INPUTS = 7
DIST_SCALE = 8.0      # pixels
GRAD_SCALE = 20.0
CHECKPOINT_FORMAT = "cops-tinymodel"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelSpec:
    hidden: tuple = (32, 32)
    emb_dim: int = 16
    proj_dim: int = 32
    depth_scale: float = 10.0
    normalize: bool = True

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if not self.hidden or min(self.hidden) < 1:
            raise ValueError("need at least one hidden layer of positive width")
        if self.proj_dim < 2:
            raise ValueError("projection dimension must be >= 2")


def scene_features(scene, depth_scale=10.0):
    """(H*W, 7) input features and the nearest-sample depth fill (H, W)."""
    sparse = scene.sparse
    if sparse.n_valid == 0:
        raise ValueError("scene has no valid sparse depth")
    dist, (iy, ix) = ndimage.distance_transform_edt(~sparse.valid, return_indices=True)
    fill = sparse.depth[iy, ix]
    h, w = sparse.shape
    img = scene.intensity.values
    gy, gx = np.gradient(img)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    feats = np.stack([
        fill / depth_scale,
        dist / DIST_SCALE,
        2.0 * img - 1.0,
        GRAD_SCALE * gx,
        GRAD_SCALE * gy,
        2.0 * xx / max(w - 1, 1) - 1.0,
        2.0 * yy / max(h - 1, 1) - 1.0,
    ], axis=-1).reshape(-1, N_INPUTS)
    return feats, fill


def softplus(x):
    return np.logaddexp(0.0, x)


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


class TinyModel:
    def __init__(self, spec, params):
        self.spec = spec
        self.params = {k: np.asarray(v, dtype=np.float64) for k, v in params.items()}

    @classmethod
    def init(cls, spec, rng):
        params = {}
        fan_in = N_INPUTS
        for i, width in enumerate(spec.hidden):
            params[f"W{i}"] = rng.normal(0.0, 1.0 / np.sqrt(fan_in), (fan_in, width))
            params[f"b{i}"] = np.zeros(width)
            fan_in = width
        params["Wd"] = rng.normal(0.0, 0.01 / np.sqrt(fan_in), (fan_in, 1))
        params["Ws"] = np.zeros((N_INPUTS, 1))
        params["bd"] = np.zeros(1)
        params["We"] = rng.normal(0.0, 1.0 / np.sqrt(fan_in), (fan_in, spec.emb_dim))
        params["be"] = np.zeros(spec.emb_dim)
        params["Wp"] = rng.normal(0.0, 1.0 / np.sqrt(spec.emb_dim), (spec.emb_dim, spec.proj_dim))
        params["bp"] = np.zeros(spec.proj_dim)
        return cls(spec, params)

    # ---- parameter vector helpers (finite differences, optimizer)
    def names(self):
        return list(self.params)

    def flat(self):
        return np.concatenate([self.params[k].reshape(-1) for k in self.names()])

    def with_flat(self, vec):
        out, i = {}, 0
        for k in self.names():
            n = self.params[k].size
            out[k] = np.asarray(vec[i:i + n]).reshape(self.params[k].shape)
            i += n
        return TinyModel(self.spec, out)

    def head(self):
        return ProjectionHead(self.params["Wp"], self.params["bp"], self.spec.normalize)

    # ---- forward / backward
    def forward(self, feats, shape):
        """Depth ``shape``, embeddings (H*W, emb_dim) and a backward cache."""
        acts = [feats]
        h = feats
        for i in range(len(self.spec.hidden)):
            h = np.tanh(h @ self.params[f"W{i}"] + self.params[f"b{i}"])
            acts.append(h)
        z = (h @ self.params["Wd"] + feats @ self.params["Ws"] + self.params["bd"])[:, 0]
        pre = self.spec.depth_scale * z
        depth = softplus(pre).reshape(shape)
        emb = h @ self.params["We"] + self.params["be"]
        return depth, emb, {"acts": acts, "pre": pre}

    def backward(self, cache, grad_depth, grad_emb=None):
        acts = cache["acts"]
        h = acts[-1]
        g_z = grad_depth.reshape(-1) * sigmoid(cache["pre"]) * self.spec.depth_scale
        grads = {
            "Wd": h.T @ g_z[:, None],
            "Ws": acts[0].T @ g_z[:, None],
            "bd": np.array([g_z.sum()]),
        }
        g_h = g_z[:, None] @ self.params["Wd"].T
        if grad_emb is not None:
            grads["We"] = h.T @ grad_emb
            grads["be"] = grad_emb.sum(axis=0)
            g_h = g_h + grad_emb @ self.params["We"].T
        else:
            grads["We"] = np.zeros_like(self.params["We"])
            grads["be"] = np.zeros_like(self.params["be"])
        for i in reversed(range(len(self.spec.hidden))):
            g_pre = g_h * (1.0 - acts[i + 1] ** 2)
            grads[f"W{i}"] = acts[i].T @ g_pre
            grads[f"b{i}"] = g_pre.sum(axis=0)
            g_h = g_pre @ self.params[f"W{i}"].T
        grads.setdefault("Wp", np.zeros_like(self.params["Wp"]))
        grads.setdefault("bp", np.zeros_like(self.params["bp"]))
        return {k: grads[k] for k in self.names()}

    def predict(self, scene):
        feats, _ = scene_features(scene, self.spec.depth_scale)
        depth, emb, _ = self.forward(feats, scene.shape)
        h, w = scene.shape
        return DepthGrid.dense(depth, "prediction"), emb.reshape(h, w, -1)


def predict(model, scene):
    return model.predict(scene)


# ---------------------------------------------------------------- checkpoints

def config_hash(config_dict):
    blob = json.dumps(config_dict, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def save_model(model, path, config_dict=None):
    config_dict = config_dict or {}
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "model_spec": asdict(model.spec),
        "config": config_dict,
        "config_hash": config_hash(config_dict),
        "params": {k: {"shape": list(v.shape), "data": v.reshape(-1).tolist()}
                   for k, v in model.params.items()},
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_model(path):
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != CHECKPOINT_FORMAT or doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: not a version-{CHECKPOINT_VERSION} {CHECKPOINT_FORMAT} checkpoint")
    if config_hash(doc["config"]) != doc["config_hash"]:
        raise ValueError(f"{path}: config hash mismatch")
    spec = ModelSpec(**{**doc["model_spec"], "hidden": tuple(doc["model_spec"]["hidden"])})
    params = {k: np.asarray(v["data"], dtype=np.float64).reshape(v["shape"])
              for k, v in doc["params"].items()}
    return TinyModel(spec, params), doc["config"]
