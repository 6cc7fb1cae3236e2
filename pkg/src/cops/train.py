"""Deterministic mini-batch training of the tiny model under the staged loss."""

import logging
import math
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .contrastive import ContrastiveConfig, contrastive_loss
from .losses import BaseLossWeights, SILossConfig, draw_si_sample, edge_smooth_loss, si_loss, smooth_l1_loss
from .mining import MarginConfig, mine
from .model import ModelSpec, TinyModel, scene_features
from .numerics import RngStream
from .pseudo_class import assign_classes, build_discretization
from .schedule import beta

log = logging.getLogger(__name__)

ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

HISTORY_FIELDS = ("epoch", "beta", "total", "base", "gt", "edge", "si", "contr")


class TrainingDiverged(FloatingPointError):
    def __init__(self, epoch, step, what):
        super().__init__(f"non-finite {what} at epoch {epoch}, step {step}")
        self.epoch = epoch
        self.step = step


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 40
    lr: float = 0.01
    optimizer: str = "adam"
    momentum: float = 0.9          # first-moment decay under adam
    batch: int = 2
    seed: int = 0
    clip: float = 5.0
    use_contr: bool = True
    use_si: bool = True
    w_pseudo: float = 0.2
    class_width: float = 0.5
    margin: MarginConfig = MarginConfig()
    contrastive: ContrastiveConfig = ContrastiveConfig(tau=0.1, reduction="mean")
    si: SILossConfig = SILossConfig()
    weights: BaseLossWeights = BaseLossWeights()
    model: ModelSpec = ModelSpec()

    def __post_init__(self):
        if self.epochs < 2:
            raise ValueError("need at least 2 epochs for the staged schedule")
        if self.lr <= 0 or self.batch < 1 or self.w_pseudo < 0:
            raise ValueError("lr and batch must be positive, w_pseudo non-negative")
        if self.optimizer not in ("adam", "momentum"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")

    def to_dict(self):
        d = asdict(self)
        if math.isinf(d["margin"]["psi_max"]):
            d["margin"]["psi_max"] = None
        d["model"]["hidden"] = list(d["model"]["hidden"])
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        sub = {"margin": MarginConfig, "contrastive": ContrastiveConfig, "si": SILossConfig,
               "weights": BaseLossWeights, "model": ModelSpec}
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        for key, typ in sub.items():
            if key in d and isinstance(d[key], dict):
                v = dict(d[key])
                if key == "margin" and v.get("psi_max", 0) is None:
                    v["psi_max"] = math.inf
                if key == "model" and "hidden" in v:
                    v["hidden"] = tuple(v["hidden"])
                d[key] = typ(**v)
        return cls(**d)

    def with_param(self, name, value):
        """Copy with one sweepable hyper-parameter changed."""
        if name == "n":
            return replace(self, margin=replace(self.margin, n=int(value)))
        if name == "psi_max":
            return replace(self, margin=replace(self.margin, psi_max=math.inf if value is None else value))
        if name == "alpha":
            return replace(self, si=replace(self.si, alpha=float(value)))
        if name == "tau":
            return replace(self, contrastive=replace(self.contrastive, tau=float(value)))
        if name == "w_pseudo":
            return replace(self, w_pseudo=float(value))
        raise ValueError(f"unknown sweep parameter {name!r}")


def active_terms(cfg, t):
    """(si_active, contr_active) at epoch t. The staged switch applies when
    both terms are enabled; a single enabled term runs for the whole schedule."""
    if cfg.w_pseudo == 0:
        return False, False
    if cfg.use_si and cfg.use_contr:
        b = beta(t, cfg.epochs)
        return b == 1, b == 0
    return cfg.use_si, cfg.use_contr


@dataclass
class PreparedScene:
    scene: object
    feats: np.ndarray
    fill: np.ndarray
    classes: object = None
    meta: dict = field(default_factory=dict)


def prepare(scene, cfg):
    feats, fill = scene_features(scene, cfg.model.depth_scale)
    classes = None
    if cfg.use_contr:
        disc = build_discretization(scene.pseudo, cfg.class_width)
        classes = assign_classes(scene.pseudo, disc)
    return PreparedScene(scene, feats, fill, classes)


def scene_loss_and_grad(model, prep, cfg, t, rng):
    """Loss components and parameter gradients of the total loss for one scene.

    ``rng`` drives the scale-invariant sample and the contrastive mining, so
    re-running with an identically seeded stream evaluates the same objective.
    """
    scene = prep.scene
    depth, emb, cache = model.forward(prep.feats, prep.fill.shape)
    if not np.all(np.isfinite(depth)):
        raise FloatingPointError("non-finite depth prediction")
    l_edge, g_edge = edge_smooth_loss(depth, scene.intensity)
    l_gt, g_gt = smooth_l1_loss(depth, scene.gt)
    w = cfg.weights
    base = w.w_e * l_edge + w.w_gt * l_gt
    g_depth = w.w_e * g_edge + w.w_gt * g_gt
    comp = {"base": base, "gt": l_gt, "edge": l_edge, "si": None, "contr": None}
    g_emb = None
    proj_grads = None

    si_on, contr_on = active_terms(cfg, t)
    pseudo = 0.0
    if si_on:
        sample = draw_si_sample(depth, scene.pseudo, cfg.si.alpha, rng.child(1))
        l_si, g_si = si_loss(depth, scene.pseudo, cfg.si, sample=sample)
        comp["si"] = l_si
        pseudo = l_si
        g_depth = g_depth + cfg.w_pseudo * g_si
    if contr_on:
        sets = mine(prep.classes, scene.gt.valid, cfg.margin, rng.child(2))
        head = model.head()
        u, pcache = head.forward(emb)
        l_c, g_u = contrastive_loss(u, sets, cfg.contrastive)
        g_emb, g_wp, g_bp = head.backward(cfg.w_pseudo * g_u, pcache)
        proj_grads = (g_wp, g_bp)
        comp["contr"] = l_c
        pseudo = l_c
    comp["total"] = base + cfg.w_pseudo * pseudo
    grads = model.backward(cache, g_depth, g_emb)
    if proj_grads is not None:
        grads["Wp"], grads["bp"] = proj_grads
    return comp, grads


def _mean_or_none(values):
    vals = [v for v in values if v is not None]
    return float(np.mean(vals)) if vals else None


def train(scenes, cfg, model=None, progress=None):
    """Returns (model, history); history holds one dict per epoch."""
    if not scenes:
        raise ValueError("need at least one training scene")
    root = RngStream(cfg.seed)
    if model is None:
        model = TinyModel.init(cfg.model, root.child(0))
    preps = [prepare(s, cfg) for s in scenes]
    names = model.names()
    params = {k: v.copy() for k, v in model.params.items()}
    velocity = {k: np.zeros_like(v) for k, v in params.items()}
    second = {k: np.zeros_like(v) for k, v in params.items()}
    updates = 0
    history = []
    n = len(preps)
    for t in range(1, cfg.epochs + 1):
        order = root.child(1, t).gen.permutation(n)
        records = []
        for step, lo in enumerate(range(0, n, cfg.batch)):
            batch = order[lo:lo + cfg.batch]
            current = TinyModel(cfg.model, params)
            acc = {k: np.zeros_like(v) for k, v in params.items()}
            for i in batch:
                try:
                    comp, grads = scene_loss_and_grad(current, preps[i], cfg, t, root.child(2, t, step, int(i)))
                except FloatingPointError as exc:
                    raise TrainingDiverged(t, step, "prediction") from exc
                if not math.isfinite(comp["total"]):
                    raise TrainingDiverged(t, step, "loss")
                records.append(comp)
                for k in names:
                    acc[k] += grads[k]
            gnorm = math.sqrt(sum(float(np.sum(acc[k] ** 2)) for k in names)) / len(batch)
            if not math.isfinite(gnorm):
                raise TrainingDiverged(t, step, "gradient")
            scale = 1.0 / len(batch)
            if cfg.clip and gnorm > cfg.clip:
                scale *= cfg.clip / gnorm
            updates += 1
            for k in names:
                g = scale * acc[k]
                if cfg.optimizer == "adam":
                    velocity[k] = cfg.momentum * velocity[k] + (1 - cfg.momentum) * g
                    second[k] = ADAM_BETA2 * second[k] + (1 - ADAM_BETA2) * g * g
                    m_hat = velocity[k] / (1 - cfg.momentum ** updates)
                    v_hat = second[k] / (1 - ADAM_BETA2 ** updates)
                    params[k] = params[k] - cfg.lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
                else:
                    velocity[k] = cfg.momentum * velocity[k] - cfg.lr * g
                    params[k] = params[k] + velocity[k]
        row = {"epoch": t, "beta": beta(t, cfg.epochs)}
        for key in ("total", "base", "gt", "edge", "si", "contr"):
            row[key] = _mean_or_none([r[key] for r in records])
        history.append(row)
        if progress:
            progress(row)
        log.debug("epoch %d: %s", t, row)
    return TinyModel(cfg.model, params), history


def history_csv(history):
    lines = [",".join(HISTORY_FIELDS)]
    for row in history:
        cells = []
        for key in HISTORY_FIELDS:
            v = row[key]
            cells.append("" if v is None else (str(v) if isinstance(v, int) else repr(float(v))))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"
