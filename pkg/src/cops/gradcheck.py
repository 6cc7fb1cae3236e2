"""Randomized finite-difference certification of every analytic gradient."""

import time
from dataclasses import dataclass

import numpy as np

from .contrastive import ContrastiveConfig, ProjectionHead, contrastive_loss
from .data import DepthGrid, IntensityImage, Scene
from .losses import SILossConfig, draw_si_sample, edge_smooth_loss, si_loss, smooth_l1_loss
from .mining import MarginConfig, mine
from .model import ModelSpec, TinyModel
from .numerics import DEFAULT_EPS, RngStream, finite_diff_gradient, grad_check
from .pseudo_class import assign_classes, build_discretization
from .train import TrainConfig, prepare, scene_loss_and_grad

RTOL = 1e-4
ATOL = 1e-8


@dataclass
class CheckResult:
    name: str
    reports: list
    seconds: float

    @property
    def passed(self):
        return bool(self.reports) and all(r.passed for r in self.reports)

    def worst(self):
        return max(self.reports, key=lambda r: r.max_rel_dev if r.max_abs_dev > ATOL else 0.0)


def _random_classes(rng, h, w, n_classes):
    depth = 0.25 + 0.5 * rng.integers(0, n_classes, (h, w)) + 0.1
    return assign_classes(DepthGrid.dense(depth, "pseudo"),
                          build_discretization(DepthGrid.dense(depth, "pseudo")))


def _mined_sets(rng, h, w, margin=MarginConfig(1, 3, 6)):
    classes = _random_classes(rng, h, w, 6)
    gt_mask = rng.uniform((h, w)) < 0.25
    return mine(classes, gt_mask, margin, rng)


def check_contrastive(rng, tau=0.1, eps=DEFAULT_EPS):
    f = rng.normal(0.0, 0.5, (8, 8, 4))
    sets = _mined_sets(rng, 8, 8)
    cfg = ContrastiveConfig(tau=tau)
    _, g = contrastive_loss(f, sets, cfg)
    num = finite_diff_gradient(lambda x: contrastive_loss(x, sets, cfg)[0], f, eps)
    return grad_check(g, num, RTOL, ATOL)


def check_projected_contrastive(rng, eps=DEFAULT_EPS):
    """Gradient through a normalizing projection head, w.r.t. its input features."""
    x = rng.normal(0.0, 1.0, (6, 6, 5))
    head = ProjectionHead.init(5, 4, rng)
    sets = _mined_sets(rng, 6, 6)
    cfg = ContrastiveConfig(tau=0.2)

    def loss(v):
        return contrastive_loss(head.forward(v)[0], sets, cfg)[0]

    u, cache = head.forward(x)
    _, gu = contrastive_loss(u, sets, cfg)
    gx, _, _ = head.backward(gu, cache)
    return grad_check(gx, finite_diff_gradient(loss, x, eps), RTOL, ATOL)


def check_si(rng, formulation, eps=DEFAULT_EPS):
    pred = np.exp(rng.normal(1.5, 0.4, (6, 6)))
    pseudo = DepthGrid.dense(np.exp(rng.normal(1.5, 0.4, (6, 6))), "pseudo")
    cfg = SILossConfig(lam=0.5, alpha=float(rng.uniform() * 0.6 + 0.4), formulation=formulation)
    sample = draw_si_sample(pred, pseudo, cfg.alpha, rng)
    _, g = si_loss(pred, pseudo, cfg, sample=sample)
    num = finite_diff_gradient(lambda p: si_loss(p, pseudo, cfg, sample=sample)[0], pred, eps)
    return grad_check(g, num, RTOL, ATOL)


def check_edge(rng, eps=DEFAULT_EPS):
    # keep every forward difference clear of the |.| kink
    while True:
        pred = rng.normal(5.0, 1.0, (6, 6))
        dx = np.diff(pred, axis=1)[:-1]
        dy = np.diff(pred, axis=0)[:, :-1]
        if min(np.abs(dx).min(), np.abs(dy).min()) > 1e-3:
            break
    img = IntensityImage(rng.uniform((6, 6)))
    _, g = edge_smooth_loss(pred, img)
    num = finite_diff_gradient(lambda p: edge_smooth_loss(p, img)[0], pred, eps)
    return grad_check(g, num, RTOL, ATOL)


def check_smooth_l1(rng, eps=DEFAULT_EPS):
    gt_depth = rng.uniform((6, 6)) * 10 + 1
    gt = DepthGrid(gt_depth, rng.uniform((6, 6)) < 0.7)
    pred = gt_depth + rng.normal(0.0, 1.5, (6, 6))
    _, g = smooth_l1_loss(pred, gt)
    num = finite_diff_gradient(lambda p: smooth_l1_loss(p, gt)[0], pred, eps)
    return grad_check(g, num, RTOL, ATOL)


TOY_MODEL = ModelSpec(hidden=(6,), emb_dim=4, proj_dim=3, depth_scale=5.0)


def toy_scene(rng, size=10):
    depth = 2.0 + 6.0 * rng.uniform((size, size))
    depth[: size // 2, : size // 2] = 3.0
    gt = DepthGrid(depth, rng.uniform((size, size)) < 0.5)
    sparse = DepthGrid(depth, gt.valid & (rng.uniform((size, size)) < 0.4), "sparse-input")
    if sparse.n_valid == 0:
        sparse = DepthGrid(depth, gt.valid, "sparse-input")
    pseudo = DepthGrid.dense(depth * 1.05 + rng.normal(0.0, 0.2, depth.shape).clip(-1, 1), "pseudo")
    img = IntensityImage(np.clip(2.0 / depth + 0.05 * rng.uniform((size, size)), 0, 1))
    return Scene(gt, sparse, pseudo, img, "synthetic")


def check_total(rng, epoch, eps=DEFAULT_EPS):
    """Full composed loss through the toy model w.r.t. every parameter."""
    scene = toy_scene(rng)
    cfg = TrainConfig(epochs=4, model=TOY_MODEL, margin=MarginConfig(1, 4, 5),
                      contrastive=ContrastiveConfig(tau=0.5, reduction="mean"),
                      si=SILossConfig(alpha=0.5))
    prep = prepare(scene, cfg)
    base = TinyModel.init(TOY_MODEL, rng)
    # a fresh depth head is almost constant, which parks the edge term on its
    # |.| kinks; perturb until every depth difference and every ground-truth
    # residual sits clear of a kink
    while True:
        model = base.with_flat(base.flat() + rng.normal(0.0, 0.05, base.flat().size))
        depth = model.forward(prep.feats, scene.shape)[0]
        gaps = np.concatenate([np.diff(depth, axis=1)[:-1].ravel(), np.diff(depth, axis=0)[:, :-1].ravel(),
                               np.abs(scene.gt.depth - depth)[scene.gt.valid] - 1.0])
        if np.abs(gaps).min() > 1e-3:
            break
    seed = int(rng.integers(0, 2**31))
    comp, grads = scene_loss_and_grad(model, prep, cfg, epoch, RngStream(seed))
    analytic = np.concatenate([grads[k].reshape(-1) for k in model.names()])

    def loss(vec):
        return scene_loss_and_grad(model.with_flat(vec), prep, cfg, epoch, RngStream(seed))[0]["total"]

    return grad_check(analytic, finite_diff_gradient(loss, model.flat(), eps), RTOL, ATOL)


CHECKS = {
    "contrastive": check_contrastive,
    "contrastive+projection": check_projected_contrastive,
    "si/conventional": lambda rng: check_si(rng, "conventional"),
    "si/as-printed": lambda rng: check_si(rng, "as-printed"),
    "edge-smooth": check_edge,
    "smooth-l1": check_smooth_l1,
    "total/si-stage": lambda rng: check_total(rng, epoch=1),
    "total/contr-stage": lambda rng: check_total(rng, epoch=4),
}


def run_suite(instances=20, seed=0, names=None):
    results = []
    root = RngStream(seed)
    for j, (name, fn) in enumerate(CHECKS.items()):
        if names and name not in names:
            continue
        t0 = time.perf_counter()
        reports = [fn(root.child(j, i)) for i in range(instances)]
        results.append(CheckResult(name, reports, time.perf_counter() - t0))
    return results
