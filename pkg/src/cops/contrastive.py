"""Per-pixel projection head and the margin-sampled pixel contrastive loss.

For every query q and each positive k+ the loss term is

    -log( exp(s(q,k+)/tau) / (exp(s(q,k+)/tau) + sum_{k- in N(q)} exp(s(q,k-)/tau)) )

averaged over the positives of q and summed over queries, with
s(q,k) = f_q . f_k. Every log-sum-exp is evaluated in shifted form.
"""

from dataclasses import dataclass

import numpy as np

from .numerics import normalize_features

_CHUNK = 1024


@dataclass
class ProjectionHead:
    weight: np.ndarray          # (C_in, C_out)
    bias: np.ndarray            # (C_out,)
    normalize: bool = True

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[1],):
            raise ValueError("projection weight must be (C_in, C_out) with a matching bias")
        if self.weight.shape[1] < 2:
            raise ValueError("projection output needs at least 2 channels")
        if not (np.all(np.isfinite(self.weight)) and np.all(np.isfinite(self.bias))):
            raise ValueError("projection parameters must be finite")

    @classmethod
    def init(cls, c_in, c_out, rng, normalize=True):
        w = rng.normal(0.0, 1.0 / np.sqrt(c_in), (c_in, c_out))
        return cls(w, np.zeros(c_out), normalize)

    def forward(self, x):
        """Returns (output, cache). ``x`` may be (..., C_in)."""
        shape = x.shape[:-1]
        xf = np.asarray(x, dtype=np.float64).reshape(-1, self.weight.shape[0])
        z = xf @ self.weight + self.bias
        cache = {"x": xf, "shape": shape, "zero": 0}
        if not self.normalize:
            return z.reshape(*shape, -1), cache
        norm = np.linalg.norm(z, axis=1, keepdims=True)
        u, zero = normalize_features(z, return_zero_count=True)
        cache.update(u=u, norm=norm, zero=zero)
        return u.reshape(*shape, -1), cache

    def backward(self, grad_out, cache):
        """Returns (grad_x, grad_weight, grad_bias)."""
        g = np.asarray(grad_out, dtype=np.float64).reshape(cache["x"].shape[0], -1)
        if self.normalize:
            u, norm = cache["u"], cache["norm"]
            # zero-norm rows were replaced by a constant; no gradient flows
            scale = np.where(norm == 0.0, 0.0, 1.0 / np.where(norm == 0.0, 1.0, norm))
            g = (g - u * np.sum(u * g, axis=1, keepdims=True)) * scale
        gw = cache["x"].T @ g
        gb = g.sum(axis=0)
        gx = g @ self.weight.T
        return gx.reshape(*cache["shape"], -1), gw, gb


def project(features, head):
    return head.forward(features)[0]


def similarity(f, q, k):
    flat = f.reshape(-1, f.shape[-1])
    return float(flat[q] @ flat[k])


@dataclass(frozen=True)
class ContrastiveConfig:
    tau: float = 0.1
    reduction: str = "sum"      # "sum" over queries, or "mean"

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("temperature must be positive")
        if self.reduction not in ("sum", "mean"):
            raise ValueError(f"unknown reduction {self.reduction!r}")


def _count_matrix(lists, ref, n_pix):
    """Dense (len(lists), len(ref)) multiplicity matrix of pixel lists."""
    col = np.full(n_pix, -1, dtype=np.int64)
    col[ref] = np.arange(ref.size)
    rows = np.repeat(np.arange(len(lists)), [len(x) for x in lists])
    cols = col[np.concatenate(lists)] if rows.size else np.empty(0, np.int64)
    flat = np.bincount(rows * ref.size + cols, minlength=len(lists) * ref.size)
    return flat.reshape(len(lists), ref.size)


def _masks(sets, n_pix):
    meta = sets.meta or {}
    if "pos_mask" in meta:
        return meta["ref"], meta["pos_mask"], meta["neg_mask"]
    parts = [np.asarray(x, dtype=np.int64) for x in (*sets.positives, *sets.negatives)]
    ref = np.unique(np.concatenate(parts)) if parts else np.empty(0, np.int64)
    return (ref,
            _count_matrix([np.asarray(p, dtype=np.int64) for p in sets.positives], ref, n_pix),
            _count_matrix([np.asarray(n, dtype=np.int64) for n in sets.negatives], ref, n_pix))


def _block(fq, fr, pc, nc, tau, queries, ref):
    """Loss per query row and d(loss)/d(similarity) for one block of queries.

    ``pc``/``nc`` hold positive/negative multiplicities (bool or counts).
    Positives are sparse, so their terms are evaluated on index lists.
    """
    with np.errstate(invalid="ignore", over="ignore"):
        s = fq @ fr.T
    if not np.all(np.isfinite(s)):
        r, c = np.argwhere(~np.isfinite(s))[0]
        raise FloatingPointError(f"non-finite similarity for pair (q={queries[r]}, k={ref[c]})")
    logit = s / tau
    rows = logit.shape[0]
    neg = nc > 0
    has_neg = neg.any(axis=1)
    m_neg = np.where(neg, logit, -np.inf).max(axis=1, initial=-np.inf)
    m_safe = np.where(has_neg, m_neg, 0.0)
    e_neg = np.exp(np.minimum(logit - m_safe[:, None], 0.0))
    e_neg *= nc
    nb = e_neg.sum(axis=1)

    pr, pk = np.nonzero(pc)
    cnt = pc[pr, pk].astype(np.float64)
    lp = logit[pr, pk]
    mq = m_neg[pr]
    # shift per (q, k+) so one of the two summands is exactly 1
    c = np.maximum(lp, mq)
    lse = c + np.log(np.exp(lp - c) + np.exp(mq - c) * nb[pr])
    n_pos = np.bincount(pr, weights=cnt, minlength=rows)
    w = 1.0 / n_pos
    loss_rows = w * np.bincount(pr, weights=cnt * (lse - lp), minlength=rows)

    # negatives: w_q * exp(l_qj - m_q) * sum_k cnt_qk exp(m_q - lse_qk)
    a = np.bincount(pr, weights=cnt * np.exp(mq - lse), minlength=rows)
    g = e_neg
    g *= (w * a)[:, None]
    np.add.at(g, (pr, pk), w[pr] * cnt * (np.exp(lp - lse) - 1.0))
    g /= tau
    return loss_rows, g


def contrastive_loss(f, sets, config=ContrastiveConfig()):
    """Loss and its gradient with respect to the embedding grid ``f``.

    ``f`` is (H, W, C) or (N, C); pixel indices in ``sets`` are flat. The
    returned gradient has the shape of ``f``.
    """
    f = np.asarray(f, dtype=np.float64)
    flat = f.reshape(-1, f.shape[-1])
    grad = np.zeros_like(flat)
    queries = np.asarray(sets.queries, dtype=np.int64)
    if queries.size == 0:
        return 0.0, grad.reshape(f.shape)
    ref, pc, nc = _masks(sets, flat.shape[0])
    if not np.all(pc.any(axis=1)):
        raise ValueError("every query needs at least one positive")
    unique_q = np.unique(queries).size == queries.size
    fr = flat[ref]
    total = 0.0
    for lo in range(0, queries.size, _CHUNK):
        sl = slice(lo, lo + _CHUNK)
        q = queries[sl]
        fq = flat[q]
        rows, g_s = _block(fq, fr, pc[sl], nc[sl], config.tau, q, ref)
        total += float(np.sum(rows))
        if unique_q:
            grad[q] += g_s @ fr
        else:
            np.add.at(grad, q, g_s @ fr)
        grad[ref] += g_s.T @ fq
    if config.reduction == "mean":
        total /= queries.size
        grad /= queries.size
    return total, grad.reshape(f.shape)


def contrastive_loss_reference(f, sets, tau):
    """Term-by-term evaluation with a per-term shifted log-sum-exp; no gradient."""
    flat = np.asarray(f, dtype=np.float64).reshape(-1, f.shape[-1])
    total = 0.0
    for q, pos, neg in zip(sets.queries, sets.positives, sets.negatives):
        sneg = np.array([flat[q] @ flat[k] for k in neg]) / tau
        acc = 0.0
        for kp in pos:
            sp = flat[q] @ flat[kp] / tau
            allv = np.concatenate([[sp], sneg])
            m = allv.max()
            acc += -(sp - (m + np.log(np.sum(np.exp(allv - m)))))
        total += acc / len(pos)
    return total
