"""Shared numerical plumbing: seeded random streams, feature normalization and
a central-difference gradient oracle used to certify the analytic gradients.
"""

from dataclasses import dataclass

import numpy as np

RNG_ALGORITHM = "philox4x64-10"
DEFAULT_EPS = 1e-5
_UNIT_TOL = 8 * np.finfo(np.float64).eps


class RngStream:
    """Seeded counter-based random stream (numpy Philox).

    Child streams derived with :meth:`child` are independent of the parent's
    draw position, so per-step or per-scene streams stay reproducible no
    matter how much the parent has been consumed.
    """

    algorithm = RNG_ALGORITHM

    def __init__(self, seed, key=()):
        self.seed = int(seed)
        self.key = tuple(int(k) for k in key)
        ss = np.random.SeedSequence([self.seed & 0xFFFFFFFFFFFFFFFF, *self.key])
        self.gen = np.random.Generator(np.random.Philox(ss))

    def child(self, *key):
        return RngStream(self.seed, self.key + tuple(key))

    def uniform(self, size=None):
        return self.gen.random(size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self.gen.normal(loc, scale, size)

    def integers(self, low, high=None, size=None):
        return self.gen.integers(low, high, size)

    def choice(self, n, k):
        return rng_choice(self, n, k)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, key={self.key}, algorithm={self.algorithm!r})"


def rng_new(seed):
    return RngStream(seed)


def rng_uniform(stream):
    return float(stream.gen.random())


def rng_choice(stream, n, k):
    """Uniform k-subset of range(n) without replacement, in draw order."""
    n, k = int(n), int(k)
    if k > n:
        raise ValueError(f"cannot choose {k} distinct indices from {n}")
    if k < 0:
        raise ValueError("k must be non-negative")
    return stream.gen.permutation(n)[:k]


def normalize_features(f, return_zero_count=False):
    """L2-normalize the last axis. Zero vectors become the first basis vector."""
    f = np.asarray(f, dtype=np.float64)
    # pre-scale by the largest entry so tiny or huge rows neither under- nor overflow
    peak = np.max(np.abs(f), axis=-1, keepdims=True)
    zero = peak[..., 0] == 0.0
    g = f / np.where(peak == 0.0, 1.0, peak)
    gnorm = np.linalg.norm(g, axis=-1, keepdims=True)
    norm = gnorm * peak
    # rows already at unit norm (to a few ulp) pass through untouched so that
    # normalize(normalize(f)) == normalize(f) bitwise
    unit = np.abs(norm - 1.0) <= _UNIT_TOL
    out = np.where(unit, f, g / np.where(gnorm == 0.0, 1.0, gnorm))
    if zero.any():
        out[zero] = 0.0
        out[zero, 0] = 1.0
    if return_zero_count:
        return out, int(zero.sum())
    return out


def finite_diff_gradient(f, x, eps=DEFAULT_EPS):
    """Central-difference gradient of scalar ``f`` at ``x`` (any shape)."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    x0 = np.array(x, dtype=np.float64)
    flat = x0.reshape(-1)
    grad = np.zeros_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = float(f(x0))
        flat[i] = orig - eps
        fm = float(f(x0))
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise FloatingPointError(f"non-finite function value at coordinate {i}")
        grad[i] = (fp - fm) / (2.0 * eps)
    return grad.reshape(x0.shape)


@dataclass(frozen=True)
class GradCheckReport:
    passed: bool
    max_abs_dev: float
    max_rel_dev: float
    worst_index: int
    size: int
    rtol: float
    atol: float

    def __str__(self):
        status = "PASS" if self.passed else "FAIL"
        return (f"{status} n={self.size} max_abs={self.max_abs_dev:.3e} "
                f"max_rel={self.max_rel_dev:.3e} (rtol={self.rtol:g}, atol={self.atol:g})")


def grad_check(analytic, numeric, rtol=1e-4, atol=1e-8):
    a = np.asarray(analytic, dtype=np.float64).reshape(-1)
    n = np.asarray(numeric, dtype=np.float64).reshape(-1)
    if a.shape != n.shape:
        raise ValueError(f"length mismatch: {a.size} vs {n.size}")
    if a.size == 0:
        return GradCheckReport(True, 0.0, 0.0, -1, 0, rtol, atol)
    dev = np.abs(a - n)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(n != 0, dev / np.abs(n), np.where(dev == 0, 0.0, np.inf))
    ok = dev <= atol + rtol * np.abs(n)
    worst = int(np.argmax(dev - (atol + rtol * np.abs(n))))
    return GradCheckReport(bool(ok.all()), float(dev.max()), float(rel.max()),
                           worst, int(a.size), rtol, atol)
