"""Stage-wise combination of the pseudo-depth losses.

The scale-invariant term supervises the first half of training and the
contrastive term the second half; the result is added to the base loss with
weight ``w_pseudo``. Loss/gradient pairs are ``(float, grad)`` where ``grad``
is an array or a dict of arrays.
"""


def beta(t, T):
    """1 while t <= T/2, else 0 (epochs counted from 1)."""
    if T < 1 or not 1 <= t <= T:
        raise ValueError(f"epoch {t} outside 1..{T}")
    return 1 if 2 * t <= T else 0


def _axpy(a, x, y):
    """a * x + y for arrays or dicts of arrays; ``None`` counts as zero."""
    if x is None:
        return y
    if y is None:
        return _scale(a, x)
    if isinstance(x, dict):
        return {k: a * x[k] + y[k] for k in x}
    return a * x + y


def _scale(a, x):
    if isinstance(x, dict):
        return {k: a * v for k, v in x.items()}
    return a * x


def pseudo_loss(si, contr, t, T):
    """beta * L_SI + (1 - beta) * L_contr; only the active term's gradient flows."""
    b = beta(t, T)
    return si if b == 1 else contr


def total_loss(base, pseudo, w_pseudo):
    loss = base[0] + w_pseudo * pseudo[0]
    return loss, _axpy(w_pseudo, pseudo[1], base[1])
