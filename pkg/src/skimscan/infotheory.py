"""Softmax, entropy and divergences over categorical distributions.

All functions work along the last axis and broadcast, so a single
distribution can be compared against a stack of candidates in one call.
Natural logarithms throughout; ``0 * log 0`` is taken as 0.
"""

import numpy as np

from .core import InvalidInputError

LN2 = float(np.log(2.0))
# relative slack under which an entropy is treated as exactly maximal
_MAX_ENTROPY_SNAP = 1e-12


def softmax(logits):
    """Max-shifted softmax along the last axis."""
    z = np.asarray(logits, dtype=float)
    if not np.all(np.isfinite(z)):
        raise InvalidInputError("softmax received non-finite logits")
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def check_distribution(p, atol=1e-9):
    """Validate and return ``p`` as a float array of probabilities."""
    p = np.asarray(p, dtype=float)
    if p.ndim == 0 or p.shape[-1] < 1:
        raise InvalidInputError("distribution must have at least one entry")
    if not np.all(np.isfinite(p)) or np.any(p < 0) or np.any(p > 1):
        raise InvalidInputError("distribution entries must lie in [0, 1]")
    if not np.allclose(p.sum(axis=-1), 1.0, rtol=0, atol=atol):
        raise InvalidInputError("distribution does not sum to 1")
    return p


def _xlogy_ratio(p, q):
    # p * log(p / q) with 0 log 0 = 0 and p > 0, q = 0 -> inf
    p, q = np.broadcast_arrays(np.asarray(p, dtype=float), np.asarray(q, dtype=float))
    out = np.zeros(p.shape)
    pos = p > 0
    with np.errstate(divide="ignore"):
        out[pos] = p[pos] * np.log(p[pos] / q[pos])
    return out


def entropy(p):
    """Shannon entropy in nats."""
    p = np.asarray(p, dtype=float)
    terms = np.zeros(p.shape)
    pos = p > 0
    terms[pos] = p[pos] * np.log(p[pos])
    h = np.maximum(-terms.sum(axis=-1), 0.0)
    # uniform inputs must hit ln C exactly despite rounding in the sum
    top = np.log(p.shape[-1]) if p.shape[-1] > 0 else 0.0
    return np.where(np.abs(h - top) <= _MAX_ENTROPY_SNAP * max(top, 1.0), top, h)


def normalized_entropy(p):
    """Entropy divided by ``ln C``, in [0, 1]."""
    p = np.asarray(p, dtype=float)
    C = p.shape[-1]
    if C < 2:
        raise InvalidInputError("normalized entropy needs at least 2 classes")
    return np.minimum(entropy(p) / np.log(C), 1.0)


def kl_divergence(p, q):
    """``sum_k p_k ln(p_k / q_k)``; +inf when q has a zero where p does not."""
    return np.maximum(_xlogy_ratio(p, q).sum(axis=-1), 0.0)


def js_divergence(p, q):
    """Jensen-Shannon divergence in [0, ln 2].

    The mixture ``(p + q) / 2`` and the final sum are formed symmetrically,
    so ``js(p, q) == js(q, p)`` holds bit for bit.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    m = 0.5 * (p + q)
    a = _xlogy_ratio(p, m).sum(axis=-1)
    b = _xlogy_ratio(q, m).sum(axis=-1)
    return np.clip(0.5 * (a + b), 0.0, LN2)


def wasserstein1(p, q):
    """Earth mover's distance with ground metric ``|i - j|`` on class indices."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    diff = np.cumsum(p, axis=-1) - np.cumsum(q, axis=-1)
    return np.abs(diff[..., :-1]).sum(axis=-1)


DIVERGENCES = {
    "js": js_divergence,
    "kl": kl_divergence,
    "wasserstein1": wasserstein1,
}
