"""Independent reference implementations used only by the tests.

Written in plain Python loops (or via scipy) without importing the code
under test, so agreement is evidence rather than tautology.
"""

import math

import numpy as np
from scipy.optimize import linprog


def transport_w1(p, q):
    """Minimum-cost transport between categorical p and q with cost |i - j|, solved as an LP."""
    n = len(p)
    cost = np.array([[abs(i - j) for j in range(n)] for i in range(n)], dtype=float).ravel()
    A_eq, b_eq = [], []
    for i in range(n):
        row = np.zeros((n, n))
        row[i, :] = 1.0
        A_eq.append(row.ravel())
        b_eq.append(p[i])
    for j in range(n):
        col = np.zeros((n, n))
        col[:, j] = 1.0
        A_eq.append(col.ravel())
        b_eq.append(q[j])
    res = linprog(cost, A_eq=np.array(A_eq), b_eq=np.array(b_eq), bounds=(0, None), method="highs")
    assert res.status == 0
    return float(res.fun)


def softmax_py(z):
    m = max(z)
    e = [math.exp(v - m) for v in z]
    s = sum(e)
    return [v / s for v in e]


def entropy_py(p):
    return -sum(v * math.log(v) for v in p if v > 0)


def kl_py(p, q):
    total = 0.0
    for a, b in zip(p, q):
        if a > 0:
            if b == 0:
                return math.inf
            total += a * math.log(a / b)
    return max(total, 0.0)


def js_py(p, q):
    m = [(a + b) / 2 for a, b in zip(p, q)]
    return 0.5 * kl_py(p, m) + 0.5 * kl_py(q, m)


def w1_py(p, q):
    total, cp, cq = 0.0, 0.0, 0.0
    for a, b in list(zip(p, q))[:-1]:
        cp += a
        cq += b
        total += abs(cp - cq)
    return total


DIV_PY = {"js": js_py, "kl": kl_py, "wasserstein1": w1_py}


def greedy_scan_py(candidates, logits, metric, threshold, cap=None):
    """Step-by-step greedy scan: min-entropy seed, then argmax divergence to softmax(mean logits)."""
    dists = {i: softmax_py(list(logits[i])) for i in candidates}
    order = sorted(candidates)
    best = None
    for i in order:
        h = entropy_py(dists[i])
        if best is None or h < best[0]:
            best = (h, i)
    selected = [best[1]]
    cap = len(order) if cap is None else cap
    div = DIV_PY[metric]
    while len(selected) < cap:
        rest = [i for i in order if i not in selected]
        if not rest:
            break
        C = len(logits[0])
        mean = [sum(logits[s][k] for s in selected) / len(selected) for k in range(C)]
        agg = softmax_py(mean)
        top = None
        for j in rest:
            d = div(agg, dists[j])
            if top is None or d > top[0]:
                top = (d, j)
        if top[0] < threshold:
            break
        selected.append(top[1])
    return selected


def average_precision_py(scores, positives, keys):
    """Precision at every rank holding a positive, averaged; brute force over the sorted list."""
    items = sorted(zip(scores, keys, positives), key=lambda t: (-t[0], t[1]))
    precs = []
    for r in range(1, len(items) + 1):
        if items[r - 1][2]:
            precs.append(sum(1 for t in items[:r] if t[2]) / r)
    return sum(precs) / len(precs) if precs else float("nan")
