"""Quadrature rules on the reference square ``[0,1]^2``, triangle and segment."""

from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi

MAX_EXACTNESS = 20


class QuadratureRule:
    __slots__ = ("points", "weights", "exactness")

    def __init__(self, points, weights, exactness):
        self.points = points
        self.weights = weights
        self.exactness = exactness

    def __len__(self):
        return len(self.weights)


def gauss_segment(exactness):
    """Gauss-Legendre points/weights on ``[0, 1]``."""
    n = exactness // 2 + 1
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


# symmetric rules on the reference triangle (area 1/2), keyed by exactness
def _sym_rules():
    rules = {}
    rules[1] = (np.array([[1 / 3, 1 / 3]]), np.array([0.5]))
    rules[2] = (np.array([[1 / 6, 1 / 6], [2 / 3, 1 / 6], [1 / 6, 2 / 3]]),
                np.full(3, 1 / 6))
    a, b = 0.445948490915965, 0.091576213509771
    wa, wb = 0.223381589678011 / 2, 0.109951743655322 / 2
    pts = [[a, a], [1 - 2 * a, a], [a, 1 - 2 * a], [b, b], [1 - 2 * b, b], [b, 1 - 2 * b]]
    rules[4] = (np.array(pts), np.array([wa] * 3 + [wb] * 3))
    a1, a2 = 0.470142064105115, 0.101286507323456
    w0, w1, w2 = 0.225 / 2, 0.132394152788506 / 2, 0.125939180544827 / 2
    pts = [[1 / 3, 1 / 3],
           [a1, a1], [1 - 2 * a1, a1], [a1, 1 - 2 * a1],
           [a2, a2], [1 - 2 * a2, a2], [a2, 1 - 2 * a2]]
    rules[5] = (np.array(pts), np.array([w0] + [w1] * 3 + [w2] * 3))
    rules[3] = rules[4]
    return rules


_TRI_SYM = _sym_rules()


def _collapsed_triangle(exactness):
    # Duffy collapse of [0,1]^2: Gauss-Jacobi(1,0) absorbs the (1 - s) factor
    n = exactness // 2 + 1
    xs, ws = np.polynomial.legendre.leggauss(n)
    xj, wj = roots_jacobi(n, 1.0, 0.0)
    s = 0.5 * (xj + 1.0)       # collapsed direction
    ws_j = wj / 4.0            # (1/2)^(1+1) from the affine map of weight (1-x)
    t = 0.5 * (xs + 1.0)
    wt = 0.5 * ws
    S, Tt = np.meshgrid(s, t, indexing="ij")
    WS, WT = np.meshgrid(ws_j, wt, indexing="ij")
    pts = np.stack([((1 - S) * Tt).ravel(), S.ravel()], axis=1)
    return pts, (WS * WT).ravel()


@lru_cache(maxsize=None)
def quad_rule(elem_type, exactness):
    """Rule integrating polynomials of degree ``exactness`` exactly.

    ``quad``: tensor Gauss-Legendre on ``[0,1]^2`` (weights sum to 1).
    ``tri``: symmetric rule up to degree 5, collapsed Gauss-Jacobi above
    (weights sum to 1/2).
    """
    exactness = max(int(exactness), 1)
    if exactness > MAX_EXACTNESS:
        raise ValueError(f"unsupported quadrature exactness {exactness} (max {MAX_EXACTNESS})")
    if elem_type == "quad":
        x, w = gauss_segment(exactness)
        X, Y = np.meshgrid(x, x, indexing="xy")
        WX, WY = np.meshgrid(w, w, indexing="xy")
        pts = np.stack([X.ravel(), Y.ravel()], axis=1)
        return QuadratureRule(pts, (WX * WY).ravel(), exactness)
    if elem_type == "tri":
        if exactness in _TRI_SYM:
            pts, w = _TRI_SYM[exactness]
        else:
            pts, w = _collapsed_triangle(exactness)
        return QuadratureRule(np.array(pts, dtype=float), np.array(w, dtype=float), exactness)
    raise ValueError(f"unsupported element type {elem_type!r}")


@lru_cache(maxsize=None)
def segment_rule(exactness):
    x, w = gauss_segment(max(int(exactness), 1))
    return QuadratureRule(x[:, None], w, exactness)
