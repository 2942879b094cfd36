"""Quadrature rules on the reference triangle and the unit interval.

Triangle rules up to degree 5 are symmetric tabulated rules; higher degrees
use the collapsed (Duffy) tensor product of Gauss-Legendre and Gauss-Jacobi
rules, which is exact and has positive weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi

from shapediff.errors import QuadratureError

MAX_DEGREE = 20


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray
    weights: np.ndarray
    degree: int  # exactness degree

    def __len__(self):
        return len(self.weights)


def _s21(a, w):
    b = 1.0 - 2.0 * a
    return [(a, a), (b, a), (a, b)], [w, w, w]


def _symmetric(orbits, centroid_weight=None):
    pts, wts = [], []
    if centroid_weight is not None:
        pts.append((1.0 / 3.0, 1.0 / 3.0))
        wts.append(centroid_weight)
    for a, w in orbits:
        p, q = _s21(a, w)
        pts += p
        wts += q
    return np.array(pts), np.array(wts)


def _tabulated(degree):
    if degree == 1:
        return np.array([[1.0 / 3.0, 1.0 / 3.0]]), np.array([0.5]), 1
    if degree == 2:
        return (*_symmetric([(1.0 / 6.0, 1.0 / 6.0)]), 2)
    if degree <= 4:
        pts, wts = _symmetric(
            [
                (0.44594849091596488632, 0.11169079483900573285),
                (0.09157621350977074346, 0.054975871827660933819),
            ]
        )
        return pts, wts, 4
    r15 = math.sqrt(15.0)
    pts, wts = _symmetric(
        [
            ((6.0 - r15) / 21.0, (155.0 - r15) / 2400.0),
            ((6.0 + r15) / 21.0, (155.0 + r15) / 2400.0),
        ],
        centroid_weight=9.0 / 80.0,
    )
    return pts, wts, 5


def _collapsed(degree):
    n = (degree + 2) // 2
    t, wt = np.polynomial.legendre.leggauss(n)
    u, wu = 0.5 * (t + 1.0), 0.5 * wt
    s, ws = roots_jacobi(n, 1.0, 0.0)
    v, wv = 0.5 * (s + 1.0), 0.25 * ws
    U, V = np.meshgrid(u, v, indexing="ij")
    W = np.outer(wu, wv)
    pts = np.column_stack([(U * (1.0 - V)).ravel(), V.ravel()])
    return pts, W.ravel(), 2 * n - 1


@lru_cache(maxsize=None)
def _triangle(degree):
    if degree <= 5:
        pts, wts, exact = _tabulated(degree)
    else:
        pts, wts, exact = _collapsed(degree)
    pts.setflags(write=False)
    wts.setflags(write=False)
    return QuadratureRule(pts, wts, exact)


@lru_cache(maxsize=None)
def _interval(degree):
    n = degree // 2 + 1
    t, w = np.polynomial.legendre.leggauss(n)
    pts, wts = 0.5 * (t + 1.0), 0.5 * w
    pts.setflags(write=False)
    wts.setflags(write=False)
    return QuadratureRule(pts, wts, 2 * n - 1)


def quadrature(cellkind, degree):
    """Rule on ``"triangle"`` or ``"interval"`` exact to at least ``degree``."""
    if not isinstance(degree, (int, np.integer)) or not 1 <= degree <= MAX_DEGREE:
        raise QuadratureError(f"quadrature degree must be in [1, {MAX_DEGREE}], got {degree!r}")
    if cellkind == "triangle":
        return _triangle(int(degree))
    if cellkind == "interval":
        return _interval(int(degree))
    raise QuadratureError(f"unknown cell kind {cellkind!r}")
