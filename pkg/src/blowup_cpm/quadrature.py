"""Adaptive Gauss-Kronrod (7/15) quadrature for vector-valued integrands.

The integrand is called with a flat array of nodes and must return either an
array of the same length or a 2-D array ``(len(nodes), k)``.  All pending
panels of one refinement sweep are evaluated in a single call.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import QuadratureError

# Kronrod nodes on [0, 1] (symmetric about 0); odd positions are Gauss nodes.
_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])

# Full 15-point rule on [-1, 1].
NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
KRONROD_WEIGHTS = np.concatenate([_WGK[:-1], _WGK[::-1]])
GAUSS_WEIGHTS = np.zeros(15)
_gpos = [1, 3, 5]
for _i, _k in enumerate(_gpos):
    GAUSS_WEIGHTS[_k] = _WG[_i]
    GAUSS_WEIGHTS[14 - _k] = _WG[_i]
GAUSS_WEIGHTS[7] = _WG[3]


@dataclass
class QuadResult:
    value: np.ndarray
    error: float
    edges: np.ndarray          # sorted panel edges, len = panels + 1
    panel_values: np.ndarray   # Kronrod integral on each panel


def panel_nodes(left, right):
    """Kronrod nodes for each panel, shape ``(panels, 15)``."""
    left = np.asarray(left, dtype=float)
    right = np.asarray(right, dtype=float)
    mid = 0.5 * (left + right)
    half = 0.5 * (right - left)
    return mid[..., None] + half[..., None] * NODES


def kronrod_on(f, left, right):
    """Kronrod and Gauss estimates of the integral of ``f`` on each panel."""
    left = np.atleast_1d(np.asarray(left, dtype=float))
    right = np.atleast_1d(np.asarray(right, dtype=float))
    x = panel_nodes(left, right)
    vals = np.asarray(f(x.ravel()))
    vals = vals.reshape(x.shape + vals.shape[1:])
    half = 0.5 * (right - left)
    shape = (-1,) + (1,) * (vals.ndim - 2)
    k = np.tensordot(vals, KRONROD_WEIGHTS, axes=([1], [0]))
    g = np.tensordot(vals, GAUSS_WEIGHTS, axes=([1], [0]))
    return k * half.reshape(shape), g * half.reshape(shape)


def adaptive_gk(f, a, b, tol, max_panels=200_000, initial_panels=8):
    """Integrate ``f`` over ``[a, b]`` until every panel meets its share of ``tol``.

    A panel ``[l, r]`` is accepted when ``max|K15 - G7| <= tol (r - l) / (b - a)``,
    so the accepted error estimates sum to at most ``tol``, or when the estimate
    is already at rounding level relative to the panel value.
    """
    if not (np.isfinite(a) and np.isfinite(b)) or b <= a:
        raise QuadratureError(f"bad interval [{a}, {b}]")
    if tol <= 0:
        raise QuadratureError("tolerance must be positive")
    edges = np.linspace(a, b, initial_panels + 1)
    pend_l, pend_r = edges[:-1], edges[1:]
    acc_l, acc_r, acc_v, acc_e = [], [], [], []
    width = b - a
    while pend_l.size:
        k, g = kronrod_on(f, pend_l, pend_r)
        if not np.all(np.isfinite(k)):
            raise QuadratureError("integrand returned non-finite values")
        diff = np.abs(k - g)
        err = diff.reshape(diff.shape[0], -1).max(axis=1)
        share = tol * (pend_r - pend_l) / width
        # an estimate at rounding level of the panel value cannot be improved by splitting
        floor = 50 * np.finfo(float).eps * np.abs(k).reshape(k.shape[0], -1).max(axis=1)
        ok = err <= np.maximum(share, floor)
        tiny = (pend_r - pend_l) <= 64 * np.finfo(float).eps * max(abs(a), abs(b), 1.0)
        if np.any(tiny & ~ok):
            where = pend_l[tiny & ~ok][0]
            raise QuadratureError(f"cannot resolve integrand near {where:.6g}; "
                                  f"panel error {err[tiny & ~ok].max():.3e}")
        acc_l.append(pend_l[ok]); acc_r.append(pend_r[ok])
        acc_v.append(k[ok]); acc_e.append(err[ok])
        bad_l, bad_r = pend_l[~ok], pend_r[~ok]
        mid = 0.5 * (bad_l + bad_r)
        pend_l = np.concatenate([bad_l, mid])
        pend_r = np.concatenate([mid, bad_r])
        if sum(x.size for x in acc_l) + pend_l.size > max_panels:
            raise QuadratureError(
                f"panel budget {max_panels} exhausted; worst error {err.max():.3e}")
    lefts = np.concatenate(acc_l)
    order = np.argsort(lefts)
    lefts = lefts[order]
    rights = np.concatenate(acc_r)[order]
    vals = np.concatenate(acc_v)[order]
    errs = np.concatenate(acc_e)[order]
    edges = np.append(lefts, rights[-1])
    return QuadResult(vals.sum(axis=0), float(errs.sum()), edges, vals)


def refine_edges(edges, max_width):
    """Split panels so that none is wider than ``max_width``."""
    out = [edges[:1]]
    for l, r in zip(edges[:-1], edges[1:]):
        n = max(1, int(np.ceil((r - l) / max_width)))
        out.append(np.linspace(l, r, n + 1)[1:])
    return np.concatenate(out)
