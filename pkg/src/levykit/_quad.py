"""Small quadrature building blocks shared by the operator, validation and FD code."""

from __future__ import annotations

from functools import lru_cache
import math

import numpy as np
from scipy.special import roots_jacobi


@lru_cache(maxsize=64)
def _leggauss(n):
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


@lru_cache(maxsize=64)
def _jacobi_power(n, expo):
    # nodes/weights on [0, 1] for the weight t**expo (expo > -1)
    x, w = roots_jacobi(n, 0.0, expo)
    t = 0.5 * (x + 1.0)
    w = w * 0.5 ** (expo + 1.0)
    t.setflags(write=False)
    w.setflags(write=False)
    return t, w


def sphere_measure(d):
    """Surface measure of the unit sphere S^{d-1} (2 for d=1)."""
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


@lru_cache(maxsize=32)
def sphere_rule(d, n=32):
    """Directions and weights integrating over S^{d-1}.

    d=1 gives the two points +-1; d=2 a trapezoid rule with ``n`` equispaced
    angles (antipodal pairs included when n is even); d=3 a product rule,
    Gauss-Legendre in cos(theta) times a trapezoid in phi. Weights sum to
    :func:`sphere_measure`.
    """
    if d == 1:
        dirs = np.array([[1.0], [-1.0]])
        w = np.array([1.0, 1.0])
    elif d == 2:
        phi = 2.0 * np.pi * np.arange(n) / n
        dirs = np.column_stack([np.cos(phi), np.sin(phi)])
        w = np.full(n, 2.0 * np.pi / n)
    elif d == 3:
        nt = max(n // 2, 4)
        ct, wt = _leggauss(nt)
        phi = 2.0 * np.pi * np.arange(n) / n
        st = np.sqrt(1.0 - ct**2)
        dirs = np.array([[s * np.cos(p), s * np.sin(p), c] for c, s in zip(ct, st) for p in phi])
        w = np.array([a * 2.0 * np.pi / n for a in wt for _ in phi])
    else:
        raise ValueError("angular quadrature is only provided for d <= 3")
    dirs.setflags(write=False)
    w.setflags(write=False)
    return dirs, w


def arc_rule(n, breaks=(), order=8, levels=4, ratio=0.25):
    """Directions and weights on the unit circle with breakpoints.

    Without breaks this is the ``n``-point trapezoid rule.  Otherwise the
    circle is split at the break angles, each arc into pieces of length at
    most ``2 pi order / n``, and the pieces touching a break are graded
    geometrically towards it; Gauss-Legendre of ``order`` nodes on each.
    """
    if len(breaks) == 0:
        return sphere_rule(2, n)
    b = np.sort(np.mod(np.asarray(breaks, dtype=float), 2.0 * np.pi))
    b = np.concatenate([b, [b[0] + 2.0 * np.pi]])
    hmax = 2.0 * np.pi * order / n
    edges = []
    for lo, hi in zip(b[:-1], b[1:]):
        if hi - lo < 1e-14:
            continue
        m = max(1, int(np.ceil((hi - lo) / hmax)))
        e = list(np.linspace(lo, hi, m + 1))
        # grade the first and last piece towards the breaks
        left = [lo + (e[1] - lo) * ratio**k for k in range(levels, 0, -1)]
        right = [hi - (hi - e[-2]) * ratio**k for k in range(1, levels + 1)]
        edges.append(np.array([lo] + left + e[1:-1] + right + [hi]))
    nodes, weights = [], []
    for e in edges:
        t, w = panel_rule(e, order)
        nodes.append(t)
        weights.append(w)
    phi = np.concatenate(nodes)
    w = np.concatenate(weights)
    dirs = np.column_stack([np.cos(phi), np.sin(phi)])
    return dirs, w


def log_edges(lo, hi, per_decade=4):
    """Log-spaced panel edges covering [lo, hi], both included."""
    if hi <= lo:
        return np.array([lo, hi])
    m = max(int(math.ceil(per_decade * math.log10(hi / lo))), 1)
    return np.geomspace(lo, hi, m + 1)


def graded_edges(edges, kinks, levels=14, ratio=0.25):
    """Insert ``kinks`` into ``edges`` and refine geometrically towards each kink.

    Panels touching a kink are split at kink +- w * ratio**j so that endpoint
    singularities of the integrand are resolved by Gauss rules.
    """
    e = np.asarray(edges, dtype=float)
    lo, hi = e[0], e[-1]
    ks = [k for k in np.atleast_1d(kinks) if lo <= k <= hi]
    if not ks:
        return e
    pts = list(e) + ks
    base = np.unique(np.asarray(pts))
    extra = []
    for k in ks:
        i = np.searchsorted(base, k)
        left = k - base[i - 1] if i > 0 else 0.0
        right = base[i + 1] - k if i + 1 < base.size else 0.0
        for j in range(1, levels + 1):
            if left > 0:
                extra.append(k - left * ratio**j)
            if right > 0:
                extra.append(k + right * ratio**j)
    out = np.unique(np.concatenate([base, extra]))
    return out[(out >= lo) & (out <= hi)]


def panel_rule(edges, order=10):
    """Composite Gauss-Legendre nodes/weights on consecutive panels."""
    x, w = _leggauss(order)
    a = np.asarray(edges[:-1])[:, None]
    b = np.asarray(edges[1:])[:, None]
    half = 0.5 * (b - a)
    nodes = (a + b) * 0.5 + half * x[None, :]
    weights = half * w[None, :]
    return nodes.ravel(), weights.ravel()


def power_core_rule(delta, expo, order=12):
    """Nodes/weights for int_0^delta g(r) r**expo dr, exact for polynomial g."""
    t, w = _jacobi_power(order, float(expo))
    return delta * t, w * delta ** (expo + 1.0)
