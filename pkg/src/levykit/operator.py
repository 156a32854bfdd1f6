"""Deterministic quadrature for the non-local generator and related integrals.

The generator is integrated in polar coordinates, z = r theta:

* ``0 < r < delta``: the second-order Taylor term ``r^2 theta.H theta / 2``
  against ``k r**(1-alpha)`` with a Gauss-Jacobi rule (the cubic term is odd
  and drops out for symmetric kernels),
* ``delta <= r <= 1``: the gradient-compensated difference on log-spaced
  Gauss-Legendre panels,
* ``1 < r <= R_max``: the plain difference, same panels,
* ``r > R_max``: a fitted power-law closure ``c + B r**p`` of the integrand.

Every call is repeated on a refined scheme (``delta/2``, denser panels);
the difference is the reported error estimate.
"""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass, field, replace
import math
from typing import Callable
import warnings

import numpy as np
from scipy import integrate

from . import _quad
from .errors import (
    DivergentTail,
    EvaluationAtOrigin,
    GridTooCoarse,
    QuadratureNotConverged,
    SingularityNotResolved,
    ValidationError,
)
from .kernels import _power_fit, frac_constant, make_kernel, ray_sphere_hits

_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class SmoothProbe:
    """Test function for the generator.

    ``value`` maps ``(m, d)`` points to ``(m,)``; ``gradient`` (optional)
    to ``(m, d)``; ``hessian`` (optional) to ``(m, d, d)``.  ``kinks(x,
    theta)`` may return radii along the ray ``x + r theta`` where the
    function is not smooth; quadrature panels are graded towards them.
    ``kink_radii`` lists radii of origin-centred spheres carrying those
    kinks; in d = 2 the angular rule is split where rays touch them.
    """

    value: Callable
    gradient: Callable | None = None
    hessian: Callable | None = None
    hessian_bound: float | None = None
    kinks: Callable | None = None
    kink_radii: tuple = ()

    def __call__(self, x):
        return self.value(np.atleast_2d(np.asarray(x, dtype=float)))

    def grad(self, x, hmax=np.inf):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.gradient is not None:
            return np.asarray(self.gradient(x), dtype=float)
        return fd_gradient(self.value, x, hmax)

    def hess(self, x, hmax=np.inf):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.hessian is not None:
            return np.asarray(self.hessian(x), dtype=float)
        return fd_hessian(self.value, x, hmax)

    def nearest_kink(self, x, d):
        """Smallest kink radius seen from ``x`` over the angular rule (inf if none)."""
        if self.kinks is None:
            return np.inf
        dirs, _ = _quad.sphere_rule(d, 32)
        ks = [np.atleast_1d(self.kinks(np.asarray(x, dtype=float).reshape(-1), th)) for th in dirs]
        return min((float(k.min()) for k in ks if k.size), default=np.inf)


def fd_gradient(f, x, hmax=np.inf):
    """Central differences with h = eps**(1/3) (1 + |x|), capped at ``hmax``."""
    m, d = x.shape
    h = np.minimum(_EPS ** (1.0 / 3.0) * (1.0 + np.linalg.norm(x, axis=1)), hmax)
    g = np.empty((m, d))
    for i in range(d):
        e = np.zeros(d)
        e[i] = 1.0
        g[:, i] = (f(x + h[:, None] * e) - f(x - h[:, None] * e)) / (2.0 * h)
    return g


def _fd_hessian_step(f, x, h):
    m, d = x.shape
    H = np.empty((m, d, d))
    f0 = f(x)
    for i in range(d):
        ei = np.zeros(d)
        ei[i] = 1.0
        H[:, i, i] = (f(x + h[:, None] * ei) - 2.0 * f0 + f(x - h[:, None] * ei)) / h**2
        for j in range(i + 1, d):
            ej = np.zeros(d)
            ej[j] = 1.0
            pp = f(x + h[:, None] * (ei + ej))
            pm = f(x + h[:, None] * (ei - ej))
            mp = f(x - h[:, None] * (ei - ej))
            mm = f(x - h[:, None] * (ei + ej))
            H[:, i, j] = H[:, j, i] = (pp - pm - mp + mm) / (4.0 * h**2)
    return H


def fd_hessian(f, x, hmax=np.inf):
    """Central second differences, Richardson-extrapolated (h and h/2).

    h = 2 eps**(1/6) (1 + |x|), capped at ``hmax``.
    """
    h = np.minimum(2.0 * _EPS ** (1.0 / 6.0) * (1.0 + np.linalg.norm(x, axis=1)), hmax)
    return (4.0 * _fd_hessian_step(f, x, 0.5 * h) - _fd_hessian_step(f, x, h)) / 3.0


@dataclass(frozen=True)
class QuadratureScheme:
    core_radius: float = 1e-3
    tail_radius: float = 1e4
    per_decade: int = 6
    order: int = 10
    angular_order: int = 32
    core_order: int = 12
    tol: float = 1e-6
    taylor_core: bool = True

    def __post_init__(self):
        if not 0 < self.core_radius < 1 < self.tail_radius:
            raise ValidationError("need 0 < core_radius < 1 < tail_radius")
        if min(self.per_decade, self.order, self.angular_order, self.core_order) < 4:
            raise ValidationError("node counts must be >= 4")

    def refined(self):
        return replace(
            self,
            core_radius=self.core_radius / 2.0,
            per_decade=2 * self.per_decade,
            order=self.order + 4,
            core_order=self.core_order + 4,
            angular_order=2 * self.angular_order,
        )


def _angular_rule(model, f, x, q):
    d = model.dim
    if d != 2:
        return _quad.sphere_rule(d, q.angular_order)
    radii = list(f.kink_radii)
    kr = getattr(model.structure, "kink_radii", None)
    if kr is not None:
        radii += list(kr(x))
    nx = float(np.linalg.norm(x))
    breaks = []
    if nx > 0:
        base = math.atan2(-x[1], -x[0])
        for rho in radii:
            if 0 < rho < nx * (1 - 1e-12):
                s = math.asin(rho / nx)
                breaks += [base - s, base + s]
    return _quad.arc_rule(q.angular_order, breaks)


def _core_moment(model, x, th1, delta, a, q, decades=8):
    """int_0^delta r^(1-alpha) k(x, r th) dr for a z-dependent numerator.

    Geometric panels down to delta 10**-decades, then k ~ c + B r^p fitted
    at the innermost panel and integrated exactly, so numerators with a
    power-law piece at z = 0 are handled without loss of order.
    """
    d = x.shape[1]
    rho = delta * 10.0**-decades
    rr, ww = _quad.panel_rule(_quad.log_edges(rho, delta, q.per_decade), q.order)
    k = model.numerator(np.broadcast_to(x, (rr.size, d)), rr[:, None] * th1)
    val = float(np.sum(ww * rr ** (1.0 - a) * k))
    r3 = np.array([rho, 2 * rho, 4 * rho])
    k3 = model.numerator(np.broadcast_to(x, (3, d)), r3[:, None] * th1)
    c, B, p = _power_fit(k3[0], k3[1], k3[2], rho)
    val += c * rho ** (2.0 - a) / (2.0 - a)
    if B != 0 and 2.0 - a + p > 0:
        val += B * rho ** (2.0 - a + p) / (2.0 - a + p)
    return val


def _single(model, f, x, q, grad, hess):
    """One evaluation of the jump part of the generator at one point."""
    d = model.dim
    a = model.alpha
    x = np.asarray(x, dtype=float).reshape(1, d)
    fx = float(f(x)[0])
    dirs, wa = _angular_rule(model, f, x[0], q)
    delta = q.core_radius
    kink_list = None
    if f.kinks is not None:
        kink_list = [np.atleast_1d(f.kinks(x[0], th)) for th in dirs]
        near = min((float(k.min()) for k in kink_list if k.size), default=np.inf)
        # keep the Taylor core well inside the smooth neighbourhood of x
        delta = min(delta, 0.005 * near)
    rc, wc = _quad.power_core_rule(delta, 1.0 - a, q.core_order)
    mid_edges = _quad.log_edges(delta, 1.0, q.per_decade)
    tail_edges = _quad.log_edges(1.0, q.tail_radius, q.per_decade)
    zk = getattr(model.structure, "z_kinks", None)
    total = 0.0
    R = q.tail_radius
    for j, (th, w) in enumerate(zip(dirs, wa)):
        th1 = th[None, :]
        quad_form = float(th @ hess @ th)
        if not q.taylor_core:
            core = 0.0
        elif model.z_free is not None:
            kc = model.numerator(np.broadcast_to(x, (rc.size, d)), rc[:, None] * th1)
            core = 0.5 * quad_form * np.sum(wc * kc)
        else:
            core = 0.5 * quad_form * _core_moment(model, x, th1, delta, a, q)
        me, te = mid_edges, tail_edges
        ks = kink_list[j] if kink_list is not None else np.array([])
        if zk is not None:
            ks = np.concatenate([ks, zk(x[0], th)])
        if ks.size:
            me = _quad.graded_edges(me, ks)
            te = _quad.graded_edges(te, ks)
        rm, wm = _quad.panel_rule(me, q.order)
        rt, wt = _quad.panel_rule(te, q.order)
        zm = rm[:, None] * th1
        zt = rt[:, None] * th1
        gm = f(x + zm) - fx - rm * float(grad @ th)
        km = model.numerator(np.broadcast_to(x, zm.shape), zm)
        mid = np.sum(wm * gm * km * rm ** (-1.0 - a))
        gt = f(x + zt) - fx
        kt = model.numerator(np.broadcast_to(x, zt.shape), zt)
        tail = np.sum(wt * gt * kt * rt ** (-1.0 - a))
        # closure beyond R: fit (f(x+r th) - f(x)) k(x, r th) ~ c + B r^p
        rr = np.array([R, 2 * R, 4 * R])
        zz = rr[:, None] * th1
        gg = (f(x + zz) - fx) * model.numerator(np.broadcast_to(x, zz.shape), zz)
        c, B, p = _power_fit(gg[0], gg[1], gg[2], R)
        if B != 0 and p >= a:
            raise DivergentTail(f"integrand grows like |z|^{p:.3g} >= |z|^alpha along theta={th.tolist()}")
        clos = c * R ** (-a) / a + (B * R ** (p - a) / (a - p) if B != 0 else 0.0)
        total += w * (core + mid + tail + clos)
    return model.scale * total


def apply_generator(model, f, x, q=None, full_output=False):
    """b(x).grad f(x) + int [f(x+z) - f(x) - 1{|z|<=1} grad f(x).z] pi(x, z) dz.

    Returns the value from the refined scheme; with ``full_output`` a pair
    ``(value, error_estimate)``.

    Raises
    ------
    QuadratureNotConverged
        If the base and refined schemes differ by more than
        ``q.tol * max(1, |value|)``.
    DivergentTail
        If f(x + z) grows like |z|**p with p >= alpha.
    """
    q = q or QuadratureScheme()
    x = np.asarray(x, dtype=float).reshape(1, model.dim)
    # difference steps must stay inside the smooth neighbourhood of x
    hmax = 0.05 * f.nearest_kink(x, model.dim)
    grad = f.grad(x, hmax)[0]
    hess = f.hess(x, hmax)[0]
    drift = float(model.drift(x)[0] @ grad)
    v1 = _single(model, f, x, q, grad, hess)
    v2 = _single(model, f, x, q.refined(), grad, hess)
    err = abs(v2 - v1)
    val = drift + v2
    if not np.isfinite(val) or err > q.tol * max(1.0, abs(val)):
        raise QuadratureNotConverged(f"refinement changed the value by {err:.3g} (value {val:.6g})")
    return (val, err) if full_output else val


@dataclass
class CoreRefinement:
    deltas: list
    errors: list
    order: float
    reference: float


def core_refinement_order(model, f, x, deltas=(0.2, 0.1, 0.05, 0.025), q=None):
    """Observed order of the error from dropping the Taylor core of radius delta.

    The error is 0.5 H(x):int_{|z|<delta} z z' pi dz ~ delta**(2 - alpha); the
    order is the least-squares slope of log error against log delta.
    """
    q = q or QuadratureScheme()
    x = np.asarray(x, dtype=float).reshape(1, model.dim)
    hmax = 0.05 * f.nearest_kink(x, model.dim)
    grad = f.grad(x, hmax)[0]
    hess = f.hess(x, hmax)[0]
    ref = _single(model, f, x, q.refined(), grad, hess)
    errs = []
    for dl in deltas:
        qd = replace(q, core_radius=float(dl), taylor_core=False)
        errs.append(abs(_single(model, f, x, qd, grad, hess) - ref))
    slope = float(np.polyfit(np.log(deltas), np.log(errs), 1)[0])
    return CoreRefinement(list(map(float, deltas)), errs, slope, float(ref))


def apply_generator_many(model, f, xs, q=None):
    """apply_generator at each row of ``xs``; returns (values, errors)."""
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    out = np.array([apply_generator(model, f, x, q, full_output=True) for x in xs])
    return out[:, 0], out[:, 1]


def frac_laplacian(f, x, s, q=None, dim=None, full_output=False):
    """(-Delta)**s f(x) with the symbol |xi|**(2s) normalisation (c(d, 2s) of :func:`frac_constant`)."""
    if not 0.5 < s < 1.0:
        raise ValidationError("s must lie in (1/2, 1)")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    d = dim or x.size
    model = make_kernel("constant", d, 2.0 * s)
    val, err = apply_generator(model, f, x, q, full_output=True)
    return (-val, err) if full_output else -val


# ---------------------------------------------------------------- probes


def _ray_sphere_exit(x, th, radius=1.0):
    return ray_sphere_hits(x, th, radius)


def getoor_probe(s, dim=1):
    """(1 - |x|^2)_+^s, whose (-Delta)^s is constant inside the unit ball."""

    def value(x):
        return np.maximum(1.0 - np.sum(x * x, axis=-1), 0.0) ** s

    def gradient(x):
        r2 = np.sum(x * x, axis=-1)
        inside = r2 < 1
        g = np.zeros_like(x)
        g[inside] = -2.0 * s * x[inside] * ((1.0 - r2[inside]) ** (s - 1.0))[:, None]
        return g

    return SmoothProbe(value, gradient, kinks=lambda x, th: _ray_sphere_exit(x, th), kink_radii=(1.0,))


def getoor_constant(s, dim=1):
    """(-Delta)^s (1 - |x|^2)_+^s = 2^(2s) Gamma(1+s) Gamma(d/2+s) / Gamma(d/2) inside the unit ball."""
    return 2.0 ** (2 * s) * math.gamma(1 + s) * math.gamma(dim / 2.0 + s) / math.gamma(dim / 2.0)


def psi_probe(q_exp, dim=1):
    """psi_q(x) = ((1 - |x|)_+)^q."""

    def value(x):
        return np.maximum(1.0 - np.sqrt(np.sum(x * x, axis=-1)), 0.0) ** q_exp

    def kinks(x, th):
        ks = list(_ray_sphere_exit(x, th))
        # the cusp at the origin lies on the ray through it
        b = -float(x @ th)
        if b > 0 and abs(b * b - float(x @ x)) < 1e-14 * max(1.0, float(x @ x)):
            ks.append(b)
        return np.array(ks)

    return SmoothProbe(value, kinks=kinks, kink_radii=(1.0,))


def power_probe(gamma_exp, dim=1):
    """Smooth V equal to |x|^gamma outside the unit ball.

    Inside, V = a + b r^2 + c r^4 with the coefficients fixed so that V is
    C^2 across |x| = 1: c = gamma (gamma - 2) / 8, b = gamma (4 - gamma) / 4,
    a = 1 - b - c.
    """
    g = float(gamma_exp)
    c4 = g * (g - 2.0) / 8.0
    b2 = g * (4.0 - g) / 4.0
    a0 = 1.0 - b2 - c4

    def value(x):
        r2 = np.sum(x * x, axis=-1)
        out = np.empty_like(r2)
        inner = r2 <= 1.0
        out[inner] = a0 + b2 * r2[inner] + c4 * r2[inner] ** 2
        out[~inner] = r2[~inner] ** (g / 2.0)
        return out

    def gradient(x):
        r2 = np.sum(x * x, axis=-1)
        fac = np.where(r2 <= 1.0, 2.0 * b2 + 4.0 * c4 * r2, g * np.maximum(r2, 1.0) ** (g / 2.0 - 1.0))
        return fac[:, None] * x

    def hessian(x):
        m, d = x.shape
        r2 = np.sum(x * x, axis=-1)
        eye = np.eye(d)[None]
        outer = x[:, :, None] * x[:, None, :]
        inner = r2 <= 1.0
        f1 = np.where(inner, 2.0 * b2 + 4.0 * c4 * r2, g * np.maximum(r2, 1.0) ** (g / 2.0 - 1.0))
        f2 = np.where(inner, 8.0 * c4, g * (g - 2.0) * np.maximum(r2, 1.0) ** (g / 2.0 - 2.0))
        return f1[:, None, None] * eye + f2[:, None, None] * outer

    return SmoothProbe(value, gradient, hessian, kinks=lambda x, th: _ray_sphere_exit(x, th), kink_radii=(1.0,))


def gaussian_probe(dim=1, width=1.0):
    """exp(-|x|^2 / (2 w^2)), smooth with no kinks."""
    w2 = float(width) ** 2

    def value(x):
        return np.exp(-0.5 * np.sum(x * x, axis=-1) / w2)

    def gradient(x):
        return -(value(x) / w2)[:, None] * x

    def hessian(x):
        m, d = x.shape
        v = value(x)[:, None, None]
        outer = x[:, :, None] * x[:, None, :]
        return v * (outer / w2**2 - np.eye(d)[None] / w2)

    return SmoothProbe(value, gradient, hessian)


def kelvin_transform(f, alpha, dim):
    """x -> |x|^(alpha - d) f(x / |x|^2).  Raises EvaluationAtOrigin at x = 0."""

    def value(x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        r2 = np.sum(x * x, axis=-1)
        if np.any(r2 == 0):
            raise EvaluationAtOrigin("the Kelvin transform is undefined at the origin")
        return r2 ** ((alpha - dim) / 2.0) * f.value(x / r2[:, None])

    kinks = None
    if f.kinks is not None:
        # kinks of f at |y| = 1 map to |x| = 1
        kinks = lambda x, th: _ray_sphere_exit(x, th) if float(x @ x) < 1 else np.array([])
    return SmoothProbe(value, kinks=kinks, kink_radii=(1.0,) if kinks is not None else ())


# ---------------------------------------------------------------- barrier integrals


@dataclass
class BarrierResult:
    s: float
    q: float
    A: float
    B: float
    A_check: float
    excision_gap: float

    def __iter__(self):
        return iter((self.A, self.B))


# test-only mutation hook: -1 flips the sign of the compensating -u(x) term
_COMPENSATION_SIGN = 1.0


@contextmanager
def flipped_compensation():
    """Test-only: evaluate barrier integrals with the compensation sign flipped."""
    global _COMPENSATION_SIGN
    old = _COMPENSATION_SIGN
    _COMPENSATION_SIGN = -old
    try:
        yield
    finally:
        _COMPENSATION_SIGN = old


def _B_integral(s, q):
    # B(q) = int_0^1 (z^q - 1)(1 - z^(2s-1-q)) (1 - z)^(-1-2s) dz, in u = 1 - z
    e = 2.0 * s - 1.0 - q
    lo_exp = 1.0 - 2.0 * s
    hi_exp = min(e, 0.0)

    def g(u):
        if u <= 0:
            return -q * e
        lz = math.log1p(-u) if u < 1 else -math.inf
        if u >= 1:
            return 0.0 if e > 0 else -1.0
        num = math.expm1(q * lz) * -math.expm1(e * lz)
        # divide out the weight u^(1-2s) (1-u)^hi_exp
        return num / u**2 / (1.0 - u) ** hi_exp

    # the excision cross-check in barrier_integrals validates this value
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err = integrate.quad(g, 0.0, 1.0, weight="alg", wvar=(lo_exp, hi_exp), epsabs=1e-13, epsrel=1e-12, limit=200)
    return val, err


def _A_excised(s, q, eps):
    # principal value of int ([(1-z)_+]^q - 1)|z|^(-1-2s) dz with |z| < eps replaced by its Taylor term
    a2 = 2.0 * s

    def left(w):
        return math.expm1(q * math.log1p(w)) * w ** (-1.0 - a2)

    def right(z):
        return math.expm1(q * math.log1p(-z)) * z ** (-1.0 - a2) if z < 1 else -1.0

    opts = dict(epsabs=1e-13, epsrel=1e-12, limit=400)
    L = integrate.quad(left, eps, 1.0, **opts)[0] + integrate.quad(left, 1.0, np.inf, **opts)[0]
    # (1-z)^q has an algebraic endpoint singularity at z = 1
    Rm = integrate.quad(right, eps, 0.5, **opts)[0]
    Rn = integrate.quad(lambda z: z ** (-1.0 - a2), 0.5, 1.0, weight="alg", wvar=(0.0, q), **opts)[0]
    Rn -= integrate.quad(lambda z: z ** (-1.0 - a2), 0.5, 1.0, **opts)[0]
    tail = -_COMPENSATION_SIGN / a2
    core = q * (q - 1.0) * eps ** (2.0 - a2) / (2.0 - a2)
    return L + Rm + Rn + tail + core


def barrier_integrals(s, q_exponent, tol=1e-8, eps=1e-3):
    """A(q) and B(q) for the one-dimensional barrier psi_q.

    A(q) = PV int ([(1-z)_+]^q - 1) |z|^(-1-2s) dz,
    B(q) = int_0^inf (z^q - 1) |1-z|^(-1-2s) dz, integrated in the
    symmetrised form int_0^1 (z^q - 1)(1 - z^(2s-1-q)) (1-z)^(-1-2s) dz.
    A = B - 1/(2s).  A is recomputed independently by excising |z| < eps and
    adding the Taylor term q(q-1) eps^(2-2s) / (2-2s); the two must agree.
    """
    if not 0.5 < s < 1.0:
        raise ValidationError("s must lie in (1/2, 1)")
    if not (s - 0.5 < q_exponent <= s):
        raise ValidationError("q must lie in (s - 1/2, s]")
    B, _ = _B_integral(s, q_exponent)
    A = B - _COMPENSATION_SIGN / (2.0 * s)
    A1 = _A_excised(s, q_exponent, eps)
    A2 = _A_excised(s, q_exponent, eps / 2.0)
    gap = max(abs(A1 - A2), abs(A2 - A))
    if not np.isfinite(A2) or gap > tol * max(1.0, abs(A)) + 1e-7:
        raise SingularityNotResolved(f"excision check failed: A={A:.10g}, excised {A1:.10g}, {A2:.10g}")
    return BarrierResult(float(s), float(q_exponent), float(A), float(B), float(A2), float(gap))


# ---------------------------------------------------------------- weighted norms


@dataclass
class WeightedNormReport:
    r: float
    gamma: float
    seminorms: dict = field(default_factory=dict)
    holder: dict = field(default_factory=dict)
    composite: float = 0.0

    def to_dict(self):
        return {
            "r": self.r,
            "gamma": self.gamma,
            "seminorms": {str(k): v for k, v in self.seminorms.items()},
            "holder": {f"{k},{dl}": v for (k, dl), v in self.holder.items()},
            "composite": self.composite,
        }


def _derivs_1d(vals, h, kmax):
    out = [vals]
    cur = vals
    for _ in range(kmax):
        cur = np.gradient(cur, h, edge_order=2) if cur.size > 2 else np.zeros_like(cur)
        out.append(cur)
    return out


def _pair_sup(x, dx, vals, weight_exp, delta, block=2048):
    """sup over pairs of d_xy^weight_exp |v(x) - v(y)| / |x - y|^delta."""
    best = 0.0
    n = len(vals)
    for s in range(0, n, block):
        xi = x[s : s + block]
        dxy = np.minimum(dx[s : s + block, None], dx[None, :])
        dist = np.linalg.norm(xi[:, None, :] - x[None, :, :], axis=-1)
        dv = np.abs(vals[s : s + block, None] - vals[None, :])
        with np.errstate(divide="ignore", invalid="ignore"):
            qv = np.where(dist > 0, dxy**weight_exp * dv / dist**delta, 0.0)
        best = max(best, float(np.max(qv)))
    return best


def weighted_norms(u, domain=None, r=0.0, gamma=0.5):
    """Grid versions of the distance-weighted seminorms and the composite norm.

    ``u`` is a :class:`GridFunction1D` or a pair ``(points, values)`` with
    points of shape ``(N, d)`` (only k = 0 terms are then available, so
    gamma must be <= 1).  Derivatives use second-order finite differences;
    Holder quotients are exhaustive over node pairs.
    """
    from .grid import GridFunction1D
    from .kernels import Box

    if gamma < 0 or gamma + r < 0:
        raise ValidationError("need gamma >= 0 and gamma + r >= 0")
    if isinstance(u, GridFunction1D):
        x = u.nodes[:, None]
        vals = u.values
        dom = domain or Box([u.a], [u.b])
        h = u.h
        one_d = True
    else:
        x, vals = u
        x = np.atleast_2d(np.asarray(x, dtype=float))
        vals = np.asarray(vals, dtype=float)
        dom = domain
        if dom is None:
            raise ValidationError("a domain is required for scattered values")
        one_d = False
    if vals.size < 8:
        raise GridTooCoarse("at least 8 interior nodes are required")
    dx = dom.dist_to_boundary(x)
    kc = int(math.ceil(gamma))
    top = max(kc - 1, 0)
    if not one_d and top > 0:
        raise ValidationError("derivative seminorms need a GridFunction1D")
    derivs = _derivs_1d(vals, h, top) if one_d else [vals]
    rep = WeightedNormReport(float(r), float(gamma))
    for k in range(top + 1):
        rep.seminorms[k] = float(np.max(dx ** (k + r) * np.abs(derivs[k])))
    if gamma == 0:
        rep.composite = rep.seminorms[0]
        return rep
    delta = gamma + 1 - kc
    rep.holder[(top, delta)] = _pair_sup(x, dx, derivs[top], top + delta + r, delta)
    rep.composite = float(sum(rep.seminorms[k] for k in range(kc)) + rep.holder[(top, delta)])
    return rep
