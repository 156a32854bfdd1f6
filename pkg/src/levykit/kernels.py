"""Kernel models, domains and the named-kernel registry.

A :class:`KernelModel` carries the data of the operator

    I f(x) = b(x) . grad f(x) + int [f(x+z) - f(x) - 1{|z|<=1} grad f(x) . z] pi(x, z) dz

with ``pi(x, z) = scale * k(x, z) / |z|**(d + alpha)``.  ``scale`` defaults to
:func:`frac_constant`, so that ``k == 1, b == 0`` is exactly the fractional
Laplacian ``-(-Delta)**(alpha/2)`` with Fourier symbol ``-|xi|**alpha``.

Callables are vectorised: ``drift(x)`` maps an ``(m, d)`` array to ``(m, d)``
and ``numerator(x, z)`` maps broadcast-compatible ``(m, d)`` arrays to ``(m,)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import enum
import math
from typing import Callable

import numpy as np

from . import _quad
from .errors import NonIntegrableKernel, SymmetryViolation, ValidationError


def frac_constant(d, alpha):
    """Normalising constant c(d, alpha) of the fractional Laplacian.

    c(d, alpha) = alpha 2**(alpha-1) Gamma((d+alpha)/2) / (pi**(d/2) Gamma(1-alpha/2)),
    the value for which c * int [f(x+z) - f(x) - grad f(x).z 1{|z|<=1}] |z|**(-d-alpha) dz
    equals -(-Delta)**(alpha/2) f with symbol |xi|**alpha.  The process with
    this jump density has characteristic function exp(-t |xi|**alpha).
    """
    return (
        alpha
        * 2.0 ** (alpha - 1.0)
        * math.gamma((d + alpha) / 2.0)
        / (math.pi ** (d / 2.0) * math.gamma(1.0 - alpha / 2.0))
    )


def bump(r):
    """C^2 radial cutoff: 1 on [0, 1/2], 0 on [1, inf).

    Between 1/2 and 1 it is 1 - S(t), t = 2r - 1, with the quintic
    smoothstep S(t) = 10 t^3 - 15 t^4 + 6 t^5 (monotone, S', S'' vanish at
    both ends).  ``r`` is the Euclidean norm of the argument.
    """
    r = np.asarray(r, dtype=float)
    t = np.clip(2.0 * r - 1.0, 0.0, 1.0)
    return 1.0 - t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)


def ray_sphere_hits(x, th, radius=1.0):
    """Radii r > 0 with |x + r th| = radius (th a unit vector)."""
    b = float(x @ th)
    c = float(x @ x) - radius**2
    disc = b * b - c
    if disc < 0:
        return np.array([])
    rs = np.array([-b - math.sqrt(disc), -b + math.sqrt(disc)])
    return rs[rs > 0]


def _norm(x):
    return np.sqrt(np.sum(np.square(x), axis=-1))


def _as_points(x, dim=None):
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1, 1)
    elif x.ndim == 1:
        x = x.reshape(1, -1) if dim is None or x.size == dim else x.reshape(-1, 1)
    return x


# ---------------------------------------------------------------- domains


class DomainSpec:
    """Base class for the open sets used as stopping domains.

    ``contains`` is the exact (open) membership test; ``closure_contains``
    the membership of the closure.
    """

    dim: int
    bounded = True

    def contains(self, x):
        raise NotImplementedError

    def closure_contains(self, x):
        raise NotImplementedError

    def dist_to_boundary(self, x):
        raise NotImplementedError

    def project_to_boundary(self, x):
        raise NotImplementedError

    @property
    def length_scale(self):
        raise NotImplementedError

    def to_dict(self):
        raise NotImplementedError

    def sample(self, n, rng):
        """Uniform points inside a bounded domain, by rejection from a bounding box."""
        lo, hi = self._bbox()
        out = []
        got = 0
        while got < n:
            pts = rng.uniform(lo, hi, size=(max(4 * n, 64), self.dim))
            pts = pts[self.contains(pts)]
            out.append(pts)
            got += len(pts)
        return np.concatenate(out)[:n]


def _check_center(center):
    c = np.atleast_1d(np.asarray(center, dtype=float))
    if c.ndim != 1:
        raise ValidationError("center must be a point")
    return c


@dataclass(frozen=True, eq=False)
class Ball(DomainSpec):
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", _check_center(self.center))
        if not self.radius > 0:
            raise ValidationError("radius must be positive")

    @property
    def dim(self):
        return self.center.size

    def contains(self, x):
        x = _as_points(x, self.dim)
        return _norm(x - self.center) < self.radius

    def closure_contains(self, x):
        x = _as_points(x, self.dim)
        return _norm(x - self.center) <= self.radius

    def dist_to_boundary(self, x):
        x = _as_points(x, self.dim)
        return np.abs(self.radius - _norm(x - self.center))

    def project_to_boundary(self, x):
        x = _as_points(x, self.dim)
        v = x - self.center
        n = _norm(v)[:, None]
        n = np.where(n == 0, 1.0, n)
        return self.center + self.radius * v / n

    @property
    def length_scale(self):
        return self.radius

    def _bbox(self):
        return self.center - self.radius, self.center + self.radius

    def to_dict(self):
        return {"shape": "ball", "center": self.center.tolist(), "radius": self.radius}


@dataclass(frozen=True, eq=False)
class Box(DomainSpec):
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = _check_center(self.lo)
        hi = _check_center(self.hi)
        if lo.shape != hi.shape or not np.all(lo < hi):
            raise ValidationError("Box needs lo < hi componentwise")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self):
        return self.lo.size

    def contains(self, x):
        x = _as_points(x, self.dim)
        return np.all((x > self.lo) & (x < self.hi), axis=1)

    def closure_contains(self, x):
        x = _as_points(x, self.dim)
        return np.all((x >= self.lo) & (x <= self.hi), axis=1)

    def dist_to_boundary(self, x):
        x = _as_points(x, self.dim)
        inside = self.closure_contains(x)
        d_in = np.min(np.minimum(x - self.lo, self.hi - x), axis=1)
        gap = np.maximum(np.maximum(self.lo - x, x - self.hi), 0.0)
        return np.where(inside, d_in, _norm(gap))

    def project_to_boundary(self, x):
        x = _as_points(x, self.dim)
        y = np.clip(x, self.lo, self.hi)
        inside = self.contains(x)
        if np.any(inside):
            xi = y[inside]
            dl = xi - self.lo
            dh = self.hi - xi
            j = np.argmin(np.minimum(dl, dh), axis=1)
            rows = np.arange(len(xi))
            to_lo = dl[rows, j] <= dh[rows, j]
            xi[rows, j] = np.where(to_lo, self.lo[j], self.hi[j])
            y[inside] = xi
        return y

    @property
    def length_scale(self):
        return float(np.min(self.hi - self.lo) / 2.0)

    def _bbox(self):
        return self.lo, self.hi

    def to_dict(self):
        return {"shape": "box", "lo": self.lo.tolist(), "hi": self.hi.tolist()}


@dataclass(frozen=True, eq=False)
class ComplementOfBall(DomainSpec):
    """The open set {|x - center| > radius}."""

    center: np.ndarray
    radius: float
    bounded = False

    def __post_init__(self):
        object.__setattr__(self, "center", _check_center(self.center))
        if not self.radius > 0:
            raise ValidationError("radius must be positive")

    @property
    def dim(self):
        return self.center.size

    def contains(self, x):
        x = _as_points(x, self.dim)
        return _norm(x - self.center) > self.radius

    def closure_contains(self, x):
        x = _as_points(x, self.dim)
        return _norm(x - self.center) >= self.radius

    def dist_to_boundary(self, x):
        x = _as_points(x, self.dim)
        return np.abs(_norm(x - self.center) - self.radius)

    def project_to_boundary(self, x):
        return Ball(self.center, self.radius).project_to_boundary(x)

    @property
    def length_scale(self):
        return self.radius

    def sample(self, n, rng):
        return Annulus(self.center, self.radius, 10.0 * self.radius).sample(n, rng)

    def to_dict(self):
        return {"shape": "complement_of_ball", "center": self.center.tolist(), "radius": self.radius}


@dataclass(frozen=True, eq=False)
class Annulus(DomainSpec):
    """The open shell {r_in < |x - center| < r_out}."""

    center: np.ndarray
    r_in: float
    r_out: float

    def __post_init__(self):
        object.__setattr__(self, "center", _check_center(self.center))
        if not 0 < self.r_in < self.r_out:
            raise ValidationError("Annulus needs 0 < r_in < r_out")

    @property
    def dim(self):
        return self.center.size

    def contains(self, x):
        x = _as_points(x, self.dim)
        r = _norm(x - self.center)
        return (r > self.r_in) & (r < self.r_out)

    def closure_contains(self, x):
        x = _as_points(x, self.dim)
        r = _norm(x - self.center)
        return (r >= self.r_in) & (r <= self.r_out)

    def dist_to_boundary(self, x):
        x = _as_points(x, self.dim)
        r = _norm(x - self.center)
        return np.minimum(np.abs(r - self.r_in), np.abs(self.r_out - r))

    def project_to_boundary(self, x):
        x = _as_points(x, self.dim)
        r = _norm(x - self.center)
        use_in = np.abs(r - self.r_in) <= np.abs(self.r_out - r)
        inner = Ball(self.center, self.r_in).project_to_boundary(x)
        outer = Ball(self.center, self.r_out).project_to_boundary(x)
        return np.where(use_in[:, None], inner, outer)

    @property
    def length_scale(self):
        return (self.r_out - self.r_in) / 2.0

    def _bbox(self):
        return self.center - self.r_out, self.center + self.r_out

    def to_dict(self):
        return {"shape": "annulus", "center": self.center.tolist(), "r_in": self.r_in, "r_out": self.r_out}


@dataclass(frozen=True, eq=False)
class Cone(DomainSpec):
    """Closed cone {x : angle(x - vertex, axis) <= half_angle}.

    In d = 1 this is the closed half line in the direction of ``axis``.
    """

    axis: np.ndarray
    half_angle: float = math.pi / 2
    vertex: np.ndarray | None = None
    bounded = False

    def __post_init__(self):
        a = _check_center(self.axis)
        a = a / np.linalg.norm(a)
        object.__setattr__(self, "axis", a)
        v = np.zeros_like(a) if self.vertex is None else _check_center(self.vertex)
        object.__setattr__(self, "vertex", v)
        if not 0 < self.half_angle < math.pi:
            raise ValidationError("cone angle must lie in (0, pi)")

    @property
    def dim(self):
        return self.axis.size

    def _cos(self, x):
        v = _as_points(x, self.dim) - self.vertex
        n = _norm(v)
        with np.errstate(invalid="ignore", divide="ignore"):
            c = (v @ self.axis) / n
        return np.where(n == 0, 1.0, c)

    def contains(self, x):
        if self.dim == 1:
            return (_as_points(x, 1)[:, 0] - self.vertex[0]) * self.axis[0] >= 0
        return self._cos(x) >= math.cos(self.half_angle)

    closure_contains = contains

    def dist_to_boundary(self, x):
        v = _as_points(x, self.dim) - self.vertex
        if self.dim == 1:
            return np.abs(v[:, 0])
        n = _norm(v)
        ang = np.arccos(np.clip(self._cos(x), -1.0, 1.0))
        return np.where(ang < math.pi / 2 + self.half_angle, n * np.abs(np.sin(np.minimum(np.abs(ang - self.half_angle), math.pi / 2))), n)

    def project_to_boundary(self, x):
        v = _as_points(x, self.dim) - self.vertex
        if self.dim == 1:
            return np.broadcast_to(self.vertex, v.shape).copy()
        a = v @ self.axis
        perp = v - a[:, None] * self.axis
        pn = _norm(perp)[:, None]
        # any perpendicular direction will do on the axis itself
        fallback = np.zeros(self.dim)
        fallback[np.argmin(np.abs(self.axis))] = 1.0
        fallback -= (fallback @ self.axis) * self.axis
        fallback /= np.linalg.norm(fallback)
        e = np.where(pn > 0, perp / np.where(pn > 0, pn, 1.0), fallback)
        ray = math.cos(self.half_angle) * self.axis + math.sin(self.half_angle) * e
        s = np.maximum(np.sum(v * ray, axis=1), 0.0)
        return self.vertex + s[:, None] * ray

    @property
    def length_scale(self):
        return 1.0

    def to_dict(self):
        return {"shape": "cone", "axis": self.axis.tolist(), "half_angle": self.half_angle, "vertex": self.vertex.tolist()}


@dataclass(frozen=True, eq=False)
class Complement(DomainSpec):
    """Open complement of the closure of a bounded ``inner`` domain."""

    inner: DomainSpec
    bounded = False

    @property
    def dim(self):
        return self.inner.dim

    def contains(self, x):
        return ~self.inner.closure_contains(x)

    def closure_contains(self, x):
        return ~self.inner.contains(x)

    def dist_to_boundary(self, x):
        return self.inner.dist_to_boundary(x)

    def project_to_boundary(self, x):
        return self.inner.project_to_boundary(x)

    @property
    def length_scale(self):
        return self.inner.length_scale

    def to_dict(self):
        return {"shape": "complement", "inner": self.inner.to_dict()}


def complement(domain):
    """Open complement of a closed target set (used for hitting times)."""
    if isinstance(domain, Ball):
        return ComplementOfBall(domain.center, domain.radius)
    if isinstance(domain, ComplementOfBall):
        return Ball(domain.center, domain.radius)
    return Complement(domain)


def domain_from_dict(spec):
    """Build a domain from a plain mapping (config files, JSON)."""
    s = dict(spec)
    shape = s.pop("shape")
    if shape == "ball":
        return Ball(s["center"], float(s["radius"]))
    if shape == "box":
        return Box(s["lo"], s["hi"])
    if shape == "complement_of_ball":
        return ComplementOfBall(s["center"], float(s["radius"]))
    if shape == "annulus":
        return Annulus(s["center"], float(s["r_in"]), float(s["r_out"]))
    if shape == "cone":
        return Cone(s["axis"], float(s.get("half_angle", math.pi / 2)), s.get("vertex"))
    if shape == "interval":
        return Box([float(s["a"])], [float(s["b"])])
    raise ValidationError(f"unknown domain shape {shape!r}")


# ---------------------------------------------------------------- kernels


class KernelClass(enum.Enum):
    SYMMETRIC_NUMERATOR = "SymmetricNumerator"
    WEAKLY_HOELDER = "WeaklyHoelder"
    GENERAL_MEASURABLE = "GeneralMeasurable"
    VARIABLE_ORDER = "VariableOrder"


def zero_drift(x):
    return np.zeros_like(np.asarray(x, dtype=float))


def constant_drift(v):
    v = np.atleast_1d(np.asarray(v, dtype=float))

    def drift(x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(v, x.shape).copy()

    drift.spec = {"kind": "constant", "value": v.tolist()}
    return drift


def linear_drift(coef):
    """b(x) = coef * x (coef = -1 gives the mean-reverting model)."""

    def drift(x):
        return coef * np.asarray(x, dtype=float)

    drift.spec = {"kind": "linear", "coef": coef}
    return drift


def radial_power_drift(coef, power):
    """b(x) = coef * x * |x|**power."""

    def drift(x):
        x = np.asarray(x, dtype=float)
        return coef * x * _norm(x)[..., None] ** power

    drift.spec = {"kind": "radial_power", "coef": coef, "power": power}
    return drift


zero_drift.spec = {"kind": "zero"}


@dataclass(frozen=True, eq=False)
class KernelModel:
    """Drift plus jump kernel of a non-local operator.

    Parameters
    ----------
    dim, alpha
        Dimension and stability index, ``1 < alpha < 2``.
    drift
        Vectorised ``b``.
    numerator
        Vectorised ``k(x, z) > 0``.
    class_tag
        Structural class; ``SYMMETRIC_NUMERATOR`` promises ``k(x, z) = k(x, -z)``.
    lambda_bound
        Optional two-sided bound ``1/lambda <= k <= lambda`` and ``|b| <= lambda``
        on the region of interest.
    scale
        Multiplier in front of ``k / |z|**(d+alpha)``; ``None`` means
        :func:`frac_constant`.
    envelope
        Pairs ``(w_i, a_i)`` with ``pi(x, z) <= scale * sum_i w_i |z|**(-d-a_i)``
        for every ``x`` and every ``|z| >= eps`` used in simulation.
    z_free
        If given, ``k(x, z) = z_free(x)``; the process is then a state-dependent
        time change of the stable process and is simulated with stable variates.
    tail_exponent
        Decay exponent ``a`` of ``pi(x, z) ~ |z|**(-d-a)`` for large ``|z|``.
    """

    dim: int
    alpha: float
    drift: Callable = zero_drift
    numerator: Callable | None = None
    class_tag: KernelClass = KernelClass.SYMMETRIC_NUMERATOR
    lambda_bound: float | None = None
    scale: float | None = None
    envelope: tuple = ()
    z_free: Callable | None = None
    tail_exponent: float | None = None
    name: str = "custom"
    params: dict = field(default_factory=dict)
    structure: object = None
    small_jump_variance: Callable | None = None
    compensation: Callable | None = None

    def __post_init__(self):
        if not (isinstance(self.dim, (int, np.integer)) and self.dim >= 1):
            raise ValidationError("dim must be a positive integer")
        if not 1.0 < self.alpha < 2.0:
            raise ValidationError(f"alpha must lie in (1, 2), got {self.alpha}")
        if self.numerator is None and self.z_free is None:
            raise ValidationError("a numerator or a z_free level is required")
        if self.numerator is None:
            a = self.z_free
            object.__setattr__(self, "numerator", lambda x, z: np.broadcast_to(a(np.asarray(x, float)), np.broadcast_shapes(np.shape(x)[:-1], np.shape(z)[:-1])))
        if self.scale is None:
            object.__setattr__(self, "scale", frac_constant(self.dim, self.alpha))
        if not self.envelope:
            lam = self.lambda_bound if self.lambda_bound is not None else 1.0
            object.__setattr__(self, "envelope", ((float(lam), self.alpha),))
        if self.tail_exponent is None:
            object.__setattr__(self, "tail_exponent", min(a for _, a in self.envelope))
        if self.lambda_bound is not None and not self.lambda_bound > 0:
            raise ValidationError("lambda_bound must be positive")

    @property
    def symmetric(self):
        return self.class_tag is KernelClass.SYMMETRIC_NUMERATOR

    def pi(self, x, z):
        """Jump density pi(x, z) (vectorised)."""
        x = np.asarray(x, dtype=float)
        z = np.asarray(z, dtype=float)
        return self.scale * self.numerator(x, z) * _norm(z) ** (-self.dim - self.alpha)

    def envelope_density(self, z):
        r = _norm(np.asarray(z, dtype=float))
        return self.scale * sum(w * r ** (-self.dim - a) for w, a in self.envelope)

    def with_drift(self, drift):
        return _replace(self, drift=drift)

    def scaled(self, c):
        """Same kernel with the numerator multiplied by the constant ``c``."""
        return _replace(self, scale=self.scale * c, name=f"{self.name}*{c:g}")

    def describe(self):
        return {
            "name": self.name,
            "dim": int(self.dim),
            "alpha": self.alpha,
            "class": self.class_tag.value,
            "scale": self.scale,
            "params": {k: v for k, v in self.params.items()},
            "drift": getattr(self.drift, "spec", {"kind": "custom"}),
        }


def _replace(model, **changes):
    import dataclasses

    return dataclasses.replace(model, **changes)


@dataclass(frozen=True)
class VariableOrderKernel:
    """Bump-perturbed two-exponent kernel.

    pi(x, z) = |z|**(-d-alpha) + |z|**(-d-beta' - gamma(x, z)),
    gamma(x, z) = phi(2 (x+z) / (1+|x|)) (1 - phi(4x)) (alpha' - beta'),
    with 1 < alpha' < beta' < alpha < 2 and ``phi`` = :func:`bump`.
    Jumps landing near the origin from far away see the heavier
    ``alpha'`` tail; this is what makes the process recurrent without drift.
    """

    alpha_prime: float
    beta_prime: float
    alpha: float
    dim: int = 1

    def __post_init__(self):
        if not 1.0 < self.alpha_prime < self.beta_prime < self.alpha < 2.0:
            raise ValidationError("need 1 < alpha' < beta' < alpha < 2")

    def gamma(self, x, z):
        x = np.asarray(x, dtype=float)
        z = np.asarray(z, dtype=float)
        nx = _norm(x)
        outer = bump(2.0 * _norm(x + z) / (1.0 + nx))
        inner = 1.0 - bump(4.0 * nx)
        return outer * inner * (self.alpha_prime - self.beta_prime)

    def pi(self, x, z):
        r = _norm(np.asarray(z, dtype=float))
        d = self.dim
        return r ** (-d - self.alpha) + r ** (-d - self.beta_prime - self.gamma(x, z))

    def numerator(self, x, z):
        r = _norm(np.asarray(z, dtype=float))
        return 1.0 + r ** (self.alpha - self.beta_prime - self.gamma(x, z))

    def z_kinks(self, x, th):
        """Radii along the ray x + r th where the bump in gamma switches smoothness."""
        rho = 1.0 + float(np.linalg.norm(x))
        return np.concatenate([ray_sphere_hits(x, th, 0.25 * rho), ray_sphere_hits(x, th, 0.5 * rho)])

    def kink_radii(self, x):
        rho = 1.0 + float(np.linalg.norm(x))
        return (0.25 * rho, 0.5 * rho)

    def small_jump_variance(self, x, eps):
        d = self.dim
        g0 = self.gamma(x, np.zeros_like(np.asarray(x, dtype=float)))
        e2 = 2.0 - self.beta_prime - g0
        tot = eps ** (2.0 - self.alpha) / (2.0 - self.alpha) + eps**e2 / e2
        return _quad.sphere_measure(d) / d * tot

    def model(self, drift=zero_drift):
        vo = self
        return KernelModel(
            dim=self.dim,
            alpha=self.alpha,
            drift=drift,
            numerator=self.numerator,
            class_tag=KernelClass.VARIABLE_ORDER,
            scale=1.0,
            envelope=((1.0, self.alpha), (1.0, self.beta_prime), (1.0, self.alpha_prime)),
            tail_exponent=self.beta_prime,
            name="variable_order",
            params={"alpha_prime": self.alpha_prime, "beta_prime": self.beta_prime},
            structure=self,
            small_jump_variance=lambda x, eps: vo.small_jump_variance(x, eps),
            compensation=lambda x, eps: _vo_compensation(vo, x, eps),
        )


def _vo_compensation(vo, x, eps):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    # gamma(x, z) vanishes for |z| <= 1 unless |x| < 3 and |x| > 1/8
    nx = _norm(x)
    sel = (nx < 3.0) & (nx > 0.125)
    if np.any(sel):
        m = vo.model()
        out[sel] = generic_compensation(m, x[sel], eps)
    return out


def generic_compensation(model, x, eps, order=8, per_decade=4, n_ang=16):
    """-int_{eps <= |z| <= 1} z pi(x, z) dz by polar Gauss quadrature, for each row of x."""
    x = np.asarray(x, dtype=float)
    d = model.dim
    dirs, wa = _quad.sphere_rule(d, n_ang)
    r, wr = _quad.panel_rule(_quad.log_edges(eps, 1.0, per_decade), order)
    z = (r[:, None, None] * dirs[None, :, :]).reshape(-1, d)
    w = (wr[:, None] * wa[None, :]).ravel()
    out = np.empty_like(x)
    for i in range(len(x)):
        p = model.pi(x[i : i + 1], z) * _norm(z) ** (d - 1)
        out[i] = -np.sum((w * p)[:, None] * z, axis=0)
    return out


# ---------------------------------------------------------------- registry


def _const_kernel(dim, alpha, level=1.0, drift=zero_drift, scale=None):
    level = float(level)
    return KernelModel(
        dim=dim,
        alpha=alpha,
        drift=drift,
        z_free=lambda x: np.full(np.shape(x)[:-1], level),
        class_tag=KernelClass.SYMMETRIC_NUMERATOR,
        lambda_bound=max(level, 1.0 / level),
        scale=scale,
        envelope=((level, alpha),),
        name="constant",
        params={"level": level},
    )


def _holder_bump_kernel(dim, alpha, amp=0.2, freq=1.0, drift=zero_drift):
    """k(x, z) = 1 + amp * sin(freq * x_1): Lipschitz in x, independent of z."""
    amp = float(amp)
    freq = float(freq)
    if not 0 <= amp < 1:
        raise ValidationError("amp must lie in [0, 1)")
    lam = max(1.0 + amp, 1.0 / (1.0 - amp))
    return KernelModel(
        dim=dim,
        alpha=alpha,
        drift=drift,
        z_free=lambda x: 1.0 + amp * np.sin(freq * np.asarray(x)[..., 0]),
        class_tag=KernelClass.WEAKLY_HOELDER,
        lambda_bound=lam,
        envelope=((1.0 + amp, alpha),),
        name="holder_bump",
        params={"amp": amp, "freq": freq},
    )


def _holder_z_kernel(dim, alpha, amp=0.2, freq=1.0, drift=zero_drift):
    """k(x, z) = 1 + amp (1 + sin(freq x_1))/2 (1 - exp(-|z|^2)).

    Symmetric in z, and |k(x, z) - k(x, 0)| <= amp |z|^2, so the integrability
    condition on k(x, .) - k(x, 0) holds for every theta in (0, 1).
    """
    amp = float(amp)
    freq = float(freq)

    def k(x, z):
        x = np.asarray(x, dtype=float)
        z = np.asarray(z, dtype=float)
        a = 0.5 * (1.0 + np.sin(freq * x[..., 0]))
        return 1.0 + amp * a * -np.expm1(-np.sum(z * z, axis=-1))

    def var(x, eps):
        # k is 1 + O(|z|^2) near the origin; the O(eps^2) correction is dropped
        return np.full(np.shape(x)[0], _quad.sphere_measure(dim) / dim * eps ** (2 - alpha) / (2 - alpha))

    return KernelModel(
        dim=dim,
        alpha=alpha,
        drift=drift,
        numerator=k,
        class_tag=KernelClass.SYMMETRIC_NUMERATOR,
        lambda_bound=1.0 + amp,
        envelope=((1.0 + amp, alpha),),
        name="holder_z",
        params={"amp": amp, "freq": freq},
        small_jump_variance=lambda x, eps: frac_constant(dim, alpha) * var(x, eps),
    )


def _skewed_kernel(dim, alpha, amp=0.3, drift=zero_drift):
    """Non-symmetric numerator k(x, z) = 1 + amp tanh(z_1) cos(x_1) (general measurable class)."""
    amp = float(amp)
    if not 0 <= amp < 1:
        raise ValidationError("amp must lie in [0, 1)")

    def k(x, z):
        x = np.asarray(x, dtype=float)
        z = np.asarray(z, dtype=float)
        return 1.0 + amp * np.tanh(z[..., 0]) * np.cos(x[..., 0])

    return KernelModel(
        dim=dim,
        alpha=alpha,
        drift=drift,
        numerator=k,
        class_tag=KernelClass.GENERAL_MEASURABLE,
        lambda_bound=max(1.0 + amp, 1.0 / (1.0 - amp)),
        envelope=((1.0 + amp, alpha),),
        name="skewed",
        params={"amp": amp},
    )


def _variable_order_kernel(dim, alpha, alpha_prime=1.2, beta_prime=1.5, drift=zero_drift):
    return VariableOrderKernel(float(alpha_prime), float(beta_prime), alpha, dim).model(drift=drift)


KERNELS = {
    "constant": _const_kernel,
    "holder_bump": _holder_bump_kernel,
    "holder_z": _holder_z_kernel,
    "skewed": _skewed_kernel,
    "variable_order": _variable_order_kernel,
}

DRIFTS = {
    "zero": lambda: zero_drift,
    "constant": lambda value=0.0: constant_drift(value),
    "linear": lambda coef=-1.0: linear_drift(float(coef)),
    "radial_power": lambda coef=1.0, power=1.0: radial_power_drift(float(coef), float(power)),
}


def make_drift(spec, dim=1):
    """Drift from a registry spec: a name, or a mapping with key ``kind``."""
    if spec is None:
        return zero_drift
    if isinstance(spec, str):
        spec = {"kind": spec}
    spec = dict(spec)
    kind = spec.pop("kind")
    if kind not in DRIFTS:
        raise ValidationError(f"unknown drift {kind!r}")
    if kind == "constant" and "value" in spec:
        v = np.atleast_1d(np.asarray(spec["value"], dtype=float))
        spec["value"] = np.broadcast_to(v, (dim,)).copy()
    return DRIFTS[kind](**spec)


def make_kernel(key, dim, alpha, drift=None, **params):
    """Look up a named kernel; unknown keys raise :class:`ValidationError` naming the key."""
    if key not in KERNELS:
        raise ValidationError(f"unknown kernel key {key!r} (known: {', '.join(sorted(KERNELS))})")
    return KERNELS[key](int(dim), float(alpha), drift=make_drift(drift, int(dim)), **params)


# ---------------------------------------------------------------- validation


@dataclass
class ProbeEntry:
    x: list
    integral: float
    positive: bool
    symmetry_residual: float | None = None
    bounds_ok: bool | None = None
    gamma_range: tuple | None = None
    gamma_zero_residual: float | None = None


@dataclass
class ValidationReport:
    model: dict
    entries: list
    ok: bool
    messages: list = field(default_factory=list)

    def to_dict(self):
        import dataclasses

        return {"model": self.model, "ok": self.ok, "messages": self.messages, "entries": [dataclasses.asdict(e) for e in self.entries]}


def _power_fit(k1, k2, k4, r1, rho=2.0):
    """Fit k(r) = c + B r**p through k at r1, rho r1, rho**2 r1.

    Returns (c, B, p); a constant numerator gives B = 0.
    """
    d1 = k2 - k1
    d2 = k4 - k2
    scale = max(abs(k1), abs(k2), abs(k4), 1e-300)
    if abs(d1) <= 1e-13 * scale or abs(d2) <= 1e-13 * scale or d1 * d2 <= 0:
        return k1, 0.0, 0.0
    p = math.log(d2 / d1) / math.log(rho)
    B = d1 / (r1**p * (rho**p - 1.0))
    return k1 - B * r1**p, B, p


def _core_closure(c, B, p, delta, e):
    # int_0^delta (c + B r^p) r^(e-1) dr
    if c != 0 and e <= 0:
        return math.inf
    out = c * delta**e / e if c != 0 else 0.0
    if B != 0:
        if e + p <= 0:
            return math.inf
        out += B * delta ** (e + p) / (e + p)
    return out


def _tail_closure(c, B, p, R, a):
    # int_R^inf (c + B r^p) r^(-1-a) dr
    out = c * R ** (-a) / a
    if B != 0:
        if p >= a:
            return math.inf
        out += B * R ** (p - a) / (a - p)
    return out


def truncated_integrability(model, x, delta=1e-4, r_max=1e4, n_ang=32, per_decade=6, order=8):
    """Estimate int (|z|^2 ^ 1) pi(x, z) dz with power-law closures at both ends.

    Near 0 and near infinity the numerator along each direction is fitted by
    c + B r**p from three geometric samples; returns ``inf`` when the fitted
    behaviour is not integrable.
    """
    d = model.dim
    x = np.asarray(x, dtype=float).reshape(1, d)
    dirs, wa = _quad.sphere_rule(d, n_ang)
    edges = np.unique(np.concatenate([_quad.log_edges(delta, r_max, per_decade), [1.0]]))
    r, wr = _quad.panel_rule(edges, order)
    a = model.alpha
    total = 0.0
    for th, w in zip(dirs, wa):
        z = r[:, None] * th[None, :]
        k = model.numerator(x, z)
        body = np.sum(wr * np.minimum(r * r, 1.0) * k * r ** (-1.0 - a))
        kc = model.numerator(x, np.array([[delta], [delta / 2], [delta / 4]]) * th[None, :])
        c0, B0, p0 = _power_fit(kc[0], kc[1], kc[2], delta, rho=0.5)
        kt = model.numerator(x, np.array([[r_max], [2 * r_max], [4 * r_max]]) * th[None, :])
        ct, Bt, pt = _power_fit(kt[0], kt[1], kt[2], r_max)
        core = _core_closure(c0, B0, p0, delta, 2.0 - a)
        tail = _tail_closure(ct, Bt, pt, r_max, a)
        if not (math.isfinite(core) and math.isfinite(tail)):
            return math.inf
        total += w * (body + core + tail)
    return model.scale * total


def validate(model, probe_region, n_probes=8, seed=0, rel_tol=1e-3, sym_tol=1e-10):
    """Check integrability, positivity, symmetry and bounds of ``model`` at sampled points.

    Raises
    ------
    NonIntegrableKernel
        If the numerator is not strictly positive and finite, or the
        truncated integral of (|z|^2 ^ 1) pi fails the Cauchy test under
        halving the core radius and doubling the tail radius.
    SymmetryViolation
        If a ``SymmetricNumerator`` model has k(x, z) != k(x, -z).
    """
    if n_probes < 1:
        raise ValidationError("n_probes must be >= 1")
    if probe_region.dim != model.dim:
        raise ValidationError("probe region dimension does not match the model")
    rng = np.random.default_rng(seed)
    probes = probe_region.sample(n_probes, rng)
    d = model.dim
    dirs, _ = _quad.sphere_rule(d, 16)
    radii = np.geomspace(1e-3, 1e3, 25)
    zs = (radii[:, None, None] * dirs[None, :, :]).reshape(-1, d)
    entries = []
    ok = True
    msgs = []
    vo = model.structure if isinstance(model.structure, VariableOrderKernel) else None
    for x in probes:
        xx = x[None, :]
        k = np.asarray(model.numerator(xx, zs), dtype=float)
        positive = bool(np.all(np.isfinite(k)) and np.all(k > 0))
        if not positive:
            raise NonIntegrableKernel(f"numerator is not strictly positive and finite at x={x.tolist()}")
        sym = None
        if model.symmetric:
            km = np.asarray(model.numerator(xx, -zs), dtype=float)
            sym = float(np.max(np.abs(k - km)))
            if sym > sym_tol * max(1.0, float(np.max(np.abs(k)))):
                raise SymmetryViolation(f"k(x,z) != k(x,-z) at x={x.tolist()} (residual {sym:.3g})")
        i1 = truncated_integrability(model, x)
        i2 = truncated_integrability(model, x, delta=0.5e-4, r_max=2e4)
        if not (np.isfinite(i1) and np.isfinite(i2)) or abs(i1 - i2) > rel_tol * abs(i2):
            raise NonIntegrableKernel(f"int (|z|^2 ^ 1) pi(x,z) dz does not converge at x={x.tolist()} ({i1}, {i2})")
        bounds_ok = None
        if model.lambda_bound is not None:
            lam = model.lambda_bound
            bounds_ok = bool(np.all(k >= 1.0 / lam - 1e-12) and np.all(k <= lam + 1e-12))
            if model.drift is not None:
                bounds_ok = bounds_ok and bool(np.linalg.norm(model.drift(xx)) <= lam + 1e-12)
            if not bounds_ok:
                ok = False
                msgs.append(f"lambda bound violated at x={x.tolist()}")
        g_range = g_zero = None
        if vo is not None:
            g = vo.gamma(np.broadcast_to(xx, zs.shape), zs)
            g_range = (float(g.min()), float(g.max()))
            if g_range[0] < vo.alpha_prime - vo.beta_prime - 1e-14 or g_range[1] > 1e-14:
                ok = False
                msgs.append("gamma outside [alpha'-beta', 0]")
            far = _norm(xx + zs) >= (1.0 + np.linalg.norm(x)) / 2.0
            resid = np.abs(vo.pi(np.broadcast_to(xx, zs.shape), zs) - (_norm(zs) ** (-d - vo.alpha) + _norm(zs) ** (-d - vo.beta_prime)))
            g_zero = float(np.max(resid[far] / vo.pi(np.broadcast_to(xx, zs.shape), zs)[far])) if np.any(far) else 0.0
        entries.append(ProbeEntry(x.tolist(), float(i2), positive, sym, bounds_ok, g_range, g_zero))
    return ValidationReport(model.describe(), entries, ok, msgs)


@dataclass
class GrowthReport:
    radii: list
    margins: list
    k0_estimate: float
    consistent: bool

    def to_dict(self):
        return {"radii": self.radii, "margins": self.margins, "k0_estimate": self.k0_estimate, "consistent": self.consistent}


def growth_condition_check(model, radii, n_dirs=16, z_radii=None):
    """Per-radius margin sup (x.b(x) v |x| k(x,z)) / (1 + |x|^2) over sampled |x| = R and z.

    ``consistent`` is True when the margin envelope does not increase past
    the smallest radius, i.e. a single constant K0 covers every sampled radius.
    """
    radii = np.asarray(radii, dtype=float)
    if np.any(radii <= 0) or np.any(np.diff(radii) < 0):
        raise ValidationError("radii must be positive and sorted")
    d = model.dim
    dirs, _ = _quad.sphere_rule(d, n_dirs)
    if z_radii is None:
        z_radii = np.geomspace(1e-3, 1e3, 31)
    zs = (np.asarray(z_radii)[:, None, None] * dirs[None, :, :]).reshape(-1, d)
    margins = []
    for R in radii:
        xs = R * dirs
        drift_term = np.sum(xs * model.drift(xs), axis=1)
        kmax = np.array([np.max(model.numerator(x[None, :], zs)) for x in xs])
        m = np.maximum(drift_term, R * kmax) / (1.0 + R * R)
        margins.append(float(np.max(m)))
    margins_a = np.array(margins)
    k0 = float(margins_a.max())
    # non-increasing envelope beyond the first radius
    run_max = np.maximum.accumulate(margins_a)
    consistent = bool(margins_a[-1] <= run_max[0] * (1 + 1e-9) or margins_a[-1] <= margins_a[:-1].max() * (1 + 1e-9) if len(margins_a) > 1 else True)
    if len(margins_a) > 2:
        tail = margins_a[len(margins_a) // 2 :]
        consistent = consistent and bool(tail[-1] <= tail[0] * (1 + 1e-6))
    return GrowthReport(radii.tolist(), margins, k0, consistent)
