"""Random variates for stable processes and thinned kernel jumps.

All randomness flows through :class:`RngStream`, a Philox (counter-based)
generator keyed by ``(seed, stream key)``.  Streams with different keys are
independent; the same key replays the same sequence bit for bit.

Scale convention: the unit stable variate ``S`` has characteristic function
``exp(-|xi|**alpha)``, which is the time-1 law of the process generated by
``-(-Delta)**(alpha/2)`` (jump density ``frac_constant(d, alpha) |z|**(-d-alpha)``).
A process with jump density ``l * frac_constant(d, alpha) |z|**(-d-alpha)``
has increments ``(l t)**(1/alpha) S`` over time ``t``.
"""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from . import _quad
from .errors import EnvelopeViolated, ValidationError


class RngStream:
    """Counter-based random stream addressed by ``(seed, key)``.

    ``child(i)`` derives an independent sub-stream, e.g. one per chunk of
    paths, which is what makes results independent of the worker count.
    """

    def __init__(self, seed, stream_id=0, key=None):
        if seed is None:
            raise ValidationError("an explicit seed is required")
        self.seed = int(seed)
        self.key = tuple(key) if key is not None else (int(stream_id),)
        ss = np.random.SeedSequence(self.seed, spawn_key=self.key)
        self.generator = np.random.Generator(np.random.Philox(ss))

    @property
    def stream_id(self):
        return self.key[-1]

    def child(self, i):
        return RngStream(self.seed, key=self.key + (int(i),))

    def describe(self):
        return {"seed": self.seed, "key": list(self.key), "bit_generator": "Philox4x64"}

    def __repr__(self):
        return f"RngStream(seed={self.seed}, key={self.key})"


def _gen(rng):
    if isinstance(rng, RngStream):
        return rng.generator
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError("rng must be an RngStream or numpy Generator")


@dataclass(frozen=True)
class StableSpec:
    """Isotropic alpha-stable law; increments over time t are scale * t**(1/alpha) * S."""

    alpha: float
    dim: int = 1
    scale: float = 1.0
    isotropic: bool = True

    def __post_init__(self):
        if not 1.0 < self.alpha < 2.0:
            raise ValidationError("alpha must lie in (1, 2)")
        if self.dim < 1:
            raise ValidationError("dim must be >= 1")
        if not self.scale > 0:
            raise ValidationError("scale must be positive")

    @classmethod
    def for_level(cls, alpha, dim, level=1.0):
        """Spec of the process with jump density level * c(d, alpha) |z|**(-d-alpha)."""
        return cls(alpha, dim, float(level) ** (1.0 / alpha))


def unit_stable_1d(alpha, gen, size):
    """Symmetric stable variates with cf exp(-|t|**alpha) (Chambers-Mallows-Stuck)."""
    v = gen.uniform(-0.5 * np.pi, 0.5 * np.pi, size)
    w = gen.standard_exponential(size)
    return (
        np.sin(alpha * v)
        / np.cos(v) ** (1.0 / alpha)
        * (np.cos((1.0 - alpha) * v) / w) ** ((1.0 - alpha) / alpha)
    )


def sample_positive_stable(a, rng, size=None):
    """Positive a-stable variates with Laplace transform exp(-lam**a), 0 < a < 1 (Kanter)."""
    if not 0.0 < a < 1.0:
        raise ValidationError("positive stable index must lie in (0, 1)")
    gen = _gen(rng)
    u = gen.uniform(0.0, np.pi, size)
    e = gen.standard_exponential(size)
    ka = (np.sin(a * u) ** a * np.sin((1.0 - a) * u) ** (1.0 - a) / np.sin(u)) ** (1.0 / (1.0 - a))
    return (ka / e) ** ((1.0 - a) / a)


def unit_stable_isotropic(alpha, dim, gen, size):
    """Rotation-invariant stable vectors with cf exp(-|xi|**alpha), shape (size, dim).

    Built as sqrt(A) G with G ~ N(0, 2 I) and A positive (alpha/2)-stable:
    E exp(i xi.X) = E exp(-A |xi|^2) = exp(-|xi|**alpha).
    """
    a = sample_positive_stable(alpha / 2.0, gen, size)
    g = gen.standard_normal((size, dim)) * math.sqrt(2.0)
    return np.sqrt(a)[:, None] * g


def sample_stable_1d(spec, t, rng, size=None):
    """Variates of L_t for a one-dimensional symmetric stable process."""
    if not t > 0:
        raise ValidationError("t must be positive")
    s = unit_stable_1d(spec.alpha, _gen(rng), size)
    return spec.scale * t ** (1.0 / spec.alpha) * s


def sample_stable_isotropic(spec, t, rng, size=None):
    """Variates of L_t for the rotation-invariant stable process in d >= 2."""
    if spec.dim < 2:
        raise ValidationError("use sample_stable_1d for d = 1")
    if not t > 0:
        raise ValidationError("t must be positive")
    n = 1 if size is None else int(size)
    out = spec.scale * t ** (1.0 / spec.alpha) * unit_stable_isotropic(spec.alpha, spec.dim, _gen(rng), n)
    return out[0] if size is None else out


def unit_stable(alpha, dim, gen, size):
    """Unit stable increments, shape (size, dim), for any dimension."""
    if dim == 1:
        return unit_stable_1d(alpha, gen, size)[:, None]
    return unit_stable_isotropic(alpha, dim, gen, size)


def uniform_directions(dim, gen, size):
    if dim == 1:
        return np.where(gen.random(size) < 0.5, -1.0, 1.0)[:, None]
    g = gen.standard_normal((size, dim))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


# ---------------------------------------------------------------- thinning


def envelope_rates(model, eps, r_max=None):
    """Per-component intensities of the envelope on {eps <= |z| < r_max}."""
    s = _quad.sphere_measure(model.dim)
    rates = []
    for w, a in model.envelope:
        hi = 0.0 if r_max is None else r_max ** (-a)
        rates.append(max(model.scale * w * s * (eps ** (-a) - hi) / a, 0.0))
    return np.array(rates)


def envelope_radii(model, comp, eps, gen, r_max=None):
    """Radii of envelope candidates for the chosen components (inverse-CDF Pareto)."""
    a = np.array([e[1] for e in model.envelope])[comp]
    u = gen.random(comp.size)
    lo = eps ** (-a)
    hi = 0.0 if r_max is None else r_max ** (-a)
    return (hi + u * (lo - hi)) ** (-1.0 / a)


def acceptance_ratio(model, x, z):
    """pi(x, z) / envelope(z), checked against the envelope promise."""
    ratio = model.pi(x, z) / model.envelope_density(z)
    if np.any(ratio > 1.0 + 1e-12) or np.any(~np.isfinite(ratio)):
        bad = int(np.argmax(np.where(np.isfinite(ratio), ratio, np.inf)))
        raise EnvelopeViolated(f"pi/envelope = {ratio[bad]:.6g} at z={np.asarray(z)[bad].tolist()}")
    return ratio


def sample_kernel_jumps(model, x, epsilon, dt, rng, r_max=None, return_stats=False):
    """Jumps with |z| >= epsilon over a window dt, the state held fixed at ``x``.

    Candidates come from the envelope's Poisson point process and are kept
    with probability pi(x, z) / envelope(z).  Returns an array of shape
    (n_jumps, d); with ``return_stats`` also the number of candidates.
    """
    if not epsilon > 0 or not dt > 0:
        raise ValidationError("epsilon and dt must be positive")
    gen = _gen(rng)
    d = model.dim
    rates = envelope_rates(model, epsilon, r_max)
    total = float(rates.sum())
    n = int(gen.poisson(total * dt)) if total > 0 else 0
    if n == 0:
        out = np.zeros((0, d))
        return (out, 0) if return_stats else out
    comp = gen.choice(len(rates), size=n, p=rates / total)
    r = envelope_radii(model, comp, epsilon, gen, r_max)
    z = r[:, None] * uniform_directions(d, gen, n)
    xx = np.broadcast_to(np.asarray(x, dtype=float).reshape(1, d), z.shape)
    keep = gen.random(n) < acceptance_ratio(model, xx, z)
    out = z[keep]
    return (out, n) if return_stats else out
