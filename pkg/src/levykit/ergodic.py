"""Lyapunov checks, recurrence and invariant-measure estimation.

Occupation time is accumulated in integer units of ``dt / 2**30`` so that
histograms from different chains or chunks merge exactly and coarsening
adjacent bins reproduces a coarse histogram bit for bit.  TV distances
are half the L1 distance of normalised bin masses, with the
out-of-window mass kept as one extra cell.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import csv
import math
import time

import numpy as np

from .errors import (
    BinningTooCoarse,
    ChainNotRegenerating,
    TailDivergent,
    ValidationError,
)
from .feynman_kac import McEstimate, _check_truncation, _horizon, _point
from .kernels import Ball, Box, ComplementOfBall, _as_points, complement
from .operator import QuadratureScheme, SmoothProbe, apply_generator
from .paths import EulerConfig, Observer, run_paths

QUANTUM_BITS = 30
EXPLORATORY = "EXPLORATORY: no verified Lyapunov function for this model"


# ---------------------------------------------------------------- Lyapunov


def _growth_exponent(V, dim, r1=1e3, r2=1e4):
    e = np.zeros((2, dim))
    e[0, 0], e[1, 0] = 1.0, -1.0
    v1 = np.abs(V.value(r1 * e))
    v2 = np.abs(V.value(r2 * e))
    with np.errstate(divide="ignore"):
        p = np.log(np.maximum(v2, 1e-300) / np.maximum(v1, 1e-300)) / math.log(r2 / r1)
    return float(np.max(p))


@dataclass(frozen=True, eq=False)
class LyapunovCandidate:
    """Candidate V with compact set B(0, compact_radius) and target margin.

    ``growth`` is the tail growth exponent of V; when omitted it is read
    off V between |x| = 1e3 and 1e4.  ``inf_value`` is the minimum of V
    over a dense radial grid, the finite surrogate for inf V.
    """

    V: SmoothProbe
    compact_radius: float
    epsilon_margin: float = 0.0
    dim: int = 1
    growth: float | None = None
    inf_value: float = field(init=False, default=0.0)

    def __post_init__(self):
        if not self.compact_radius > 0:
            raise ValidationError("compact_radius must be positive")
        if self.epsilon_margin < 0:
            raise ValidationError("epsilon_margin must be nonnegative")
        r = np.concatenate([[0.0], np.geomspace(1e-3, 1e4, 400)])
        dirs = _ray_directions(self.dim, 16)
        pts = (r[:, None, None] * dirs[None]).reshape(-1, self.dim)
        vals = self.V.value(pts)
        if not np.all(np.isfinite(vals)):
            raise ValidationError("V is not finite on the sampling grid")
        object.__setattr__(self, "inf_value", float(np.min(vals)))
        if self.growth is None:
            object.__setattr__(self, "growth", _growth_exponent(self.V, self.dim))

    def lemma_bound(self, eps, x):
        """(2/eps)(V(x) + (inf V)^-), the bound on E_x[tau(K^c)]."""
        x = _as_points(np.asarray(x, dtype=float), self.dim)
        return 2.0 / eps * (self.V.value(x) + max(-self.inf_value, 0.0))


def _ray_directions(dim, rays):
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    if dim == 2:
        phi = 2 * np.pi * np.arange(rays) / rays
        return np.column_stack([np.cos(phi), np.sin(phi)])
    eye = np.eye(dim)
    return np.vstack([eye, -eye])[:rays]


@dataclass
class LyapunovResult:
    points: np.ndarray
    values: np.ndarray
    radii: list
    rays: int
    epsilon_margin: float
    passed: bool
    eps_hat: float

    def rows(self):
        return [(tuple(p), float(v)) for p, v in zip(self.points, self.values)]

    def to_dict(self):
        return {
            "radii": list(self.radii),
            "rays": self.rays,
            "points": self.points.tolist(),
            "values": self.values.tolist(),
            "epsilon_margin": self.epsilon_margin,
            "passed": self.passed,
            "eps_hat": self.eps_hat,
        }


def lyapunov_verify(model, cand, rays=8, radii=(10.0, 30.0, 100.0), scheme=None):
    """Evaluate I V on radii x rays and pass iff every value is <= -epsilon_margin.

    In d = 1 the rays are the two half lines.  Raises TailDivergent when
    the growth of V is not below the tail exponent of the kernel.
    ``eps_hat`` is -max(I V), positive exactly when all values are negative.
    """
    if cand.dim != model.dim:
        raise ValidationError("candidate and model dimensions differ")
    radii = [float(r) for r in radii]
    if any(r <= cand.compact_radius for r in radii):
        raise ValidationError("radii must exceed the compact radius")
    if cand.growth >= model.tail_exponent:
        raise TailDivergent(
            f"V grows like |x|^{cand.growth:.3g}, not integrable against a tail of order {model.tail_exponent:.3g}"
        )
    dirs = _ray_directions(model.dim, rays)
    pts = np.array([r * u for r in radii for u in dirs])
    q = scheme or QuadratureScheme()
    vals = np.array([apply_generator(model, cand.V, p, q) for p in pts])
    eps_hat = float(-np.max(vals))
    passed = bool(np.all(vals <= -cand.epsilon_margin)) and eps_hat > 0
    return LyapunovResult(pts, vals, radii, len(dirs), cand.epsilon_margin, passed, eps_hat)


def hitting_time_table(model, target, starts, n_paths, cfg=None, rng=None):
    """E_x[tau(target^c)] per start; 0 exactly for starts inside the target.

    Start i uses ``rng.child(i)``.  Raises TruncationDominant (with the
    estimate attached) when more than 10% of the paths from some start
    never reach the target.
    """
    cfg = cfg or EulerConfig()
    starts = _as_points(np.asarray(starts, dtype=float), model.dim)
    outside = complement(target)
    out = []
    for i, x in enumerate(starts):
        sub = rng.child(i)
        if target.contains(x)[0]:
            out.append(McEstimate(0.0, 0.0, int(n_paths), sub.seed, tuple(sub.key), exact=True))
            continue
        t0 = time.perf_counter()
        h = _horizon(model, x, cfg, outside, sub)
        b = run_paths(model, x, n_paths, cfg, sub, stop=outside, t_max=h)
        est = McEstimate.from_samples(b.stopped_time(), sub, b.truncated_fraction, h, t0)
        _check_truncation(b.truncated_fraction, est)
        out.append(est)
    return out


@dataclass
class HittingBoundCheck:
    """MC hitting times of K = closed B_R against (2/eps)(V(x) + (inf V)^-)."""

    starts: np.ndarray
    estimates: list
    bounds: np.ndarray
    eps_hat: float
    lyapunov: LyapunovResult

    @property
    def holds(self):
        return [bool(e.mean - 3 * e.stderr <= b) for e, b in zip(self.estimates, self.bounds)]

    def to_dict(self):
        return {
            "starts": self.starts.tolist(),
            "means": [e.mean for e in self.estimates],
            "stderrs": [e.stderr for e in self.estimates],
            "bounds": self.bounds.tolist(),
            "eps_hat": self.eps_hat,
            "holds": self.holds,
        }


def hitting_time_bound_check(model, cand, starts, n_paths, cfg=None, rng=None, rays=8, radii=None, scheme=None):
    """Check E_x[tau(K^c)] <= (2/eps)(V(x) + (inf V)^-) for K = closed B_R.

    eps is -max I V over a radial grid from just outside R to 100 R (I V
    keeps decreasing beyond); it must be positive for the bound to apply.
    """
    R = cand.compact_radius
    radii = R * np.geomspace(1.001, 100.0, 16) if radii is None else radii
    lv = lyapunov_verify(model, cand, rays, radii, scheme)
    if not lv.eps_hat > 0:
        raise ValidationError("I V is not negative on the whole sampled exterior of K")
    K = Ball(np.zeros(model.dim), R)
    starts = _as_points(np.asarray(starts, dtype=float), model.dim)
    est = hitting_time_table(model, K, starts, n_paths, cfg, rng)
    return HittingBoundCheck(starts, est, cand.lemma_bound(lv.eps_hat, starts), lv.eps_hat, lv)


# ---------------------------------------------------------------- histograms


def _window_edges(window, n_bins):
    if isinstance(window, Box):
        lo, hi = window.lo, window.hi
    elif isinstance(window, Ball):
        lo, hi = window.center - window.radius, window.center + window.radius
    else:
        lo, hi = (np.atleast_1d(np.asarray(v, dtype=float)) for v in window)
    nb = np.broadcast_to(np.atleast_1d(n_bins), lo.shape)
    return tuple(np.linspace(a, b, int(n) + 1) for a, b, n in zip(lo, hi, nb))


class OccupationHistogram:
    """Time spent in the cells of a regular grid over a box window.

    ``counts`` (flattened over the axes) and ``out_count`` are integers in
    units of ``quantum`` model time.
    """

    def __init__(self, edges, quantum, counts=None, out_count=0):
        self.edges = tuple(np.asarray(e, dtype=float) for e in edges)
        self.shape = tuple(len(e) - 1 for e in self.edges)
        self.quantum = float(quantum)
        n = int(np.prod(self.shape))
        self.counts = np.zeros(n, dtype=np.int64) if counts is None else np.asarray(counts, dtype=np.int64).copy()
        if self.counts.shape != (n,):
            raise ValidationError("counts do not match the bin layout")
        self.out_count = int(out_count)

    @classmethod
    def for_window(cls, window, n_bins, dt):
        return cls(_window_edges(window, n_bins), dt / 2**QUANTUM_BITS)

    @property
    def dim(self):
        return len(self.edges)

    def cell_index(self, x):
        """Flat bin index per point, -1 outside the window."""
        x = _as_points(np.asarray(x, dtype=float), self.dim)
        idx = np.zeros(len(x), dtype=np.int64)
        ok = np.ones(len(x), dtype=bool)
        for j, e in enumerate(self.edges):
            k = np.searchsorted(e, x[:, j], side="right") - 1
            k = np.where(x[:, j] == e[-1], len(e) - 2, k)
            ok &= (k >= 0) & (k < len(e) - 1)
            idx = idx * (len(e) - 1) + np.clip(k, 0, len(e) - 2)
        return np.where(ok, idx, -1)

    def units(self, w):
        return np.rint(np.asarray(w, dtype=float) / self.quantum).astype(np.int64)

    def add(self, x, w):
        idx = self.cell_index(x)
        u = self.units(w)
        inside = idx >= 0
        np.add.at(self.counts, idx[inside], u[inside])
        self.out_count += int(u[~inside].sum())
        return self

    @property
    def total_units(self):
        return int(self.counts.sum()) + self.out_count

    @property
    def total_time(self):
        return self.total_units * self.quantum

    @property
    def in_fraction(self):
        t = self.total_units
        return int(self.counts.sum()) / t if t else 0.0

    def masses(self):
        """Normalised in-window bin masses; together with out_mass() they sum to 1."""
        t = self.total_units
        return self.counts / t if t else np.zeros(self.counts.shape)

    def out_mass(self):
        t = self.total_units
        return self.out_count / t if t else 0.0

    def cell_volumes(self):
        w = [np.diff(e) for e in self.edges]
        v = w[0]
        for wj in w[1:]:
            v = np.multiply.outer(v, wj)
        return np.ravel(v)

    def density(self):
        """Mass per unit volume; integrates to the in-window fraction."""
        return self.masses() / self.cell_volumes()

    def mass_between(self, lo, hi):
        """Normalised mass of the bins whose centres lie in the box (lo, hi)."""
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        centres = [0.5 * (e[1:] + e[:-1]) for e in self.edges]
        grids = np.meshgrid(*centres, indexing="ij")
        c = np.column_stack([g.ravel() for g in grids])
        sel = np.all((c > lo) & (c < hi), axis=1)
        return float(self.masses()[sel].sum())

    def _check_compatible(self, other):
        if self.quantum != other.quantum or len(self.edges) != len(other.edges):
            raise ValidationError("histograms have different layouts")
        if not all(np.array_equal(a, b) for a, b in zip(self.edges, other.edges)):
            raise ValidationError("histograms have different bin edges")

    def merge(self, other):
        self._check_compatible(other)
        return OccupationHistogram(self.edges, self.quantum, self.counts + other.counts, self.out_count + other.out_count)

    def coarsen(self, factor=2):
        """Merge groups of ``factor`` adjacent bins along every axis."""
        if any(n % factor for n in self.shape):
            raise ValidationError("bin counts must be divisible by the coarsening factor")
        c = self.counts.reshape(self.shape)
        for ax, n in enumerate(self.shape):
            new_shape = c.shape[:ax] + (n // factor, factor) + c.shape[ax + 1 :]
            c = c.reshape(new_shape).sum(axis=ax + 1)
        edges = tuple(e[::factor] for e in self.edges)
        return OccupationHistogram(edges, self.quantum, c.ravel(), self.out_count)

    def tv(self, other):
        """Half the L1 distance of the normalised masses (out-of-window mass as one cell)."""
        self._check_compatible(other)
        p = np.append(self.masses(), self.out_mass())
        q = np.append(other.masses(), other.out_mass())
        return 0.5 * float(np.abs(p - q).sum())

    def rows(self):
        """(bin_lo..., bin_hi..., mass) per bin."""
        centres = [np.arange(n) for n in self.shape]
        grids = np.meshgrid(*centres, indexing="ij")
        m = self.masses()
        out = []
        for flat, ks in enumerate(zip(*(g.ravel() for g in grids))):
            lo = [float(e[k]) for e, k in zip(self.edges, ks)]
            hi = [float(e[k + 1]) for e, k in zip(self.edges, ks)]
            out.append(lo + hi + [float(m[flat])])
        return out

    def to_csv(self, path):
        d = self.dim
        head = ["bin_lo", "bin_hi"] if d == 1 else [f"bin_lo_{j}" for j in range(d)] + [f"bin_hi_{j}" for j in range(d)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(head + ["mass"])
            w.writerows(self.rows())

    def to_dict(self):
        return {
            "edges": [e.tolist() for e in self.edges],
            "masses": self.masses().tolist(),
            "out_mass": self.out_mass(),
            "total_time": self.total_time,
            "in_fraction": self.in_fraction,
        }


class _RowHistogramObserver(Observer):
    """Per-path integer occupation counts (last column: outside the window)."""

    def __init__(self, hist, offset, m, burn_in=0.0):
        self.h = hist
        self.offset = offset
        self.burn = burn_in
        self.t = np.zeros(m)
        self.counts = np.zeros((m, len(hist.counts) + 1), dtype=np.int64)

    def on_step(self, ids, x, w):
        rows = ids - self.offset
        if self.burn > 0:
            t = self.t[rows]
            we = np.clip(t + w - self.burn, 0.0, w)
            self.t[rows] = t + w
        else:
            we = w
        idx = self.h.cell_index(x)
        col = np.where(idx >= 0, idx, self.counts.shape[1] - 1)
        np.add.at(self.counts, (rows, col), self.h.units(we))

    def merge(self, other):
        self.t = np.concatenate([self.t, other.t])
        self.counts = np.concatenate([self.counts, other.counts])
        return self


def _fold(hist, row_counts):
    tot = row_counts.sum(axis=0)
    return hist.merge(OccupationHistogram(hist.edges, hist.quantum, tot[:-1], int(tot[-1])))


# ---------------------------------------------------------------- invariant measure


@dataclass
class InvariantReport:
    occupation: OccupationHistogram
    hasminskii: OccupationHistogram
    tv: float
    n_cycles: int
    failed_legs: int
    numerator: float | None
    denominator: float
    exploratory: bool
    t_total: float
    burn_in: float
    wallclock: float

    @property
    def ratio(self):
        """Has'minskii ratio estimate of the integral of f against nu."""
        return None if self.numerator is None else self.numerator / self.denominator

    def to_dict(self):
        d = {
            "tv": self.tv,
            "n_cycles": self.n_cycles,
            "failed_legs": self.failed_legs,
            "numerator": self.numerator,
            "denominator": self.denominator,
            "ratio": self.ratio,
            "exploratory": self.exploratory,
            "t_total": self.t_total,
            "burn_in": self.burn_in,
            "wallclock": self.wallclock,
            "occupation": self.occupation.to_dict(),
            "hasminskii": self.hasminskii.to_dict(),
        }
        if self.exploratory:
            d["watermark"] = EXPLORATORY
        return d


def occupation_estimate(model, window, t_total, burn_in, cfg, rng, n_chains=1000, n_bins=50, x0=None):
    """Long-run occupation histogram: ``n_chains`` chains of length t_total/n_chains after burn-in."""
    if not t_total > burn_in >= 0:
        raise ValidationError("need t_total > burn_in >= 0")
    hist = OccupationHistogram.for_window(window, n_bins, cfg.dt)
    x0 = np.zeros(model.dim) if x0 is None else _point(x0, model.dim)
    per = t_total / n_chains
    steps = max(1, int(math.ceil((per + burn_in) / cfg.dt)))
    obs = lambda off, m: _RowHistogramObserver(hist, off, m, burn_in)
    b = run_paths(model, x0, n_chains, cfg, rng, stop=None, observers=[obs], t_max=steps * cfg.dt)
    return _fold(hist, b.observers[0].counts)


def hasminskii_estimate(model, window, t_total, cfg, rng, K=None, D=None, n_chains=1000, n_bins=50, f=None,
                        leg_horizon=None, max_cycles=100_000):
    """Regeneration estimator of nu from cycles K -> exit D -> return to K.

    Each cycle's occupation and the integral of ``f`` over the cycle are
    accumulated; nu(A) is the ratio of summed cycle occupations to summed
    cycle lengths.  Chains whose leg hits the horizon are restarted at the
    centre of K and the cycle is discarded.  Returns
    (histogram, n_cycles, failed_legs, numerator, denominator).
    """
    K = K or Ball(np.zeros(model.dim), 1.0)
    D = D or Ball(K.center, 2.0 * K.radius)
    if not isinstance(K, Ball) or not D.contains(K.center[None])[0]:
        raise ValidationError("K must be a ball inside D")
    back = ComplementOfBall(K.center, K.radius)
    hist = OccupationHistogram.for_window(window, n_bins, cfg.dt)
    leg_h = leg_horizon or max(t_total / n_chains, 100 * cfg.dt)
    x = np.broadcast_to(K.center, (n_chains, model.dim)).copy()
    obs = lambda off, m: _RowHistogramObserver(hist, off, m)
    den_units = 0
    num = 0.0 if f is not None else None
    cycles = failed = bad_rounds = 0
    c = 0
    while hist.total_units * hist.quantum < t_total and c < max_cycles:
        legs = []
        ok = np.ones(n_chains, dtype=bool)
        start = x
        for leg, stop in enumerate((D, back)):
            b = run_paths(model, start, n_chains, cfg, rng.child(c).child(leg), stop=stop, f=f, observers=[obs], t_max=leg_h)
            ok &= b.exited
            legs.append(b)
            start = np.where(b.exited[:, None], b.exit_state, b.final_state)
        rc = legs[0].observers[0].counts + legs[1].observers[0].counts
        hist = _fold(hist, rc[ok])
        den_units += int(rc[ok].sum())
        if f is not None:
            num += float(np.sum((legs[0].integral + legs[1].integral)[ok]))
        n_bad = int((~ok).sum())
        failed += n_bad
        bad_rounds = bad_rounds + 1 if n_bad > 0.1 * n_chains else 0
        if bad_rounds >= 2:
            raise ChainNotRegenerating(f"more than 10% of return legs hit the horizon {leg_h:g} in consecutive cycles")
        x = np.where(ok[:, None], start, K.center)
        cycles += int(ok.sum())
        c += 1
    return hist, cycles, failed, num, den_units * hist.quantum


def invariant_measure_estimate(model, window, t_total, burn_in, cfg=None, rng=None, n_chains=1000, n_bins=50,
                               lyapunov=None, K=None, D=None, f=None, x0=None):
    """Occupation and Has'minskii estimates of the invariant measure and their TV distance.

    ``lyapunov`` is a passing LyapunovResult (or LyapunovCandidate whose
    compact radius sets K = closed ball B_R and D = B_2R).  Without a
    verified Lyapunov function the report is marked exploratory.
    Occupation uses ``rng.child(0)``, regeneration ``rng.child(1)``.
    """
    cfg = cfg or EulerConfig()
    t0 = time.perf_counter()
    verified = lyapunov is not None and getattr(lyapunov, "passed", True)
    if K is None:
        R = getattr(lyapunov, "compact_radius", 1.0) if lyapunov is not None else 1.0
        K = Ball(np.zeros(model.dim), R)
    occ = occupation_estimate(model, window, t_total, burn_in, cfg, rng.child(0), n_chains, n_bins, x0)
    hs, cyc, failed, num, den = hasminskii_estimate(model, window, t_total, cfg, rng.child(1), K, D, n_chains, n_bins, f)
    return InvariantReport(occ, hs, occ.tv(hs), cyc, failed, num, den, not verified, t_total, burn_in,
                           time.perf_counter() - t0)


# ---------------------------------------------------------------- return chain


def return_points(model, K, D, x, n_paths, cfg, rng, leg_horizon=None):
    """Samples of X at the first return to K after leaving D, from x in K."""
    back = ComplementOfBall(K.center, K.radius)
    h = leg_horizon or _horizon(model, x, cfg, D, rng.child(0)) * 4
    b1 = run_paths(model, x, n_paths, cfg, rng.child(1), stop=D, t_max=h)
    start = np.where(b1.exited[:, None], b1.exit_state, b1.final_state)
    b2 = run_paths(model, start, n_paths, cfg, rng.child(2), stop=back, t_max=h)
    ok = b1.exited & b2.exited
    if np.mean(~ok) > 0.1:
        raise ChainNotRegenerating("more than 10% of return legs hit the horizon")
    return b2.exit_state[ok]


def _binned(points, K, n_bins):
    lo, hi = K.center - K.radius, K.center + K.radius
    h = OccupationHistogram([np.linspace(a, b, n_bins + 1) for a, b in zip(lo, hi)], 1.0)
    return h.add(points, np.ones(len(points)))


def _tv_floor(p, n1, n2):
    """Expected half-L1 distance of two multinomial samples from the same masses p."""
    s = np.sqrt(p * (1 - p) * (1.0 / n1 + 1.0 / n2))
    return 0.5 * float(np.sum(s)) * math.sqrt(2.0 / math.pi)


@dataclass
class ContractionResult:
    pairs: list
    tvs: list
    tvs_fine: list
    noise_floor: float
    n_bins: int

    @property
    def max_tv(self):
        return max(self.tvs)

    def to_dict(self):
        return {
            "pairs": [[list(map(float, a)), list(map(float, b))] for a, b in self.pairs],
            "tvs": self.tvs,
            "tvs_fine": self.tvs_fine,
            "noise_floor": self.noise_floor,
            "max_tv": self.max_tv,
            "n_bins": self.n_bins,
        }


def default_pairs(K, n_pairs):
    """Pairs of grid points of K, most distant first."""
    m = 2
    while m * (m - 1) // 2 < n_pairs:
        m += 1
    if K.dim == 1:
        g = (K.center[0] + np.linspace(-K.radius, K.radius, m))[:, None]
    else:
        phi = 2 * np.pi * np.arange(m) / m
        g = K.center + K.radius * np.column_stack([np.cos(phi), np.sin(phi)] + [np.zeros(m)] * (K.dim - 2))
    pairs = [(g[i], g[j]) for i in range(m) for j in range(i + 1, m)]
    pairs.sort(key=lambda p: -np.linalg.norm(p[0] - p[1]))
    return pairs[:n_pairs]


def return_chain_contraction(model, K, D, n_pairs, n_paths, cfg=None, rng=None, pairs=None, n_bins=8):
    """max over pairs of TV(Q(x,.), Q(y,.)) for the K -> D^c -> K return chain.

    TV is half the L1 distance of binned return-point laws on the box
    around K.  The estimate is repeated with half the bin width; a change
    of more than 20% beyond the fine-binning noise floor raises
    BinningTooCoarse.  Pair i uses rng.child(2i) and rng.child(2i+1).
    """
    cfg = cfg or EulerConfig()
    if not isinstance(K, Ball) or not D.contains(K.center[None])[0]:
        raise ValidationError("K must be a ball inside D")
    if isinstance(D, Ball) and D.radius <= np.linalg.norm(D.center - K.center) + K.radius:
        raise ValidationError("K must be compact in D")
    pairs = default_pairs(K, n_pairs) if pairs is None else [(_point(a, model.dim), _point(b, model.dim)) for a, b in pairs]
    tvs, tvs_f, floors = [], [], []
    for i, (x, y) in enumerate(pairs):
        px = return_points(model, K, D, x, n_paths, cfg, rng.child(2 * i))
        py = return_points(model, K, D, y, n_paths, cfg, rng.child(2 * i + 1))
        hx, hy = _binned(px, K, n_bins), _binned(py, K, n_bins)
        fx, fy = _binned(px, K, 2 * n_bins), _binned(py, K, 2 * n_bins)
        tv, tvf = hx.tv(hy), fx.tv(fy)
        pf = 0.5 * (np.append(fx.masses(), fx.out_mass()) + np.append(fy.masses(), fy.out_mass()))
        floor = _tv_floor(pf, len(px), len(py))
        if abs(tvf - tv) > 0.2 * tv + floor:
            raise BinningTooCoarse(f"pair {i}: TV {tv:.3f} at {n_bins} bins vs {tvf:.3f} at {2 * n_bins}")
        tvs.append(tv)
        tvs_f.append(tvf)
        floors.append(floor)
    return ContractionResult(pairs, tvs, tvs_f, float(max(floors)), n_bins)
