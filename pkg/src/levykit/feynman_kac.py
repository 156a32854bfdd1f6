"""Monte Carlo estimators built on the path engine.

u(x) = E_x[int_0^tau f(X_s) ds + g(X_tau)] for Dirichlet data, exit-time
moments, decay of E_x[tau] at the boundary, harmonic functions and
Harnack ratios, survival exponents in cones, and mean hitting times of a
ball from outside.

Sub-run ``j`` of an estimator (grid point, distance, datum) draws from
``rng.child(j)``; a single run draws from ``rng`` itself.  Horizons are
``cfg.t_max`` when set, otherwise 50 times a 1000-path pilot estimate of
E[tau].
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math
import time

import numpy as np
from scipy import stats

from .errors import (
    DegenerateHarmonic,
    FitRejected,
    NoStabilization,
    TruncationDominant,
    ValidationError,
)
from .kernels import Annulus, Ball, Box, ComplementOfBall, Cone, _as_points, make_kernel
from .paths import EulerConfig, Observer, pilot_horizon, run_paths
from .sampling import RngStream

TRUNCATION_FLAG = 0.01
TRUNCATION_LIMIT = 0.10


def as_field(v):
    """Constant or callable -> callable on (m, d) arrays returning (m,)."""
    if v is None:
        return None
    if callable(v):
        return v
    c = float(v)
    return lambda x: np.full(len(np.atleast_2d(x)), c)


@dataclass(frozen=True)
class McEstimate:
    """Sample mean with stderr = sample std / sqrt(n) and horizon diagnostics."""

    mean: float
    stderr: float
    n: int
    seed: int | None = None
    streams: tuple = ()
    truncated_fraction: float = 0.0
    horizon: float | None = None
    wallclock: float = 0.0
    exact: bool = False

    @property
    def flagged(self):
        """More than 1% of the paths hit the horizon before exiting."""
        return self.truncated_fraction > TRUNCATION_FLAG

    @classmethod
    def from_samples(cls, samples, rng=None, truncated_fraction=0.0, horizon=None, t0=None):
        v = np.asarray(samples, dtype=float)
        n = v.size
        se = float(np.std(v, ddof=1) / math.sqrt(n)) if n > 1 else float("nan")
        seed = rng.seed if isinstance(rng, RngStream) else None
        streams = tuple(rng.key) if isinstance(rng, RngStream) else ()
        wall = time.perf_counter() - t0 if t0 is not None else 0.0
        return cls(float(np.mean(v)), se, n, seed, streams, float(truncated_fraction), horizon, wall)

    def band(self, k=3.0):
        return self.mean - k * self.stderr, self.mean + k * self.stderr

    def to_record(self, op, params=None):
        """JSON-ready record {op, params, mean, stderr, n, seed, ...}."""
        return {
            "op": op,
            "params": params or {},
            "mean": self.mean,
            "stderr": self.stderr,
            "n": self.n,
            "seed": self.seed,
            "streams": list(self.streams),
            "truncated_fraction": self.truncated_fraction,
            "flagged": self.flagged,
            "horizon": self.horizon,
            "wallclock": self.wallclock,
        }


def _bbox(domain):
    if isinstance(domain, (Ball, Annulus)):
        r = domain.radius if isinstance(domain, Ball) else domain.r_out
        return domain.center - r, domain.center + r
    if isinstance(domain, Box):
        return domain.lo, domain.hi
    return None


def _exterior_points(domain, n, gen):
    if isinstance(domain, ComplementOfBall):
        return Ball(domain.center, domain.radius).sample(n, gen)
    bb = _bbox(domain)
    if bb is None:
        raise ValidationError("cannot sample the exterior of this domain")
    lo, hi = bb
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    pts = gen.uniform(mid - 5 * half, mid + 5 * half, size=(8 * n, len(lo)))
    return pts[~domain.contains(pts)][:n]


@dataclass(frozen=True, eq=False)
class DirichletProblem:
    """I u = -f in ``domain``, u = g outside.  ``f``, ``g`` may be constants or None (zero)."""

    model: object
    domain: object
    f: object = None
    g: object = None

    def __post_init__(self):
        d = self.domain
        if not (d.bounded or isinstance(d, ComplementOfBall)):
            raise ValidationError("domain must be bounded or the complement of a ball")
        if d.dim != self.model.dim:
            raise ValidationError("domain and model dimensions differ")
        object.__setattr__(self, "f", as_field(self.f))
        object.__setattr__(self, "g", as_field(self.g))
        gen = np.random.default_rng(0)
        if self.f is not None:
            inner = d.sample(256, gen)
            if not np.all(np.isfinite(self.f(inner))):
                raise ValidationError("f is not finite on sampled interior points")
        if self.g is not None:
            outer = _exterior_points(d, 256, gen)
            if len(outer) and not np.all(np.isfinite(self.g(outer))):
                raise ValidationError("g is not bounded on sampled exterior points")

    def g_at(self, x):
        return self.g(x) if self.g is not None else np.zeros(len(x))


def _horizon(model, x, cfg, stop, rng):
    if cfg.t_max is not None:
        return cfg.t_max
    h, _, _ = pilot_horizon(model, x, cfg, stop, rng)
    return h


def _point(x, dim):
    x = np.atleast_1d(np.asarray(x, dtype=float)).reshape(-1)
    if x.size != dim:
        raise ValidationError("point dimension does not match the model")
    return x


def _check_truncation(frac, est, what="paths"):
    if frac > TRUNCATION_LIMIT:
        exc = TruncationDominant(f"{100 * frac:.1f}% of {what} hit the horizon before exiting")
        exc.estimate = est
        raise exc


def dirichlet_solve(p, x, n_paths, cfg=None, rng=None):
    """MC estimate of u(x) = E_x[int_0^tau f + g(X_tau)].

    At a point outside the domain this is g(x) exactly, with stderr 0.
    Raises TruncationDominant when more than 10% of paths hit the horizon.
    """
    cfg = cfg or EulerConfig()
    t0 = time.perf_counter()
    x = _point(x, p.model.dim)
    if not p.domain.contains(x)[0]:
        val = float(p.g_at(x[None])[0])
        seed = rng.seed if isinstance(rng, RngStream) else None
        return McEstimate(val, 0.0, int(n_paths), seed, (), 0.0, 0.0, time.perf_counter() - t0, exact=True)
    horizon = _horizon(p.model, x, cfg, p.domain, rng)
    b = run_paths(p.model, x, n_paths, cfg, rng, stop=p.domain, f=p.f, t_max=horizon)
    vals = b.integral.copy()
    if p.g is not None and np.any(b.exited):
        vals[b.exited] += p.g(b.exit_state[b.exited])
    est = McEstimate.from_samples(vals, rng, b.truncated_fraction, horizon, t0)
    _check_truncation(b.truncated_fraction, est)
    return est


def exit_times(model, domain, x, n_paths, cfg, rng):
    """Stopped exit times tau ^ horizon and the batch (helper)."""
    x = _point(x, model.dim)
    horizon = _horizon(model, x, cfg, domain, rng)
    b = run_paths(model, x, n_paths, cfg, rng, stop=domain, t_max=horizon)
    return b.stopped_time(), b, horizon


@dataclass
class MomentTable:
    """E_x[tau^m], m = 1..m_max, and the moment recursion diagnostic.

    ``recursion[m-1]`` compares E_x[tau^(m+1)] with
    (m+1) sup_y E_y[tau^m] E_x[tau] over the sup grid.
    """

    estimates: list
    sup_points: np.ndarray
    sup_moments: np.ndarray
    recursion: list = field(default_factory=list)

    def __iter__(self):
        return iter(self.estimates)

    def __getitem__(self, i):
        return self.estimates[i]

    def __len__(self):
        return len(self.estimates)

    @property
    def recursion_ok(self):
        return all(r["holds"] for r in self.recursion)


def _moment_estimates(T, m_max, rng, frac, horizon, t0):
    return [McEstimate.from_samples(T**m, rng, frac, horizon, t0) for m in range(1, m_max + 1)]


def _default_sup_points(domain, x):
    pts = [x]
    if isinstance(domain, Ball):
        pts.append(domain.center)
    elif isinstance(domain, Box):
        pts.append(0.5 * (domain.lo + domain.hi))
    return np.array(pts)


def exit_time_moments(p, x, m_max, n_paths, cfg=None, rng=None, sup_points=None):
    """Moments of tau(D) at x, with stderr, plus the recursion inequality check.

    The sup over the domain is taken over ``sup_points`` (default: x and
    the centre of a ball or box); sub-run j uses ``rng.child(j)``, j = 0
    being x itself.
    """
    cfg = cfg or EulerConfig()
    if not 1 <= m_max <= 4:
        raise ValidationError("m_max must lie in 1..4")
    x = _point(x, p.model.dim)
    if not p.domain.contains(x)[0]:
        raise ValidationError("x must lie in the domain")
    t0 = time.perf_counter()
    pts = _default_sup_points(p.domain, x) if sup_points is None else np.atleast_2d(np.asarray(sup_points, dtype=float))
    tables = []
    for j, y in enumerate(pts):
        sub = rng.child(j)
        T, b, hz = exit_times(p.model, p.domain, y, n_paths, cfg, sub)
        est = _moment_estimates(T, m_max, sub, b.truncated_fraction, hz, t0)
        _check_truncation(b.truncated_fraction, est[0])
        tables.append(est)
    main = tables[0]
    sup_m = np.array([[t[m].mean for m in range(m_max)] for t in tables])
    sup_se = np.array([[t[m].stderr for m in range(m_max)] for t in tables])
    rec = []
    for m in range(1, m_max):
        j = int(np.argmax(sup_m[:, m - 1]))
        s, s_se = sup_m[j, m - 1], sup_se[j, m - 1]
        e1, e1_se = main[0].mean, main[0].stderr
        lhs, lhs_se = main[m].mean, main[m].stderr
        rhs = (m + 1) * s * e1
        rhs_se = (m + 1) * math.hypot(s * e1_se, e1 * s_se)
        slack = 3.0 * math.hypot(lhs_se, rhs_se)
        rec.append({"m": m, "lhs": lhs, "rhs": rhs, "slack": slack, "holds": bool(lhs <= rhs + slack)})
    return MomentTable(main, pts, sup_m, rec)


@dataclass
class DecayTable:
    distances: list
    points: np.ndarray
    estimates: list
    dts: list

    @property
    def means(self):
        return np.array([e.mean for e in self.estimates])

    @property
    def stderrs(self):
        return np.array([e.stderr for e in self.estimates])

    @property
    def strictly_decreasing(self):
        m = self.means
        return bool(np.all(np.diff(m) < 0))

    @property
    def ratio(self):
        return float(self.means[-1] / self.means[0])

    def rows(self):
        return [(d, e.mean, e.stderr) for d, e in zip(self.distances, self.estimates)]


def _reference_point(domain):
    if isinstance(domain, Ball):
        return domain.center
    if isinstance(domain, Box):
        return 0.5 * (domain.lo + domain.hi)
    raise ValidationError("boundary_decay needs a ball or box domain")


def boundary_point(domain, direction, tol=1e-13):
    """Point where the ray from the domain centre along ``direction`` leaves it."""
    c = _reference_point(domain)
    u = np.asarray(direction, dtype=float).reshape(-1)
    u = u / np.linalg.norm(u)
    if isinstance(domain, Ball):
        return c + domain.radius * u, u
    lo, hi = 0.0, 1.0
    while domain.contains(c + hi * u)[0]:
        hi *= 2.0
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if domain.contains(c + mid * u)[0]:
            lo = mid
        else:
            hi = mid
    return c + lo * u, u


def boundary_decay(p, direction, distances, n_paths, cfg=None, rng=None, dt_factor=0.05):
    """E_x[tau] at x = boundary point - distance * direction, for decreasing distances.

    The step for probe i is min(cfg.dt, dt_factor * d_i**alpha / a) so that
    the step-scale displacement stays a fixed fraction of the distance.
    """
    cfg = cfg or EulerConfig()
    ds = [float(v) for v in distances]
    if any(b >= a for a, b in zip(ds, ds[1:])):
        raise ValidationError("distances must be strictly decreasing")
    bp, u = boundary_point(p.domain, direction)
    pts = np.array([bp - d * u for d in ds])
    if not np.all(p.domain.contains(pts)):
        raise ValidationError("some probe points lie outside the domain")
    from .paths import stable_level

    ests, dts = [], []
    for i, (d, x) in enumerate(zip(ds, pts)):
        try:
            lev = float(stable_level(p.model, x[None])[0])
        except Exception:
            lev = 1.0
        dt = min(cfg.dt, dt_factor * d**p.model.alpha / max(lev, 1e-12))
        sub = cfg.with_(dt=dt, t_max=None if cfg.t_max is None else max(cfg.t_max, dt))
        ests.append(dirichlet_solve(DirichletProblem(p.model, p.domain, f=1.0), x, n_paths, sub, rng.child(i)))
        dts.append(dt)
    return DecayTable(ds, pts, ests, dts)


@dataclass
class HarmonicTable:
    points: np.ndarray
    estimates: list

    @property
    def means(self):
        return np.array([e.mean for e in self.estimates])

    @property
    def stderrs(self):
        return np.array([e.stderr for e in self.estimates])


def harmonic_estimate(model, G, h_ext, grid, n_paths, cfg=None, rng=None):
    """E_x[h_ext(X_tau(G))] at each grid point (sub-run i uses rng.child(i))."""
    cfg = cfg or EulerConfig()
    grid = _as_points(np.asarray(grid, dtype=float), model.dim)
    if not np.all(G.contains(grid)):
        raise ValidationError("grid points must lie in G")
    prob = DirichletProblem(model, G, f=None, g=h_ext)
    ests = [dirichlet_solve(prob, x, n_paths, cfg, rng.child(i)) for i, x in enumerate(grid)]
    return HarmonicTable(grid, ests)


def default_grid(K, n_grid=5):
    """Grid in the closure of a ball K: a 1-d lattice, or centre plus boundary ring."""
    if not isinstance(K, Ball):
        raise ValidationError("K must be a ball")
    c, r = K.center, K.radius
    if K.dim == 1:
        return (c[0] + np.linspace(-r, r, n_grid))[:, None]
    phi = 2 * np.pi * np.arange(n_grid - 1) / (n_grid - 1)
    ring = np.zeros((n_grid - 1, K.dim))
    ring[:, 0], ring[:, 1] = np.cos(phi), np.sin(phi)
    return np.vstack([c, c + r * ring])


@dataclass
class HarnackResult:
    """Per-datum empirical max/min ratio over K with union-bound confidence bands."""

    ratios: list
    lower: list
    upper: list
    grid: np.ndarray
    tables: list
    level: float

    @property
    def family_max(self):
        return max(self.ratios)

    @property
    def family_upper(self):
        return max(self.upper)

    def to_dict(self):
        return {
            "ratios": self.ratios,
            "lower": self.lower,
            "upper": self.upper,
            "family_max": self.family_max,
            "family_upper": self.family_upper,
            "level": self.level,
        }


def harnack_probe(model, D, K, data, n_paths, cfg=None, rng=None, grid=None, n_grid=5, level=0.95):
    """Empirical Harnack constants max_K h / min_K h for each boundary datum.

    Confidence bands use the delta method on log h(x) - log h(y) with a
    union bound over grid pairs and data.  Raises DegenerateHarmonic if
    some grid value has a confidence interval containing 0.
    """
    cfg = cfg or EulerConfig()
    grid = default_grid(K, n_grid) if grid is None else _as_points(np.asarray(grid, dtype=float), model.dim)
    if not np.all(D.contains(grid)):
        raise ValidationError("K must lie inside D")
    data = list(data)
    n_pairs = len(grid) * (len(grid) - 1)
    z_pt = stats.norm.ppf(1 - (1 - level) / (2 * len(grid) * len(data)))
    z_pair = stats.norm.ppf(1 - (1 - level) / (2 * max(n_pairs, 1) * len(data)))
    ratios, lo, hi, tables = [], [], [], []
    for j, h in enumerate(data):
        tab = harmonic_estimate(model, D, h, grid, n_paths, cfg, rng.child(j))
        m, s = tab.means, tab.stderrs
        if np.any(m - z_pt * s <= 0):
            raise DegenerateHarmonic(f"datum {j}: a harmonic estimate is not separated from 0")
        i_max, i_min = int(np.argmax(m)), int(np.argmin(m))
        r = float(m[i_max] / m[i_min])
        se = math.hypot(s[i_max] / m[i_max], s[i_min] / m[i_min])
        ratios.append(r)
        lo.append(float(max(1.0, r * math.exp(-z_pair * se))))
        hi.append(float(r * math.exp(z_pair * se)))
        tables.append(tab)
    return HarnackResult(ratios, lo, hi, grid, tables, level)


def indicator(lo, hi):
    """Indicator of the box [lo, hi] as a boundary datum."""
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    return lambda x: np.all((np.atleast_2d(x) >= lo) & (np.atleast_2d(x) <= hi), axis=1).astype(float)


@dataclass
class ConeExitResult:
    p_hat: float
    ci: tuple
    r2: float
    t_grid: list
    survival: list
    stderr: list
    moment_growth: dict
    n: int

    def to_dict(self):
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


def _cone_setup(alpha, theta, x0):
    x0 = np.atleast_1d(np.asarray(x0, dtype=float)).reshape(-1)
    d = x0.size
    if d not in (1, 2):
        raise ValidationError("cone exit needs d in {1, 2}")
    axis = np.zeros(d)
    axis[0] = 1.0
    cone = Cone(axis, theta if d == 2 else math.pi / 2)
    if np.linalg.norm(x0) < 1e-6:
        raise ValidationError("start point within 1e-6 of the vertex")
    if not cone.contains(x0)[0]:
        raise ValidationError("start point must lie in the cone")
    return make_kernel("constant", d, alpha), cone, x0


def survival_curve(alpha, theta, x0, t_grid, n_paths, rng, cfg=None):
    """P_x0(eta > t) on ``t_grid`` for the pure stable process in a cone; returns (S, se, times)."""
    model, cone, x0 = _cone_setup(alpha, theta, x0)
    t_grid = np.asarray(t_grid, dtype=float)
    cfg = (cfg or EulerConfig(dt=1e-2)).with_(t_max=float(t_grid.max()))
    b = run_paths(model, x0, n_paths, cfg, rng, stop=cone)
    T = np.where(b.exited, b.exit_time, np.inf)
    S = np.array([np.mean(T > t) for t in t_grid])
    se = np.sqrt(S * (1 - S) / n_paths)
    return S, se, T


def cone_exit_exponent(alpha, theta, x0, t_grid, n_paths, rng, cfg=None, moment_powers=None):
    """Fit P(eta > t) ~ C t**(-p) and report p with a 95% interval.

    Raises FitRejected if the log-log fit has R^2 < 0.95.  The moment
    report gives E[min(eta, T)^p] for T = t_max/4, t_max/2, t_max: bounded
    in T for p < p_hat, growing for p > p_hat.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    S, se, T = survival_curve(alpha, theta, x0, t_grid, n_paths, rng, cfg)
    if np.any(S <= 0):
        raise FitRejected("survival reached 0 on the grid")
    y = np.log(S)
    X = np.column_stack([np.ones_like(t_grid), np.log(t_grid)])
    var = np.maximum((1 - S) / (S * n_paths), 1e-300)
    W = 1.0 / var
    A = X.T @ (W[:, None] * X)
    coef = np.linalg.solve(A, X.T @ (W * y))
    cov = np.linalg.inv(A)
    resid = y - X @ coef
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 0.0
    p_hat = float(-coef[1])
    half = 1.96 * math.sqrt(cov[1, 1])
    if r2 < 0.95:
        raise FitRejected(f"log-log fit R^2 = {r2:.3f} < 0.95")
    tm = float(t_grid.max())
    powers = moment_powers or [0.5 * p_hat, 2.0 * p_hat]
    growth = {}
    for pw in powers:
        growth[float(pw)] = [float(np.mean(np.minimum(T, tm * f) ** pw)) for f in (0.25, 0.5, 1.0)]
    return ConeExitResult(p_hat, (p_hat - half, p_hat + half), r2, t_grid.tolist(), S.tolist(), se.tolist(), growth, int(n_paths))


class _CrossingObserver(Observer):
    """First time |X - c| >= R for each radius in a list (grid-time resolution)."""

    wants_increments = True

    def __init__(self, center, radii, offset, m):
        self.c = center
        self.radii = np.asarray(radii, dtype=float)
        self.offset = offset
        self.t = np.zeros(m)
        self.first = np.full((m, len(radii)), np.inf)

    def _mark(self, rows, times, states):
        r = np.linalg.norm(states - self.c, axis=1)
        hit = r[:, None] >= self.radii[None, :]
        cur = self.first[rows]
        upd = hit & (times[:, None] < cur)
        cur[upd] = np.broadcast_to(times[:, None], cur.shape)[upd]
        self.first[rows] = cur

    def on_step(self, ids, x, w):
        rows = ids - self.offset
        self._mark(rows, self.t[rows], x)
        self.t[rows] += w

    def on_jump(self, ids, t, pre, post):
        rows = ids - self.offset
        order = np.argsort(t, kind="stable")
        self._mark(rows[order], np.asarray(t, dtype=float)[order], post[order])

    def merge(self, other):
        self.t = np.concatenate([self.t, other.t])
        self.first = np.concatenate([self.first, other.first])
        return self


@dataclass
class ExteriorReport:
    radii: list
    estimates: list
    monotone: bool
    increments: list
    last_change: float
    stabilized: bool

    @property
    def means(self):
        return [e.mean for e in self.estimates]

    def to_dict(self):
        return {
            "radii": self.radii,
            "means": self.means,
            "stderrs": [e.stderr for e in self.estimates],
            "monotone": self.monotone,
            "increments": self.increments,
            "last_change": self.last_change,
            "stabilized": self.stabilized,
        }


def exterior_hitting_time(model, n_outer, x, n_paths, cfg=None, rng=None, center=None, tol=0.05):
    """E_x[tau(B_n minus closed B_1)] for n doubling up to ``n_outer``.

    One batch is simulated in the largest annulus; tau_n is the first grid
    time with |X| >= n (or the annulus exit), so u_n is nondecreasing in n
    path by path.  Raises NoStabilization (carrying ``.report``) if the
    last doubling changes the estimate by more than ``tol``.
    """
    cfg = cfg or EulerConfig()
    x = _point(x, model.dim)
    c = np.zeros(model.dim) if center is None else _point(center, model.dim)
    rx = float(np.linalg.norm(x - c))
    if not rx > 1.0:
        raise ValidationError("need |x| > 1")
    radii = []
    n = 2.0
    while n <= n_outer:
        if n > rx:
            radii.append(n)
        n *= 2.0
    if len(radii) < 2:
        raise ValidationError("n_outer too small for a doubling schedule beyond |x|")
    t0 = time.perf_counter()
    dom = Annulus(c, 1.0, radii[-1])
    horizon = _horizon(model, x, cfg, dom, rng)
    obs = lambda off, m: _CrossingObserver(c, radii, off, m)
    b = run_paths(model, x, n_paths, cfg, rng, stop=dom, observers=[obs], t_max=horizon)
    stop_t = b.stopped_time()
    first = b.observers[0].first
    ests = []
    for j in range(len(radii)):
        tj = np.minimum(first[:, j], stop_t)
        ests.append(McEstimate.from_samples(tj, rng, b.truncated_fraction, horizon, t0))
    _check_truncation(b.truncated_fraction, ests[-1])
    means = [e.mean for e in ests]
    inc = list(np.diff(means))
    last = (means[-1] - means[-2]) / means[-2] if means[-2] > 0 else math.inf
    rep = ExteriorReport(radii, ests, bool(np.all(np.diff(means) >= 0)), [float(v) for v in inc], float(last), bool(last <= tol))
    if not rep.stabilized:
        exc = NoStabilization(f"last doubling changed the estimate by {100 * last:.1f}% (> {100 * tol:.0f}%)")
        exc.report = rep
        raise exc
    return rep
