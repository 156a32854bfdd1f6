"""Batched Euler simulation of jump processes with exit detection.

Two drivers are available.  When the numerator does not depend on ``z``
(``model.z_free``), the step is ``X += b(X) dt + (a(X) dt)**(1/alpha) S`` with a
unit stable variate ``S`` and ``a = k * scale / c(d, alpha)``.  Otherwise jumps
with ``|z| >= eps`` are drawn by thinning the envelope's Poisson process,
the compensator drift of the jumps in ``eps <= |z| <= 1`` is added, and the
jumps below ``eps`` are dropped or replaced by a matched Gaussian.

Exits are checked after every step.  Discrete monitoring misses excursions
between grid times; to first order this is the same as an inward shift of
the boundary by ``beta * (a dt)**(1/alpha)`` with
``beta = -zeta(1 - 1/alpha) Gamma(1 - 1/alpha) / pi`` (the expected-overshoot
constant of a symmetric stable random walk, from Spitzer's identity).  The
shift is on by default; ``boundary_correction=False`` disables it.

Paths are simulated in fixed-size chunks and chunk ``c`` always draws from
``rng.child(c)``, so results do not depend on the number of worker threads.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
import gzip
import math

import numpy as np
from scipy.special import gamma as _gamma, zeta as _zeta

from . import _quad
from .errors import DisjointnessViolated, StateOverflow, ValidationError
from .kernels import frac_constant, generic_compensation
from .sampling import (
    RngStream,
    acceptance_ratio,
    envelope_radii,
    envelope_rates,
    unit_stable,
    uniform_directions,
)

OVERFLOW = 1e30
PILOT_KEY = 2**31 - 1


@dataclass(frozen=True)
class EulerConfig:
    """Time-stepping options.

    ``t_max=None`` (default) lets the Monte Carlo estimators choose an
    adaptive horizon from a pilot run; :func:`run_paths` then needs an
    explicit ``t_max``.  ``epsilon=None`` means ``1e-2`` times the length scale
    of the stopping domain (or 1e-2).  ``small_jump_mode=None`` selects
    ``"drop"`` for alpha <= 1.5 and ``"gaussian"`` above.
    """

    dt: float = 5e-3
    t_max: float | None = None
    epsilon: float | None = None
    small_jump_mode: str | None = None
    overshoot_exact: bool = True
    store_states: bool = False
    mode: str = "auto"
    boundary_correction: bool = True
    chunk_size: int = 8192
    workers: int = 1
    crn: bool = False
    bisect_tol: float = 1e-10

    def __post_init__(self):
        if not self.dt > 0:
            raise ValidationError("dt must be positive")
        if self.t_max is not None and self.dt > self.t_max:
            raise ValidationError("dt must not exceed t_max")
        if self.epsilon is not None and not self.epsilon > 0:
            raise ValidationError("epsilon must be positive")
        if self.small_jump_mode not in (None, "drop", "gaussian"):
            raise ValidationError("small_jump_mode must be 'drop' or 'gaussian'")
        if self.mode not in ("auto", "stable", "jumps"):
            raise ValidationError("mode must be auto, stable or jumps")
        if self.chunk_size < 1 or self.workers < 1:
            raise ValidationError("chunk_size and workers must be >= 1")

    def with_(self, **kw):
        return replace(self, **kw)

    def resolved_epsilon(self, stop=None):
        if self.epsilon is not None:
            return self.epsilon
        scale = stop.length_scale if stop is not None and stop.bounded else 1.0
        return 1e-2 * scale

    def resolved_mode(self, model):
        if self.mode != "auto":
            if self.mode == "stable" and model.z_free is None:
                raise ValidationError("stable mode needs a z-independent numerator")
            return self.mode
        return "stable" if model.z_free is not None else "jumps"

    def resolved_small_jumps(self, alpha):
        if self.small_jump_mode is not None:
            return self.small_jump_mode
        return "drop" if alpha <= 1.5 else "gaussian"


def overshoot_constant(alpha):
    """beta(alpha) = -zeta(1 - 1/alpha) Gamma(1 - 1/alpha) / pi.

    At alpha = 2 (variance-2 Brownian motion) this is -zeta(1/2)/sqrt(pi),
    the classical 0.5826 sigma continuity correction with sigma = sqrt(2).
    """
    a = 1.0 - 1.0 / alpha
    return float(-_zeta(a) * _gamma(a) / math.pi)


# ---------------------------------------------------------------- per-state helpers


def stable_level(model, x):
    """a(x) = k(x) scale / c(d, alpha): the time-change factor of the stable driver."""
    return model.z_free(x) * (model.scale / frac_constant(model.dim, model.alpha))


def local_level(model, x, eps):
    # level seen by jumps of size ~eps, used only for the boundary shift
    z = np.zeros_like(x)
    z[:, 0] = eps
    return model.numerator(x, z) * (model.scale / frac_constant(model.dim, model.alpha))


def small_jump_variance(model, x, eps):
    """Per-coordinate variance rate of the jumps in |z| < eps."""
    if model.small_jump_variance is not None:
        return np.asarray(model.small_jump_variance(x, eps), dtype=float) * np.ones(len(x))
    d, a = model.dim, model.alpha
    z = np.zeros_like(x)
    z[:, 0] = 0.5 * eps
    k = model.numerator(x, z)
    return model.scale * k * _quad.sphere_measure(d) / d * eps ** (2.0 - a) / (2.0 - a)


def compensation_drift(model, x, eps):
    """-int_{eps <= |z| <= 1} z pi(x, z) dz; zero for symmetric numerators."""
    if model.symmetric or eps >= 1.0:
        return np.zeros_like(x)
    if model.compensation is not None:
        return model.compensation(x, eps)
    return generic_compensation(model, x, eps)


# ---------------------------------------------------------------- observers


class Observer:
    """Per-chunk accumulator hooked into the engine.

    Factories are called as ``factory(offset, m)`` for a chunk holding the
    global paths ``offset .. offset + m - 1``.  ``on_step(ids, x, w)`` is
    called once per step with global path ids, the pre-step states and the
    time ``w`` each path spent there; ``on_jump(ids, t, pre, post)`` for
    every realised jump.  ``merge`` combines chunk results in chunk order.
    """

    wants_increments = False

    def on_step(self, ids, x, w):
        pass

    def on_jump(self, ids, t, pre, post):
        pass

    def merge(self, other):
        raise NotImplementedError


@dataclass
class PathBatch:
    """Per-path outcome of a batch run (arrays indexed by path)."""

    exit_time: np.ndarray
    exited: np.ndarray
    by_jump: np.ndarray
    pre_exit: np.ndarray
    exit_state: np.ndarray
    final_state: np.ndarray
    integral: np.ndarray
    t_max: float
    observers: list = field(default_factory=list)

    @property
    def n(self):
        return self.exit_time.size

    @property
    def truncated(self):
        return ~self.exited

    @property
    def truncated_fraction(self):
        return float(np.mean(~self.exited)) if self.n else 0.0

    def stopped_time(self):
        """tau ^ t_max per path."""
        return np.where(self.exited, self.exit_time, self.t_max)


class _Chunk:
    """Simulates one chunk of paths; all state is local to the instance."""

    def __init__(self, model, x0, cfg, stop, stream, f, observers, t_max, offset):
        self.model = model
        self.cfg = cfg
        self.stop = stop
        self.gen = stream.generator
        self.f = f
        self.obs = observers
        self.t_max = t_max
        self.offset = offset
        self.mode = cfg.resolved_mode(model)
        self.eps = cfg.resolved_epsilon(stop)
        self.sj = cfg.resolved_small_jumps(model.alpha)
        self.beta = overshoot_constant(model.alpha) if (cfg.boundary_correction and stop is not None) else 0.0
        m, d = x0.shape
        self.m, self.d = m, d
        self.X = x0.copy()
        self.exit_time = np.full(m, np.inf)
        self.exited = np.zeros(m, bool)
        self.by_jump = np.zeros(m, bool)
        self.pre_exit = np.full((m, d), np.nan)
        self.exit_state = np.full((m, d), np.nan)
        self.integral = np.zeros(m)
        if self.mode == "jumps":
            self.rates = envelope_rates(model, self.eps)
            self.rate = float(self.rates.sum())

    # exits ------------------------------------------------------------
    def _record_exit(self, rows, t, pre, post, by_jump):
        self.exited[rows] = True
        self.exit_time[rows] = t
        self.pre_exit[rows] = pre
        self.exit_state[rows] = post
        self.by_jump[rows] = by_jump

    def _outside(self, y, shift):
        out = ~self.stop.contains(y)
        if self.beta > 0:
            zone = ~out & (self.stop.dist_to_boundary(y) < shift)
            return out, zone
        return out, np.zeros_like(out)

    def _bisect(self, x, y):
        """Largest s with x + s (y - x) inside, to the configured tolerance."""
        lo = np.zeros(len(x))
        hi = np.ones(len(x))
        seg = np.linalg.norm(y - x, axis=1)
        tol = self.cfg.bisect_tol * self.stop.length_scale
        n_it = int(np.clip(np.ceil(np.log2(max(seg.max(), tol) / tol)), 1, 80))
        for _ in range(n_it):
            mid = 0.5 * (lo + hi)
            inside = self.stop.contains(x + mid[:, None] * (y - x))
            lo = np.where(inside, mid, lo)
            hi = np.where(inside, hi, mid)
        return lo, hi

    # main loop --------------------------------------------------------
    def run(self):
        cfg = self.cfg
        idx = np.arange(self.m)
        if self.stop is not None:
            start_out = ~self.stop.contains(self.X)
            if np.any(start_out):
                r = idx[start_out]
                self._record_exit(r, 0.0, self.X[r], self.X[r], False)
                idx = idx[~start_out]
        t = 0.0
        k = 0
        while idx.size and t < self.t_max * (1 - 1e-12):
            h = min(cfg.dt, self.t_max - t)
            x_start = self.X[idx].copy()
            w = np.full(idx.size, h)
            if self.mode == "stable":
                keep = self._stable_step(idx, t, h, w)
            else:
                keep = self._jump_step(idx, t, h, w)
            if self.f is not None:
                self.integral[idx] += self.f(x_start) * w
            for o in self.obs:
                o.on_step(idx + self.offset, x_start, w)
            idx = idx[keep]
            if idx.size and np.any(np.abs(self.X[idx]) > OVERFLOW):
                raise StateOverflow(f"|X| exceeded {OVERFLOW:g} at t={t + h:g}")
            k += 1
            t = k * cfg.dt if k * cfg.dt <= self.t_max else self.t_max
        return self.X

    def _drift_part(self, idx, t, h, w, vel, noise=None):
        """Apply the continuous move; returns a mask of paths still alive (over idx)."""
        x = self.X[idx]
        y = x + vel * h
        if noise is not None:
            y = y + noise
        alive = np.ones(idx.size, bool)
        if self.stop is not None:
            out = ~self.stop.contains(y)
            if np.any(out):
                lo, hi = self._bisect(x[out], y[out])
                r = idx[out]
                seg = y[out] - x[out]
                self._record_exit(r, t + hi * h, x[out] + lo[:, None] * seg, x[out] + hi[:, None] * seg, False)
                w[out] = hi * h
                alive[out] = False
        self.X[idx[alive]] = y[alive]
        return alive

    def _stable_step(self, idx, t, h, w):
        model = self.model
        x = self.X[idx]
        lev = stable_level(model, x)
        alive = self._drift_part(idx, t, h, w, model.drift(x))
        if self.cfg.crn:
            s_all = unit_stable(model.alpha, self.d, self.gen, self.m)
            s = s_all[idx]
        else:
            s = unit_stable(model.alpha, self.d, self.gen, idx.size)
        rows = idx[alive]
        if rows.size == 0:
            return alive
        scale = (lev[alive] * h) ** (1.0 / model.alpha)
        z = scale[:, None] * s[alive]
        pre = self.X[rows].copy()
        post = pre + z
        self.X[rows] = post
        for o in self.obs:
            if o.wants_increments:
                o.on_jump(rows + self.offset, np.full(rows.size, t + h), pre, post)
        if self.stop is not None:
            out, zone = self._outside(post, self.beta * scale)
            if np.any(out):
                r = rows[out]
                self._record_exit(r, t + h, pre[out], post[out], True)
            if np.any(zone):
                r = rows[zone]
                self._record_exit(r, t + h, pre[zone], self.stop.project_to_boundary(post[zone]), True)
            gone = out | zone
            sub = np.flatnonzero(alive)
            alive[sub[gone]] = False
        return alive

    def _jump_step(self, idx, t, h, w):
        model = self.model
        gen = self.gen
        d = self.d
        n = idx.size
        alive = np.ones(n, bool)
        # thinned jumps at uniform times in (t, t+h), processed in time order
        if self.rate > 0:
            counts = gen.poisson(self.rate * h, size=n)
            tot = int(counts.sum())
            if tot:
                pid = np.repeat(np.arange(n), counts)
                times = t + h * gen.random(tot)
                if len(self.rates) > 1:
                    comp = gen.choice(len(self.rates), size=tot, p=self.rates / self.rate)
                else:
                    comp = np.zeros(tot, dtype=int)
                r = envelope_radii(model, comp, self.eps, gen)
                z = r[:, None] * uniform_directions(d, gen, tot)
                u = gen.random(tot)
                order = np.lexsort((times, pid))
                pid, times, z, u = pid[order], times[order], z[order], u[order]
                starts = np.cumsum(counts) - counts
                rank = np.arange(tot) - starts[pid]
                by_rank = np.argsort(rank, kind="stable")
                bounds = np.searchsorted(rank[by_rank], np.arange(int(counts.max()) + 1))
                for j in range(int(counts.max())):
                    sel = by_rank[bounds[j] : bounds[j + 1]]
                    sel = sel[alive[pid[sel]]]
                    if sel.size == 0:
                        continue
                    p = pid[sel]
                    rows = idx[p]
                    xcur = self.X[rows]
                    acc = u[sel] < acceptance_ratio(model, xcur, z[sel])
                    if not np.any(acc):
                        continue
                    p, rows, sel = p[acc], rows[acc], sel[acc]
                    pre = xcur[acc]
                    post = pre + z[sel]
                    self.X[rows] = post
                    for o in self.obs:
                        o.on_jump(rows + self.offset, times[sel], pre, post)
                    if self.stop is not None:
                        out = ~self.stop.contains(post)
                        if np.any(out):
                            self._record_exit(rows[out], times[sel][out], pre[out], post[out], True)
                            w[p[out]] = times[sel][out] - t
                            alive[p[out]] = False
        # continuous part for the survivors
        sub = np.flatnonzero(alive)
        if sub.size == 0:
            return alive
        rows = idx[sub]
        x = self.X[rows]
        vel = model.drift(x) + compensation_drift(model, x, self.eps)
        noise = None
        if self.sj == "gaussian":
            var = small_jump_variance(model, x, self.eps)
            noise = np.sqrt(var * h)[:, None] * gen.standard_normal((sub.size, d))
        w_sub = w[sub]
        ok = self._drift_part(rows, t, h, w_sub, vel, noise)
        w[sub] = w_sub
        alive[sub[~ok]] = False
        if self.beta > 0:
            sub = np.flatnonzero(alive)
            rows = idx[sub]
            if rows.size:
                y = self.X[rows]
                shift = self.beta * (local_level(model, y, self.eps) * h) ** (1.0 / model.alpha)
                zone = self.stop.dist_to_boundary(y) < shift
                if np.any(zone):
                    r = rows[zone]
                    self._record_exit(r, t + h, y[zone], self.stop.project_to_boundary(y[zone]), False)
                    alive[sub[zone]] = False
        return alive


def _as_starts(model, x0, n_paths):
    x0 = np.asarray(x0, dtype=float)
    if x0.ndim <= 1:
        x0 = np.broadcast_to(x0.reshape(1, -1), (int(n_paths), model.dim))
    if x0.shape[1] != model.dim:
        raise ValidationError("start point dimension does not match the model")
    return np.ascontiguousarray(x0, dtype=float)


def run_paths(model, x0, n_paths, cfg, rng, stop=None, f=None, observers=(), t_max=None):
    """Simulate ``n_paths`` paths and return a :class:`PathBatch`.

    ``x0`` is a point or an ``(n_paths, d)`` array; ``observers`` is a
    sequence of factories ``(offset, m) -> Observer``.
    Chunk ``c`` uses ``rng.child(c)``.
    """
    if not isinstance(rng, RngStream):
        raise TypeError("rng must be an RngStream")
    starts = _as_starts(model, x0, n_paths)
    n = starts.shape[0]
    horizon = cfg.t_max if t_max is None else t_max
    if horizon is None:
        raise ValidationError("a finite horizon is required (t_max)")
    cs = cfg.chunk_size
    n_chunks = max(1, -(-n // cs))

    def job(c):
        lo, hi = c * cs, min(n, (c + 1) * cs)
        obs = [fac(lo, hi - lo) for fac in observers]
        ch = _Chunk(model, starts[lo:hi], cfg, stop, rng.child(c), f, obs, horizon, lo)
        final = ch.run()
        return ch, final, obs

    if cfg.workers > 1 and n_chunks > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as ex:
            parts = list(ex.map(job, range(n_chunks)))
    else:
        parts = [job(c) for c in range(n_chunks)]

    cat = lambda name: np.concatenate([getattr(p[0], name) for p in parts])
    merged = []
    for j in range(len(observers)):
        acc = parts[0][2][j]
        for p in parts[1:]:
            acc = acc.merge(p[2][j])
        merged.append(acc)
    return PathBatch(
        exit_time=cat("exit_time"),
        exited=cat("exited"),
        by_jump=cat("by_jump"),
        pre_exit=cat("pre_exit"),
        exit_state=cat("exit_state"),
        final_state=np.concatenate([p[1] for p in parts]),
        integral=cat("integral"),
        t_max=float(horizon),
        observers=merged,
    )


def pilot_horizon(model, x0, cfg, stop, rng, n_pilot=1000, factor=50.0, max_steps=2_000_000):
    """Adaptive horizon: ``factor`` times a pilot estimate of E[tau].

    The pilot runs on its own sub-stream so it never shares variates with
    the main run.  Returns ``(horizon, pilot_mean, pilot_truncated_fraction)``.
    """
    pr = rng.child(PILOT_KEY)
    t_try = 2000 * cfg.dt
    while True:
        b = run_paths(model, x0, n_pilot, cfg.with_(t_max=t_try, workers=1), pr, stop=stop)
        frac = b.truncated_fraction
        if frac <= 0.01 or t_try >= max_steps * cfg.dt:
            mean = float(np.mean(b.stopped_time()))
            return max(factor * mean, 10 * cfg.dt), mean, frac
        t_try *= 8.0


# ---------------------------------------------------------------- single path


@dataclass
class Trajectory:
    """One simulated path.

    ``states[i]`` is the state at ``times[i]``; ``is_jump[i]`` marks states
    reached by a recorded jump.  ``jumps`` holds ``(time, pre, z)`` tuples and
    ``exit_record`` is ``(exit_time, pre_exit_state, exit_state, by_jump)``.
    """

    times: np.ndarray
    states: np.ndarray
    is_jump: np.ndarray
    jumps: list
    exit_record: tuple | None


class _Recorder(Observer):
    wants_increments = True

    def __init__(self, eps, dense):
        self.eps = eps
        self.dense = dense
        self.events = []
        self.jumps = []

    def on_jump(self, ids, t, pre, post):
        z = post - pre
        for ti, p, zi, q in zip(np.atleast_1d(t), pre, z, post):
            if np.linalg.norm(zi) >= self.eps:
                self.jumps.append((float(ti), p.copy(), zi.copy()))
                self.events.append((float(ti), q.copy(), True))
            elif self.dense:
                self.events.append((float(ti), q.copy(), False))

    def merge(self, other):
        return self


def simulate(model, x0, cfg, rng, stop=None):
    """Simulate one path and return a :class:`Trajectory`."""
    x0 = np.asarray(x0, dtype=float).reshape(1, model.dim)
    if stop is not None and not stop.contains(x0)[0]:
        raise ValidationError("x0 must lie in the stopping domain")
    horizon = cfg.t_max if cfg.t_max is not None else 1e4 * cfg.dt
    rec = _Recorder(cfg.resolved_epsilon(stop), cfg.store_states)
    ch = _Chunk(model, x0, cfg.with_(crn=False), stop, rng.child(0), None, [], horizon, 0)
    dense = []
    # run step by step so that dense states can be captured
    ch.obs = [rec]
    idx = np.arange(1)
    t = 0.0
    k = 0
    while idx.size and t < horizon * (1 - 1e-12):
        h = min(cfg.dt, horizon - t)
        w = np.full(1, h)
        keep = ch._stable_step(idx, t, h, w) if ch.mode == "stable" else ch._jump_step(idx, t, h, w)
        k += 1
        t_new = min(k * cfg.dt, horizon)
        if keep[0]:
            if cfg.store_states:
                dense.append((t_new, ch.X[0].copy(), False))
        idx = idx[keep]
        if idx.size and np.any(np.abs(ch.X[idx]) > OVERFLOW):
            raise StateOverflow(f"|X| exceeded {OVERFLOW:g}")
        t = t_new
    events = [(0.0, x0[0].copy(), False)] + rec.events + dense
    exit_record = None
    if ch.exited[0]:
        te = float(ch.exit_time[0])
        exit_record = (te, ch.pre_exit[0].copy(), ch.exit_state[0].copy(), bool(ch.by_jump[0]))
        if not ch.by_jump[0]:
            events.append((te, ch.exit_state[0].copy(), False))
        events = [e for e in events if e[0] <= te]
    else:
        events.append((float(horizon), ch.X[0].copy(), False))
    # merge events at equal times, a jump flag wins, latest entry holds the state
    events.sort(key=lambda e: e[0])
    times, states, flags = [], [], []
    for te, s, j in events:
        if times and te <= times[-1]:
            if te == times[-1]:
                states[-1] = s if j or not flags[-1] else states[-1]
                flags[-1] = flags[-1] or j
            continue
        times.append(te)
        states.append(s)
        flags.append(j)
    return Trajectory(np.array(times), np.array(states), np.array(flags), rec.jumps, exit_record)


def write_trajectories_csv(trajectories, path, compress=None):
    """Write ``path_id,t,x_1..x_d,is_jump`` rows; gzip when the name ends in .gz."""
    compress = str(path).endswith(".gz") if compress is None else compress
    opener = gzip.open if compress else open
    d = trajectories[0].states.shape[1] if trajectories else 1
    with opener(path, "wt") as fh:
        fh.write(",".join(["path_id", "t"] + [f"x_{i + 1}" for i in range(d)] + ["is_jump"]) + "\n")
        for pid, tr in enumerate(trajectories):
            for t, s, j in zip(tr.times, tr.states, tr.is_jump):
                fh.write(f"{pid},{t!r}," + ",".join(repr(float(v)) for v in s) + f",{int(j)}\n")


# ---------------------------------------------------------------- checks


class _LevySystemObserver(Observer):
    """Counts A -> B jumps and integrates 1_A(X) rate_B(X) along the path.

    Within a step the state is piecewise constant between jumps, so the
    compensator is charged segment by segment; each path keeps its own clock.
    """

    def __init__(self, setA, setB, comp_rate, offset, m):
        self.A = setA
        self.B = setB
        self.rate = comp_rate
        self.offset = offset
        self.counts = np.zeros(m)
        self.comp = np.zeros(m)
        self.clock = np.zeros(m)
        self.seg_t = np.full(m, np.nan)
        self.seg_x = None

    def _charge(self, i, x, dt):
        inA = self.A.contains(x)
        if np.any(inA):
            self.comp[i[inA]] += self.rate(x[inA]) * dt[inA]

    def on_step(self, ids, x, w):
        i = ids - self.offset
        end = self.clock[i] + w
        jumped = ~np.isnan(self.seg_t[i])
        if np.any(~jumped):
            self._charge(i[~jumped], x[~jumped], w[~jumped])
        if np.any(jumped):
            j = i[jumped]
            self._charge(j, self.seg_x[j], end[jumped] - self.seg_t[j])
            self.seg_t[j] = np.nan
        self.clock[i] = end

    def on_jump(self, ids, t, pre, post):
        i = ids - self.offset
        if self.seg_x is None:
            self.seg_x = np.zeros((self.counts.size, pre.shape[1]))
        start = np.where(np.isnan(self.seg_t[i]), self.clock[i], self.seg_t[i])
        self._charge(i, pre, t - start)
        self.seg_t[i] = t
        self.seg_x[i] = post
        hit = self.A.contains(pre) & self.B.contains(post)
        np.add.at(self.counts, i[hit], 1.0)

    def merge(self, other):
        self.counts = np.concatenate([self.counts, other.counts])
        self.comp = np.concatenate([self.comp, other.comp])
        return self


def set_rate(model, target, x, order=12, panels=8, block=2048):
    """int_B pi(x, y - x) dy for a box or ball target B, by tensor Gauss-Legendre."""
    d = model.dim
    from .kernels import Ball, Box

    if isinstance(target, Box):
        lo, hi = target.lo, target.hi
    elif isinstance(target, Ball):
        lo, hi = target.center - target.radius, target.center + target.radius
    else:
        raise ValidationError("rate integration needs a Box or Ball target")
    nodes = []
    weights = []
    for i in range(d):
        n_, w_ = _quad.panel_rule(np.linspace(lo[i], hi[i], panels + 1), order)
        nodes.append(n_)
        weights.append(w_)
    grid = np.stack(np.meshgrid(*nodes, indexing="ij"), -1).reshape(-1, d)
    wts = np.prod(np.stack(np.meshgrid(*weights, indexing="ij"), -1).reshape(-1, d), axis=1)
    keep = target.contains(grid)
    grid, wts = grid[keep], wts[keep]
    x = np.asarray(x, dtype=float)
    out = np.empty(len(x))
    for s in range(0, len(x), block):
        xs = x[s : s + block]
        xx = np.repeat(xs, len(grid), axis=0)
        z = np.tile(grid, (len(xs), 1)) - xx
        out[s : s + block] = (model.pi(xx, z).reshape(len(xs), -1) * wts).sum(axis=1)
    return out


@dataclass
class LevySystemResult:
    jump_count_mean: float
    compensator_mean: float
    z_score: float
    stderr: float
    n: int

    def to_dict(self):
        return self.__dict__.copy()


def levy_system_check(model, setA, setB, t, n_paths, cfg, rng, x0=None, rate=None):
    """Compare E[#{s <= t: X_{s-} in A, X_s in B}] with E[int_0^t 1_A(X_s) int_B pi(X_s, y - X_s) dy ds].

    Jumps are simulated explicitly (thinning), so ``cfg.epsilon`` must be
    below the distance between A and B.  Returns the paired z-score.
    """
    _check_disjoint(setA, setB, model.dim)
    if x0 is None:
        x0 = np.zeros(model.dim)
    rate = rate or (lambda x: set_rate(model, setB, x))
    cfg = cfg.with_(mode="jumps", t_max=t)
    obs = lambda off, m: _LevySystemObserver(setA, setB, rate, off, m)
    b = run_paths(model, x0, n_paths, cfg, rng, stop=None, observers=[obs])
    cnt = b.observers[0].counts
    comp = b.observers[0].comp
    diff = cnt - comp
    # a mixed Poisson count has variance >= its mean compensator; this floor
    # keeps the z-score meaningful when both means are ~0
    var = max(float(np.var(diff, ddof=1)), float(comp.mean())) if n_paths > 1 else float("nan")
    se = math.sqrt(var / n_paths)
    z = float(np.mean(diff) / se) if se > 0 else 0.0
    return LevySystemResult(float(cnt.mean()), float(comp.mean()), z, se, int(n_paths))


def _check_disjoint(A, B, d, n=20000, seed=0):
    from .kernels import Ball, Box

    def bbox(s):
        if isinstance(s, Box):
            return s.lo, s.hi
        if isinstance(s, Ball):
            return s.center - s.radius, s.center + s.radius
        raise ValidationError("Levy-system sets must be boxes or balls")

    la, ha = bbox(A)
    lb, hb = bbox(B)
    lo = np.maximum(la, lb)
    hi = np.minimum(ha, hb)
    if np.any(lo >= hi):
        return
    pts = np.random.default_rng(seed).uniform(lo, hi, size=(n, d))
    if np.any(A.contains(pts) & B.contains(pts)):
        raise DisjointnessViolated("sets A and B intersect")


@dataclass
class SmallBallResult:
    radii: list
    probabilities: list
    stderr: list
    kappa: float
    log_residuals: list
    ok: bool


def small_ball_fit(model, x0, t, radii, n_paths, cfg, rng, tol=0.3):
    """Estimate P(sup_{s<=t} |X_s - x0| > r) and fit one kappa with P ~ kappa t r**(-alpha)."""
    from .kernels import Ball

    probs, ses = [], []
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    for i, r in enumerate(radii):
        b = run_paths(model, x0, n_paths, cfg.with_(t_max=t), rng.child(i), stop=Ball(x0, r))
        p = float(np.mean(b.exited))
        probs.append(p)
        ses.append(math.sqrt(max(p * (1 - p), 1e-300) / n_paths))
    lp = np.log(np.maximum(probs, 1e-300)) + model.alpha * np.log(radii) - math.log(t)
    log_kappa = float(np.mean(lp))
    res = (lp - log_kappa).tolist()
    ok = bool(np.all(np.array(probs) > 0) and np.all(np.abs(res) < tol))
    return SmallBallResult(list(map(float, radii)), probs, ses, math.exp(log_kappa), res, ok)


@dataclass
class RefinementResult:
    coarse_mean: float
    coarse_stderr: float
    fine_mean: float
    fine_stderr: float
    diff_mean: float
    diff_stderr: float


def exit_time_refinement(model, x0, cfg, stop, n_paths, rng):
    """Mean exit times at dt and dt/2 on common random numbers.

    The coarse path uses the sum of the two fine stable increments of each
    coarse step, so both discretisations see the same driving noise.
    Requires the stable driver.
    """
    if cfg.resolved_mode(model) != "stable":
        raise ValidationError("refinement pairing needs the stable driver")
    a = model.alpha
    gen = rng.child(0).generator
    n = int(n_paths)
    h = cfg.dt / 2.0
    x0 = _as_starts(model, x0, n)
    xf = x0.copy()
    xc = x0.copy()
    tf = np.full(n, np.nan)
    tc = np.full(n, np.nan)
    af = np.ones(n, bool)
    ac = np.ones(n, bool)
    beta = overshoot_constant(a) if cfg.boundary_correction else 0.0
    acc = np.zeros((n, model.dim))
    xc_start = xc.copy()
    t_max = cfg.t_max if cfg.t_max is not None else 1e4 * cfg.dt
    k = 0
    while (af.any() or ac.any()) and k * h < t_max:
        s = unit_stable(a, model.dim, gen, n)
        # fine step
        lev = stable_level(model, xf)
        sc = (lev * h) ** (1.0 / a)
        step_f = model.drift(xf) * h + sc[:, None] * s
        yf = xf + step_f
        out = ~stop.contains(yf) | (stop.dist_to_boundary(yf) < beta * sc)
        newly = af & out
        tf[newly] = (k + 1) * h
        af &= ~out
        xf = np.where(af[:, None], yf, xf)
        # coarse accumulates driver noise over two fine steps
        if k % 2 == 0:
            xc_start = xc.copy()
            acc = s.copy()
        else:
            acc = acc + s
            levc = stable_level(model, xc_start)
            scc = (levc * h) ** (1.0 / a)
            yc = xc_start + model.drift(xc_start) * (2 * h) + scc[:, None] * acc
            out = ~stop.contains(yc) | (stop.dist_to_boundary(yc) < beta * (levc * 2 * h) ** (1.0 / a))
            newly = ac & out
            tc[newly] = (k + 1) * h
            ac &= ~out
            xc = np.where(ac[:, None], yc, xc)
        k += 1
    tf[np.isnan(tf)] = t_max
    tc[np.isnan(tc)] = t_max
    sq = math.sqrt(n)
    diff = tf - tc
    return RefinementResult(
        float(tc.mean()), float(tc.std(ddof=1) / sq), float(tf.mean()), float(tf.std(ddof=1) / sq),
        float(diff.mean()), float(diff.std(ddof=1) / sq),
    )
