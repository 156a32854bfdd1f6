"""Dense one-dimensional solver for I u = -f in (a, b), u = g outside.

The unknown is the piecewise-linear interpolant through the interior nodes
and the boundary values g(a), g(b).  Row i of the discrete operator is

* core |z| < h: the second difference times the exact moment
  int_{|z|<h} z^2/2 |z|**(-1-alpha) dz with k frozen at |z| = h/2, less
  the leading interpolation error h^2/12 u'' int_{|z|>=h} pi of the near
  field;
* near field (x_i + z inside [a, b], |z| >= h): exact moments of
  |z|**(-1-alpha) against the hat functions, with k linear on each cell;
* far field (x_i + z outside [a, b]): Gauss-Legendre on log panels up to
  1e4 (b - a) plus a power-law closure, applied to g for the right-hand
  side and to 1 for the diagonal, so constants cancel exactly;
* the compensator -u'(x_i) int_{h<=|z|<=1} z pi dz (zero for symmetric k);
* drift by upwind (default) or central differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np
import scipy.linalg

from . import _quad
from .errors import ComparisonViolated, ResidualTooLarge, SingularSystem, ValidationError
from .grid import GridFunction1D, _zero
from .kernels import _power_fit, make_kernel


def _moment(m, a, z0, z1):
    """int_{z0}^{z1} z^m |z|^(-1-a) dz for intervals not containing 0 (vectorized)."""
    z0 = np.asarray(z0, dtype=float)
    z1 = np.asarray(z1, dtype=float)
    s = np.where(z0 > 0, 1.0, -1.0)
    lo = np.minimum(np.abs(z0), np.abs(z1))
    hi = np.maximum(np.abs(z0), np.abs(z1))
    e = m - a
    # z^m = s^m |z|^m and the interval keeps its orientation z0 < z1
    return s**m * (hi**e - lo**e) / e


def _cell_weights(model, xi, y0, y1):
    """Weights (w0, w1) with int_{y0}^{y1} u(y) pi(xi, y - xi) dy = w0 u(y0) + w1 u(y1) for linear u.

    k(xi, .) is taken linear on each cell; y0, y1 may be arrays of cells.
    """
    a = model.alpha
    z0 = np.atleast_1d(np.asarray(y0, dtype=float) - xi)
    z1 = np.atleast_1d(np.asarray(y1, dtype=float) - xi)
    xx = np.full((z0.size, 1), xi)
    k0 = model.numerator(xx, z0[:, None])
    k1 = model.numerator(xx, z1[:, None])
    h = z1 - z0
    M0 = _moment(0, a, z0, z1)
    M1 = _moment(1, a, z0, z1)
    M2 = _moment(2, a, z0, z1)
    # with t = (z - z0)/h: k = k0 + (k1 - k0) t, hats 1 - t and t
    T1 = (M1 - z0 * M0) / h
    T2 = (M2 - 2 * z0 * M1 + z0 * z0 * M0) / h**2
    int_k = k0 * M0 + (k1 - k0) * T1
    int_tk = k0 * T1 + (k1 - k0) * T2
    s = model.scale
    return s * (int_k - int_tk), s * int_tk


def _far_rule(model, xi, a, b, r_max_factor=1e4, per_decade=8, order=10):
    """Nodes y and weights W for int_{y outside [a, b]} phi(y) pi(xi, y - xi) dy, plus closure data."""
    L = b - a
    R = r_max_factor * L
    out = []
    for sign, dist in ((-1.0, xi - a), (1.0, b - xi)):
        edges = _quad.log_edges(dist, R, per_decade)
        r, w = _quad.panel_rule(edges, order)
        z = sign * r
        pi = model.pi(np.full((r.size, 1), xi), z[:, None])
        out.append((xi + z, w * pi, sign, R))
    return out


def _far_apply(model, xi, rule, phi):
    """Far-field integral of phi with the power-law closure beyond R."""
    a_ = model.alpha
    total = 0.0
    for y, W, sign, R in rule:
        total += float(np.sum(W * phi(y)))
        rr = np.array([R, 2 * R, 4 * R])
        vals = phi(xi + sign * rr) * model.numerator(np.full((3, 1), xi), (sign * rr)[:, None])
        c, B, p = _power_fit(vals[0], vals[1], vals[2], R)
        clos = c * R ** (-a_) / a_
        if B != 0:
            if p >= a_:
                raise ValidationError("exterior data grows too fast for the far-field closure")
            clos += B * R ** (p - a_) / (a_ - p)
        total += model.scale * clos
    return total


def _compensator(model, xi, h, order=10):
    """int_{h <= |z| <= 1} z pi(xi, z) dz (1-D)."""
    if model.symmetric or h >= 1.0:
        return 0.0
    r, w = _quad.panel_rule(_quad.log_edges(h, 1.0, 8), order)
    xx = np.full((r.size, 1), xi)
    return float(np.sum(w * r * (model.pi(xx, r[:, None]) - model.pi(xx, -r[:, None]))))


@dataclass
class FdSolution:
    """Solution plus the assembled system and a residual report."""

    u: GridFunction1D
    matrix: np.ndarray
    rhs: np.ndarray
    f_values: np.ndarray
    residual: float
    relative_residual: float
    info: dict = field(default_factory=dict)

    @property
    def nodes(self):
        return self.u.nodes

    @property
    def values(self):
        return self.u.values

    def __call__(self, x):
        return self.u(x)

    def report(self):
        return {"residual": self.residual, "relative_residual": self.relative_residual, **self.info}


def assemble(model, interval, n, g=None, drift_scheme="upwind"):
    """Discrete operator L (n x n) and exterior contribution r, so that I u ~ L u + r at the nodes."""
    if model.dim != 1:
        raise ValidationError("the grid solver is one-dimensional")
    if n < 16:
        raise ValidationError("n must be >= 16")
    if drift_scheme not in ("upwind", "central"):
        raise ValidationError("drift_scheme must be upwind or central")
    a, b = map(float, interval)
    g = g or _zero
    h = (b - a) / (n + 1)
    x = a + h * np.arange(1, n + 1)
    ga, gb = (float(v) for v in g(np.array([a, b])))
    al = model.alpha
    L = np.zeros((n, n))
    r = np.zeros(n)
    # all grid points including boundary nodes; index j+1 <-> node j, 0 <-> a, n+1 <-> b
    pts = a + h * np.arange(n + 2)
    bvals = {0: ga, n + 1: gb}
    bx = model.drift(x[:, None])[:, 0]
    for i in range(n):
        xi = x[i]
        gi = i + 1
        row = np.zeros(n + 2)
        # core: second difference against int_{|z|<h} z^2/2 pi
        kc = 0.5 * (
            model.numerator(np.array([[xi]]), np.array([[0.5 * h]]))[0]
            + model.numerator(np.array([[xi]]), np.array([[-0.5 * h]]))[0]
        )
        # interpolation on cells with |z| >= h overestimates by u'' h^2/12 int pi;
        # subtracting it keeps the scheme second order in the near field
        cw = 1.0 / (2.0 - al) - 1.0 / (6.0 * al)
        if cw <= 0:
            cw = 1.0 / (2.0 - al)
        core = model.scale * kc * h ** (2.0 - al) * cw
        row[gi - 1] += core / h**2
        row[gi] -= 2.0 * core / h**2
        row[gi + 1] += core / h**2
        # near field cells with |z| >= h
        cells = np.concatenate([np.arange(0, gi - 1), np.arange(gi + 1, n + 1)])
        w0, w1 = _cell_weights(model, xi, pts[cells], pts[cells + 1])
        np.add.at(row, cells, w0)
        np.add.at(row, cells + 1, w1)
        mass = float(np.sum(w0) + np.sum(w1))
        # far field
        rule = _far_rule(model, xi, a, b)
        far_mass = _far_apply(model, xi, rule, lambda y: np.ones_like(y))
        r[i] += _far_apply(model, xi, rule, g)
        row[gi] -= mass + far_mass
        # compensator and drift
        comp = _compensator(model, xi, h)
        vel = bx[i] - comp
        if drift_scheme == "central" or vel == 0:
            row[gi + 1] += vel / (2 * h)
            row[gi - 1] -= vel / (2 * h)
        elif vel > 0:
            row[gi + 1] += vel / h
            row[gi] -= vel / h
        else:
            row[gi] += vel / h
            row[gi - 1] -= vel / h
        for jb, gv in bvals.items():
            r[i] += row[jb] * gv
        L[i] = row[1 : n + 1]
    return x, L, r


def assemble_and_solve(model, interval, n, f, g=None, drift_scheme="upwind", rtol=1e-8):
    """Solve I u = -f in (a, b), u = g outside, on ``n`` interior nodes.

    Raises
    ------
    SingularSystem
        If the dense solve fails or the matrix is numerically singular.
    ResidualTooLarge
        If ``|L u + r + f| > rtol * (|L| |u| + |r| + |f|)`` at some node.
    """
    g = g or _zero
    x, L, r = assemble(model, interval, n, g, drift_scheme)
    fv = np.asarray(f(x), dtype=float) * np.ones(n)
    rhs = -fv - r
    try:
        lu, piv = scipy.linalg.lu_factor(L, check_finite=True)
    except (ValueError, scipy.linalg.LinAlgError) as exc:
        raise SingularSystem(str(exc)) from exc
    if np.any(np.abs(np.diag(lu)) <= 1e-14 * np.abs(L).max()):
        raise SingularSystem("matrix is numerically singular")
    u = scipy.linalg.lu_solve((lu, piv), rhs)
    res = L @ u - rhs
    scale = np.abs(L) @ np.abs(u) + np.abs(rhs)
    rel = float(np.max(np.abs(res) / np.where(scale > 0, scale, 1.0)))
    if not np.all(np.isfinite(u)) or rel > rtol:
        raise ResidualTooLarge(f"relative residual {rel:.3g} exceeds {rtol:g}")
    a, b = map(float, interval)
    sol = GridFunction1D(a, b, u, g)
    return FdSolution(sol, L, rhs, fv, float(np.max(np.abs(res))), rel, {"n": n, "h": sol.h, "drift_scheme": drift_scheme})


@dataclass
class MaximumReport:
    sup_u: float
    sup_f: float
    ratio: float
    min_u: float
    nonnegative_data: bool
    comparison_ok: bool


def discrete_maximum_check(solution, f=None, g_nonneg=True, tol=1e-12):
    """sup|u| / sup|f| and the discrete comparison principle f >= 0, g >= 0 => u >= 0.

    Raises ComparisonViolated when non-negative data give a negative node value.
    """
    fv = solution.f_values if f is None else np.asarray(f(solution.nodes), dtype=float) * np.ones(solution.u.n)
    u = solution.values
    sup_f = float(np.max(np.abs(fv)))
    sup_u = float(np.max(np.abs(u)))
    nonneg = bool(np.all(fv >= 0) and g_nonneg)
    ok = True
    if nonneg and np.min(u) < -tol * max(1.0, sup_u):
        ok = False
        raise ComparisonViolated(f"u has a negative node value {np.min(u):.3g} for non-negative data")
    return MaximumReport(sup_u, sup_f, sup_u / sup_f if sup_f > 0 else math.inf, float(np.min(u)), nonneg, ok)


def holder_perturbation_kernel(alpha, amp, freq=1.0):
    """Base k = 1 perturbed by the symmetric weakly Holder family of the registry."""
    return make_kernel("holder_z", 1, alpha, amp=amp, freq=freq)


@dataclass
class PerturbationRow:
    amplitude: float
    delta: float
    ratio: float


def weakly_hoelder_perturbation_study(alpha, amplitudes, f, interval=(-1.0, 1.0), n=256, kernel_factory=None):
    """sup-norm change of the solution when k = 1 is perturbed with amplitude eps_k.

    ``kernel_factory(alpha, amp)`` builds the perturbed model (default: the
    registry's ``holder_z`` family).  Returns rows (eps_k, delta, delta/eps_k)
    and the observed Lipschitz-in-kernel constant max(delta/eps_k).
    """
    kernel_factory = kernel_factory or holder_perturbation_kernel
    base = assemble_and_solve(make_kernel("constant", 1, alpha), interval, n, f)
    rows = []
    for amp in amplitudes:
        if amp == 0:
            rows.append(PerturbationRow(0.0, 0.0, 0.0))
            continue
        sol = assemble_and_solve(kernel_factory(alpha, amp), interval, n, f)
        d = float(np.max(np.abs(sol.values - base.values)))
        rows.append(PerturbationRow(float(amp), d, d / amp))
    lip = max((r.ratio for r in rows), default=0.0)
    return rows, lip
