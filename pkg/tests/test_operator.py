import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from levykit.errors import EvaluationAtOrigin, GridTooCoarse, ValidationError
from levykit.grid import GridFunction1D
from levykit.kernels import Ball, frac_constant, make_kernel
from levykit.operator import (
    QuadratureScheme,
    SmoothProbe,
    apply_generator,
    barrier_integrals,
    core_refinement_order,
    flipped_compensation,
    frac_laplacian,
    gaussian_probe,
    getoor_constant,
    getoor_probe,
    kelvin_transform,
    psi_probe,
    weighted_norms,
)

# (-Delta)^(3/4) exp(-x^2) at 0 from the Fourier side:
# (2 pi)^-1 int |xi|^1.5 sqrt(pi) exp(-xi^2/4) dxi = 2^1.5 Gamma(1.25) / sqrt(pi)
GAUSS_FL_AT_0 = 1.4464090846320776


def const_probe(d, c=1.0):
    return SmoothProbe(lambda x: np.full(len(x), c), lambda x: np.zeros_like(x), lambda x: np.zeros((len(x), d, d)))


def linear_probe(v):
    v = np.asarray(v, dtype=float)
    return SmoothProbe(lambda x: x @ v, lambda x: np.broadcast_to(v, x.shape).copy(), lambda x: np.zeros((len(x), v.size, v.size)))


def shifted(f, h):
    h = np.asarray(h, dtype=float)
    return SmoothProbe(lambda x: f.value(x - h), lambda x: f.gradient(x - h), lambda x: f.hessian(x - h))


def dilated(f, lam):
    return SmoothProbe(lambda x: f.value(lam * x), lambda x: lam * f.gradient(lam * x), lambda x: lam**2 * f.hessian(lam * x))


MODELS = [("constant", {}), ("holder_bump", {"amp": 0.3}), ("holder_z", {"amp": 0.3})]


@pytest.mark.parametrize("key,kw", MODELS)
@pytest.mark.parametrize("d", [1, 2])
def test_constant_annihilated(key, kw, d):
    m = make_kernel(key, d, 1.5, **kw)
    for x in (np.zeros(d), np.full(d, 0.7)):
        assert abs(apply_generator(m, const_probe(d, 3.0), x)) < 1e-10


@pytest.mark.parametrize("key,kw", MODELS)
def test_linear_annihilated_without_drift(key, kw):
    m = make_kernel(key, 2, 1.5, **kw)
    assert abs(apply_generator(m, linear_probe([1.0, -2.0]), np.array([0.4, 0.1]))) < 1e-10


def test_linear_sees_drift_only():
    m = make_kernel("constant", 1, 1.5, drift={"kind": "constant", "value": 0.7})
    assert apply_generator(m, linear_probe([2.0]), [0.3]) == pytest.approx(1.4, abs=1e-10)


def test_gaussian_matches_fourier_oracle():
    m = make_kernel("constant", 1, 1.5)
    v = apply_generator(m, gaussian_probe(1, 1 / math.sqrt(2)), [0.0])
    assert -v == pytest.approx(GAUSS_FL_AT_0, rel=1e-6)


def test_gaussian_2d_fourier_oracle():
    # (-Delta)^s exp(-|x|^2) at 0 in d = 2 equals 2^(2s) Gamma(1 + s)
    s = 0.75
    v = frac_laplacian(gaussian_probe(2, 1 / math.sqrt(2)), [0.0, 0.0], s)
    assert v == pytest.approx(2 ** (2 * s) * math.gamma(1 + s), rel=1e-6)


@pytest.mark.parametrize("s", [0.6, 0.75, 0.9])
def test_getoor_constant_inside_ball(s):
    f = getoor_probe(s)
    vals = [frac_laplacian(f, [x], s) for x in (0.0, 0.3, -0.3, 0.6, -0.6)]
    assert max(vals) - min(vals) <= 1e-4 * abs(vals[0])
    assert vals[0] == pytest.approx(getoor_constant(s), rel=1e-6)


def test_psi_barrier_lower_bound():
    s, q = 0.75, 0.6
    f = psi_probe(q)
    xs = [0.2, 0.5, -0.5, 0.8, 0.9, 0.95, 0.99]
    ratios = [frac_laplacian(f, [x], s) / (1 - abs(x)) ** (q - 2 * s) for x in xs]
    assert min(ratios) > 0.1
    # near the boundary the ratio approaches -c(1, 2s) A(q)
    limit = -frac_constant(1, 2 * s) * barrier_integrals(s, q).A
    r = frac_laplacian(f, [0.9999], s) / 1e-4 ** (q - 2 * s)
    assert r == pytest.approx(limit, rel=1e-3)


@pytest.mark.parametrize("s", [0.6, 0.75, 0.9])
def test_barrier_A_at_s_vanishes(s):
    assert abs(barrier_integrals(s, s).A) < 1e-6


@pytest.mark.parametrize("s", [0.6, 0.75, 0.9])
def test_barrier_negative_and_increasing(s):
    qs = [s - 0.4 * 0.5, s - 0.2 * 0.5]
    res = [barrier_integrals(s, q) for q in qs]
    assert all(r.A < 0 for r in res)
    assert res[0].B < res[1].B


@settings(max_examples=15, deadline=None)
@given(st.floats(0.55, 0.95), st.floats(0.05, 0.95), st.floats(0.05, 0.95))
def test_barrier_B_monotone(s, u1, u2):
    lo, hi = sorted((u1, u2))
    if hi - lo < 1e-3:
        return
    q1, q2 = s - 0.5 + 0.5 * lo, s - 0.5 + 0.5 * hi
    assert barrier_integrals(s, q1).B < barrier_integrals(s, q2).B


def test_barrier_domain():
    with pytest.raises(ValidationError):
        barrier_integrals(0.75, 0.2)
    with pytest.raises(ValidationError):
        barrier_integrals(0.4, 0.3)


def test_mutation_hook_breaks_barrier_check():
    from levykit.acceptance import Budget, run_criterion

    with flipped_compensation():
        assert abs(barrier_integrals(0.75, 0.75).A) > 1.0
        assert not run_criterion(1, Budget(smoke=True)).passed
    assert run_criterion(1, Budget(smoke=True)).passed
    assert abs(barrier_integrals(0.75, 0.75).A) < 1e-6


def test_kelvin_of_one():
    k = kelvin_transform(const_probe(1), 1.5, 1)
    xs = np.array([[0.5], [2.0], [-3.0]])
    assert np.allclose(k.value(xs), np.abs(xs[:, 0]) ** 0.5, rtol=1e-15)


@given(st.floats(-5, 5).filter(lambda v: abs(v) > 1e-2), st.floats(-5, 5).filter(lambda v: abs(v) > 1e-2))
def test_kelvin_involution(a, b):
    f = gaussian_probe(2, 0.8)
    kk = kelvin_transform(kelvin_transform(f, 1.5, 2), 1.5, 2)
    x = np.array([[a, b]])
    assert kk.value(x)[0] == pytest.approx(f.value(x)[0], rel=1e-12, abs=1e-300)


def test_kelvin_origin():
    with pytest.raises(EvaluationAtOrigin):
        kelvin_transform(gaussian_probe(1), 1.5, 1).value(np.array([[0.0]]))


def test_kelvin_psi_boundary_rate():
    q = 0.6
    k = kelvin_transform(psi_probe(q), 1.5, 1)
    xs = 1 + np.geomspace(1e-5, 1e-2, 8)
    v = k.value(xs[:, None])
    assert np.all(v > 0)
    assert np.polyfit(np.log(xs - 1), np.log(v), 1)[0] == pytest.approx(q, abs=0.01)
    assert np.all(k.value(np.array([[1.2], [1.5], [1.9]])) > 0)


def test_translation_covariance():
    m = make_kernel("constant", 1, 1.5)
    f = gaussian_probe(1, 0.7)
    x, h = np.array([0.3]), np.array([1.7])
    assert apply_generator(m, shifted(f, h), x + h) == pytest.approx(apply_generator(m, f, x), rel=1e-7)


@pytest.mark.parametrize("lam", [0.5, 2.0])
def test_fractional_laplacian_scaling(lam):
    s = 0.75
    f = gaussian_probe(1, 1.0)
    x = np.array([0.4])
    lhs = frac_laplacian(dilated(f, lam), x, s)
    rhs = lam ** (2 * s) * frac_laplacian(f, lam * x, s)
    assert lhs == pytest.approx(rhs, rel=1e-7)


@settings(max_examples=10, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-1, 1))
def test_linearity(a, b, x):
    m = make_kernel("holder_z", 1, 1.5)
    f, g = gaussian_probe(1, 1.0), gaussian_probe(1, 0.4)
    fg = SmoothProbe(
        lambda y: a * f.value(y) + b * g.value(y),
        lambda y: a * f.gradient(y) + b * g.gradient(y),
        lambda y: a * f.hessian(y) + b * g.hessian(y),
    )
    lhs = apply_generator(m, fg, [x])
    rhs = a * apply_generator(m, f, [x]) + b * apply_generator(m, g, [x])
    assert abs(lhs - rhs) <= 1e-8 * (1 + abs(a) + abs(b))


@pytest.mark.parametrize("alpha", [1.2, 1.5, 1.8])
def test_core_remainder_order(alpha):
    r = core_refinement_order(make_kernel("constant", 1, alpha), gaussian_probe(1), [0.3])
    assert r.order >= 2 - alpha - 0.1


def test_refinement_error_reported():
    m = make_kernel("constant", 1, 1.5)
    val, err = apply_generator(m, gaussian_probe(1), [0.1], full_output=True)
    assert err <= QuadratureScheme().tol * max(1, abs(val))


# ---------------------------------------------------------------- weighted norms

U9 = np.array([0.1, 0.4, -0.2, 0.7, 1.0, 0.3, -0.5, 0.2, 0.05])


def _brute(u, r, gamma):
    # exhaustive pairs for gamma in (0, 1): sup d^r |u| and sup d_xy^(gamma+r) |u(x)-u(y)|/|x-y|^gamma
    x = list(u.nodes)
    v = list(u.values)
    dist = [min(xi - u.a, u.b - xi) for xi in x]
    sup0 = max(di**r * abs(vi) for di, vi in zip(dist, v))
    hol = 0.0
    for i in range(len(x)):
        for j in range(len(x)):
            if i != j:
                dxy = min(dist[i], dist[j])
                hol = max(hol, dxy ** (gamma + r) * abs(v[i] - v[j]) / abs(x[i] - x[j]) ** gamma)
    return sup0, hol


def test_weighted_norms_brute_force():
    u = GridFunction1D(-1.0, 1.0, U9)
    rep = weighted_norms(u, r=0.5, gamma=0.5)
    sup0, hol = _brute(u, 0.5, 0.5)
    assert rep.seminorms[0] == pytest.approx(sup0, rel=1e-14)
    assert rep.holder[(0, 0.5)] == pytest.approx(hol, rel=1e-14)
    assert rep.composite == pytest.approx(sup0 + hol, rel=1e-14)


def test_weighted_norms_zero_and_homogeneous():
    z = weighted_norms(GridFunction1D(-1.0, 1.0, np.zeros(9)), r=0.5, gamma=1.5)
    assert all(v == 0 for v in z.seminorms.values()) and all(v == 0 for v in z.holder.values())
    u = GridFunction1D(-1.0, 1.0, np.sin(np.linspace(-1, 1, 21)[1:-1] * 3))
    a = weighted_norms(u, r=0.5, gamma=1.5)
    b = weighted_norms(u.scaled(2.0), r=0.5, gamma=1.5)
    for k in a.seminorms:
        assert b.seminorms[k] == 2 * a.seminorms[k]
    for k in a.holder:
        assert b.holder[k] == 2 * a.holder[k]


def test_weighted_norms_scattered():
    pts = np.random.default_rng(0).uniform(-0.7, 0.7, size=(30, 2))
    vals = np.sum(pts, axis=1)
    rep = weighted_norms((pts, vals), domain=Ball([0.0, 0.0], 1.0), r=0.0, gamma=0.5)
    assert rep.composite > 0
    with pytest.raises(GridTooCoarse):
        weighted_norms(GridFunction1D(-1.0, 1.0, np.ones(4)))
