import math

import numpy as np
import pytest
from scipy import integrate
from hypothesis import given, settings, strategies as st

from levykit.errors import NonIntegrableKernel, SymmetryViolation, ValidationError
from levykit.kernels import (
    Annulus,
    Ball,
    Box,
    ComplementOfBall,
    KernelClass,
    KernelModel,
    VariableOrderKernel,
    domain_from_dict,
    frac_constant,
    growth_condition_check,
    linear_drift,
    make_kernel,
    radial_power_drift,
    truncated_integrability,
    validate,
)


def test_frac_constant_known_values():
    # c(1, 1) = 1/pi (Cauchy process), c(3, 1) = 1/pi^2
    assert frac_constant(1, 1.0) == pytest.approx(1 / math.pi, rel=1e-14)
    assert frac_constant(3, 1.0) == pytest.approx(1 / math.pi**2, rel=1e-14)


def test_constant_kernel_validates():
    m = make_kernel("constant", 1, 1.5)
    rep = validate(m, Ball([0.0], 2.0), n_probes=4)
    assert rep.ok
    for e in rep.entries:
        assert math.isfinite(e.integral) and e.integral > 0
        assert e.symmetry_residual == 0.0


def test_unknown_kernel_key_named():
    with pytest.raises(ValidationError, match="nope"):
        make_kernel("nope", 1, 1.5)


def test_alpha_range_enforced():
    with pytest.raises(ValidationError):
        make_kernel("constant", 1, 2.0)
    with pytest.raises(ValidationError):
        make_kernel("constant", 1, 1.0)


def test_negative_numerator_rejected():
    m = KernelModel(dim=1, alpha=1.5, numerator=lambda x, z: -np.ones(np.broadcast_shapes(np.shape(x)[:-1], np.shape(z)[:-1])))
    with pytest.raises(NonIntegrableKernel):
        validate(m, Ball([0.0], 1.0), n_probes=2)


def test_symmetry_violation():
    m = make_kernel("skewed", 1, 1.5)
    # the skewed kernel is tagged general, so validation passes ...
    assert validate(m, Ball([0.0], 1.0), n_probes=2).ok
    # ... but the same numerator promised symmetric is rejected
    lie = KernelModel(dim=1, alpha=1.5, numerator=m.numerator, class_tag=KernelClass.SYMMETRIC_NUMERATOR)
    with pytest.raises(SymmetryViolation):
        validate(lie, Ball([0.0], 1.0), n_probes=2)


def test_variable_order_far_region():
    vo = VariableOrderKernel(1.2, 1.5, 1.8, dim=1)
    rep = validate(vo.model(), Box([9.999], [10.001]), n_probes=2)
    assert rep.ok
    for e in rep.entries:
        lo, hi = e.gamma_range
        assert vo.alpha_prime - vo.beta_prime - 1e-14 <= lo and hi <= 1e-14
        assert e.gamma_zero_residual < 1e-14
    # direct check of the far-region reduction at x = 10
    x = np.array([[10.0]])
    z = np.linspace(-200, 200, 4001)[:, None]
    far = np.abs(x + z)[:, 0] >= 5.5
    g = vo.gamma(np.broadcast_to(x, z.shape), z)
    assert np.all(g[far] == 0.0)


@given(st.floats(-0.125, 0.125), st.floats(-50, 50).filter(lambda v: abs(v) > 1e-3))
def test_variable_order_inner_cutoff(x, z):
    vo = VariableOrderKernel(1.2, 1.5, 1.8, dim=1)
    xx, zz = np.array([[x]]), np.array([[z]])
    assert vo.gamma(xx, zz)[0] == 0.0
    r = abs(z)
    assert vo.pi(xx, zz)[0] == pytest.approx(r**-2.8 + r**-2.5, rel=1e-12)


def test_variable_order_parameter_order():
    with pytest.raises(ValidationError):
        VariableOrderKernel(1.5, 1.2, 1.8)


def _truncated(m, x, delta, R):
    # plain adaptive quadrature of int_{delta<|z|<R} (|z|^2 ^ 1) pi(x, z) dz in d = 1
    xx = np.array([[x]])

    def g(r):
        z = np.array([[r], [-r]])
        return float(np.sum(m.pi(np.repeat(xx, 2, 0), z))) * min(r * r, 1.0)

    pts = [p for p in (1.0,) if delta < p < R]
    return sum(integrate.quad(g, lo, hi, limit=200, epsrel=1e-11)[0] for lo, hi in zip([delta] + pts, pts + [R]))


def test_integrability_monotone_and_cauchy():
    for key in ("constant", "holder_z", "variable_order"):
        m = make_kernel(key, 1, 1.8)
        vals = [_truncated(m, 0.3, 1e-2 / 2**j, 1e2 * 2**j) for j in range(5)]
        assert np.all(np.diff(vals) > 0)
        steps = np.diff(vals)
        assert np.all(steps[1:] < steps[:-1])
        # the closed-out estimate is the limit of the truncations
        full = truncated_integrability(m, np.array([0.3]))
        assert vals[-1] < full
        assert full == pytest.approx(truncated_integrability(m, np.array([0.3]), delta=5e-5, r_max=2e4), rel=1e-6)


def test_constant_kernel_integral_closed_form():
    # int (|z|^2 ^ 1) c |z|^(-1-a) dz = 2c (1/(2-a) + 1/a)
    a = 1.5
    m = make_kernel("constant", 1, a)
    exact = 2 * frac_constant(1, a) * (1 / (2 - a) + 1 / a)
    assert truncated_integrability(m, np.array([0.0])) == pytest.approx(exact, rel=1e-8)


def test_growth_mean_reverting():
    m = make_kernel("constant", 1, 1.5, drift={"kind": "linear", "coef": -1.0})
    rep = growth_condition_check(m, [1, 10, 100, 1000])
    assert all(v <= 1.0 for v in rep.margins)
    assert rep.consistent


def test_growth_superlinear_flagged():
    m = make_kernel("constant", 1, 1.5).with_drift(radial_power_drift(1.0, 1.0))
    rep = growth_condition_check(m, [1, 10, 100, 1000])
    assert not rep.consistent
    assert rep.margins[-1] > 100 * rep.margins[0]


def test_growth_variable_order_dense_oracle():
    m = make_kernel("variable_order", 1, 1.8)
    radii = [1, 3, 10, 30, 100]
    rep = growth_condition_check(m, radii)
    dense = growth_condition_check(m, radii, n_dirs=32, z_radii=np.geomspace(1e-3, 1e3, 61))
    assert rep.consistent and dense.consistent
    assert rep.k0_estimate == pytest.approx(dense.k0_estimate, rel=0.05)


@given(st.floats(-3, 3), st.floats(-3, 3))
def test_ball_membership_exact(a, b):
    ball = Ball([0.5, -0.25], 1.25)
    x = np.array([[a, b]])
    inside = math.hypot(a - 0.5, b + 0.25) < 1.25
    assert bool(ball.contains(x)[0]) == inside
    assert bool(ComplementOfBall([0.5, -0.25], 1.25).contains(x)[0]) == (math.hypot(a - 0.5, b + 0.25) > 1.25)


def test_ball_boundary_not_inside():
    ball = Ball([0.0], 1.0)
    assert not ball.contains(np.array([[1.0]]))[0]
    assert ball.closure_contains(np.array([[1.0]]))[0]


def test_domain_roundtrip():
    for dom in (Ball([0.0, 1.0], 2.0), Box([-1.0], [2.0]), Annulus([0.0, 0.0], 1.0, 3.0)):
        again = domain_from_dict(dom.to_dict())
        assert again.to_dict() == dom.to_dict()


def test_scaled_kernel():
    m = make_kernel("constant", 2, 1.5)
    m2 = m.scaled(3.0)
    x = np.zeros((1, 2))
    z = np.array([[0.3, 0.4]])
    assert m2.pi(x, z)[0] == pytest.approx(3 * m.pi(x, z)[0], rel=1e-15)


def test_linear_drift_spec():
    b = linear_drift(-1.0)
    assert np.allclose(b(np.array([[2.0]])), [[-2.0]])
    assert b.spec == {"kind": "linear", "coef": -1.0}
