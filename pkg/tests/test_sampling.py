import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, special, stats

from levykit.errors import ValidationError
from levykit.kernels import frac_constant, make_kernel
from levykit.sampling import (
    RngStream,
    StableSpec,
    envelope_rates,
    sample_kernel_jumps,
    sample_positive_stable,
    sample_stable_1d,
    sample_stable_isotropic,
)

N = 100_000


def stable_cdf_1d(alpha, xs):
    # Gil-Pelaez inversion of exp(-|t|^alpha)
    out = []
    for x in xs:
        v, _ = integrate.quad(lambda t: math.sin(t * x) * math.exp(-(t**alpha)) / t, 0, np.inf, limit=400)
        out.append(0.5 + v / math.pi)
    return np.array(out)


def radial_cdf_2d(alpha, rs):
    # P(|X| <= r) = r int_0^inf J1(rho r) exp(-rho^alpha) drho for the cf exp(-|xi|^alpha)
    out = []
    for r in rs:
        v, _ = integrate.quad(lambda p: special.j1(p * r) * math.exp(-(p**alpha)), 0, 60, limit=800)
        out.append(r * v)
    return np.array(out)



@pytest.mark.parametrize("alpha", [1.2, 1.5, 1.8])
def test_sign_balance(alpha):
    x = sample_stable_1d(StableSpec(alpha), 1.0, RngStream(1), N)
    assert abs(np.sum(x > 0) - np.sum(x < 0)) / N < 3 / math.sqrt(N)


@pytest.mark.parametrize("alpha", [1.2, 1.5, 1.8])
def test_one_dim_law_matches_characteristic_function(alpha):
    x = sample_stable_1d(StableSpec(alpha), 1.0, RngStream(2), 20_000)
    grid = np.linspace(-30, 30, 1201)
    cdf = stable_cdf_1d(alpha, grid)
    inside = np.abs(x) < 30
    # conditional KS inside the window, tails checked by mass
    lo, hi = cdf[0], cdf[-1]
    p = stats.kstest(x[inside], lambda v: (np.interp(v, grid, cdf) - lo) / (hi - lo)).pvalue
    assert p > 0.01
    assert abs(np.mean(~inside) - (1 - hi + lo)) < 4 * math.sqrt((1 - hi + lo) / x.size)


@pytest.mark.parametrize("alpha", [1.3, 1.7])
def test_self_similarity_1d(alpha):
    spec = StableSpec(alpha)
    a = 2.0
    lhs = a * sample_stable_1d(spec, 1.0, RngStream(3, 0), N)
    rhs = sample_stable_1d(spec, a**alpha, RngStream(3, 1), N)
    assert stats.ks_2samp(lhs, rhs).pvalue > 0.01


def test_tail_slope():
    alpha = 1.5
    x = np.abs(sample_stable_1d(StableSpec(alpha), 1.0, RngStream(4), 1_000_000))
    r = np.geomspace(5, 50, 10)
    surv = np.array([np.mean(x > v) for v in r])
    slope = np.polyfit(np.log(r), np.log(surv), 1)[0]
    assert slope == pytest.approx(-alpha, abs=0.15)


def test_isotropy_2d():
    x = sample_stable_isotropic(StableSpec(1.5, 2), 1.0, RngStream(5), N)
    ang = np.mod(np.arctan2(x[:, 1], x[:, 0]), 2 * np.pi)
    assert stats.kstest(ang, stats.uniform(0, 2 * np.pi).cdf).pvalue > 0.01


@pytest.mark.parametrize("alpha", [1.2, 1.5, 1.8])
def test_radial_law_2d(alpha):
    x = sample_stable_isotropic(StableSpec(alpha, 2), 1.0, RngStream(6), 20_000)
    r = np.linalg.norm(x, axis=1)
    grid = np.linspace(0, 20, 801)
    cdf = radial_cdf_2d(alpha, grid)
    inside = r < 20
    p = stats.kstest(r[inside], lambda v: np.interp(v, grid, cdf) / cdf[-1]).pvalue
    assert p > 0.01


def test_projection_of_isotropic_is_one_dim_stable():
    # every coordinate of the isotropic vector has the 1-d law exp(-|t|^alpha)
    alpha = 1.5
    x = sample_stable_isotropic(StableSpec(alpha, 2), 1.0, RngStream(7), 20_000)
    grid = np.linspace(-30, 30, 1201)
    cdf = stable_cdf_1d(alpha, grid)
    lo, hi = cdf[0], cdf[-1]
    for k in range(2):
        v = x[np.abs(x[:, k]) < 30, k]
        assert stats.kstest(v, lambda u: (np.interp(u, grid, cdf) - lo) / (hi - lo)).pvalue > 0.01


def test_self_similarity_2d():
    spec = StableSpec(1.4, 2)
    lhs = 2.0 * sample_stable_isotropic(spec, 1.0, RngStream(8, 0), N)
    rhs = sample_stable_isotropic(spec, 2.0**1.4, RngStream(8, 1), N)
    assert stats.ks_2samp(np.linalg.norm(lhs, axis=1), np.linalg.norm(rhs, axis=1)).pvalue > 0.01


def test_positive_stable_laplace_transform():
    a = 0.75
    s = sample_positive_stable(a, RngStream(9), N)
    for lam in (0.5, 1.0, 2.0):
        v = np.exp(-lam * s)
        assert abs(v.mean() - math.exp(-(lam**a))) < 4 * v.std() / math.sqrt(N)


def test_jump_count_rate_and_dispersion():
    alpha, eps, dt = 1.5, 0.1, 0.05
    m = make_kernel("constant", 1, alpha)
    # dt * int_{|z|>=eps} c |z|^(-1-alpha) dz = dt * 2 c eps^(-alpha) / alpha
    expected = dt * 2 * frac_constant(1, alpha) * eps**-alpha / alpha
    rng = RngStream(10)
    counts = np.array([len(sample_kernel_jumps(m, [0.0], eps, dt, rng.child(i))) for i in range(10_000)])
    assert abs(counts.mean() - expected) < 3 * math.sqrt(expected / counts.size)
    assert 0.9 <= counts.var() / counts.mean() <= 1.1


def test_variable_order_acceptance_near_origin():
    a, b, c = 1.8, 1.5, 1.2
    m = make_kernel("variable_order", 1, a, alpha_prime=c, beta_prime=b)
    eps, dt = 0.05, 1.0
    # at |x| <= 1/8 pi = |z|^(-1-a) + |z|^(-1-b); the envelope adds |z|^(-1-c)
    num = eps**-a / a + eps**-b / b
    ratio = num / (num + eps**-c / c)
    acc = cand = 0
    rng = RngStream(11)
    for i in range(400):
        z, n = sample_kernel_jumps(m, [0.1], eps, dt, rng.child(i), return_stats=True)
        acc += len(z)
        cand += n
    p = acc / cand
    assert abs(p - ratio) < 3 * math.sqrt(ratio * (1 - ratio) / cand)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32), st.floats(0.01, 1.0))
def test_jumps_respect_threshold(seed, eps):
    m = make_kernel("holder_z", 2, 1.5)
    z = sample_kernel_jumps(m, [0.3, -0.2], eps, 0.1, RngStream(seed))
    assert z.shape[1] == 2
    assert np.all(np.linalg.norm(z, axis=1) >= eps * (1 - 1e-12))


def test_zero_intensity_window():
    m = make_kernel("constant", 1, 1.5)
    assert envelope_rates(m, 0.5, r_max=0.5)[0] == 0.0
    z = sample_kernel_jumps(m, [0.0], 0.5, 10.0, RngStream(12), r_max=0.5)
    assert z.shape == (0, 1)


def test_determinism_and_independence():
    spec = StableSpec(1.5)
    a = sample_stable_1d(spec, 1.0, RngStream(13, 4), 1000)
    b = sample_stable_1d(spec, 1.0, RngStream(13, 4), 1000)
    c = sample_stable_1d(spec, 1.0, RngStream(13, 5), 1000)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    r = RngStream(13)
    assert np.array_equal(r.child(2).generator.random(5), RngStream(13).child(2).generator.random(5))
    assert r.describe()["bit_generator"] == "Philox4x64"


def test_spec_validation():
    with pytest.raises(ValidationError):
        StableSpec(2.0)
    with pytest.raises(ValidationError):
        sample_stable_1d(StableSpec(1.5), 0.0, RngStream(0))
    with pytest.raises(ValidationError):
        RngStream(None)
    with pytest.raises(ValidationError):
        sample_positive_stable(1.2, RngStream(0))
