import math

import numpy as np
import pytest

from levykit.errors import DegenerateHarmonic, FitRejected, NoStabilization, TruncationDominant, ValidationError
from levykit.fd import assemble_and_solve
from levykit.feynman_kac import (
    DirichletProblem,
    McEstimate,
    boundary_decay,
    cone_exit_exponent,
    dirichlet_solve,
    exit_time_moments,
    exterior_hitting_time,
    harmonic_estimate,
    harnack_probe,
    indicator,
    survival_curve,
)
from levykit.kernels import Ball, Box, make_kernel
from levykit.paths import EulerConfig
from levykit.sampling import RngStream

UNIT = Ball([0.0], 1.0)
CFG = EulerConfig(dt=2e-3, t_max=20.0)


def const_model(d=1, alpha=1.5, **kw):
    return make_kernel("constant", d, alpha, **kw)


def test_zero_data_zero_estimate():
    est = dirichlet_solve(DirichletProblem(const_model(), UNIT), [0.2], 500, CFG, RngStream(0))
    assert est.mean == 0.0 and est.stderr == 0.0


def test_unit_exterior_data():
    est = dirichlet_solve(DirichletProblem(const_model(), UNIT, g=1.0), [0.2], 500, CFG, RngStream(0))
    assert est.mean == 1.0
    assert est.truncated_fraction == 0.0


def test_exterior_clause_exact():
    p = DirichletProblem(const_model(), UNIT, f=1.0, g=lambda x: 3.0 + x[:, 0])
    est = dirichlet_solve(p, [1.5], 1000, CFG, RngStream(0))
    assert est.exact and est.mean == 4.5 and est.stderr == 0.0


@pytest.mark.parametrize("drift", [None, {"kind": "constant", "value": 0.5}])
def test_matches_grid_oracle(drift):
    m = const_model(drift=drift)
    fd = assemble_and_solve(m, (-1.0, 1.0), 512, lambda x: np.ones_like(x))
    p = DirichletProblem(m, UNIT, f=1.0)
    for i, x in enumerate((0.0, 0.5, -0.5)):
        est = dirichlet_solve(p, [x], 10_000, CFG, RngStream(1, i))
        assert abs(est.mean - float(fd(np.array([x]))[0])) < 3 * est.stderr + 0.02


def test_monotone_in_data_at_matched_seeds():
    m = make_kernel("holder_z", 1, 1.5)
    f1, g1 = (lambda x: np.cos(x[:, 0])), (lambda x: x[:, 0] ** 2)
    p1 = DirichletProblem(m, UNIT, f=f1, g=g1)
    p2 = DirichletProblem(m, UNIT, f=lambda x: f1(x) + 0.5, g=lambda x: g1(x) + 0.1)
    a = dirichlet_solve(p1, [0.3], 2000, CFG, RngStream(2))
    b = dirichlet_solve(p2, [0.3], 2000, CFG, RngStream(2))
    assert a.mean <= b.mean


def test_linear_in_data_at_matched_seeds():
    m = const_model()
    f, g = (lambda x: 1 + x[:, 0]), (lambda x: np.abs(x[:, 0]))
    a = dirichlet_solve(DirichletProblem(m, UNIT, f=f, g=g), [0.1], 2000, CFG, RngStream(3))
    b = dirichlet_solve(DirichletProblem(m, UNIT, f=lambda x: 2 * f(x), g=lambda x: 2 * g(x)), [0.1], 2000, CFG, RngStream(3))
    assert b.mean == 2 * a.mean


def test_sup_norm_bound():
    m = const_model()
    f = lambda x: np.sin(5 * x[:, 0])
    u = dirichlet_solve(DirichletProblem(m, UNIT, f=f), [0.2], 4000, CFG, RngStream(4, 0))
    tau = dirichlet_solve(DirichletProblem(m, UNIT, f=1.0), [0.2], 4000, CFG, RngStream(4, 1))
    assert abs(u.mean) <= tau.mean + 3 * tau.stderr


def test_adaptive_horizon_and_record():
    est = dirichlet_solve(DirichletProblem(const_model(), UNIT, f=1.0), [0.0], 2000, EulerConfig(dt=5e-3), RngStream(5))
    assert est.horizon > 10 * 0.75
    rec = est.to_record("dirichlet_solve", {"x": 0.0})
    for k in ("op", "params", "mean", "stderr", "n", "seed", "wallclock"):
        assert k in rec
    assert rec["seed"] == 5 and not rec["flagged"]


def test_truncation_dominant():
    p = DirichletProblem(const_model(), UNIT, f=1.0)
    with pytest.raises(TruncationDominant) as ei:
        dirichlet_solve(p, [0.0], 1000, EulerConfig(dt=1e-2, t_max=0.05), RngStream(6))
    assert ei.value.estimate.flagged


def test_problem_validation():
    with pytest.raises(ValidationError):
        DirichletProblem(const_model(2), UNIT)
    with pytest.raises(ValidationError), np.errstate(divide="ignore"):
        DirichletProblem(const_model(), UNIT, f=lambda x: 1 / (x[:, 0] - x[:, 0]))


def test_mcestimate_band_and_flag():
    e = McEstimate.from_samples([1.0, 2.0, 3.0], truncated_fraction=0.02)
    assert e.flagged
    lo, hi = e.band(3)
    assert lo < e.mean < hi


# ---------------------------------------------------------------- moments


def test_moments_shrink_with_radius():
    m = const_model()
    prev = None
    for j, r in enumerate((1.0, 0.5, 0.25)):
        tab = exit_time_moments(DirichletProblem(m, Ball([0.0], r)), [0.0], 2, 4000, CFG, RngStream(7, j))
        means = [e.mean for e in tab]
        if prev is not None:
            assert all(a < b for a, b in zip(means, prev))
        prev = means


def test_moment_scaling_and_recursion():
    a = 1.5
    m = const_model(alpha=a)
    vals = []
    for j, r in enumerate((0.5, 1.0, 2.0)):
        tab = exit_time_moments(DirichletProblem(m, Ball([0.0], r)), [0.0], 3, 6000, EulerConfig(dt=2e-3 * r**a, t_max=40 * r**a), RngStream(8, j))
        assert tab.recursion_ok
        vals.append((tab[0].mean / r**a, tab[0].stderr / r**a))
    for (m1, s1), (m2, s2) in zip(vals, vals[1:]):
        assert abs(m1 - m2) < 3 * math.hypot(s1, s2)


def test_moment_order_range():
    with pytest.raises(ValidationError):
        exit_time_moments(DirichletProblem(const_model(), UNIT), [0.0], 5, 10, CFG, RngStream(0))


# ---------------------------------------------------------------- boundary decay


@pytest.mark.parametrize("drift", [None, {"kind": "constant", "value": 1.0}])
def test_boundary_decay(drift):
    m = const_model(drift=drift)
    tab = boundary_decay(DirichletProblem(m, UNIT), [1.0], [0.4, 0.2, 0.1, 0.05, 0.025], 4000, EulerConfig(dt=5e-3, t_max=20.0), RngStream(9))
    assert tab.strictly_decreasing
    assert tab.ratio < 0.2


def test_boundary_decay_distances_checked():
    with pytest.raises(ValidationError):
        boundary_decay(DirichletProblem(const_model(), UNIT), [1.0], [0.1, 0.2], 10, CFG, RngStream(0))


# ---------------------------------------------------------------- harmonic / Harnack


def test_harmonic_constant_data():
    tab = harmonic_estimate(const_model(2), Ball([0.0, 0.0], 1.0), 1.0, [[0.0, 0.0], [0.5, 0.2]], 500, CFG, RngStream(10))
    assert np.all(tab.means == 1.0)


def test_harmonic_far_half_space_positive():
    m = const_model()
    tab = harmonic_estimate(m, Ball([0.0], 2.0), lambda x: (x[:, 0] > 5).astype(float), [[-0.5], [0.5]], 20_000, CFG, RngStream(11))
    assert np.all(tab.means - 3 * tab.stderrs > 0)


def test_harmonic_invariant_under_time_change():
    m = const_model()
    h = indicator(2.0, 3.0)
    G = Ball([0.0], 2.0)
    a = harmonic_estimate(m, G, h, [[0.0]], 20_000, CFG, RngStream(12))
    b = harmonic_estimate(m.scaled(3.0), G, h, [[0.0]], 20_000, CFG, RngStream(12))
    assert abs(a.means[0] - b.means[0]) < 3 * math.hypot(a.stderrs[0], b.stderrs[0])


def test_harnack_constant_datum_ratio_one():
    r = harnack_probe(const_model(), Ball([0.0], 2.0), Ball([0.0], 0.5), [2.0, 0.5], 300, CFG, RngStream(13))
    assert r.ratios == [1.0, 1.0]
    assert r.family_max == 1.0


def test_harnack_indicator_finite():
    r = harnack_probe(const_model(), Ball([0.0], 2.0), Ball([0.0], 0.5), [indicator(2.0, 3.0)], 4000, CFG, RngStream(14))
    assert 1.0 < r.ratios[0] < 5.0
    assert r.lower[0] <= r.ratios[0] <= r.upper[0]


def test_harnack_degenerate():
    with pytest.raises(DegenerateHarmonic):
        harnack_probe(const_model(), Ball([0.0], 2.0), Ball([0.0], 0.5), [indicator(1e6, 1e6 + 1)], 200, CFG, RngStream(15))


# ---------------------------------------------------------------- cones


def test_cone_survival_scaling():
    a = 1.5
    t = np.array([0.05, 0.1, 0.2, 0.4])
    s1, e1, _ = survival_curve(a, math.pi / 2, [0.5], t, 20_000, RngStream(16, 0), EulerConfig(dt=1e-3))
    s2, e2, _ = survival_curve(a, math.pi / 2, [1.0], t * 2**a, 20_000, RngStream(16, 1), EulerConfig(dt=1e-3 * 2**a))
    assert np.all(np.abs(s1 - s2) < 3 * np.hypot(e1, e2))


def test_half_line_exponent_reproducible():
    t = np.geomspace(0.5, 20, 8)
    a = cone_exit_exponent(1.5, math.pi / 2, [1.0], t, 10_000, RngStream(17, 0), EulerConfig(dt=1e-2))
    b = cone_exit_exponent(1.5, math.pi / 2, [1.0], t, 10_000, RngStream(17, 1), EulerConfig(dt=1e-2))
    assert abs(a.p_hat - b.p_hat) < math.hypot(a.ci[1] - a.p_hat, b.ci[1] - b.p_hat)
    assert a.r2 > 0.95
    # below the exponent the truncated moment settles, above it keeps growing
    lo, hi = sorted(a.moment_growth)
    assert a.moment_growth[hi][2] / a.moment_growth[hi][0] > a.moment_growth[lo][2] / a.moment_growth[lo][0]


def test_cone_monotone_in_angle():
    t = np.geomspace(0.5, 10, 6)
    cfg = EulerConfig(dt=1e-2)
    narrow = cone_exit_exponent(1.5, math.pi / 6, [1.0, 0.0], t, 6000, RngStream(18, 0), cfg)
    wide = cone_exit_exponent(1.5, math.pi / 2, [1.0, 0.0], t, 6000, RngStream(18, 1), cfg)
    assert narrow.p_hat >= wide.p_hat - math.hypot(narrow.ci[1] - narrow.p_hat, wide.ci[1] - wide.p_hat)


def test_cone_input_checks():
    with pytest.raises(ValidationError):
        cone_exit_exponent(1.5, math.pi / 2, [1e-8], [1.0, 2.0], 10, RngStream(0))
    with pytest.raises(ValidationError):
        cone_exit_exponent(1.5, math.pi / 2, [1.0, 0.0, 0.0], [1.0, 2.0], 10, RngStream(0))
    with pytest.raises(FitRejected):
        cone_exit_exponent(1.5, math.pi / 2, [1.0], [1e-3, 2e-3, 3e-3], 200, RngStream(0), EulerConfig(dt=1e-3))


# ---------------------------------------------------------------- exterior problem


def test_exterior_recurrent_stabilises():
    m = const_model(drift={"kind": "linear", "coef": -1.0})
    rep = exterior_hitting_time(m, 64, [3.0], 4000, EulerConfig(dt=5e-3), RngStream(19))
    assert rep.stabilized and rep.monotone


def test_exterior_transient_reports_no_stabilization():
    m = const_model(2)
    with pytest.raises(NoStabilization) as ei:
        exterior_hitting_time(m, 32, [2.0, 0.0], 1000, EulerConfig(dt=2e-2, t_max=200.0), RngStream(20))
    rep = ei.value.report
    assert rep.monotone and not rep.stabilized


def test_exterior_needs_outside_start():
    with pytest.raises(ValidationError):
        exterior_hitting_time(const_model(), 16, [0.5], 10, CFG, RngStream(0))
