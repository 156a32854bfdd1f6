import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from levykit.ergodic import (
    LyapunovCandidate,
    OccupationHistogram,
    default_pairs,
    hasminskii_estimate,
    hitting_time_bound_check,
    hitting_time_table,
    invariant_measure_estimate,
    lyapunov_verify,
    occupation_estimate,
    return_chain_contraction,
)
from levykit.errors import TailDivergent, ValidationError
from levykit.kernels import Ball, Box, make_kernel
from levykit.operator import power_probe
from levykit.paths import EulerConfig
from levykit.sampling import RngStream

CFG = EulerConfig(dt=1e-2)
WINDOW = Box([-4.0], [4.0])


def ou(d=1, coef=-1.0):
    return make_kernel("constant", d, 1.5, drift={"kind": "linear", "coef": coef})


# ---------------------------------------------------------------- Lyapunov


def test_drift_model_negative_on_rays():
    cand = LyapunovCandidate(power_probe(1.2, 2), 2.0, 0.0, dim=2)
    r = lyapunov_verify(ou(2), cand, 8, (10, 30, 100))
    assert r.passed and r.eps_hat > 0
    assert r.values.shape == (24,)
    # I V ~ -1.2 |x|^1.2 far out
    far = r.values[-8:]
    assert np.all(far < -0.9 * 1.2 * 100**1.2)


def test_pure_stable_control_fails():
    cand = LyapunovCandidate(power_probe(1.2, 2), 2.0, 0.0, dim=2)
    r = lyapunov_verify(make_kernel("constant", 2, 1.5), cand, 8, (10, 30, 100))
    assert not r.passed
    assert np.all(r.values > 0)


def test_tail_divergent():
    cand = LyapunovCandidate(power_probe(1.6, 1), 2.0, 0.0, dim=1)
    with pytest.raises(TailDivergent):
        lyapunov_verify(ou(), cand, 2)


def test_candidate_checks():
    assert LyapunovCandidate(power_probe(1.2, 1), 2.0).growth == pytest.approx(1.2, abs=1e-6)
    with pytest.raises(ValidationError):
        LyapunovCandidate(power_probe(1.2, 1), 0.0)
    with pytest.raises(ValidationError):
        lyapunov_verify(ou(), LyapunovCandidate(power_probe(1.2, 1), 20.0), 2, (10, 30))
    with pytest.raises(ValidationError):
        lyapunov_verify(ou(2), LyapunovCandidate(power_probe(1.2, 1), 2.0), 2)


# ---------------------------------------------------------------- hitting times


def test_hitting_time_table():
    K = Ball([0.0], 1.0)
    tab = hitting_time_table(ou(), K, [[0.5], [2.0], [4.0], [8.0]], 2000, CFG, RngStream(1))
    assert tab[0].exact and tab[0].mean == 0.0
    means = [e.mean for e in tab[1:]]
    assert all(e.truncated_fraction < 0.01 for e in tab[1:])
    assert means[0] < means[1] < means[2]
    # the drift pulls in at unit rate, so E tau grows only like log|x|
    assert means[2] < means[0] + 2 * math.log(8 / 2) + 0.5


def test_lemma_bound_holds():
    cand = LyapunovCandidate(power_probe(1.2, 1), 2.0, 0.0, dim=1)
    chk = hitting_time_bound_check(ou(), cand, [[3.0], [6.0], [-10.0]], 2000, CFG, RngStream(2))
    assert all(chk.holds)
    assert np.all(chk.bounds > 0)
    assert chk.to_dict()["eps_hat"] == chk.eps_hat


# ---------------------------------------------------------------- histograms


def _random_hist(seed, n=20):
    rng = np.random.default_rng(seed)
    h = OccupationHistogram.for_window(WINDOW, n, 1e-2)
    return h.add(rng.normal(0, 3, size=(500, 1)), rng.uniform(0, 1e-2, 500))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(0, 10_000), st.integers(0, 10_000))
def test_merge_exact_and_associative(a, b, c):
    ha, hb, hc = _random_hist(a), _random_hist(b), _random_hist(c)
    l = ha.merge(hb).merge(hc)
    r = ha.merge(hb.merge(hc))
    assert np.array_equal(l.counts, r.counts) and l.out_count == r.out_count
    assert l.total_units == ha.total_units + hb.total_units + hc.total_units
    assert np.all(l.counts >= 0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_coarsen_commutes_with_merge_and_normalises(seed):
    ha, hb = _random_hist(seed), _random_hist(seed + 1)
    a = ha.merge(hb).coarsen(2)
    b = ha.coarsen(2).merge(hb.coarsen(2))
    assert np.array_equal(a.counts, b.counts)
    assert a.total_units == ha.total_units + hb.total_units
    assert abs(a.masses().sum() + a.out_mass() - 1.0) <= 1e-12


def test_histogram_layout_checks(tmp_path):
    h = OccupationHistogram.for_window(WINDOW, 8, 1e-2)
    h.add(np.array([[-4.0], [4.0], [5.0], [0.1]]), np.full(4, 1e-2))
    assert h.cell_index(np.array([[-4.0], [4.0], [5.0]])).tolist() == [0, 7, -1]
    assert h.out_mass() == 0.25 and h.in_fraction == 0.75
    assert np.sum(h.density() * h.cell_volumes()) == pytest.approx(0.75)
    with pytest.raises(ValidationError):
        h.merge(OccupationHistogram.for_window(WINDOW, 10, 1e-2))
    with pytest.raises(ValidationError):
        h.coarsen(3)
    h.to_csv(tmp_path / "nu.csv")
    lines = (tmp_path / "nu.csv").read_text().splitlines()
    assert lines[0] == "bin_lo,bin_hi,mass" and len(lines) == 9


def test_histogram_2d():
    h = OccupationHistogram.for_window(Box([-1.0, -1.0], [1.0, 1.0]), 4, 1.0)
    h.add(np.array([[0.1, 0.1], [-0.9, 0.9], [2.0, 0.0]]), np.ones(3))
    assert h.shape == (4, 4)
    assert h.mass_between([0.0, 0.0], [0.5, 0.5]) == pytest.approx(1 / 3)
    assert len(h.coarsen(2).counts) == 4


# ---------------------------------------------------------------- invariant measure


def test_occupation_matches_stationary_law():
    # the OU-type process dX = -X dt + dL has stationary law alpha^(-1/alpha) S_alpha
    a = 1.5
    h = occupation_estimate(ou(), WINDOW, 4e4, 5.0, EulerConfig(dt=1e-2, small_jump_mode="gaussian"), RngStream(3),
                            n_chains=1000, n_bins=16)
    law = stats.levy_stable(a, 0, scale=a ** (-1 / a))
    cdf = law.cdf(h.edges[0])
    exact = np.append(np.diff(cdf), 1 - cdf[-1] + cdf[0])
    est = np.append(h.masses(), h.out_mass())
    assert 0.5 * np.abs(est - exact).sum() < 0.03


def test_invariant_report_agreement():
    cand = LyapunovCandidate(power_probe(1.2, 1), 1.0, 0.0, dim=1)
    lv = lyapunov_verify(ou(), cand, 2, (10, 30, 100))
    rep = invariant_measure_estimate(ou(), WINDOW, 2e4, 5.0, CFG, RngStream(4), n_chains=500, n_bins=40, lyapunov=lv,
                                     K=Ball([0.0], 1.0), f=lambda x: x[:, 0] ** 2 < 1)
    assert not rep.exploratory
    assert rep.tv < 0.08
    assert rep.occupation.mass_between(0.1, 0.3) > 0
    for h in (rep.occupation, rep.hasminskii):
        assert abs(h.masses().sum() + h.out_mass() - 1.0) <= 1e-12
    # the ratio estimate of nu(B_1) matches the histogram mass of (-1, 1)
    assert rep.ratio == pytest.approx(rep.hasminskii.mass_between(-1.0, 1.0), abs=0.02)
    assert "watermark" not in rep.to_dict()


def test_exploratory_without_lyapunov():
    rep = invariant_measure_estimate(ou(), WINDOW, 500.0, 1.0, CFG, RngStream(5), n_chains=20, n_bins=10)
    assert rep.exploratory and "watermark" in rep.to_dict()


def test_two_seeds_agree():
    a = occupation_estimate(ou(), WINDOW, 2e4, 5.0, CFG, RngStream(6, 0), n_chains=500, n_bins=40)
    b = occupation_estimate(ou(), WINDOW, 2e4, 5.0, CFG, RngStream(6, 1), n_chains=500, n_bins=40)
    assert a.tv(b) < 0.05


def test_burn_in_doubling():
    a = occupation_estimate(ou(), WINDOW, 1e4, 3.0, CFG, RngStream(7, 0), n_chains=500, n_bins=20, x0=[3.0])
    b = occupation_estimate(ou(), WINDOW, 1e4, 6.0, CFG, RngStream(7, 1), n_chains=500, n_bins=20, x0=[3.0])
    assert a.tv(b) < 0.05


def test_hasminskii_time_change_invariance():
    # scaling the whole generator by 2 changes the clock, not the invariant law
    base = ou()
    fast = ou(coef=-2.0).scaled(2.0)
    ha, *_ = hasminskii_estimate(base, WINDOW, 1e4, CFG, RngStream(8), n_chains=500, n_bins=20)
    hb, *_ = hasminskii_estimate(fast, WINDOW, 1e4, CFG, RngStream(8), n_chains=500, n_bins=20)
    assert ha.tv(hb) < 0.05


def test_occupation_input_checks():
    with pytest.raises(ValidationError):
        occupation_estimate(ou(), WINDOW, 1.0, 2.0, CFG, RngStream(0))
    with pytest.raises(ValidationError):
        hasminskii_estimate(ou(), WINDOW, 10.0, CFG, RngStream(0), K=Ball([5.0], 1.0), D=Ball([0.0], 2.0))


# ---------------------------------------------------------------- return chain


def test_default_pairs():
    p = default_pairs(Ball([0.0], 1.0), 5)
    assert len(p) == 5
    assert np.linalg.norm(p[0][0] - p[0][1]) == pytest.approx(2.0)


def test_contraction_same_start_is_noise():
    K, D = Ball([0.0], 1.0), Ball([0.0], 2.0)
    r = return_chain_contraction(ou(), K, D, 1, 4000, CFG, RngStream(9), pairs=[([0.3], [0.3])])
    assert r.max_tv < 3 * r.noise_floor


def test_contraction_below_one_and_shrinks_with_d():
    K = Ball([0.0], 1.0)
    near = return_chain_contraction(ou(), K, Ball([0.0], 2.0), 1, 4000, CFG, RngStream(10))
    far = return_chain_contraction(ou(), K, Ball([0.0], 4.0), 1, 4000, CFG, RngStream(10))
    assert near.max_tv < 1
    assert far.max_tv <= near.max_tv + 3 * max(near.noise_floor, far.noise_floor)


def test_contraction_requires_compact_k():
    with pytest.raises(ValidationError):
        return_chain_contraction(ou(), Ball([0.0], 1.0), Ball([0.0], 1.0), 1, 10, CFG, RngStream(0))
