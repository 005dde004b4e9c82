from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gqnet import gaussian as ge
from fock_oracle import fock_link_cm

floats = st.floats


def random_state(mu, v_th, tau, eta, xi):
    s = ge.make_tmsv(mu, ("A", "B")).tensor(ge.thermal("C", v_th))
    s = ge.apply_beamsplitter(s, "B", "C", tau)
    return ge.apply_thermal_loss(s, "C", eta, xi)


state_params = st.tuples(
    floats(1.0, 20.0), floats(1.0, 5.0), floats(0.0, 1.0), floats(0.05, 1.0), floats(0.0, 0.5)
)


def min_uncertainty_eig(cm):
    n = cm.shape[0] // 2
    return np.linalg.eigvalsh(cm + 1j * ge.symplectic_form(n)).min()


def test_vacuum_and_tmsv():
    vac = ge.vacuum(["x", "y"])
    assert np.allclose(vac.cm, np.eye(4))
    assert np.allclose(ge.symplectic_eigenvalues(vac.cm), [1, 1])
    s = ge.make_tmsv(2.0)
    t = ge.triplet_from_cm(s.cm)
    assert t.as_tuple() == pytest.approx((2.0, 2.0, np.sqrt(3.0)))
    assert s.purity() == pytest.approx(1.0)
    assert np.allclose(ge.symplectic_eigenvalues(s.cm), [1, 1])


def test_tmsv_rejects_sub_vacuum():
    with pytest.raises(ge.GaussianError):
        ge.make_tmsv(0.9)


def test_thermal_loss_on_tmsv():
    mu, eta, xi = 5.0, 0.3, 0.02
    s = ge.apply_thermal_loss(ge.make_tmsv(mu), "B", eta, xi)
    t = ge.triplet_from_cm(s.cm)
    assert t.b == pytest.approx(eta * (mu - 1) + 1 + xi)
    assert t.c == pytest.approx(np.sqrt(eta * (mu * mu - 1)))
    with pytest.raises(ge.GaussianError):
        ge.apply_thermal_loss(s, "B", 0.0, 0.0)
    with pytest.raises(ge.GaussianError):
        ge.apply_thermal_loss(s, "B", 0.5, -0.1)


def test_beamsplitter_convention():
    # displaced mode x through the splitter: (sqrt(t) x, -sqrt(1-t) x)
    s = ge.apply_displacement(ge.vacuum(["x", "y"]), "x", [1.0, 0.0])
    out = ge.apply_beamsplitter(s, "x", "y", 0.25)
    assert out.mean == pytest.approx([0.5, 0.0, -np.sqrt(0.75), 0.0])
    assert np.allclose(out.cm, np.eye(4))
    with pytest.raises(ge.GaussianError):
        ge.apply_beamsplitter(s, "x", "x", 0.5)


def test_unknown_mode_and_duplicate_labels():
    s = ge.make_tmsv(2.0)
    with pytest.raises(ge.GaussianError):
        s.reduced(["Q"])
    with pytest.raises(ge.GaussianError):
        ge.GaussianState(("A", "A"), np.zeros(4), np.eye(4))


def test_asymmetric_cm_rejected():
    cm = np.eye(2)
    cm[0, 1] = 0.1
    with pytest.raises(ge.GaussianError):
        ge.GaussianState(("A",), np.zeros(2), cm)


def test_symplectic_eigenvalues_odd_dim():
    with pytest.raises(ge.GaussianError):
        ge.symplectic_eigenvalues(np.eye(3))


@pytest.mark.parametrize("mu", [1.5, 2.0])
@pytest.mark.parametrize("g", [1.1, 1.3, 1.5])
def test_nla_matches_fock_oracle(mu, g):
    # a cutoff of 120 keeps the oracle's own truncation error far below 1e-9
    out = ge.apply_ideal_nla(ge.make_tmsv(mu), "B", g)
    assert np.max(np.abs(out.cm - fock_link_cm(mu, 1.0, g, cutoff=120))) < 1e-9


def test_nla_after_loss_matches_fock_oracle():
    s = ge.apply_thermal_loss(ge.make_tmsv(2.0), "B", 0.9, 0.0)
    out = ge.apply_ideal_nla(s, "B", 1.2)
    assert np.max(np.abs(out.cm - fock_link_cm(2.0, 0.9, 1.2, cutoff=80))) < 1e-9


def test_nla_on_tmsv_gives_tmsv():
    # g**n maps lambda -> g lambda; mu=2, g=1.5 gives mu' = 7
    out = ge.apply_ideal_nla(ge.make_tmsv(2.0), "B", 1.5)
    t = ge.triplet_from_cm(out.cm)
    assert t.a == pytest.approx(7.0, abs=1e-12)
    assert t.b == pytest.approx(7.0, abs=1e-12)
    assert t.c == pytest.approx(np.sqrt(48.0), abs=1e-12)


def test_nla_gain_one_is_identity_and_large_gain_fails():
    s = ge.make_tmsv(3.0)
    assert ge.apply_ideal_nla(s, "B", 1.0) is s
    # g**2 < (mu + 1) / (mu - 1) = 2 is required
    assert ge.nla_feasibility_margin(s, "B", 1.4) > 0
    with pytest.raises(ge.NLAInfeasibleError, match="gain too large"):
        ge.apply_ideal_nla(s, "B", 1.5)
    with pytest.raises(ge.GaussianError):
        ge.apply_ideal_nla(s, "B", 0.9)


def test_nla_amplifies_coherent_mean():
    # |alpha> -> |g alpha>
    s = ge.apply_displacement(ge.vacuum(["A"]), "A", [0.4, -0.2])
    out = ge.apply_ideal_nla(s, "A", 2.0)
    assert out.mean == pytest.approx([0.8, -0.4])
    assert np.allclose(out.cm, np.eye(2))


def test_heterodyne_on_tmsv_leaves_vacuum():
    s = ge.make_tmsv(4.0)
    res = ge.measure_generaldyne(s, ["B"], "heterodyne", np.random.default_rng(3))
    assert np.allclose(res.conditional_state.cm, np.eye(2))
    assert res.conditional_state.mode_labels == ("A",)


def test_homodyne_on_tmsv_squeezes():
    mu = 4.0
    res = ge.measure_generaldyne(ge.make_tmsv(mu), ["B"], "homodyne_q", np.random.default_rng(3))
    assert np.allclose(res.conditional_state.cm, np.diag([1 / mu, mu]))


def test_bell_detection_swaps_entanglement():
    mu = 3.0
    s = ge.make_tmsv(mu, ("A1", "B1")).tensor(ge.make_tmsv(mu, ("A2", "B2")))
    res = ge.measure_generaldyne(s, ["B1", "A2"], "bell", np.random.default_rng(1))
    assert res.conditional_state.mode_labels == ("A1", "B2")
    t = ge.triplet_from_cm(res.conditional_state.cm)
    # a - c**2 / (2 mu) with c**2 = mu**2 - 1
    corr = (mu * mu - 1) / (2 * mu)
    assert t.as_tuple() == pytest.approx((mu - corr, mu - corr, corr), abs=1e-12)


def test_unknown_measurement_kind():
    with pytest.raises(ge.GaussianError):
        ge.measure_generaldyne(ge.make_tmsv(2.0), ["B"], "photon_counting")


def test_triplet_accepts_minus_z_and_rejects_other_forms():
    cm = ge.normal_form_cm(3.0, 2.0, -1.5)
    assert ge.triplet_from_cm(cm).c == pytest.approx(1.5)
    bad = ge.normal_form_cm(3.0, 2.0, 1.5)
    bad[0, 1] = bad[1, 0] = 0.3
    with pytest.raises(ge.GaussianError):
        ge.triplet_from_cm(bad)


def test_bona_fide_condition():
    assert ge.is_bona_fide(ge.NormalFormTriplet(2.0, 2.0, np.sqrt(3.0)))
    assert not ge.is_bona_fide(ge.NormalFormTriplet(2.0, 2.0, 1.8))
    assert not ge.is_bona_fide(ge.NormalFormTriplet(0.9, 2.0, 0.0))


@settings(max_examples=60, deadline=None)
@given(state_params)
def test_operations_preserve_uncertainty_principle(p):
    s = random_state(*p)
    assert min_uncertainty_eig(s.cm) > -1e-9
    assert ge.symplectic_eigenvalues(s.cm)[0] >= 1 - 1e-9


@settings(max_examples=60, deadline=None)
@given(floats(1.0, 30.0), floats(0.0, 1.0), floats(1.0, 3.0))
def test_pure_stays_pure(mu, tau, g):
    s = ge.make_tmsv(mu, ("A", "B")).tensor(ge.vacuum(["C"]))
    s = ge.apply_beamsplitter(s, "B", "C", tau)
    assert s.purity() == pytest.approx(1.0, rel=1e-9)
    if ge.nla_feasibility_margin(s, "C", g) > 1e-6:
        amp = ge.apply_ideal_nla(s, "C", g)
        assert amp.purity() == pytest.approx(1.0, rel=1e-6)


@settings(max_examples=40, deadline=None)
@given(state_params, st.sampled_from(ge.MEASUREMENT_KINDS[:3]), st.integers(0, 2**31))
def test_conditional_cm_independent_of_outcome(p, kind, seed):
    s = random_state(*p)
    r1 = ge.measure_generaldyne(s, ["C"], kind, np.random.default_rng(seed))
    r2 = ge.measure_generaldyne(s, ["C"], kind, np.random.default_rng(seed + 1))
    assert np.allclose(r1.conditional_state.cm, r2.conditional_state.cm, atol=1e-12)
    assert min_uncertainty_eig(r1.conditional_state.cm) > -1e-9


@settings(max_examples=40, deadline=None)
@given(state_params, st.sampled_from(["heterodyne", "homodyne_q", "homodyne_p"]))
def test_conditioning_shrinks_covariance(p, kind):
    # conditioning never increases the remaining covariance (in the PSD order)
    s = random_state(*p)
    res = ge.measure_generaldyne(s, ["C"], kind, np.random.default_rng(0))
    before = s.reduced(["A", "B"]).cm
    assert np.linalg.eigvalsh(before - res.conditional_state.cm).min() > -1e-9


@pytest.mark.parametrize("kind,noise", [("heterodyne", 1.0), ("homodyne_q", 0.0)])
def test_sampled_outcomes_match_marginal(kind, noise):
    s = random_state(3.0, 1.5, 0.6, 0.7, 0.05)
    rng = np.random.default_rng(11)
    n = 4000
    vals = np.array([ge.measure_generaldyne(s, ["C"], kind, rng).values for _ in range(n)])
    marg = s.reduced(["C"]).cm
    expected = marg + noise * np.eye(2) if kind == "heterodyne" else marg[:1, :1]
    cov = np.atleast_2d(np.cov(vals.T, bias=True))
    # SE of a sample variance is sqrt(2/n) sigma^2
    se = np.sqrt(2.0 / n) * np.sqrt(np.outer(np.diag(expected), np.diag(expected)))
    assert np.all(np.abs(cov - expected) < 5 * se)
    assert np.all(np.abs(vals.mean(axis=0)) < 5 * np.sqrt(np.diag(expected) / n))
