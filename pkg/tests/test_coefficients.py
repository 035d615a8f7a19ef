import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from antbif.coefficients import (BifurcationReport, chi_k, classify_criticality, coeff_c,
                                 coeff_c_swapped, compute_A, compute_report, invert_L,
                                 normal_form_amplitude, reduced_eigenvalues, tau_roots,
                                 tau_thresholds, threshold_polys)
from antbif.fields import ModeField, kernel_basis
from antbif.model import ModelParams, NumericalError, ValidationError, rescale
from antbif.theta import integral_U_inviscid
from antbif.verify import params_for


@pytest.fixture(scope="module")
def lane_setup():
    p = params_for(0.2, 0.3)
    st_ = 1e-3
    chi = chi_k(p, 1, st_)
    basis = kernel_basis(1, st_, p)
    return p, st_, chi, basis


def test_chi_k_inviscid_limit():
    p = params_for(0.2, 0.0)
    inv = chi_k(p, 1, 0.0)
    assert inv == pytest.approx(2 * math.pi / integral_U_inviscid(1, p))
    errs = [abs(chi_k(p, 1, s) - inv) for s in (1e-2, 1e-3, 1e-4)]
    assert errs[0] > errs[1] > errs[2]


def test_chi_k_decreases_with_anticipation():
    vals = [chi_k(params_for(0.2, t), 1, 1e-3) for t in (0.0, 0.5, 1.0, 2.0)]
    assert all(b < a for a, b in zip(vals, vals[1:]))


def test_c_from_both_components_agree(lane_setup):
    p, st_, chi, basis = lane_setup
    A11 = compute_A(1, 1, basis, chi, st_, p)
    A22 = compute_A(2, 2, basis, chi, st_, p)
    A12 = compute_A(1, 2, basis, chi, st_, p)
    c1 = coeff_c(basis, A22, A12, chi, p)
    c2 = coeff_c_swapped(basis, A11, A12, chi, p)
    assert c1 == pytest.approx(c2, rel=1e-10)


def test_invert_L_solves_off_kernel(lane_setup):
    p, st_, chi, basis = lane_setup
    src = (basis.phi1 * basis.phi2).dtheta()
    sol = invert_L(src, 1, chi, st_, p)
    assert (0, 0) not in src.modes or True
    assert all(kv[0] ** 2 + kv[1] ** 2 != 1 for kv in sol.modes)
    with pytest.raises(ValidationError):
        invert_L(src, 1, chi, 0.0, p)


def test_invert_L_flags_resonance(lane_setup):
    p, st_, chi, basis = lane_setup
    # chi^2 at mode (2,0) makes the rank-one correction singular
    chi2 = chi_k(p, 2, st_)
    g = ModeField({(2, 0): basis.phi1.modes[(1, 0)]}, basis.n)
    with pytest.raises(NumericalError):
        invert_L(g, 1, chi2, st_, p)


def test_singular_parts_converge_to_I_integrals():
    p = params_for(0.2, 0.3)
    errs_b, errs_c = [], []
    for s in (1e-3, 1e-4, 1e-5):
        r = compute_report(p, 1, s)
        errs_b.append(abs(r.b_minus1 / r.I_k1 - 1))
        errs_c.append(abs(r.c_minus1 / r.I_k2 - 1))
    assert errs_b[-1] < 1e-3 and errs_c[-1] < 1e-4
    assert errs_b[0] / errs_b[1] == pytest.approx(10, rel=0.1)
    assert errs_c[0] / errs_c[1] == pytest.approx(10, rel=0.1)


@pytest.mark.parametrize("tau_k", [0.0, 0.3, 1.0])
def test_a_converges_to_limit(tau_k):
    r = compute_report(params_for(0.2, tau_k), 1, 1e-5)
    assert r.a == pytest.approx(r.a_limit, rel=1e-5)
    assert r.a > 0


def test_threshold_ordering_and_roots():
    rc = rescale(params_for(0.2, 0.0), 1)
    t_bpc, t_b, t_bmc = tau_roots(rc)
    assert 0 < t_bpc < t_b < t_bmc
    polys = threshold_polys(rc)
    for nm, t in (("b+c", t_bpc), ("b", t_b), ("b-c", t_bmc)):
        assert abs(polys[nm](t)) < 1e-10 * abs(polys[nm].coeffs[0])
    t_l, t_x, t_m = tau_thresholds(rc)
    assert t_l == pytest.approx(t_b / (2 * math.pi))
    assert t_x < t_l < t_m


@settings(max_examples=15, deadline=None)
@given(st.floats(0.01, 0.1))
def test_thresholds_independent_of_tau(s):
    a = tau_roots(rescale(params_for(s, 0.0), 1))
    b = tau_roots(rescale(params_for(s, 2.0), 1))
    assert a == pytest.approx(b, rel=1e-12)


@settings(max_examples=10, deadline=None)
@given(st.floats(0.02, 0.1), st.floats(0.0, 1.0))
def test_criticality_switches_at_thresholds(s, frac):
    """Lanes are supercritical exactly below tau_Lambda (small sigma_theta)."""
    base = params_for(s, 0.0)
    t_l, t_x, _ = tau_thresholds(rescale(base, 1))
    for tau, lane in ((t_l * (0.95 - 0.3 * frac), "supercritical"),
                      (t_l * (1.05 + 0.3 * frac), "subcritical")):
        r = compute_report(ModelParams(sigma_x=base.sigma_x, tau=tau), 1, 1e-5)
        assert r.lane_criticality == lane


def test_multiple_roots_outside_small_sigma_regime():
    rc = rescale(params_for(1.0, 0.0), 1)
    assert len(threshold_polys(rc)["b+c"].positive_roots()) == 2
    with pytest.raises(NumericalError):
        tau_roots(rc)
    r = compute_report(params_for(1.0, 0.0), 1, 1e-3)
    assert r.tau_Xi is None and r.notes


def test_threshold_asymptotics_small_sigma():
    t_bpc, _, _ = tau_roots(rescale(params_for(1e-2, 0.0), 1))
    assert abs(t_bpc / 1e-2 - 1) < 0.1


def test_report_serialisation_and_labels():
    r = compute_report(params_for(0.2, 0.0), 1, 1e-3)
    d = json.loads(r.to_json())
    assert d["k"] == 1 and d["lane_criticality"] == "supercritical"
    assert len(r.csv_row()) == len(BifurcationReport.CSV_FIELDS)
    assert classify_criticality(r) == (r.lane_criticality, r.spot_criticality)
    with pytest.raises(ValidationError):
        classify_criticality(r, tau=1.0)
    assert r.lane_eigs == reduced_eigenvalues(r.b, r.c)[0]


def test_reduced_eigenvalues_stability_pattern():
    lane, spot = reduced_eigenvalues(b=1.0, c=2.0)
    assert lane[0] < 0 and lane[1] < 0
    assert spot[1] > 0
    lane, spot = reduced_eigenvalues(b=1.0, c=-0.5)
    assert max(spot) < 0 and lane[1] > 0


def test_normal_form_amplitude():
    r = compute_report(params_for(0.2, 0.0), 1, 1e-3)
    s_lane, s_spot = normal_form_amplitude(r, r.chi_k * 1.01)
    assert s_lane == pytest.approx(math.sqrt(r.a * 0.01 * r.chi_k / r.b))
    assert s_spot == pytest.approx(math.sqrt(r.a * 0.01 * r.chi_k / (r.b + r.c)))
    assert normal_form_amplitude(r, r.chi_k) == (0.0, 0.0)
    assert normal_form_amplitude(r, r.chi_k * 0.99) == (None, None)
