import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import constants

from latticetrap.geometry import YB174, build_hex_lattice_layout, paper_lattice_spec
from latticetrap.quantum import (
    DEFAULT_OMEGA,
    SpinSimParams,
    calibrate_kappa,
    coupling_graph,
    degrees,
    exchange_coupling,
    feasibility_report,
    heating_rate,
    reference_force,
    required_force_for_J,
    simulation_error,
    spin_coupling,
    spin_spin_J,
    verdict_from_margins,
)

TWO_PI = 2 * math.pi
W = DEFAULT_OMEGA


def independent_force():
    # invert J = beta F^2 / (4 hbar m w^2) for J = 2 pi kHz on the 32 um, 1 MHz design
    m = YB174.mass
    wex = constants.e**2 / (2 * math.pi * constants.epsilon_0 * m * W * (32e-6) ** 3)
    return math.sqrt(TWO_PI * 1e3 * 4 * constants.hbar * m * W**2 / (wex / W))


def test_exchange_values():
    assert exchange_coupling(YB174, W, 270.5e-6) / TWO_PI == pytest.approx(2.0445, rel=1e-4)
    assert exchange_coupling(YB174, W, 32e-6) / TWO_PI == pytest.approx(1234.92, rel=1e-5)


def test_exchange_cube_law():
    r = 50e-6
    assert exchange_coupling(YB174, W, r) / exchange_coupling(YB174, W, 2 * r) == pytest.approx(8.0, rel=1e-14)


@settings(max_examples=50)
@given(r=st.floats(1e-6, 1e-2), w=st.floats(1e5, 1e8))
def test_exchange_r_cubed_constant(r, w):
    ref = exchange_coupling(YB174, w, 1e-4) * 1e-12
    assert exchange_coupling(YB174, w, r) * r**3 == pytest.approx(ref, rel=1e-12)


def test_exchange_rejects_bad_inputs():
    with pytest.raises(ValueError):
        exchange_coupling(YB174, W, 0.0)
    with pytest.raises(ValueError):
        exchange_coupling(YB174, -1.0, 1e-4)


def test_reference_force_matches_inversion():
    F = reference_force()
    assert F == pytest.approx(independent_force(), rel=1e-12)
    assert F == pytest.approx(1.5644e-19, rel=1e-3)


def test_J_at_reference_force():
    F = reference_force()
    p = SpinSimParams.from_exchange(W, exchange_coupling(YB174, W, 32e-6), F)
    assert spin_spin_J(p, YB174) == pytest.approx(TWO_PI * 1e3, rel=1e-12)
    assert simulation_error(F, p) == pytest.approx(0.25, rel=1e-14)
    assert simulation_error(0.0, p) == 0.0
    assert simulation_error(2 * F, p) == pytest.approx(1.0, rel=1e-14)
    with pytest.warns(UserWarning):
        simulation_error(3 * F, p)


def test_spin_coupling_scaling():
    assert spin_coupling(0.01, 0.0, YB174, W) == 0.0
    j1 = spin_coupling(0.01, 1e-19, YB174, W)
    assert spin_coupling(0.01, 2e-19, YB174, W) == pytest.approx(4 * j1, rel=1e-14)


@settings(max_examples=60)
@given(J=st.floats(1.0, 1e6), w=st.floats(1e5, 1e8), wex=st.floats(1.0, 1e6))
def test_force_round_trip(J, w, wex):
    F = required_force_for_J(J, w, YB174, wex)
    assert spin_coupling(wex / w, F, YB174, w) == pytest.approx(J, rel=1e-9)


def test_force_for_zero_J():
    assert required_force_for_J(0.0, W, YB174, 1e3) == 0.0


@settings(max_examples=30)
@given(a=st.floats(0.1, 10.0))
def test_J_and_error_scale_together(a):
    F = reference_force()
    kappa = calibrate_kappa(F)
    base = SpinSimParams(W, F, 0.01, error_calibration_kappa=kappa)
    scaled = SpinSimParams(W, a * F, 0.01, error_calibration_kappa=kappa)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        e0, e1 = simulation_error(F, base), simulation_error(a * F, scaled)
    assert spin_spin_J(scaled, YB174) / spin_spin_J(base, YB174) == pytest.approx(a * a, rel=1e-12)
    assert e1 / e0 == pytest.approx(a * a, rel=1e-12)


def test_params_beta_consistency_and_validation():
    wex = exchange_coupling(YB174, W, 32e-6)
    p = SpinSimParams.from_exchange(W, wex, 1e-19)
    assert p.beta == pytest.approx(wex / W, rel=1e-12)
    with pytest.raises(ValueError):
        SpinSimParams(W, -1e-19, 0.1)


def test_heating_rate_values():
    n = heating_rate(YB174, W, 1.6e-11)
    assert n == pytest.approx(540, rel=0.02)
    assert n == pytest.approx(536.51, rel=1e-4)
    assert heating_rate(YB174, W, 0.0) == 0.0
    assert heating_rate(YB174, W, 1.6e-11) / heating_rate(YB174, 2 * W, 1.6e-11) == pytest.approx(2.0, rel=1e-9)


# --------------------------------------------------------------------------
# coupling graph


def test_graph_two_and_three_sites():
    assert len(coupling_graph([[0, 0, 0], [1e-4, 0, 0]], YB174, W)) == 1
    tri = [[0, 0, 0], [1e-4, 0, 0], [0.5e-4, math.sqrt(3) / 2 * 1e-4, 0]]
    edges = coupling_graph(tri, YB174, W)
    assert len(edges) == 3
    vals = [e.omega_ex for e in edges]
    assert max(vals) == pytest.approx(min(vals), rel=1e-9)
    assert all(e.omega_ex > 0 and e.separation_r > 0 for e in edges)


def test_graph_29_site_lattice_degrees():
    lay = build_hex_lattice_layout(paper_lattice_spec())
    c = lay.hole_centres()
    pts = np.column_stack([c, np.full(len(c), 1.16e-4)])
    edges = coupling_graph(pts, YB174, W)
    deg = degrees(edges, len(pts))
    assert deg.max() == 6
    assert (deg == 6).sum() == 13  # rows 5-6-7-6-5 leave 4 + 5 + 4 interior sites
    assert deg.min() == 3


@settings(max_examples=20)
@given(theta=st.floats(0, 2 * math.pi), n=st.integers(3, 12), seed=st.integers(0, 1000))
def test_graph_rotation_invariant(theta, n, seed):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-1e-3, 1e-3, (n, 3))
    c, s = math.cos(theta), math.sin(theta)
    R = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])
    a = sorted(e.omega_ex for e in coupling_graph(pts, YB174, W))
    b = sorted(e.omega_ex for e in coupling_graph(pts @ R.T, YB174, W))
    assert len(a) == len(b)
    np.testing.assert_allclose(a, b, rtol=1e-9)


# --------------------------------------------------------------------------
# report


def test_modified_design_report():
    rep = feasibility_report(32e-6)
    assert rep.J / TWO_PI == pytest.approx(1000, rel=0.10)
    assert rep.heating_rate_ndot == pytest.approx(540, rel=0.02)
    assert rep.scattering_rate == 10.0
    assert rep.error_estimate == pytest.approx(0.25, rel=1e-12)
    assert rep.verdict


def test_wide_lattice_report():
    F = reference_force()
    small = feasibility_report(32e-6, force=F)
    big = feasibility_report(270.5e-6, force=F)
    assert small.J / big.J == pytest.approx((270.5 / 32) ** 3, rel=1e-12)
    assert not big.verdict


def test_infinite_scattering_fails():
    assert not feasibility_report(32e-6, scattering_rate=1e12).verdict


@settings(max_examples=40)
@given(r=st.floats(5e-6, 5e-4), se=st.floats(0, 1e-9), sc=st.floats(0, 1e4), thr=st.floats(0.1, 100))
def test_verdict_is_function_of_margins(r, se, sc, thr):
    rep = feasibility_report(r, noise_density_SE=se, scattering_rate=sc, threshold=thr)
    assert rep.verdict == verdict_from_margins(rep.margin_heating, rep.margin_scattering, rep.threshold)
    mh = rep.J / rep.heating_rate_ndot if rep.heating_rate_ndot else math.inf
    ms = rep.J / rep.scattering_rate if rep.scattering_rate else math.inf
    assert rep.verdict == (mh >= thr and ms >= thr)


def test_report_dict_units():
    d = feasibility_report(32e-6).to_dict()
    assert d["omega_ex_hz"] == pytest.approx(1234.92, rel=1e-5)
    assert d["j_hz"] == pytest.approx(1000, rel=1e-9)
    assert all(isinstance(k, str) for k in d)


def test_report_from_sites():
    pts = [[0, 0, 1e-4], [32e-6, 0, 1e-4], [100e-6, 0, 1e-4]]
    assert feasibility_report(pts).separation == pytest.approx(32e-6)
    with pytest.raises(ValueError):
        feasibility_report([[0, 0, 0]])
