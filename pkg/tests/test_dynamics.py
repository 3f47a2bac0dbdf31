import math

import numpy as np
import pytest
from scipy import optimize

from latticetrap.analysis import find_all_sites, sample_total_potential, secular_frequencies, stability_params
from latticetrap.dynamics import (
    FieldForce,
    HarmonicForce,
    PiecewiseLinear,
    PseudoForce,
    ShuttleTemplate,
    TrajectoryState,
    Waveform,
    choose_step,
    energy_drift,
    integrate_trajectory,
    micromotion_amplitude,
    play_waveform,
    search_shuttle_waveform,
    verlet,
)
from latticetrap.errors import AdjacencyError, LayoutError
from latticetrap.fields import analytic_fields
from latticetrap.fields.synthetic import quadrupole_fields
from latticetrap.geometry import PAPER_DRIVE, YB174, HexLatticeSpec, build_hex_lattice_layout

L = 125e-6
M = YB174.mass
CENTRE = np.array([0.0, 0.0, 1e-4])


@pytest.fixture(scope="module")
def quad():
    # large scale keeps q small so the lowest-order Mathieu picture applies
    return quadrupole_fields(400e-6, CENTRE, static_ids=("Comp3", "Comp6"))


@pytest.fixture(scope="module")
def hex7():
    return analytic_fields(build_hex_lattice_layout(HexLatticeSpec(L, 270.5e-6, 410e-6, 0.0, 7)))


@pytest.fixture(scope="module")
def hex7_sites(hex7):
    sample = sample_total_potential(hex7, PAPER_DRIVE, YB174, spacing=L / 6)
    return find_all_sites(hex7, drive=PAPER_DRIVE, species=YB174, sample=sample)


# --------------------------------------------------------------------------
# integrator


def test_harmonic_amplitude_over_1000_periods():
    w = 2 * math.pi * 1e6
    model = HarmonicForce(M * w * w)
    dt = choose_step(None, 256, secular_omega=w)
    x0 = np.array([1e-6, 0.0, 0.0])
    traj = verlet(model, M, x0, np.zeros(3), 0.0, 1000 * 2 * math.pi / w, dt, stride=64)
    amp = np.hypot(traj.positions[:, 0], traj.velocities[:, 0] / w)
    assert np.abs(amp / 1e-6 - 1).max() < 1e-4


def test_step_halving_is_second_order():
    w = 2 * math.pi * 1e6
    model = HarmonicForce(M * w * w)
    T = 5.25 * 2 * math.pi / w  # off a turning point, where the phase error shows
    x0 = np.array([1e-6, 0.0, 0.0])
    errs = []
    for n in (40, 80, 160):
        traj = verlet(model, M, x0, np.zeros(3), 0.0, T, 2 * math.pi / w / n)
        errs.append(abs(traj.positions[-1, 0] - 1e-6 * math.cos(w * T)))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)
    assert errs[1] / errs[2] == pytest.approx(4.0, rel=0.05)


def test_energy_drift_with_frozen_voltages(quad):
    model = PseudoForce(quad, PAPER_DRIVE, YB174)
    modes = secular_frequencies(quad, PAPER_DRIVE, YB174, CENTRE)
    w = modes.frequencies.max()
    dt = choose_step(None, 100, secular_omega=w)
    periods = 1000 * 2 * math.pi / modes.frequencies.min()
    traj = verlet(model, M, CENTRE + [2e-6, -1e-6, 1e-6], np.zeros(3), 0.0, periods, dt, stride=10)
    assert energy_drift(traj, model, M, window=100) < 1e-5


def test_time_reversal_with_rf(quad):
    model = FieldForce(quad, PAPER_DRIVE, YB174)
    dt = choose_step(PAPER_DRIVE)
    T = 400 * dt
    x0, v0 = CENTRE + [1e-6, 0.5e-6, -0.3e-6], np.array([3.0, -1.0, 2.0])
    fwd = verlet(model, M, x0, v0, 0.0, T, dt)
    back = verlet(model, M, fwd.positions[-1], fwd.velocities[-1], T, 0.0, -dt)
    # stepping the clock back from the end state retraces the path exactly
    np.testing.assert_allclose(back.positions[-1] - CENTRE, x0 - CENTRE, rtol=1e-6)
    np.testing.assert_allclose(back.velocities[-1], v0, rtol=1e-6)


def test_too_few_steps_rejected():
    with pytest.raises(ValueError):
        choose_step(PAPER_DRIVE, 20)
    with pytest.raises(ValueError):
        choose_step(None)


def test_ion_at_nil_stays_put(hex7, hex7_sites):
    site = hex7_sites[3].position
    wf = Waveform.constant(100 * 2 * math.pi / PAPER_DRIVE.angular_frequency, PAPER_DRIVE.amplitude)
    traj = integrate_trajectory(hex7, PAPER_DRIVE, YB174, wf, TrajectoryState(0.0, site, np.zeros(3)),
                                wf.duration, stride=40)
    assert np.linalg.norm(traj.positions - site, axis=1).max() < 1e-9


def test_secular_frequency_and_micromotion(quad):
    modes = secular_frequencies(quad, PAPER_DRIVE, YB174, CENTRE)
    wx = modes.frequencies[1]
    q = stability_params(PAPER_DRIVE, YB174, [wx])[0][0]
    Om = PAPER_DRIVE.angular_frequency
    dt = choose_step(PAPER_DRIVE, 80)
    T = 12 * 2 * math.pi / wx
    wf = Waveform.constant(T, PAPER_DRIVE.amplitude)
    A = 1e-6
    traj = integrate_trajectory(quad, PAPER_DRIVE, YB174, wf, TrajectoryState(0.0, CENTRE + [A, 0, 0], np.zeros(3)),
                                T, steps_per_period=80)
    t, x = traj.times, traj.positions[:, 0] - CENTRE[0]
    assert traj.times[1] - traj.times[0] == pytest.approx(dt)

    def fit(w):
        basis = np.column_stack([np.cos(w * t), np.sin(w * t),
                                 np.cos(w * t) * np.cos(Om * t), np.sin(w * t) * np.cos(Om * t)])
        coef, res, *_ = np.linalg.lstsq(basis, x, rcond=None)
        return coef, float(np.sum((basis @ coef - x) ** 2))

    w_fit = optimize.minimize_scalar(lambda w: fit(w)[1], bounds=(0.8 * wx, 1.2 * wx), method="bounded",
                                     options={"xatol": 1e-6 * wx}).x
    assert w_fit == pytest.approx(wx, rel=0.02)
    coef, _ = fit(w_fit)
    ratio = math.hypot(coef[2], coef[3]) / math.hypot(coef[0], coef[1])
    assert ratio == pytest.approx(q / 2, rel=0.10)


# --------------------------------------------------------------------------
# micromotion from stray fields


def test_micromotion_zero_field(quad):
    res = micromotion_amplitude(quad, PAPER_DRIVE, YB174, CENTRE, [0.0, 0.0, 0.0])
    assert np.abs(res.displacement).max() == 0.0
    assert np.abs(res.amplitude).max() == 0.0


def test_micromotion_harmonic_displacement(quad):
    modes = secular_frequencies(quad, PAPER_DRIVE, YB174, CENTRE)
    wx = modes.frequencies[1]
    E = 1.0
    res = micromotion_amplitude(quad, PAPER_DRIVE, YB174, CENTRE, [E, 0.0, 0.0])
    assert res.displacement[0] == pytest.approx(YB174.charge * E / (M * wx * wx), rel=0.05)
    assert not res.nonlinear
    res2 = micromotion_amplitude(quad, PAPER_DRIVE, YB174, CENTRE, [2 * E, 0.0, 0.0])
    assert res2.displacement[0] / res.displacement[0] == pytest.approx(2.0, rel=0.01)
    i = int(np.argmax(np.abs(res.principal_axes[0])))
    assert res.amplitude[i] == pytest.approx(res.mathieu_q[i] * abs(res.displacement[0]) / 2, rel=1e-6)


def test_micromotion_nonlinear_warning(hex7, hex7_sites):
    site = hex7_sites[3]
    # push along the softest mode, far enough to leave the harmonic region
    soft = site.principal_axes[:, -1] * 500.0
    with pytest.warns(UserWarning):
        res = micromotion_amplitude(hex7, PAPER_DRIVE, YB174, site, soft)
    assert res.nonlinear


# --------------------------------------------------------------------------
# waveforms


def test_waveform_roundtrip(tmp_path):
    wf = ShuttleTemplate().waveform(PAPER_DRIVE, 0.3, 250.0, 0.25e-6, 0.6e-6, 300.0, 0.2e-6)
    wf.save(tmp_path / "w.json")
    again = Waveform.load(tmp_path / "w.json")
    assert again == wf
    assert set(wf.to_dict()) == {"duration_s", "rf_amplitude", "channels"}


def test_waveform_validation(paper_layout):
    with pytest.raises(ValueError):
        PiecewiseLinear((0.0, 2.0, 1.0), (0, 0, 0))
    with pytest.raises(ValueError):
        Waveform(1e-6, PiecewiseLinear((0.0, 0.5e-6), (1.0, 1.0)))
    with pytest.raises(LayoutError):
        Waveform.from_dict({"duration_s": 1e-6})
    hot = Waveform.constant(1e-6, 455.0, {"Comp3": 1300.0})
    assert any("Comp3" in msg for msg in hot.check_limits(paper_layout))
    assert Waveform.constant(1e-6, 455.0, {"Comp3": 10.0}).check_limits(paper_layout) == []


def test_template_scaling_and_reversal():
    tpl = ShuttleTemplate()
    dip = 0.3
    wf = tpl.waveform(PAPER_DRIVE, dip, 200.0, 0.2e-6, 0.5e-6, 100.0, 0.1e-6)
    assert wf.rf_amplitude(tpl.ramp_time) == pytest.approx(dip * PAPER_DRIVE.amplitude)
    assert wf.rf_amplitude(wf.duration) == pytest.approx(PAPER_DRIVE.amplitude)
    assert wf.channels["Comp6"].peak == pytest.approx(200.0 * dip**2)
    assert wf.channels["Comp1"].peak == pytest.approx(tpl.hold_volts * dip**2)
    for k, f in wf.channels.items():
        assert f(0.0) == 0.0 and f(wf.duration) == 0.0
    np.testing.assert_allclose(wf.channels["Comp3"].values, -np.array(wf.channels["Comp6"].values))
    rev = wf.reversed_polarity()
    assert rev.channels["Comp6"] == wf.channels["Comp3"]
    assert rev.channels["Comp1"] == wf.channels["Comp1"]
    with pytest.raises(ValueError):
        tpl.waveform(PAPER_DRIVE, 0.0, 1.0, 1e-7, 0.0, 1.0, 1e-7)


# --------------------------------------------------------------------------
# shuttling


def test_zero_waveform_keeps_ion(hex7, hex7_sites):
    wf = Waveform.constant(1e-6, PAPER_DRIVE.amplitude, {"Comp3": 0.0, "Comp6": 0.0})
    model = FieldForce(hex7, PAPER_DRIVE, YB174, wf)
    res = play_waveform(hex7, PAPER_DRIVE, YB174, wf, 3, 4, hex7_sites, model=model)
    assert res.end_site == 3
    assert not res.success
    assert res.max_excursion < 1e-9
    assert abs(res.secular_energy_gain) < 1e-9


def test_identity_and_adjacency(hex7, hex7_sites):
    wf = search_shuttle_waveform(hex7, PAPER_DRIVE, YB174, 2, 2, hex7_sites)
    assert all(f.peak == 0.0 for f in wf.channels.values())
    assert wf.rf_amplitude.peak == PAPER_DRIVE.amplitude
    far = np.linalg.norm(np.array([s.position for s in hex7_sites]) - hex7_sites[0].position, axis=1).argmax()
    with pytest.raises(AdjacencyError):
        search_shuttle_waveform(hex7, PAPER_DRIVE, YB174, 0, int(far), hex7_sites)
