import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import tplquad

from wtransfer import cavity as cv, drive

MODE = cv.ModeIndex(3, 1, 1)


def box(v=0.0, duration=None):
    return cv.RectangularCavity(50.0, 20.0, 20.0, v, duration)


def test_mode_index_validation():
    with pytest.raises(ValueError):
        cv.ModeIndex(0, 1, 1)


def test_cavity_validation():
    with pytest.raises(ValueError):
        cv.RectangularCavity(0.0, 1.0, 1.0)
    with pytest.raises(cv.CavityValidityError):
        cv.RectangularCavity(50.0, 20.0, 20.0, v=1e-3, duration=5000.0)
    with pytest.raises(cv.CavityValidityError):
        cv.mode_frequency(box(1e-3), MODE, 5000.0)


def test_static_frequency():
    k = math.pi * math.sqrt((3 / 50) ** 2 + (1 / 20) ** 2 + (1 / 20) ** 2)
    assert cv.mode_frequency(box(), MODE, 0.0) == pytest.approx(k, rel=1e-15)
    assert cv.mode_frequency(box(), MODE, 1234.0) == pytest.approx(k, rel=1e-15)
    assert cv.mode_frequency(box(1e-4), MODE, 0.0) == pytest.approx(k, rel=1e-15)


@given(st.floats(-1e-4, 1e-4).filter(lambda v: abs(v) > 1e-7), st.integers(1, 6), st.integers(1, 4))
def test_chirp_rate_matches_box_derivative(v, nx, ny):
    # central difference of |k(t)| of the instantaneous box
    cav, mode = box(v), cv.ModeIndex(nx, ny, 1)
    h = 1.0
    fd = (cv.exact_frequency(cav, mode, h) - cv.exact_frequency(cav, mode, -h)) / (2 * h)
    assert fd == pytest.approx(cv.chirp_rate(cav, mode), rel=1e-6)
    slope = (cv.mode_frequency(cav, mode, h) - cv.mode_frequency(cav, mode, -h)) / (2 * h)
    assert slope == pytest.approx(cv.chirp_rate(cav, mode), rel=1e-10)


def test_mode_function_nodes_and_antinodes():
    cav = box()
    assert cv.mode_function(cav, MODE, (0.0, 10.0, 10.0)) == 0
    xs = np.linspace(0, 50.0, 3001)
    prof = np.abs(cv.mode_profile(cav, MODE, (xs, 10.0 * np.ones_like(xs), 10.0 * np.ones_like(xs))))
    assert xs[np.argmax(prof)] == pytest.approx(50.0 / 6, abs=50.0 / 3000)
    with pytest.raises(ValueError):
        cv.mode_function(cav, MODE, (51.0, 10.0, 10.0))


def test_mode_function_prefactor():
    cav, t = box(1e-4), 300.0
    pos = (7.0, 3.0, 11.0)
    w = cv.mode_frequency(cav, MODE, t)
    amp = cv.mode_function(cav, MODE, pos, t)
    assert abs(amp) == pytest.approx(abs(cv.mode_profile(cav, MODE, pos, t)) / math.sqrt(2 * w), rel=1e-14)


def test_mode_profile_normalized():
    cav = cv.RectangularCavity(5.0, 2.0, 3.0)
    mode = cv.ModeIndex(2, 1, 1)
    val, _ = tplquad(
        lambda z, y, x: cv.mode_profile(cav, mode, (x, y, z)) ** 2, 0, 5.0, 0, 2.0, 0, 3.0, epsabs=1e-12, epsrel=1e-12
    )
    assert val == pytest.approx(1, abs=1e-8)


def test_coupling_node_and_antinode():
    cav = box()
    ts = np.linspace(0, 100, 11)
    at_node = np.tile([[0.0], [10.0], [10.0]], (1, ts.size))
    assert np.all(cv.coupling_from_trajectory(cav, MODE, ts, at_node) == 0)
    at_peak = np.tile([[50.0 / 6], [10.0], [10.0]], (1, ts.size))
    g = cv.coupling_from_trajectory(cav, MODE, ts, at_peak)
    assert np.ptp(g) < 1e-15 * abs(g[0])
    assert abs(g[0]) == pytest.approx(cv.max_coupling(cav, MODE, 0.0, 10.0, 10.0), rel=1e-14)
    with pytest.raises(ValueError):
        cv.coupling_from_trajectory(cav, MODE, ts, np.tile([[60.0], [10.0], [10.0]], (1, ts.size)))


def test_gaussian_coupling_round_trip():
    cav = box(2e-5, 2000.0)
    ts = np.linspace(0, 2000, 401)
    gmax = float(np.min(cv.max_coupling(cav, MODE, ts, 10.0, 10.0)))
    target = drive.GaussianPulse(0.8 * gmax, 1000.0, 300.0)(ts)
    xs = cv.required_position(target, cav, MODE, ts, 10.0, 10.0)
    path = np.stack([xs, 10.0 * np.ones_like(ts), 10.0 * np.ones_like(ts)])
    g = cv.coupling_from_trajectory(cav, MODE, ts, path)
    np.testing.assert_allclose(g, target, rtol=1e-9, atol=1e-12 * gmax)
    # the path stays on one continuous branch
    assert np.max(np.abs(np.diff(xs))) < 1.0


def test_required_position_examples():
    cav = box()
    assert cv.required_position(0.0, cav, MODE, 0.0, 10.0, 10.0) == 0
    gmax = float(cv.max_coupling(cav, MODE, 0.0, 10.0, 10.0))
    assert cv.required_position(gmax, cav, MODE, 0.0, 10.0, 10.0) == pytest.approx(50.0 / 6, rel=1e-7)
    with pytest.raises(ValueError):
        cv.required_position(1.01 * gmax, cav, MODE, 0.0, 10.0, 10.0)


def test_two_photon_validation():
    with pytest.raises(ValueError):
        cv.TwoPhotonDrive(2.0, 0.0, 100.0, drive.LinearChirp(), 1.0, 19.0)


def test_effective_drive_examples():
    d = cv.TwoPhotonDrive(2.0, 0.0, 100.0, drive.LinearChirp(rate=1e-4), 1.0, 100.0)
    g_eff, _ = cv.effective_drive(d, 0.0)
    assert g_eff == pytest.approx(0.02, rel=1e-15)
    # far in the tail Omega vanishes
    g_eff, delta_eff = cv.effective_drive(d, 1e4)
    assert g_eff == 0 and delta_eff == pytest.approx(1e-4 * 1e4 + 1 / 200)
    # |Omega| = |g| cancels the Stark part
    same = cv.TwoPhotonDrive(1.0, 0.0, 100.0, drive.LinearChirp(), 1.0, 100.0)
    assert cv.effective_drive(same, 0.0)[1] == 0


@given(st.floats(0.01, 0.099), st.floats(-2000, 2000), st.floats(100, 2000), st.floats(0.5, 5))
def test_drive_for_coupling_reproduces_gaussian(ratio, tc, tau, g):
    # the dispersive condition caps the effective amplitude at g / 10
    pulse = drive.GaussianPulse(ratio * g, tc, tau)
    d = cv.drive_for_coupling(pulse, g, 100 * g)
    ts = np.linspace(tc - 3 * tau, tc + 3 * tau, 41)
    g_eff, _ = cv.effective_drive(d, ts)
    np.testing.assert_allclose(g_eff, pulse(ts), rtol=1e-12)


def test_design_report():
    cav = box(2e-5, 2000.0)
    modes = [cv.ModeIndex(3, 1, 1), cv.ModeIndex(4, 1, 1)]
    ts = np.linspace(0, 2000, 21)
    gmax = float(np.min(cv.max_coupling(cav, modes[0], ts, 10.0, 10.0)))
    pulses = [drive.GaussianPulse(0.5 * gmax, 1000.0, 300.0), drive.GaussianPulse(1e3, 1000.0, 300.0)]
    rep = cv.design_report(cav, modes, pulses, ts)
    first, second = rep["modes"]
    assert first["mode"] == [3, 1, 1]
    assert first["chirp_rate"] == cv.chirp_rate(cav, modes[0])
    assert len(first["path"]) == ts.size
    assert second["path"] is None and second["path_error"]
