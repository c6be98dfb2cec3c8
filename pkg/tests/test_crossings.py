import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import simpson
from scipy.special import lambertw

from wtransfer import crossings as cr, drive, propagate as pr


def test_mixing_angle_examples():
    assert cr.mixing_angle(1.0, 0.0) == 0
    assert cr.mixing_angle(0.0, 0.3) == pytest.approx(math.pi / 4)
    assert cr.mixing_angle(-1.0, 1e-12) == pytest.approx(math.pi / 2)
    with pytest.raises(ValueError):
        cr.mixing_angle(0.0, 0.0)


@given(st.floats(-10, 10), st.floats(1e-6, 10))
def test_mixing_angle_range_and_definition(delta, g):
    phi = cr.mixing_angle(delta, g)
    assert 0 <= phi <= math.pi / 2
    assert math.sin(2 * phi) * delta == pytest.approx(g * math.cos(2 * phi), abs=1e-9)


def lz_params(g=0.05, alpha=0.01, T=200.0, n=4001):
    ts = np.linspace(-T, T, n)
    return cr.TwoLevelParams(ts, -alpha * ts / 2, g * np.ones_like(ts))


def test_adiabaticity_constant_angle():
    ts = np.linspace(0, 10, 101)
    assert np.max(cr.adiabaticity(ts, np.ones_like(ts), 0.3 * np.ones_like(ts))) < 1e-14
    with pytest.raises(ValueError):
        cr.adiabaticity(ts, np.zeros_like(ts), np.zeros_like(ts))


def test_adiabaticity_lz_closed_form():
    g, alpha = 0.05, 0.01
    p = lz_params(g, alpha)
    ts = p.times
    # phi = atan2(g, -alpha t / 2)/2  ->  phidot = g alpha / 4 / A^2
    A = np.hypot(alpha * ts / 2, g)
    exact = np.abs(g * alpha / 4 / A**2) / (2 * A)
    np.testing.assert_allclose(p.zeta(), exact, atol=1e-4 * np.max(exact), rtol=0)
    # halving the sample step changes the maximum by less than 1 %
    fine = lz_params(g, alpha, n=8001).zeta()
    assert abs(fine.max() - p.zeta().max()) < 1e-2 * fine.max()


def test_adiabatic_preset_s11_is_adiabatic(adiabatic_spec):
    ts = np.linspace(*adiabatic_spec.stage1.window, 20001)
    p = cr.TwoLevelParams.from_matrices(ts, cr.pair_matrices(adiabatic_spec, "S11", ts))
    # away from the window edges, where both the gap and the mixing rate vanish
    active = p.gap > 1e-3 * p.gap.max()
    assert np.max(p.zeta()[active]) < 1


@pytest.mark.parametrize("name", drive.PRESET_NAMES)
def test_curves_match_eigensolver(name):
    spec = drive.preset(name)
    for sid in ("S11", "S12", "S22"):
        stage = 1 if sid != "S22" else 2
        ts = np.linspace(*spec.schedule(stage).window, 2001)
        H = cr.pair_matrices(spec, sid, ts)
        p = cr.TwoLevelParams.from_matrices(ts, H)
        curves = p.curves()
        ev = np.linalg.eigvalsh(H) - p.centre[:, None]
        np.testing.assert_allclose(curves.E_minus, ev[:, 0], atol=1e-10)
        np.testing.assert_allclose(curves.E_plus, ev[:, 1], atol=1e-10)
        assert np.all(curves.E_plus >= np.maximum(curves.D1, curves.D2) - 1e-15)
        np.testing.assert_allclose(curves.E_plus - curves.E_minus, 2 * p.gap)
        assert np.max(np.abs(np.diff(p.phi))) < 0.1


def test_lz_probability_limits():
    assert cr.lz_probability(1e-9, 1e-9, 100.0, 2e-5).probability == pytest.approx(1)
    assert cr.lz_probability(0.3, 0.3, 100.0, 1e6).probability == pytest.approx(1)
    with pytest.raises(ValueError):
        cr.lz_probability(0.3, 0.3, 100.0, 0.0)
    r = cr.lz_probability(0.3, 0.3, 100.0, 2e-5, 1000.0)
    assert r.C == pytest.approx(math.sqrt(8) * 0.09 / (100.0 * 2e-5 * 1000.0))
    assert r.valid == (2 * r.C**2 <= 0.05)


def test_lz_probability_monotone():
    alphas = np.geomspace(1e-6, 1e-3, 30)
    P = [cr.lz_probability(0.3, 0.3, 100.0, a).probability for a in alphas]
    assert np.all(np.diff(P) >= 0)
    amps = np.linspace(0.05, 1.0, 30)
    P = [cr.lz_probability(a, 0.3, 100.0, 2e-5).probability for a in amps]
    assert np.all(np.diff(P) <= 0)


def test_lambert_w_examples():
    assert cr.lambert_w(0.0) == 0
    assert cr.lambert_w(math.e) == pytest.approx(1, rel=1e-15)
    assert cr.lambert_w(-1 / math.e) == pytest.approx(-1, abs=1e-7)
    with pytest.raises(ValueError):
        cr.lambert_w(1.0, branch=2)


def residual(w, x):
    return abs(w * math.exp(w) - x) / abs(x)


@given(st.floats(-1 / math.e, 1e6).filter(lambda x: x != 0))
def test_lambert_w0_residual(x):
    w = cr.lambert_w(x)
    assert isinstance(w, float)
    assert residual(w, x) < 1e-14


@given(st.floats(-1 / math.e, -1e-20))
def test_lambert_wm1_residual(x):
    w = cr.lambert_w(x, branch=-1)
    assert w <= -1 + 1e-7
    assert residual(w, x) < 1e-14


@given(st.floats(-1e-20, -1e-300))
def test_lambert_wm1_deep_tail(x):
    # |W| ulp/2 bounds the attainable relative residual here, so compare values
    assert cr.lambert_w(x, branch=-1) == pytest.approx(float(lambertw(x, -1).real), rel=1e-14)


@pytest.mark.parametrize("branch", [0, -1])
def test_lambert_w_grid_matches_scipy(branch):
    # away from the branch point, where the reference itself loses digits
    hi = 1e4 if branch == 0 else -1e-12
    xs = np.concatenate([np.linspace(-1 / math.e + 1e-6, min(hi, 3.0), 500), np.geomspace(3.0, 1e4, 100)])
    for x in xs[xs <= hi]:
        assert cr.lambert_w(x, branch) == pytest.approx(float(lambertw(x, branch).real), rel=1e-12, abs=1e-14)


def test_lambert_w_out_of_domain_is_complex():
    w = cr.lambert_w(-1.0)
    assert isinstance(w, complex)
    assert abs(w * np.exp(w) + 1) < 1e-14


def test_turning_point_examples():
    assert abs(cr.turning_point(1e-9).z0) < 1e-8
    model = cr.CrossingModel(0.1, 2e-5, 1000.0)
    tp = model.turning_point()
    assert abs(model.A1(tp.z0) - model.A2(tp.z0)) < 1e-8
    assert abs(model(tp.z0)) < 1e-8
    assert not tp.higher_branches
    assert cr.turning_point(math.sqrt(1 / (2 * math.e))).higher_branches
    with pytest.raises(ValueError):
        cr.turning_point(0.0)


def test_turning_point_with_stark_refinement():
    model = cr.CrossingModel(0.1, 2e-5, 1000.0, stark=lambda z: 0.01 * z**2)
    tp = model.turning_point()
    assert abs(model.A1(tp.z0) - model.A2(tp.z0)) < 1e-10


def test_dykhne_real_contour_gives_one():
    assert cr.dykhne_probability(lambda z: z**2, 2.0, time_axis="real") == pytest.approx(1, abs=1e-14)


@pytest.mark.parametrize("C", [0.03, 0.08, 0.12, 0.15])
def test_dykhne_elliptic_and_lz(C):
    alpha, tau = 2e-5, 1000.0
    model = cr.CrossingModel(C, alpha, tau)
    z0 = model.turning_point().z0
    P = cr.dykhne_probability(model, z0)
    assert 0 <= P <= 1
    assert P == pytest.approx(cr.elliptic_probability(model, z0), rel=0.02)
    # lz_probability with C = sqrt(8) A^2 / (Delta alpha tau)
    A = math.sqrt(C * 100.0 * alpha * tau / math.sqrt(8))
    assert P == pytest.approx(cr.lz_probability(A, A, 100.0, alpha).probability, rel=0.05)
    P_fine = cr.dykhne_probability(model, z0, n=800)
    assert abs(P - P_fine) < 1e-4


@given(st.floats(0, 1), st.floats(-math.pi, math.pi))
def test_transfer_matrix_unitary(P, phi):
    N = cr.TransferMatrix.from_probability(P, phi)
    assert N.R**2 + N.T**2 == pytest.approx(1, abs=1e-10)
    M = N.matrix
    assert np.allclose(M.conj().T @ M, np.eye(2), atol=1e-12)


def test_transfer_matrix_rejects_invalid():
    with pytest.raises(ValueError):
        cr.TransferMatrix(0.5, 0.5, 0.0)


def test_aia_compose_limits():
    Um, Up = cr.adiabatic_propagator(0.7), cr.adiabatic_propagator(-1.3)
    ident = cr.TransferMatrix(1.0, 0.0, 0.0)
    np.testing.assert_allclose(cr.aia_compose(Um, ident, Up), Up @ Um)
    swap = cr.aia_compose(Um, cr.TransferMatrix(0.0, 1.0, 0.0), Up)
    assert np.allclose(np.abs(swap @ [1, 0]) ** 2, [0, 1])
    with pytest.raises(ValueError):
        cr.aia_compose(2 * Um, ident, Up)


def lz_unitary(g, alpha, T):
    def H(ts):
        ts = np.asarray(ts)
        out = np.zeros(ts.shape + (2, 2))
        out[..., 0, 0] = alpha * ts / 2
        out[..., 1, 1] = -alpha * ts / 2
        out[..., 0, 1] = out[..., 1, 0] = g
        return out

    grid = pr.TimeGrid(-T, T, 1.0, 0.5)
    cols = [pr.evolve(H, e, grid).final_state for e in np.eye(2)]
    return np.stack(cols, axis=1)


def test_fit_transfer_matrix_lz():
    g, alpha, T = 0.05, 0.01, 4000.0
    U = lz_unitary(g, alpha, T)
    # adiabatic bases (w-, w+) as rows at -T and +T
    W = [np.linalg.eigh(np.array([[alpha * t / 2, g], [g, -alpha * t / 2]]))[1].T for t in (-T, T)]
    Uad = W[1] @ U @ W[0].T
    ts = np.linspace(0, T, 200001)
    eta = simpson(np.hypot(alpha * ts / 2, g), x=ts)
    tm, res = cr.fit_transfer_matrix(Uad, eta, eta)
    assert tm.T**2 == pytest.approx(math.exp(-2 * math.pi * g**2 / alpha), abs=1e-3)
    assert tm.R**2 + tm.T**2 == pytest.approx(1, abs=1e-10)
    assert res < 1e-2


def test_fit_transfer_matrix_round_trip():
    N = cr.TransferMatrix.from_probability(0.3, 0.4)
    U = cr.aia_compose(cr.adiabatic_propagator(2.0), N, cr.adiabatic_propagator(-0.7))
    tm, res = cr.fit_transfer_matrix(U, 2.0, -0.7)
    assert res < 1e-10
    assert tm.T**2 == pytest.approx(0.3, abs=1e-10)
    assert tm.phi_S == pytest.approx(0.4, abs=1e-8)


def test_aia_predicts_preset_crossing(nonadiabatic_spec):
    rep = cr.crossing_report(nonadiabatic_spec, "S12")
    N = cr.TransferMatrix.from_probability(rep.P_Dykhne)
    psi = cr.aia_compose(cr.adiabatic_propagator(1.0), N, cr.adiabatic_propagator(2.0)) @ np.array([1.0, 0.0])
    assert abs(abs(psi[1]) ** 2 - rep.P_propagated) < 0.02


def test_crossing_report_fields(nonadiabatic_spec):
    d = cr.crossing_report(nonadiabatic_spec, "S12").to_dict()
    for key in ("crossing_time", "gap_min", "zeta_max", "P_LZ", "P_Dykhne", "P_propagated", "flags"):
        assert key in d
    assert 0 <= d["P_propagated"] <= 1
    assert d["P_LZ"] == pytest.approx(d["P_propagated"], rel=0.1)
    assert d["P_Dykhne"] == pytest.approx(d["P_propagated"], rel=0.05)


def test_crossing_report_without_crossing(nonadiabatic_spec):
    rep = cr.crossing_report(nonadiabatic_spec, "S22")
    assert rep.flags.get("no_crossing")
    assert rep.P_LZ is None and rep.P_Dykhne is None


def test_crossing_detected_on_exact_sample():
    # equal Stokes and pump amplitudes remove the Stark term, so D(t) vanishes on a grid point
    spec = drive.preset("nonadiabatic", {"stage1.A_s": 0.25, "stage1.A_p2": 0.25})
    rep = cr.crossing_report(spec, "S12")
    assert not rep.flags.get("no_crossing")
    assert rep.crossing_time == pytest.approx(spec.stage1.origin)
