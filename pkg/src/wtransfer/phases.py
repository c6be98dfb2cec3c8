"""Dynamical phases, Stokes phase extraction and local phase gates.

A component that follows an adiabatic branch X from t0 to t1 ends with
interaction-picture phase

    -int E_X dt + int h0_k dt + arg <k|w_X(t1)>,

where h0_k is the bare frame energy of the basis state k. E_X is taken to
first superadiabatic order, Delta_0 +/- sqrt(A^2 + phidot^2).

Couplings switch off at the edges of every pulse sequence. There the
adiabaticity parameter grows without bound and the state stops following the
rotating eigenbasis, so the quadrature is piecewise. Where zeta < 1 the
adiabatic amplitudes pick up -int E_+-. Elsewhere the diabatic amplitudes
pick up -int H_kk.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson

from . import hilbert
from . import hamiltonian as ham
from .drive import ProtocolSpec

TWO_PI = 2 * np.pi
QUAD_POINTS = 20001


def wrap(x):
    """Map angles to (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(x), TWO_PI)


@dataclass
class BranchPhase:
    """Phase bookkeeping of one adiabatic branch of a real 2x2 Hamiltonian."""

    dynamic: float
    final_vector: np.ndarray
    sign: int
    energy: np.ndarray
    mixing: np.ndarray

    def component_phase(self, k: int, bare: float = 0.0) -> float:
        return float(self.dynamic + bare + np.angle(self.final_vector[k]) - np.angle(self.sign))


def two_level_terms(a, b, c):
    """Centre, half-splitting, gap and continuous mixing angle of [[a, c], [c, b]]."""
    a, b, c = (np.asarray(v, dtype=float) for v in (a, b, c))
    delta = (b - a) / 2
    A = np.hypot(delta, c)
    phi = 0.5 * np.unwrap(np.arctan2(c, delta))
    return (a + b) / 2, delta, A, phi


def branch_phase(ts, a, b, c, start: int = 0, superadiabatic: bool = True) -> BranchPhase:
    """Follow the adiabatic branch that starts closest to basis state ``start``.

    Eigenvectors are w- = (cos phi, -sin phi) and w+ = (sin phi, cos phi)
    with energies centre -/+ A.
    """
    ts = np.asarray(ts, dtype=float)
    centre, _, A, phi = two_level_terms(a, b, c)
    vec_minus = np.stack([np.cos(phi), -np.sin(phi)], axis=-1)
    vec_plus = np.stack([np.sin(phi), np.cos(phi)], axis=-1)
    use_plus = abs(vec_plus[0, start]) > abs(vec_minus[0, start])
    vec = vec_plus if use_plus else vec_minus
    s = 1.0 if use_plus else -1.0
    gap = A
    if superadiabatic:
        gap = np.sqrt(A**2 + np.gradient(phi, ts) ** 2)
    E = centre + s * gap
    sign = int(np.sign(vec[0, start]))
    return BranchPhase(-float(simpson(E, x=ts)), vec[-1], sign, E, phi)


SUDDEN_ZETA = 1.0


def piecewise_amplitudes(ts, a, b, c, psi0=(1.0, 0.0), threshold: float = SUDDEN_ZETA) -> np.ndarray:
    """Final diabatic amplitudes of [[a, c], [c, b]] from adiabatic/sudden segments.

    Returns the complex 2-vector at ts[-1] in the frame of the pair matrix.
    """
    from .crossings import adiabaticity

    ts = np.asarray(ts, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    centre, _, A, phi = two_level_terms(a, b, c)
    phid = np.gradient(phi, ts)
    with np.errstate(divide="ignore", invalid="ignore"):
        zeta = np.where(A > 0, np.abs(phid) / (2 * np.where(A > 0, A, 1)), np.inf)
    gap = np.sqrt(A**2 + phid**2)
    adiabatic = zeta < threshold
    psi = np.asarray(psi0, dtype=complex)
    k, n = 0, len(ts)
    while k < n - 1:
        j = k + 1
        while j < n - 1 and adiabatic[j] == adiabatic[k]:
            j += 1
        seg = slice(k, j + 1)
        if adiabatic[k]:
            u = _rotation(phi[k]) @ psi
            u = u * np.exp(-1j * np.array([simpson((centre - gap)[seg], x=ts[seg]),
                                           simpson((centre + gap)[seg], x=ts[seg])]))
            psi = _rotation(phi[j]).T @ u
        else:
            psi = psi * np.exp(-1j * np.array([simpson(a[seg], x=ts[seg]), simpson(b[seg], x=ts[seg])]))
        k = j
    return psi


def _rotation(phi):
    # rows are the adiabatic vectors w- and w+
    return np.array([[np.cos(phi), -np.sin(phi)], [np.sin(phi), np.cos(phi)]])


def _grid(window, n=QUAD_POINTS):
    return np.linspace(window[0], window[1], n)


def _bare(spec: ProtocolSpec, sid: str, ts, label: str) -> float:
    k = ham.SUBSYSTEM_LABELS[sid].index(label)
    return float(simpson(ham.bare_diagonal(spec, sid, ts)[:, k], x=ts))


def _bright_pair(spec: ProtocolSpec, sid: str, ts, stage: int):
    H = ham.effective_matrix(spec, sid, ts, stage)
    a = H[:, 0, 0] + H[:, 0, 1]
    c = np.sqrt(2) * H[:, 0, 2]
    return a, H[:, 2, 2], c


def stage1_phases(spec: ProtocolSpec, n: int = QUAD_POINTS) -> tuple[float, float, float]:
    """Quadrature phases of |ggg,110>, |rrg,000> and |ggg,101> at the end of stage 1."""
    ts = _grid(spec.stage1.window, n)
    H = ham.effective_matrix(spec, "S11", ts, 1)
    amp = piecewise_amplitudes(ts, H[:, 0, 0], H[:, 1, 1], H[:, 0, 1])
    theta1 = float(np.angle(amp[1])) + _bare(spec, "S11", ts, "ggg|110")
    amp = piecewise_amplitudes(ts, *_bright_pair(spec, "S12", ts, 1))
    theta2 = float(np.angle(amp[0])) + _bare(spec, "S12", ts, "rrg|000")
    theta3 = float(np.angle(amp[1])) + _bare(spec, "S12", ts, "ggg|101")
    return theta1, theta2, theta3


def stage2_phases(spec: ProtocolSpec, n: int = QUAD_POINTS) -> tuple[float, float, float]:
    """Phases gained in stage 2 by |ggg,110>, |ggg,101> and by |ggg,011>
    relative to the bright pair it is fed from."""
    ts = _grid(spec.stage2.window, n)
    H = ham.effective_matrix(spec, "S21", ts, 2)
    bare = ham.bare_diagonal(spec, "S21", ts)
    # diagonal block: only the Stark part survives in the interaction picture
    phi2 = -float(simpson(H[:, 0, 0] - bare[:, 0], x=ts))
    phi1 = -float(simpson(H[:, 1, 1] - bare[:, 1], x=ts))
    amp = piecewise_amplitudes(ts, *_bright_pair(spec, "S22", ts, 2))
    phi3 = float(np.angle(amp[1])) + _bare(spec, "S22", ts, "ggg|011")
    return phi1, phi2, phi3


def measured_stage1_phases(traj) -> tuple[float, float, float]:
    psi = traj.interaction_states
    psi0 = psi[0]
    ref = np.angle(psi0[hilbert.index_of("rrg|000")])
    return tuple(
        float(np.angle(psi[-1, hilbert.index_of(s)]) - ref) for s in ("ggg|110", "rrg|000", "ggg|101")
    )


def measured_stage2_phases(traj) -> tuple[float, float, float]:
    psi = traj.interaction_states
    k = hilbert.index_of

    def rel(label, ref):
        return float(np.angle(psi[-1, k(label)]) - np.angle(psi[0, k(ref)]))

    return rel("ggg|110", "ggg|110"), rel("ggg|101", "ggg|101"), rel("ggg|011", "rrg|000")


# ---------------------------------------------------------------------------
# Stokes phase


def crossing_window(ts, zeta, threshold: float = 0.01) -> tuple[float, float]:
    """Smallest interval around the adiabaticity maximum where zeta exceeds ``threshold``."""
    ts = np.asarray(ts)
    zeta = np.asarray(zeta)
    k = int(np.argmax(zeta))
    lo = k
    while lo > 0 and zeta[lo - 1] > threshold:
        lo -= 1
    hi = k
    while hi < len(ts) - 1 and zeta[hi + 1] > threshold:
        hi += 1
    return float(ts[max(lo - 1, 0)]), float(ts[min(hi + 1, len(ts) - 1)])


class AdiabaticityError(ValueError):
    """The evolution is not adiabatic outside the crossing window."""


def stokes_phase_pair(ts, pair_states, a, b, c, window=None, limit: float = 0.1) -> dict:
    """Stokes phase of a two-level crossing from a propagated pair trajectory.

    Parameters
    ----------
    ts : array
        Sample times of the trajectory.
    pair_states : array, shape (n, 2)
        Frame amplitudes in the diabatic pair basis.
    a, b, c : arrays
        Diagonal entries and coupling of the pair Hamiltonian on ``ts``.
    window : (t-, t+), optional
        Crossing window; by default where zeta > 0.01.

    Returns
    -------
    dict with ``theta_S``, ``theta_ad`` (the adiabatic phase of the initial
    branch over the whole interval), ``theta_measured``, ``window``,
    ``zeta_outside`` and ``R`` (the modulus kept on the branch).
    """
    from .crossings import adiabaticity

    ts = np.asarray(ts, dtype=float)
    centre, delta, A, phi = two_level_terms(a, b, c)
    zeta = adiabaticity(ts, A, phi)
    if window is None:
        window = crossing_window(ts, zeta)
    outside = (ts < window[0]) | (ts > window[1])
    zeta_out = float(np.max(zeta[outside])) if np.any(outside) else 0.0
    if zeta_out > limit:
        raise AdiabaticityError(f"adiabaticity {zeta_out:.3g} exceeds {limit} outside the crossing window")
    psi = np.asarray(pair_states)
    vec_minus = np.stack([np.cos(phi), -np.sin(phi)], axis=-1)
    vec_plus = np.stack([np.sin(phi), np.cos(phi)], axis=-1)
    u0m, u0p = vec_minus[0] @ psi[0], vec_plus[0] @ psi[0]
    use_plus = abs(u0p) > abs(u0m)
    vec = vec_plus if use_plus else vec_minus
    E = centre + (A if use_plus else -A)
    theta_ad = -float(simpson(E, x=ts))
    u0 = vec[0] @ psi[0]
    u1 = vec[-1] @ psi[-1]
    theta_meas = float(np.angle(u1) - np.angle(u0))
    return {
        "theta_S": float(wrap(theta_ad - theta_meas)),
        "theta_ad": theta_ad,
        "theta_measured": theta_meas,
        "window": tuple(window),
        "zeta_outside": zeta_out,
        "R": float(abs(u1) / abs(u0)),
    }


def stokes_phase(traj, spec: ProtocolSpec, window=None, sid: str = "S12") -> dict:
    """Stokes phase of the bright-pair crossing of subsystem ``sid``."""
    stage = ham.SUBSYSTEM_STAGE[sid]
    ts = traj.times
    a, b, c = _bright_pair(spec, sid, ts, stage)
    labels = ham.RETAINED_LABELS[sid]
    psi = traj.states
    k = [traj.labels.index(s) for s in labels]
    pair = np.stack([(psi[:, k[0]] + psi[:, k[1]]) / np.sqrt(2), psi[:, k[2]]], axis=-1)
    return stokes_phase_pair(ts, pair, a, b, c, window)


# ---------------------------------------------------------------------------
# phase gate

PAIR_LABELS = ("ggg|110", "ggg|101", "ggg|011")
# modes carrying the photons of each pair state
_PAIR_MODES = np.array([[1, 1, 0], [1, 0, 1], [0, 1, 1]], dtype=float)


@dataclass
class PhaseGate:
    """Local phases exp(i Theta_m n_m) applied to each cavity mode."""

    theta: np.ndarray
    diagnostic: str = ""

    def apply(self, psi) -> np.ndarray:
        psi = np.asarray(psi, dtype=complex)
        n = np.array([s.fock.photons for s in hilbert.BASIS], dtype=float)
        return psi * np.exp(1j * n @ self.theta)

    def to_dict(self) -> dict:
        return {
            "Theta": [float(x) for x in self.theta],
            "Theta_mod_2pi": [float(x) for x in np.mod(self.theta, TWO_PI)],
            "diagnostic": self.diagnostic,
        }


def phase_gate(final, tol: float = 1e-12):
    """Mode phases that zero the relative phases of the pair components.

    Returns the gate, the corrected state and its fidelity with the photonic
    W state.
    """
    final = np.asarray(final, dtype=complex)
    amps = final[hilbert.indices(PAIR_LABELS)]
    ok = np.abs(amps) > tol
    rhs = -np.angle(amps)
    diagnostic = ""
    if ok.all():
        theta = np.linalg.solve(_PAIR_MODES, rhs)
    else:
        diagnostic = "empty pair component; reduced phase-gate system"
        if ok.any():
            theta = np.linalg.lstsq(_PAIR_MODES[ok], rhs[ok], rcond=None)[0]
        else:
            theta = np.zeros(3)
    theta = wrap(theta)
    gate = PhaseGate(theta, diagnostic)
    corrected = gate.apply(final)
    return gate, corrected, hilbert.fidelity(hilbert.w_state_photonic(), corrected)


# ---------------------------------------------------------------------------
# ledger


@dataclass
class PhaseLedger:
    theta: tuple
    theta_measured: tuple
    phi: tuple
    phi_measured: tuple
    stokes: dict | None = None
    extras: dict = field(default_factory=dict)

    @classmethod
    def from_result(cls, result) -> "PhaseLedger":
        spec = result.spec
        stokes = None
        if spec.kind == "nonadiabatic":
            try:
                stokes = stokes_phase(result.stage1, spec)
            except (AdiabaticityError, ValueError) as exc:
                stokes = {"error": str(exc)}
        return cls(
            stage1_phases(spec),
            measured_stage1_phases(result.stage1),
            stage2_phases(spec),
            measured_stage2_phases(result.stage2),
            stokes,
        )

    def to_dict(self) -> dict:
        def pack(values):
            return {"raw": [float(v) for v in values], "mod_2pi": [float(v) for v in np.mod(values, TWO_PI)]}

        out = {
            "theta": pack(self.theta),
            "theta_measured": pack(self.theta_measured),
            "phi": pack(self.phi),
            "phi_measured": pack(self.phi_measured),
        }
        if self.stokes is not None:
            out["stokes"] = {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.stokes.items()}
        out.update(self.extras)
        return out
