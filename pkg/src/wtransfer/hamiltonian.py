"""Full and reduced Hamiltonians of the atom-cavity transfer problem.

Each stage splits the 17-state space into two coupled subsystems and a
remainder that is left untouched:

* stage 1: S11 (STIRAP rgr -> 110) and S12 (fractional STIRAP rrg, grr -> 101)
* stage 2: S21 (phase-only 110, 101) and S22 (STIRAP rrg, grr -> 011)

Every subsystem is written in its own rotating frame, with the one-photon
states (1P) at the detunings that allow their adiabatic elimination. The full
17x17 matrix is the direct sum of the subsystem matrices of the active stage.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import hilbert
from .drive import ProtocolSpec, eval_chirp, eval_coupling

SUBSYSTEM_IDS = ("S11", "S12", "S21", "S22")
STAGE_SUBSYSTEMS = {1: ("S11", "S12"), 2: ("S21", "S22")}
SUBSYSTEM_STAGE = {"S11": 1, "S12": 1, "S21": 2, "S22": 2}

# unreduced bases, 0P/2P states first then the 1P intermediates
SUBSYSTEM_LABELS = {
    "S11": ("rgr|000", "rgg|010", "ggr|010", "grg|010", "ggg|110"),
    "S12": ("grr|000", "rrg|000", "ggr|001", "grg|001", "rgg|001", "ggg|101"),
    "S21": ("ggg|101", "ggg|110", "rgg|100", "ggr|100", "grg|100"),
    "S22": ("grr|000", "rrg|000", "ggr|001", "grg|001", "rgg|001", "ggg|011"),
}

# states kept after eliminating the 1P intermediates
RETAINED_LABELS = {
    "S11": ("rgr|000", "ggg|110"),
    "S12": ("rrg|000", "grr|000", "ggg|101"),
    "S21": ("ggg|101", "ggg|110"),
    "S22": ("rrg|000", "grr|000", "ggg|011"),
}

REGIME_RATIO = 0.2


class DispersiveRegimeError(ValueError):
    """A Stark-shift denominator vanished."""


@dataclass(frozen=True)
class Drives:
    """Couplings, chirps and detunings of one stage sampled on a time array."""

    g: np.ndarray
    w: np.ndarray
    delta: tuple[float, float, float]
    stage: int


def drives(spec: ProtocolSpec, stage: int, t) -> Drives:
    sched = spec.schedule(stage)
    t = np.asarray(t, dtype=float)
    g = np.array([np.broadcast_to(eval_coupling(sched, m, t), t.shape) for m in (1, 2, 3)])
    w = np.array([np.broadcast_to(eval_chirp(sched, m, t), t.shape) for m in (1, 2, 3)])
    return Drives(g, w, sched.detunings, stage)


def _check_stage(sid: str, stage: int):
    if sid not in SUBSYSTEM_STAGE:
        raise ValueError(f"unknown subsystem {sid!r}")
    if SUBSYSTEM_STAGE[sid] != stage:
        raise ValueError(f"subsystem {sid} is not active in stage {stage}")


def s21_offset(spec: ProtocolSpec) -> float:
    """Energy of |ggg,101> above |ggg,110> in stage 2 from the mode-3 tuning.

    Mode 3 keeps its stage-1 tuning (V1 + Delta3 above the bare atomic line)
    while mode 2 is brought to Delta2 of the bare line, so the two pair states
    differ by V1 + Delta3 - Delta2 besides the chirps.
    """
    _, d2, d3 = spec.stage2.detunings
    return spec.V1 + d3 - d2


def bare_diagonal(spec: ProtocolSpec, sid: str, t) -> np.ndarray:
    """Diagonal of a subsystem matrix with all couplings off, shape (..., d)."""
    stage = SUBSYSTEM_STAGE[sid]
    dr = drives(spec, stage, t)
    w1, w2, w3 = dr.w
    d1, d2, d3 = dr.delta
    one = np.ones_like(w1)
    if sid == "S11":
        cols = [-w2, d2 * one, d2 * one, d2 * one, w1 + d1 + d2]
    elif sid == "S12":
        cols = [-w3, -w3, d3 * one, d3 * one, d3 * one, w1 + d1 + d3]
    elif sid == "S21":
        cols = [w3 + s21_offset(spec), w2, -d2 * one, -d2 * one, -d2 * one]
    else:
        cols = [-w3, -w3, d3 * one, d3 * one, d3 * one, w2 + d2 + d3]
    return np.stack(cols, axis=-1)


def _couplings(sid: str, g) -> list[tuple[int, int, np.ndarray]]:
    g1, g2, g3 = g
    if sid == "S11":
        return [(0, 1, g2), (0, 2, g2), (1, 4, g1), (2, 4, g1), (3, 4, g1)]
    if sid == "S12":
        return [(0, 2, g3), (0, 3, g3), (1, 3, g3), (1, 4, g3), (2, 5, g1), (3, 5, g1), (4, 5, g1)]
    if sid == "S21":
        return [(0, 2, g3), (0, 3, g3), (0, 4, g3), (1, 2, g2), (1, 3, g2), (1, 4, g2)]
    return [(0, 2, g3), (0, 3, g3), (1, 3, g3), (1, 4, g3), (2, 5, g2), (3, 5, g2), (4, 5, g2)]


def subsystem_hamiltonian(spec: ProtocolSpec, sid: str, t, stage: int | None = None) -> np.ndarray:
    """Unreduced subsystem matrix (5x5 or 6x6) at time(s) t.

    Scalar t gives a single matrix; an array of times gives a stack.
    """
    t_arr = np.asarray(t, dtype=float)
    if stage is None:
        stage = spec.stage_at(float(np.max(t_arr)))
    _check_stage(sid, stage)
    dr = drives(spec, stage, t_arr)
    diag = bare_diagonal(spec, sid, t_arr)
    d = diag.shape[-1]
    H = np.zeros(t_arr.shape + (d, d))
    idx = np.arange(d)
    H[..., idx, idx] = diag
    for i, j, g in _couplings(sid, dr.g):
        H[..., i, j] = g
        H[..., j, i] = g
    if spec.include_offresonant and stage == 1:
        shifts, exchange = _offresonant_terms(spec, dr)
        labels = SUBSYSTEM_LABELS[sid]
        for k, label in enumerate(labels):
            if label in shifts:
                H[..., k, k] += shifts[label]
        if sid == "S12":
            H[..., 0, 1] += exchange
            H[..., 1, 0] += exchange
    return H


def _offresonant_terms(spec: ProtocolSpec, dr: Drives):
    """Stark terms of the far-detuned stage-1 channels (V3 enters as configured)."""
    g1, g2, g3 = dr.g
    d1, d2, _ = dr.delta
    V1, V2, V3 = spec.V1, spec.V2, spec.V3
    den = {
        "d1v2": d1 - V2,
        "d1v1": d1 - V1,
        "v2d2": V2 + d2,
        "v1d2": V1 + d2,
        "d2v32": d2 + V3 - V2,
        "d2v21": d2 + V2 - V1,
    }
    for name, value in den.items():
        if value == 0:
            raise DispersiveRegimeError(f"vanishing Stark denominator {name}")
    rrg_exchange = -(g1**2 / den["d1v1"] + g2**2 / den["d2v21"])
    shifts = {
        "rgr|000": -2 * g1**2 / den["d1v2"] - 2 * g3**2 / den["d2v32"],
        "rrg|000": 2 * rrg_exchange,
        "grr|000": 2 * rrg_exchange,
        "ggg|110": 3 * g2**2 / den["v2d2"],
        "ggg|101": 3 * g3**2 / den["v1d2"],
        "ggg|011": 3 * g2**2 / den["v2d2"] + 3 * g3**2 / den["v1d2"],
    }
    return shifts, rrg_exchange


def full_hamiltonian(spec: ProtocolSpec, t, stage: int | None = None) -> np.ndarray:
    """17x17 Hamiltonian: direct sum of the active stage's subsystem matrices."""
    t_arr = np.asarray(t, dtype=float)
    if stage is None:
        stage = spec.stage_at(float(np.max(t_arr)))
    H = np.zeros(t_arr.shape + (hilbert.DIM, hilbert.DIM))
    for sid in STAGE_SUBSYSTEMS[stage]:
        idx = np.array(hilbert.indices(SUBSYSTEM_LABELS[sid]))
        H[..., idx[:, None], idx[None, :]] = subsystem_hamiltonian(spec, sid, t_arr, stage)
    return H


def full_bare_diagonal(spec: ProtocolSpec, stage: int, t) -> np.ndarray:
    """Bare (coupling-free) diagonal of the full matrix, shape (..., 17)."""
    t_arr = np.asarray(t, dtype=float)
    out = np.zeros(t_arr.shape + (hilbert.DIM,))
    for sid in STAGE_SUBSYSTEMS[stage]:
        out[..., hilbert.indices(SUBSYSTEM_LABELS[sid])] = bare_diagonal(spec, sid, t_arr)
    return out


# ---------------------------------------------------------------------------
# Stark shifts and effective Hamiltonians


def stark_diagonal(state, spec: ProtocolSpec, t, stage: int | None = None):
    """Dispersive shift <s|H_S(t)|s> of a retained 0P/2P state.

    Each shift is |g|^2 times the number of 1P channels of the active stage,
    divided by the energy of the state above those channels.
    """
    label = state.label if isinstance(state, hilbert.BasisState) else str(state)
    t_arr = np.asarray(t, dtype=float)
    if stage is None:
        stage = spec.stage_at(float(np.max(t_arr)))
    dr = drives(spec, stage, t_arr)
    g1, g2, g3 = dr.g
    d1, d2, d3 = dr.delta
    zero = np.zeros_like(g1)
    if stage == 1:
        table = {
            "rgr|000": lambda: -2 * g2**2 / d2,
            "rrg|000": lambda: -2 * g3**2 / d3,
            "grr|000": lambda: -2 * g3**2 / d3,
            "ggg|110": lambda: 3 * g1**2 / d1,
            "ggg|101": lambda: 3 * g1**2 / d1,
            "ggg|011": lambda: zero,
        }
    else:
        table = {
            "rgr|000": lambda: zero,
            "rrg|000": lambda: -2 * g3**2 / d3,
            "grr|000": lambda: -2 * g3**2 / d3,
            "ggg|110": lambda: 3 * g2**2 / d2,
            "ggg|101": lambda: 3 * g3**2 / (spec.V1 + d3),
            "ggg|011": lambda: 3 * g2**2 / d2,
        }
    if label not in table:
        raise ValueError(f"{label} is not a retained 0P/2P state")
    dens = (d1, d2, d3) if stage == 1 else (d2, d3, spec.V1 + d3)
    for den in dens:
        if den == 0:
            raise DispersiveRegimeError("vanishing detuning in a Stark denominator")
    value = table[label]()
    if spec.include_offresonant and stage == 1:
        shifts, _ = _offresonant_terms(spec, dr)
        value = value + shifts.get(label, 0.0)
    return value if np.ndim(value) else float(value)


def off_manifold_coupling(spec: ProtocolSpec, t, stage: int | None = None):
    """Exchange amplitude between |rrg,000> and |grr,000> via the shared 1P state.

    Both 0P states reach |grg,001> through mode 3, giving -g3^2/Delta3.
    """
    t_arr = np.asarray(t, dtype=float)
    if stage is None:
        stage = spec.stage_at(float(np.max(t_arr)))
    dr = drives(spec, stage, t_arr)
    value = -dr.g[2] ** 2 / dr.delta[2]
    if spec.include_offresonant and stage == 1:
        value = value + _offresonant_terms(spec, dr)[1]
    return value if np.ndim(value) else float(value)


@dataclass
class EffectiveSubsystem:
    """Reduced Hamiltonian of one subsystem after adiabatic elimination."""

    id: str
    labels: tuple[str, ...]
    matrix: np.ndarray
    terms: dict = field(default_factory=dict)
    stark: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    @property
    def dimension(self) -> int:
        return self.matrix.shape[-1]


def effective_matrix(spec: ProtocolSpec, sid: str, t, stage: int | None = None) -> np.ndarray:
    """Reduced matrix (2x2 or 3x3, stacked over t) built from the closed-form terms."""
    t_arr = np.asarray(t, dtype=float)
    if stage is None:
        stage = spec.stage_at(float(np.max(t_arr)))
    _check_stage(sid, stage)
    dr = drives(spec, stage, t_arr)
    g1, g2, g3 = dr.g
    d1, d2, d3 = dr.delta
    labels = RETAINED_LABELS[sid]
    bare = dict(zip(SUBSYSTEM_LABELS[sid], np.moveaxis(bare_diagonal(spec, sid, t_arr), -1, 0)))
    diag = [bare[label] + stark_diagonal(label, spec, t_arr, stage) for label in labels]
    n = len(labels)
    H = np.zeros(t_arr.shape + (n, n))
    for k in range(n):
        H[..., k, k] = diag[k]
    if sid == "S11":
        c = -2 * g1 * g2 / d2
        H[..., 0, 1] = H[..., 1, 0] = c
    elif sid in ("S12", "S22"):
        gf = g1 if sid == "S12" else g2
        c = -2 * gf * g3 / d3
        x = off_manifold_coupling(spec, t_arr, stage)
        H[..., 0, 1] = H[..., 1, 0] = x
        H[..., 0, 2] = H[..., 2, 0] = c
        H[..., 1, 2] = H[..., 2, 1] = c
    return H


def effective_h(spec: ProtocolSpec, sid: str, t, stage: int | None = None) -> EffectiveSubsystem:
    """Reduced subsystem at a single time t with its named terms."""
    t = float(t)
    if stage is None:
        stage = spec.stage_at(t)
    H = effective_matrix(spec, sid, t, stage)
    labels = RETAINED_LABELS[sid]
    stark = {label: stark_diagonal(label, spec, t, stage) for label in labels}
    terms = {}
    if sid == "S11" or sid in ("S12", "S22"):
        a = H[0, 0]
        b = H[-1, -1]
        terms["g_eff"] = H[0, -1]
        terms["Delta_eff"] = (b - a) / 2
        terms["Delta_0"] = (a + b) / 2
    if sid in ("S12", "S22"):
        x = H[0, 1]
        terms["g_33"] = x
        terms["Delta_tilde"] = (H[2, 2] - H[0, 0] - x) / 2
    if sid == "S21":
        terms["rates"] = (H[0, 0], H[1, 1])
    dr = drives(spec, stage, t)
    msgs = []
    dmin = min(abs(v) for v in dr.delta if v != 0)
    if np.max(np.abs(dr.g)) > REGIME_RATIO * dmin:
        msgs.append(f"coupling {np.max(np.abs(dr.g)):.3g} exceeds {REGIME_RATIO}|Delta| = {REGIME_RATIO * dmin:.3g}")
        warnings.warn(msgs[-1], RuntimeWarning, stacklevel=2)
    return EffectiveSubsystem(sid, labels, H, terms, stark, msgs)


def eliminate(H: np.ndarray, keep, energy: float | None = None) -> np.ndarray:
    """Schur-complement reduction onto the ``keep`` indices.

    The eliminated block is evaluated at ``energy`` (default 0), i.e.
    H_PP - H_PQ (H_QQ - E)^-1 H_QP.
    """
    keep = list(keep)
    drop = [k for k in range(H.shape[-1]) if k not in keep]
    Hpp = H[np.ix_(keep, keep)]
    Hpq = H[np.ix_(keep, drop)]
    Hqq = H[np.ix_(drop, drop)] - (energy or 0.0) * np.eye(len(drop))
    return Hpp - Hpq @ np.linalg.solve(Hqq, Hpq.conj().T)


# ---------------------------------------------------------------------------
# Morris-Shore decoupling


@dataclass
class MorrisShoreFrame:
    """Dark/bright decomposition of a degenerate-pair three-level Hamiltonian."""

    dark: np.ndarray
    bright: np.ndarray
    excited: np.ndarray
    transformed: np.ndarray
    pair: np.ndarray
    dark_energy: float
    center: float
    delta_tilde: float
    coupling: float

    @property
    def transform(self) -> np.ndarray:
        return np.vstack([self.dark, self.bright, self.excited])


def morris_shore(H, tol: float = 1e-10) -> MorrisShoreFrame:
    """Decouple (|1> - |2>)/sqrt(2) from a 3x3 with equal diagonal on states 1, 2
    and equal couplings of both to state 3."""
    if isinstance(H, EffectiveSubsystem):
        H = H.matrix
    H = np.asarray(H)
    scale = max(1.0, float(np.max(np.abs(H))))
    if abs(H[0, 0] - H[1, 1]) > tol * scale or abs(H[0, 2] - H[1, 2]) > tol * scale:
        raise ValueError("matrix lacks the degenerate-pair structure needed for the Morris-Shore transform")
    s = 1 / np.sqrt(2)
    W = np.array([[s, -s, 0.0], [s, s, 0.0], [0.0, 0.0, 1.0]])
    T = W @ H @ W.T
    a, x, c, b = H[0, 0], H[0, 1], H[0, 2], H[2, 2]
    if np.max(np.abs(T[0, 1:])) > tol * scale:
        raise ValueError("dark state does not decouple")
    return MorrisShoreFrame(
        dark=W[0],
        bright=W[1],
        excited=W[2],
        transformed=T,
        pair=T[1:, 1:].copy(),
        dark_energy=float(np.real(a - x)),
        center=float(np.real(a + x + b) / 2),
        delta_tilde=float(np.real(b - a - x) / 2),
        coupling=float(np.real(np.sqrt(2) * c)),
    )


def matrix_to_json(H: np.ndarray) -> list:
    """Row-major [re, im] pairs for debugging dumps."""
    H = np.asarray(H, dtype=complex)
    return [[[float(z.real), float(z.imag)] for z in row] for row in H]
