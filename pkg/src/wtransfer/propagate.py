"""Time propagation of the full and reduced models and two-stage protocol runs.

Stepping uses the fourth-order Magnus integrator with two Gauss-Legendre
nodes per step. Each step exponentiates a Hermitian matrix through its
eigendecomposition, so the propagator is unitary to rounding error.
Matrices are built and diagonalized in vectorized batches.

Amplitudes are reported in the interaction picture with respect to the bare
(coupling-free) diagonal of each stage. Its accumulated phase is integrated
alongside the state. These amplitudes do not depend on the per-stage rotating
frame, so the stage-1 to stage-2 handoff is the identity on them.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import hilbert
from . import hamiltonian as ham
from .drive import ProtocolSpec

_C1 = 0.5 - math.sqrt(3) / 6
_C2 = 0.5 + math.sqrt(3) / 6
_BATCH = 4096

NORM_FAILURE = 1e-6


class IntegrationError(RuntimeError):
    """The propagated norm drifted beyond the failure threshold."""


@dataclass(frozen=True)
class TimeGrid:
    """Integration window, output stride and maximal step size."""

    t_start: float
    t_end: float
    stride: float
    dt: float | None = None

    def __post_init__(self):
        if not self.t_end > self.t_start:
            raise ValueError("t_end must exceed t_start")
        if not self.stride > 0:
            raise ValueError("stride must be positive")
        if self.dt is not None and not self.dt > 0:
            raise ValueError("dt must be positive")

    @property
    def span(self) -> float:
        return self.t_end - self.t_start

    def steps(self) -> tuple[int, float, int]:
        """Number of steps, step size and steps per output sample."""
        dt = min(self.dt or self.stride, self.stride)
        n = max(1, math.ceil(self.span / dt - 1e-9))
        h = self.span / n
        every = max(1, int(round(self.stride / h)))
        return n, h, every

    def halved(self) -> "TimeGrid":
        n, h, _ = self.steps()
        return TimeGrid(self.t_start, self.t_end, self.stride, h / 2)


def _as_evaluator(H):
    if callable(H):
        return H
    H = np.asarray(H)

    def const(ts):
        return np.broadcast_to(H, np.shape(ts) + H.shape)

    return const


def magnus_propagators(H, t0: float, h: float, n: int) -> np.ndarray:
    """One-step propagators of n consecutive steps of size h starting at t0."""
    hfun = _as_evaluator(H)
    tk = t0 + h * np.arange(n)
    H1 = np.asarray(hfun(tk + _C1 * h), dtype=complex)
    H2 = np.asarray(hfun(tk + _C2 * h), dtype=complex)
    K = 0.5 * h * (H1 + H2) - 1j * (math.sqrt(3) / 12) * h**2 * (H2 @ H1 - H1 @ H2)
    K = 0.5 * (K + np.conj(np.swapaxes(K, -1, -2)))
    w, V = np.linalg.eigh(K)
    return (V * np.exp(-1j * w)[..., None, :]) @ np.conj(np.swapaxes(V, -1, -2))


def _integrate(H, psi0, grid: TimeGrid, diag=None):
    n, h, every = grid.steps()
    psi = np.array(psi0, dtype=complex)
    times = [grid.t_start]
    states = [psi.copy()]
    for start in range(0, n, _BATCH):
        m = min(_BATCH, n - start)
        U = magnus_propagators(H, grid.t_start + start * h, h, m)
        for k in range(m):
            psi = U[k] @ psi
            step = start + k + 1
            if step % every == 0 or step == n:
                times.append(grid.t_start + step * h)
                states.append(psi.copy())
    times = np.array(times)
    times[-1] = grid.t_end
    phase = None
    if diag is not None:
        phase = _bare_phase(diag, grid, times)
    return times, np.array(states), phase


def _bare_phase(diag, grid: TimeGrid, times) -> np.ndarray:
    """Integral of the bare diagonal from t_start to each sample time.

    The bare diagonal is linear in t, so Gauss-Legendre over each sample interval is exact.
    """
    nodes = np.array([_C1, _C2])
    out = np.zeros((len(times), np.shape(diag(np.array([grid.t_start])))[-1]))
    a, b = times[:-1], times[1:]
    ts = a[:, None] + (b - a)[:, None] * nodes[None, :]
    vals = np.asarray(diag(ts.ravel())).reshape(len(a), 2, -1)
    out[1:] = np.cumsum(0.5 * (b - a)[:, None] * vals.sum(axis=1), axis=0)
    return out


@dataclass
class Trajectory:
    """Sampled propagation result.

    ``states`` are frame amplitudes; ``bare_phase`` is the accumulated
    integral of the bare diagonal, so ``interaction_states`` equals
    states * exp(i * bare_phase).
    """

    times: np.ndarray
    states: np.ndarray
    labels: tuple[str, ...] = hilbert.LABELS
    bare_phase: np.ndarray | None = None
    pairs: tuple[tuple[str, str], ...] = ()
    phase_offset: np.ndarray | None = None
    step_error: float | None = None

    @property
    def interaction_states(self) -> np.ndarray:
        psi = self.states
        if self.bare_phase is not None:
            psi = psi * np.exp(1j * self.bare_phase)
        if self.phase_offset is not None:
            psi = psi * np.exp(1j * self.phase_offset)
        return psi

    @property
    def populations(self) -> np.ndarray:
        return np.abs(self.states) ** 2

    @property
    def norm(self) -> np.ndarray:
        return np.sqrt(np.sum(self.populations, axis=1))

    @property
    def final_state(self) -> np.ndarray:
        return self.interaction_states[-1]

    def population(self, label: str) -> np.ndarray:
        return self.populations[:, self.labels.index(label)]

    def amplitude(self, label: str, interaction: bool = True) -> np.ndarray:
        psi = self.interaction_states if interaction else self.states
        return psi[:, self.labels.index(label)]

    def relative_phase(self, a: str, b: str, interaction: bool = True) -> np.ndarray:
        """Unwrapped arg(c_a) - arg(c_b) over the samples."""
        ca = self.amplitude(a, interaction)
        cb = self.amplitude(b, interaction)
        return np.unwrap(np.angle(ca * np.conj(cb)))

    def norm_drift(self) -> float:
        return float(np.max(np.abs(self.norm - self.norm[0])))

    def to_csv(self, path):
        header = ["t", "norm"] + [f"pop:{s}" for s in self.labels] + [f"phase:{a}/{b}" for a, b in self.pairs]
        pops = self.populations
        norm = self.norm
        phases = [self.relative_phase(a, b) for a, b in self.pairs]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for k, t in enumerate(self.times):
                row = [t, norm[k], *pops[k], *(p[k] for p in phases)]
                w.writerow([f"{float(v):.17g}" for v in row])


def evolve(H, psi0, grid: TimeGrid, *, diag=None, check_step: bool = False, labels=None) -> Trajectory:
    """Integrate i dpsi/dt = H(t) psi over the grid.

    Parameters
    ----------
    H : callable or ndarray
        Vectorized evaluator ``ts -> (len(ts), d, d)`` or a constant matrix.
    psi0 : array_like
        Normalized initial state.
    grid : TimeGrid
    diag : callable, optional
        Bare diagonal ``ts -> (len(ts), d)``; its integral defines the
        interaction-picture phases stored on the trajectory.
    check_step : bool
        Repeat with half the step and store the largest change of the final
        populations in ``Trajectory.step_error``.
    """
    psi0 = np.asarray(psi0, dtype=complex)
    if abs(np.linalg.norm(psi0) - 1) > 1e-10:
        raise ValueError("initial state is not normalized")
    times, states, phase = _integrate(H, psi0, grid, diag)
    if labels is None:
        labels = hilbert.LABELS if len(psi0) == hilbert.DIM else tuple(str(k) for k in range(len(psi0)))
    traj = Trajectory(times, states, tuple(labels), phase)
    drift = traj.norm_drift()
    if drift > NORM_FAILURE:
        raise IntegrationError(f"norm drift {drift:.3g} exceeds {NORM_FAILURE}")
    if check_step:
        _, fine, _ = _integrate(H, psi0, grid.halved())
        traj.step_error = float(np.max(np.abs(np.abs(fine[-1]) ** 2 - np.abs(states[-1]) ** 2)))
    return traj


# ---------------------------------------------------------------------------
# protocol runs

DEFAULT_DT = {"full": 1.0, "effective": 2.0}
# largest one-photon phase (|Delta| dt) per full-model step
FULL_PHASE_STEP = 50.0
DEFAULT_STRIDE = 10.0

PHASE_PAIRS = {
    1: (("ggg|110", "ggg|101"), ("ggg|110", "rrg|000"), ("rrg|000", "grr|000")),
    2: (("ggg|110", "ggg|101"), ("ggg|011", "ggg|101"), ("ggg|011", "ggg|110")),
}


def default_dt(spec: ProtocolSpec, mode: str) -> float:
    """Step size of a mode; the full model resolves the 1P detunings."""
    if mode != "full":
        return DEFAULT_DT[mode]
    delta = max(abs(d) for stage in (1, 2) for d in spec.schedule(stage).detunings)
    return min(DEFAULT_DT["full"], FULL_PHASE_STEP / delta) if delta > 0 else DEFAULT_DT["full"]


def stage_matrix(spec: ProtocolSpec, stage: int, mode: str):
    """Vectorized 17x17 evaluator of one stage in the requested model."""
    if mode == "full":
        return lambda ts: ham.full_hamiltonian(spec, ts, stage)
    if mode != "effective":
        raise ValueError(f"unknown mode {mode!r}")

    def evaluator(ts):
        ts = np.asarray(ts, dtype=float)
        H = np.zeros(ts.shape + (hilbert.DIM, hilbert.DIM))
        for sid in ham.STAGE_SUBSYSTEMS[stage]:
            idx = np.array(hilbert.indices(ham.RETAINED_LABELS[sid]))
            H[..., idx[:, None], idx[None, :]] = ham.effective_matrix(spec, sid, ts, stage)
        return H

    return evaluator


def stage_diagonal(spec: ProtocolSpec, stage: int):
    return lambda ts: ham.full_bare_diagonal(spec, stage, ts)


def stage1_target(thetas=(0.0, 0.0, 0.0)) -> np.ndarray:
    """Stage-1 reference state.

    (e^{i t1}|ggg,110> + e^{i t2}(|rrg> + |grr>)/sqrt(2) + e^{i t3}|ggg,101>)/sqrt(3),
    giving populations (1/3, 1/6, 1/6, 1/3).
    """
    t1, t2, t3 = thetas
    a = 1 / np.sqrt(3)
    b = np.exp(1j * t2) / np.sqrt(6)
    return hilbert.state_vector(
        {"ggg|110": a * np.exp(1j * t1), "rrg|000": b, "grr|000": b, "ggg|101": a * np.exp(1j * t3)}
    )


def leakage(traj: Trajectory) -> dict[str, float]:
    """Maximal population in the doubly occupied modes and in the 1P manifold."""
    pops = traj.populations
    one_p = hilbert.manifold_indices("1P")
    return {
        "ggg|200": float(np.max(traj.population("ggg|200"))),
        "ggg|020": float(np.max(traj.population("ggg|020"))),
        "1P": float(np.max(pops[:, one_p].sum(axis=1))),
    }


@dataclass
class ProtocolResult:
    spec: ProtocolSpec
    mode: str
    stage1: Trajectory
    stage2: Trajectory
    stage1_fidelity: float
    final_fidelity: float
    leakage: dict
    ledger: object = None
    gate: object = None
    corrected_fidelity: float | None = None
    extras: dict = field(default_factory=dict)

    @property
    def stage1_state(self) -> np.ndarray:
        return self.stage1.final_state

    @property
    def final_state(self) -> np.ndarray:
        return self.stage2.final_state

    def stage1_populations(self) -> dict[str, float]:
        pops = hilbert.populations(self.stage1_state)
        return {k: pops[k] for k in ("rrg|000", "grr|000", "ggg|110", "ggg|101")}

    def to_dict(self) -> dict:
        out = {
            "mode": self.mode,
            "parameters": self.spec.to_dict(),
            "stage1_fidelity": self.stage1_fidelity,
            "final_fidelity": self.final_fidelity,
            "corrected_fidelity": self.corrected_fidelity,
            "stage1_populations": self.stage1_populations(),
            "final_populations": {
                k: v for k, v in hilbert.populations(self.final_state).items() if v > 1e-12
            },
            "leakage": self.leakage,
            "norm_drift": max(self.stage1.norm_drift(), self.stage2.norm_drift()),
        }
        if self.ledger is not None:
            out["phases"] = self.ledger.to_dict()
        if self.gate is not None:
            out["phase_gate"] = self.gate.to_dict()
        out.update(self.extras)
        return out


def run_stage(spec: ProtocolSpec, stage: int, psi0, mode: str = "effective", dt=None, stride=None,
              check_step: bool = False) -> Trajectory:
    sched = spec.schedule(stage)
    grid = TimeGrid(sched.window[0], sched.window[1], stride or DEFAULT_STRIDE, dt or default_dt(spec, mode))
    try:
        traj = evolve(stage_matrix(spec, stage, mode), psi0, grid, diag=stage_diagonal(spec, stage),
                      check_step=check_step)
    except IntegrationError as exc:
        raise IntegrationError(f"stage {stage}: {exc}") from exc
    traj.pairs = PHASE_PAIRS[stage]
    return traj


def run_protocol(spec: ProtocolSpec, mode: str = "effective", dt=None, stride=None, check_step: bool = False,
                 phases: bool = True) -> ProtocolResult:
    """Run both stages starting from the atomic W state.

    The stage-1 end state, expressed as interaction-picture amplitudes, seeds
    stage 2 unchanged. Nothing couples during the inter-stage gap, so those
    amplitudes stay constant across it.
    """
    traj1 = run_stage(spec, 1, hilbert.w_state_atomic(), mode, dt, stride, check_step)
    psi1 = traj1.final_state
    traj2 = run_stage(spec, 2, psi1, mode, dt, stride, check_step)
    f1 = hilbert.fidelity(stage1_target(), psi1)
    f2 = hilbert.fidelity(hilbert.w_state_photonic(), traj2.final_state)
    leak = {k: max(a, b) for (k, a), b in zip(leakage(traj1).items(), leakage(traj2).values())}
    result = ProtocolResult(spec, mode, traj1, traj2, f1, f2, leak)
    if phases:
        from . import phases as ph

        result.ledger = ph.PhaseLedger.from_result(result)
        gate, _, fid = ph.phase_gate(traj2.final_state)
        result.gate = gate
        result.corrected_fidelity = fid
    return result
