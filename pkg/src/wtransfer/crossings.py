"""Avoided-crossing analysis of two-level (or bright-pair) Hamiltonians.

Conventions: a real symmetric pair [[c0 - D, G], [G, c0 + D]] has gap
A = sqrt(D^2 + G^2), mixing angle phi = atan2(G, D)/2 and adiabatic states
w- = (cos phi, -sin phi), w+ = (sin phi, cos phi) with energies c0 -/+ A.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import hamiltonian as ham
from .drive import ProtocolSpec

_INV_E = math.exp(-1.0)


def mixing_angle(delta, g):
    """Mixing angle phi = atan2(|g|, delta)/2 in [0, pi/2]."""
    delta = np.asarray(delta, dtype=float)
    g = np.abs(np.asarray(g, dtype=float))
    if np.any((delta == 0) & (g == 0)):
        raise ValueError("mixing angle undefined for zero detuning and coupling")
    out = 0.5 * np.arctan2(g, delta)
    return out if out.ndim else float(out)


@dataclass
class TwoLevelParams:
    """Detuning D(t) and coupling G(t) of a pair, with derived A and phi."""

    times: np.ndarray
    delta: np.ndarray
    coupling: np.ndarray
    centre: np.ndarray | None = None

    @classmethod
    def from_matrices(cls, times, H) -> "TwoLevelParams":
        H = np.real(np.asarray(H))
        return cls(np.asarray(times), (H[:, 1, 1] - H[:, 0, 0]) / 2, H[:, 0, 1], (H[:, 0, 0] + H[:, 1, 1]) / 2)

    @property
    def gap(self) -> np.ndarray:
        return np.hypot(self.delta, self.coupling)

    @property
    def phi(self) -> np.ndarray:
        return 0.5 * np.unwrap(np.arctan2(self.coupling, self.delta))

    def curves(self) -> "DiabaticAdiabaticCurves":
        A = self.gap
        c2 = np.cos(2 * self.phi)
        return DiabaticAdiabaticCurves(self.times, -A * c2, A * c2, A, -A)

    def zeta(self) -> np.ndarray:
        return adiabaticity(self.times, self.gap, self.phi)


@dataclass
class DiabaticAdiabaticCurves:
    times: np.ndarray
    D1: np.ndarray
    D2: np.ndarray
    E_plus: np.ndarray
    E_minus: np.ndarray


def adiabaticity(ts, A, phi) -> np.ndarray:
    """zeta = |phidot / (2A)| by centred differences."""
    A = np.asarray(A, dtype=float)
    if np.any(A == 0):
        raise ValueError("vanishing gap on the grid (true crossing)")
    return np.abs(np.gradient(np.asarray(phi, dtype=float), np.asarray(ts, dtype=float)) / (2 * A))


# ---------------------------------------------------------------------------
# closed-form probability


@dataclass(frozen=True)
class LZResult:
    probability: float
    C: float | None
    valid: bool | None


def lz_probability(A_pump, A_stokes, Delta1, alpha0, tau_p=None) -> LZResult:
    """Landau-Zener probability exp(-2 pi (2 A_p A_s / Delta1)^2 / alpha0).

    With ``tau_p`` the expansion parameter C = sqrt(8) A_p A_s / (Delta1 alpha0 tau_p)
    is returned with the validity flag 2 C^2 <= 0.05.
    """
    if not alpha0 > 0:
        raise ValueError("sweep rate alpha0 must be positive")
    P = math.exp(-2 * math.pi * (2 * A_pump * A_stokes / Delta1) ** 2 / alpha0)
    if tau_p is None:
        return LZResult(P, None, None)
    C = abs(math.sqrt(8) * A_pump * A_stokes / (Delta1 * alpha0 * tau_p))
    return LZResult(P, C, 2 * C**2 <= 0.05)


# ---------------------------------------------------------------------------
# Lambert W


def lambert_w(x, branch: int = 0, tol: float = 1e-15, maxiter: int = 100):
    """Lambert W on branch 0 or -1 by Halley iteration.

    Real arguments inside the branch domain give real results; anything else
    is evaluated in complex arithmetic.
    """
    if branch not in (0, -1):
        raise ValueError("only branches 0 and -1 are available")
    is_real = np.isrealobj(x) and ((branch == 0 and x >= -_INV_E) or (branch == -1 and -_INV_E <= x < 0))
    z = complex(x)
    if z == 0:
        if branch == 0:
            return 0.0 if is_real else 0j
        return -math.inf
    if abs(z + _INV_E) < 1e-15:
        return -1.0 if is_real else complex(-1.0)
    # seeds: branch-point series, origin series or logarithmic asymptotics
    p = np.sqrt(2 * (math.e * z + 1) + 0j)
    if abs(z + _INV_E) < 0.3:
        w = -1 + p - p**2 / 3 + 11 * p**3 / 72 if branch == 0 else -1 - p - p**2 / 3 - 11 * p**3 / 72
    elif branch == 0 and abs(z) < 0.5:
        w = z - z**2 + 1.5 * z**3
    elif branch == 0 and abs(z) < 3 and abs(1 + z) > 0.5:
        w = np.log(1 + z)
    elif branch == -1 and is_real:
        L1 = math.log(-z.real)
        L2 = math.log(-L1)
        w = complex(L1 - L2 + L2 / L1)
    else:
        L1 = np.log(z) if branch == 0 else np.log(z) - 2j * math.pi
        L2 = np.log(L1)
        w = L1 - L2 + L2 / L1
    for _ in range(maxiter):
        ew = np.exp(w)
        f = w * ew - z
        wp1 = w + 1
        denom = ew * wp1 - (w + 2) * f / (2 * wp1)
        step = f / denom
        w = w - step
        if abs(step) <= tol * (1 + abs(w)):
            break
    else:
        raise RuntimeError(f"Lambert W did not converge for x={x}")
    if is_real:
        return float(w.real)
    return complex(w)


# ---------------------------------------------------------------------------
# complex-time model and Dykhne formula


@dataclass(frozen=True)
class TurningPoint:
    z0: complex
    branch: int
    C: float
    higher_branches: bool


def turning_point(C: float, z_alpha: float = 0.0, width_ratio: float = 1.0) -> TurningPoint:
    """Principal turning point of C exp((1 + r^2) z^2 / 2) = z + i z_alpha.

    In the scaled variable z = (t - t_c)/(i tau) the root is
    sqrt(-W0(-(1 + r^2) C^2)/(1 + r^2)) - i z_alpha, which reduces to
    sqrt(-W0(-2 C^2)/2) for equal widths. The flag marks (1 + r^2) C^2 >= 1/e, where
    the principal branch no longer separates from the others.
    """
    if not C > 0:
        raise ValueError("C must be positive")
    k = 1 + width_ratio**2
    arg = -k * C**2
    w = lambert_w(arg, 0)
    z = np.sqrt(-complex(w) / k)
    return TurningPoint(complex(z - 1j * z_alpha), 0, float(C), bool(k * C**2 >= _INV_E * (1 - 1e-12)))


@dataclass(frozen=True)
class CrossingModel:
    """Scaled complex-time gap A(z) = i alpha0 tau^2 sqrt(A1^2 - A2^2).

    A1 = C exp((1 + r^2) z^2 / 2) exp(i k_s z) is the continued coupling and
    A2 = z + i z_alpha + stark(z) the continued detuning; ``stark`` is an
    optional callable giving the Stark part in the same scaled units.
    """

    C: float
    alpha0: float
    tau: float
    z_alpha: float = 0.0
    width_ratio: float = 1.0
    k_s: float = 0.0
    stark: object = None

    def A1(self, z):
        return self.C * np.exp((1 + self.width_ratio**2) * z**2 / 2) * np.exp(1j * self.k_s * z)

    def A2(self, z):
        out = z + 1j * self.z_alpha
        if self.stark is not None:
            out = out + self.stark(z)
        return out

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        return 1j * self.alpha0 * self.tau**2 * np.sqrt(self.A1(z) ** 2 - self.A2(z) ** 2)

    def turning_point(self) -> TurningPoint:
        tp = turning_point(self.C, self.z_alpha, self.width_ratio)
        f = lambda z: self.A1(z) - self.A2(z)
        z = tp.z0 if self.k_s == 0 and self.stark is None else _newton(f, tp.z0)
        return TurningPoint(_polish(f, z), 0, tp.C, tp.higher_branches)


def _newton(f, z, tol=1e-12, maxiter=100, h=1e-6):
    for _ in range(maxiter):
        fz = f(z)
        df = (f(z + h) - f(z - h)) / (2 * h)
        step = fz / df
        z = z - step
        if abs(step) < tol * max(1.0, abs(z)):
            return complex(z)
    raise RuntimeError("turning-point refinement did not converge")


def _polish(f, z, max_ulps=8):
    """Walk the real and imaginary parts of a root by single ulps while |f| drops.

    The gap is a square root of f, so the last ulps of the root decide its residual.
    """
    z = complex(z)
    best = abs(f(z))
    for _ in range(max_ulps):
        improved = False
        for cand in _ulp_neighbours(z):
            r = abs(f(cand))
            if r < best:
                z, best, improved = cand, r, True
        if not improved or best == 0:
            break
    return z


def _ulp_neighbours(z):
    for part in ("re", "im"):
        x = z.real if part == "re" else z.imag
        for direction in (-math.inf, math.inf):
            y = float(np.nextafter(x, direction))
            yield complex(y, z.imag) if part == "re" else complex(z.real, y)


def _gauss_segment(A, a, b, n):
    x, w = np.polynomial.legendre.leggauss(n)
    z = 0.5 * (b - a) * x + 0.5 * (a + b)
    return 0.5 * (b - a) * np.sum(w * A(z))


def _contour_integral(A, z0, start, time_axis, n):
    z0 = complex(z0)
    start = complex(start)
    d = z0 - start
    corner = start + (1j * d.imag if time_axis == "imag" else d.real)
    total = 0j
    # the endpoint is a square-root branch point: substitute to regularize
    for a, b in ((start, corner), (corner, z0)):
        if b == a:
            continue
        if b == z0:
            total += _sqrt_endpoint(A, a, b, n)
        else:
            total += _gauss_segment(A, a, b, n)
    return total


def _sqrt_endpoint(A, a, b, n):
    # z = b - (b - a) s^2 removes the sqrt(b - z) singularity at s = 0
    x, w = np.polynomial.legendre.leggauss(n)
    s = 0.5 * (x + 1)
    z = b - (b - a) * s**2
    return np.sum(0.5 * w * A(z) * 2 * s * (b - a))


def dykhne_probability(A, z0, start=0.0, time_axis: str = "imag", n: int = 200, tol: float = 1e-4) -> float:
    """Dykhne probability exp(-2 Im int 2A dz) up to the turning point z0.

    The contour first runs along the real-time direction from ``start`` (the
    imaginary direction for the scaled variable z, the real direction for
    physical time) and then straight to z0. The exponent is taken positive
    so that the result lies in [0, 1].
    """
    if time_axis not in ("imag", "real"):
        raise ValueError("time_axis must be 'imag' or 'real'")
    I1 = _contour_integral(A, z0, start, time_axis, n)
    I2 = _contour_integral(A, z0, start, time_axis, 2 * n)
    P1 = math.exp(-2 * abs((2 * I1).imag))
    P2 = math.exp(-2 * abs((2 * I2).imag))
    if abs(P1 - P2) > tol:
        raise RuntimeError(f"contour quadrature not converged ({P1} vs {P2})")
    return P2


def elliptic_probability(A, z0) -> float:
    """Quarter-ellipse estimate exp(-pi Im A(i Im z0) Re z0)."""
    z0 = complex(z0)
    return math.exp(-math.pi * abs(complex(A(1j * z0.imag)).imag * z0.real))


# ---------------------------------------------------------------------------
# adiabatic impulse approximation


@dataclass(frozen=True)
class TransferMatrix:
    """N = [[R e^{-i phi_S}, -T], [T, R e^{i phi_S}]] in the basis (w-, w+)."""

    R: float
    T: float
    phi_S: float

    def __post_init__(self):
        if self.R < 0 or self.T < 0:
            raise ValueError("R and T must be non-negative")
        if abs(self.R**2 + self.T**2 - 1) > 1e-10:
            raise ValueError("R^2 + T^2 must equal 1")

    @classmethod
    def from_probability(cls, P: float, phi_S: float = 0.0) -> "TransferMatrix":
        return cls(math.sqrt(1 - P), math.sqrt(P), phi_S)

    @property
    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.R * np.exp(-1j * self.phi_S), -self.T], [self.T, self.R * np.exp(1j * self.phi_S)]]
        )


def adiabatic_propagator(eta: float) -> np.ndarray:
    """Adiabatic evolution diag(e^{i eta}, e^{-i eta}) in (w-, w+), eta = int A dt."""
    return np.diag([np.exp(1j * eta), np.exp(-1j * eta)])


def _check_unitary(U, name):
    U = np.asarray(U)
    if U.shape != (2, 2) or np.max(np.abs(U.conj().T @ U - np.eye(2))) > 1e-10:
        raise ValueError(f"{name} is not a 2x2 unitary")


def aia_compose(U_minus, N, U_plus) -> np.ndarray:
    """Evolution U+ N U- across one crossing."""
    Nm = N.matrix if isinstance(N, TransferMatrix) else np.asarray(N)
    for U, name in ((U_minus, "U-"), (Nm, "N"), (U_plus, "U+")):
        _check_unitary(U, name)
    return np.asarray(U_plus) @ Nm @ np.asarray(U_minus)


def fit_transfer_matrix(U, eta_minus: float, eta_plus: float) -> tuple[TransferMatrix, float]:
    """Least-squares (R, T, phi_S) reproducing a propagated 2x2 evolution.

    U is expressed in the adiabatic basis (w-, w+) of the start and end
    times. The global phase and the gauge of the adiabatic vectors are
    projected out before fitting. Returns the matrix and the residual norm.
    """
    from scipy.optimize import least_squares

    U = np.asarray(U, dtype=complex)
    N = np.linalg.inv(adiabatic_propagator(eta_plus)) @ U @ np.linalg.inv(adiabatic_propagator(eta_minus))
    N = N / np.sqrt(np.linalg.det(N))
    # off-diagonal phases are gauge; fold them away with a diagonal rotation
    chi = 0.5 * (np.angle(N[1, 0]) - np.angle(-N[0, 1])) if abs(N[1, 0]) > 1e-14 else 0.0
    gauge = np.diag([np.exp(0.5j * chi), np.exp(-0.5j * chi)])
    N = gauge @ N @ gauge.conj()

    def residual(p):
        theta, phi = p
        M = TransferMatrix(abs(math.cos(theta)), abs(math.sin(theta)), phi).matrix
        d = (M - N).ravel()
        return np.concatenate([d.real, d.imag])

    theta0 = math.atan2(abs(N[1, 0]), abs(N[0, 0]))
    phi0 = 0.5 * (np.angle(N[1, 1]) - np.angle(N[0, 0]))
    sol = least_squares(residual, [theta0, phi0])
    theta, phi = sol.x
    tm = TransferMatrix(abs(math.cos(theta)), abs(math.sin(theta)), float(np.angle(np.exp(1j * phi))))
    return tm, float(np.linalg.norm(sol.fun))


# ---------------------------------------------------------------------------
# crossings of the protocol


def pair_matrices(spec: ProtocolSpec, sid: str, ts) -> np.ndarray:
    """Real 2x2 pair Hamiltonian (bright pair for the three-level subsystems)."""
    stage = ham.SUBSYSTEM_STAGE[sid]
    H = ham.effective_matrix(spec, sid, ts, stage)
    if H.shape[-1] == 2:
        return H
    out = np.empty(H.shape[:-2] + (2, 2))
    out[..., 0, 0] = H[..., 0, 0] + H[..., 0, 1]
    out[..., 1, 1] = H[..., 2, 2]
    out[..., 0, 1] = out[..., 1, 0] = np.sqrt(2) * H[..., 0, 2]
    return out


def complex_pair_terms(spec: ProtocolSpec, sid: str, t):
    """Half-detuning D(t) and coupling G(t) of a pair continued to complex t."""
    stage = ham.SUBSYSTEM_STAGE[sid]
    sched = spec.schedule(stage)
    t = np.asarray(t, dtype=complex)
    g = [sum((p.at_complex(t) for p in sched.couplings[m]), np.zeros_like(t)) for m in range(3)]
    w = [ch.constant + ch.rate * (t - ch.offset) for ch in sched.chirps]
    d1, d2, d3 = sched.detunings
    if sid == "S11":
        a = -w[1] - 2 * g[1] ** 2 / d2
        b = w[0] + d1 + d2 + 3 * g[0] ** 2 / d1
        return (b - a) / 2, -2 * g[0] * g[1] / d2
    if sid == "S12":
        a = -w[2] - 2 * g[2] ** 2 / d3
        x = -g[2] ** 2 / d3
        b = w[0] + d1 + d3 + 3 * g[0] ** 2 / d1
        return (b - a - x) / 2, np.sqrt(2) * (-2 * g[0] * g[2] / d3)
    if sid == "S22":
        a = -w[2] - 2 * g[2] ** 2 / d3
        x = -g[2] ** 2 / d3
        b = w[1] + d2 + d3 + 3 * g[1] ** 2 / d2
        return (b - a - x) / 2, np.sqrt(2) * (-2 * g[1] * g[2] / d3)
    raise ValueError(f"subsystem {sid} has no crossing")


def propagate_pair(ts_window, H_of_t, psi0, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Propagate a pair and return (sample times, states)."""
    from .propagate import TimeGrid, evolve

    grid = TimeGrid(ts_window[0], ts_window[1], dt, dt)
    traj = evolve(H_of_t, psi0, grid, labels=("0", "1"))
    return traj.times, traj.states


def propagated_probability(spec: ProtocolSpec, sid: str, dt: float = 2.0) -> float:
    """Probability of leaving the initial adiabatic branch of the pair."""
    stage = ham.SUBSYSTEM_STAGE[sid]
    window = spec.schedule(stage).window
    ts, states = propagate_pair(window, lambda t: pair_matrices(spec, sid, t), np.array([1.0, 0.0]), dt)
    params = TwoLevelParams.from_matrices(ts, pair_matrices(spec, sid, ts))
    phi = params.phi
    vm = np.array([np.cos(phi[0]), -np.sin(phi[0])])
    vp = np.array([np.sin(phi[0]), np.cos(phi[0])])
    start_plus = abs(vp[0]) > abs(vm[0])
    end = np.array([np.sin(phi[-1]), np.cos(phi[-1])]) if start_plus else np.array([np.cos(phi[-1]), -np.sin(phi[-1])])
    return float(1 - abs(end @ states[-1]) ** 2)


def find_turning_point(spec: ProtocolSpec, sid: str, t_cross: float, seed_width: float) -> complex:
    """Upper-half-plane zero of D^2 + G^2 nearest the real crossing."""

    def make(sign):
        def f(t):
            D, G = complex_pair_terms(spec, sid, t)
            return complex(D + sign * 1j * G)

        return f

    D, G = complex_pair_terms(spec, sid, t_cross + 0j)
    slope = (complex_pair_terms(spec, sid, t_cross + 1.0)[0] - complex_pair_terms(spec, sid, t_cross - 1.0)[0]) / 2
    guess = t_cross + 1j * abs(complex(G) / complex(slope))
    roots = []
    for sign in (1, -1):
        try:
            roots.append(_newton(make(sign), guess, h=1e-3 * seed_width))
        except (RuntimeError, ZeroDivisionError, OverflowError):
            continue
    roots = [r for r in roots if r.imag > 0]
    if not roots:
        raise RuntimeError("no turning point found in the upper half-plane")
    return min(roots, key=lambda r: abs(r - guess))


@dataclass
class CrossingReport:
    subsystem: str
    crossing_time: float | None
    gap_min: float
    zeta_max: float
    P_LZ: float | None
    P_Dykhne: float | None
    P_propagated: float
    flags: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "subsystem": self.subsystem,
            "crossing_time": self.crossing_time,
            "gap_min": self.gap_min,
            "zeta_max": self.zeta_max,
            "P_LZ": self.P_LZ,
            "P_Dykhne": self.P_Dykhne,
            "P_propagated": self.P_propagated,
            "flags": self.flags,
        }


def crossing_report(spec: ProtocolSpec, sid: str, dt: float = 2.0, n_samples: int = 20001) -> CrossingReport:
    """Gap, adiabaticity and the three transition probabilities of one pair."""
    stage = ham.SUBSYSTEM_STAGE[sid]
    sched = spec.schedule(stage)
    ts = np.linspace(*sched.window, n_samples)
    params = TwoLevelParams.from_matrices(ts, pair_matrices(spec, sid, ts))
    A = params.gap
    zeta = params.zeta()
    flags = {}
    D = params.delta
    # a sample landing exactly on the crossing counts once
    crossing = np.nonzero(((D[:-1] <= 0) & (D[1:] > 0)) | ((D[:-1] >= 0) & (D[1:] < 0)))[0]
    coupled = A > 1e-12 * np.max(A)
    P_prop = propagated_probability(spec, sid, dt)
    if len(crossing) == 0 or not np.any(coupled):
        flags["no_crossing"] = True
        return CrossingReport(sid, None, float(2 * np.min(A)), float(np.max(zeta)), None, None, P_prop, flags)
    # the relevant crossing is where the coupling is largest
    k = max(crossing, key=lambda i: abs(params.coupling[i]))
    t_c = float(ts[k] - D[k] * (ts[k + 1] - ts[k]) / (D[k + 1] - D[k]))
    _, G_c = complex_pair_terms(spec, sid, t_c)
    slope = float(np.gradient(D, ts)[k])
    P_LZ = math.exp(-math.pi * abs(complex(G_c)) ** 2 / abs(slope)) if slope != 0 else None
    flags["multiple_crossings"] = len(crossing) > 1
    P_D = None
    try:
        width = min(p.width for m in range(3) for p in sched.couplings[m])
        t_star = find_turning_point(spec, sid, t_c, width)

        def A_t(t):
            Dz, Gz = complex_pair_terms(spec, sid, t)
            return np.sqrt(Dz**2 + Gz**2)

        P_D = dykhne_probability(A_t, t_star, start=t_star.real, time_axis="real")
    except RuntimeError as exc:
        flags["dykhne_error"] = str(exc)
    return CrossingReport(sid, t_c, float(2 * np.min(A)), float(np.max(zeta)), P_LZ, P_D, P_prop, flags)
