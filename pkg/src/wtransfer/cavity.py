"""Cavity realizations of the chirped couplings.

Two routes are covered. A rectangular cavity with one slowly moving mirror
gives linearly chirped mode frequencies, with couplings shaped by moving
the atoms along the mode profile. Alternatively a far-detuned chirped laser
pulse combines with a fixed cavity mode into a two-photon drive.

Units: c = 1, so wave numbers and frequencies share the drive-module unit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .drive import GaussianPulse, LinearChirp

VALIDITY_RATIO = 0.1
DISPERSIVE_RATIO = 10.0


class CavityValidityError(ValueError):
    """Mirror displacement too large for the slow-mirror formulas."""


@dataclass(frozen=True)
class ModeIndex:
    nx: int
    ny: int
    nz: int

    def __post_init__(self):
        if min(self.nx, self.ny, self.nz) < 1:
            raise ValueError("mode numbers must be positive integers")


@dataclass(frozen=True)
class RectangularCavity:
    """Box [0, Lx(t)] x [0, Ly] x [0, Lz] with Lx(t) = Lx0 + v t.

    ``duration`` is the time span over which the slow-mirror validity
    |v| T / Lx0 < 0.1 is enforced.
    """

    Lx0: float
    Ly: float
    Lz: float
    v: float = 0.0
    duration: float | None = None

    def __post_init__(self):
        if min(self.Lx0, self.Ly, self.Lz) <= 0:
            raise ValueError("cavity lengths must be positive")
        if self.duration is not None and abs(self.v) * self.duration / self.Lx0 >= VALIDITY_RATIO:
            raise CavityValidityError("mirror travel exceeds the slow-mirror regime")

    def Lx(self, t):
        return self.Lx0 + self.v * np.asarray(t, dtype=float)

    def check(self, t):
        if np.any(np.abs(self.v * np.asarray(t, dtype=float)) / self.Lx0 >= VALIDITY_RATIO):
            raise CavityValidityError("mirror displacement exceeds the slow-mirror regime")

    def wave_numbers(self, mode: ModeIndex, t=0.0):
        return (
            math.pi * mode.nx / self.Lx(t),
            math.pi * mode.ny / self.Ly,
            math.pi * mode.nz / self.Lz,
        )


def _k0(cav: RectangularCavity, mode: ModeIndex):
    kx, ky, kz = cav.wave_numbers(mode, 0.0)
    return kx, math.sqrt(kx**2 + ky**2 + kz**2)


def chirp_rate(cav: RectangularCavity, mode: ModeIndex) -> float:
    """Linear frequency slope -v kx0^2 / (Lx0 |k0|)."""
    kx, k = _k0(cav, mode)
    return -cav.v * kx**2 / (cav.Lx0 * k)


def mode_frequency(cav: RectangularCavity, mode: ModeIndex, t):
    """Instantaneous frequency |k0| (1 - t v kx0^2 / (Lx0 |k0|^2)) to first order in v t / Lx0."""
    cav.check(t)
    kx, k = _k0(cav, mode)
    out = k * (1 - np.asarray(t, dtype=float) * cav.v * kx**2 / (cav.Lx0 * k**2))
    return out if np.ndim(out) else float(out)


def exact_frequency(cav: RectangularCavity, mode: ModeIndex, t):
    """|k(t)| of the instantaneous box, for comparison with the linearized form."""
    kx, ky, kz = cav.wave_numbers(mode, t)
    return np.sqrt(kx**2 + ky**2 + kz**2)


def mode_profile(cav: RectangularCavity, mode: ModeIndex, position, t=0.0):
    """Normalized spatial factor sqrt(8/(Lx Ly Lz)) sin(kx x) sin(ky y) sin(kz z)."""
    cav.check(t)
    x, y, z = (np.asarray(c, dtype=float) for c in position)
    Lx = cav.Lx(t)
    tol = 1e-12 * max(float(np.max(Lx)), cav.Ly, cav.Lz)
    if (np.any(x < -tol) or np.any(x > Lx + tol) or np.any(y < -tol) or np.any(y > cav.Ly + tol)
            or np.any(z < -tol) or np.any(z > cav.Lz + tol)):
        raise ValueError("position outside the cavity")
    kx, ky, kz = cav.wave_numbers(mode, t)
    norm = np.sqrt(8 / (Lx * cav.Ly * cav.Lz))
    return norm * np.sin(kx * x) * np.sin(ky * y) * np.sin(kz * z)


def mode_function(cav: RectangularCavity, mode: ModeIndex, position, t=0.0):
    """Complex mode function exp(-i w t) u(r, t) / sqrt(2 w)."""
    w = mode_frequency(cav, mode, t)
    return np.exp(-1j * w * np.asarray(t, dtype=float)) * mode_profile(cav, mode, position, t) / np.sqrt(2 * w)


def coupling_from_trajectory(cav: RectangularCavity, mode: ModeIndex, times, path, dipole: float = 1.0):
    """g(t) = w(t)/sqrt(2) u(r(t), t) d along an atom path.

    ``path`` is an array of shape (3, n) or (n, 3) matching ``times``, or a
    callable t -> (x, y, z).
    """
    times = np.asarray(times, dtype=float)
    if callable(path):
        pos = path(times)
    else:
        pos = np.asarray(path, dtype=float)
        if pos.shape[0] != 3 and pos.shape[-1] == 3:
            pos = pos.T
    return mode_frequency(cav, mode, times) / np.sqrt(2) * mode_profile(cav, mode, pos, times) * dipole


def _amplitude(cav: RectangularCavity, mode: ModeIndex, t, y: float, z: float, dipole: float):
    # signed coupling at an x antinode
    _, ky, kz = cav.wave_numbers(mode, t)
    norm = np.sqrt(8 / (cav.Lx(t) * cav.Ly * cav.Lz))
    return mode_frequency(cav, mode, t) / np.sqrt(2) * norm * np.sin(ky * y) * np.sin(kz * z) * dipole


def max_coupling(cav: RectangularCavity, mode: ModeIndex, t, y: float, z: float, dipole: float = 1.0):
    """Largest |g| reachable by moving along x at fixed (y, z)."""
    return np.abs(_amplitude(cav, mode, t, y, z, dipole))


def required_position(target, cav: RectangularCavity, mode: ModeIndex, t, y: float, z: float,
                      dipole: float = 1.0, previous=None):
    """x(t) with coupling_from_trajectory equal to ``target``.

    Every sine branch m gives x = (m pi + (-1)^m arcsin(r)) / kx. The branch
    closest to ``previous`` is chosen (m = 0 without a previous position).
    Arrays of times are solved sequentially so that the path stays
    continuous.
    """
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    g_arr = np.broadcast_to(np.asarray(target, dtype=float), t_arr.shape)
    out = np.empty_like(t_arr)
    prev = previous
    for k, (tk, gk) in enumerate(zip(t_arr, g_arr)):
        amp = float(_amplitude(cav, mode, tk, y, z, dipole))
        if amp == 0 or abs(gk) > abs(amp) * (1 + 1e-12):
            raise ValueError(f"target coupling {gk} exceeds the achievable maximum {abs(amp)}")
        r = float(np.clip(gk / amp, -1, 1))
        kx = cav.wave_numbers(mode, tk)[0]
        cands = np.array([(m * math.pi + (-1) ** m * math.asin(r)) / kx for m in range(mode.nx + 1)])
        cands = cands[(cands >= -1e-12) & (cands <= cav.Lx(tk) * (1 + 1e-12))]
        ref = (0.0 if r >= 0 else math.pi / kx) if prev is None else prev
        out[k] = max(float(cands[np.argmin(np.abs(cands - ref))]), 0.0)
        prev = out[k]
    return out if np.ndim(t) else float(out[0])


# ---------------------------------------------------------------------------
# two-photon drive


@dataclass(frozen=True)
class TwoPhotonDrive:
    """Chirped Gaussian laser pulse plus a cavity mode, far from one-photon resonance."""

    omega0: float
    center: float
    width: float
    chirp: LinearChirp
    g: float
    Delta: float

    def __post_init__(self):
        if abs(self.Delta) < DISPERSIVE_RATIO * max(abs(self.g), abs(self.omega0)):
            raise ValueError("two-photon drive needs |Delta| >= 10 max(|g|, Omega0)")

    @property
    def pulse(self) -> GaussianPulse:
        return GaussianPulse(self.omega0, self.center, self.width)


def effective_drive(d: TwoPhotonDrive, t):
    """(g_eff, Delta_eff) = (g Omega / Delta, alpha_Omega + (|g|^2 - |Omega|^2) / (2 Delta))."""
    omega = d.pulse(t)
    g_eff = d.g * omega / d.Delta
    delta_eff = d.chirp(t) + (abs(d.g) ** 2 - np.abs(omega) ** 2) / (2 * d.Delta)
    return g_eff, delta_eff


def drive_for_coupling(pulse: GaussianPulse, g: float, Delta: float, chirp: LinearChirp | None = None) -> TwoPhotonDrive:
    """Laser pulse whose two-photon coupling reproduces a Gaussian cavity coupling."""
    return TwoPhotonDrive(pulse.amplitude * Delta / g, pulse.center, pulse.width, chirp or LinearChirp(), g, Delta)


# ---------------------------------------------------------------------------
# design report


def design_report(cav: RectangularCavity, modes, pulses=None, times=None, y=None, z=None,
                  dipole: float = 1.0) -> dict:
    """Per-mode frequencies, chirp rates, coupling ranges and atom paths.

    ``pulses`` optionally maps each mode (by position) to a GaussianPulse
    target; paths are returned as (t, x) pairs on ``times``.
    """
    y = cav.Ly / 2 if y is None else y
    z = cav.Lz / 2 if z is None else z
    out = []
    for k, mode in enumerate(modes):
        entry = {
            "mode": [mode.nx, mode.ny, mode.nz],
            "omega0": mode_frequency(cav, mode, 0.0),
            "chirp_rate": chirp_rate(cav, mode),
            "g_range": [0.0, float(max_coupling(cav, mode, 0.0, y, z, dipole))],
        }
        if pulses is not None and times is not None and pulses[k] is not None:
            ts = np.asarray(times, dtype=float)
            target = pulses[k](ts)
            gmax = np.min(max_coupling(cav, mode, ts, y, z, dipole))
            if np.max(np.abs(target)) <= gmax:
                xs = required_position(target, cav, mode, ts, y, z, dipole)
                entry["path"] = [[float(a), float(b)] for a, b in zip(ts, xs)]
            else:
                entry["path"] = None
                entry["path_error"] = "target exceeds achievable coupling"
        out.append(entry)
    return {
        "cavity": {"Lx0": cav.Lx0, "Ly": cav.Ly, "Lz": cav.Lz, "v": cav.v, "duration": cav.duration},
        "modes": out,
    }
