"""Coupling envelopes, chirped mode offsets and protocol presets.

All quantities are dimensionless with rates and frequencies in one unit and
time in its inverse. Schedules are evaluated on an absolute time axis; stage 1
starts at t = 0 and stage 2 at t2 = t1 + gap.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field

import numpy as np

PRESET_NAMES = ("adiabatic", "nonadiabatic")

# absolute time of each stage origin in units of its pulse width
_ORIGIN_WIDTHS = 5.0


@dataclass(frozen=True)
class GaussianPulse:
    """A exp(-(t - t_c)^2 / (2 tau^2))."""

    amplitude: float
    center: float
    width: float
    name: str = ""

    def __post_init__(self):
        if not self.width > 0:
            raise ValueError(f"pulse width must be positive, got {self.width}")

    def __call__(self, t):
        return self.amplitude * np.exp(-((np.asarray(t, dtype=float) - self.center) ** 2) / (2 * self.width**2))

    def at_complex(self, t):
        return self.amplitude * np.exp(-((t - self.center) ** 2) / (2 * self.width**2))


@dataclass(frozen=True)
class LinearChirp:
    """Frequency offset constant + rate * (t - offset).

    ``rate`` is the signed slope, so a preset line ``-alpha (t - t_alpha)``
    is stored with ``rate = -alpha``.
    """

    rate: float = 0.0
    offset: float = 0.0
    constant: float = 0.0

    def __call__(self, t):
        return self.constant + self.rate * (np.asarray(t, dtype=float) - self.offset)

    def integral(self, t0, t1):
        """Closed-form integral of the offset over [t0, t1]."""
        return self.constant * (t1 - t0) + 0.5 * self.rate * ((t1 - self.offset) ** 2 - (t0 - self.offset) ** 2)


@dataclass(frozen=True)
class DriveSchedule:
    """Couplings g_i(t), chirps w'_i(t) and one-photon detunings of one stage."""

    couplings: tuple[tuple[GaussianPulse, ...], tuple[GaussianPulse, ...], tuple[GaussianPulse, ...]]
    chirps: tuple[LinearChirp, LinearChirp, LinearChirp]
    window: tuple[float, float]
    detunings: tuple[float, float, float]
    origin: float = 0.0
    stage: int = 1

    def __post_init__(self):
        if not self.window[1] > self.window[0]:
            raise ValueError(f"empty stage window {self.window}")

    def coupling(self, mode: int, t):
        return eval_coupling(self, mode, t)

    def chirp(self, mode: int, t):
        return eval_chirp(self, mode, t)

    def pulses(self, mode: int, name: str | None = None):
        return tuple(p for p in self.couplings[mode - 1] if name is None or p.name == name)

    def couplings_at(self, t):
        return np.array([eval_coupling(self, m, t) for m in (1, 2, 3)])

    def chirps_at(self, t):
        return np.array([eval_chirp(self, m, t) for m in (1, 2, 3)])

    @property
    def duration(self) -> float:
        return self.window[1] - self.window[0]

    def peak_coupling(self) -> float:
        ts = np.linspace(*self.window, 4001)
        return float(max(np.max(eval_coupling(self, m, ts)) for m in (1, 2, 3)))


@dataclass(frozen=True)
class ProtocolSpec:
    """A complete two-stage transfer protocol."""

    kind: str
    stage1: DriveSchedule
    stage2: DriveSchedule
    V1: float
    V2: float
    V3: float
    V12: float
    D: float
    gap: float = 0.0
    include_offresonant: bool = False
    params: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        d1, d2, d3 = self.stage1.detunings
        if not (np.isclose(d2, -d1) and np.isclose(d3, -d1)):
            raise ValueError("stage 1 requires Delta2 = Delta3 = -Delta1")
        e1, e2, e3 = self.stage2.detunings
        if not np.isclose(e3, -e2):
            raise ValueError("stage 2 requires Delta3 = -Delta2")
        if self.stage2.window[0] < self.stage1.window[1]:
            raise ValueError("stage windows overlap")

    def schedule(self, stage: int) -> DriveSchedule:
        return self.stage1 if stage == 1 else self.stage2

    def stage_at(self, t: float) -> int:
        return 1 if t <= self.stage1.window[1] else 2

    @property
    def Delta(self) -> tuple[float, float, float]:
        return self.stage1.detunings

    def to_dict(self) -> dict:
        return copy.deepcopy(self.params)


def eval_coupling(schedule: DriveSchedule, mode: int, t):
    """Sum of the Gaussian terms of g_mode at t."""
    t = np.asarray(t, dtype=float)
    total = np.zeros_like(t)
    for pulse in schedule.couplings[mode - 1]:
        total = total + pulse(t)
    return total if total.ndim else float(total)


def eval_chirp(schedule: DriveSchedule, mode: int, t):
    """Frequency offset w'_mode(t) of the stage."""
    out = schedule.chirps[mode - 1](t)
    return out if np.ndim(out) else float(out)


def fstirap_convergence_offset(A_s, A_p2, t_s, tau_s, tau_p2) -> float:
    """Pump delay t_p2 = sqrt(|(t_s tau_s / tau_p2)^2 - 2 tau_p2^2 log|A_p2/A_s||)."""
    if A_s <= 0 or A_p2 <= 0:
        raise ValueError("amplitudes must be positive")
    return float(np.sqrt(abs((t_s * tau_s / tau_p2) ** 2 - 2 * tau_p2**2 * np.log(abs(A_p2 / A_s)))))


def overlap_center(t_p, t_s, tau_p, tau_s) -> float:
    """Centre (t_p tau_s^2 + t_s tau_p^2)/(tau_s^2 + tau_p^2) of a pulse-pair product."""
    return (t_p * tau_s**2 + t_s * tau_p**2) / (tau_s**2 + tau_p**2)


def crossing_alignment_offset(stokes: GaussianPulse, pump: GaussianPulse, Delta1, alpha0) -> float:
    """Chirp offset t_alpha placing the zero of the effective detuning at the overlap centre.

    ``stokes`` is the mode-1 pulse and ``pump`` the mode-3 pulse, both on the
    same time axis. The result is t_c + 3(|g3(t_c)|^2 - |g1(t_c)|^2)/(2 Delta1 alpha0).
    """
    if alpha0 == 0:
        raise ValueError("alignment undefined without a chirp (alpha0 = 0)")
    t_c = overlap_center(pump.center, stokes.center, pump.width, stokes.width)
    return float(t_c + 3 * (pump(t_c) ** 2 - stokes(t_c) ** 2) / (2 * Delta1 * alpha0))


# ---------------------------------------------------------------------------
# presets and configuration

_DEFAULTS = {
    "adiabatic": {
        "kind": "adiabatic",
        "V1": 1000.0,
        "V2": 500.0,
        "V3": None,
        "V12": None,
        "D": None,
        "gap": 0.0,
        "include_offresonant": False,
        "stage1": {
            "tau": 1000.0,
            "A_s1": 0.505,
            "A_s2": 0.505,
            "A_p1": 1.634,
            "A_p2": 0.505,
            "t_s1": 1000.0,
            "t_s2": 1000.0,
            "t_p1": 3000.0,
            "stirap_shift": 7500.0,
            "alpha0": 0.0,
            "t_alpha": 0.0,
            "Delta": 100.0,
            "duration": 20000.0,
        },
        "stage2": {
            "tau": 1000.0,
            "A_s": 1.677,
            "A_p": 1.25,
            "t_s": 1000.0,
            "alpha0": 0.0,
            "t_alpha": None,
            "Delta": 100.0,
            "duration": 10000.0,
        },
    },
    "nonadiabatic": {
        "kind": "nonadiabatic",
        "V1": 1000.0,
        "V2": 500.0,
        "V3": None,
        "V12": None,
        "D": None,
        "gap": 0.0,
        "include_offresonant": False,
        "stage1": {
            "tau_s": 1000.0,
            "tau_p1": 1000.0,
            "tau_p2": 1000.0,
            "A_s": 0.55,
            "A_p1": 0.925,
            "A_p2": 0.285,
            "t_s": 0.0,
            "t_p1": -336.7,
            "t_p2": 0.0,
            "t_alpha": 0.0,
            "alpha0": [2e-5, 2e-5, 2e-5],
            "Delta": 100.0,
            "duration": 10000.0,
        },
        "stage2": {
            "tau_s": 1000.0,
            "tau_p": 1000.0,
            "A_s": 0.983,
            "A_p": 1.03,
            "t_s": 0.0,
            "t_p": 2.0,
            "t_alpha": None,
            "alpha0": [2e-5, 2e-5],
            "Delta": 100.0,
            "duration": 10000.0,
        },
    },
}


def normalize_preset_name(name: str) -> str:
    key = name.lower().replace("-", "").replace("_", "")
    if key not in PRESET_NAMES:
        raise ValueError(f"unknown preset {name!r}; choose from {PRESET_NAMES}")
    return key


def default_params(name: str) -> dict:
    """Parameter tree of a named preset (a fresh copy)."""
    return copy.deepcopy(_DEFAULTS[normalize_preset_name(name)])


def set_dotted(params: dict, path: str, value):
    """Set ``params["stage1"]["A_p1"]`` from the path ``"stage1.A_p1"``."""
    keys = path.split(".")
    node = params
    for k in keys[:-1]:
        if k not in node or not isinstance(node[k], dict):
            raise KeyError(f"unknown configuration path {path!r}")
        node = node[k]
    if keys[-1] not in node:
        raise KeyError(f"unknown configuration path {path!r}")
    node[keys[-1]] = value
    return params


def get_dotted(params: dict, path: str):
    node = params
    for k in path.split("."):
        node = node[k]
    return node


def apply_overrides(params: dict, overrides: dict | None) -> dict:
    out = copy.deepcopy(params)
    for path, value in (overrides or {}).items():
        set_dotted(out, path, value)
    return out


def _merge(base: dict, update: dict) -> dict:
    for k, v in update.items():
        if k not in base:
            raise KeyError(f"unknown configuration key {k!r}")
        if isinstance(base[k], dict) and isinstance(v, dict):
            _merge(base[k], v)
        else:
            base[k] = v
    return base


def params_from_config(data: dict) -> dict:
    """Resolve a configuration mapping into a full parameter tree.

    Accepted keys are ``preset`` (or ``kind``), an optional nested ``params``
    tree and an optional flat ``overrides`` mapping of dotted paths.
    """
    name = data.get("preset", data.get("kind"))
    if name is None:
        raise KeyError("configuration needs a 'preset' or 'kind' entry")
    params = default_params(name)
    nested = {k: v for k, v in data.items() if k not in ("preset", "overrides", "params")}
    nested.pop("kind", None)
    _merge(params, nested)
    _merge(params, data.get("params", {}))
    return apply_overrides(params, data.get("overrides"))


def load_config(path) -> dict:
    with open(path) as fh:
        return params_from_config(json.load(fh))


def preset(name: str, overrides: dict | None = None) -> ProtocolSpec:
    """Build a named protocol, optionally with dotted-path overrides."""
    return build_protocol(apply_overrides(default_params(name), overrides))


def build_protocol(params: dict) -> ProtocolSpec:
    params = copy.deepcopy(params)
    kind = normalize_preset_name(params["kind"])
    V1, V2 = float(params["V1"]), float(params["V2"])
    V3 = V1 if params.get("V3") is None else float(params["V3"])
    V12 = V1 - V2 if params.get("V12") is None else float(params["V12"])
    if kind == "adiabatic":
        stage1 = _adiabatic_stage1(params["stage1"])
        t2 = stage1.window[1] + float(params.get("gap", 0.0))
        stage2 = _adiabatic_stage2(params["stage2"], t2, V2, V12)
    else:
        stage1 = _nonadiabatic_stage1(params["stage1"])
        t2 = stage1.window[1] + float(params.get("gap", 0.0))
        stage2 = _nonadiabatic_stage2(params["stage2"], t2)
    D = 50 * abs(stage2.detunings[1]) if params.get("D") is None else float(params["D"])
    stage2 = _with_parked_mode(stage2, D)
    return ProtocolSpec(
        kind=kind,
        stage1=stage1,
        stage2=stage2,
        V1=V1,
        V2=V2,
        V3=V3,
        V12=V12,
        D=D,
        gap=float(params.get("gap", 0.0)),
        include_offresonant=bool(params.get("include_offresonant", False)),
        params=params,
    )


def _with_parked_mode(schedule: DriveSchedule, D: float) -> DriveSchedule:
    chirps = (LinearChirp(constant=-D),) + schedule.chirps[1:]
    return DriveSchedule(schedule.couplings, chirps, schedule.window, schedule.detunings, schedule.origin, schedule.stage)


def _adiabatic_stage1(p: dict) -> DriveSchedule:
    tau = float(p["tau"])
    o = _ORIGIN_WIDTHS * tau
    shift = float(p["stirap_shift"])
    g1 = (
        GaussianPulse(p["A_s1"], o + shift + p["t_s1"], tau, "s1"),
        GaussianPulse(p["A_s2"], o - p["t_s2"], tau, "s2"),
        GaussianPulse(p["A_s2"], o + p["t_s2"], tau, "s2"),
    )
    g2 = (GaussianPulse(p["A_p1"], o + shift + p["t_p1"], tau, "p1"),)
    g3 = (GaussianPulse(p["A_p2"], o + p["t_s2"], tau, "p2"),)
    w1 = LinearChirp(rate=-float(p["alpha0"]), offset=o + float(p["t_alpha"]))
    w23 = LinearChirp(rate=float(p["alpha0"]), offset=o + float(p["t_alpha"]))
    d = float(p["Delta"])
    return DriveSchedule((g1, g2, g3), (w1, w23, w23), (0.0, float(p["duration"])), (-d, d, d), o, 1)


def _adiabatic_stage2(p: dict, t2: float, V2: float, V12: float) -> DriveSchedule:
    tau = float(p["tau"])
    o = t2 + _ORIGIN_WIDTHS * tau
    g2 = (GaussianPulse(p["A_s"], o - p["t_s"], tau, "s"),)
    g3 = (GaussianPulse(p["A_p"], o + p["t_s"], tau, "p"),)
    t_alpha = 0.0 if p.get("t_alpha") is None else float(p["t_alpha"])
    a = float(p["alpha0"])
    w3 = LinearChirp(rate=-a, offset=o + t_alpha)
    # mode 2 in its stage-2 frame: w'2 = -w'3 - (V12 - V2)
    w2 = LinearChirp(rate=a, offset=o + t_alpha, constant=-(V12 - V2))
    d = float(p["Delta"])
    return DriveSchedule(((), g2, g3), (LinearChirp(), w2, w3), (t2, t2 + float(p["duration"])), (0.0, -d, d), o, 2)


def _nonadiabatic_stage1(p: dict) -> DriveSchedule:
    tau_s = float(p["tau_s"])
    o = _ORIGIN_WIDTHS * tau_s
    g1 = (GaussianPulse(p["A_s"], o - p["t_s"], tau_s, "s"),)
    g2 = (GaussianPulse(p["A_p1"], o + p["t_p1"], float(p["tau_p1"]), "p1"),)
    g3 = (GaussianPulse(p["A_p2"], o + p["t_p2"], float(p["tau_p2"]), "p2"),)
    alphas = _per_mode(p["alpha0"], 3)
    chirps = tuple(LinearChirp(rate=-a, offset=o + float(p["t_alpha"])) for a in alphas)
    d = float(p["Delta"])
    return DriveSchedule((g1, g2, g3), chirps, (0.0, float(p["duration"])), (d, -d, -d), o, 1)


def _nonadiabatic_stage2(p: dict, t2: float) -> DriveSchedule:
    tau_s = float(p["tau_s"])
    o = t2 + _ORIGIN_WIDTHS * tau_s
    g2 = (GaussianPulse(p["A_s"], o - p["t_s"], tau_s, "s"),)
    g3 = (GaussianPulse(p["A_p"], o + p["t_p"], float(p["tau_p"]), "p"),)
    if p.get("t_alpha") is None:
        t_alpha = overlap_center(float(p["t_p"]), -float(p["t_s"]), float(p["tau_p"]), tau_s)
    else:
        t_alpha = float(p["t_alpha"])
    a2, a3 = _per_mode(p["alpha0"], 2)
    w2 = LinearChirp(rate=-a2, offset=o + t_alpha)
    w3 = LinearChirp(rate=a3, offset=o + t_alpha)
    d = float(p["Delta"])
    return DriveSchedule(((), g2, g3), (LinearChirp(), w2, w3), (t2, t2 + float(p["duration"])), (0.0, d, -d), o, 2)


def _per_mode(value, n):
    if np.ndim(value) == 0:
        return [float(value)] * n
    if len(value) != n:
        raise ValueError(f"expected {n} chirp rates, got {value!r}")
    return [float(v) for v in value]
