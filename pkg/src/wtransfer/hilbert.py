"""Seventeen-state atom-cavity basis, operators and W states.

States carry a total of two excitations shared between Rydberg atoms and
three cavity modes. Labels serialize as ``"rrg|000"`` (atoms, pipe, Fock).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import product

import numpy as np

N_ATOMS = 3
N_MODES = 3
MAX_PHOTONS = 2

# r sorts before g so that |rrg> is the first basis state
_ATOM_ORDER = {"r": 0, "g": 1}

# |ggg,002> is never reached from the W states by the stage couplings and is
# not part of the model space
_EXCLUDED_FOCK = {(0, 0, 2)}


@dataclass(frozen=True)
class AtomConfig:
    """Ground/Rydberg labels of atoms 1, 2, 3."""

    labels: tuple[str, str, str]

    def __post_init__(self):
        if len(self.labels) != N_ATOMS or any(s not in ("g", "r") for s in self.labels):
            raise ValueError(f"invalid atom configuration {self.labels!r}")

    @classmethod
    def parse(cls, text: str) -> "AtomConfig":
        return cls(tuple(text))

    @property
    def n_rydberg(self) -> int:
        return sum(s == "r" for s in self.labels)

    def __str__(self):
        return "".join(self.labels)


@dataclass(frozen=True)
class FockConfig:
    """Photon numbers of modes 1, 2, 3."""

    photons: tuple[int, int, int]

    def __post_init__(self):
        if len(self.photons) != N_MODES:
            raise ValueError(f"invalid Fock configuration {self.photons!r}")
        if any(n < 0 or n > MAX_PHOTONS for n in self.photons) or sum(self.photons) > MAX_PHOTONS:
            raise ValueError(f"Fock configuration {self.photons!r} outside the two-photon cutoff")

    @classmethod
    def parse(cls, text: str) -> "FockConfig":
        return cls(tuple(int(c) for c in text))

    @property
    def total(self) -> int:
        return sum(self.photons)

    def __str__(self):
        return "".join(str(n) for n in self.photons)


@dataclass(frozen=True)
class BasisState:
    atoms: AtomConfig
    fock: FockConfig
    manifold: str
    index: int

    @property
    def label(self) -> str:
        return f"{self.atoms}|{self.fock}"

    def __str__(self):
        return self.label


def _atom_key(atoms):
    return tuple(_ATOM_ORDER[s] for s in atoms)


def _fock_key(photons):
    # pair states before doubly occupied ones, higher modes first within each
    return (max(photons), tuple(-n for n in photons))


@lru_cache(maxsize=None)
def build_basis() -> tuple[BasisState, ...]:
    """Return the 17 basis states in canonical order.

    The order is the 0P block, then 1P, then 2P. Within a block states are
    sorted by atom labels (r before g) and then by Fock labels, with the
    one-photon-pair states ahead of the doubly occupied ones.
    """
    entries = []
    for atoms in product("rg", repeat=N_ATOMS):
        n_r = sum(s == "r" for s in atoms)
        for photons in product(range(MAX_PHOTONS + 1), repeat=N_MODES):
            if n_r + sum(photons) == 2 and photons not in _EXCLUDED_FOCK:
                entries.append((sum(photons), _atom_key(atoms), _fock_key(photons), atoms, photons))
    entries.sort(key=lambda e: e[:3])
    return tuple(
        BasisState(AtomConfig(atoms), FockConfig(photons), f"{n}P", k)
        for k, (n, _, _, atoms, photons) in enumerate(entries)
    )


BASIS = build_basis()
DIM = len(BASIS)
LABELS = tuple(s.label for s in BASIS)
_INDEX = {label: k for k, label in enumerate(LABELS)}


def index_of(label: str) -> int:
    """Canonical index of a state label such as ``"ggg|110"``."""
    try:
        return _INDEX[label]
    except KeyError:
        raise KeyError(f"unknown basis label {label!r}") from None


def indices(labels) -> list[int]:
    return [index_of(label) for label in labels]


def manifold_indices(manifold: str) -> list[int]:
    return [s.index for s in BASIS if s.manifold == manifold]


def rydberg_shift(atoms: AtomConfig | str, V1: float, V2: float) -> float:
    """Rydberg interaction energy n1*V1 + n2*V2 of an atom configuration.

    n1 counts nearest-neighbour rr pairs (1-2, 2-3), n2 the pair 1-3.
    """
    if isinstance(atoms, str):
        atoms = AtomConfig.parse(atoms)
    r = [s == "r" for s in atoms.labels]
    n1 = int(r[0] and r[1]) + int(r[1] and r[2])
    n2 = int(r[0] and r[2])
    return n1 * V1 + n2 * V2


def state_vector(amplitudes: dict[str, complex]) -> np.ndarray:
    """Build a 17-component state from a ``{label: amplitude}`` mapping."""
    psi = np.zeros(DIM, dtype=complex)
    for label, amp in amplitudes.items():
        psi[index_of(label)] = amp
    return psi


def w_state_atomic() -> np.ndarray:
    """Rydberg W state (|rrg> + |rgr> + |grr>)/sqrt(3) with the cavity in vacuum."""
    a = 1 / np.sqrt(3)
    return state_vector({"rrg|000": a, "rgr|000": a, "grr|000": a})


def w_state_photonic() -> np.ndarray:
    """Photonic W state |ggg>(|110> + |101> + |011>)/sqrt(3)."""
    a = 1 / np.sqrt(3)
    return state_vector({"ggg|110": a, "ggg|101": a, "ggg|011": a})


def fidelity(a, b) -> float:
    """Overlap |<a|b>|^2 of two normalized states."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"incompatible state spaces {a.shape} and {b.shape}")
    return float(min(1.0, abs(np.vdot(a, b)) ** 2))


def populations(psi) -> dict[str, float]:
    return {label: float(abs(c) ** 2) for label, c in zip(LABELS, psi)}


# ---------------------------------------------------------------------------
# operators on the truncated product space, projected onto the basis

_PRODUCT_STATES = [
    (atoms, photons)
    for atoms in product("gr", repeat=N_ATOMS)
    for photons in product(range(MAX_PHOTONS + 1), repeat=N_MODES)
]
_PRODUCT_INDEX = {s: k for k, s in enumerate(_PRODUCT_STATES)}
_EMBED = np.zeros((len(_PRODUCT_STATES), DIM))
for _s in BASIS:
    _EMBED[_PRODUCT_INDEX[(_s.atoms.labels, _s.fock.photons)], _s.index] = 1.0


def _product_operator(rule) -> np.ndarray:
    n = len(_PRODUCT_STATES)
    op = np.zeros((n, n))
    for j, (atoms, photons) in enumerate(_PRODUCT_STATES):
        out = rule(list(atoms), list(photons))
        if out is None:
            continue
        amp, atoms2, photons2 = out
        i = _PRODUCT_INDEX.get((tuple(atoms2), tuple(photons2)))
        if i is not None:
            op[i, j] += amp
    return op


def sigma_plus(atom: int) -> np.ndarray:
    """Raising operator |r><g| of atom 1..3 on the product space."""

    def rule(atoms, photons):
        if atoms[atom - 1] != "g":
            return None
        atoms[atom - 1] = "r"
        return 1.0, atoms, photons

    return _product_operator(rule)


def annihilation(mode: int) -> np.ndarray:
    """Photon annihilation operator of mode 1..3 on the product space."""

    def rule(atoms, photons):
        n = photons[mode - 1]
        if n == 0:
            return None
        photons[mode - 1] = n - 1
        return np.sqrt(n), atoms, photons

    return _product_operator(rule)


def rydberg_projector(atom: int) -> np.ndarray:
    s = sigma_plus(atom)
    return s @ s.T


def project(op: np.ndarray) -> np.ndarray:
    """Restrict a product-space operator to the 17-state basis."""
    return _EMBED.T @ op @ _EMBED


def exchange_operator(atom: int, mode: int) -> np.ndarray:
    """sigma_atom^+ a_mode restricted to the basis (excitation conserving)."""
    return project(sigma_plus(atom) @ annihilation(mode))


def number_operator(mode: int) -> np.ndarray:
    a = annihilation(mode)
    return project(a.T @ a)
