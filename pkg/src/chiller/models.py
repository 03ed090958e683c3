"""Device Hamiltonians, bath contact operators and spectral filters.

Units: hbar = k_B = 1, energies and temperatures in the same frequency unit.

Construction bases (fixed, so serialized states are unambiguous):

* three-level models: ``|1>, |2>, |3>``
* four-level models: ``|a>, |b>, |c>, |d>``
* three-qubit model: lexicographic ``|n_w n_h n_c>``, i.e. index ``4*n_w + 2*n_h + n_c``
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping

import numpy as np

BATHS = ("w", "h", "c")


class ModelKind(str, Enum):
    THREE_LEVEL = "ThreeLevel"
    THREE_LEVEL_SHORTED = "ThreeLevelShorted"
    FOUR_LEVEL = "FourLevel"
    FOUR_LEVEL_PRIME = "FourLevelPrime"
    FOUR_LEVEL_DOUBLE_PRIME = "FourLevelDoublePrime"
    THREE_QUBIT = "ThreeQubit"


# ---------------------------------------------------------------------------
# spectral filters
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Flat:
    """No modification of the Ohmic spectrum."""

    def transmission(self, omega):
        return np.ones_like(np.asarray(omega, dtype=float))


@dataclass(frozen=True)
class HighCutoff:
    """Sharp high-frequency cutoff, transmission ``Theta(omega_max - |omega|)``.

    Frequencies exactly at the cutoff are transmitted.
    """

    omega_max: float

    def __post_init__(self):
        if not self.omega_max > 0:
            raise ValueError(f"omega_max must be positive, got {self.omega_max}")

    def transmission(self, omega):
        w = np.abs(np.asarray(omega, dtype=float))
        return np.where(w <= self.omega_max, 1.0, 0.0)


@dataclass(frozen=True)
class Lorentzian:
    """Symmetric Lorentzian filter in ``|omega|``, equal to 1 at ``center``."""

    center: float
    width: float

    def __post_init__(self):
        if not self.center > 0 or not self.width > 0:
            raise ValueError("Lorentzian center and width must be positive")

    def transmission(self, omega):
        w = np.abs(np.asarray(omega, dtype=float))
        return self.width**2 / ((w - self.center) ** 2 + self.width**2)


SpectralFilter = Flat | HighCutoff | Lorentzian


@dataclass(frozen=True)
class BathSpec:
    """One bosonic reservoir: temperature, dissipation scale and filter."""

    label: str
    temperature: float
    gamma: float = 1e-3
    filter: SpectralFilter = field(default_factory=Flat)

    def __post_init__(self):
        if self.label not in BATHS:
            raise ValueError(f"unknown bath label {self.label!r}; expected one of {BATHS}")
        if not self.temperature > 0:
            raise ValueError(f"bath {self.label}: temperature must be positive")
        if not self.gamma > 0:
            raise ValueError(f"bath {self.label}: gamma must be positive")


def make_baths(T_w, T_h, T_c, gamma=1e-3, filters: Mapping[str, SpectralFilter] | None = None):
    """Convenience constructor for the usual work/hot/cold triple."""
    filters = dict(filters or {})
    temps = {"w": T_w, "h": T_h, "c": T_c}
    return {lab: BathSpec(lab, temps[lab], gamma, filters.get(lab, Flat())) for lab in BATHS}


# ---------------------------------------------------------------------------
# models
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SystemModel:
    kind: ModelKind
    hamiltonian: np.ndarray
    contacts: dict[str, np.ndarray]
    params: dict[str, float]

    @property
    def dimension(self) -> int:
        return self.hamiltonian.shape[0]


@dataclass(frozen=True, eq=False)
class Eigensystem:
    """Ascending ``energies`` and unitary ``basis`` (columns are eigenvectors)."""

    energies: np.ndarray
    basis: np.ndarray

    def to_energy_basis(self, op: np.ndarray) -> np.ndarray:
        return self.basis.conj().T @ op @ self.basis

    def from_energy_basis(self, op: np.ndarray) -> np.ndarray:
        return self.basis @ op @ self.basis.conj().T


def _dyad(n, i, j):
    out = np.zeros((n, n), dtype=complex)
    out[i, j] = 1.0
    return out


def _link(n, i, j):
    """|i><j| + h.c."""
    return _dyad(n, i, j) + _dyad(n, j, i)


def _check_frequencies(omega_c, omega_h):
    if not (omega_c > 0 and omega_h > 0):
        raise ValueError("frequencies must be positive")
    if not omega_c < omega_h:
        raise ValueError(f"need omega_c < omega_h, got omega_c={omega_c}, omega_h={omega_h}")


def _check_coupling(omega_c, omega_h, g, allow_inverted=False):
    if g < 0:
        raise ValueError(f"g must be non-negative, got {g}")
    if g >= omega_c and not allow_inverted:
        raise ValueError(f"need g < omega_c (eigenvalue ordering), got g={g}, omega_c={omega_c}")
    if omega_c + g >= omega_h:
        raise ValueError("need omega_c + g < omega_h")
    if g > omega_h / 10:
        warnings.warn(f"g={g} is not small compared with omega_h={omega_h}", stacklevel=3)


def build_three_level(omega_c: float, omega_h: float) -> SystemModel:
    _check_frequencies(omega_c, omega_h)
    H = np.diag([0.0, omega_c, omega_h]).astype(complex)
    contacts = {"c": _link(3, 0, 1), "h": _link(3, 0, 2), "w": _link(3, 1, 2)}
    return SystemModel(ModelKind.THREE_LEVEL, H, contacts, {"omega_c": omega_c, "omega_h": omega_h})


def build_three_level_shorted(omega_c: float, omega_h: float, kappa: float) -> SystemModel:
    """Three-level chiller whose cold bath also touches the work transition.

    ``kappa`` scales the parasitic ``|2><3| + h.c.`` term in the cold contact.
    """
    if not 0.0 <= kappa <= 1.0:
        raise ValueError(f"kappa must lie in [0, 1], got {kappa}")
    base = build_three_level(omega_c, omega_h)
    contacts = dict(base.contacts)
    contacts["c"] = _link(3, 0, 1) + kappa * _link(3, 1, 2)
    return SystemModel(
        ModelKind.THREE_LEVEL_SHORTED,
        base.hamiltonian,
        contacts,
        {"omega_c": omega_c, "omega_h": omega_h, "kappa": kappa},
    )


def build_four_level(omega_c: float, omega_h: float, g: float, allow_inverted: bool = False) -> SystemModel:
    """Four-level chiller; basis ``a, b, c, d`` with ``b <-> c`` hybridised by ``g``.

    Eigenstates are ``|a>``, ``(|b> - |c>)/sqrt 2``, ``(|b> + |c>)/sqrt 2``, ``|d>``
    at energies ``0, omega_c - g, omega_c + g, omega_h``.

    ``g >= omega_c`` is rejected unless ``allow_inverted``; the Hamiltonian is
    still physical there but ``(|b> - |c>)/sqrt 2`` drops to (or below) the
    ground level, so the stage decomposition and level labels no longer apply.
    Characteristic-curve sweeps use it to follow the curve down to small
    ``omega_c``.
    """
    _check_frequencies(omega_c, omega_h)
    _check_coupling(omega_c, omega_h, g, allow_inverted)
    a, b, c, d = range(4)
    H = omega_c * (_dyad(4, b, b) + _dyad(4, c, c)) + omega_h * _dyad(4, d, d) + g * _link(4, b, c)
    contacts = {"c": _link(4, a, b), "h": _link(4, a, d), "w": _link(4, c, d)}
    return SystemModel(ModelKind.FOUR_LEVEL, H, contacts, {"omega_c": omega_c, "omega_h": omega_h, "g": g})


def build_four_level_prime(omega_c: float, omega_h: float, g: float, allow_inverted: bool = False) -> SystemModel:
    """Variant whose hot level is split; the parasitic flow goes work -> hot."""
    _check_frequencies(omega_c, omega_h)
    _check_coupling(omega_c, omega_h, g, allow_inverted)
    a, b, c, d = range(4)
    H = omega_c * _dyad(4, b, b) + omega_h * (_dyad(4, c, c) + _dyad(4, d, d)) + g * _link(4, c, d)
    contacts = {"c": _link(4, a, b), "h": _link(4, a, d), "w": _link(4, b, c)}
    return SystemModel(
        ModelKind.FOUR_LEVEL_PRIME, H, contacts, {"omega_c": omega_c, "omega_h": omega_h, "g": g}
    )


def build_four_level_double_prime(omega_c: float, omega_h: float, g: float, allow_inverted: bool = False) -> SystemModel:
    """Variant whose ground level is split; the parasitic flow goes hot -> cold."""
    _check_frequencies(omega_c, omega_h)
    _check_coupling(omega_c, omega_h, g, allow_inverted)
    a, b, c, d = range(4)
    H = omega_c * _dyad(4, c, c) + omega_h * _dyad(4, d, d) + g * _link(4, a, b)
    contacts = {"c": _link(4, b, c), "h": _link(4, a, d), "w": _link(4, c, d)}
    return SystemModel(
        ModelKind.FOUR_LEVEL_DOUBLE_PRIME, H, contacts, {"omega_c": omega_c, "omega_h": omega_h, "g": g}
    )


_SX = np.array([[0, 1], [1, 0]], dtype=complex)
_N = np.array([[0, 0], [0, 1]], dtype=complex)
_I2 = np.eye(2, dtype=complex)


def _on_qubit(op, pos):
    ops = [_I2, _I2, _I2]
    ops[pos] = op
    return np.kron(np.kron(ops[0], ops[1]), ops[2])


def build_three_qubit(omega_c: float, omega_h: float, g: float) -> SystemModel:
    """Three interacting qubits on H_w (x) H_h (x) H_c with omega_w = omega_h - omega_c."""
    _check_frequencies(omega_c, omega_h)
    if g < 0:
        raise ValueError(f"g must be non-negative, got {g}")
    omega_w = omega_h - omega_c
    H = omega_w * _on_qubit(_N, 0) + omega_h * _on_qubit(_N, 1) + omega_c * _on_qubit(_N, 2)
    # |1_w 0_h 1_c> = index 5, |0_w 1_h 0_c> = index 2
    H = H + g * _link(8, 5, 2)
    gaps = np.diff(np.unique(np.round(np.diag(H).real, 12)))
    if g > 0 and g >= gaps.min():
        warnings.warn(f"g={g} reaches the smallest Bohr gap {gaps.min()}", stacklevel=2)
    contacts = {lab: _on_qubit(_SX, pos) for pos, lab in enumerate(BATHS)}
    return SystemModel(
        ModelKind.THREE_QUBIT,
        H,
        contacts,
        {"omega_c": omega_c, "omega_h": omega_h, "g": g, "omega_w": omega_w},
    )


def build_model(
    kind: ModelKind | str,
    omega_c: float,
    omega_h: float,
    g: float = 0.0,
    kappa: float = 0.0,
    allow_inverted: bool = False,
):
    """Dispatch on ``kind``; parameters a given family does not use are ignored."""
    kind = ModelKind(kind)
    if kind is ModelKind.THREE_LEVEL:
        return build_three_level(omega_c, omega_h)
    if kind is ModelKind.THREE_LEVEL_SHORTED:
        return build_three_level_shorted(omega_c, omega_h, kappa)
    if kind is ModelKind.FOUR_LEVEL:
        return build_four_level(omega_c, omega_h, g, allow_inverted)
    if kind is ModelKind.FOUR_LEVEL_PRIME:
        return build_four_level_prime(omega_c, omega_h, g, allow_inverted)
    if kind is ModelKind.FOUR_LEVEL_DOUBLE_PRIME:
        return build_four_level_double_prime(omega_c, omega_h, g, allow_inverted)
    return build_three_qubit(omega_c, omega_h, g)


def eigendecompose(model: SystemModel) -> Eigensystem:
    """Exact diagonalisation; each eigenvector's first dominant entry is made real positive."""
    energies, basis = np.linalg.eigh(model.hamiltonian)
    for k in range(basis.shape[1]):
        col = basis[:, k]
        mags = np.abs(col)
        lead = int(np.argmax(mags > mags.max() - 1e-12))
        basis[:, k] = col * (abs(col[lead]) / col[lead])
    return Eigensystem(np.asarray(energies, dtype=float), basis)
