"""Secular LGKS dissipators built from Bohr-frequency eigenoperators.

Superoperators act on row-major vectorised density matrices, ``vec(rho) =
rho.reshape(-1)``, for which ``vec(A rho B) = kron(A, B.T) @ vec(rho)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .models import BATHS, BathSpec, Eigensystem, SystemModel, eigendecompose

# relative tolerance for merging equal Bohr frequencies of one bath
FREQ_RTOL = 1e-9
# matrix elements of a contact operator below this are treated as absent
ELEMENT_ATOL = 1e-12


@dataclass(frozen=True, eq=False)
class BohrChannel:
    """One dissipative channel of bath ``bath`` at Bohr frequency ``omega > 0``.

    ``lowering`` is written in the construction basis. ``transitions`` lists the
    energy-basis dyads it is made of as ``(lower, upper, |<lower|S|upper>|**2)``.
    """

    bath: str
    omega: float
    lowering: np.ndarray
    rate_down: float
    rate_up: float
    transitions: tuple[tuple[int, int, float], ...] = field(default=())

    @property
    def is_single_dyad(self) -> bool:
        return len(self.transitions) == 1


@dataclass(frozen=True, eq=False)
class Liouvillian:
    dimension: int
    hamiltonian: np.ndarray
    dissipators: dict[str, np.ndarray]
    total: np.ndarray
    channels: dict[str, list[BohrChannel]]
    eigensystem: Eigensystem


def occupation(omega, T):
    """Bose-Einstein occupation ``1/(exp(omega/T) - 1)``."""
    return 1.0 / np.expm1(np.asarray(omega, dtype=float) / T)


def rate(bath: BathSpec, omega: float) -> tuple[float, float]:
    """Ohmic 3D rates ``(gamma w^3 (1+n) F, gamma w^3 n F)`` at ``omega > 0``.

    The pair is computed so that ``up/down == exp(-omega/T)`` up to rounding.
    """
    if not omega > 0:
        raise ValueError(f"rate needs a positive Bohr frequency, got {omega}")
    x = omega / bath.temperature
    F = float(bath.filter.transmission(omega))
    down = bath.gamma * omega**3 * F / -np.expm1(-x)
    up = down * np.exp(-x)
    return float(down), float(up)


def bohr_channels(model: SystemModel, bath: BathSpec, eig: Eigensystem | None = None) -> list[BohrChannel]:
    """Split the contact operator of ``bath`` into eigenoperators ``A_omega``.

    Transitions of the same bath whose frequencies agree within ``FREQ_RTOL``
    (relative to the largest frequency) are summed into one lowering operator.
    Zero-frequency parts carry no Ohmic weight and are dropped.
    """
    eig = eig if eig is not None else eigendecompose(model)
    E = eig.energies
    S = eig.to_energy_basis(model.contacts[bath.label])
    d = len(E)
    scale = max(E.max() - E.min(), 1.0)
    found = []  # (omega, lower, upper, element)
    for lo in range(d):
        for up in range(d):
            w = E[up] - E[lo]
            if w > FREQ_RTOL * scale and abs(S[lo, up]) > ELEMENT_ATOL:
                found.append((w, lo, up, S[lo, up]))
    found.sort(key=lambda t: (t[0], t[1], t[2]))

    groups: list[list[tuple]] = []
    for item in found:
        if groups and item[0] - groups[-1][0][0] < FREQ_RTOL * scale:
            groups[-1].append(item)
        else:
            groups.append([item])

    channels = []
    for grp in groups:
        omega = float(np.mean([t[0] for t in grp]))
        A = np.zeros((d, d), dtype=complex)
        for _, lo, up, el in grp:
            A[lo, up] = el
        down, upr = rate(bath, omega)
        trans = tuple((lo, up, float(abs(el) ** 2)) for _, lo, up, el in grp)
        channels.append(BohrChannel(bath.label, omega, eig.from_energy_basis(A), down, upr, trans))
    return channels


def _lindblad_superop(A: np.ndarray) -> np.ndarray:
    d = A.shape[0]
    eye = np.eye(d)
    AdA = A.conj().T @ A
    return np.kron(A, A.conj()) - 0.5 * (np.kron(AdA, eye) + np.kron(eye, AdA.T))


def commutator_superop(H: np.ndarray) -> np.ndarray:
    """Superoperator of ``rho -> -i[H, rho]``."""
    eye = np.eye(H.shape[0])
    return -1j * (np.kron(H, eye) - np.kron(eye, H.T))


def build_liouvillian(model: SystemModel, baths: dict[str, BathSpec]) -> Liouvillian:
    missing = set(BATHS) - set(baths)
    if missing:
        raise ValueError(f"missing bath specs for {sorted(missing)}")
    eig = eigendecompose(model)
    d = model.dimension
    dissipators = {}
    channels = {}
    for lab in BATHS:
        chans = bohr_channels(model, baths[lab], eig)
        L = np.zeros((d * d, d * d), dtype=complex)
        for ch in chans:
            A = ch.lowering
            if ch.rate_down:
                L += ch.rate_down * _lindblad_superop(A)
            if ch.rate_up:
                L += ch.rate_up * _lindblad_superop(A.conj().T)
        dissipators[lab] = L
        channels[lab] = chans
    total = commutator_superop(model.hamiltonian) + sum(dissipators.values())
    return Liouvillian(d, model.hamiltonian, dissipators, total, channels, eig)


def apply_dissipator(liouvillian: Liouvillian, bath_label: str, state: np.ndarray) -> np.ndarray:
    if bath_label not in liouvillian.dissipators:
        raise KeyError(f"unknown bath label {bath_label!r}")
    d = liouvillian.dimension
    return (liouvillian.dissipators[bath_label] @ np.asarray(state).reshape(-1)).reshape(d, d)


def apply_total(liouvillian: Liouvillian, state: np.ndarray) -> np.ndarray:
    d = liouvillian.dimension
    return (liouvillian.total @ np.asarray(state).reshape(-1)).reshape(d, d)


def channel_table(liouvillian: Liouvillian):
    """Rows ``(bath, omega, rate_down, rate_up)`` for every channel."""
    return [
        (lab, ch.omega, ch.rate_down, ch.rate_up)
        for lab in BATHS
        for ch in liouvillian.channels[lab]
    ]
