"""Non-equilibrium steady states and their thermodynamics."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .lindblad import Liouvillian, build_liouvillian
from .models import BATHS, BathSpec, ModelKind, SystemModel


class SteadyStateError(RuntimeError):
    pass


class DegenerateSteadyState(SteadyStateError):
    """The Liouvillian has more than one stationary state."""

    def __init__(self, nullity: int):
        super().__init__(f"steady state is not unique (null space dimension {nullity})")
        self.nullity = nullity


NULL_RTOL = 1e-12
# currents below NOISE * current_scale are rounding noise of the linear solve
NOISE = 1e-13
PSD_CLIP = 1e-10


def null_space_dimension(liouvillian: Liouvillian, rtol: float = NULL_RTOL) -> int:
    s = np.linalg.svd(liouvillian.total, compute_uv=False)
    return int(np.sum(s <= rtol * s[0]))


def steady_state(liouvillian: Liouvillian, check_unique: bool = True) -> np.ndarray:
    """Solve ``L rho = 0`` with one equation traded for ``tr rho = 1``.

    Raises DegenerateSteadyState if the null space is larger than one and
    SteadyStateError if the solution misses the residual tolerance.
    """
    d = liouvillian.dimension
    L = liouvillian.total
    if check_unique:
        nullity = null_space_dimension(liouvillian)
        if nullity > 1:
            raise DegenerateSteadyState(nullity)
        if nullity == 0:
            raise SteadyStateError("Liouvillian has no null vector within tolerance")
    M = L.copy()
    M[0, :] = np.eye(d).reshape(-1)
    rhs = np.zeros(d * d, dtype=complex)
    rhs[0] = 1.0
    rho = np.linalg.solve(M, rhs).reshape(d, d)
    rho = 0.5 * (rho + rho.conj().T)
    w, v = np.linalg.eigh(rho)
    if w.min() < -PSD_CLIP:
        raise SteadyStateError(f"steady state has negative eigenvalue {w.min():.3e}")
    w = np.clip(w, 0.0, None)
    rho = (v * w) @ v.conj().T
    rho /= np.trace(rho).real
    scale = np.abs(L).max()
    resid = np.abs(L @ rho.reshape(-1)).max()
    if resid > 1e-10 * max(scale, 1.0):
        raise SteadyStateError(f"steady-state residual {resid:.3e} too large")
    return rho


def heat_currents(model: SystemModel, liouvillian: Liouvillian, state: np.ndarray) -> dict[str, float]:
    """``Q_alpha = tr(H L_alpha rho)``; positive means heat flowing into the system."""
    H = model.hamiltonian
    d = liouvillian.dimension
    out = {}
    for lab in BATHS:
        drho = (liouvillian.dissipators[lab] @ state.reshape(-1)).reshape(d, d)
        out[lab] = float(np.trace(H @ drho).real)
    return out


def entropy_rate(currents: dict[str, float], temperatures: dict[str, float]) -> float:
    return -sum(currents[a] / temperatures[a] for a in BATHS)


def _check_order(T_w, T_h, T_c):
    if not (T_w > T_h > T_c > 0):
        raise ValueError(f"need T_w > T_h > T_c > 0, got {T_w}, {T_h}, {T_c}")


def omega_c_rev(T_w: float, T_h: float, T_c: float, omega_h: float) -> float:
    """Cold frequency at which the three-level chiller is reversible."""
    if not (T_w >= T_h > T_c > 0):
        raise ValueError(f"need T_w >= T_h > T_c > 0, got {T_w}, {T_h}, {T_c}")
    return omega_h * T_c * (T_w - T_h) / (T_h * (T_w - T_c))


def carnot_cop(T_w: float, T_h: float, T_c: float) -> float:
    if math.isinf(T_w):
        if not T_h > T_c > 0:
            raise ValueError("need T_h > T_c > 0")
        return T_c / (T_h - T_c)
    _check_order(T_w, T_h, T_c)
    return T_c * (T_w - T_h) / (T_w * (T_h - T_c))


def cop(currents: dict[str, float], atol: float = 0.0) -> float | None:
    """``Q_c/Q_w`` when the work bath feeds the device, otherwise None."""
    if currents["w"] > atol:
        return currents["c"] / currents["w"]
    return None


def _tau(omega, p_upper, p_lower):
    if p_upper <= 0 or p_lower <= 0:
        return None
    r = math.log(p_upper / p_lower)
    if r == 0.0:
        return math.inf
    return -omega / r


def internal_temperatures(kind: ModelKind | str, populations, params: dict[str, float]) -> dict[str, float | None]:
    """Transition temperatures from population ratios in the energy basis.

    Three-level models give ``w, h, c``; the four-level model gives
    ``w+, h+, c+`` from ``{p1, p3, p4}`` and ``w-, h-, c-`` from ``{p1, p2, p4}``.
    A ratio involving a non-positive population yields None. Other kinds, and
    four-level instances with ``g >= omega_c`` (level order inverted), return an
    empty map.
    """
    kind = ModelKind(kind)
    p = [float(x) for x in populations]
    wc, wh = params["omega_c"], params["omega_h"]
    if kind in (ModelKind.THREE_LEVEL, ModelKind.THREE_LEVEL_SHORTED):
        return {
            "w": _tau(wh - wc, p[2], p[1]),
            "h": _tau(wh, p[2], p[0]),
            "c": _tau(wc, p[1], p[0]),
        }
    if kind is ModelKind.FOUR_LEVEL and params["g"] < wc:
        g = params["g"]
        ww = wh - wc
        return {
            "w+": _tau(ww - g, p[3], p[2]),
            "h+": _tau(wh, p[3], p[0]),
            "c+": _tau(wc + g, p[2], p[0]),
            "w-": _tau(ww + g, p[3], p[1]),
            "h-": _tau(wh, p[3], p[0]),
            "c-": _tau(wc - g, p[1], p[0]),
        }
    return {}


@dataclass(frozen=True, eq=False)
class SteadyReport:
    state: np.ndarray
    populations: np.ndarray
    currents: dict[str, float]
    entropy_rate: float
    cop: float | None
    cooling: bool
    internal_temps: dict[str, float | None]
    temperatures: dict[str, float]
    residual: float
    # sum of rate_down * omega over channels; currents below ~1e-13 of it are rounding noise
    current_scale: float = 1.0

    @property
    def currents_vanish(self) -> bool:
        """All currents are below the rounding floor of the solve."""
        return max(abs(v) for v in self.currents.values()) <= NOISE * self.current_scale

    def conservation_error(self) -> float:
        """``|sum Q| / max |Q|``; 0 when the currents vanish to working precision."""
        if self.currents_vanish:
            return 0.0
        return abs(sum(self.currents.values())) / max(abs(v) for v in self.currents.values())

    def to_json(self) -> dict:
        return {
            "state": [[[float(z.real), float(z.imag)] for z in row] for row in self.state],
            "populations": [float(x) for x in self.populations],
            "currents": {k: float(v) for k, v in self.currents.items()},
            "entropy_rate": float(self.entropy_rate),
            "cop": self.cop,
            "cooling": bool(self.cooling),
            "internal_temps": self.internal_temps,
            "temperatures": dict(self.temperatures),
            "residual": float(self.residual),
            "current_scale": float(self.current_scale),
        }


def solve(model: SystemModel, baths: dict[str, BathSpec], liouvillian: Liouvillian | None = None) -> SteadyReport:
    """Steady state plus every derived observable for one device instance."""
    L = liouvillian if liouvillian is not None else build_liouvillian(model, baths)
    rho = steady_state(L)
    eig = L.eigensystem
    pops = np.real(np.diag(eig.to_energy_basis(rho)))
    currents = heat_currents(model, L, rho)
    temps = {a: baths[a].temperature for a in BATHS}
    scale = sum(ch.rate_down * ch.omega for chans in L.channels.values() for ch in chans)
    return SteadyReport(
        state=rho,
        populations=pops,
        currents=currents,
        entropy_rate=entropy_rate(currents, temps),
        cop=cop(currents, atol=NOISE * scale),
        cooling=currents["c"] > NOISE * scale,
        internal_temps=internal_temperatures(model.kind, pops, model.params),
        temperatures=temps,
        residual=float(np.abs(L.total @ rho.reshape(-1)).max()),
        current_scale=float(scale),
    )
