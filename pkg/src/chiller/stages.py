"""Stage decomposition of the four-level chiller and graph diagnosis of any model.

The four-level currents split exactly into two detuned endoreversible stages
plus a work-to-cold leak stage:

* ``plus`` carries quanta ``(omega_c + g)`` (cold), ``omega_w - g`` (work), ``omega_h`` (hot)
  on eigenstates ``{1, 3, 4}`` and cools for ``0 < omega_c < omega_c_rev - g``;
* ``minus`` carries ``(omega_c - g)``, ``omega_w + g``, ``omega_h`` on ``{1, 2, 4}`` and
  cools for ``g < omega_c < omega_c_rev + g``;
* ``leak`` moves ``g`` per event between the work and cold baths.

Rates are the bare Ohmic rates ``Gamma_{alpha, +-omega}`` without matrix-element
factors; the hybridised cold/work transitions carry weight 1/2 and that is
absorbed in the normalisation ``D`` (the hot row of its matrix is doubled).
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .lindblad import bohr_channels, rate
from .models import BATHS, BathSpec, ModelKind, SystemModel, build_four_level, eigendecompose
from .thermo import omega_c_rev as _omega_c_rev
from .thermo import NOISE, solve

STAGES = ("plus", "minus", "leak")

# Which printed bracket feeds which stage. The bracket printed for the plus
# rate is the cycle through |2> (quanta omega_c - g); only the swapped
# assignment reproduces the total currents, see verify_breakdown.
PAIRING_NOTE = (
    "plus stage (omega_c+g, omega_w-g) uses the C1/C2 imbalance bracket with the "
    "|2> exit-rate prefactor; minus stage (omega_c-g, omega_w+g) uses the C3/C4 bracket "
    "with the |3> exit-rate prefactor"
)


@dataclass(frozen=True)
class FourLevelRates:
    """Bare rates of the six four-level channels; ``dn`` = emission, ``up`` = absorption.

    ``c_hi``/``c_lo``: cold at ``omega_c +- g``; ``w_hi``/``w_lo``: work at
    ``omega_w +- g``; ``h``: hot at ``omega_h``.
    """

    c_hi_dn: float
    c_hi_up: float
    c_lo_dn: float
    c_lo_up: float
    w_hi_dn: float
    w_hi_up: float
    w_lo_dn: float
    w_lo_up: float
    h_dn: float
    h_up: float

    @classmethod
    def from_baths(cls, omega_c, omega_h, g, baths: dict[str, BathSpec]) -> "FourLevelRates":
        ww = omega_h - omega_c
        c_hi = rate(baths["c"], omega_c + g)
        c_lo = rate(baths["c"], omega_c - g)
        w_hi = rate(baths["w"], ww + g)
        w_lo = rate(baths["w"], ww - g)
        h = rate(baths["h"], omega_h)
        return cls(*c_hi, *c_lo, *w_hi, *w_lo, *h)


def printed_matrix(r: FourLevelRates) -> np.ndarray:
    """Matrix whose determinant defines ``D`` (normalisation row first)."""
    return np.array(
        [
            [2.0, 2.0, 2.0, 2.0],
            [r.c_lo_up, -(r.c_lo_dn + r.w_hi_up), 0.0, r.w_hi_dn],
            [r.c_hi_up, 0.0, -(r.c_hi_dn + r.w_lo_up), r.w_lo_dn],
            [2 * r.h_up, r.w_hi_up, r.w_lo_up, -2 * r.h_dn - r.w_hi_dn - r.w_lo_dn],
        ]
    )


def rate_matrix(r: FourLevelRates) -> np.ndarray:
    """Population generator ``W`` (``dp/dt = W p``) on eigenstates 1..4.

    Cold and work transitions carry the matrix-element weight 1/2.
    """
    k = {  # (from, to): rate
        (0, 1): r.c_lo_up / 2, (1, 0): r.c_lo_dn / 2,
        (0, 2): r.c_hi_up / 2, (2, 0): r.c_hi_dn / 2,
        (1, 3): r.w_hi_up / 2, (3, 1): r.w_hi_dn / 2,
        (2, 3): r.w_lo_up / 2, (3, 2): r.w_lo_dn / 2,
        (0, 3): r.h_up, (3, 0): r.h_dn,
    }  # fmt: skip
    W = np.zeros((4, 4))
    for (i, j), v in k.items():
        W[j, i] += v
        W[i, i] -= v
    return W


def spanning_tree_sum(W: np.ndarray) -> float:
    """Sum over rooted spanning trees of the rate graph.

    Trees are enumerated explicitly (each non-root state picks one outgoing
    edge) so every term is a product of positive rates. The matrix-tree
    determinant would lose tiny rates absorbed into the diagonal.
    """
    n = W.shape[0]
    total = 0.0
    for root in range(n):
        others = [i for i in range(n) if i != root]
        choices = [[j for j in range(n) if j != i and W[j, i] > 0] for i in others]
        for parents in itertools.product(*choices):
            parent = dict(zip(others, parents))
            if all(_reaches(i, root, parent) for i in others):
                total += math.prod(W[parent[i], i] for i in others)
    return float(total)


def _reaches(i, root, parent):
    seen = set()
    while i != root:
        if i in seen:
            return False
        seen.add(i)
        i = parent[i]
    return True


def classical_steady_state(r: FourLevelRates) -> np.ndarray:
    W = rate_matrix(r)
    A = W.copy()
    A[0, :] = 1.0
    b = np.zeros(4)
    b[0] = 1.0
    return np.linalg.solve(A, b)


@dataclass(frozen=True)
class StageRates:
    i_plus: float
    i_minus: float
    i_leak: float
    d_norm: float


def stage_rates(r: FourLevelRates, atol: float = 0.0) -> StageRates:
    # D = 8 * (sum of rooted spanning trees), cross-checked against the determinant
    D = 8.0 * spanning_tree_sum(rate_matrix(r))
    if not D > atol:
        raise ValueError(f"normalisation D={D:.3e} is not positive; decomposition undefined")
    D_printed = -0.5 * np.linalg.det(printed_matrix(r))
    if abs(D - D_printed) > 1e-9 * D:
        raise AssertionError(f"printed determinant {D_printed} disagrees with tree sum {D}")
    c1_minus_c2 = r.c_hi_up * r.w_lo_up * r.h_dn - r.c_hi_dn * r.w_lo_dn * r.h_up
    c3_minus_c4 = r.c_lo_up * r.w_hi_up * r.h_dn - r.c_lo_dn * r.w_hi_dn * r.h_up
    i_plus = (r.c_lo_dn + r.w_hi_up) / D * c1_minus_c2
    i_minus = (r.c_hi_dn + r.w_lo_up) / D * c3_minus_c4
    i_leak = (r.c_hi_up * r.c_lo_dn * r.w_hi_dn * r.w_lo_up - r.c_hi_dn * r.c_lo_up * r.w_hi_up * r.w_lo_dn) / D
    return StageRates(float(i_plus), float(i_minus), float(i_leak), float(D))


def stage_quanta(omega_c, omega_h, g) -> dict[str, dict[str, float]]:
    """Energy drawn from each bath per unit of stage rate."""
    ww = omega_h - omega_c
    return {
        "plus": {"w": ww - g, "h": -omega_h, "c": omega_c + g},
        "minus": {"w": ww + g, "h": -omega_h, "c": omega_c - g},
        "leak": {"w": -g, "h": 0.0, "c": g},
    }


def cooling_windows(omega_c_rev: float, g: float):
    """Cooling intervals in ``omega_c`` for the plus and minus stages.

    Returns ``({"plus": (lo, hi) | None, "minus": (lo, hi)}, plus_lost)``;
    ``plus_lost`` flags that the plus stage cannot cool at any ``omega_c``.
    """
    if not omega_c_rev > 0:
        raise ValueError("omega_c_rev must be positive")
    if g < 0:
        raise ValueError("g must be non-negative")
    plus = (0.0, omega_c_rev - g) if g < omega_c_rev else None
    minus = (g, omega_c_rev + g)
    return {"plus": plus, "minus": minus}, plus is None


@dataclass(frozen=True)
class StageBreakdown:
    omega_c: float
    omega_h: float
    g: float
    i_plus: float
    i_minus: float
    i_leak: float
    d_norm: float
    stage_currents: dict[tuple[str, str], float]
    stage_entropy: dict[str, float]
    windows: dict[str, tuple[float, float] | None]
    pairing: str = PAIRING_NOTE

    def total(self, bath: str) -> float:
        return sum(self.stage_currents[(s, bath)] for s in STAGES)


def breakdown(omega_c, omega_h, g, baths: dict[str, BathSpec]) -> StageBreakdown:
    r = FourLevelRates.from_baths(omega_c, omega_h, g, baths)
    sr = stage_rates(r)
    quanta = stage_quanta(omega_c, omega_h, g)
    rates = {"plus": sr.i_plus, "minus": sr.i_minus, "leak": sr.i_leak}
    currents = {(s, a): quanta[s][a] * rates[s] for s in STAGES for a in BATHS}
    temps = {a: baths[a].temperature for a in BATHS}
    entropy = {s: -sum(currents[(s, a)] / temps[a] for a in BATHS) for s in STAGES}
    try:
        wrev = _omega_c_rev(temps["w"], temps["h"], temps["c"], omega_h)
        windows, _ = cooling_windows(wrev, g)
    except ValueError:
        windows = {"plus": None, "minus": None}
    return StageBreakdown(
        omega_c, omega_h, g, sr.i_plus, sr.i_minus, sr.i_leak, sr.d_norm, currents, entropy, windows
    )


def stage_entropies(bd: StageBreakdown, temperatures: dict[str, float] | None = None):
    """``(dS_plus, dS_minus, dS_leak)``; recomputed if ``temperatures`` is given."""
    if temperatures is None:
        return tuple(bd.stage_entropy[s] for s in STAGES)
    return tuple(-sum(bd.stage_currents[(s, a)] / temperatures[a] for a in BATHS) for s in STAGES)


def imbalance_check(r: FourLevelRates) -> dict[str, bool]:
    """Which cooling cycle outruns its reverse: C1 vs C2 (plus), C3 vs C4 (minus)."""
    c1 = r.c_hi_up * r.w_lo_up * r.h_dn
    c2 = r.c_hi_dn * r.w_lo_dn * r.h_up
    c3 = r.c_lo_up * r.w_hi_up * r.h_dn
    c4 = r.c_lo_dn * r.w_hi_dn * r.h_up
    return {"plus_cools": c1 > c2, "minus_cools": c3 > c4}


class BreakdownViolation(AssertionError):
    pass


@dataclass
class BreakdownReport:
    rows: list[dict]
    max_identity_error: float
    max_printed_assignment_error: float
    pairing: str = PAIRING_NOTE


def verify_breakdown(omega_h, g, baths, omega_c_grid, rtol: float = 1e-10) -> BreakdownReport:
    """Check the stage sum against independent Liouvillian steady states.

    ``baths`` is a dict or a callable ``omega_c -> dict`` (for filters that
    track the work frequency). Raises BreakdownViolation at the first grid point
    whose identity error exceeds ``rtol`` relative to ``max |Q|``.
    """
    if not g > 0:
        raise ValueError(
            "the breakdown needs g > 0: at g = 0 the secular generator merges the "
            "degenerate cold and work channels and is not the g -> 0 limit"
        )
    rows = []
    worst = 0.0
    worst_printed = 0.0
    for wc in omega_c_grid:
        b = baths(wc) if callable(baths) else baths
        model = build_four_level(wc, omega_h, g)
        rep = solve(model, b)
        bd = breakdown(wc, omega_h, g, b)
        scale = max(abs(v) for v in rep.currents.values())
        if scale == 0.0:
            scale = 1.0
        err = max(abs(rep.currents[a] - bd.total(a)) for a in BATHS) / scale
        # the printed assignment attaches each bracket to the other stage's quanta
        q = stage_quanta(wc, omega_h, g)
        printed = {
            a: q["plus"][a] * bd.i_minus + q["minus"][a] * bd.i_plus + q["leak"][a] * bd.i_leak
            for a in BATHS
        }
        err_printed = max(abs(rep.currents[a] - printed[a]) for a in BATHS) / scale
        if err > rtol:
            raise BreakdownViolation(f"identity error {err:.3e} at omega_c={wc}")
        worst = max(worst, err)
        worst_printed = max(worst_printed, err_printed)
        inside = {
            s: (bd.windows[s] is not None and bd.windows[s][0] < wc < bd.windows[s][1])
            for s in ("plus", "minus")
        }
        rows.append(
            {
                "omega_c": wc,
                "identity_error": err,
                "i_plus": bd.i_plus,
                "i_minus": bd.i_minus,
                "i_leak": bd.i_leak,
                "currents": rep.currents,
                "stage_currents": bd.stage_currents,
                "stage_entropy": bd.stage_entropy,
                "inside_window": inside,
                "sign_consistent": {
                    s: (bd.stage_currents[(s, "c")] > 0) == inside[s]
                    for s in ("plus", "minus")
                    if abs(bd.stage_currents[(s, "c")]) > NOISE * rep.current_scale
                },
            }
        )
    return BreakdownReport(rows, worst, worst_printed)


# ---------------------------------------------------------------------------
# graph diagnosis
# ---------------------------------------------------------------------------

_CONFIG_BY_SHARED_BATH = {
    "h": ModelKind.FOUR_LEVEL.value,
    "c": ModelKind.FOUR_LEVEL_PRIME.value,
    "w": ModelKind.FOUR_LEVEL_DOUBLE_PRIME.value,
}


@dataclass(frozen=True)
class Transition:
    index: int
    bath: str
    omega: float
    lower: int
    upper: int


@dataclass(frozen=True)
class Stage:
    """A closed three-level cycle using one transition of each bath."""

    transitions: tuple[int, int, int]  # work, hot, cold transition indices
    states: tuple[int, int, int]
    frequencies: dict[str, float] = field(hash=False, compare=False)


@dataclass(frozen=True)
class StagePair:
    stages: tuple[int, int]
    shared_bath: str
    shared_transition: int
    configuration: str
    leak: tuple[str, str]
    detuning: float


@dataclass
class DiagnosisReport:
    transitions: list[Transition]
    n_channels: int
    per_bath_frequencies: dict[str, list[float]]
    stages: list[Stage]
    stage_pairs: list[StagePair]
    units: list[StagePair]
    short_circuits: list[tuple[int, int]]
    leak_directions: set[tuple[str, str]]
    dangling: list[int]

    @property
    def endoreversible(self) -> bool:
        return not self.stage_pairs and not self.short_circuits

    def to_json(self) -> dict:
        return {
            "transitions": [
                {"bath": t.bath, "omega": t.omega, "lower": t.lower + 1, "upper": t.upper + 1}
                for t in self.transitions
            ],
            "n_transitions": len(self.transitions),
            "n_channels": self.n_channels,
            "per_bath_frequencies": self.per_bath_frequencies,
            "three_level_stages": [
                {"states": [s + 1 for s in st.states], "frequencies": st.frequencies}
                for st in self.stages
            ],
            "stage_pairs": [_pair_json(p) for p in self.stage_pairs],
            "irreversible_units": [_pair_json(p) for p in self.units],
            "short_circuits": [list(sc) for sc in self.short_circuits],
            "leak_directions": sorted(f"{a}->{b}" for a, b in self.leak_directions),
            "dangling_transitions": self.dangling,
            "endoreversible": self.endoreversible,
            "state_labels": "energy eigenstates numbered 1..d in ascending energy",
        }


def _pair_json(p: StagePair) -> dict:
    return {
        "stages": list(p.stages),
        "shared_bath": p.shared_bath,
        "configuration": p.configuration,
        "leak": f"{p.leak[0]}->{p.leak[1]}",
    }


def _leak_direction(a, b, temps):
    return (a, b) if temps[a] >= temps[b] else (b, a)


def diagnose(model: SystemModel, baths: dict[str, BathSpec]) -> DiagnosisReport:
    """Find three-level stages, pair them off and predict leak directions.

    Only the transition graph is used, no steady state. Channels whose rates
    both vanish (for example above a cutoff) are removed first.
    """
    eig = eigendecompose(model)
    temps = {a: baths[a].temperature for a in BATHS}
    transitions: list[Transition] = []
    n_channels = 0
    freqs: dict[str, list[float]] = {}
    for lab in BATHS:
        fl = []
        for ch in bohr_channels(model, baths[lab], eig):
            if ch.rate_down == 0.0 and ch.rate_up == 0.0:
                continue
            n_channels += 1
            for lo, up, _ in ch.transitions:
                transitions.append(Transition(len(transitions), lab, ch.omega, lo, up))
                fl.append(ch.omega)
        freqs[lab] = sorted(fl)

    by_bath = {lab: [t for t in transitions if t.bath == lab] for lab in BATHS}
    stages: list[Stage] = []
    for tw, th, tc in itertools.product(by_bath["w"], by_bath["h"], by_bath["c"]):
        edges = [{tw.lower, tw.upper}, {th.lower, th.upper}, {tc.lower, tc.upper}]
        states = set().union(*edges)
        if len(states) != 3 or any(e1 == e2 for e1, e2 in itertools.combinations(edges, 2)):
            continue
        stages.append(
            Stage(
                (tw.index, th.index, tc.index),
                tuple(sorted(states)),
                {"w": tw.omega, "h": th.omega, "c": tc.omega},
            )
        )

    scale = max(eig.energies.max() - eig.energies.min(), 1.0)
    pairs: list[StagePair] = []
    for (i, si), (j, sj) in itertools.combinations(enumerate(stages), 2):
        shared = set(si.transitions) & set(sj.transitions)
        if len(shared) != 1:
            continue
        (tid,) = shared
        sbath = transitions[tid].bath
        others = [a for a in BATHS if a != sbath]
        dets = [abs(si.frequencies[a] - sj.frequencies[a]) for a in others]
        if min(dets) <= 1e-9 * scale:
            continue
        pairs.append(
            StagePair(
                (i, j), sbath, tid, _CONFIG_BY_SHARED_BATH[sbath],
                _leak_direction(*others, temps), float(sum(dets)),
            )
        )  # fmt: skip

    # pair off: each stage joins at most one unit, widest detuning first
    units = []
    used: set[int] = set()
    for p in sorted(pairs, key=lambda p: (-round(p.detuning / scale, 9), p.stages)):
        if used.isdisjoint(p.stages):
            units.append(p)
            used.update(p.stages)

    # parallel transitions of different baths on one state pair short-circuit them
    shorts = []
    for t1, t2 in itertools.combinations(transitions, 2):
        if t1.bath != t2.bath and {t1.lower, t1.upper} == {t2.lower, t2.upper}:
            shorts.append((t1.index, t2.index))

    leaks = {p.leak for p in pairs}
    leaks |= {_leak_direction(transitions[a].bath, transitions[b].bath, temps) for a, b in shorts}
    in_cycle = {t for st in stages for t in st.transitions} | {t for sc in shorts for t in sc}
    dangling = [t.index for t in transitions if t.index not in in_cycle]
    return DiagnosisReport(transitions, n_channels, freqs, stages, pairs, units, shorts, leaks, dangling)
