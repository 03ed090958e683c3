"""Quantum-jump trajectories of population-closed chillers.

When every dissipative channel is a single energy-basis dyad the secular
master equation closes on populations, and a Monte-Carlo wave-function
trajectory is a continuous-time Markov jump process between eigenstates. We
simulate that process directly (Gillespie) and cut each trajectory into
primitive loops by loop erasure.

Randomness is keyed: trajectory ``k`` of a run with seed ``s`` draws from a
PCG64 stream seeded by ``SeedSequence([s, k])``, independent of scheduling.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .lindblad import build_liouvillian
from .models import BATHS, BathSpec, ModelKind, SystemModel
from .thermo import steady_state

MAX_DIM = 6

# canonical loops (rotated to start at the lowest state, 0-based) of the four-level chiller
FOUR_LEVEL_CYCLES = {
    (0, 2, 3): "C1",
    (0, 3, 2): "C2",
    (0, 1, 3): "C3",
    (0, 3, 1): "C4",
    (0, 1, 3, 2): "C5",
    (0, 2, 3, 1): "C6",
}
CYCLE_TAGS = ("C1", "C2", "C3", "C4", "C5", "C6", "other")


@dataclass(frozen=True)
class JumpEvent:
    time: float
    from_state: int
    to_state: int
    bath: str
    quantum: float  # energy gained by the system, E(to) - E(from)


@dataclass
class CycleTally:
    counts: dict[str, int]
    total_time: float
    loops: dict[tuple[int, ...], int]


@dataclass
class CurrentEstimate:
    mean: dict[str, float]
    stderr: dict[str, float]
    n_trajectories: int
    seed: int


@dataclass
class JumpTable:
    energies: np.ndarray
    ptr: np.ndarray  # outgoing jumps of state i live in [ptr[i], ptr[i+1])
    to: np.ndarray
    bath: np.ndarray
    rates: np.ndarray
    populations: np.ndarray
    kind: ModelKind


class CoherentChannelError(ValueError):
    """The model's channels mix several transitions, so populations do not close."""


def jump_table(model: SystemModel, baths: dict[str, BathSpec]) -> JumpTable:
    if model.dimension > MAX_DIM:
        raise CoherentChannelError(
            f"dimension {model.dimension} exceeds {MAX_DIM}; jump sampling is limited to small models"
        )
    L = build_liouvillian(model, baths)
    jumps = []  # (from, to, bath index, rate)
    for b_idx, lab in enumerate(BATHS):
        for ch in L.channels[lab]:
            if not ch.is_single_dyad:
                raise CoherentChannelError(
                    f"bath {lab} channel at omega={ch.omega:.6g} merges {len(ch.transitions)} "
                    "transitions; its dissipator generates coherences and the population "
                    "jump process is not exact"
                )
            lo, up, weight = ch.transitions[0]
            if ch.rate_down > 0:
                jumps.append((up, lo, b_idx, ch.rate_down * weight))
            if ch.rate_up > 0:
                jumps.append((lo, up, b_idx, ch.rate_up * weight))
    jumps.sort(key=lambda j: (j[0], j[1], j[2]))
    d = model.dimension
    ptr = np.zeros(d + 1, dtype=np.int64)
    for j in jumps:
        ptr[j[0] + 1] += 1
    ptr = np.cumsum(ptr)
    rho = steady_state(L)
    pops = np.clip(np.real(np.diag(L.eigensystem.to_energy_basis(rho))), 0.0, None)
    return JumpTable(
        energies=L.eigensystem.energies.copy(),
        ptr=ptr,
        to=np.array([j[1] for j in jumps], dtype=np.int64),
        bath=np.array([j[2] for j in jumps], dtype=np.int64),
        rates=np.array([j[3] for j in jumps], dtype=np.float64),
        populations=pops / pops.sum(),
        kind=model.kind,
    )


def _generator(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, index])))


def _loop_offsets(d):
    # loop codes of length L occupy [offset[L], offset[L] + d**L)
    off = np.zeros(d + 2, dtype=np.int64)
    for L in range(2, d + 1):
        off[L + 1] = off[L] + d**L
    return off


@numba.njit(cache=True)
def _run(rng, energies, ptr, to, bath, rates, p0, duration, offsets, record, max_events):
    d = energies.shape[0]
    occupation = np.zeros(d)
    heat = np.zeros(3)
    loops = np.zeros(offsets[d + 1], dtype=np.int64)
    ev_t = np.empty(max_events if record else 0)
    ev_from = np.empty(max_events if record else 0, dtype=np.int64)
    ev_to = np.empty(max_events if record else 0, dtype=np.int64)
    ev_bath = np.empty(max_events if record else 0, dtype=np.int64)
    n_ev = 0

    u = rng.random()
    s = 0
    acc = p0[0]
    while u > acc and s < d - 1:
        s += 1
        acc += p0[s]

    stack = np.empty(d + 1, dtype=np.int64)
    stack[0] = s
    depth = 1
    t = 0.0
    while True:
        total = 0.0
        for k in range(ptr[s], ptr[s + 1]):
            total += rates[k]
        if total <= 0.0:
            occupation[s] += duration - t
            break
        dt = rng.exponential(1.0 / total)
        if t + dt >= duration:
            occupation[s] += duration - t
            break
        occupation[s] += dt
        t += dt
        x = rng.random() * total
        k = ptr[s]
        acc = rates[k]
        while acc < x and k < ptr[s + 1] - 1:
            k += 1
            acc += rates[k]
        nxt = to[k]
        heat[bath[k]] += energies[nxt] - energies[s]
        if record:
            if n_ev == max_events:
                raise ValueError("event buffer exhausted")
            ev_t[n_ev] = t
            ev_from[n_ev] = s
            ev_to[n_ev] = nxt
            ev_bath[n_ev] = bath[k]
        n_ev += 1

        pos = -1
        for i in range(depth):
            if stack[i] == nxt:
                pos = i
                break
        if pos < 0:
            stack[depth] = nxt
            depth += 1
        else:
            length = depth - pos
            if length >= 2:
                # rotate so the lowest state comes first, then encode base d
                lo_i = pos
                for i in range(pos, depth):
                    if stack[i] < stack[lo_i]:
                        lo_i = i
                code = 0
                mult = 1
                for r in range(length):
                    code += stack[pos + (lo_i - pos + r) % length] * mult
                    mult *= d
                loops[offsets[length] + code] += 1
            depth = pos + 1
        s = nxt
    return occupation, heat, loops, n_ev, ev_t[:n_ev], ev_from[:n_ev], ev_to[:n_ev], ev_bath[:n_ev]


def _decode_loops(loops, d, offsets):
    out = {}
    for L in range(2, d + 1):
        block = loops[offsets[L] : offsets[L] + d**L]
        for code in np.nonzero(block)[0]:
            states = []
            c = int(code)
            for _ in range(L):
                states.append(c % d)
                c //= d
            out[tuple(states)] = int(block[code])
    return out


def _tags(kind, loops: dict[tuple[int, ...], int]) -> dict[str, int]:
    counts = dict.fromkeys(CYCLE_TAGS, 0)
    for loop, n in loops.items():
        tag = FOUR_LEVEL_CYCLES.get(loop) if kind is ModelKind.FOUR_LEVEL else None
        counts[tag or "other"] += n
    return counts


def sample_trajectory(
    model: SystemModel,
    baths: dict[str, BathSpec],
    duration: float,
    seed: int,
    index: int = 0,
    table: JumpTable | None = None,
    initial_state: int | None = None,
    max_events: int = 5_000_000,
) -> list[JumpEvent]:
    """Event stream of trajectory ``index``; the initial state is drawn from diag rho_ss
    unless ``initial_state`` is given."""
    if not duration > 0:
        raise ValueError("duration must be positive")
    tab = table if table is not None else jump_table(model, baths)
    d = len(tab.energies)
    p0 = tab.populations
    if initial_state is not None:
        p0 = np.zeros(d)
        p0[initial_state] = 1.0
    _, _, _, _, t, fr, to, ba = _run(
        _generator(seed, index), tab.energies, tab.ptr, tab.to, tab.bath, tab.rates,
        p0, float(duration), _loop_offsets(d), True, max_events,
    )  # fmt: skip
    E = tab.energies
    return [
        JumpEvent(float(t[i]), int(fr[i]), int(to[i]), BATHS[ba[i]], float(E[to[i]] - E[fr[i]]))
        for i in range(len(t))
    ]


def classify_cycles(trajectory: list[JumpEvent], kind: ModelKind | str = ModelKind.FOUR_LEVEL,
                    total_time: float | None = None) -> CycleTally:
    """Loop-erase the event stream and tag each primitive loop.

    Loops are rotated to start at their lowest state. For the four-level
    chiller they are matched against C1..C6; back-and-forth jumps and anything
    unmatched count as ``other``. The unfinished tail is discarded.
    """
    kind = ModelKind(kind)
    loops: dict[tuple[int, ...], int] = {}
    if trajectory:
        stack = [trajectory[0].from_state]
        for ev in trajectory:
            if ev.to_state in stack:
                pos = stack.index(ev.to_state)
                loop = stack[pos:]
                del stack[pos + 1 :]
                if len(loop) >= 2:
                    r = loop.index(min(loop))
                    key = tuple(loop[r:] + loop[:r])
                    loops[key] = loops.get(key, 0) + 1
            else:
                stack.append(ev.to_state)
    if total_time is None:
        total_time = trajectory[-1].time if trajectory else 0.0
    return CycleTally(_tags(kind, loops), float(total_time), loops)


@dataclass
class EnsembleResult:
    currents: CurrentEstimate
    tally: CycleTally
    occupation: np.ndarray  # mean fraction of time per eigenstate
    occupation_stderr: np.ndarray
    cycle_flux: dict[str, float]  # net loops per unit time: C1-C2, C3-C4, C5-C6
    cycle_flux_stderr: dict[str, float]
    n_events: int


def run_ensemble(model, baths, n_trajectories: int, duration: float, seed: int) -> EnsembleResult:
    """Sample ``n_trajectories`` independent trajectories and reduce them in index order."""
    if n_trajectories < 2:
        raise ValueError("need at least two trajectories for a standard error")
    if not duration > 0:
        raise ValueError("duration must be positive")
    tab = jump_table(model, baths)
    d = len(tab.energies)
    off = _loop_offsets(d)
    occ = np.zeros((n_trajectories, d))
    heat = np.zeros((n_trajectories, 3))
    loops = np.zeros((n_trajectories, off[d + 1]), dtype=np.int64)
    n_events = 0
    for k in range(n_trajectories):
        o, h, lp, n, *_ = _run(
            _generator(seed, k), tab.energies, tab.ptr, tab.to, tab.bath, tab.rates,
            tab.populations, float(duration), off, False, 0,
        )  # fmt: skip
        occ[k], heat[k], loops[k] = o, h, lp
        n_events += n

    def mean_se(x):
        return x.mean(axis=0), x.std(axis=0, ddof=1) / np.sqrt(n_trajectories)

    q_mean, q_se = mean_se(heat / duration)
    occ_mean, occ_se = mean_se(occ / duration)

    tag_counts = np.zeros((n_trajectories, len(CYCLE_TAGS)), dtype=np.int64)
    all_loops: dict[tuple[int, ...], int] = {}
    for k in range(n_trajectories):
        decoded = _decode_loops(loops[k], d, off)
        for key, n in decoded.items():
            all_loops[key] = all_loops.get(key, 0) + n
        tags = _tags(tab.kind, decoded)
        tag_counts[k] = [tags[t] for t in CYCLE_TAGS]
    idx = {t: i for i, t in enumerate(CYCLE_TAGS)}
    flux, flux_se = {}, {}
    for name, (a, b) in {"C1-C2": ("C1", "C2"), "C3-C4": ("C3", "C4"), "C5-C6": ("C5", "C6")}.items():
        m, s = mean_se((tag_counts[:, idx[a]] - tag_counts[:, idx[b]]) / duration)
        flux[name], flux_se[name] = float(m), float(s)

    totals = dict(zip(CYCLE_TAGS, (int(x) for x in tag_counts.sum(axis=0))))
    return EnsembleResult(
        currents=CurrentEstimate(
            {a: float(q_mean[i]) for i, a in enumerate(BATHS)},
            {a: float(q_se[i]) for i, a in enumerate(BATHS)},
            n_trajectories,
            seed,
        ),
        tally=CycleTally(totals, duration * n_trajectories, all_loops),
        occupation=occ_mean,
        occupation_stderr=occ_se,
        cycle_flux=flux,
        cycle_flux_stderr=flux_se,
        n_events=n_events,
    )


def estimate_currents(model, baths, n_trajectories: int, duration: float, seed: int) -> CurrentEstimate:
    return run_ensemble(model, baths, n_trajectories, duration, seed).currents
