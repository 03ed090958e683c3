import numpy as np
import pytest
from oracles import OMEGA_H

from chiller.mcwf import (
    CYCLE_TAGS,
    CoherentChannelError,
    classify_cycles,
    jump_table,
    run_ensemble,
    sample_trajectory,
)
from chiller.models import build_model, make_baths
from chiller.stages import breakdown
from chiller.thermo import solve

G = 0.1


@pytest.fixture(scope="module")
def four():
    return build_model("FourLevel", 2.0, OMEGA_H, G)


def test_jump_table_structure(four, baths):
    tab = jump_table(four, baths)
    # 5 channels, each with an emission and an absorption
    assert len(tab.rates) == 10 and tab.ptr[-1] == 10
    assert np.all(np.diff(tab.ptr) >= 0)
    assert tab.populations.sum() == pytest.approx(1.0)
    np.testing.assert_allclose(tab.populations, solve(four, baths).populations, atol=1e-12)
    for i in range(4):
        for k in range(tab.ptr[i], tab.ptr[i + 1]):
            assert tab.to[k] != i


def test_three_qubit_is_rejected(baths):
    with pytest.raises(CoherentChannelError):
        jump_table(build_model("ThreeQubit", 2.0, OMEGA_H, G), baths)


def test_shorted_model_is_rejected(baths):
    # with omega_h = 2 omega_c both cold dyads share one Bohr frequency
    m = build_model("ThreeLevelShorted", 2.0, 4.0, kappa=0.5)
    with pytest.raises(CoherentChannelError):
        jump_table(m, baths)


def test_resonant_four_level_closes_on_populations(baths):
    tab = jump_table(build_model("FourLevel", 2.0, OMEGA_H, 0.0), baths)
    assert len(tab.rates) == 6


def test_cold_baths_only_emit(four):
    cold = make_baths(0.01, 0.01, 0.01)
    traj = sample_trajectory(four, cold, 1e6, seed=1, initial_state=3)
    assert traj, "the excited state must decay"
    assert all(ev.quantum < 0 for ev in traj)
    assert traj[-1].to_state == 0


def test_first_law_per_trajectory(four, baths):
    traj = sample_trajectory(four, baths, 2e4, seed=7, index=3)
    E = jump_table(four, baths).energies
    total = sum(ev.quantum for ev in traj)
    assert total == pytest.approx(E[traj[-1].to_state] - E[traj[0].from_state], abs=1e-9)
    assert all(b.time >= a.time for a, b in zip(traj, traj[1:]))


def test_loops_are_closed_and_tagged(four, baths):
    traj = sample_trajectory(four, baths, 5e4, seed=11)
    tally = classify_cycles(traj)
    assert sum(tally.counts.values()) == sum(tally.loops.values())
    for loop in tally.loops:
        assert loop[0] == min(loop) and len(set(loop)) == len(loop)
    assert set(tally.counts) == set(CYCLE_TAGS)
    assert tally.counts["C1"] + tally.counts["C3"] > 0


def test_numba_tally_matches_reference(four, baths):
    dur = 3e4
    ens = run_ensemble(four, baths, 3, dur, seed=5)
    loops: dict = {}
    for k in range(3):
        t = classify_cycles(sample_trajectory(four, baths, dur, seed=5, index=k), total_time=dur)
        for key, n in t.loops.items():
            loops[key] = loops.get(key, 0) + n
    assert ens.tally.loops == loops


def test_ensemble_is_deterministic(four, baths):
    a = run_ensemble(four, baths, 4, 1e4, seed=3)
    b = run_ensemble(four, baths, 4, 1e4, seed=3)
    c = run_ensemble(four, baths, 4, 1e4, seed=4)
    assert a.currents.mean == b.currents.mean and a.tally.loops == b.tally.loops
    assert a.currents.mean != c.currents.mean


def test_small_ensemble_agrees_with_master_equation(four, baths):
    ens = run_ensemble(four, baths, 200, 2e4, seed=2024)
    exact = solve(four, baths).currents
    for lab in "whc":
        z = (ens.currents.mean[lab] - exact[lab]) / ens.currents.stderr[lab]
        assert abs(z) < 4
    bd = breakdown(2.0, OMEGA_H, G, baths)
    for name, ref in (("C1-C2", bd.i_plus), ("C3-C4", bd.i_minus), ("C5-C6", -bd.i_leak / 2)):
        z = (ens.cycle_flux[name] - ref) / ens.cycle_flux_stderr[name]
        assert abs(z) < 4, name
    np.testing.assert_allclose(ens.occupation.sum(), 1.0)


def test_argument_validation(four, baths):
    with pytest.raises(ValueError):
        run_ensemble(four, baths, 1, 1.0, seed=0)
    with pytest.raises(ValueError):
        sample_trajectory(four, baths, 0.0, seed=0)
