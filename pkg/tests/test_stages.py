import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import OMEGA_C_REV, OMEGA_H, four_level_classical

from chiller.models import HighCutoff, build_model, make_baths
from chiller.stages import (
    PAIRING_NOTE,
    FourLevelRates,
    breakdown,
    classical_steady_state,
    cooling_windows,
    diagnose,
    imbalance_check,
    printed_matrix,
    rate_matrix,
    spanning_tree_sum,
    stage_entropies,
    stage_quanta,
    stage_rates,
    verify_breakdown,
)
from chiller.sweep import TrackingWorkCutoff
from chiller.thermo import solve

G = 0.1


@pytest.mark.parametrize("wc", [0.5, 1.5, 2.0, 2.625, 3.5, 5.0])
def test_classical_oracle_matches_liouvillian(wc, baths):
    rep = solve(build_model("FourLevel", wc, OMEGA_H, G), baths)
    np.testing.assert_allclose(rep.populations, four_level_classical(wc, OMEGA_H, G), atol=1e-10)
    # coherences vanish in the energy basis
    off = rep.state.copy()
    eig_pops = np.diag(rep.populations)
    from chiller.models import eigendecompose

    rho_e = eigendecompose(build_model("FourLevel", wc, OMEGA_H, G)).to_energy_basis(off)
    np.testing.assert_allclose(rho_e, eig_pops, atol=1e-10)


def test_package_classical_solver_matches_oracle(baths):
    r = FourLevelRates.from_baths(2.0, OMEGA_H, G, baths)
    np.testing.assert_allclose(classical_steady_state(r), four_level_classical(2.0, OMEGA_H, G), atol=1e-12)


def test_tree_sum_two_states():
    W = np.array([[-2.0, 3.0], [2.0, -3.0]])
    assert spanning_tree_sum(W) == pytest.approx(5.0)


@given(st.lists(st.floats(1e-6, 10.0), min_size=12, max_size=12))
@settings(max_examples=50, deadline=None)
def test_tree_sum_equals_laplacian_minors(rates):
    W = np.zeros((4, 4))
    k = iter(rates)
    for i in range(4):
        for j in range(4):
            if i != j:
                W[j, i] = next(k)
    W -= np.diag(W.sum(axis=0))
    minors = sum(np.linalg.det(-np.delete(np.delete(W, i, 0), i, 1)) for i in range(4))
    assert spanning_tree_sum(W) == pytest.approx(minors, rel=1e-9)


def test_normalisation_matches_printed_determinant(baths):
    for wc in (0.5, 2.0, 2.625, 4.0):
        r = FourLevelRates.from_baths(wc, OMEGA_H, G, baths)
        D = stage_rates(r).d_norm
        assert D == pytest.approx(-0.5 * np.linalg.det(printed_matrix(r)), rel=1e-10)
        assert D == pytest.approx(8 * spanning_tree_sum(rate_matrix(r)), rel=1e-14)


@pytest.mark.parametrize("g, wc", [(0.1, 2.0), (0.5, 2.0), (0.5, 1.0)])
def test_stage_currents_are_hill_cycle_fluxes(g, wc, baths):
    # K[i, j]: jump rate i -> j in the energy basis (a, b, c, d) = (0, 1, 2, 3)
    from chiller.mcwf import jump_table

    tab = jump_table(build_model("FourLevel", wc, OMEGA_H, g), baths)
    K = np.zeros((4, 4))
    for i in range(4):
        for k in range(tab.ptr[i], tab.ptr[i + 1]):
            K[i, tab.to[k]] += tab.rates[k]
    trees = spanning_tree_sum(K.T - np.diag(K.sum(axis=1)))

    def hill(cycle, rest):
        fwd = np.prod([K[cycle[i], cycle[(i + 1) % len(cycle)]] for i in range(len(cycle))])
        bwd = np.prod([K[cycle[(i + 1) % len(cycle)], cycle[i]] for i in range(len(cycle))])
        attach = sum(K[rest, j] for j in cycle) if rest is not None else 1.0
        return (fwd - bwd) * attach / trees

    bd = breakdown(wc, OMEGA_H, g, baths)
    assert bd.i_plus == pytest.approx(hill((0, 2, 3), 1), rel=1e-10)
    assert bd.i_minus == pytest.approx(hill((0, 1, 3), 2), rel=1e-10)
    # one turn of the leak loop moves 2g, the leak quanta are +-g
    assert -bd.i_leak == pytest.approx(2 * hill((0, 1, 3, 2), None), rel=1e-10)


def test_stage_quanta_close():
    q = stage_quanta(2.0, 6.0, 0.1)
    for s in q:
        assert sum(q[s].values()) == pytest.approx(0.0, abs=1e-15)


def test_identity_on_grid(baths):
    grid = np.linspace(0.15, 5.85, 25)
    rep = verify_breakdown(OMEGA_H, G, baths, grid)
    assert rep.max_identity_error <= 1e-10
    assert rep.pairing == PAIRING_NOTE
    # the opposite bracket-to-stage assignment does not satisfy the identity
    assert rep.max_printed_assignment_error > 1e-3
    for row in rep.rows:
        assert row["i_leak"] <= 0
        assert all(v >= -1e-20 for v in row["stage_entropy"].values())
        assert all(row["sign_consistent"].values())


def test_breakdown_rejects_resonant_limit(baths):
    with pytest.raises(ValueError):
        verify_breakdown(OMEGA_H, 0.0, baths, [2.0])


def test_window_edges(baths):
    assert breakdown(2.525, OMEGA_H, G, baths).i_plus == pytest.approx(0.0, abs=1e-17)
    assert breakdown(2.725, OMEGA_H, G, baths).i_minus == pytest.approx(0.0, abs=1e-17)
    s_plus, _, _ = stage_entropies(breakdown(2.525, OMEGA_H, G, baths))
    _, s_minus, _ = stage_entropies(breakdown(2.725, OMEGA_H, G, baths))
    assert abs(s_plus) < 1e-8 * 1e-3 * OMEGA_H**3
    assert abs(s_minus) < 1e-8 * 1e-3 * OMEGA_H**3


def test_cooling_windows():
    w, lost = cooling_windows(OMEGA_C_REV, G)
    assert w["plus"] == pytest.approx((0.0, 2.525))
    assert w["minus"] == pytest.approx((0.1, 2.725))
    assert not lost
    w, lost = cooling_windows(OMEGA_C_REV, 3.0)
    assert w["plus"] is None and lost


def test_imbalance_matches_windows(baths):
    assert imbalance_check(FourLevelRates.from_baths(2.6, OMEGA_H, G, baths)) == {
        "plus_cools": False,
        "minus_cools": True,
    }
    assert imbalance_check(FourLevelRates.from_baths(2.0, OMEGA_H, G, baths)) == {
        "plus_cools": True,
        "minus_cools": True,
    }


def test_leak_entropy_positive(baths):
    for wc in np.linspace(0.3, 5.5, 12):
        assert stage_entropies(breakdown(float(wc), OMEGA_H, G, baths))[2] > 0


def test_cutoff_at_work_frequency_leaves_one_stage():
    tracked = TrackingWorkCutoff(9, 8, 7, OMEGA_H)
    rep = verify_breakdown(OMEGA_H, G, tracked, np.linspace(0.5, 4.0, 8))
    assert rep.max_identity_error <= 1e-10
    for row in rep.rows:
        assert row["i_minus"] == 0.0 and row["i_leak"] == 0.0


def test_blackout_is_undefined():
    b = make_baths(9, 8, 7, filters={lab: HighCutoff(1e-3) for lab in "whc"})
    with pytest.raises(ValueError):
        breakdown(2.0, OMEGA_H, G, b)


# ---------------------------------------------------------------------------
# diagnosis
# ---------------------------------------------------------------------------


def test_three_level_is_endoreversible(baths):
    rep = diagnose(build_model("ThreeLevel", 2.0, OMEGA_H), baths)
    assert len(rep.transitions) == 3 and rep.n_channels == 3
    assert len(rep.stages) == 1 and not rep.stage_pairs
    assert rep.endoreversible and rep.leak_directions == set()


def test_shorted_model_leaks_work_to_cold(baths):
    rep = diagnose(build_model("ThreeLevelShorted", 2.0, OMEGA_H, kappa=0.3), baths)
    assert rep.short_circuits and rep.leak_directions == {("w", "c")}
    assert not rep.endoreversible


@pytest.mark.parametrize(
    "kind, shared, leak",
    [("FourLevel", "h", ("w", "c")), ("FourLevelPrime", "c", ("w", "h")), ("FourLevelDoublePrime", "w", ("h", "c"))],
)
def test_four_level_configurations(kind, shared, leak, baths):
    rep = diagnose(build_model(kind, 2.0, OMEGA_H, G), baths)
    assert len(rep.transitions) == 5 and len(rep.stages) == 2
    (pair,) = rep.stage_pairs
    assert pair.shared_bath == shared and pair.configuration == kind
    assert rep.leak_directions == {leak}


def test_three_qubit_diagnosis(baths):
    rep = diagnose(build_model("ThreeQubit", 2.0, OMEGA_H, G), baths)
    assert len(rep.transitions) == 18 and rep.n_channels == 9
    assert len(rep.stages) == 12
    assert len(rep.units) == 6
    configs = sorted(u.configuration for u in rep.units)
    assert configs == sorted(["FourLevel", "FourLevelPrime", "FourLevelDoublePrime"] * 2)
    assert rep.leak_directions == {("w", "c"), ("w", "h"), ("h", "c")}
    doc = rep.to_json()
    assert doc["n_transitions"] == 18 and min(t["lower"] for t in doc["transitions"]) == 1


def test_filtered_four_level_is_endoreversible():
    rep = diagnose(build_model("FourLevel", 2.0, OMEGA_H, G), TrackingWorkCutoff(9, 8, 7, OMEGA_H)(2.0))
    assert len(rep.stages) == 1 and rep.endoreversible
