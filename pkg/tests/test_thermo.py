import json
import math

import numpy as np
import pytest
from oracles import CARNOT, OMEGA_C_REV, OMEGA_H, gibbs

from chiller.lindblad import build_liouvillian
from chiller.models import HighCutoff, ModelKind, build_model, make_baths
from chiller.thermo import (
    DegenerateSteadyState,
    carnot_cop,
    cop,
    entropy_rate,
    internal_temperatures,
    null_space_dimension,
    omega_c_rev,
    solve,
    steady_state,
)


def test_reference_values():
    assert omega_c_rev(9, 8, 7, 6) == pytest.approx(OMEGA_C_REV, rel=1e-15)
    assert carnot_cop(9, 8, 7) == pytest.approx(CARNOT, rel=1e-15)
    assert carnot_cop(math.inf, 8, 7) == pytest.approx(7.0)
    with pytest.raises(ValueError):
        carnot_cop(7, 8, 9)
    with pytest.raises(ValueError):
        omega_c_rev(8, 9, 7, 6)


@pytest.mark.parametrize("kind", list(ModelKind))
def test_steady_state_is_a_density_matrix(kind, baths):
    m = build_model(kind, 2.0, OMEGA_H, 0.1, 0.5)
    rho = steady_state(build_liouvillian(m, baths))
    assert np.trace(rho).real == pytest.approx(1.0, abs=1e-14)
    np.testing.assert_allclose(rho, rho.conj().T, atol=1e-15)
    assert np.linalg.eigvalsh(rho).min() >= -1e-15


@pytest.mark.parametrize("kind", list(ModelKind))
def test_equal_temperatures_give_gibbs(kind):
    b = make_baths(5.0, 5.0, 5.0)
    m = build_model(kind, 2.0, OMEGA_H, 0.1, 0.5)
    rep = solve(m, b)
    np.testing.assert_allclose(rep.state, gibbs(m.hamiltonian, 5.0), atol=1e-10)
    assert max(abs(v) for v in rep.currents.values()) < 1e-15
    assert rep.currents_vanish


def test_degenerate_steady_state_detected():
    # every bath filtered out: only the unitary part remains, null space = d
    cut = {lab: HighCutoff(1e-3) for lab in "whc"}
    b = make_baths(9, 8, 7, filters=cut)
    L = build_liouvillian(build_model("ThreeLevel", 2.0, 6.0), b)
    assert null_space_dimension(L) == 3
    with pytest.raises(DegenerateSteadyState) as err:
        steady_state(L)
    assert err.value.nullity == 3


def test_three_level_cop_is_frequency_ratio(baths):
    for wc in (0.5, 1.0, 2.0, 2.5):
        rep = solve(build_model("ThreeLevel", wc, OMEGA_H), baths)
        assert rep.cop == pytest.approx(wc / (OMEGA_H - wc), rel=1e-9)
        assert rep.cooling


def test_three_level_stops_cooling_past_reversible_point(baths):
    rep = solve(build_model("ThreeLevel", 3.0, OMEGA_H), baths)
    assert not rep.cooling
    assert rep.cop is None


def test_currents_conserve_and_entropy_nonnegative(baths):
    for kind in ModelKind:
        rep = solve(build_model(kind, 1.75, OMEGA_H, 0.1, 0.5), baths)
        assert rep.conservation_error() <= 1e-10
        assert rep.entropy_rate >= -1e-12


def test_entropy_rate_formula():
    q = {"w": 2.0, "h": -3.0, "c": 1.0}
    t = {"w": 9.0, "h": 8.0, "c": 7.0}
    assert entropy_rate(q, t) == pytest.approx(-(2 / 9 - 3 / 8 + 1 / 7))


def test_cop_absent_without_work():
    assert cop({"w": 0.0, "h": 0.0, "c": 0.0}) is None
    assert cop({"w": -1.0, "h": 0.5, "c": 0.5}) is None
    assert cop({"w": 2.0, "h": -3.0, "c": 1.0}) == 0.5


def test_internal_temperatures_three_level():
    # populations chosen so that every transition sits at T = 2
    E = np.array([0.0, 1.0, 3.0])
    p = np.exp(-E / 2)
    p /= p.sum()
    tau = internal_temperatures("ThreeLevel", p, {"omega_c": 1.0, "omega_h": 3.0})
    assert tau == pytest.approx({"w": 2.0, "h": 2.0, "c": 2.0})
    assert internal_temperatures("ThreeLevel", [0.5, 0.5, 0.0], {"omega_c": 1.0, "omega_h": 3.0})["w"] is None
    assert internal_temperatures("ThreeLevel", [0.4, 0.4, 0.2], {"omega_c": 1.0, "omega_h": 3.0})["c"] == math.inf


def test_internal_temperatures_four_level_keys(baths):
    rep = solve(build_model("FourLevel", 2.0, OMEGA_H, 0.1), baths)
    assert set(rep.internal_temps) == {"w+", "h+", "c+", "w-", "h-", "c-"}
    assert rep.internal_temps["h+"] == rep.internal_temps["h-"]
    inv = internal_temperatures("FourLevel", rep.populations, {"omega_c": 0.05, "omega_h": 6.0, "g": 0.1})
    assert inv == {}


def test_kappa_zero_reduces_to_three_level(baths):
    a = solve(build_model("ThreeLevelShorted", 2.0, OMEGA_H, kappa=0.0), baths)
    b = solve(build_model("ThreeLevel", 2.0, OMEGA_H), baths)
    for lab in "whc":
        assert a.currents[lab] == pytest.approx(b.currents[lab], rel=1e-12)


def test_kappa_one_equal_temperatures_no_current():
    rep = solve(build_model("ThreeLevelShorted", 2.0, OMEGA_H, kappa=1.0), make_baths(7, 7, 7))
    assert max(abs(v) for v in rep.currents.values()) < 1e-15


def test_short_circuit_degrades_cooling(baths):
    q = [solve(build_model("ThreeLevelShorted", 2.0, OMEGA_H, kappa=k), baths).currents["c"] for k in (0, 0.2, 0.5)]
    assert q[0] > q[1] > q[2]


def test_report_serialises(baths):
    rep = solve(build_model("FourLevel", 2.0, OMEGA_H, 0.1), baths)
    doc = json.loads(json.dumps(rep.to_json()))
    assert len(doc["state"]) == 4 and len(doc["state"][0][0]) == 2
    assert doc["cooling"] is True
    assert doc["currents"]["c"] == rep.currents["c"]
