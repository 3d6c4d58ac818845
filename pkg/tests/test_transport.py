import math
from fractions import Fraction

import numpy as np
import pytest

from instances import enumeration_data, transport_instance
from oracles import winf_enumerate, wq_enumerate

from mmlagrange.ambient import Density, FiniteSpace, GeodesicTemplate, discretize
from mmlagrange.plans import ke_q, lip_const, restrict_event
from mmlagrange.transport import (good_infty_plan, lift_to_dynamical, optimal_coupling_q, transport_simplex, winf,
                                  winf_limit_check)
from mmlagrange.transport.flow import hopcroft_karp, max_flow_coupling

SEG = GeodesicTemplate("segment", (1.0,))
# points 0, 0.25, 0.5, 0.75, 1 with equal weights
S5 = FiniteSpace(SEG, np.linspace(0, 1, 5)[:, None], np.full(5, 0.2))


def dens(space, masses):
    return Density.from_masses(space, np.asarray(masses, dtype=float))


DIRAC0 = dens(S5, [1, 0, 0, 0, 0])
SPLIT = dens(S5, [0, 0, 0.5, 0, 0.5])
ENDS = dens(S5, [0.5, 0, 0, 0, 0.5])
INNER = dens(S5, [0, 0.5, 0, 0.5, 0])


def test_identity_transport_is_free():
    for exact in (False, True):
        res = optimal_coupling_q(SPLIT, SPLIT, 2, exact=exact)
        assert res.value == 0
        assert np.allclose(res.coupling.matrix, np.diag(SPLIT.masses))


def test_dirac_source_forces_the_coupling():
    res = optimal_coupling_q(DIRAC0, SPLIT, 2, exact=True)
    assert res.cost == Fraction(5, 8)
    assert res.value == pytest.approx(math.sqrt(0.625))
    assert res.certificate["optimal"]


def test_monotone_matching_beats_crossing():
    # frozen from the enumeration oracle over both permutations
    assert wq_enumerate([1, 1], [1, 1], [[0.25, 0.75], [0.75, 0.25]], 2) == 0.0625
    res = optimal_coupling_q(ENDS, INNER, 2)
    assert res.cost == pytest.approx(0.0625)
    assert res.coupling.matrix[0, 1] == pytest.approx(0.5)


def test_winf_examples():
    assert winf(SPLIT, SPLIT).value == 0
    assert winf(DIRAC0, SPLIT).value == 1.0
    assert winf_enumerate([1, 1], [1, 1], [[0.25, 0.75], [0.75, 0.25]]) == 0.25
    assert winf(ENDS, INNER).value == 0.25


def test_winf_routes_agree():
    rng = np.random.default_rng(8)
    for _ in range(30):
        mu0, mu1, *_ = transport_instance(rng)
        assert winf(mu0, mu1, route="matching").value == winf(mu0, mu1, route="flow").value


def test_transport_matches_enumeration():
    rng = np.random.default_rng(1)
    for _ in range(40):
        mu0, mu1, u0, u1, space = transport_instance(rng)
        a, b, dist = enumeration_data(u0, u1, space)
        for q in (2, 3):
            want = wq_enumerate(a, b, dist, q)
            assert optimal_coupling_q(mu0, mu1, q).cost == pytest.approx(want, abs=1e-9)
            assert float(optimal_coupling_q(mu0, mu1, q, exact=True).cost) == pytest.approx(want, abs=1e-9)
        assert winf(mu0, mu1).value == winf_enumerate(a, b, dist)


def test_bland_and_dantzig_rules_agree():
    rng = np.random.default_rng(6)
    for _ in range(20):
        mu0, mu1, *_ = transport_instance(rng)
        x = optimal_coupling_q(mu0, mu1, 2, rule="bland")
        y = optimal_coupling_q(mu0, mu1, 2, rule="dantzig")
        assert x.cost == pytest.approx(y.cost, abs=1e-12)
        assert x.certificate["pivot_rule"] == "bland"


def test_simplex_certificate_on_degenerate_problem():
    a = [Fraction(1, 2), Fraction(1, 2)]
    b = [Fraction(1, 2), Fraction(1, 2)]
    C = [[Fraction(0), Fraction(1)], [Fraction(1), Fraction(0)]]
    flow, u, v, _ = transport_simplex(a, b, C)
    assert flow.get((0, 0)) == Fraction(1, 2) and flow.get((1, 1)) == Fraction(1, 2)
    for i in range(2):
        for j in range(2):
            assert C[i][j] - u[i] - v[j] >= 0


def test_unbalanced_marginals_rejected():
    with pytest.raises(ValueError):
        optimal_coupling_q(DIRAC0, dens(S5, [0, 0, 0.5, 0, 0]), 2)
    with pytest.raises(ValueError):
        optimal_coupling_q(DIRAC0, SPLIT, 1.0)


def test_forbidden_pairs_are_avoided():
    forbid = np.zeros((5, 5), bool)
    forbid[0, 3] = forbid[4, 1] = True
    res = optimal_coupling_q(ENDS, INNER, 2, forbid=forbid)
    assert res.coupling.matrix[0, 3] == 0 and res.coupling.matrix[4, 1] == 0


def test_max_flow_and_matching_helpers():
    allowed = np.array([[True, False], [True, True]])
    value, flows = max_flow_coupling(np.array([0.5, 0.5]), np.array([0.5, 0.5]), allowed)
    assert value == pytest.approx(1.0)
    assert flows[0, 1] == 0
    size, match = hopcroft_karp([[0], [0, 1]], 2, 2)
    assert size == 2 and match == [0, 1]


def test_winf_limit_examples():
    assert [v for _, v in winf_limit_check(SPLIT, SPLIT, [2, 4, 8])] == [0, 0, 0]
    d = dens(S5, [0, 0, 0, 1, 0])
    assert all(v == pytest.approx(0.75) for _, v in winf_limit_check(DIRAC0, d, [2, 4, 8, 16]))
    rows = winf_limit_check(ENDS, INNER, [2, 4, 8, 16, 32])
    vals = [v for _, v in rows]
    assert all(b >= a for a, b in zip(vals, vals[1:]))
    assert abs(vals[-1] - 0.25) <= 0.05 * 0.25


def test_lift_of_diagonal_is_stationary():
    plan = lift_to_dynamical(optimal_coupling_q(SPLIT, SPLIT, 2))
    assert ke_q(plan, 2) == 0


def test_lift_of_dirac_instance():
    plan = lift_to_dynamical(optimal_coupling_q(DIRAC0, SPLIT, 2), steps=4)
    assert len(plan) == 2 and np.allclose(plan.masses, 0.5)
    assert ke_q(plan, 2) == pytest.approx(0.625)


def test_lift_marginals_follow_geodesic_samples():
    res = optimal_coupling_q(ENDS, INNER, 2)
    plan = lift_to_dynamical(res, steps=4)
    for i in range(5):
        t = i / 4
        pos, mass = plan.marginal(t)
        want = sorted([(0.25 * t, 0.5), (1 - 0.25 * t, 0.5)])
        assert sorted(zip(pos[:, 0].round(12), mass)) == pytest.approx(want)


def test_lift_identities_on_random_instances():
    rng = np.random.default_rng(12)
    for _ in range(25):
        mu0, mu1, *_ = transport_instance(rng)
        res = optimal_coupling_q(mu0, mu1, 2)
        plan = lift_to_dynamical(res)
        assert ke_q(plan, 2) ** 0.5 == pytest.approx(res.value, abs=1e-10)
        w = winf(mu0, mu1)
        assert lip_const(lift_to_dynamical(w)) == pytest.approx(w.value, abs=1e-10)


def test_event_restriction_of_optimal_lift_stays_optimal():
    rng = np.random.default_rng(13)
    for _ in range(25):
        mu0, mu1, *_ = transport_instance(rng)
        plan = lift_to_dynamical(optimal_coupling_q(mu0, mu1, 2))
        if len(plan) < 2:
            continue
        ind = np.zeros(len(plan))
        ind[rng.choice(len(plan), size=len(plan) // 2 + 1, replace=False)] = 1
        sub = restrict_event(plan, ind)
        m0, m1 = sub.endpoint_masses()
        again = optimal_coupling_q(Density.from_masses(sub.space, m0), Density.from_masses(sub.space, m1), 2)
        assert again.cost == pytest.approx(ke_q(sub, 2), abs=1e-8)


def test_consecutive_marginals_respect_lip():
    rng = np.random.default_rng(14)
    for _ in range(15):
        mu0, mu1, *_ = transport_instance(rng)
        plan = lift_to_dynamical(optimal_coupling_q(mu0, mu1, 2), steps=4)
        space = plan.space
        lip = lip_const(plan)
        for t0, t1 in ((0.0, 0.25), (0.25, 0.75), (0.5, 1.0)):
            a, ra = plan.snapped_marginal(t0)
            b, rb = plan.snapped_marginal(t1)
            # snapping moves each mass by at most the snap radius
            got = winf(Density.from_masses(space, a), Density.from_masses(space, b)).value
            assert got <= (t1 - t0) * lip + ra + rb + 1e-12


def test_good_infty_plan_dirac():
    d = dens(S5, [0, 0, 0, 1, 0])
    g = good_infty_plan(DIRAC0, d, [2, 4, 8, 16])
    assert g.lip == pytest.approx(0.75)
    assert all(r["retained"] == 1.0 for r in g.rows)


def test_good_infty_plan_bounds_on_circle():
    circ = discretize(GeodesicTemplate("circle", (1.0,)), 8)
    mu0 = Density.from_masses(circ, [0.25, 0.25, 0.25, 0.25, 0, 0, 0, 0])
    mu1 = Density.from_masses(circ, [0, 0.25, 0, 0.25, 0, 0.25, 0, 0.25])
    g = good_infty_plan(mu0, mu1, [2, 4, 8, 16])
    for r in g.rows:
        assert r["discarded"] <= 1 / r["q"] + 1e-12
    w = winf(mu0, mu1).value
    assert g.lip <= w * 16 ** (1 / 16) + 1e-12
    assert lip_const(g.limit_plan) == pytest.approx(w)
    m0, m1 = g.limit_plan.endpoint_masses()
    assert np.allclose(m0, mu0.masses) and np.allclose(m1, mu1.masses)


def test_good_infty_plan_rejects_bad_schedule():
    with pytest.raises(ValueError):
        good_infty_plan(DIRAC0, SPLIT, [4, 2])


def test_result_serialises_certificate():
    d = optimal_coupling_q(DIRAC0, SPLIT, 2, exact=True).to_dict()
    assert d["value"] == pytest.approx(0.790569, abs=1e-6)
    assert {"u", "v", "optimal", "pivot_rule"} <= set(d["certificate"])
