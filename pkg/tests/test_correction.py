from fractions import Fraction

import pytest

from instances import gated_chains
from oracles import markov_restriction

from mmlagrange.interpolation import LegPaths, correct_chain

F = Fraction


def test_open_gates_leave_chain_unchanged():
    legs = [LegPaths([0, 0], [1, 2], [F(1, 2), F(1, 2)], [F(1), F(2)]),
            LegPaths([1, 2], [3, 3], [F(1, 2), F(1, 2)], [F(1), F(1)])]
    res = correct_chain([F(1, 4)] * 4, legs, [[True, True], [True, True]])
    assert res.sigma == 0
    assert [l.masses for l in res.legs] == [l.masses for l in legs]
    assert all(res.flags.values())


def test_single_leg_gate_renormalises_survivor():
    leg = LegPaths([0, 1], [2, 3], [F(1, 2), F(1, 2)], [F(1), F(1)])
    res = correct_chain([F(1, 4)] * 4, [leg], [[True, False]])
    assert res.legs[0].masses == [F(1), F(0)]
    # L1 change of the start measure is 1 = 2 sigma, so bound (c) is tight
    assert res.details["l1_change"][0] == F(1) == 2 * res.sigma
    assert all(res.flags.values())


def test_rejects_inconsistent_chain_and_heavy_discard():
    a = LegPaths([0], [1], [F(1)])
    b = LegPaths([2], [3], [F(1)])
    with pytest.raises(ValueError):
        correct_chain([F(1, 4)] * 4, [a, b], [[True], [True]])
    c = LegPaths([0, 1], [1, 1], [F(3, 4), F(1, 4)])
    with pytest.raises(ValueError):
        correct_chain([F(1, 4)] * 4, [c], [[False, True]])


def test_exact_correction_matches_markov_oracle():
    for legs, gates in gated_chains(seed=21, count=40):
        res = correct_chain([F(1, 4)] * 4, legs, gates)
        assert all(res.flags.values()), res.flags
        want = markov_restriction(legs, gates, 4)
        assert [l.masses for l in res.legs] == want


def test_float_mode_agrees_with_exact():
    for legs, gates in gated_chains(seed=5, count=10):
        flo = [LegPaths(l.starts, l.ends, [float(m) for m in l.masses], [float(c) for c in l.costs]) for l in legs]
        a = correct_chain([F(1, 4)] * 4, legs, gates)
        b = correct_chain([0.25] * 4, flo, gates)
        for la, lb in zip(a.legs, b.legs):
            assert [float(x) for x in la.masses] == pytest.approx(lb.masses, abs=1e-12)
