import math
import warnings

import numpy as np
import pytest

from oracles import ckn_grid, tau_formula

from mmlagrange.ambient import Density, GeodesicTemplate, discretize
from mmlagrange.interpolation import (DimensionOneWarning, c_kn, c_kn_grid, cd_infty_bound, check_cd_convexity,
                                      check_mcp_inequality, entropy, mcp_bound, renyi, tau)
from mmlagrange.plans import CurvePlan, DiscreteCurve
from mmlagrange.transport import lift_to_dynamical, optimal_coupling_q

SEG = GeodesicTemplate("segment", (1.0,))


def test_tau_flat_branch():
    assert tau(0, 3, 0.3, 5) == 0.3


def test_tau_negative_curvature_value():
    # frozen from the displayed formula
    assert tau(-1, 2, 0.5, 1) == pytest.approx(0.4708553079158379, abs=1e-12)
    assert tau_formula(-1, 2, 0.5, 1) == pytest.approx(0.4708553079158379, abs=1e-15)


def test_tau_supercritical_is_infinite():
    assert tau(1, 2, 0.5, 4.0) == math.inf


def test_tau_matches_formula_on_grid():
    for K in (-4, -1, 0.5, 2):
        for N in (2, 3.5, 7):
            for t in (0.1, 0.5, 0.9):
                for theta in (0.1, 0.7, 1.5):
                    assert tau(K, N, t, theta) == pytest.approx(tau_formula(K, N, t, theta), rel=1e-12)


def test_tau_dimension_one_warns():
    with pytest.warns(DimensionOneWarning):
        assert tau(-1, 1, 0.4, 1.0) == 0.4


def test_tau_rejects_bad_input():
    with pytest.raises(ValueError):
        tau(0, 2, 1.5, 1)
    with pytest.raises(ValueError):
        tau(0, 2, 0.5, -1)


def test_ckn_flat_is_one():
    assert c_kn(0, 3, 10.0) == 1.0
    assert c_kn(2, 3, 10.0) == 1.0


def test_ckn_small_radius_value():
    # frozen from the grid oracle
    assert ckn_grid(-1, 2, 0.1) == pytest.approx(1.00166750019844, abs=1e-12)
    assert 1 < c_kn(-1, 2, 0.1) < 1.02
    assert c_kn(-1, 2, 0.1) == pytest.approx(1.00166750019844, rel=1e-9)


def test_ckn_matches_grid_oracle():
    for K, N, r in ((-4, 5, 1.0), (-1, 3, 2.0), (-2, 2, 0.5)):
        assert c_kn(K, N, r) == pytest.approx(ckn_grid(K, N, r), rel=1e-6)
        assert c_kn(K, N, r) >= c_kn_grid(K, N, r, n_theta=20, n_t=200) - 1e-12


def test_ckn_monotone_and_tends_to_one():
    rs = np.geomspace(1e-4, 3, 25)
    for K in (-1, -4):
        for N in (2, 5):
            vals = [c_kn(K, N, r) for r in rs]
            assert all(b >= a for a, b in zip(vals, vals[1:]))
            assert c_kn(K, N, 1e-4) <= 1 + 1e-3


def test_compression_bounds():
    assert cd_infty_bound(0, 3.0, 2.5).value == 2.5
    assert cd_infty_bound(-12, 1.0, 1.0).value == pytest.approx(math.e)
    assert mcp_bound(0, 2, 1.0, 1.5).value == pytest.approx(6.0)


def test_entropy_examples():
    s = discretize(SEG, 5)
    assert entropy(Density(s, np.ones(5))) == pytest.approx(0.0)
    two = discretize(SEG, 2)
    assert entropy(Density(two, np.array([2.0, 0.0]))) == pytest.approx(math.log(2))
    for N in (1.5, 3, 10):
        assert renyi(Density(s, np.ones(5)), N) == pytest.approx(1.0)


def test_cd_convexity_on_stationary_plan():
    s = discretize(SEG, 5)
    plan = CurvePlan(tuple(DiscreteCurve.constant(x) for x in s.points[:, 0]), s.weights, s)
    rep = check_cd_convexity(plan, K=-1)
    assert rep["violations"] == 0
    assert rep["max_residual"] == pytest.approx(0.0, abs=1e-12)


def test_cd_convexity_dirac_reports_values():
    s = discretize(SEG, 5)
    plan = CurvePlan((DiscreteCurve.geodesic(SEG, 0.0, 1.0),), np.ones(1), s)
    rep = check_cd_convexity(plan, K=0)
    assert rep["rows"][0]["entropy"] == pytest.approx(math.log(1 / s.weights[0]))


def test_cd_convexity_residuals_shrink_under_refinement():
    worst = []
    for n in (32, 64, 128):
        s = discretize(SEG, n)
        x = s.points[:, 0]
        mu0 = Density(s, np.where(x <= 0.5, 1.0, 0.0)).normalized()
        mu1 = Density(s, np.where(x >= 0.5, 1.0, 0.0)).normalized()
        plan = lift_to_dynamical(optimal_coupling_q(mu0, mu1, 2))
        worst.append(max(check_cd_convexity(plan, K=0)["max_residual"], 0.0))
    assert worst[-1] <= worst[0] + 1e-12
    assert worst[-1] <= 0.05


def test_mcp_endpoint_and_degenerate_cases():
    s = discretize(SEG, 9)
    mu0 = Density(s, np.where(s.points[:, 0] <= 0.5, 1.0, 0.0)).normalized()
    rep = check_mcp_inequality(s, mu0, o=8, K=0, N=2, t_samples=[0.0])
    assert rep["rows"][0]["residual"] == pytest.approx(0.0, abs=1e-12)
    dirac = Density.from_masses(s, np.eye(9)[8])
    assert check_mcp_inequality(s, dirac, o=8, K=0, N=2)["degenerate"]


def test_mcp_flat_residual_trend():
    worst = []
    for n in (17, 33, 65):
        s = discretize(SEG, n)
        mu0 = Density(s, np.where(s.points[:, 0] <= 0.5, 1.0, 0.0)).normalized()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            rep = check_mcp_inequality(s, mu0, o=n - 1, K=0, N=1)
        worst.append(rep["max_residual"])
    assert worst[-1] <= worst[0] + 1e-12
