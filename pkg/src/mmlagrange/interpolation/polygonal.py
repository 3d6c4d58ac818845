"""Polygonal geodesic interpolation of a plan on the limit space by plans on
the terms of a converging sequence."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from ..ambient import Density, FiniteSpace, SpaceSequence
from ..plans import (CurvePlan, compression, curve_costs, glue, ke_q, lip_const,
                     with_masses)
from ..transport import good_infty_plan, lift_to_dynamical, optimal_coupling_q, winf
from .correction import LegPaths, correct_chain
from .curvature import cd_infty_bound, mcp_bound


@dataclass(frozen=True)
class Ball:
    center: np.ndarray
    radius: float

    def distance(self, template, coords) -> np.ndarray:
        """Distance from coordinates to the closed ball."""
        d = template.distance(template.as_coords(coords), template.as_coords(self.center))
        return np.maximum(d - self.radius, 0.0)


def enclosing_ball(space: FiniteSpace, coords, margin: float = None) -> Ball:
    """Ball centred at one of the given coordinates and containing all of them,
    enlarged by ``margin`` (the largest nearest-neighbour gap by default)."""
    t = space.template
    c = t.as_coords(coords).reshape(-1, t.dim)
    if t.kind == "segment":
        lo, hi = float(c.min()), float(c.max())
        center, radius = np.array([(lo + hi) / 2]), (hi - lo) / 2
    else:
        uniq = np.unique(c, axis=0)
        dd = t.distance(uniq[:, None, :], uniq[None, :, :])
        k = int(np.argmin(dd.max(axis=1)))
        center, radius = uniq[k], float(dd[k].max())
    if margin is None:
        d = space.dist + np.diag(np.full(len(space), np.inf))
        margin = float(d.min(axis=1).max()) if len(space) > 1 else 1.0
    return Ball(center, radius + margin)


def approx_density(rho_limit: Density, target: FiniteSpace, ball: Ball) -> Density:
    """Bring a density of the limit space onto another space.

    The density is read off at the nearest limit point of each target point,
    multiplied by the cutoff (r - d(., B))^+ / r, which equals 1 on the ball
    and vanishes outside its double, clamped to [0, L] with L the sup-norm of
    the input, and renormalised.
    """
    limit = rho_limit.space
    if np.any(ball.distance(limit.template, limit.points[rho_limit.values > 0]) > 1e-12):
        raise ValueError("density is not supported in the ball")
    L = rho_limit.sup_norm()
    near, _ = limit.snap(target.points)
    g = rho_limit.values[near]
    chi = np.maximum(ball.radius - ball.distance(target.template, target.points), 0.0) / ball.radius
    tilde = np.clip(chi * g, 0.0, L)
    mass = float(tilde @ target.weights)
    if mass <= 0:
        raise ValueError("no mass retained on the target space")
    return Density(target, tilde / mass)


def chebyshev_gate(leg_plan: CurvePlan, q: float, wq_value: float) -> tuple:
    """Keep curves with d(start, end)^q <= W_q^((q-1)/2).

    Returns the 0/1 indicator and the discarded mass, which is checked
    against W_q^((q+1)/2).
    """
    if wq_value < 0:
        raise ValueError("W_q must be nonnegative")
    first, last = leg_plan.endpoints()
    d = leg_plan.template.distance(first, last)
    thr = wq_value ** ((q - 1) / 2)
    keep = d ** q <= thr * (1 + 1e-12)
    discarded = float(leg_plan.masses[~keep].sum())
    if discarded > wq_value ** ((q + 1) / 2) + 1e-9:
        raise RuntimeError("discarded mass exceeds the Chebyshev bound; is the leg optimal?")
    return keep.astype(float), discarded


def plan_to_leg(plan: CurvePlan, q: float) -> LegPaths:
    first, last = plan.endpoints()
    return LegPaths(plan.space.index_of(first), plan.space.index_of(last),
                    list(plan.masses), list(curve_costs(plan, q)))


def submarginal_correction(densities, legs, gates, q: float = 2.0, weights=None, tol: float = 1e-9):
    """Correct a chain of legs so that every curve outside its gate loses its
    mass while consecutive legs keep sharing marginals.

    Parameters
    ----------
    densities : list of Density, or list of per-point density values
        The marginals of the chain before correction.
    legs : list of CurvePlan, or list of LegPaths
        LegPaths with ``Fraction`` masses are corrected exactly; then
        ``weights`` must be given.
    gates : list of per-curve indicators
    q : float
        Exponent for the kinetic energies of CurvePlan legs.

    Returns
    -------
    densities, legs, CorrectionResult
        Corrected densities and legs in the input form, plus the raw result
        with the flags a-d.
    """
    as_plans = isinstance(legs[0], CurvePlan)
    if as_plans:
        space = legs[0].space
        weights = list(space.weights)
        chain = [plan_to_leg(p, q) for p in legs]
    else:
        if weights is None:
            raise ValueError("weights are required with LegPaths input")
        chain = list(legs)
    gates = [[bool(g) for g in gate] for gate in gates]
    res = correct_chain(weights, chain, gates, tol=tol)
    given = [list(getattr(d, "masses", None) if isinstance(d, Density) else
                  [v * w for v, w in zip(d, weights)]) for d in densities]
    before = [chain[0].push("start", len(weights))] + [leg.push("end", len(weights)) for leg in chain]
    for g, b in zip(given, before):
        if any(abs(float(x) - float(y)) > tol for x, y in zip(g, b)):
            raise ValueError("densities do not match the leg marginals")
    if as_plans:
        out_d = [Density.from_masses(space, np.array(m, dtype=float)) for m in res.measures]
        out_l = [with_masses(p, np.array(leg.masses, dtype=float)) for p, leg in zip(legs, res.legs)]
    else:
        out_d = [[m / w if w > 0 else m * 0 for m, w in zip(meas, weights)] for meas in res.measures]
        out_l = res.legs
    return out_d, out_l, res


@dataclass
class PolygonalBuild:
    """One polygonal build on one term of a sequence, with diagnostics."""

    M: int
    regime: str
    exponent: float
    feasible: bool
    legs: list = field(default_factory=list)
    gates: list = field(default_factory=list)
    result: CurvePlan = None
    densities_before: list = field(default_factory=list)
    densities_after: list = field(default_factory=list)
    certificate: object = None
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "M": self.M,
            "regime": self.regime,
            "exponent": "inf" if math.isinf(self.exponent) else self.exponent,
            "feasible": self.feasible,
            "certificate": None if self.certificate is None else self.certificate.to_dict(),
            "diagnostics": _jsonable(self.diagnostics),
        }


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, Fraction)):
        return float(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    return x


def _term(seq: SpaceSequence, n) -> FiniteSpace:
    return seq.limit if n in ("limit", -1, None) else seq.terms[n]


def grid_marginals(eta: CurvePlan, M: int) -> list:
    """Snapped time marginals of eta at i/M as densities on its space."""
    out = []
    for i in range(M + 1):
        mass, _ = eta.snapped_marginal(i / M)
        out.append(Density.from_masses(eta.space, mass))
    return out


def jensen_sides(eta: CurvePlan, M: int, q: float) -> tuple:
    """Sum of W_q^q between consecutive exact grid marginals, and M^(1-q) Ke_q."""
    lhs = 0.0
    t = eta.template
    marg = [eta.marginal(i / M) for i in range(M + 1)]
    for (p0, m0), (p1, m1) in zip(marg[:-1], marg[1:]):
        pts = np.unique(np.concatenate([p0, p1]), axis=0)
        aux = FiniteSpace(t, pts, np.ones(len(pts)))
        i0 = aux.index_of(p0, tol=0.0)
        i1 = aux.index_of(p1, tol=0.0)
        a = np.bincount(i0, weights=m0, minlength=len(pts))
        b = np.bincount(i1, weights=m1, minlength=len(pts))
        lhs += optimal_coupling_q(Density(aux, a), Density(aux, b), q).cost
    return lhs, M ** (1 - q) * ke_q(eta, q)


def build_polygonal_q(eta: CurvePlan, seq: SpaceSequence, n, M: int, q: float, regime: str,
                      K: float = 0.0, N: float = None, steps: int = 1, k_mid: int = 8) -> PolygonalBuild:
    """M-polygonal q-plan on term n interpolating the grid marginals of eta.

    Pipeline: transfer the M+1 grid marginals onto the term, join consecutive
    ones by optimal lifts, gate each leg (``cd_general`` and ``mcp``), apply
    the submarginal correction and glue on the uniform grid.
    """
    if regime not in ("cd_nonneg", "cd_general", "mcp"):
        raise ValueError(f"unknown regime {regime!r}")
    if regime == "mcp" and N is None:
        raise ValueError("the mcp regime needs N")
    target = _term(seq, n)
    rhos = grid_marginals(eta, M)
    nodes = np.concatenate([c.nodes for c in eta.curves])
    ball = enclosing_ball(eta.space, nodes)
    tilde = [approx_density(r, target, ball) for r in rhos]
    results = [optimal_coupling_q(tilde[i], tilde[i + 1], q) for i in range(M)]
    wq = [r.value for r in results]
    legs = [lift_to_dynamical(r, steps) for r in results]
    gates, discarded = [], []
    for leg, w in zip(legs, wq):
        if regime == "cd_nonneg":
            gates.append(np.ones(len(leg)))
            discarded.append(0.0)
        else:
            g, dm = chebyshev_gate(leg, q, w)
            gates.append(g)
            discarded.append(dm)
    sigma = float(sum(discarded))
    jl, jr = jensen_sides(eta, M, q)
    diag = {
        "term": n if isinstance(n, str) else int(n) if n is not None else "limit",
        "n_points": len(target),
        "wq_legs": wq,
        "discarded": discarded,
        "sigma": sigma,
        "discarded_bound": float(sum(w ** ((q + 1) / 2) for w in wq)),
        "jensen_lhs": jl,
        "jensen_rhs": jr,
        "ke_eta": ke_q(eta, q),
    }
    build = PolygonalBuild(M, regime, q, False, legs, gates, None, tilde, [], None, diag)
    if sigma > 0.5:
        diag["failure"] = "discarded mass exceeds one half"
        return build
    dens, corrected, res = submarginal_correction(tilde, legs, gates, q=q)
    result = glue(corrected)
    ke_legs = [ke_q(leg, q) for leg in corrected]
    base = max(d.sup_norm() for d in dens)
    kneg = max(-K, 0.0)
    if regime == "cd_nonneg":
        cert = cd_infty_bound(max(K, 0.0), 0.0, base)
    else:
        # gated curves are no longer than W_q^((q-1)/(2q))
        scale = max(w ** ((q - 1) / (2 * q)) for w in wq)
        cert = cd_infty_bound(K, scale, base) if regime == "cd_general" else mcp_bound(K, N, scale, base)
    comp, meta = compression(result, k_mid=k_mid, return_meta=True)
    lq = [float((np.abs(a.values - b.values) ** q) @ target.weights) ** (1 / q)
          for a, b in zip((dens[0], dens[-1]), (tilde[0], tilde[-1]))]
    diag.update({
        "correction_flags": res.flags,
        "ke_result": ke_q(result, q),
        "ke_legs_scaled": float(sum(M ** (q - 1) * k for k in ke_legs)),
        "ke_bound": M ** (q - 1) / (1 - sigma) * float(sum(w ** q for w in wq)),
        "comp_eta": compression(eta, k_mid=k_mid),
        "comp_result": comp,
        "comp_certificate": cert.value,
        "comp_sampling": meta,
        "lip_result": lip_const(result),
        "sup_after": [d.sup_norm() for d in dens],
        "sup_before": [d.sup_norm() for d in tilde],
        "endpoint_lq_change": lq,
        "n_curves": len(result),
        "K": K,
        "K_neg": kneg,
    })
    return PolygonalBuild(M, regime, q, True, corrected, gates, result, tilde, dens, cert, diag)


def _restricted_reference(space: FiniteSpace, ball: Ball, factor: float) -> Density:
    # the measure is restricted to the closed enlarged ball
    d = space.template.distance(space.points, ball.center)
    inside = d <= ball.radius * (1 + factor) + 1e-12
    w = np.where(inside, space.weights, 0.0)
    return Density(space, np.where(inside, 1.0 / w.sum(), 0.0))


def _choose_enlargement(spaces, ball: Ball, grid=None) -> float:
    """Smallest eps on a grid whose sphere of radius (1 + eps) r carries no
    discrete mass."""
    grid = np.geomspace(0.05, 1.0, 37) if grid is None else grid
    for eps in grid:
        R = ball.radius * (1 + eps)
        ok = True
        for s in spaces:
            d = s.template.distance(s.points, ball.center)
            if np.any(np.abs(d - R) <= 1e-9 * max(1.0, R)):
                ok = False
                break
        if ok:
            return float(eps)
    raise RuntimeError("no enlargement on the grid avoids the discrete points")


def winf_marginal_transfer(densities, seq: SpaceSequence, n, tol: float = 1e-12) -> tuple:
    """Transfer a chain of limit densities onto term n keeping W_inf control.

    Returns the transferred densities and a diagnostics dict. Sup-norm
    statements refer to densities against the restricted and normalised
    reference measures.
    """
    limit = seq.limit
    target = _term(seq, n)
    mus = [d.masses / d.total for d in densities]
    M = len(mus) - 1
    support = np.flatnonzero(np.sum(mus, axis=0) > 0)
    ball = enclosing_ball(limit, limit.points[support], margin=0.0)
    if ball.radius == 0:
        pitch = limit.dist + np.diag(np.full(len(limit), np.inf))
        ball = Ball(ball.center, float(pitch.min()))
    eps = _choose_enlargement([limit, target], ball)
    ref_lim = _restricted_reference(limit, ball, eps)
    ref_n = _restricted_reference(target, ball, eps)
    alpha_res = optimal_coupling_q(ref_lim, ref_n, 2)
    A = np.array(alpha_res.coupling.matrix)
    eps_n = math.sqrt(alpha_res.value)
    D = limit.template.distance(limit.points[:, None, :], target.points[None, :, :])
    E = D <= eps_n * (1 + 1e-12) + tol
    AE = A * E
    m_lim = ref_lim.masses
    frac = np.divide(AE.sum(axis=1), m_lim, out=np.zeros(len(limit)), where=m_lim > 0)
    frac = np.minimum(frac, 1.0)

    dens_lim = [Density(limit, np.divide(mu, m_lim, out=np.zeros_like(mu), where=m_lim > 0)) for mu in mus]
    if any(np.any((m_lim == 0) & (mu > 0)) for mu in mus):
        raise ValueError("densities are not supported in the restricted ball")
    solved = [winf(dens_lim[i], dens_lim[i + 1]) for i in range(M)]
    # unit total mass, so that the marginals are the mus
    couplings = [np.array(r.coupling.matrix, dtype=float) for r in solved]
    couplings = [c / c.sum() for c in couplings]
    winf_lim = [float(r.value) for r in solved]
    nu = [mu.copy() for mu in mus]
    for k in range(1, M + 2):
        prev = [v.copy() for v in nu]
        nu[k - 1] = prev[k - 1] * frac
        for i in range(k - 1, M):
            r = np.divide(nu[i], prev[i], out=np.zeros_like(nu[i]), where=prev[i] > 0)
            couplings[i] = couplings[i] * r[:, None]
            nu[i + 1] = couplings[i].sum(axis=0)
        for i in range(k - 2, -1, -1):
            r = np.divide(nu[i + 1], prev[i + 1], out=np.zeros_like(nu[i + 1]), where=prev[i + 1] > 0)
            couplings[i] = couplings[i] * r[None, :]
            nu[i] = couplings[i].sum(axis=1)
    retained = float(nu[0].sum())
    if retained <= 0:
        raise RuntimeError("the near-diagonal set retains no mass")
    c_n = 1.0 - retained
    # rounding residue of an exact retention
    c_n = 0.0 if c_n < 1e-12 else c_n
    row = AE.sum(axis=1)
    out, sup_lim, sup_n = [], [], []
    m_n = ref_n.masses
    for i in range(M + 1):
        beta = np.divide(nu[i], row, out=np.zeros_like(nu[i]), where=row > 0)[:, None] * AE
        mass = beta.sum(axis=0) + c_n * m_n
        out.append(Density.from_masses(target, mass / mass.sum()))
        sup_lim.append(float(dens_lim[i].values.max()))
        sup_n.append(float(np.divide(mass, m_n, out=np.zeros_like(mass), where=m_n > 0).max()))
    winf_n = [float(winf(out[i], out[i + 1]).value) for i in range(M)]
    diag = {
        "eps_n": eps_n,
        "enlargement": eps,
        "c_n": c_n,
        "c_n_bound": eps_n ** 2 * sum(sup_lim),
        "winf_limit": winf_lim,
        "winf_term": winf_n,
        "winf_ok": [wn <= wl + 2 * eps_n + 1e-9 for wn, wl in zip(winf_n, winf_lim)],
        "sup_limit": sup_lim,
        "sup_term": sup_n,
        "sup_ok": [sn <= sl + c_n + 1e-9 for sn, sl in zip(sup_n, sup_lim)],
    }
    return out, diag


def build_polygonal_inf(eta: CurvePlan, seq: SpaceSequence, n, M: int, regime: str,
                        q_schedule=(2, 4, 8, 16), K: float = 0.0, N: float = None,
                        steps: int = 1, k_mid: int = 8) -> PolygonalBuild:
    """M-polygonal inf-plan on term n: W_inf transfer of the grid marginals,
    one well-compressed inf-optimal leg per cell, glued on the uniform grid."""
    if regime not in ("cd", "mcp"):
        raise ValueError(f"unknown regime {regime!r}")
    if regime == "mcp" and N is None:
        raise ValueError("the mcp regime needs N")
    rhos = grid_marginals(eta, M)
    dens, tdiag = winf_marginal_transfer(rhos, seq, n)
    legs, rows, winf_legs = [], [], []
    for i in range(M):
        g = good_infty_plan(dens[i], dens[i + 1], q_schedule, steps=steps)
        legs.append(g.limit_plan)
        rows.append(g.rows)
        winf_legs.append(g.winf_value)
    result = glue(legs)
    lip_eta = lip_const(eta)
    lip_legs = [lip_const(leg) for leg in legs]
    comp_eta = compression(eta, k_mid=k_mid)
    comp, meta = compression(result, k_mid=k_mid, return_meta=True)
    kneg = max(-K, 0.0)
    factor = math.exp(kneg / 12.0 * lip_eta ** 2 / M ** 2)
    base = max(d.sup_norm() for d in dens)
    scale = max(winf_legs)
    cert = cd_infty_bound(K, scale, base) if regime == "cd" else mcp_bound(K, N, scale, base)
    diag = {
        "term": n if isinstance(n, str) else int(n) if n is not None else "limit",
        "transfer": tdiag,
        "winf_legs": winf_legs,
        "schedule_rows": rows,
        "lip_eta": lip_eta,
        "lip_result": lip_const(result),
        "lip_legs_scaled": M * max(lip_legs),
        "comp_eta": comp_eta,
        "comp_result": comp,
        "comp_sampling": meta,
        "factor": factor,
        "comp_surrogate_bound": factor * comp_eta,
        "comp_certificate": cert.value,
        "K": K,
    }
    if regime == "mcp":
        diag["mcp_factor"] = 2.0 ** N * (mcp_bound(K, N, lip_eta / M, 1.0).value / 2.0 ** N)
    return PolygonalBuild(M, regime, math.inf, True, legs, [np.ones(len(l)) for l in legs], result,
                          rhos, dens, cert, diag)
