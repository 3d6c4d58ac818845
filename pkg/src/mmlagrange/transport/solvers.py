"""Exact W_q and W_inf transport between densities on finite spaces, lifts
to dynamical plans, and the q -> inf construction of inf-plans."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce

import numpy as np

from ..ambient import Density
from ..plans import CurvePlan, DiscreteCurve, lip_const, restrict_event
from .flow import max_flow_coupling, unit_matching_coupling
from .simplex import transport_simplex

MARGINAL_TOL = 1e-9
FLOW_TOL = 1e-10
MAX_DENOMINATOR = 10**6
MAX_UNITS = 512


@dataclass(frozen=True, eq=False)
class Coupling:
    """Nonnegative matrix whose row and column sums are the two marginals."""

    source: Density
    target: Density
    matrix: np.ndarray
    exact: dict = None

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=float)
        if mat.shape != (len(self.source.space), len(self.target.space)):
            raise ValueError("coupling shape does not match the spaces")
        if np.any(mat < 0):
            raise ValueError("coupling entries must be nonnegative")
        if (np.max(np.abs(mat.sum(axis=1) - self.source.masses)) > MARGINAL_TOL
                or np.max(np.abs(mat.sum(axis=0) - self.target.masses)) > MARGINAL_TOL):
            raise ValueError("coupling marginals do not match")
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)

    def support(self):
        return list(zip(*np.nonzero(self.matrix > 0)))


@dataclass(frozen=True, eq=False)
class TransportResult:
    coupling: Coupling
    value: float
    exponent: float
    certificate: dict = field(default_factory=dict)
    cost: object = None

    def to_dict(self) -> dict:
        cert = {k: _plain(v) for k, v in self.certificate.items()}
        return {
            "value": float(self.value),
            "exponent": "inf" if math.isinf(self.exponent) else float(self.exponent),
            "cost": None if self.cost is None else float(self.cost),
            "coupling": [[int(i), int(j), float(self.coupling.matrix[i, j])] for i, j in self.coupling.support()],
            "certificate": cert,
        }


def _plain(v):
    if isinstance(v, np.ndarray):
        return [float(x) for x in v]
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, (np.floating, Fraction)):
        return float(v)
    if isinstance(v, np.integer):
        return int(v)
    return v


def _check_pair(mu0: Density, mu1: Density):
    if mu0.space.template != mu1.space.template:
        raise ValueError("densities live on different templates")
    if abs(mu0.total - mu1.total) > MARGINAL_TOL:
        raise ValueError("total masses differ")


def _cross_distances(mu0: Density, mu1: Density) -> np.ndarray:
    if mu0.space is mu1.space:
        return mu0.space.dist
    t = mu0.space.template
    return t.distance(mu0.space.points[:, None, :], mu1.space.points[None, :, :])


def _rational(x: float) -> Fraction:
    fr = Fraction(float(x)).limit_denominator(MAX_DENOMINATOR)
    if abs(float(fr) - float(x)) > 1e-15 * max(1.0, abs(float(x))):
        raise ValueError(f"{x!r} is not a small-denominator rational")
    return fr


def _power_mean(flows, dists, q, total):
    """(sum flows·dists^q / total)^(1/q), computed relative to the largest
    distance so that large q neither underflows nor loses monotonicity."""
    dmax = max((d for f, d in zip(flows, dists) if f > 0), default=0)
    if dmax == 0:
        return 0.0
    ratio = sum(f * (d / dmax) ** q for f, d in zip(flows, dists) if f > 0) / total
    return float(dmax) * float(ratio) ** (1.0 / q)


def optimal_coupling_q(mu0: Density, mu1: Density, q: float, exact: bool = False,
                       forbid: np.ndarray = None, init: str = "northwest",
                       rule: str = "dantzig") -> TransportResult:
    """Optimal coupling for the cost d^q, by the transportation simplex.

    Parameters
    ----------
    mu0, mu1 : Density
        Marginals with equal total mass.
    q : float
        Exponent in (1, inf).
    exact : bool
        Solve in rational arithmetic; masses and distances must be
        small-denominator rationals and q an integer.
    forbid : bool array, optional
        Pairs that may not carry mass. They get a large penalty cost, raised
        until the optimum avoids them.
    init, rule : str
        Initial basis and entering rule of the simplex.

    Returns
    -------
    TransportResult
        ``value`` is the minimal cost to the power 1/q; the certificate holds
        dual potentials and the complementary-slackness residual.
    """
    if not 1 < q < math.inf:
        raise ValueError("q must lie in (1, inf)")
    _check_pair(mu0, mu1)
    # float masses far below rounding level only stall the simplex
    floor = 0 if exact else 1e-15 * max(mu0.total, mu1.total)
    rows = np.flatnonzero(mu0.masses > floor)
    cols = np.flatnonzero(mu1.masses > floor)
    D = _cross_distances(mu0, mu1)[np.ix_(rows, cols)]
    blocked = None if forbid is None else np.asarray(forbid, bool)[np.ix_(rows, cols)]
    if exact:
        if q != int(q):
            raise ValueError("exact mode needs an integer exponent")
        q = int(q)
        a = [_rational(x) for x in mu0.masses[rows]]
        b = [_rational(x) for x in mu1.masses[cols]]
        if sum(a) != sum(b):
            raise ValueError("rational masses are not balanced")
        Dq = [[_rational(d) for d in row] for row in D]
        C = [[d ** q for d in row] for row in Dq]
        if blocked is not None:
            big = 1 + sum(sum(row) for row in C)
            C = [[big * (len(rows) + len(cols)) if blocked[i][j] else c for j, c in enumerate(row)] for i, row in enumerate(C)]
        scale_q = 1
    else:
        a = mu0.masses[rows]
        b = mu1.masses[cols] * (a.sum() / mu1.masses[cols].sum())
        scale = float(D.max()) if D.size else 0.0
        if q > 4 and scale > 0:
            w = winf(mu0, mu1).value
            if w > 0:
                scale = w
        scale = scale or 1.0
        with np.errstate(over="ignore"):
            C = np.minimum((D / scale) ** q, 1e250)
        scale_q = scale ** q
    if blocked is not None and not exact:
        base_cost = C
        big = 1e3 * (1 + base_cost[~blocked].max(initial=0.0))
        while True:
            C = np.where(blocked, big, base_cost)
            flow, u, v, pivots = transport_simplex(a, b, C, init=init, rule=rule)
            leak = sum(float(x) for (i, j), x in flow.items() if blocked[i][j])
            if leak <= 1e-13 or big > 1e12:
                break
            big *= 1e3
        for c in [c for c in flow if blocked[c[0]][c[1]]]:
            if flow[c] <= 1e-13:
                flow[c] = 0.0
    else:
        flow, u, v, pivots = transport_simplex(a, b, C, init=init, rule=rule)
    mat = np.zeros((len(mu0.space), len(mu1.space)))
    exact_flow = {}
    for (i, j), x in flow.items():
        mat[rows[i], cols[j]] = float(x)
        if exact and x > 0:
            exact_flow[(int(rows[i]), int(cols[j]))] = x
    if blocked is not None and any(blocked[i][j] and x > 0 for (i, j), x in flow.items()):
        raise RuntimeError("forbidden pairs carry mass; the restricted problem is infeasible")
    cells = [(i, j) for (i, j), x in flow.items() if x > 0]
    flows = [flow[c] for c in cells]
    if exact:
        dists = [Dq[i][j] for i, j in cells]
        cost = sum(f * d ** q for f, d in zip(flows, dists))
        value = _power_mean(flows, dists, q, sum(a))
        resid, ok = _slackness_exact(C, u, v, flow)
    else:
        dists = [float(D[i, j]) for i, j in cells]
        cost = float(sum(f * d ** q for f, d in zip(flows, dists)))
        value = _power_mean(flows, dists, q, float(np.sum(flows)))
        resid, ok = _slackness_float(C, u, v, flow)
    cert = {
        "u": [float(x) * scale_q for x in u],
        "v": [float(x) * scale_q for x in v],
        "rows": rows.tolist(),
        "cols": cols.tolist(),
        "slackness_residual": resid * scale_q,
        "optimal": ok,
        "pivots": pivots,
        "pivot_rule": rule,
    }
    coupling = Coupling(mu0, mu1, mat, exact_flow or None)
    return TransportResult(coupling, value, float(q), cert, cost)


def _slackness_exact(C, u, v, flow):
    worst = Fraction(0)
    for i in range(len(u)):
        for j in range(len(v)):
            r = C[i][j] - u[i] - v[j]
            if r < 0:
                worst = max(worst, -r)
            if flow.get((i, j), 0) > 0:
                worst = max(worst, abs(r))
    return float(worst), worst == 0


def _slackness_float(C, u, v, flow):
    C = np.asarray(C, dtype=float)
    red = C - np.asarray(u)[:, None] - np.asarray(v)[None, :]
    worst = float(max(0.0, -red.min()))
    for (i, j), x in flow.items():
        if x > 0:
            worst = max(worst, abs(float(red[i, j])))
    scale = 1.0 + float(np.abs(C[C < 1e249]).max(initial=0.0))
    return worst, worst <= 1e-8 * scale


def _common_units(a, b):
    try:
        fa = [_rational(x) for x in a]
        fb = [_rational(x) for x in b]
    except ValueError:
        return None
    if sum(fa) != sum(fb):
        return None
    den = reduce(lambda x, y: x * y // math.gcd(x, y), [f.denominator for f in fa + fb], 1)
    units_a = [int(f * den) for f in fa]
    if sum(units_a) > MAX_UNITS:
        return None
    return den, units_a, [int(f * den) for f in fb]


def winf(mu0: Density, mu1: Density, route: str = "auto") -> TransportResult:
    """Bottleneck transport: least threshold admitting a coupling supported
    on pairs at distance at most the threshold.

    The threshold is bisected over the sorted distinct distances. Each
    feasibility test is a perfect matching on unit-expanded masses when the
    masses share a small common denominator, and a max-flow with real
    capacities (tolerance 1e-10) otherwise.
    """
    _check_pair(mu0, mu1)
    rows = np.flatnonzero(mu0.masses > 0)
    cols = np.flatnonzero(mu1.masses > 0)
    D = _cross_distances(mu0, mu1)[np.ix_(rows, cols)]
    a = mu0.masses[rows]
    b = mu1.masses[cols]
    units = _common_units(a, b) if route in ("auto", "matching") else None
    if route == "matching" and units is None:
        raise ValueError("masses do not share a small common denominator")
    values = np.unique(D)

    def test(thr):
        allowed = D <= thr
        if units is not None:
            ok, counts = unit_matching_coupling(units[1], units[2], allowed)
            return ok, counts / units[0]
        total, flows = max_flow_coupling(a, b, allowed)
        return total >= a.sum() - FLOW_TOL, flows

    lo, hi = 0, len(values) - 1
    best = test(values[hi])
    if not best[0]:
        raise RuntimeError("no feasible coupling at the largest distance")
    while lo < hi:
        mid = (lo + hi) // 2
        res = test(values[mid])
        if res[0]:
            hi, best = mid, res
        else:
            lo = mid + 1
    thr = float(values[hi])
    mat = np.zeros((len(mu0.space), len(mu1.space)))
    mat[np.ix_(rows, cols)] = best[1]
    # restore exact row sums lost to flow tolerance by topping up allowed pairs
    if units is None:
        mat = _repair_marginals(mat, mu0.masses, mu1.masses, _cross_distances(mu0, mu1) <= thr)
    cert = {
        "threshold": thr,
        "infeasible_below": float(values[hi - 1]) if hi > 0 else None,
        "route": "matching" if units is not None else "max_flow",
    }
    return TransportResult(Coupling(mu0, mu1, mat), thr, math.inf, cert, thr)


def _repair_marginals(mat, a, b, allowed):
    mat = np.where(mat < 0, 0.0, mat)
    for _ in range(3):
        ra = a - mat.sum(axis=1)
        rb = b - mat.sum(axis=0)
        if max(np.abs(ra).max(), np.abs(rb).max()) <= 1e-15:
            break
        for i in np.flatnonzero(ra > 0):
            for j in np.flatnonzero(allowed[i] & (rb > 0)):
                x = min(ra[i], rb[j])
                mat[i, j] += x
                ra[i] -= x
                rb[j] -= x
    return mat


def winf_limit_check(mu0: Density, mu1: Density, q_schedule, exact: bool = False) -> list:
    """Table of (q, W_q) along an increasing schedule."""
    qs = list(q_schedule)
    if any(q <= 1 for q in qs) or any(x >= y for x, y in zip(qs[:-1], qs[1:])):
        raise ValueError("schedule must increase and stay above 1")
    return [(q, optimal_coupling_q(mu0, mu1, q, exact=exact).value) for q in qs]


def lift_to_dynamical(result: TransportResult, steps: int = 16) -> CurvePlan:
    """One constant-speed geodesic per positive coupling entry."""
    if steps < 1:
        raise ValueError("steps must be positive")
    src = result.coupling.source.space
    dst = result.coupling.target.space
    if src.template != dst.template:
        raise ValueError("coupling spans two templates")
    mat = result.coupling.matrix
    cells = result.coupling.support()
    curves = [DiscreteCurve.geodesic(src.template, src.points[i], dst.points[j], steps) for i, j in cells]
    masses = np.array([mat[i, j] for i, j in cells])
    return CurvePlan(tuple(curves), masses / masses.sum(), src)


@dataclass(frozen=True, eq=False)
class GoodInftyResult:
    """Outcome of the increasing-exponent construction.

    ``plan`` is the last restricted plan of the schedule. ``limit_plan`` is
    a lift of a coupling that is optimal for the last exponent among the
    couplings supported where d <= W_inf; it keeps both marginals exactly.
    """

    plan: CurvePlan
    limit_plan: CurvePlan
    winf_value: float
    rows: list
    lip: float
    lip_bound: float


def good_infty_plan(mu0: Density, mu1: Density, q_schedule, comp_certificate=None,
                    steps: int = 16, exact: bool = False) -> GoodInftyResult:
    """For each q_k, restrict a q_k-optimal lift to the curves whose q_k-energy
    is at most (W_inf + eps_k)^q_k with eps_k = W_inf (q_k^(1/q_k) - 1)."""
    qs = list(q_schedule)
    if len(qs) < 2 or any(x >= y for x, y in zip(qs[:-1], qs[1:])) or qs[0] <= 1:
        raise ValueError("schedule must increase, stay above 1 and have two entries")
    w_inf = winf(mu0, mu1).value
    rows = []
    plan = None
    for q in qs:
        res = optimal_coupling_q(mu0, mu1, q, exact=exact)
        lifted = lift_to_dynamical(res, steps)
        eps = w_inf * (q ** (1.0 / q) - 1.0)
        d = _endpoint_distances(lifted)
        keep = d <= (w_inf + eps) * (1 + 1e-12)
        discarded = float(lifted.masses[~keep].sum())
        if not keep.any():
            raise RuntimeError(f"no mass retained at q={q}")
        plan = restrict_event(lifted, keep.astype(float))
        row = {"q": q, "wq": res.value, "eps": eps, "retained": 1.0 - discarded,
               "discarded": discarded, "bound": 1.0 / q}
        if comp_certificate is not None:
            row["comp_bound"] = comp_certificate.value / (1.0 - discarded)
        rows.append(row)
    forbid = _cross_distances(mu0, mu1) > w_inf * (1 + 1e-12)
    limit = lift_to_dynamical(optimal_coupling_q(mu0, mu1, qs[-1], forbid=forbid, init="mincost"), steps)
    eps_last = w_inf * (qs[-1] ** (1.0 / qs[-1]) - 1.0)
    return GoodInftyResult(plan, limit, w_inf, rows, lip_const(plan), w_inf + eps_last)


def _endpoint_distances(plan: CurvePlan) -> np.ndarray:
    first, last = plan.endpoints()
    return plan.template.distance(first, last)
