"""First-order calculus on finite metric measure spaces: local Lipschitz
constants over a neighbour graph, Cheeger energies, total variation and the
duality ratios against test plans."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .ambient import FiniteSpace
from .plans import CurvePlan, compression, ke_q, lip_const, pairing


def path_neighbors(space: FiniteSpace) -> tuple:
    """Consecutive points in coordinate order; closed into a cycle on the circle."""
    order = np.argsort(space.points[:, 0], kind="stable")
    n = len(order)
    nb = [set() for _ in range(n)]
    pairs = list(zip(order[:-1], order[1:]))
    if space.template.periodic and n > 2:
        pairs.append((order[-1], order[0]))
    for a, b in pairs:
        nb[a].add(int(b))
        nb[b].add(int(a))
    return tuple(tuple(sorted(s)) for s in nb)


def grid_neighbors(space: FiniteSpace) -> tuple:
    """Consecutive points along each axis among points sharing the other
    coordinates, wrapped on periodic templates."""
    pts = space.points
    n, dim = pts.shape
    nb = [set() for _ in range(n)]
    for axis in range(dim):
        others = np.delete(pts, axis, axis=1)
        keys = {}
        for i, row in enumerate(map(tuple, others)):
            keys.setdefault(row, []).append(i)
        for members in keys.values():
            members = sorted(members, key=lambda i: pts[i, axis])
            pairs = list(zip(members[:-1], members[1:]))
            if space.template.periodic and len(members) > 2:
                pairs.append((members[-1], members[0]))
            for a, b in pairs:
                nb[a].add(b)
                nb[b].add(a)
    return tuple(tuple(sorted(s)) for s in nb)


def knn_neighbors(space: FiniteSpace, k: int = 2) -> tuple:
    """Symmetrised k-nearest-neighbour graph of the space metric."""
    d = space.dist + np.diag(np.full(len(space), np.inf))
    nb = [set() for _ in range(len(space))]
    for i in range(len(space)):
        for j in np.argsort(d[i], kind="stable")[:k]:
            nb[i].add(int(j))
            nb[int(j)].add(i)
    return tuple(tuple(sorted(s)) for s in nb)


def default_neighbors(space: FiniteSpace) -> tuple:
    if space.template.dim == 1:
        return path_neighbors(space)
    return grid_neighbors(space)


def _check_graph(space: FiniteSpace, nb) -> None:
    n = len(space)
    if len(nb) != n:
        raise ValueError("one neighbour list per point is required")
    for i, row in enumerate(nb):
        for j in row:
            if not 0 <= j < n or j == i:
                raise ValueError("neighbour indices out of range")
            if i not in nb[j]:
                raise ValueError("neighbour graph must be symmetric")
    support = np.flatnonzero(space.weights > 0)
    if len(support) == 0:
        return
    # connectivity on the support, walking through any point
    seen = {int(support[0])}
    queue = deque(seen)
    while queue:
        u = queue.popleft()
        for w in nb[u]:
            if w not in seen:
                seen.add(w)
                queue.append(w)
    if not set(support.tolist()) <= seen:
        raise ValueError("neighbour graph is not connected on the support of m")


@dataclass(frozen=True, eq=False)
class SpaceFunction:
    """Real function on the points of a finite space, with the neighbour
    graph used for slopes."""

    space: FiniteSpace
    values: np.ndarray
    neighbors: tuple = field(default=None)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (len(self.space),):
            raise ValueError("one value per point is required")
        if not np.all(np.isfinite(v)):
            raise ValueError("values must be finite")
        nb = default_neighbors(self.space) if self.neighbors is None else \
            tuple(tuple(int(j) for j in row) for row in self.neighbors)
        _check_graph(self.space, nb)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "neighbors", nb)

    @classmethod
    def from_callable(cls, space: FiniteSpace, fn, neighbors=None) -> "SpaceFunction":
        return cls(space, np.asarray(fn(space.points), dtype=float), neighbors)

    def with_values(self, values) -> "SpaceFunction":
        return SpaceFunction(self.space, values, self.neighbors)


def local_lip(f: SpaceFunction) -> np.ndarray:
    """Largest difference quotient to a graph neighbour; 0 at isolated points."""
    out = np.zeros(len(f.space))
    d = f.space.dist
    v = f.values
    for i, row in enumerate(f.neighbors):
        if row:
            idx = np.asarray(row)
            out[i] = np.max(np.abs(v[idx] - v[i]) / d[i, idx])
    return out


def cheeger_p(f: SpaceFunction, p: float) -> float:
    """Sum of lip^p · m."""
    if p <= 1:
        raise ValueError("p must exceed 1; use total_variation for p = 1")
    return float(local_lip(f) ** p @ f.space.weights)


def total_variation(f: SpaceFunction) -> float:
    """Sum of lip · m."""
    return float(local_lip(f) @ f.space.weights)


def lp_norm(f: SpaceFunction, p: float) -> float:
    if np.isinf(p):
        return float(np.abs(f.values[f.space.weights > 0]).max())
    return float((np.abs(f.values) ** p) @ f.space.weights) ** (1.0 / p)


def truncate(f: SpaceFunction, level: float) -> SpaceFunction:
    """(-level) ∨ f ∧ level."""
    return f.with_values(np.clip(f.values, -level, level))


def _same_space(f: SpaceFunction, plan: CurvePlan) -> None:
    a, b = f.space, plan.space
    if a is b:
        return
    if a.template != b.template or a.points.shape != b.points.shape or not np.array_equal(a.points, b.points) \
            or not np.array_equal(a.weights, b.weights):
        raise ValueError("function and plan live on different spaces")


def duality_ratio_sobolev(f: SpaceFunction, plan: CurvePlan, p: float, q: float, comp: float = None) -> float:
    """pairing(plan, f) / (Comp^(1/p) · Ke_q^(1/q))."""
    if abs(1.0 / p + 1.0 / q - 1.0) > 1e-12:
        raise ValueError("p and q must be conjugate exponents")
    _same_space(f, plan)
    ke = ke_q(plan, q)
    if ke <= 0:
        raise ValueError("degenerate plan: zero kinetic energy")
    comp = compression(plan) if comp is None else comp
    return pairing(plan, f.values) / (comp ** (1.0 / p) * ke ** (1.0 / q))


def duality_ratio_bv(f: SpaceFunction, plan: CurvePlan, comp: float = None) -> float:
    """pairing(plan, f) / (Comp · Lip)."""
    _same_space(f, plan)
    lip = lip_const(plan)
    if lip <= 0:
        raise ValueError("degenerate plan: zero Lipschitz constant")
    comp = compression(plan) if comp is None else comp
    return pairing(plan, f.values) / (comp * lip)


def duality_guaranteed(plan: CurvePlan, f: SpaceFunction, samples: int = 33) -> bool:
    """Whether lip f is an upper gradient along every curve of the plan.

    True when each curve moves between graph neighbours (or stays put) from
    node to node, and every intermediate position snaps to one of the two
    nodes. On one-dimensional templates with the consecutive graph every
    plan with endpoints on space points qualifies, since the piecewise
    linear interpolant of f has slope at most lip at both ends of each cell.
    """
    space = f.space
    _same_space(f, plan)
    first, last = plan.endpoints()
    for ends in (first, last):
        _, r = space.snap(ends)
        if np.any(r > 1e-9):
            return False
    if space.template.dim == 1 and f.neighbors == path_neighbors(space):
        return True
    t = space.template
    ss = np.linspace(0, 1, samples)
    for c in plan.curves:
        idx, r = space.snap(c.nodes)
        if np.any(r > 1e-9):
            return False
        for a, b, x, y in zip(idx[:-1], idx[1:], c.nodes[:-1], c.nodes[1:]):
            if a == b:
                continue
            if b not in f.neighbors[a]:
                return False
            mid = np.array([t.interpolate(x, y, s) for s in ss])
            got, _ = space.snap(mid)
            if not np.all((got == a) | (got == b)):
                return False
    return True


def is_edge_path(plan: CurvePlan, f: SpaceFunction) -> bool:
    """All nodes on space points and consecutive nodes equal or neighbours."""
    space = f.space
    for c in plan.curves:
        idx, r = space.snap(c.nodes)
        if np.any(r > 1e-9):
            return False
        for a, b in zip(idx[:-1], idx[1:]):
            if a != b and b not in f.neighbors[a]:
                return False
    return True


def leibniz_check(f: SpaceFunction, g: SpaceFunction, p: float, tol: float = 1e-12) -> dict:
    """Compare Ch_p^(1/p)(fg) with ||g||_inf Ch_p^(1/p)(f) + ||lip g||_inf ||f||_p,
    and the pointwise bound lip(fg) <= ||g||_inf lip f + |f| lip g behind it."""
    if f.space is not g.space or f.neighbors != g.neighbors:
        raise ValueError("f and g must share space and neighbour graph")
    fg = f.with_values(f.values * g.values)
    g_inf = lp_norm(g, np.inf)
    lf, lg, lfg = local_lip(f), local_lip(g), local_lip(fg)
    pointwise = lfg <= g_inf * lf + np.abs(f.values) * lg + tol
    lhs = cheeger_p(fg, p) ** (1.0 / p)
    rhs = g_inf * cheeger_p(f, p) ** (1.0 / p) + float(lg.max(initial=0.0)) * lp_norm(f, p)
    return {"p": p, "lhs": lhs, "rhs": rhs, "holds": bool(lhs <= rhs + tol),
            "pointwise_holds": bool(pointwise.all()), "g_sup": g_inf,
            "lip_g_sup": float(lg.max(initial=0.0))}


def max_ratio_over(f: SpaceFunction, plans, p: float, q: float) -> dict:
    """Largest Sobolev duality ratio over a plan family and its gap to
    Ch_p^(1/p)(f). The gap is only certified nonnegative on guaranteed plans."""
    best, arg = -np.inf, None
    for k, plan in enumerate(plans):
        if ke_q(plan, q) <= 0:
            continue
        r = duality_ratio_sobolev(f, plan, p, q)
        if r > best:
            best, arg = r, k
    ch = cheeger_p(f, p) ** (1.0 / p)
    return {"max_ratio": float(best), "argmax": arg, "cheeger_root": ch, "gap": ch - float(best)}
