"""Discrete piecewise-geodesic curves, plans over them, and the test-plan
functionals: metric speed, kinetic energy, Lipschitz constant, compression."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .ambient import FiniteSpace, GeodesicTemplate

MASS_TOL = 1e-10
K_MID = 8


@dataclass(frozen=True, eq=False)
class DiscreteCurve:
    """Piecewise geodesic: template geodesics between consecutive nodes.

    Parameters
    ----------
    time_grid : array of shape (k,)
        Strictly increasing, from 0 to 1.
    nodes : array of shape (k, dim)
        Template coordinates visited at the grid times.
    """

    time_grid: np.ndarray
    nodes: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.time_grid, dtype=float)
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim == 1:
            nodes = nodes[:, None]
        if g.ndim != 1 or len(g) == 0 or len(g) != len(nodes):
            raise ValueError("need one node per grid time")
        if len(g) == 1:
            g = np.array([0.0, 1.0])
            nodes = np.repeat(nodes, 2, axis=0)
        if g[0] != 0.0 or g[-1] != 1.0 or np.any(np.diff(g) <= 0):
            raise ValueError("time grid must increase strictly from 0 to 1")
        g.setflags(write=False)
        nodes.setflags(write=False)
        object.__setattr__(self, "time_grid", g)
        object.__setattr__(self, "nodes", nodes)

    @classmethod
    def geodesic(cls, template: GeodesicTemplate, x, y, steps: int = 1) -> "DiscreteCurve":
        grid = np.linspace(0.0, 1.0, steps + 1)
        nodes = template.interpolate(template.as_coords(x)[None, :], template.as_coords(y)[None, :], grid)
        return cls(grid, nodes)

    @classmethod
    def constant(cls, x) -> "DiscreteCurve":
        return cls(np.array([0.0, 1.0]), np.array([np.atleast_1d(x)] * 2, dtype=float))

    def key(self) -> tuple:
        return (self.time_grid.tobytes(), self.nodes.tobytes())


def curve_through(space: FiniteSpace, grid, indices) -> DiscreteCurve:
    """Curve visiting the given space points at the given times."""
    return DiscreteCurve(np.asarray(grid, dtype=float), space.points[np.asarray(indices)])


def metric_speed(curve: DiscreteCurve, template: GeodesicTemplate) -> list:
    """Per-interval speeds ``[((t_i, t_{i+1}), speed), ...]``."""
    g = curve.time_grid
    d = template.distance(curve.nodes[:-1], curve.nodes[1:])
    speeds = d / np.diff(g)
    return [((float(g[i]), float(g[i + 1])), float(s)) for i, s in enumerate(speeds)]


@dataclass(frozen=True, eq=False)
class CurvePlan:
    """Finitely supported probability measure on discrete curves.

    Zero-mass curves are dropped on construction. ``space`` carries the
    reference measure used by the compression constant.
    """

    curves: tuple
    masses: np.ndarray
    space: FiniteSpace

    def __post_init__(self):
        curves = tuple(self.curves)
        masses = np.asarray(self.masses, dtype=float)
        if len(curves) != len(masses):
            raise ValueError("one mass per curve is required")
        if np.any(masses < 0):
            raise ValueError("masses must be nonnegative")
        keep = masses > 0
        curves = tuple(c for c, k in zip(curves, keep) if k)
        masses = masses[keep]
        if not curves or abs(masses.sum() - 1.0) > MASS_TOL:
            raise ValueError("plan masses must sum to 1")
        for c in curves:
            if c.nodes.shape[1] != self.space.template.dim:
                raise ValueError("curve coordinates do not match the template")
        masses.setflags(write=False)
        object.__setattr__(self, "curves", curves)
        object.__setattr__(self, "masses", masses)

    def __len__(self):
        return len(self.curves)

    @property
    def template(self) -> GeodesicTemplate:
        return self.space.template

    def groups(self) -> list:
        """Curves bundled by shared time grid: (grid, nodes[c,k,dim], masses, ids)."""
        cached = self.__dict__.get("_groups")
        if cached is not None:
            return cached
        buckets = defaultdict(list)
        for i, c in enumerate(self.curves):
            buckets[c.time_grid.tobytes()].append(i)
        out = []
        for ids in buckets.values():
            ids = np.array(ids)
            grid = self.curves[ids[0]].time_grid
            nodes = np.stack([self.curves[i].nodes for i in ids])
            out.append((grid, nodes, self.masses[ids], ids))
        self.__dict__["_groups"] = out
        return out

    def endpoints(self) -> tuple:
        first = np.stack([c.nodes[0] for c in self.curves])
        last = np.stack([c.nodes[-1] for c in self.curves])
        return first, last

    def positions(self, t) -> np.ndarray:
        """Positions of every curve at the times t, shape (curves, len(t), dim)."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.empty((len(self.curves), len(t), self.template.dim))
        for grid, nodes, _, ids in self.groups():
            out[ids] = _evaluate(self.template, grid, nodes, t)
        return out

    def marginal(self, t: float) -> tuple:
        """Exact time marginal: distinct template positions and their masses."""
        pos = self.positions([t])[:, 0, :]
        uniq, inv = np.unique(pos, axis=0, return_inverse=True)
        mass = np.zeros(len(uniq))
        np.add.at(mass, inv.ravel(), self.masses)
        return uniq, mass

    def snapped_marginal(self, t: float) -> tuple:
        """Time marginal as point masses on the space, plus the largest snap radius."""
        idx, radius = self.space.snap(self.positions([t])[:, 0, :])
        mass = np.bincount(idx, weights=self.masses, minlength=len(self.space))
        return mass, float(radius.max())

    def endpoint_masses(self) -> tuple:
        first, last = self.endpoints()
        i0, _ = self.space.snap(first)
        i1, _ = self.space.snap(last)
        n = len(self.space)
        return (np.bincount(i0, weights=self.masses, minlength=n),
                np.bincount(i1, weights=self.masses, minlength=n))


def _evaluate(template, grid, nodes, t) -> np.ndarray:
    k = len(grid) - 1
    leg = np.clip(np.searchsorted(grid, t, side="right") - 1, 0, k - 1)
    s = (t - grid[leg]) / (grid[leg + 1] - grid[leg])
    return template.interpolate(nodes[:, leg, :], nodes[:, leg + 1, :], s[None, :])


def _speeds(plan: CurvePlan):
    for grid, nodes, masses, ids in plan.groups():
        d = plan.template.distance(nodes[:, :-1, :], nodes[:, 1:, :])
        yield np.diff(grid), d / np.diff(grid)[None, :], masses


def ke_q(plan: CurvePlan, q: float) -> float:
    """Kinetic energy: sum of mass · ∫ |speed|^q dt."""
    if not q > 1:
        raise ValueError("kinetic energy needs an exponent q > 1")
    total = 0.0
    for dt, speed, masses in _speeds(plan):
        total += float(masses @ ((speed ** q) @ dt))
    return total


def curve_costs(plan: CurvePlan, q: float) -> np.ndarray:
    """Per-curve ∫ |speed|^q dt in plan order."""
    out = np.empty(len(plan))
    for (dt, speed, _), (_, _, _, ids) in zip(_speeds(plan), plan.groups()):
        out[ids] = (speed ** q) @ dt
    return out


def lip_const(plan: CurvePlan) -> float:
    """Largest interval speed over the curves of the plan."""
    return max(float(speed.max()) for _, speed, _ in _speeds(plan))


def _sample_times(plan: CurvePlan, k_mid: int) -> np.ndarray:
    frac = np.arange(1, k_mid + 1) / (k_mid + 1)
    times = [np.array([0.0, 1.0])]
    for grid, _, _, _ in plan.groups():
        times.append(grid)
        times.append((grid[:-1, None] + np.diff(grid)[:, None] * frac[None, :]).ravel())
    return np.unique(np.concatenate(times))


def _switch_events(plan: CurvePlan, times: np.ndarray, levels: int = 44) -> tuple:
    """Nearest-point changes of every curve, located by bisection inside each
    sampling interval where a change is observed.

    Returns (time, curve, from_point, to_point) arrays; ``time`` is the right
    end of a bracket of width 2^-levels times the sampling interval. Brackets
    of one curve chain from its point at one sample to its point at the next.
    """
    space = plan.space
    out_t, out_c, out_a, out_b = [], [], [], []
    for grid, nodes, _, ids in plan.groups():
        idx, _ = space.snap(_evaluate(plan.template, grid, nodes, times))
        cc, jj = np.nonzero(idx[:, 1:] != idx[:, :-1])
        lo, hi = times[jj], times[jj + 1]
        ilo, ihi = idx[cc, jj], idx[cc, jj + 1]
        for _ in range(levels):
            if len(cc) == 0:
                break
            mid = (lo + hi) / 2
            imid, _ = space.snap(plan.template.interpolate(*_leg_nodes(grid, nodes, cc, mid)))
            left = imid != ilo
            right = imid != ihi
            # both halves are kept when the curve crosses several cells
            cc = np.concatenate([cc[left], cc[right]])
            lo, hi = np.concatenate([lo[left], mid[right]]), np.concatenate([mid[left], hi[right]])
            ilo, ihi = np.concatenate([ilo[left], imid[right]]), np.concatenate([imid[left], ihi[right]])
        out_t.append(hi)
        out_c.append(ids[cc])
        out_a.append(ilo)
        out_b.append(ihi)
    return tuple(np.concatenate(x) for x in (out_t, out_c, out_a, out_b))


def _leg_nodes(grid, nodes, cc, t):
    k = len(grid) - 1
    leg = np.clip(np.searchsorted(grid, t, side="right") - 1, 0, k - 1)
    s = (t - grid[leg]) / (grid[leg + 1] - grid[leg])
    return nodes[cc, leg, :], nodes[cc, leg + 1, :], s


def _ratio(mass, w):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(mass > 0, mass / w, 0.0)


def _sampled_max(plan: CurvePlan, times: np.ndarray) -> tuple:
    space = plan.space
    n = len(space)
    w = space.weights
    best, best_t, snap_radius = 0.0, 0.0, 0.0
    chunk = max(1, 2_000_000 // max(1, len(plan)))
    for start in range(0, len(times), chunk):
        tt = times[start:start + chunk]
        idx, radius = space.snap(plan.positions(tt))
        snap_radius = max(snap_radius, float(radius.max()))
        flat = (idx + n * np.arange(len(tt))[None, :]).ravel()
        mass = np.bincount(flat, weights=np.repeat(plan.masses, len(tt)), minlength=n * len(tt))
        ratio = _ratio(mass.reshape(len(tt), n), w[None, :])
        j = np.unravel_index(np.argmax(ratio), ratio.shape)
        if ratio[j] > best:
            best, best_t = float(ratio[j]), float(tt[j[0]])
    return best, best_t, snap_radius


def _swept_max(plan: CurvePlan, base: np.ndarray) -> tuple:
    """Largest density of the snapped marginal over every constant stretch,
    by sweeping the switch events in time order."""
    space = plan.space
    n = len(space)
    w = space.weights
    idx0, _ = space.snap(plan.positions([0.0])[:, 0, :])
    m0 = np.bincount(idx0, weights=plan.masses, minlength=n)
    c0 = np.bincount(idx0, minlength=n)
    ratio0 = _ratio(m0, w)
    best, best_t = float(ratio0.max()), 0.0
    t, c, a, b = _switch_events(plan, base)
    n_events = len(t)
    if n_events:
        stamps, rank = np.unique(t, return_inverse=True)
        m = plan.masses[c]
        cell = np.concatenate([a, b])
        rk = np.concatenate([rank, rank])
        dm = np.concatenate([-m, m])
        dc = np.concatenate([-np.ones(n_events, int), np.ones(n_events, int)])
        order = np.lexsort((rk, cell))
        cell, rk, dm, dc = cell[order], rk[order], dm[order], dc[order]
        first = np.r_[True, cell[1:] != cell[:-1]]
        seg = np.cumsum(first) - 1
        starts = np.flatnonzero(first)
        cm = np.cumsum(dm)
        cm = cm - np.r_[0.0, cm][starts][seg]
        cn = np.cumsum(dc)
        cn = cn - np.r_[0, cn][starts][seg]
        last = np.r_[(cell[1:] != cell[:-1]) | (rk[1:] != rk[:-1]), True]
        mass = np.where(c0[cell] + cn > 0, m0[cell] + cm, 0.0)[last]
        ratio = _ratio(mass, w[cell[last]])
        j = int(np.argmax(ratio))
        if ratio[j] > best:
            best, best_t = float(ratio[j]), float(stamps[rk[last][j]])
    return best, best_t, n_events


def compression(plan: CurvePlan, k_mid: int = K_MID, refine: bool = True, return_meta: bool = False):
    """Compression constant: the largest ratio (e_t)#plan({x}) / m({x}).

    Time marginals are snapped to the nearest space point. The sampled times
    are every grid knot plus ``k_mid`` interior times per leg. With
    ``refine`` the times at which any curve changes its nearest point are
    located by bisection and the snapped marginal is swept across all of
    them, so every constant stretch is checked. Isolated instants where a
    curve sits exactly halfway between two points are not examined, which
    makes the refined value a supremum over almost every t. A charged point
    of zero weight gives ``inf``.
    """
    base = _sample_times(plan, k_mid)
    if refine:
        best, best_t, n_switch = _swept_max(plan, base)
        n_times = len(base)
        _, radius = plan.space.snap(plan.positions(base))
        snap_radius = float(radius.max())
    else:
        best, best_t, snap_radius = _sampled_max(plan, base)
        n_switch, n_times = 0, len(base)
    if not return_meta:
        return best
    meta = {
        "k_mid": int(k_mid),
        "refine": bool(refine),
        "n_times": int(n_times),
        "n_switch": int(n_switch),
        "max_snap_radius": snap_radius,
        "argmax_time": best_t,
    }
    return best, meta


def restrict_time(plan: CurvePlan, s: float, t: float) -> CurvePlan:
    """Affine reparametrisation of every curve from [s, t] onto [0, 1];
    s > t reverses time."""
    if s == t:
        raise ValueError("restriction needs s != t")
    if not (0 <= s <= 1 and 0 <= t <= 1):
        raise ValueError("restriction times must lie in [0, 1]")
    a, b = min(s, t), max(s, t)
    curves = []
    for c in plan.curves:
        g = c.time_grid
        inner = g[(g > a) & (g < b)]
        r = np.concatenate([[0.0], np.sort((inner - s) / (t - s)), [1.0]])
        tau = np.concatenate([[s], (inner if t > s else inner[::-1]), [t]])
        pos = _evaluate(plan.template, g, c.nodes[None], tau)[0]
        curves.append(DiscreteCurve(r, pos))
    return CurvePlan(tuple(curves), plan.masses, plan.space)


def reverse(plan: CurvePlan) -> CurvePlan:
    return restrict_time(plan, 1.0, 0.0)


def restrict_event(plan: CurvePlan, indicator) -> CurvePlan:
    """Plan reweighted by a per-curve indicator and renormalised."""
    ind = np.asarray(indicator, dtype=float)
    if ind.shape != plan.masses.shape or np.any(ind < 0) or np.any(ind > 1):
        raise ValueError("indicator must give one weight in [0, 1] per curve")
    w = plan.masses * ind
    if w.sum() <= 0:
        raise ValueError("restriction retains no mass")
    return CurvePlan(plan.curves, w / w.sum(), plan.space)


def with_masses(plan: CurvePlan, masses) -> CurvePlan:
    masses = np.asarray(masses, dtype=float)
    return CurvePlan(plan.curves, masses / masses.sum(), plan.space)


def glue(legs: Sequence, grid=None, tol: float = 1e-9) -> CurvePlan:
    """Concatenate plans leg by leg.

    Each leg is disintegrated over its starting point and the conditional
    laws are composed as a Markov chain: a path arriving at y continues
    along every curve of the next leg leaving y, with the conditional mass.
    Identical glued curves are merged.
    """
    legs = list(legs)
    M = len(legs)
    grid = np.linspace(0.0, 1.0, M + 1) if grid is None else np.asarray(grid, dtype=float)
    if len(grid) != M + 1 or grid[0] != 0 or grid[-1] != 1 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must partition [0, 1] into one cell per leg")
    space = legs[0].space
    n = len(space)
    starts, ends = [], []
    for leg in legs:
        first, last = leg.endpoints()
        starts.append(space.snap(first)[0])
        ends.append(space.snap(last)[0])
    for i in range(M - 1):
        arrive = np.bincount(ends[i], weights=legs[i].masses, minlength=n)
        leave = np.bincount(starts[i + 1], weights=legs[i + 1].masses, minlength=n)
        if np.max(np.abs(arrive - leave)) > tol:
            raise ValueError(f"legs {i} and {i + 1} do not share a marginal")

    def piece(i, c):
        curve = legs[i].curves[c]
        g = grid[i] + (grid[i + 1] - grid[i]) * curve.time_grid
        g[0], g[-1] = grid[i], grid[i + 1]
        return g, curve.nodes

    paths = [([piece(0, c)], m, ends[0][c]) for c, m in enumerate(legs[0].masses)]
    for i in range(1, M):
        out_by_point = defaultdict(list)
        for c, (st, m) in enumerate(zip(starts[i], legs[i].masses)):
            out_by_point[st].append((c, m))
        total = {y: sum(m for _, m in lst) for y, lst in out_by_point.items()}
        nxt = []
        for pieces, mass, y in paths:
            for c, m in out_by_point.get(y, ()):
                nxt.append((pieces + [piece(i, c)], mass * m / total[y], ends[i][c]))
        paths = nxt
    merged = {}
    for pieces, mass, _ in paths:
        g = np.concatenate([pieces[0][0]] + [p[0][1:] for p in pieces[1:]])
        for (_, a), (_, b) in zip(pieces[:-1], pieces[1:]):
            if space.template.distance(a[-1], b[0]) > tol:
                raise ValueError("consecutive legs do not meet")
        nodes = np.concatenate([pieces[0][1]] + [p[1][1:] for p in pieces[1:]])
        key = (g.tobytes(), nodes.tobytes())
        if key in merged:
            merged[key][2] += mass
        else:
            merged[key] = [g, nodes, mass]
    curves = tuple(DiscreteCurve(g, nodes) for g, nodes, _ in merged.values())
    masses = np.array([m for _, _, m in merged.values()])
    return CurvePlan(curves, masses / masses.sum(), space)


def pairing(plan: CurvePlan, f) -> float:
    """Sum over curves of mass · (f(last node) − f(first node))."""
    values = np.asarray(getattr(f, "values", f), dtype=float)
    first, last = plan.endpoints()
    i0 = plan.space.index_of(first)
    i1 = plan.space.index_of(last)
    return float(plan.masses @ (values[i1] - values[i0]))


def plan_record(plan: CurvePlan, qs=(2.0,), k_mid: int = K_MID, refine: bool = True) -> dict:
    """Flat summary of the test-plan functionals."""
    comp, meta = compression(plan, k_mid=k_mid, refine=refine, return_meta=True)
    return {
        "comp": comp,
        "ke_q": {repr(float(q)): ke_q(plan, q) for q in qs},
        "lip": lip_const(plan),
        "sampling_meta": meta,
    }
