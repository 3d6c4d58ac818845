"""Transportation simplex with Bland's anti-cycling rule.

The entering cell is either always chosen by Bland's rule (first eligible
cell in row-major order) or by the most negative reduced cost, falling back
to Bland's rule for as long as pivots stay degenerate; cycling is only
possible through degenerate pivots, so both variants terminate.

Works over floats or over ``fractions.Fraction`` entries; the arithmetic is
whatever the inputs carry, so rational inputs give exact optima.
"""

from __future__ import annotations

from collections import deque
from fractions import Fraction

import numpy as np


class SimplexError(RuntimeError):
    pass


def _initial_basis(a, b, C, rule, tol):
    m, n = len(a), len(b)
    a = list(a)
    b = list(b)
    flow = {}
    if rule == "northwest":
        i = j = 0
        while True:
            x = min(a[i], b[j])
            flow[(i, j)] = x
            a[i] -= x
            b[j] -= x
            if i == m - 1 and j == n - 1:
                break
            if (a[i] <= tol and i < m - 1) or j == n - 1:
                i += 1
            else:
                j += 1
        return flow
    # least-cost rule, keeping the basis a spanning tree
    rows_left, cols_left = set(range(m)), set(range(n))
    order = sorted(((C[i][j], i, j) for i in range(m) for j in range(n)), key=lambda t: (t[0], t[1], t[2]))
    for _, i, j in order:
        if i not in rows_left or j not in cols_left:
            continue
        x = min(a[i], b[j])
        flow[(i, j)] = x
        a[i] -= x
        b[j] -= x
        if len(rows_left) == 1 and len(cols_left) == 1:
            break
        if (a[i] <= tol and len(rows_left) > 1) or len(cols_left) == 1:
            rows_left.discard(i)
        else:
            cols_left.discard(j)
    return flow


def _tree(basis, m, n):
    adj = [[] for _ in range(m + n)]
    for (i, j) in basis:
        adj[i].append(m + j)
        adj[m + j].append(i)
    return adj


def _potentials(basis, C, m, n, zero):
    adj = _tree(basis, m, n)
    u = [None] * m
    v = [None] * n
    parent = [-1] * (m + n)
    depth = [0] * (m + n)
    u[0] = zero
    seen = [False] * (m + n)
    seen[0] = True
    queue = deque([0])
    while queue:
        node = queue.popleft()
        for nb in adj[node]:
            if seen[nb]:
                continue
            seen[nb] = True
            parent[nb] = node
            depth[nb] = depth[node] + 1
            if node < m:
                v[nb - m] = C[node][nb - m] - u[node]
            else:
                u[nb] = C[nb][node - m] - v[node - m]
            queue.append(nb)
    if not all(seen):
        raise SimplexError("basis is not a spanning tree")
    return u, v, parent, depth


def _cycle(i, j, parent, depth, m):
    """Cells on the tree path from column j back to row i."""
    a, b = m + j, i
    left, right = [a], [b]
    while depth[a] > depth[b]:
        a = parent[a]
        left.append(a)
    while depth[b] > depth[a]:
        b = parent[b]
        right.append(b)
    while a != b:
        a = parent[a]
        b = parent[b]
        left.append(a)
        right.append(b)
    path = left + right[-2::-1]
    cells = []
    for x, y in zip(path[:-1], path[1:]):
        cells.append((x, y - m) if x < m else (y, x - m))
    return cells


def _entering(red, neg, bland: bool):
    hits = np.flatnonzero(neg)
    if not len(hits):
        return None
    if bland:
        return int(hits[0])
    flat = red.ravel()[hits]
    # lowest index among the most negative reduced costs
    return int(hits[int(np.argmin(flat))])


def transport_simplex(a, b, C, init: str = "northwest", rule: str = "dantzig", max_pivots: int = 200000):
    """Minimise sum C[i][j]·x[i][j] over couplings of the marginals a and b.

    Parameters
    ----------
    a, b : sequences of positive numbers with equal sums
    C : (m, n) nested sequence or array of costs
    init : {"northwest", "mincost"}
        Rule for the initial basic feasible solution.
    rule : {"dantzig", "bland"}
        Entering rule; "dantzig" switches to Bland's rule on degenerate pivots.

    Returns
    -------
    flow : dict mapping basic cells (i, j) to flows
    u, v : dual potentials with u[i] + v[j] == C[i][j] on the basis
    pivots : number of pivots performed
    """
    m, n = len(a), len(b)
    exact = isinstance(a[0], Fraction)
    zero = Fraction(0) if exact else 0.0
    if exact:
        C = [list(row) for row in C]
        tol = 0
    else:
        C = np.asarray(C, dtype=float)
        scale = max(1.0, float(np.max(a)), float(np.max(b)))
        tol = 1e-14 * scale
    flow = _initial_basis(a, b, C, "northwest" if init == "northwest" else "mincost", tol)
    if len(flow) != m + n - 1:
        raise SimplexError("initial basis has the wrong size")
    if rule not in ("dantzig", "bland"):
        raise ValueError(f"unknown pivot rule {rule!r}")
    pivots = 0
    bland = rule == "bland"
    while True:
        basis = sorted(flow)
        u, v, parent, depth = _potentials(basis, C, m, n, zero)
        if exact:
            red = np.array([[C[i][j] - u[i] - v[j] for j in range(n)] for i in range(m)], dtype=object)
            neg = red < 0
        else:
            U = np.asarray(u)
            V = np.asarray(v)
            red = C - U[:, None] - V[None, :]
            slack = 1e-12 * (np.abs(C) + np.abs(U)[:, None] + np.abs(V)[None, :])
            neg = red < -slack
        for (i, j) in basis:
            neg[i, j] = False
        hit = _entering(red, neg, bland)
        if hit is None:
            return flow, u, v, pivots
        pivots += 1
        if pivots > max_pivots:
            raise SimplexError("pivot limit reached")
        i, j = divmod(hit, n)
        entering = (i, j)
        cells = _cycle(i, j, parent, depth, m)
        minus = cells[0::2]
        theta = min(flow[c] for c in minus)
        leaving = min(c for c in minus if flow[c] == theta)
        if rule == "dantzig":
            bland = theta <= tol
        flow[entering] = zero
        for k, c in enumerate(cells):
            flow[c] = flow[c] - theta if k % 2 == 0 else flow[c] + theta
        flow[entering] = theta
        del flow[leaving]
        if not exact:
            for c in flow:
                if flow[c] < 0:
                    flow[c] = 0.0
