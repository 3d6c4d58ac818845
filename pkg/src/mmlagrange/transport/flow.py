"""Feasibility tests for bottleneck transport: max-flow with real capacities
and Hopcroft-Karp matching on unit-expanded masses."""

from __future__ import annotations

from collections import deque

import numpy as np


def max_flow_coupling(a, b, allowed, tol: float = 1e-12):
    """Dinic max-flow from sources with supplies ``a`` to sinks with demands
    ``b`` through the pairs where ``allowed`` is true.

    Returns the flow value and the (m, n) matrix of pair flows.
    """
    m, n = len(a), len(b)
    N = m + n + 2
    s, t = m + n, m + n + 1
    head = [[] for _ in range(N)]
    to, cap = [], []

    def add(u, w, c):
        head[u].append(len(to))
        to.append(w)
        cap.append(c)
        head[w].append(len(to))
        to.append(u)
        cap.append(0.0)

    for i in range(m):
        add(s, i, float(a[i]))
    pair_edge = {}
    inf = float(np.sum(a)) + 1.0
    for i in range(m):
        for j in range(n):
            if allowed[i][j]:
                pair_edge[(i, j)] = len(to)
                add(i, m + j, inf)
    for j in range(n):
        add(m + j, t, float(b[j]))

    total = 0.0
    while True:
        level = [-1] * N
        level[s] = 0
        queue = deque([s])
        while queue:
            u = queue.popleft()
            for e in head[u]:
                if cap[e] > tol and level[to[e]] < 0:
                    level[to[e]] = level[u] + 1
                    queue.append(to[e])
        if level[t] < 0:
            break
        it = [0] * N

        def push(u, f):
            if u == t:
                return f
            while it[u] < len(head[u]):
                e = head[u][it[u]]
                w = to[e]
                if cap[e] > tol and level[w] == level[u] + 1:
                    got = push(w, min(f, cap[e]))
                    if got > tol:
                        cap[e] -= got
                        cap[e ^ 1] += got
                        return got
                it[u] += 1
            return 0.0

        while True:
            f = push(s, inf)
            if f <= tol:
                break
            total += f
    flows = np.zeros((m, n))
    for (i, j), e in pair_edge.items():
        flows[i, j] = cap[e ^ 1]
    return total, flows


def hopcroft_karp(adj, n_left: int, n_right: int):
    """Maximum bipartite matching; ``adj[u]`` lists right vertices of u."""
    match_l = [-1] * n_left
    match_r = [-1] * n_right
    INF = float("inf")

    def bfs():
        dist = [INF] * n_left
        queue = deque()
        for u in range(n_left):
            if match_l[u] < 0:
                dist[u] = 0
                queue.append(u)
        found = False
        while queue:
            u = queue.popleft()
            for w in adj[u]:
                v = match_r[w]
                if v < 0:
                    found = True
                elif dist[v] == INF:
                    dist[v] = dist[u] + 1
                    queue.append(v)
        return found, dist

    def dfs(u, dist):
        for w in adj[u]:
            v = match_r[w]
            if v < 0 or (dist[v] == dist[u] + 1 and dfs(v, dist)):
                match_l[u] = w
                match_r[w] = u
                return True
        dist[u] = INF
        return False

    size = 0
    while True:
        found, dist = bfs()
        if not found:
            break
        for u in range(n_left):
            if match_l[u] < 0 and dfs(u, dist):
                size += 1
    return size, match_l


def unit_matching_coupling(units_a, units_b, allowed):
    """Expand integer masses into unit vertices and match them.

    Returns whether a perfect matching exists and the coupling in units.
    """
    left = [i for i, k in enumerate(units_a) for _ in range(k)]
    right = [j for j, k in enumerate(units_b) for _ in range(k)]
    right_of = {}
    for pos, j in enumerate(right):
        right_of.setdefault(j, []).append(pos)
    adj = []
    for i in left:
        row = []
        for j in range(len(units_b)):
            if allowed[i][j]:
                row.extend(right_of.get(j, ()))
        adj.append(row)
    size, match_l = hopcroft_karp(adj, len(left), len(right))
    counts = np.zeros((len(units_a), len(units_b)), dtype=int)
    for u, w in enumerate(match_l):
        if w >= 0:
            counts[left[u], right[w]] += 1
    return size == len(left), counts
