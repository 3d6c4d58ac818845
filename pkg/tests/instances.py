"""Seeded random instances shared by the unit and acceptance tests."""

from __future__ import annotations

import numpy as np

from mmlagrange.ambient import Density, GeodesicTemplate, discretize

TEMPLATES = (GeodesicTemplate("segment", (1.0,)), GeodesicTemplate("circle", (1.0,)))


def _units(rng, den, n_pts, k_max=5):
    k = int(rng.integers(1, min(den, k_max, n_pts) + 1))
    support = rng.choice(n_pts, size=k, replace=False)
    cuts = np.sort(rng.choice(np.arange(1, den), size=k - 1, replace=False)) if k > 1 else np.array([], int)
    parts = np.diff(np.concatenate([[0], cuts, [den]]))
    units = np.zeros(n_pts, dtype=int)
    units[support] = parts
    return units


def transport_instance(rng):
    """Two probability densities with masses in multiples of 1/den, den <= 4,
    at most five support points each, on a small segment or circle space.

    Returns (mu0, mu1, units0, units1, space).
    """
    template = TEMPLATES[int(rng.integers(0, 2))]
    n_pts = int(rng.integers(2, 9))
    space = discretize(template, n_pts, lambda x: np.ones(x.shape[:-1]) * 7.0)
    den = int(rng.integers(1, 5))
    u0 = _units(rng, den, n_pts)
    u1 = _units(rng, den, n_pts)
    mu0 = Density.from_masses(space, u0 / den)
    mu1 = Density.from_masses(space, u1 / den)
    return mu0, mu1, u0, u1, space


def enumeration_data(u0, u1, space):
    rows = np.flatnonzero(u0)
    cols = np.flatnonzero(u1)
    dist = space.dist[np.ix_(rows, cols)].tolist()
    return u0[rows].tolist(), u1[cols].tolist(), dist


def random_chain(rng, M=3, npts=4):
    """Consistent chain of M legs with rational masses and costs.

    ``rng`` is a ``random.Random``. Each leg splits the mass sitting at every
    point into one or two curves with random ends.
    """
    from fractions import Fraction

    from mmlagrange.interpolation import LegPaths

    mu = [Fraction(rng.randint(0, 3)) for _ in range(npts)]
    if sum(mu) == 0:
        mu[0] = Fraction(1)
    total = sum(mu)
    mu = [x / total for x in mu]
    legs = []
    for _ in range(M):
        starts, ends, masses = [], [], []
        for x in range(npts):
            if mu[x] == 0:
                continue
            cuts = [rng.randint(1, 5) for _ in range(rng.randint(1, 2))]
            for c in cuts:
                starts.append(x)
                ends.append(rng.randrange(npts))
                masses.append(mu[x] * Fraction(c, sum(cuts)))
        costs = [Fraction(rng.randint(0, 4), 4) for _ in masses]
        legs.append(LegPaths(starts, ends, masses, costs))
        mu = legs[-1].push("end", npts)
    return legs


def gated_chains(seed, count, M=3, npts=4, p_closed=0.15):
    """``count`` chains with random gates whose discarded mass is at most 1/2."""
    import random
    from fractions import Fraction

    rng = random.Random(seed)
    out = []
    while len(out) < count:
        legs = random_chain(rng, M, npts)
        gates = [[rng.random() > p_closed for _ in leg.masses] for leg in legs]
        sigma = sum(m for leg, g in zip(legs, gates) for m, ok in zip(leg.masses, g) if not ok)
        if sigma <= Fraction(1, 2) and any(any(g) for g in gates):
            out.append((legs, gates))
    return out
