"""Submarginal correction of a chain of gated legs.

A leg is a measure on curves, recorded here through the start point, end
point, mass and kinetic cost of each curve. The correction removes the mass
of every curve outside its gate and restores a consistent chain by
reweighting the other legs with density ratios at their shared endpoints.
Arithmetic follows the inputs, so ``Fraction`` data is corrected exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction


@dataclass
class LegPaths:
    """Curves of one leg: endpoint indices, masses and per-curve costs."""

    starts: list
    ends: list
    masses: list
    costs: list = field(default=None)

    def __post_init__(self):
        self.starts = [int(s) for s in self.starts]
        self.ends = [int(e) for e in self.ends]
        self.masses = list(self.masses)
        if self.costs is None:
            self.costs = [0] * len(self.masses)
        self.costs = list(self.costs)
        if not (len(self.starts) == len(self.ends) == len(self.masses) == len(self.costs)):
            raise ValueError("leg fields must have equal length")

    def push(self, which: str, npts: int, masses=None):
        masses = self.masses if masses is None else masses
        idx = self.starts if which == "start" else self.ends
        out = [_zero(masses)] * npts
        for i, m in zip(idx, masses):
            out[i] = out[i] + m
        return out

    def energy(self, masses=None):
        masses = self.masses if masses is None else masses
        return sum((m * c for m, c in zip(masses, self.costs)), _zero(masses))


def _zero(seq):
    for x in seq:
        if isinstance(x, Fraction):
            return Fraction(0)
    return 0.0


def _close(a, b, tol):
    if isinstance(a, Fraction) and isinstance(b, Fraction):
        return a == b
    return abs(float(a) - float(b)) <= tol


@dataclass
class CorrectionResult:
    measures: list
    legs: list
    sigma: object
    flags: dict
    details: dict


def correct_chain(weights, legs, gates, tol: float = 1e-9) -> CorrectionResult:
    """Run the gated chain correction.

    Parameters
    ----------
    weights : sequence
        Reference measure of the space carrying all endpoints.
    legs : list of LegPaths
        Consecutive legs; the end measure of leg i must equal the start
        measure of leg i + 1, and every leg has unit mass.
    gates : list of sequences of bool
        Curves allowed to keep mass, one entry per curve.

    Returns
    -------
    CorrectionResult
        Corrected point measures and legs, the discarded mass ``sigma`` and
        the verified flags ``a``-``d``.
    """
    M = len(legs)
    npts = len(weights)
    if M == 0 or len(gates) != M:
        raise ValueError("one gate per leg is required")
    for leg, gate in zip(legs, gates):
        if len(gate) != len(leg.masses):
            raise ValueError("one gate entry per curve is required")
    for i in range(M - 1):
        a = legs[i].push("end", npts)
        b = legs[i + 1].push("start", npts)
        if not all(_close(x, y, tol) for x, y in zip(a, b)):
            raise ValueError(f"legs {i} and {i + 1} do not share a marginal")
    start = [legs[0].push("start", npts)] + [leg.push("end", npts) for leg in legs]
    sigma = sum((m for leg, gate in zip(legs, gates) for m, g in zip(leg.masses, gate) if not g),
                _zero(legs[0].masses))
    if sigma > Fraction(1, 2):
        raise ValueError("discarded mass exceeds one half")

    w = [list(leg.masses) for leg in legs]
    mu = [list(m) for m in start]
    for j in range(1, M + 1):
        prev = mu
        new = [None] * (M + 1)
        k = j - 1
        w[k] = [m if g else m * 0 for m, g in zip(w[k], gates[k])]
        new[j] = legs[k].push("end", npts, w[k])
        new[k] = legs[k].push("start", npts, w[k])
        for i in range(j, M):
            ratio = _ratio(new[i], prev[i])
            w[i] = [m * ratio[s] for m, s in zip(w[i], legs[i].starts)]
            new[i + 1] = legs[i].push("end", npts, w[i])
        for i in range(j - 2, -1, -1):
            ratio = _ratio(new[i + 1], prev[i + 1])
            w[i] = [m * ratio[e] for m, e in zip(w[i], legs[i].ends)]
            new[i] = legs[i].push("start", npts, w[i])
        mu = new
    total = sum(mu[0], _zero(mu[0]))
    if total <= 0:
        raise ValueError("correction removed all mass")
    measures = [[x / total for x in m] for m in mu]
    out_legs = [LegPaths(leg.starts, leg.ends, [m / total for m in wi], leg.costs) for leg, wi in zip(legs, w)]
    flags, details = _verify(weights, start, measures, legs, out_legs, gates, sigma, tol)
    return CorrectionResult(measures, out_legs, sigma, flags, details)


def _ratio(num, den):
    return [n / d if d > 0 else n * 0 for n, d in zip(num, den)]


def _sup_density(measure, weights):
    return max((m / w for m, w in zip(measure, weights) if w > 0), default=0)


def _verify(weights, before, after, legs_before, legs_after, gates, sigma, tol):
    exact = isinstance(sigma, Fraction)
    slack = 0 if exact else tol
    factor = 1 - sigma
    a = all(m == 0 for leg, gate in zip(legs_after, gates) for m, g in zip(leg.masses, gate) if not g)
    sup_before = [_sup_density(m, weights) for m in before]
    sup_after = [_sup_density(m, weights) for m in after]
    b = all(sa * factor <= sb + slack for sa, sb in zip(sup_after, sup_before))
    l1 = [sum((abs(x - y) for x, y in zip(m0, m1)), _zero(m0)) for m0, m1 in zip(before, after)]
    c = all(d <= 2 * sigma + slack for d in l1)
    ke_before = [leg.energy() for leg in legs_before]
    ke_after = [leg.energy() for leg in legs_after]
    d = all(ka * factor <= kb + slack for ka, kb in zip(ke_after, ke_before))
    flags = {"a": bool(a), "b": bool(b), "c": bool(c), "d": bool(d)}
    details = {"sup_before": sup_before, "sup_after": sup_after, "l1_change": l1,
               "ke_before": ke_before, "ke_after": ke_after}
    return flags, details
