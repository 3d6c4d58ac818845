"""Distortion coefficients, compression certificates, entropy functionals and
checkers for the entropy-convexity and contraction inequalities."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from ..ambient import Density, FiniteSpace
from ..plans import CurvePlan, DiscreteCurve
from ..transport import optimal_coupling_q


class DimensionOneWarning(UserWarning):
    """Raised when N = 1 and the coefficient falls back to tau = t."""


def tau(K: float, N: float, t: float, theta: float) -> float:
    """Distortion coefficient tau_{K,N}^{(t)}(theta).

    Returns ``inf`` on the supercritical branch K > 0, K theta^2 > (N-1) pi^2.
    For N = 1 the coefficient is taken to be t and a warning is issued.
    """
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    if theta < 0:
        raise ValueError("theta must be nonnegative")
    if N < 1:
        raise ValueError("N must be at least 1")
    if N == 1:
        warnings.warn("N = 1: using tau = t", DimensionOneWarning, stacklevel=2)
        return float(t)
    if K == 0 or theta == 0 or t == 0:
        return float(t)
    if K > 0:
        if K * theta * theta >= (N - 1) * math.pi ** 2:
            return math.inf
        kappa = math.sqrt(K / (N - 1))
        ratio = math.sin(t * theta * kappa) / math.sin(theta * kappa)
    else:
        kappa = math.sqrt(-K / (N - 1))
        ratio = math.sinh(t * theta * kappa) / math.sinh(theta * kappa)
    return t ** (1.0 / N) * ratio ** ((N - 1.0) / N)


def c_kn(K: float, N: float, r: float) -> float:
    """Supremum over theta < r and t in (0, 1) of (t / tau_{K,N}^{(t)}(theta))^N.

    Only the negative part of K matters. For K < 0 and N > 1 the ratio
    t sinh(a) / sinh(t a), a = theta sqrt(-K/(N-1)), decreases in t and
    increases in a, so the supremum is the t -> 0, theta -> r limit
    (sinh(a)/a)^(N-1) at a = r sqrt(-K/(N-1)).
    """
    if r <= 0:
        raise ValueError("r must be positive")
    k = min(K, 0.0)
    if k == 0 or N == 1:
        return 1.0
    a = r * math.sqrt(-k / (N - 1))
    # sinh(a)/a without cancellation for tiny a
    ratio = math.sinh(a) / a if a > 1e-4 else 1.0 + a * a / 6.0 + a ** 4 / 120.0
    return ratio ** (N - 1)


def c_kn_grid(K: float, N: float, r: float, n_theta: int = 200, n_t: int = 2000) -> float:
    """Brute-force grid maximisation of (t / tau)^N; an independent check of c_kn."""
    k = min(K, 0.0)
    if k == 0 or N == 1:
        return 1.0
    best = 1.0
    ts = np.linspace(0, 1, n_t + 1)[1:]
    for theta in np.linspace(0, r, n_theta + 1)[1:]:
        vals = np.array([t / tau(k, N, t, theta) for t in ts])
        best = max(best, float(vals.max()) ** N)
    return best


@dataclass(frozen=True)
class CompressionBound:
    kind: str
    K: float
    N: float
    scale: float
    base: float
    value: float

    def to_dict(self) -> dict:
        return {"kind": self.kind, "K": self.K, "N": self.N, "scale": self.scale,
                "base": self.base, "value": self.value}


def cd_infty_bound(K: float, scale: float, base: float) -> CompressionBound:
    """exp(K^-/12 · scale^2) · base."""
    kneg = max(-K, 0.0)
    return CompressionBound("cd_infty", K, math.inf, scale, base, math.exp(kneg / 12.0 * scale ** 2) * base)


def mcp_bound(K: float, N: float, scale: float, base: float) -> CompressionBound:
    """2^N · C_{K^-,N}[scale] · base."""
    c = c_kn(K, N, scale) if scale > 0 else 1.0
    return CompressionBound("mcp", K, N, scale, base, 2.0 ** N * c * base)


def entropy(mu: Density) -> float:
    """Sum of rho log rho · m with 0 log 0 = 0."""
    rho = mu.values
    pos = rho > 0
    return float(np.sum(rho[pos] * np.log(rho[pos]) * mu.space.weights[pos]))


def renyi(mu: Density, N: float) -> float:
    """Sum of rho^(1 - 1/N) · m."""
    rho = mu.values
    pos = rho > 0
    return float(np.sum(rho[pos] ** (1.0 - 1.0 / N) * mu.space.weights[pos]))


def _snapped_density(plan: CurvePlan, t: float) -> tuple:
    mass, radius = plan.snapped_marginal(t)
    w = plan.space.weights
    if np.any((w == 0) & (mass > 0)):
        raise ValueError(f"marginal at t={t} charges a point of zero weight")
    return Density.from_masses(plan.space, mass), radius


def check_cd_convexity(plan: CurvePlan, K: float, q: float = 2.0, t_samples=None, tol: float = 1e-9) -> dict:
    """Evaluate Ent(mu_t) - [(1-t) Ent(mu_0) + t Ent(mu_1) - K/2 t(1-t) W_q^2]
    along the snapped marginals of one plan. Positive residuals violate the
    convexity inequality on this plan."""
    ts = list(np.linspace(0, 1, 11) if t_samples is None else t_samples)
    mu0, _ = _snapped_density(plan, 0.0)
    mu1, _ = _snapped_density(plan, 1.0)
    wq = optimal_coupling_q(mu0, mu1, q).value
    e0, e1 = entropy(mu0), entropy(mu1)
    rows = []
    for t in ts:
        mut, radius = _snapped_density(plan, float(t))
        et = entropy(mut)
        rhs = (1 - t) * e0 + t * e1 - K / 2 * t * (1 - t) * wq ** 2
        rows.append({"t": float(t), "entropy": et, "bound": rhs, "residual": et - rhs,
                     "violated": et - rhs > tol, "snap_radius": radius})
    return {"K": K, "q": q, "wq": wq, "rows": rows,
            "max_residual": max(r["residual"] for r in rows),
            "violations": sum(r["violated"] for r in rows),
            "note": "snapped marginals; residuals are discretisation sensitive"}


def check_mcp_inequality(space: FiniteSpace, mu0: Density, o: int, K: float, N: float,
                         t_samples=None, tol: float = 1e-9) -> dict:
    """Contract mu0 toward the point o along geodesics and compare
    U_N(mu_t) with the integral of tau^{(1-t)}_{K,N}(d(x, o)) rho_0^(1-1/N) dm.

    The residual is (that integral) - U_N(mu_t); the contraction inequality
    asks for it to be nonpositive.
    """
    if space.weights[o] <= 0:
        raise ValueError("the contraction point must carry positive weight")
    ts = list(np.linspace(0, 0.9, 10) if t_samples is None else t_samples)
    support = np.flatnonzero(mu0.masses > 0)
    if len(support) == 1 and support[0] == o:
        return {"degenerate": True, "rows": [], "violations": 0, "max_residual": 0.0}
    curves = [DiscreteCurve.geodesic(space.template, space.points[x], space.points[o]) for x in support]
    plan = CurvePlan(tuple(curves), mu0.masses[support] / mu0.total, space)
    rho0 = mu0.values[support] / mu0.total
    dists = space.dist[support, o]
    w = space.weights[support]
    rows = []
    for t in ts:
        if not 0 <= t < 1:
            raise ValueError("t must lie in [0, 1)")
        mut, radius = _snapped_density(plan, float(t))
        lhs = renyi(mut, N)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DimensionOneWarning)
            coef = np.array([tau(K, N, 1.0 - t, d) for d in dists])
        rhs = float(np.sum(coef * rho0 ** (1.0 - 1.0 / N) * w))
        rows.append({"t": float(t), "renyi": lhs, "bound": rhs, "residual": rhs - lhs,
                     "violated": rhs - lhs > tol, "snap_radius": radius})
    return {"degenerate": False, "K": K, "N": N, "o": int(o), "rows": rows,
            "max_residual": max(r["residual"] for r in rows),
            "violations": sum(r["violated"] for r in rows),
            "tau_convention": "tau = t" if N == 1 else "standard"}
