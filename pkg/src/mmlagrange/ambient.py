"""Geodesic templates, finite metric measure spaces embedded in them, and
sequences of such spaces with a quantitative convergence defect."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

KINDS = ("segment", "circle", "torus_grid")

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


@dataclass(frozen=True)
class GeodesicTemplate:
    """Continuum model space hosting every finite space of a sequence.

    Parameters
    ----------
    kind : {"segment", "circle", "torus_grid"}
    extent : tuple of float
        Segment length, circle circumference, or the two torus side lengths.
    tiebreak : str
        Rule used when two geodesics compete (antipodes on a circle).
    """

    kind: str
    extent: tuple
    tiebreak: str = "positive"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown template kind {self.kind!r}")
        ext = tuple(float(e) for e in np.atleast_1d(self.extent))
        want = 2 if self.kind == "torus_grid" else 1
        if len(ext) == 1 and want == 2:
            ext = ext * 2
        if len(ext) != want or min(ext) <= 0:
            raise ValueError("extent must hold positive lengths")
        if self.tiebreak != "positive":
            raise ValueError("only the 'positive' tie-break is supported")
        object.__setattr__(self, "extent", ext)

    @property
    def dim(self) -> int:
        return 2 if self.kind == "torus_grid" else 1

    @property
    def periodic(self) -> bool:
        return self.kind != "segment"

    @property
    def diameter(self) -> float:
        if self.kind == "segment":
            return self.extent[0]
        if self.kind == "circle":
            return self.extent[0] / 2
        return float(np.hypot(*(e / 2 for e in self.extent)))

    def as_coords(self, x) -> np.ndarray:
        """Coerce a point or an array of points to shape (..., dim)."""
        x = np.asarray(x, dtype=float)
        if self.dim == 1 and (x.ndim == 0 or x.shape[-1] != 1):
            x = x[..., None]
        return x

    def canonical(self, x) -> np.ndarray:
        x = self.as_coords(x)
        if self.kind == "segment":
            L = self.extent[0]
            if np.any(x < -1e-12) or np.any(x > L + 1e-12):
                raise ValueError("point outside the segment")
            return np.clip(x, 0.0, L)
        return np.mod(x, np.asarray(self.extent))

    def displacement(self, x, y) -> np.ndarray:
        """Signed displacement along the chosen geodesic from x to y."""
        x = self.as_coords(x)
        y = self.as_coords(y)
        delta = y - x
        if self.periodic:
            ext = np.asarray(self.extent)
            delta = np.mod(delta, ext)
            # antipodes keep the positive orientation
            delta = np.where(delta > ext / 2, delta - ext, delta)
        return delta

    def distance(self, x, y) -> np.ndarray:
        delta = self.displacement(x, y)
        if self.dim == 1:
            return np.abs(delta[..., 0])
        return np.sqrt(np.sum(delta * delta, axis=-1))

    def distance_matrix(self, points) -> np.ndarray:
        p = self.as_coords(points)
        return self.distance(p[:, None, :], p[None, :, :])

    def interpolate(self, x, y, t) -> np.ndarray:
        """Vectorised geodesic evaluation; t broadcasts against x and y."""
        x = self.as_coords(x)
        y = self.as_coords(y)
        t = np.asarray(t, dtype=float)[..., None]
        out = x + t * self.displacement(x, y)
        if self.periodic:
            out = np.mod(out, np.asarray(self.extent))
        # pin the endpoints so that evaluation at 0 and 1 is exact
        out = np.where(t == 0.0, x, out)
        out = np.where(t == 1.0, y, out)
        return out


def geodesic_point(template: GeodesicTemplate, x, y, t: float):
    """Point at time t on the constant-speed geodesic from x to y."""
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    out = template.interpolate(x, y, t)
    if template.dim == 1 and np.ndim(x) == 0:
        return float(out[0])
    return out


@dataclass(frozen=True, eq=False)
class FiniteSpace:
    """Finite metric measure space with points embedded in a template.

    Parameters
    ----------
    template : GeodesicTemplate
    points : array of shape (n, dim)
        Template coordinates, pairwise distinct.
    weights : array of shape (n,)
        The reference measure.
    basepoint : int
    dist : array of shape (n, n), optional
        Explicit distance matrix; template distances are used otherwise.
    """

    template: GeodesicTemplate
    points: np.ndarray
    weights: np.ndarray
    basepoint: int = 0
    dist: np.ndarray = None
    name: str = ""

    def __post_init__(self):
        pts = self.template.canonical(self.points)
        if pts.ndim != 2:
            raise ValueError("points must be a list of template coordinates")
        w = np.asarray(self.weights, dtype=float)
        n = len(pts)
        if w.shape != (n,):
            raise ValueError("one weight per point is required")
        if np.any(w < 0) or w.sum() <= 0:
            raise ValueError("weights must be nonnegative with positive total")
        if not 0 <= self.basepoint < n:
            raise ValueError("basepoint out of range")
        d = self.template.distance_matrix(pts) if self.dist is None else np.asarray(self.dist, float)
        _check_metric(d)
        for arr in (pts, w, d):
            arr.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "dist", d)
        object.__setattr__(self, "basepoint", int(self.basepoint))

    def __len__(self):
        return len(self.weights)

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    def snap(self, coords) -> tuple:
        """Nearest space point (lowest index on ties) and the snap radius."""
        c = self.template.as_coords(coords)
        shape = c.shape[:-1]
        flat = c.reshape(-1, self.template.dim)
        if self.template.dim == 1:
            idx = self._snap_1d(flat[:, 0])
        else:
            idx = np.empty(len(flat), dtype=int)
            for start in range(0, len(flat), 4096):
                block = flat[start:start + 4096]
                dd = self.template.distance(block[:, None, :], self.points[None, :, :])
                idx[start:start + 4096] = np.argmin(dd, axis=1)
        radius = self.template.distance(flat, self.points[idx])
        return idx.reshape(shape), radius.reshape(shape)

    def _snap_1d(self, x: np.ndarray) -> np.ndarray:
        order = self._order
        xs = self.points[order, 0]
        pos = np.searchsorted(xs, x)
        cand = [pos - 1, pos]
        if self.template.periodic:
            cand = [np.mod(c, len(xs)) for c in cand]
        else:
            cand = [np.clip(c, 0, len(xs) - 1) for c in cand]
        cand.append(np.zeros_like(pos))
        cand.append(np.full_like(pos, len(xs) - 1))
        best = None
        best_d = None
        for c in cand:
            idx = order[c]
            dd = self.template.distance(x[:, None], self.points[idx])
            if best is None:
                best, best_d = idx, dd
            else:
                better = (dd < best_d) | ((dd == best_d) & (idx < best))
                best = np.where(better, idx, best)
                best_d = np.where(better, dd, best_d)
        return best

    @property
    def _order(self) -> np.ndarray:
        cached = self.__dict__.get("_order_cache")
        if cached is None:
            cached = np.argsort(self.points[:, 0], kind="stable")
            self.__dict__["_order_cache"] = cached
        return cached

    def index_of(self, coords, tol: float = 1e-9) -> np.ndarray:
        """Indices of coordinates that must coincide with space points."""
        idx, radius = self.snap(coords)
        if np.any(radius > tol):
            raise ValueError("coordinate does not lie on a space point")
        return idx


def _check_metric(d: np.ndarray, tol: float = 1e-12):
    n = len(d)
    if d.shape != (n, n):
        raise ValueError("distance matrix must be square")
    if not np.allclose(d, d.T, atol=tol, rtol=0):
        raise ValueError("distance matrix is not symmetric")
    if np.any(np.diag(d) != 0):
        raise ValueError("distance matrix has a nonzero diagonal")
    off = d[~np.eye(n, dtype=bool)]
    if np.any(off <= 0):
        raise ValueError("distinct points must have positive distance")
    if n <= 200:
        # d[i,k] <= d[i,j] + d[j,k]
        viol = d[:, None, :] - d[:, :, None] - d[None, :, :]
        if viol.max() > tol * max(1.0, d.max()):
            raise ValueError("distance matrix violates the triangle inequality")


@dataclass(frozen=True, eq=False)
class Density:
    """Density of a measure against the weights of a finite space."""

    space: FiniteSpace
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (len(self.space),):
            raise ValueError("one density value per point is required")
        if np.any(v < 0):
            raise ValueError("density values must be nonnegative")
        v = np.where(self.space.weights > 0, v, 0.0)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_masses(cls, space: FiniteSpace, masses) -> "Density":
        masses = np.asarray(masses, dtype=float)
        w = space.weights
        if np.any((w == 0) & (masses > 0)):
            raise ValueError("mass on a point of zero weight has no density")
        vals = np.divide(masses, w, out=np.zeros_like(masses), where=w > 0)
        return cls(space, vals)

    @property
    def masses(self) -> np.ndarray:
        return self.values * self.space.weights

    @property
    def total(self) -> float:
        return float(self.masses.sum())

    def is_probability(self, tol: float = 1e-10) -> bool:
        return abs(self.total - 1.0) <= tol

    def sup_norm(self) -> float:
        return float(self.values.max())

    def normalized(self) -> "Density":
        return Density(self.space, self.values / self.total)


def _cell_integral(spec, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Gauss-Legendre integral of a 1-D spec over the cells [lo, hi]."""
    half = (hi - lo)[:, None] / 2
    mid = (hi + lo)[:, None] / 2
    x = mid + half * _GL_NODES[None, :]
    vals = np.asarray(spec(x[..., None]), dtype=float).reshape(x.shape)
    return (half[:, 0]) * (vals @ _GL_WEIGHTS)


def _uniform_spec(template: GeodesicTemplate):
    vol = float(np.prod(template.extent))
    return lambda x: np.full(np.shape(x)[:-1], 1.0 / vol)


def discretize(template: GeodesicTemplate, n, measure_spec="uniform", basepoint: int = 0) -> FiniteSpace:
    """Equally spaced finite space with weights obtained by integrating
    ``measure_spec`` over the cell attached to each point.

    Segments use n points from 0 to L and n equal cells of length L/n
    (half-open, last one closed). Circles and tori use points at k·L/n with
    the cell centred on its point. ``"uniform"`` is the normalised volume
    measure, so every generated space is a probability space.
    """
    spec = _uniform_spec(template) if measure_spec == "uniform" else measure_spec
    if not callable(spec):
        raise ValueError("measure_spec must be 'uniform' or a callable")
    if template.kind == "torus_grid":
        nx, ny = (n, n) if np.isscalar(n) else tuple(n)
        if min(nx, ny) < 2:
            raise ValueError("need at least 2 points per side")
        Lx, Ly = template.extent
        xs = np.arange(nx) * Lx / nx
        ys = np.arange(ny) * Ly / ny
        pts = np.array([(x, y) for x in xs for y in ys])
        hx, hy = Lx / nx, Ly / ny
        gx = _GL_NODES * hx / 2
        gy = _GL_NODES * hy / 2
        ww = np.outer(_GL_WEIGHTS, _GL_WEIGHTS) * hx * hy / 4
        quad = pts[:, None, None, :] + np.stack(np.meshgrid(gx, gy, indexing="ij"), axis=-1)[None]
        vals = np.asarray(spec(np.mod(quad, template.extent)), dtype=float).reshape(len(pts), 16, 16)
        weights = np.einsum("pij,ij->p", vals, ww)
    else:
        n = int(n)
        if n < 2:
            raise ValueError("n must be at least 2")
        L = template.extent[0]
        if template.kind == "segment":
            pts = np.arange(n) * L / (n - 1)
            lo = np.arange(n) * L / n
        else:
            pts = np.arange(n) * L / n
            lo = pts - L / (2 * n)
        hi = lo + L / n
        if template.kind == "circle":
            inner = lambda x: spec(np.mod(x, L))
            weights = _cell_integral(inner, lo, hi)
        else:
            weights = _cell_integral(spec, lo, hi)
        pts = pts[:, None]
    if np.any(weights < -1e-15) or weights.sum() <= 0:
        raise ValueError("measure_spec must be nonnegative and not identically 0")
    return FiniteSpace(template, pts, np.clip(weights, 0, None), basepoint=basepoint)


@dataclass(frozen=True)
class TestFunction:
    """Bounded function on template coordinates with a recorded support radius."""

    name: str
    fn: Callable
    support_radius: float

    def __call__(self, coords) -> np.ndarray:
        return np.asarray(self.fn(coords), dtype=float)


TestFunction.__test__ = False  # keep pytest from collecting the class


def _hat(template: GeodesicTemplate, center, radius: float):
    c = np.asarray(center, dtype=float)

    def fn(x):
        d = template.distance(template.as_coords(x), template.as_coords(c))
        return np.maximum(0.0, 1.0 - d / radius)

    return fn


def default_test_family(template: GeodesicTemplate, version: str = "bumps-v1") -> list:
    """Finite surrogate for bounded continuous functions with bounded support:
    the constant, low-degree polynomials (or Fourier modes on periodic
    templates) times a global bump, and hat functions on a fixed grid."""
    if version != "bumps-v1":
        raise ValueError(f"unknown test family {version!r}")
    diam = template.diameter
    fam = [TestFunction("one", lambda x: np.ones(np.shape(x)[:-1]), diam)]
    if template.kind == "segment":
        L = template.extent[0]
        for k in (1, 2, 3):
            fam.append(TestFunction(f"poly{k}", lambda x, k=k: (x[..., 0] / L) ** k, diam))
        centers = [((j + 0.5) * L / 4,) for j in range(4)]
        radius = L / 4
    else:
        for axis, ext in enumerate(template.extent):
            for k in (1, 2):
                fam.append(TestFunction(f"cos{k}_{axis}", lambda x, k=k, a=axis, e=ext: np.cos(2 * np.pi * k * x[..., a] / e), diam))
                fam.append(TestFunction(f"sin{k}_{axis}", lambda x, k=k, a=axis, e=ext: np.sin(2 * np.pi * k * x[..., a] / e), diam))
        if template.kind == "circle":
            L = template.extent[0]
            centers = [(j * L / 4,) for j in range(4)]
            radius = L / 4
        else:
            Lx, Ly = template.extent
            centers = [(i * Lx / 2, j * Ly / 2) for i in range(2) for j in range(2)]
            radius = min(Lx, Ly) / 3
    for j, c in enumerate(centers):
        fam.append(TestFunction(f"hat{j}", _hat(template, c, radius), radius))
    return fam


@dataclass(frozen=True, eq=False)
class SpaceSequence:
    """Ordered spaces on one template converging to a designated limit."""

    template: GeodesicTemplate
    terms: tuple
    limit: FiniteSpace
    test_family: tuple = field(default=())
    family_id: str = "bumps-v1"

    def __post_init__(self):
        terms = tuple(self.terms)
        for s in terms + (self.limit,):
            if s.template != self.template:
                raise ValueError("all spaces must share the sequence template")
        fam = tuple(self.test_family) or tuple(default_test_family(self.template, self.family_id))
        for phi in fam:
            if not np.isfinite(phi.support_radius):
                raise ValueError("test functions need a finite support radius")
        object.__setattr__(self, "terms", terms)
        object.__setattr__(self, "test_family", fam)

    def __len__(self):
        return len(self.terms)


def integrate(space: FiniteSpace, phi, values=None) -> float:
    """Sum of phi(x)·values(x)·m(x) over the points of the space."""
    vals = phi(space.points)
    if values is not None:
        vals = vals * np.asarray(values, dtype=float)
    return float(np.dot(vals, space.weights))


def pmgh_defect(seq: SpaceSequence, k: int) -> float:
    """Largest test-family discrepancy between term k and the limit measure,
    plus the template distance between the two basepoints."""
    if not seq.test_family:
        raise ValueError("empty test family")
    term = seq.terms[k]
    lim = seq.limit
    gap = max(abs(integrate(term, phi) - integrate(lim, phi)) for phi in seq.test_family)
    base = float(seq.template.distance(term.points[term.basepoint], lim.points[lim.basepoint]))
    return gap + base


def refining_sequence(template: GeodesicTemplate, ns: Sequence, n_limit: int, measure_spec="uniform") -> SpaceSequence:
    """Discretizations at each n in ``ns`` converging to the one at ``n_limit``."""
    terms = tuple(discretize(template, n, measure_spec) for n in ns)
    return SpaceSequence(template, terms, discretize(template, n_limit, measure_spec))
