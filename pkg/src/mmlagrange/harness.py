"""Convergence experiments along a space sequence: L^p convergence checks for
function sequences, the liminf pipelines through polygonal builds, and
report emission."""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ambient import Density, FiniteSpace, SpaceSequence, integrate
from .calculus import (SpaceFunction, cheeger_p, default_neighbors, duality_guaranteed, lp_norm,
                       total_variation)
from .interpolation import build_polygonal_inf, build_polygonal_q, c_kn
from .plans import CurvePlan, DiscreteCurve, ke_q, lip_const, pairing

CORPUS_VERSION = "corpus-v1"
ASSUMPTIONS = ("essentially non-branching (declared, not verified)", "finite total mass")
DEFAULT_TOLERANCES = {"inequality": 1e-8, "margin": 1e-6, "weak": 0.05, "norm": 0.05}


@dataclass(frozen=True, eq=False)
class FunctionSequence:
    """One function per term plus the limit function, with exponent p."""

    seq: SpaceSequence
    terms: tuple
    limit_fn: SpaceFunction
    p: float

    def __post_init__(self):
        terms = tuple(self.terms)
        if len(terms) != len(self.seq.terms):
            raise ValueError("one function per term is required")
        for f, s in zip(terms, self.seq.terms):
            if f.space is not s:
                raise ValueError("term functions must live on the term spaces")
        if self.limit_fn.space is not self.seq.limit:
            raise ValueError("the limit function must live on the limit space")
        if self.p < 1:
            raise ValueError("p must be at least 1")
        object.__setattr__(self, "terms", terms)

    @classmethod
    def from_callable(cls, seq: SpaceSequence, fn, p: float) -> "FunctionSequence":
        terms = tuple(SpaceFunction.from_callable(s, fn) for s in seq.terms)
        return cls(seq, terms, SpaceFunction.from_callable(seq.limit, fn), p)

    def map(self, fn) -> "FunctionSequence":
        """Apply a pointwise map to every function."""
        terms = tuple(f.with_values(fn(f.values)) for f in self.terms)
        return FunctionSequence(self.seq, terms, self.limit_fn.with_values(fn(self.limit_fn.values)), self.p)

    @property
    def norms(self) -> list:
        return [lp_norm(f, self.p) for f in self.terms]


def _term_fn(fs: FunctionSequence, k) -> SpaceFunction:
    return fs.limit_fn if k in ("limit", None) else fs.terms[k]


def lp_weak_defect(fs: FunctionSequence, k) -> float:
    """Largest test-family discrepancy between f_k m_k and f m."""
    f = _term_fn(fs, k)
    lim = fs.limit_fn
    return max(abs(integrate(f.space, phi, f.values) - integrate(lim.space, phi, lim.values))
               for phi in fs.seq.test_family)


def _tail(seq_len: int) -> slice:
    return slice(seq_len - max(1, math.ceil(seq_len / 3)), seq_len)


def signed_root(z):
    """sgn(z) sqrt|z|."""
    return np.sign(z) * np.sqrt(np.abs(z))


def lp_strong_check(fs: FunctionSequence, tolerances=None) -> dict:
    """Weak defects along the sequence and the norm limsup margin.

    Weak convergence is declared when every defect over the final third is
    within the weak tolerance; strong convergence additionally needs the
    largest tail norm to exceed the limit norm by at most the norm
    tolerance. For p = 1 the check is repeated on sgn(f) sqrt|f| in L^2.
    """
    tol = {**DEFAULT_TOLERANCES, **(tolerances or {})}
    defects = [lp_weak_defect(fs, k) for k in range(len(fs.terms))]
    norms = fs.norms
    lim_norm = lp_norm(fs.limit_fn, fs.p)
    tail = _tail(len(defects))
    weak = bool(max(defects[tail]) <= tol["weak"])
    margin = max(norms[tail]) - lim_norm
    out = {"p": fs.p, "weak_defects": defects, "weak": weak, "norms": norms, "limit_norm": lim_norm,
           "norm_margin": margin, "strong": bool(weak and margin <= tol["norm"])}
    if fs.p == 1:
        root = FunctionSequence(fs.seq, fs.map(signed_root).terms, fs.map(signed_root).limit_fn, 2.0)
        out["root_check"] = lp_strong_check(root, tol)
        out["strong"] = bool(out["strong"] and out["root_check"]["strong"])
    return out


def coupling_limit_check(fs: FunctionSequence, gs: FunctionSequence) -> dict:
    """Residuals |sum f_k g_k m_k - sum f g m| with a log-log trend fit."""
    p, q = fs.p, gs.p
    conj = (p == 1 and math.isinf(q)) or (q == 1 and math.isinf(p)) or \
        (not math.isinf(p) and not math.isinf(q) and abs(1 / p + 1 / q - 1) <= 1e-12)
    if not conj:
        raise ValueError("exponents must be conjugate")
    if fs.seq is not gs.seq:
        raise ValueError("both sequences must share the space sequence")
    lim = float((fs.limit_fn.values * gs.limit_fn.values) @ fs.seq.limit.weights)
    res = [abs(float((f.values * g.values) @ f.space.weights) - lim) for f, g in zip(fs.terms, gs.terms)]
    sizes = [len(s) for s in fs.seq.terms]
    pos = [(math.log(n), math.log(r)) for n, r in zip(sizes, res) if r > 0]
    slope = float(np.polyfit(*zip(*pos), 1)[0]) if len(pos) >= 2 else None
    return {"residuals": res, "sizes": sizes, "limit_value": lim, "loglog_slope": slope}


# plan corpus on the limit space

def anchor_points(seq: SpaceSequence) -> list:
    """Limit points that are the nearest limit point of some point of every
    term. Dirac marginals there survive the nearest-point density transfer."""
    sets = [set(seq.limit.snap(t.points)[0].tolist()) for t in seq.terms]
    return sorted(set.intersection(*sets)) if sets else list(range(len(seq.limit)))


def shipped_density_pairs(space: FiniteSpace) -> list:
    """Two bounded density pairs on the space: translated blocks and
    translated tents."""
    t = space.template
    x = space.points
    ext = np.asarray(t.extent)
    shift = 0.45 * ext
    out = []
    lo = 0.1 * ext
    hi = 0.35 * ext
    block0 = np.all((x >= lo - 1e-12) & (x <= hi + 1e-12), axis=1).astype(float)
    block1 = np.all((x >= lo + shift - 1e-12) & (x <= hi + shift + 1e-12), axis=1).astype(float)
    out.append(("blocks", block0, block1))
    c0 = 0.25 * ext
    d0 = t.distance(x, c0)
    d1 = t.distance(x, c0 + shift)
    r = 0.15 * float(ext.min())
    out.append(("tents", np.maximum(0.0, 1 - d0 / r), np.maximum(0.0, 1 - d1 / r)))
    res = []
    for name, a, b in out:
        if (a @ space.weights) > 0 and (b @ space.weights) > 0:
            res.append((name, Density(space, a / (a @ space.weights)), Density(space, b / (b @ space.weights))))
    return res


def product_plan(mu0: Density, mu1: Density) -> CurvePlan:
    space = mu0.space
    i0 = np.flatnonzero(mu0.masses > 0)
    i1 = np.flatnonzero(mu1.masses > 0)
    curves, masses = [], []
    for a in i0:
        for b in i1:
            curves.append(DiscreteCurve.geodesic(space.template, space.points[a], space.points[b]))
            masses.append(mu0.masses[a] * mu1.masses[b])
    m = np.array(masses)
    return CurvePlan(tuple(curves), m / m.sum(), space)


def _walk(space: FiniteSpace, nb, start: int, direction: np.ndarray, steps: int) -> list:
    path = [start]
    for _ in range(steps):
        here = path[-1]
        best, gain = here, 0.0
        for j in nb[here]:
            g = float(space.template.displacement(space.points[here], space.points[j]) @ direction)
            if g > gain + 1e-12:
                best, gain = j, g
        path.append(best)
    return path


def edge_path_plan(space: FiniteSpace, nb, starts, direction, steps: int, profile=None) -> CurvePlan:
    """Every start point walks ``steps`` graph edges in the given direction
    at uniform times; masses follow m times the profile."""
    starts = np.asarray(starts)
    direction = np.asarray(direction, dtype=float)
    grid = np.linspace(0.0, 1.0, steps + 1)
    curves = [DiscreteCurve(grid, space.points[_walk(space, nb, int(s), direction, steps)]) for s in starts]
    w = space.weights[starts] * (np.ones(len(starts)) if profile is None else np.asarray(profile))
    return CurvePlan(tuple(curves), w / w.sum(), space)


def plan_corpus(seq: SpaceSequence, seed: int = 0, n_random: int = 3, max_dirac_anchors: int = 4) -> list:
    """Versioned corpus of test plans on the limit space.

    Dirac geodesic plans between anchor points, product plans between the
    shipped density pairs, and a seeded family of edge-path plans that move
    blocks of points along the neighbour graph.
    """
    space = seq.limit
    t = space.template
    corpus = []
    anchors = anchor_points(seq)
    if len(anchors) > max_dirac_anchors:
        pick = np.linspace(0, len(anchors) - 1, max_dirac_anchors).round().astype(int)
        anchors = [anchors[i] for i in pick]
    for a in anchors:
        for b in anchors:
            if a != b:
                c = DiscreteCurve.geodesic(t, space.points[a], space.points[b])
                corpus.append((f"dirac-{a}-{b}", CurvePlan((c,), np.ones(1), space)))
    for name, mu0, mu1 in shipped_density_pairs(space):
        corpus.append((f"product-{name}", product_plan(mu0, mu1)))
    rng = np.random.default_rng(seed)
    nb = default_neighbors(space)
    n = len(space)
    for k in range(n_random):
        size = int(rng.integers(max(2, n // 8), max(3, n // 4) + 1))
        first = int(rng.integers(0, n - size))
        order = np.lexsort(space.points.T[::-1])
        starts = order[first:first + size]
        angle = rng.uniform(0, 2 * np.pi)
        direction = np.array([np.cos(angle), np.sin(angle)])[:t.dim] if t.dim == 2 else \
            np.array([1.0 if rng.random() < 0.5 else -1.0])
        steps = int(rng.integers(2, max(3, n // 8) + 1))
        profile = rng.uniform(0.5, 1.5, size)
        corpus.append((f"edge-{k}", edge_path_plan(space, nb, starts, direction, steps, profile)))
    return corpus


# experiments

@dataclass
class MoscoReport:
    """Rows per (plan, M, n), liminf margins and the per-plan chain."""

    config: dict
    rows: list = field(default_factory=list)
    margins: dict = field(default_factory=dict)
    chains: list = field(default_factory=list)
    checks: dict = field(default_factory=dict)

    @property
    def violations(self) -> int:
        return sum(not v for v in self.checks.values())

    @property
    def infeasible(self) -> int:
        return sum(not r["feasible"] for r in self.rows)

    def exit_code(self) -> int:
        if self.violations:
            return 2
        if self.infeasible:
            return 3
        return 0

    def to_dict(self) -> dict:
        return _clean({
            "config": self.config,
            "rows": self.rows,
            "margins": self.margins,
            "chains": self.chains,
            "checks": self.checks,
            "summary": {"violations": self.violations, "infeasible": self.infeasible,
                        "exit_code": self.exit_code()},
            "assumptions": list(ASSUMPTIONS),
        })


def _clean(x):
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        v = float(x)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if x is None or isinstance(x, str):
        return x
    return float(x)


def _margins(values: list, limit_value: float, factor: float) -> dict:
    tail = values[_tail(len(values))]
    low = min(tail)
    return {"limit": limit_value, "terms": values, "tail_min": low, "factor": factor,
            "margin": limit_value - factor * low}


def _run_cells(cells, fn, jobs: int):
    if jobs <= 1:
        return [fn(c) for c in cells]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, cells))


def _check_schedule(schedule, seq):
    sched = [(int(M), int(n)) for M, n in schedule]
    if not sched:
        raise ValueError("empty schedule")
    for M, n in sched:
        if M < 1 or not 0 <= n < len(seq.terms):
            raise ValueError(f"bad schedule cell {(M, n)}")
    return sched


def mosco_experiment(fs: FunctionSequence, regime: str, p: float, schedule, K: float = 0.0, N=None,
                     corpus=None, corpus_seed: int = 0, tolerances=None, jobs: int = 1) -> MoscoReport:
    """Liminf pipeline for the p-Cheeger energy.

    Every plan of the corpus is rebuilt on each schedule cell by the
    polygonal q-builder, q the conjugate exponent. Each row carries both
    sides of the discrete duality inequality and of the build inequalities.
    """
    if p <= 1:
        raise ValueError("use mosco_experiment_bv for p = 1")
    q = p / (p - 1)
    tol = {**DEFAULT_TOLERANCES, **(tolerances or {})}
    seq = fs.seq
    sched = _check_schedule(schedule, seq)
    corpus = plan_corpus(seq, corpus_seed) if corpus is None else corpus
    ch_terms = {n: cheeger_p(fs.terms[n], p) for _, n in sched}
    ch_limit = cheeger_p(fs.limit_fn, p)

    def cell(item):
        (pid, eta), (M, n) = item
        f_n = fs.terms[n]
        row = {"plan": pid, "M": M, "n": n, "n_points": len(seq.terms[n])}
        try:
            b = build_polygonal_q(eta, seq, n, M, q, regime, K=K, N=N)
        except (ValueError, RuntimeError) as exc:
            row.update({"feasible": False, "failure": str(exc)})
            return row
        d = b.diagnostics
        row.update({"feasible": b.feasible, "failure": d.get("failure"), "sigma": d["sigma"],
                    "discarded_bound": d["discarded_bound"], "jensen_lhs": d["jensen_lhs"],
                    "jensen_rhs": d["jensen_rhs"], "wq_legs": d["wq_legs"]})
        if not b.feasible:
            return row
        res = b.result
        comp = d["comp_result"]
        ke = d["ke_result"]
        pair = pairing(res, f_n.values)
        ch = ch_terms[n]
        rhs = comp ** (1 / p) * ke ** (1 / q) * ch ** (1 / p)
        row.update({"pairing": pair, "pairing_limit": pairing(eta, fs.limit_fn.values),
                    "comp": comp, "ke": ke, "cheeger": ch, "duality_rhs": rhs,
                    "guaranteed": duality_guaranteed(res, f_n),
                    "ke_bound": d["ke_bound"], "comp_certificate": d["comp_certificate"],
                    "factor": 1.0 / (1.0 - d["sigma"]), "correction_flags": d["correction_flags"],
                    "endpoint_lq_change": d["endpoint_lq_change"]})
        row["pairing_residual"] = abs(pair - row["pairing_limit"])
        return row

    items = [(pe, c) for pe in corpus for c in sched]
    rows = _run_cells(items, cell, jobs)
    report = MoscoReport(config={"kind": "sobolev", "regime": regime, "p": p, "q": q, "K": K, "N": N,
                                 "schedule": [list(c) for c in sched], "corpus_version": CORPUS_VERSION,
                                 "corpus_seed": corpus_seed, "corpus": [pid for pid, _ in corpus],
                                 "tolerances": tol, "test_family": seq.family_id,
                                 "gates": "none" if regime == "cd_nonneg" else "chebyshev"})
    report.rows = rows
    factor = 2.0 ** N if regime == "mcp" else 1.0
    ns = sorted({n for _, n in sched})
    report.margins = _margins([ch_terms[n] for n in ns], ch_limit, factor)
    report.margins["n"] = ns
    _finish(report, corpus, fs, rows, tol, "duality_rhs")
    return report


def mosco_experiment_bv(fs: FunctionSequence, regime: str, schedule, K: float = 0.0, N=None,
                        q_schedule=(2, 4, 8, 16), corpus=None, corpus_seed: int = 0,
                        tolerances=None, jobs: int = 1) -> MoscoReport:
    """Liminf pipeline for the total variation through polygonal
    inf-builds; rows carry Comp, Lip and the per-M inflation factor."""
    if regime not in ("cd", "mcp"):
        raise ValueError(f"unknown regime {regime!r}")
    tol = {**DEFAULT_TOLERANCES, **(tolerances or {})}
    seq = fs.seq
    sched = _check_schedule(schedule, seq)
    corpus = plan_corpus(seq, corpus_seed) if corpus is None else corpus
    tv_terms = {n: total_variation(fs.terms[n]) for _, n in sched}
    tv_limit = total_variation(fs.limit_fn)
    kneg = max(-K, 0.0)

    def cell(item):
        (pid, eta), (M, n) = item
        f_n = fs.terms[n]
        lip_eta = lip_const(eta)
        if regime == "cd":
            factor = math.exp(kneg / 12.0 * lip_eta ** 2 / M ** 2)
        else:
            factor = 2.0 ** N * (c_kn(K, N, lip_eta / M) if lip_eta > 0 else 1.0)
        row = {"plan": pid, "M": M, "n": n, "n_points": len(seq.terms[n]), "factor": factor}
        try:
            b = build_polygonal_inf(eta, seq, n, M, regime, q_schedule=q_schedule, K=K, N=N)
        except (ValueError, RuntimeError) as exc:
            row.update({"feasible": False, "failure": str(exc)})
            return row
        d = b.diagnostics
        comp = d["comp_result"]
        lip = d["lip_result"]
        pair = pairing(b.result, f_n.values)
        tv = tv_terms[n]
        good = all(r["discarded"] <= r["bound"] + tol["inequality"] for rows in d["schedule_rows"] for r in rows)
        row.update({"feasible": True, "failure": None, "pairing": pair,
                    "pairing_limit": pairing(eta, fs.limit_fn.values), "comp": comp, "lip": lip,
                    "lip_eta": lip_eta, "lip_legs_scaled": d["lip_legs_scaled"], "total_variation": tv,
                    "duality_rhs": comp * lip * tv, "guaranteed": duality_guaranteed(b.result, f_n),
                    "comp_eta": d["comp_eta"], "comp_surrogate_bound": factor * d["comp_eta"],
                    "comp_certificate": d["comp_certificate"], "winf_legs": d["winf_legs"],
                    "transfer_c_n": d["transfer"]["c_n"], "good_infty_ok": good})
        row["pairing_residual"] = abs(pair - row["pairing_limit"])
        return row

    items = [(pe, c) for pe in corpus for c in sched]
    rows = _run_cells(items, cell, jobs)
    report = MoscoReport(config={"kind": "bv", "regime": regime, "p": 1.0, "K": K, "N": N,
                                 "schedule": [list(c) for c in sched], "q_schedule": list(q_schedule),
                                 "corpus_version": CORPUS_VERSION, "corpus_seed": corpus_seed,
                                 "corpus": [pid for pid, _ in corpus], "tolerances": tol,
                                 "test_family": seq.family_id})
    report.rows = rows
    factor = 2.0 ** N if regime == "mcp" else 1.0
    ns = sorted({n for _, n in sched})
    report.margins = _margins([tv_terms[n] for n in ns], tv_limit, factor)
    report.margins["n"] = ns
    _finish(report, corpus, fs, rows, tol, "duality_rhs")
    return report


def _finish(report: MoscoReport, corpus, fs, rows, tol, rhs_key):
    eps = tol["inequality"]
    checks = {}
    for i, r in enumerate(rows):
        if not r["feasible"]:
            continue
        tag = f"{r['plan']}|M={r['M']}|n={r['n']}"
        if r.get("guaranteed"):
            checks[f"duality|{tag}"] = r["pairing"] <= r[rhs_key] + eps
        if "jensen_lhs" in r:
            checks[f"jensen|{tag}"] = r["jensen_lhs"] <= r["jensen_rhs"] + eps
            checks[f"discarded|{tag}"] = r["sigma"] <= r["discarded_bound"] + eps
            checks[f"ke_bound|{tag}"] = r["ke"] <= r["ke_bound"] + eps
        if "good_infty_ok" in r:
            checks[f"good_infty|{tag}"] = r["good_infty_ok"]
            checks[f"lip_identity|{tag}"] = abs(r["lip"] - r["lip_legs_scaled"]) <= 1e-10 * max(1.0, r["lip"])
    checks["liminf_margin"] = report.margins["margin"] <= tol["margin"]
    for pid, eta in corpus:
        prow = [r for r in rows if r["plan"] == pid and r["feasible"]]
        if not prow:
            report.chains.append({"plan": pid, "feasible": False})
            continue
        ns = sorted({r["n"] for r in prow})
        tail_ns = set(ns[_tail(len(ns))])
        lhs = pairing(eta, fs.limit_fn.values)
        rhs = max(r[rhs_key] for r in prow if r["n"] in tail_ns)
        by_n = [max(r["pairing_residual"] for r in prow if r["n"] == n) for n in ns]
        chain = {"plan": pid, "feasible": True, "lhs": lhs, "rhs": rhs, "holds": lhs <= rhs + eps,
                 "n": ns, "pairing_residuals": by_n}
        report.chains.append(chain)
        checks[f"chain|{pid}"] = chain["holds"]
    report.checks = checks


def pairing_residuals_decreasing(report: MoscoReport, slack: float = 1e-12) -> bool:
    """Largest pairing residual over the corpus, per n, never increases."""
    ns = report.margins["n"]
    worst = []
    for n in ns:
        vals = [r["pairing_residual"] for r in report.rows if r["n"] == n and r["feasible"]]
        worst.append(max(vals) if vals else math.inf)
    return all(b <= a + slack for a, b in zip(worst[:-1], worst[1:]))


def select_diagonal(eta: CurvePlan, seq: SpaceSequence, Ms, q: float, regime: str, K: float = 0.0, N=None) -> list:
    """For each M, the first term index whose build has Ke_q within
    Ke_q(eta)/M of Ke_q(eta) and endpoint L^q changes at most 1/M."""
    out = []
    target = ke_q(eta, q)
    for M in Ms:
        chosen = None
        for n in range(len(seq.terms)):
            try:
                b = build_polygonal_q(eta, seq, n, M, q, regime, K=K, N=N)
            except (ValueError, RuntimeError):
                continue
            if not b.feasible:
                continue
            d = b.diagnostics
            if abs(d["ke_result"] - target) <= target / M and max(d["endpoint_lq_change"]) <= 1.0 / M:
                chosen = n
                break
        out.append({"M": M, "n": chosen, "met": chosen is not None})
    return out


# emission

CSV_FIELDS = ("plan", "M", "n", "n_points", "feasible", "pairing", "pairing_limit", "pairing_residual",
              "comp", "ke", "lip", "cheeger", "total_variation", "duality_rhs", "guaranteed", "factor",
              "sigma", "discarded_bound", "jensen_lhs", "jensen_rhs", "ke_bound", "failure")


def report_json(report: MoscoReport) -> str:
    return json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n"


def report_csv(report: MoscoReport) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_FIELDS, extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    for r in _clean(report.rows):
        w.writerow({k: r.get(k, "") for k in CSV_FIELDS})
    return buf.getvalue()


def _polyline_chart(x0, y0, w, h, xs, ys, title, xlabel):
    parts = [f'<g transform="translate({x0},{y0})">',
             f'<rect x="0" y="0" width="{w}" height="{h}" fill="none" stroke="#888"/>',
             f'<text x="{w / 2:.1f}" y="-8" text-anchor="middle" font-size="13">{title}</text>',
             f'<text x="{w / 2:.1f}" y="{h + 30}" text-anchor="middle" font-size="11">{xlabel}</text>']
    pts = [(x, y) for x, y in zip(xs, ys) if isinstance(y, (int, float)) and math.isfinite(y)]
    if pts:
        xl, xh = min(p[0] for p in pts), max(p[0] for p in pts)
        yl, yh = min(p[1] for p in pts), max(p[1] for p in pts)
        xr = (xh - xl) or 1.0
        yr = (yh - yl) or 1.0
        coords = [(10 + (x - xl) / xr * (w - 20), h - 10 - (y - yl) / yr * (h - 20)) for x, y in pts]
        path = " ".join(f"{a:.2f},{b:.2f}" for a, b in coords)
        parts.append(f'<polyline points="{path}" fill="none" stroke="#1f5fa8" stroke-width="2"/>')
        for (a, b), (x, y) in zip(coords, pts):
            parts.append(f'<circle cx="{a:.2f}" cy="{b:.2f}" r="3" fill="#1f5fa8"/>')
            parts.append(f'<text x="{a:.2f}" y="{b - 6:.2f}" font-size="9" text-anchor="middle">{y:.4g}</text>')
        parts.append(f'<text x="0" y="{h + 14}" font-size="9">{xl:g}</text>')
        parts.append(f'<text x="{w}" y="{h + 14}" font-size="9" text-anchor="end">{xh:g}</text>')
    parts.append("</g>")
    return "\n".join(parts)


def report_svg(report: MoscoReport) -> str:
    """Margin against term size and largest inflation factor against M."""
    m = report.margins
    sizes = []
    for n in m["n"]:
        rows = [r for r in report.rows if r["n"] == n]
        sizes.append(rows[0]["n_points"] if rows else n)
    margins = [m["limit"] - m["factor"] * v for v in m["terms"]]
    Ms = sorted({r["M"] for r in report.rows})
    factors = []
    for M in Ms:
        vals = [r["factor"] for r in report.rows if r["M"] == M and "factor" in r]
        factors.append(max(vals) if vals else float("nan"))
    body = [_polyline_chart(40, 40, 320, 220, sizes, margins, "liminf margin per term", "points in term"),
            _polyline_chart(420, 40, 320, 220, Ms, factors, "inflation factor per M", "M")]
    return ('<?xml version="1.0" encoding="UTF-8"?>\n'
            '<svg xmlns="http://www.w3.org/2000/svg" width="780" height="320" viewBox="0 0 780 320">\n'
            + "\n".join(body) + "\n</svg>\n")


def emit_report(report: MoscoReport, fmt: str, out_dir) -> Path:
    """Write report.<fmt> into out_dir and return its path."""
    writers = {"json": report_json, "csv": report_csv, "svg": report_svg}
    if fmt not in writers:
        raise ValueError(f"unknown format {fmt!r}")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        path = out / f"report.{fmt}"
        path.write_text(writers[fmt](report))
    except OSError as exc:
        raise OSError(f"cannot write report to {out}: {exc}") from exc
    return path


def load_report(path) -> dict:
    return json.loads(Path(path).read_text())
