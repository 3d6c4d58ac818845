"""Command-line entry point.

Every subcommand prints one JSON object on standard output, or writes it to
``--out``. Exit codes: 0 success, 2 violated inequality rows, 3 infeasible
cells only, 64 usage error, 65 missing or malformed input, 1 other failure.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .ambient import GeodesicTemplate, discretize, pmgh_defect, refining_sequence
from .calculus import cheeger_p, duality_ratio_bv, duality_ratio_sobolev, local_lip, lp_norm, total_variation
from .harness import MoscoReport, _clean, emit_report, load_report, mosco_experiment, mosco_experiment_bv
from .interpolation import build_polygonal_inf, build_polygonal_q
from .io import (ConfigError, dumps, function_sequence_from_config, load_config, load_density, load_function,
                 load_plan, load_sequence, load_space, plan_to_dict, sequence_to_dict, space_to_dict)
from .plans import plan_record
from .transport import lift_to_dynamical, optimal_coupling_q, winf

EX_USAGE = 64
EX_DATAERR = 65


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _floatlist(text: str) -> list:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _intlist(text: str) -> list:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _exponent(text: str) -> float:
    if text.lower() in ("inf", "infinity"):
        return math.inf
    return float(text)


def _term(text: str):
    return "limit" if text == "limit" else int(text)


def _output_dir(default) -> Path:
    return Path(os.environ.get("OUTPUT_DIR") or default)


# handlers return (payload, exit code)

def _space_gen(a):
    t = GeodesicTemplate(a.template, tuple(a.extent), a.tiebreak)
    n = a.n if a.template != "torus_grid" else (a.n, a.n2 or a.n)
    if a.measure != "uniform":
        raise ConfigError("only the uniform measure is available from the command line")
    return space_to_dict(discretize(t, n, "uniform", a.basepoint), with_dist=a.with_dist), 0


def _space_info(a):
    s = load_space(a.space)
    d = s.dist[~np.eye(len(s), dtype=bool)]
    return {"n_points": len(s), "total_mass": s.total_mass, "template": s.template.kind,
            "diameter": float(s.dist.max()), "min_gap": float(d.min()) if d.size else 0.0,
            "basepoint": s.basepoint}, 0


def _space_sequence(a):
    t = GeodesicTemplate(a.template, tuple(a.extent))
    seq = refining_sequence(t, a.ns, a.n_limit)
    out = sequence_to_dict(seq)
    out["defects"] = [pmgh_defect(seq, k) for k in range(len(seq))]
    return out, 0


def _sequence_defect(a):
    seq = load_sequence(a.sequence)
    return {"n_points": [len(s) for s in seq.terms], "defects": [pmgh_defect(seq, k) for k in range(len(seq))],
            "test_family": seq.family_id}, 0


def _ot_pair(a):
    mu0 = load_density(a.mu0)
    mu1 = load_density(a.mu1)
    return mu0, mu1


def _ot_wq(a):
    mu0, mu1 = _ot_pair(a)
    res = optimal_coupling_q(mu0, mu1, a.q, exact=a.exact, rule=a.rule)
    return res.to_dict(), 0


def _ot_winf(a):
    mu0, mu1 = _ot_pair(a)
    return winf(mu0, mu1, route=a.route).to_dict(), 0


def _ot_lift(a):
    mu0, mu1 = _ot_pair(a)
    res = winf(mu0, mu1) if math.isinf(a.q) else optimal_coupling_q(mu0, mu1, a.q, exact=a.exact)
    plan = lift_to_dynamical(res, a.steps)
    qs = (2.0,) if math.isinf(a.q) else (a.q,)
    return {"transport": res.to_dict(), "plan": plan_to_dict(plan), "record": _clean(plan_record(plan, qs))}, 0


def _plan_record(a):
    plan = load_plan(a.plan)
    return _clean(plan_record(plan, tuple(a.q or [2.0]), k_mid=a.k_mid)), 0


def _plan_polygonal(a):
    seq = load_sequence(a.sequence)
    eta = load_plan(a.plan, space=seq.limit)
    if math.isinf(a.q):
        regime = a.regime if a.regime in ("cd", "mcp") else {"cd_nonneg": "cd", "cd_general": "cd"}.get(a.regime)
        b = build_polygonal_inf(eta, seq, a.term, a.M, regime, q_schedule=tuple(a.q_schedule), K=a.K, N=a.N)
    else:
        if a.regime not in ("cd_nonneg", "cd_general", "mcp"):
            raise ConfigError(f"regime {a.regime!r} needs q = inf")
        b = build_polygonal_q(eta, seq, a.term, a.M, a.q, a.regime, K=a.K, N=a.N)
    out = b.to_dict()
    if a.emit_plan and b.result is not None:
        out["plan"] = plan_to_dict(b.result)
    return out, 0


def _calc_function(a):
    space = load_space(a.space) if a.space else None
    return load_function(a.f, space)


def _calc_chp(a):
    f = _calc_function(a)
    if a.p == 1:
        return {"p": 1.0, "total_variation": total_variation(f)}, 0
    return {"p": a.p, "cheeger": cheeger_p(f, a.p), "lp_norm": lp_norm(f, a.p)}, 0


def _calc_tv(a):
    return {"total_variation": total_variation(_calc_function(a))}, 0


def _calc_lip(a):
    f = _calc_function(a)
    return {"lip": local_lip(f).tolist()}, 0


def _calc_ratio(a):
    f = _calc_function(a)
    plan = load_plan(a.plan, space=f.space)
    if a.p == 1:
        return {"p": 1.0, "ratio": duality_ratio_bv(f, plan), "total_variation": total_variation(f)}, 0
    q = a.p / (a.p - 1)
    return {"p": a.p, "q": q, "ratio": duality_ratio_sobolev(f, plan, a.p, q),
            "cheeger_root": cheeger_p(f, a.p) ** (1 / a.p)}, 0


def _mosco_run(a):
    cfg = load_config(a.config)
    fs = function_sequence_from_config(cfg)
    common = dict(K=cfg["K"], N=cfg["N"], corpus_seed=cfg["corpus_seed"], tolerances=cfg["tolerances"],
                  jobs=a.jobs)
    try:
        if cfg["p"] == 1:
            report = mosco_experiment_bv(fs, cfg["regime"], cfg["schedule"], q_schedule=tuple(cfg["q_schedule"]),
                                         **common)
        else:
            report = mosco_experiment(fs, cfg["regime"], cfg["p"], cfg["schedule"], **common)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    out_dir = _output_dir(cfg["base"] / cfg["output_dir"])
    path = emit_report(report, "json", out_dir)
    failed = sorted(k for k, ok in report.checks.items() if not ok)
    return {"report": str(path), "summary": report.to_dict()["summary"], "margins": _clean(report.margins),
            "n_checks": len(report.checks), "failed_checks": failed}, report.exit_code()


def _mosco_report(a):
    src = Path(a.report) if a.report else _output_dir("mosco_out") / "report.json"
    if not src.is_file():
        raise ConfigError(f"no such report: {src}")
    try:
        d = load_report(src)
        report = MoscoReport(d["config"], d["rows"], d["margins"], d["chains"], d["checks"])
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"{src}: not a mosco report ({exc})") from exc
    out_dir = Path(a.dir) if a.dir else _output_dir(src.parent)
    path = emit_report(report, a.format, out_dir)
    return {"written": str(path), "format": a.format}, 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mmlagrange", description="Lagrangian calculus on finite metric measure spaces.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="group", parser_class=_Parser)

    def leaf(group, name, fn, help_):
        q = group.add_parser(name, help=help_)
        q.set_defaults(fn=fn)
        q.add_argument("--out", help="write the JSON result to this file instead of standard output")
        q.add_argument("--jobs", type=int, default=1, help="worker threads for experiment cells")
        return q

    sp = sub.add_parser("space", help="finite spaces and sequences").add_subparsers(dest="cmd", parser_class=_Parser)
    g = leaf(sp, "gen", _space_gen, "discretize a template")
    g.add_argument("--template", required=True, choices=("segment", "circle", "torus_grid"))
    g.add_argument("--extent", type=float, nargs="+", default=[1.0])
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--n2", type=int, help="second side for torus_grid")
    g.add_argument("--measure", default="uniform")
    g.add_argument("--basepoint", type=int, default=0)
    g.add_argument("--tiebreak", default="positive")
    g.add_argument("--with-dist", action="store_true")
    g = leaf(sp, "info", _space_info, "summary of a space file")
    g.add_argument("--space", required=True)
    g = leaf(sp, "sequence", _space_sequence, "refining sequence with its convergence defects")
    g.add_argument("--template", required=True, choices=("segment", "circle", "torus_grid"))
    g.add_argument("--extent", type=float, nargs="+", default=[1.0])
    g.add_argument("--ns", type=_intlist, required=True)
    g.add_argument("--n-limit", type=int, required=True)
    g = leaf(sp, "defect", _sequence_defect, "convergence defects of a sequence file")
    g.add_argument("--sequence", required=True)

    op = sub.add_parser("ot", help="optimal transport").add_subparsers(dest="cmd", parser_class=_Parser)
    for name, fn, h in (("wq", _ot_wq, "q-Wasserstein distance"), ("winf", _ot_winf, "bottleneck distance"),
                        ("lift", _ot_lift, "optimal dynamical plan")):
        g = leaf(op, name, fn, h)
        g.add_argument("--mu0", required=True)
        g.add_argument("--mu1", required=True)
        if name == "wq":
            g.add_argument("--q", type=float, required=True)
            g.add_argument("--exact", action="store_true")
            g.add_argument("--rule", choices=("dantzig", "bland"), default="dantzig")
        elif name == "winf":
            g.add_argument("--route", choices=("auto", "matching", "flow"), default="auto")
        else:
            g.add_argument("--q", type=_exponent, default=2.0)
            g.add_argument("--steps", type=int, default=16)
            g.add_argument("--exact", action="store_true")

    pp = sub.add_parser("plan", help="test plans and polygonal builds").add_subparsers(dest="cmd",
                                                                                        parser_class=_Parser)
    g = leaf(pp, "record", _plan_record, "Comp, Ke_q and Lip of a plan")
    g.add_argument("--plan", required=True)
    g.add_argument("--q", type=float, action="append")
    g.add_argument("--k-mid", type=int, default=8)
    g = leaf(pp, "polygonal", _plan_polygonal, "M-polygonal build on a term")
    g.add_argument("--sequence", required=True)
    g.add_argument("--plan", required=True, help="plan on the limit space")
    g.add_argument("--term", type=_term, required=True)
    g.add_argument("--M", type=int, required=True)
    g.add_argument("--q", type=_exponent, default=2.0)
    g.add_argument("--regime", default="cd_nonneg", choices=("cd_nonneg", "cd_general", "mcp", "cd"))
    g.add_argument("--K", type=float, default=0.0)
    g.add_argument("--N", type=float)
    g.add_argument("--q-schedule", type=_floatlist, default=[2.0, 4.0, 8.0, 16.0])
    g.add_argument("--emit-plan", action="store_true")

    cp = sub.add_parser("calc", help="Cheeger energies and duality").add_subparsers(dest="cmd", parser_class=_Parser)
    for name, fn, h in (("chp", _calc_chp, "p-Cheeger energy"), ("tv", _calc_tv, "total variation"),
                        ("lip", _calc_lip, "local Lipschitz constant"), ("ratio", _calc_ratio, "duality ratio")):
        g = leaf(cp, name, fn, h)
        g.add_argument("--f", required=True)
        g.add_argument("--space")
        if name in ("chp", "ratio"):
            g.add_argument("--p", type=float, default=2.0)
        if name == "ratio":
            g.add_argument("--plan", required=True)

    mp = sub.add_parser("mosco", help="liminf experiments").add_subparsers(dest="cmd", parser_class=_Parser)
    g = leaf(mp, "run", _mosco_run, "run an experiment config")
    g.add_argument("--config", required=True)
    g = leaf(mp, "report", _mosco_report, "render a saved report")
    g.add_argument("--format", choices=("json", "csv", "svg"), default="json")
    g.add_argument("--report", help="report.json to render (default: OUTPUT_DIR/report.json)")
    g.add_argument("--dir", help="directory for the rendered file")
    return p


def dispatch(argv=None) -> int:
    """Run one command line and return its exit code."""
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
        if getattr(a, "fn", None) is None:
            raise UsageError("expected a subcommand among space, ot, plan, calc, mosco")
        if a.jobs < 1:
            raise UsageError("--jobs must be positive")
        payload, code = a.fn(a)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EX_USAGE
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EX_DATAERR
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    text = dumps(payload)
    if a.out:
        try:
            Path(a.out).write_text(text)
        except OSError as exc:
            print(f"error: cannot write {a.out}: {exc}", file=sys.stderr)
            return 1
    else:
        sys.stdout.write(text)
    return code


def main() -> None:
    sys.exit(dispatch())
