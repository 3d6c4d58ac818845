import csv
import io
import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from mmlagrange.ambient import GeodesicTemplate, refining_sequence
from mmlagrange.harness import (FunctionSequence, MoscoReport, anchor_points, coupling_limit_check, emit_report,
                                load_report, lp_strong_check, mosco_experiment, mosco_experiment_bv,
                                pairing_residuals_decreasing, plan_corpus, report_csv, report_json, report_svg,
                                select_diagonal, signed_root)

SEG = GeodesicTemplate("segment", (1.0,))
SEQ = refining_sequence(SEG, [8, 16, 32], 64)
X = lambda p: p[..., 0]
SCHED = [(1, 0), (1, 1), (1, 2)]


@pytest.fixture(scope="module")
def cd_report():
    fs = FunctionSequence.from_callable(SEQ, X, 2)
    return mosco_experiment(fs, "cd_nonneg", 2, SCHED)


def test_signed_root():
    assert signed_root(np.array([-4.0, 0.0, 9.0])).tolist() == [-2.0, 0.0, 3.0]


def test_lp_strong_check_on_smooth_function():
    fs = FunctionSequence.from_callable(SEQ, lambda p: np.sin(3 * p[..., 0]), 2)
    out = lp_strong_check(fs)
    assert out["weak"] and out["strong"]
    assert all(b <= a + 1e-12 for a, b in zip(out["weak_defects"], out["weak_defects"][1:]))


def test_lp_check_p_one_adds_root_check():
    fs = FunctionSequence.from_callable(SEQ, lambda p: p[..., 0] - 0.5, 1)
    out = lp_strong_check(fs)
    assert out["root_check"]["p"] == 2.0 and out["strong"]


def test_oscillating_sequence_is_not_strong():
    # sign flips at every other point converge weakly to 0 but keep norm 1
    terms = tuple(f.with_values((-1.0) ** np.arange(len(f.space)))
                  for f in FunctionSequence.from_callable(SEQ, X, 2).terms)
    lim = FunctionSequence.from_callable(SEQ, X, 2).limit_fn.with_values(np.zeros(len(SEQ.limit)))
    out = lp_strong_check(FunctionSequence(SEQ, terms, lim, 2))
    assert not out["strong"]


def test_coupling_limit_residuals_shrink():
    fs = FunctionSequence.from_callable(SEQ, X, 2)
    gs = FunctionSequence.from_callable(SEQ, lambda p: 1 + p[..., 0] ** 2, 2)
    out = coupling_limit_check(fs, gs)
    assert all(b < a for a, b in zip(out["residuals"], out["residuals"][1:]))
    assert out["loglog_slope"] < 0
    with pytest.raises(ValueError):
        coupling_limit_check(fs, FunctionSequence.from_callable(SEQ, X, 3))


def test_function_sequence_validation():
    fs = FunctionSequence.from_callable(SEQ, X, 2)
    with pytest.raises(ValueError):
        FunctionSequence(SEQ, fs.terms[:2], fs.limit_fn, 2)
    with pytest.raises(ValueError):
        FunctionSequence(SEQ, fs.terms, fs.limit_fn, 0.5)


def test_corpus_is_deterministic_and_anchored():
    a = plan_corpus(SEQ, seed=0)
    b = plan_corpus(SEQ, seed=0)
    assert [k for k, _ in a] == [k for k, _ in b]
    assert all(np.allclose(x.masses, y.masses) for (_, x), (_, y) in zip(a, b))
    anchors = set(anchor_points(SEQ))
    for pid, _ in a:
        if pid.startswith("dirac"):
            _, i, j = pid.split("-")
            assert {int(i), int(j)} <= anchors
    assert sum(pid.startswith("edge") for pid, _ in a) == 3


def test_cd_run_passes(cd_report):
    assert cd_report.exit_code() == 0
    assert cd_report.margins["margin"] <= 1e-6
    for chain in cd_report.chains:
        if chain["plan"].startswith("dirac"):
            assert chain["pairing_residuals"] == [0.0, 0.0, 0.0]
    assert all(r["feasible"] for r in cd_report.rows)


def test_cd_rows_hold_both_sides(cd_report):
    for r in cd_report.rows:
        assert r["jensen_lhs"] <= r["jensen_rhs"] + 1e-8
        assert r["ke"] <= r["ke_bound"] + 1e-8
        if r["guaranteed"]:
            assert r["pairing"] <= r["duality_rhs"] + 1e-8


def test_mcp_run_scales_margin():
    fs = FunctionSequence.from_callable(SEQ, X, 2)
    rep = mosco_experiment(fs, "mcp", 2, SCHED, K=0, N=1)
    assert rep.margins["factor"] == 2.0
    assert rep.violations == 0


def test_bv_run_cd():
    fs = FunctionSequence.from_callable(SEQ, X, 1)
    rep = mosco_experiment_bv(fs, "cd", [(1, 2), (2, 2)], K=-1)
    assert rep.violations == 0
    for r in rep.rows:
        if r["feasible"]:
            assert r["good_infty_ok"]
            assert r["lip"] == pytest.approx(r["lip_legs_scaled"], rel=1e-10)


def test_experiment_rejects_bad_input():
    fs = FunctionSequence.from_callable(SEQ, X, 2)
    with pytest.raises(ValueError):
        mosco_experiment(fs, "cd_nonneg", 1, SCHED)
    with pytest.raises(ValueError):
        mosco_experiment(fs, "cd_nonneg", 2, [])
    with pytest.raises(ValueError):
        mosco_experiment(fs, "cd_nonneg", 2, [(1, 9)])
    with pytest.raises(ValueError):
        mosco_experiment_bv(fs, "cd_general", SCHED)


def test_report_json_round_trip(cd_report, tmp_path):
    text = report_json(cd_report)
    assert text == report_json(cd_report)
    path = emit_report(cd_report, "json", tmp_path)
    d = load_report(path)
    again = MoscoReport(d["config"], d["rows"], d["margins"], d["chains"], d["checks"])
    assert json.loads(report_json(again)) == json.loads(text)
    assert d["summary"]["exit_code"] == 0


def test_report_csv_has_one_row_per_cell(cd_report):
    rows = list(csv.DictReader(io.StringIO(report_csv(cd_report))))
    assert len(rows) == len(SCHED) * len(cd_report.config["corpus"])


def test_report_svg_parses(cd_report, tmp_path):
    root = ET.fromstring(report_svg(cd_report).split("\n", 1)[1])
    assert root.tag.endswith("svg")
    assert len(root.findall(".//{http://www.w3.org/2000/svg}polyline")) == 2
    with pytest.raises(ValueError):
        emit_report(cd_report, "pdf", tmp_path)


def test_exit_code_classes():
    rep = MoscoReport({}, rows=[{"feasible": True}], checks={"a": True})
    assert rep.exit_code() == 0
    rep.rows.append({"feasible": False})
    assert rep.exit_code() == 3
    rep.checks["b"] = False
    assert rep.exit_code() == 2


def test_select_diagonal_on_endpoint_dirac():
    corpus = dict(plan_corpus(SEQ))
    eta = corpus["dirac-0-63"]
    out = select_diagonal(eta, SEQ, [1, 2], 2, "cd_nonneg")
    assert out[0] == {"M": 1, "n": 0, "met": True}
    # the midpoint Dirac at 1/2 is no limit point nearest to a term point
    assert out[1] == {"M": 2, "n": None, "met": False}


def test_pairing_residual_monotonicity_flag():
    rep = MoscoReport({}, rows=[{"n": 0, "feasible": True, "pairing_residual": 0.2},
                                {"n": 1, "feasible": True, "pairing_residual": 0.3}],
                      margins={"n": [0, 1]})
    assert not pairing_residuals_decreasing(rep)
    rep.rows[1]["pairing_residual"] = 0.1
    assert pairing_residuals_decreasing(rep)
