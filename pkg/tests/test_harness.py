from __future__ import annotations

import csv
import json
import math

import numpy as np
import pytest

from rieszlab import grid, harness
from rieszlab.harness import InvalidSpec, default_spec


def test_every_theorem_is_anchored_by_a_check():
    anchors = {d.theorem for d in harness.REGISTRY.values()}
    assert anchors == set(harness.THEOREMS)
    for d in harness.REGISTRY.values():
        assert d.check_id == default_spec(d.check_id).check_id
        assert d.kind in harness.VERDICTS
        assert d.expected in ("pass", "fail")


@pytest.mark.parametrize("check_id", list(harness.REGISTRY))
def test_default_specs_validate(check_id):
    spec = default_spec(check_id)
    assert spec.validate() is spec
    assert len(spec.resolutions) >= 2


@pytest.mark.parametrize("check_id,params", [
    ("PW-END", {"alphas": [1.0]}),
    ("PW-CRIT", {"alphas": [2.0]}),
    ("PW-CRIT", {"symbols": ["one"]}),
    ("PW-SUB", {"cases": [{"n": 2, "r": 1.5, "s": 1.5, "alphas": [1.0], "symbols": ["sign"],
                           "functions": ["bump"]}]}),
    ("PW-SUB", {"cases": [{"n": 2, "r": 1.5, "alphas": [1.8], "symbols": ["sign"],
                           "functions": ["bump"]}]}),
    ("PW-SUB", {"cases": [{"n": 2, "r": 2.0, "alphas": [1.0], "symbols": ["sign"],
                           "functions": ["bump"]}]}),
    ("W-POW1", {"lambdas": [0.5]}),
    ("W-POW2", {"lambdas": [-0.5]}),
    ("W-POW2", {"p": 1.5}),
    ("W-CMP", {"lambdas": [-2.0]}),
])
def test_hypotheses_are_enforced(check_id, params):
    with pytest.raises(InvalidSpec):
        default_spec(check_id, params).validate()


def test_resolutions_must_be_powers_of_two():
    with pytest.raises(InvalidSpec):
        default_spec("DIV-EX", resolutions=[16, 48]).validate()
    with pytest.raises(InvalidSpec):
        default_spec("DIV-EX", resolutions=[]).validate()


def test_unknown_check_is_rejected():
    with pytest.raises(InvalidSpec):
        default_spec("NO-SUCH")
    with pytest.raises(InvalidSpec):
        harness.build_specs(["PW-SOB", "NO-SUCH"])


def test_config_files(tmp_path):
    good = tmp_path / "good.json"
    good.write_text(json.dumps({"resolutions": [32, 64],
                                "checks": {"PW-END": {"params": {"alphas": [0.5]}}}}))
    cfg = harness.load_config(good)
    specs = harness.build_specs(["PW-END", "PW-SOB"], cfg)
    assert specs[0].params["alphas"] == [0.5] and specs[0].resolutions == (32, 64)
    assert specs[1].resolutions == (32, 64)
    assert harness.build_specs(["PW-SOB"], cfg, [16, 32])[0].resolutions == (16, 32)

    for bad in ({"resolution": [32]}, {"checks": {"NOPE": {}}},
                {"checks": {"PW-END": {"params": {"alphas": [1.5]}}}}):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(bad))
        with pytest.raises(InvalidSpec):
            harness.build_specs(["PW-END"], harness.load_config(path))


def test_divergence_example_matches_the_series():
    for alpha, s in ((1.0, 1.0), (1.0, 2.0), (0.5, 3.0)):
        value, series = harness.nested_cube_sum(2, alpha, s, 7)
        assert value == pytest.approx(series, abs=1e-9)
    # at s = n / alpha every term equals one
    assert harness.nested_cube_sum(2, 1.0, 2.0, 6)[0] == pytest.approx(6.0, abs=1e-9)


def test_divergence_check_passes_and_serializes_identically():
    spec = default_spec("DIV-EX")
    a = harness.run_check(spec)
    b = harness.run_check(spec)
    assert a.verdict == "pass" and a.as_expected
    assert harness.reports_json([a]) == harness.reports_json([b])
    data = json.loads(harness.reports_json([a]))[0]
    assert "runtime" not in json.dumps(data)
    assert data["check_id"] == "DIV-EX"


@pytest.fixture(scope="module")
def small_sob():
    return harness.run_check(default_spec("PW-SOB", resolutions=[32, 64]))


def test_cheap_documented_check_is_reproducible(small_sob):
    again = harness.run_check(default_spec("PW-SOB", resolutions=[32, 64]))
    assert harness.reports_json([small_sob]) == harness.reports_json([again])


def test_csv_report(tmp_path, small_sob):
    path = tmp_path / "out.csv"
    harness.write_csv([small_sob], path)
    rows = list(csv.reader(path.open()))
    assert rows[0] == harness.CSV_COLUMNS
    assert [r[5] for r in rows[1:]] == ["32", "64"]
    assert all(r[0] == "PW-SOB" and r[1] == "gradient-potential-pointwise" for r in rows[1:])


def test_json_report_file(tmp_path, small_sob):
    path = tmp_path / "out.json"
    harness.write_json([small_sob], path)
    assert path.read_text() == harness.reports_json([small_sob])


def test_gradient_potential_bound_holds_with_margin():
    rep = harness.run_check(default_spec("PW-SOB", {"functions": ["bump"]}))
    assert rep.verdict == "pass"
    for r in rep.per_resolution:
        assert r.extra["violations"] == 0 and r.extra["margin"] >= 0
        assert r.constant <= 1.0 + r.error_bound
    bands = [r.error_bound for r in rep.per_resolution]
    assert bands[1] < bands[0]


def test_refinement_study_reports_a_slope():
    rep = harness.refinement_study(default_spec("PW-SOB", {"functions": ["bump"]}), [32, 64, 128])
    slopes = {r.extra["trend_slope"] for r in rep.per_resolution}
    assert len(slopes) == 1
    assert abs(slopes.pop()) < 0.1
    assert any("slope" in note for note in rep.notes)


def test_drift_and_stability():
    assert harness.drift([1.0, 1.05, 1.0]) == pytest.approx(0.05, rel=1e-9)
    assert math.isinf(harness.drift([1.0, math.inf]))
    assert harness.refinement_stable([1.0, 1.09, 0.5])
    assert not harness.refinement_stable([1.0, 1.2])
    assert not harness.refinement_stable([1.0, math.nan])


def test_sup_ratio_handles_vanishing_denominators():
    f = grid.sample("zero", resolution=16)
    lhs = np.zeros((16, 16))
    rhs = np.ones((16, 16))
    lhs[2, 3] = 3.0
    ratio, loc = harness.sup_ratio(f, lhs, rhs)
    assert ratio == 3.0 and loc == f.point((2, 3)).tolist()
    rhs[2, 3] = 0.0
    assert math.isinf(harness.sup_ratio(f, lhs, rhs)[0])
    assert harness.sup_ratio(f, np.zeros((16, 16)), np.zeros((16, 16)))[0] == 0.0


def test_run_checks_keeps_the_order():
    specs = harness.build_specs(["DIV-EX", "PW-SOB"], resolutions=[16, 32])
    reports = harness.run_checks(specs)
    assert [r.check_id for r in reports] == ["DIV-EX", "PW-SOB"]
