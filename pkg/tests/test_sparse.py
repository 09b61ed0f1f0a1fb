from __future__ import annotations

import json

import numpy as np
import pytest

from rieszlab import dyadic, grid, sparse
from rieszlab.grid import Box


def unit_indicator(n: int, levels: int):
    """Indicator of [0,1)^n sampled on [0, 2^levels)^n with unit spacing."""
    res = 2**levels
    box = Box((0.0,) * n, float(res))
    return grid.sample("cube_indicator", {"lower": 0.0, "upper": 1.0}, box, res, n=n,
                       enforce_margin=False)


def test_stopping_base_and_constant():
    assert sparse.stopping_base(2, 1.0) == 8.0
    assert sparse.domination_constant(2, 1.0, 1.0) == 16.0
    assert sparse.stopping_base(3, 2.0) == 4.0


def test_zero_function_has_empty_family():
    f = grid.sample("zero", resolution=32)
    fam = sparse.build_sparse_family(f, 1.0, 1.0, (0, 0))
    assert len(fam) == 0
    assert sparse.certify_sparseness(fam).verdict == "pass"
    assert sparse.domination_check(f, 1.0, 1.0, (0, 0), fam).verdict == "pass"


def test_exponent_window_is_enforced():
    f = grid.sample("bump", resolution=32)
    with pytest.raises(ValueError):
        sparse.build_sparse_family(f, 1.0, 2.0, (0, 0))
    with pytest.raises(ValueError):
        sparse.build_sparse_family(f, 1.0, 0.5, (0, 0))
    with pytest.raises(ValueError):
        sparse.build_sparse_family(f, 2.0, 1.0, (0, 0))


@pytest.mark.parametrize("n,s", [(2, 1.0), (2, 1.5), (3, 1.0)])
def test_unit_indicator_stopping_cubes_match_brute_force(n, s):
    levels = 5 if n == 2 else 4
    f = unit_indicator(n, levels)
    fam = sparse.build_sparse_family(f, 0.5, s, (0,) * n)
    # Only the cubes [0, 2^j)^n have positive averages, (2^(-jn))^(1/s). Exact ties
    # avg = a^k occur when (n+1)k = -jn, so the oracle uses the same float operations.
    top = fam.clamp["top_level"]
    expect = set()
    for k in range(fam.clamp["generation_min"], 1):
        threshold = 2.0 ** ((n + 1) * k / s)
        for j in range(0, top):
            avg = (1.0 / 2 ** (j * n)) ** (1.0 / s)
            parent = (1.0 / 2 ** ((j + 1) * n)) ** (1.0 / s)
            if parent <= threshold < avg:
                expect.add((k, j))
    got = {(int(g), int(k)) for g, k in zip(fam.generations, fam.levels)}
    assert got == expect
    assert np.all(fam.labels == 0)
    assert sparse.certify_sparseness(fam).verdict == "pass"


def test_duplicated_cube_fails_the_certificate():
    f = grid.sample("bump", resolution=64)
    fam = sparse.build_sparse_family(f, 1.0, 1.0, (0, 0))
    doubled = fam.select([0, 0] + list(range(1, len(fam))))
    report = sparse.certify_sparseness(doubled)
    assert report.verdict == "fail"
    assert report.per_resolution[0].extra["overlapping_samples"] > 0


def test_shifted_average_window_fails_the_certificate():
    f = grid.sample("bump", resolution=64)
    fam = sparse.build_sparse_family(f, 1.0, 1.0, (0, 0))
    fam.averages = fam.averages * 100.0
    report = sparse.certify_sparseness(fam)
    assert report.verdict == "fail"
    assert report.per_resolution[0].extra["window_violations"] == len(fam)


@pytest.mark.parametrize("shift", dyadic.all_shifts(2))
def test_bump_family_is_sparse_and_dominates(shift):
    f = grid.sample("bump", resolution=128)
    fam = sparse.build_sparse_family(f, 1.0, 1.0, shift)
    cert = sparse.certify_sparseness(fam)
    assert cert.verdict == "pass"
    assert cert.per_resolution[0].constant >= 0.5
    dom = sparse.domination_check(f, 1.0, 1.0, shift, fam)
    res = dom.per_resolution[0]
    assert dom.verdict == "pass" and res.extra["violations"] == 0
    assert res.constant <= 16.0


def test_generations_nest_inside_their_parents():
    f = grid.sample("dipole", resolution=128)
    fam = sparse.build_sparse_family(f, 0.5, 1.5, (1, 1))
    for child, parent in enumerate(fam.parents):
        if parent < 0:
            continue
        assert fam.generations[child] == fam.generations[parent] + 1
        c, p = fam.cubes[child], fam.cubes[int(parent)]
        assert all(a <= b and b + c.side <= a + p.side for a, b in zip(p.lower, c.lower))


def test_membership_counts_are_zero_or_one():
    f = grid.sample("tensor_bump", resolution=64)
    fam = sparse.build_sparse_family(f, 1.0, 1.2, (0, 1))
    counts = sparse.membership_counts(fam)
    assert set(np.unique(counts)) <= {0, 1}


def test_three_dimensional_family():
    f = grid.sample("bump", resolution=32, n=3)
    fam = sparse.build_sparse_family(f, 1.0, 1.0, (1, 0, 1))
    assert sparse.certify_sparseness(fam).verdict == "pass"
    assert sparse.domination_check(f, 1.0, 1.0, (1, 0, 1), fam).verdict == "pass"


def test_tail_bound_is_small_and_nonnegative():
    f = grid.sample("bump", resolution=64)
    fam = sparse.build_sparse_family(f, 1.0, 1.0, (0, 0))
    tail = sparse.tail_bound(fam, dyadic.level_range(f.h, f.box.side))
    assert 0 <= tail < 1e-10


def test_family_is_deterministic_and_serializable(tmp_path):
    f = grid.sample("dipole", resolution=64)
    a = sparse.build_sparse_family(f, 1.0, 1.0, (1, 0))
    b = sparse.build_sparse_family(f, 1.0, 1.0, (1, 0))
    assert a.to_json() == b.to_json()
    path = tmp_path / "family.json"
    a.save(path)
    data = json.loads(path.read_text())
    assert len(data["cubes"]) == len(a)
    assert data["a"] == 8.0


def test_sparse_operator_on_the_grid_matches_a_direct_sum():
    f = grid.sample("bump", resolution=32)
    fam = sparse.build_sparse_family(f, 1.0, 1.0, (0, 0))
    op = sparse.sparse_operator(f, fam)
    direct = np.zeros_like(op)
    for cube, avg in zip(fam.cubes, fam.averages):
        sl, _ = grid.cube_sample_slices(f, cube)
        direct[sl] += cube.side * avg
    assert np.allclose(op, direct, rtol=1e-12, atol=1e-15)
