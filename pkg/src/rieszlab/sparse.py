"""Stopping-time sparse families in one shifted dyadic grid.

Generation ``k`` collects the maximal cubes whose ``L^s`` average exceeds
``a^k`` with ``a = 2^((n+1)/s)``. Cubes are kept as arrays of dyadic
labels; the set ``E_Q`` of a cube is the cube minus its children in the next
generation and is never materialized. All measures are lattice-point counts.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import dyadic
from .grid import Cube, GridFunction
from .potentials import dyadic_fractional, sparse_sum
from .reports import CheckReport, ResolutionResult

# Averages below EPSILON times the largest one form the tail; see tail_bound.
EPSILON = 1e-13


def stopping_base(n: int, s: float) -> float:
    """``a = 2^((n+1)/s)``, the base making every generation half-sparse."""
    return 2.0 ** ((n + 1) / s)


def domination_constant(n: int, alpha: float, s: float) -> float:
    """``a / (1 - 2^-alpha)``."""
    return stopping_base(n, s) / (1.0 - 2.0 ** (-alpha))


def _threshold(n: int, s: float, k: int) -> float:
    return 2.0 ** ((n + 1) * k / s)


@dataclass
class _Level:
    """Cube ids of the samples at one level together with per-cube data."""

    k: int
    ids: np.ndarray
    labels: tuple[np.ndarray, ...]
    firsts: tuple[int, ...]
    dims: tuple[int, ...]
    averages: np.ndarray
    representative: np.ndarray


def _level(box_lower, h, resolution, k, shift, powered, s) -> _Level:
    ids, labels, sizes = dyadic.cube_ids(box_lower, h, resolution, k, shift)
    flat = ids.ravel()
    sums = np.bincount(flat, weights=powered.ravel(), minlength=sizes.size)
    avg = sums / sizes
    if s != 1:
        avg = avg ** (1.0 / s)
    rep = np.full(sizes.size, -1, dtype=np.int64)
    rep[flat[::-1]] = np.arange(flat.size - 1, -1, -1)
    firsts = tuple(int(l[0]) for l in labels)
    dims = tuple(int(l[-1] - l[0]) + 1 for l in labels)
    return _Level(k, ids, labels, firsts, dims, avg, rep)


@dataclass
class SparseFamily:
    """Sparse cubes of one shifted grid, with the data needed to certify them.

    Row ``i`` of the arrays describes one cube: its level, its dyadic
    labels, its stopping generation, the index of the containing cube of the
    previous generation (``-1`` for the first) and its ``L^s`` average.
    ``sizes`` holds exact lattice-point counts as Python ints.
    """

    n: int
    shift: tuple[int, ...]
    alpha: float
    s: float
    box_lower: tuple[float, ...]
    h: float
    resolution: int
    levels: np.ndarray
    labels: np.ndarray
    generations: np.ndarray
    parents: np.ndarray
    averages: np.ndarray
    sizes: list[int]
    clamp: dict = field(default_factory=dict)

    @property
    def a(self) -> float:
        return stopping_base(self.n, self.s)

    def __len__(self) -> int:
        return int(self.levels.size)

    @property
    def cubes(self) -> list[Cube]:
        return [
            dyadic.dyadic_cube(self.shift, int(k), tuple(int(v) for v in m))
            for k, m in zip(self.levels, self.labels)
        ]

    def groups(self) -> dict[tuple, np.ndarray]:
        """Labels of the cubes grouped by ``(shift, level)``."""
        out = {}
        for k in np.unique(self.levels):
            out[(self.shift, int(k))] = self.labels[self.levels == k]
        return out

    def children(self) -> list[list[int]]:
        kids: list[list[int]] = [[] for _ in range(len(self))]
        for j, p in enumerate(self.parents):
            if p >= 0:
                kids[int(p)].append(j)
        return kids

    def select(self, rows) -> "SparseFamily":
        """Family made of the given rows (repeats allowed); parents are remapped."""
        rows = np.asarray(rows, dtype=np.int64)
        position = {int(r): i for i, r in enumerate(rows)}
        parents = np.array([position.get(int(self.parents[r]), -1) for r in rows], dtype=np.int64)
        return SparseFamily(
            self.n, self.shift, self.alpha, self.s, self.box_lower, self.h, self.resolution,
            self.levels[rows], self.labels[rows], self.generations[rows], parents,
            self.averages[rows], [self.sizes[int(r)] for r in rows], dict(self.clamp),
        )

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "shift": list(self.shift),
            "alpha": self.alpha,
            "s": self.s,
            "a": self.a,
            "box_lower": list(self.box_lower),
            "h": self.h,
            "resolution": self.resolution,
            "clamp": self.clamp,
            "cubes": [
                {
                    "tag": {"t": list(self.shift), "k": int(k), "m": [int(v) for v in m]},
                    "generation": int(g),
                    "parent": int(p),
                    "size": int(sz),
                    "average": float(av),
                }
                for k, m, g, p, sz, av in zip(self.levels, self.labels, self.generations,
                                              self.parents, self.sizes, self.averages)
            ],
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1))


def _empty_family(f: GridFunction, alpha: float, s: float, shift, clamp) -> SparseFamily:
    return SparseFamily(
        f.n, tuple(shift), float(alpha), float(s), f.box.lower, f.h, f.resolution,
        np.zeros(0, np.int64), np.zeros((0, f.n), np.int64), np.zeros(0, np.int64),
        np.zeros(0, np.int64), np.zeros(0), [], clamp,
    )


def _exact_size(box_lower, h, k, shift, label) -> int:
    size = 1
    for j, m in enumerate(label):
        counts = dyadic._axis_counts_cached(float(box_lower[j]), float(h), int(k), int(shift[j]),
                                            int(m), int(m))
        size *= int(counts[0])
    return size


def build_sparse_family(f: GridFunction, alpha: float, s: float, shift, *,
                        epsilon: float = EPSILON) -> SparseFamily:
    """Stopping cubes of ``|f|^s`` in the grid with the given shift.

    Levels run from the grid spacing upwards, past the box, until every cube
    average is at most ``a^k_min``, the smallest generation threshold. The
    generations are those ``k >= k_min`` with ``a^k_min`` near
    ``epsilon * max average``; cubes below that enter through :func:`tail_bound`.

    The grid function is extended by zero outside the box, so it always has
    compact support and the levels above the box end.

    Raises:
        ValueError: ``s >= n/alpha``.
    """
    n = f.n
    if not 0 < alpha < n:
        raise ValueError(f"alpha must lie in (0, {n})")
    if not 1 <= s < n / alpha:
        raise ValueError("need 1 <= s < n/alpha")
    shift = tuple(int(t) for t in shift)
    powered = np.abs(f.values) ** s
    k_lo = int(math.floor(math.log2(f.h)))
    peak = float(np.max(powered)) ** (1.0 / s) if powered.size else 0.0
    if peak == 0.0:
        return _empty_family(f, alpha, s, shift, {"k_lo": k_lo})
    a = stopping_base(n, s)
    gen_min = int(math.floor(math.log(epsilon * peak, a)))
    floor_threshold = _threshold(n, s, gen_min)

    levels = [_level(f.box.lower, f.h, f.resolution, k_lo, shift, powered, s)]
    while levels[-1].averages.max() > floor_threshold:
        levels.append(_level(f.box.lower, f.h, f.resolution, levels[-1].k + 1, shift, powered, s))

    # Largest average over the strict ancestors of each cube, top level first.
    ancestor_max = [np.zeros(0)] * len(levels)
    ancestor_max[-1] = np.zeros(levels[-1].averages.size)
    for pos in range(len(levels) - 2, -1, -1):
        lev, parent = levels[pos], levels[pos + 1]
        pid = parent.ids.ravel()[lev.representative]
        ancestor_max[pos] = np.maximum(parent.averages[pid], ancestor_max[pos + 1][pid])

    rows = []  # (level position, cube id, generation)
    for pos, lev in enumerate(levels[:-1]):
        above = ancestor_max[pos]
        avg = lev.averages
        # generation k with above <= a^k < avg; there is at most one
        cand = np.where(avg > 0, np.floor(np.log(np.maximum(avg, 1e-300)) / math.log(a)), 0)
        for shift_k in (-1, 0, 1):
            k = cand + shift_k
            thr = 2.0 ** ((n + 1) * k / s)
            hit = (avg > thr) & (above <= thr) & (k >= gen_min) & (avg > 0)
            for cid in np.flatnonzero(hit):
                rows.append((pos, int(cid), int(k[cid])))
    rows = sorted(set(rows), key=lambda r: (r[2], -levels[r[0]].k, r[1]))

    total = f.values.size
    fam_levels = [levels[pos].k for pos, _, _ in rows]
    fam_gen = [gen for _, _, gen in rows]
    fam_avg = [float(levels[pos].averages[cid]) for pos, cid, _ in rows]
    fam_labels, fam_size = [], []
    for pos, cid, _ in rows:
        lev = levels[pos]
        local = np.unravel_index(cid, lev.dims)
        label = tuple(int(lev.firsts[j] + local[j]) for j in range(n))
        fam_labels.append(label)
        fam_size.append(_exact_size(f.box.lower, f.h, lev.k, shift, label))
    fam_parent = np.full(len(rows), -1, dtype=np.int64)
    by_gen: dict[int, list[int]] = {}
    for i, (_, _, gen) in enumerate(rows):
        by_gen.setdefault(gen, []).append(i)
    previous = None
    for gen in sorted(by_gen):
        members = by_gen[gen]
        if previous is not None and previous[0] == gen - 1:
            for i in members:
                pos, cid, _ = rows[i]
                fam_parent[i] = previous[1][levels[pos].representative[cid]]
        owner = np.full(total, -1, dtype=np.int64)
        for pos in sorted({rows[i][0] for i in members}):
            lut = np.full(levels[pos].averages.size, -1, dtype=np.int64)
            for i in members:
                if rows[i][0] == pos:
                    lut[rows[i][1]] = i
            owner = np.maximum(owner, lut[levels[pos].ids.ravel()])
        previous = (gen, owner)
    clamp = {
        "k_lo": k_lo,
        "top_level": levels[-1].k,
        "generation_min": gen_min,
        "generation_max": max(fam_gen) if fam_gen else gen_min,
        "epsilon": epsilon,
    }
    return SparseFamily(
        n, shift, float(alpha), float(s), f.box.lower, f.h, f.resolution,
        np.array(fam_levels, dtype=np.int64), np.array(fam_labels, dtype=np.int64).reshape(-1, n),
        np.array(fam_gen, dtype=np.int64), fam_parent,
        np.array(fam_avg), fam_size, clamp,
    )


def membership_counts(family: SparseFamily) -> np.ndarray:
    """Number of sets ``E_Q`` containing each sample of the family's grid."""
    res, n = family.resolution, family.n
    cover = np.zeros(res**n, dtype=np.int64)
    weight = np.ones(len(family), dtype=np.int64)
    has_parent = family.parents >= 0
    for k in np.unique(family.levels):
        rows = np.flatnonzero(family.levels == k)
        ids, labels, sizes = dyadic.cube_ids(family.box_lower, family.h, res, int(k), family.shift)
        firsts = np.array([int(l[0]) for l in labels])
        dims = tuple(int(l[-1] - l[0]) + 1 for l in labels)
        local = family.labels[rows] - firsts
        inside = np.all((local >= 0) & (local < np.array(dims)), axis=1)
        flat = np.ravel_multi_index(local[inside].T, dims) if inside.any() else np.zeros(0, int)
        lut = np.zeros(sizes.size, dtype=np.int64)
        # each cube adds one for itself and removes one from its parent's E set
        np.add.at(lut, flat, weight[rows][inside] - has_parent[rows][inside])
        cover += lut[ids.ravel()]
    return cover


def _contained(family: SparseFamily, child: int, parent: int) -> bool:
    kc, kp = int(family.levels[child]), int(family.levels[parent])
    if kc > kp:
        return False
    inner = dyadic.exact_corner(family.shift, kc, family.labels[child])
    outer = dyadic.exact_corner(family.shift, kp, family.labels[parent])
    return dyadic._contains_exact(outer, Fraction(2) ** kp, inner, Fraction(2) ** kc)


def certify_sparseness(family: SparseFamily) -> CheckReport:
    """Exact certificate of the sparse conditions for a family.

    Checks, on lattice-point counts: ``|Q| <= 2|E_Q|`` with
    ``E_Q = Q minus its children``; every sample lies in at most one
    ``E_Q``; every child lies inside its parent; and the averages satisfy
    ``a^k < avg <= 2^(n/s) a^k``. The reported constant is the smallest
    ``|E_Q| / |Q|``.
    """
    n, s = family.n, family.s
    kids = family.children()
    worst = 1.0
    measure_bad = 0
    for i, size in enumerate(family.sizes):
        covered = sum(family.sizes[j] for j in kids[i])
        e_size = size - covered
        if 2 * e_size < size:
            measure_bad += 1
        worst = min(worst, e_size / size)
    counts = membership_counts(family) if len(family) else np.zeros(0, np.int64)
    overlap = int(np.sum(counts > 1)) + int(np.sum(counts < 0))
    nest_bad = sum(
        1 for j, p in enumerate(family.parents)
        if p >= 0 and (family.generations[j] != family.generations[p] + 1 or not _contained(family, j, int(p)))
    )
    upper = 2.0 ** (n / s)
    window_bad = 0
    for avg, g in zip(family.averages, family.generations):
        thr = _threshold(n, s, int(g))
        if not (thr < avg <= upper * thr):
            window_bad += 1
    ok = measure_bad == 0 and overlap == 0 and nest_bad == 0 and window_bad == 0
    result = ResolutionResult(
        family.resolution,
        worst,
        0.0,
        None,
        {
            "cubes": len(family),
            "measure_violations": measure_bad,
            "overlapping_samples": overlap,
            "nesting_violations": nest_bad,
            "window_violations": window_bad,
        },
    )
    return CheckReport(
        "sparse-certificate", "stopping-time sparse family",
        {"n": n, "alpha": family.alpha, "s": s, "shift": list(family.shift)},
        [result], "pass" if ok else "fail", kind="documented",
    )


def tail_bound(family: SparseFamily, levels: tuple[int, int]) -> float:
    """Bound for the cubes left out of every generation.

    They have ``L^s`` average at most ``a^k_min``, so at any point they add
    at most ``a^k_min * sum_k 2^(k alpha)`` over the given levels.
    """
    if "generation_min" not in family.clamp:
        return 0.0
    thr = _threshold(family.n, family.s, family.clamp["generation_min"])
    return thr * sum(2.0 ** (k * family.alpha) for k in range(levels[0], levels[1] + 1))


def sparse_operator(f: GridFunction, family: SparseFamily) -> np.ndarray:
    """The sparse operator of ``family`` applied to ``f`` on its grid."""
    return sparse_sum(f, family.alpha, family.s, family.groups())


def domination_check(f: GridFunction, alpha: float, s: float, shift,
                     family: SparseFamily | None = None) -> CheckReport:
    """Pointwise ``I^D f <= C I^S f + tail`` with ``C = a / (1 - 2^-alpha)``.

    The dyadic side sums the clamped levels of the grid. The constant
    reported is the sup of ``I^D / I^S`` over points where ``I^S > 0``.
    """
    if family is None:
        family = build_sparse_family(f, alpha, s, shift)
    const = domination_constant(f.n, alpha, s)
    lo, hi = dyadic.level_range(f.h, f.box.side)
    lhs = dyadic_fractional(f, alpha, tuple(shift), s, levels=(lo, hi)).values
    rhs = sparse_operator(f, family)
    tail = tail_bound(family, (lo, hi))
    slack = 1e-12 * max(float(lhs.max(initial=0.0)), 1.0)
    violations = int(np.sum(lhs > const * rhs + tail + slack))
    positive = rhs > 0
    ratio = np.where(positive, lhs / np.where(positive, rhs, 1.0), 0.0)
    sup = float(ratio.max(initial=0.0))
    loc = None
    if sup > 0:
        idx = np.unravel_index(int(np.argmax(ratio)), ratio.shape)
        loc = [float(v) for v in f.point(idx)]
    result = ResolutionResult(
        f.resolution, sup, tail, loc,
        {"bound": const, "violations": violations, "margin": const - sup},
    )
    return CheckReport(
        "sparse-domination", "dyadic operator bounded by its sparse family",
        {"n": f.n, "alpha": alpha, "s": s, "shift": list(shift)},
        [result], "pass" if violations == 0 else "fail", kind="documented",
    )
