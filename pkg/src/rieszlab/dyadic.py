"""Shifted dyadic grids and the one-third covering trick.

The grid with shift ``t`` in ``{0, 1/3}^n`` consists of the cubes
``2^k ([0,1)^n + m + (-1)^k t)``. Shifts are stored as numerators over 3 and
every location or containment test runs in exact rational arithmetic.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .grid import Cube, DyadicTag

THIRD = Fraction(1, 3)


def _pow2(k: int) -> Fraction:
    return Fraction(2) ** k


def _shift_values(shift: tuple[int, ...]) -> tuple[Fraction, ...]:
    for s in shift:
        if s not in (0, 1):
            raise ValueError("shift numerators must be 0 or 1 (over 3)")
    return tuple(s * THIRD for s in shift)


def all_shifts(n: int) -> list[tuple[int, ...]]:
    """The ``2^n`` shifts in lexicographic order."""
    return list(itertools.product((0, 1), repeat=n))


@dataclass(frozen=True)
class DyadicGrid:
    shift: tuple[int, ...]

    def __post_init__(self):
        _shift_values(self.shift)

    @property
    def n(self) -> int:
        return len(self.shift)

    def cube(self, k: int, m) -> Cube:
        return dyadic_cube(self.shift, k, m)

    def locate(self, x, k: int) -> Cube:
        return locate(x, k, self.shift)


def exact_corner(shift, k: int, m) -> tuple[Fraction, ...]:
    t = _shift_values(tuple(shift))
    sign = 1 if k % 2 == 0 else -1
    scale = _pow2(k)
    return tuple(scale * (Fraction(mj) + sign * tj) for mj, tj in zip(m, t))


def dyadic_cube(shift, k: int, m) -> Cube:
    """Cube ``2^k([0,1)^n + m + (-1)^k t)``; the corner is rounded to float once."""
    shift = tuple(int(s) for s in shift)
    m = tuple(int(v) for v in m)
    if len(m) != len(shift):
        raise ValueError("index and shift dimensions differ")
    corner = exact_corner(shift, k, m)
    return Cube(tuple(float(c) for c in corner), math.ldexp(1.0, k), DyadicTag(shift, k, m))


def locate_index(x, k: int, shift) -> tuple[int, ...]:
    """Index ``m`` of the level-``k`` cube containing ``x``."""
    t = _shift_values(tuple(shift))
    sign = 1 if k % 2 == 0 else -1
    scale = _pow2(k)
    return tuple(math.floor(Fraction(xj) / scale - sign * tj) for xj, tj in zip(x, t))


def locate(x, k: int, shift) -> Cube:
    return dyadic_cube(shift, k, locate_index(x, k, shift))


def _contains_exact(outer_corner, outer_side: Fraction, lower, side: Fraction) -> bool:
    return all(
        c <= a and a + side <= c + outer_side for c, a in zip(outer_corner, lower)
    )


def _denominator_exponent(x: float) -> int:
    return Fraction(x).denominator.bit_length() - 1


def _search(q: Cube, levels) -> tuple[tuple[int, ...], Cube] | None:
    """First ``(level, shift)`` whose cube containing ``q.lower`` contains ``q``.

    Floats are dyadic rationals, so after scaling by ``2^L`` every corner,
    side and cell is an integer over 3 and the test is exact integer
    arithmetic.
    """
    levels = list(levels)
    if not levels:
        return None
    exps = [_denominator_exponent(a) for a in q.lower] + [_denominator_exponent(q.side)]
    scale = max(max(exps), -min(levels), 0)
    lower3 = [3 * int(Fraction(a) * 2**scale) for a in q.lower]
    side3 = 3 * int(Fraction(q.side) * 2**scale)
    for k in levels:
        cell = 2 ** (k + scale)
        sign = 1 if k % 2 == 0 else -1
        for shift in all_shifts(q.n):
            m, inside = [], True
            for a3, t in zip(lower3, shift):
                mj = (a3 - sign * t * cell) // (3 * cell)
                corner3 = cell * (3 * mj + sign * t)
                if a3 + side3 > corner3 + 3 * cell:
                    inside = False
                    break
                m.append(mj)
            if inside:
                return shift, dyadic_cube(shift, k, m)
    return None


def third_trick(q: Cube) -> tuple[tuple[int, ...], Cube]:
    """Smallest shifted dyadic cube containing ``q`` with side at most ``6 * side(q)``.

    Levels are searched upwards from the smallest ``2^k >= side(q)``, shifts
    in lexicographic order.

    Raises:
        RuntimeError: no admissible cube (an internal-consistency failure).
    """
    side = Fraction(q.side)
    k = math.ceil(math.log2(q.side)) - 1
    while _pow2(k) < side:
        k += 1
    levels = []
    while _pow2(k) <= 6 * side:
        levels.append(k)
        k += 1
    found = _search(q, levels)
    if found is None:
        raise RuntimeError(f"one-third trick failed for {q}")
    return found


def third_trick_level(q: Cube) -> tuple[tuple[int, ...], Cube]:
    """Shifted dyadic cube of side ``8 * side(q)`` containing ``q``.

    Raises:
        ValueError: the side of ``q`` is not a power of two.
        RuntimeError: no shift works (an internal-consistency failure).
    """
    mant, exp = math.frexp(q.side)
    if mant != 0.5:
        raise ValueError("cube side must be an exact power of two")
    k = exp - 1
    found = _search(q, [k + 3])
    if found is None:
        raise RuntimeError(f"level+3 covering failed for {q}")
    return found


@lru_cache(maxsize=4096)
def _axis_labels_cached(origin: float, h: float, count: int, k: int, t_num: int) -> np.ndarray:
    fo, fh = Fraction(origin), Fraction(h)
    scale = _pow2(k)
    offset = (1 if k % 2 == 0 else -1) * t_num * THIRD
    labels = np.array(
        [math.floor((fo + i * fh) / scale - offset) for i in range(count)], dtype=np.int64
    )
    labels.setflags(write=False)
    return labels


def axis_labels(origin: float, h: float, count: int, k: int, t_num: int) -> np.ndarray:
    """Level-``k`` cube indices along one axis for samples ``origin + i*h``."""
    return _axis_labels_cached(float(origin), float(h), int(count), int(k), int(t_num))


def level_range(h: float, side: float) -> tuple[int, int]:
    """Clamped level range: from the grid spacing up to four box sides."""
    return int(math.floor(math.log2(h))), int(math.ceil(math.log2(4.0 * side)))


@lru_cache(maxsize=4096)
def _axis_counts_cached(origin: float, h: float, k: int, t_num: int, first: int, last: int) -> np.ndarray:
    fo, fh = Fraction(origin), Fraction(h)
    scale = _pow2(k)
    offset = (1 if k % 2 == 0 else -1) * t_num * THIRD
    counts = []
    for m in range(first, last + 1):
        lo = scale * (m + offset)
        counts.append(math.ceil((lo + scale - fo) / fh) - math.ceil((lo - fo) / fh))
    out = np.array(counts, dtype=float)
    out.setflags(write=False)
    return out


def cube_ids(box_lower, h: float, resolution: int, k: int, shift):
    """Level-``k`` cube of every sample as a flat id.

    Returns ``(ids, labels, sizes)``: ``ids`` has the grid's shape,
    ``labels`` holds the per-axis cube indices, and ``sizes[id]`` is the
    number of lattice points in that cube, counting those outside the box.
    """
    n = len(shift)
    labels = tuple(axis_labels(box_lower[j], h, resolution, k, shift[j]) for j in range(n))
    ids = np.zeros((resolution,) * n, dtype=np.int64)
    sizes = np.ones(1)
    stride = 1
    for j in range(n - 1, -1, -1):
        first, last = int(labels[j][0]), int(labels[j][-1])
        lab = labels[j] - first
        shape = [1] * n
        shape[j] = -1
        ids += lab.reshape(shape) * stride
        stride *= last - first + 1
        axis_counts = _axis_counts_cached(float(box_lower[j]), float(h), k, shift[j], first, last)
        sizes = np.multiply.outer(axis_counts, sizes).ravel()
    return ids, labels, sizes


def level_average_field(values: np.ndarray, box_lower, h: float, k: int, shift) -> np.ndarray:
    """Each sample replaced by the mean of ``values`` over its level-``k`` cube.

    Lattice points of the cube outside the box count as zeros.
    """
    ids, _, sizes = cube_ids(box_lower, h, values.shape[0], k, shift)
    sums = np.bincount(ids.ravel(), weights=values.ravel(), minlength=sizes.size)
    return (sums / sizes)[ids]
