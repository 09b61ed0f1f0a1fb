"""Sampled functions on uniform grids over axis-aligned cubes.

Sample ``i`` along an axis sits at ``lower + i * h`` with ``h = side / N``,
so the origin is a sample point of the default box ``[-2, 2)^n`` and each
sample stands for the cell of side ``h`` centred on it.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable

import numpy as np

from .corpus import CORPUS, resolve_params

MARGIN_CELLS = 2


@dataclass(frozen=True)
class Box:
    """The half-open cube ``[lower, lower + side)^n``."""

    lower: tuple[float, ...]
    side: float

    def __post_init__(self):
        object.__setattr__(self, "lower", tuple(float(v) for v in self.lower))
        if len(self.lower) not in (2, 3):
            raise ValueError("dimension must be 2 or 3")
        if not self.side > 0:
            raise ValueError("side must be positive")

    @property
    def n(self) -> int:
        return len(self.lower)

    @classmethod
    def centered(cls, n: int, side: float = 4.0) -> "Box":
        return cls(tuple([-side / 2.0] * n), side)


@dataclass(frozen=True)
class DyadicTag:
    """Coordinates of a cube in a shifted dyadic grid.

    ``shift`` holds numerators over 3, each 0 or 1.
    """

    shift: tuple[int, ...]
    level: int
    index: tuple[int, ...]

    def to_json(self) -> dict:
        return {"t": list(self.shift), "k": self.level, "m": list(self.index)}


@dataclass(frozen=True)
class Cube:
    """The half-open cube ``[lower, lower + side)^n``."""

    lower: tuple[float, ...]
    side: float
    tag: DyadicTag | None = None

    def __post_init__(self):
        object.__setattr__(self, "lower", tuple(float(v) for v in self.lower))
        if not self.side > 0:
            raise ValueError("cube side must be positive")

    @property
    def n(self) -> int:
        return len(self.lower)

    @property
    def upper(self) -> tuple[float, ...]:
        return tuple(a + self.side for a in self.lower)

    def contains(self, x) -> bool:
        return all(a <= xi < a + self.side for a, xi in zip(self.lower, x))

    def volume(self) -> float:
        return self.side**self.n


def is_power_of_two(value: int) -> bool:
    return value > 0 and value & (value - 1) == 0


@dataclass(frozen=True, eq=False)
class GridFunction:
    box: Box
    resolution: int
    values: np.ndarray
    corpus_id: str | None = None
    params: dict = field(default_factory=dict)
    analytic_gradient: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        if not is_power_of_two(self.resolution) or self.resolution < 16:
            raise ValueError("resolution must be a power of two >= 16")
        vals = np.array(self.values, dtype=float)
        expected = (self.resolution,) * self.box.n
        if vals.shape != expected:
            raise ValueError(f"values must have shape {expected}, got {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def n(self) -> int:
        return self.box.n

    @property
    def h(self) -> float:
        return self.box.side / self.resolution

    @property
    def has_analytic_gradient(self) -> bool:
        return self.analytic_gradient is not None

    def axis(self, j: int = 0) -> np.ndarray:
        return self.box.lower[j] + self.h * np.arange(self.resolution)

    def points(self) -> np.ndarray:
        """Sample coordinates, shape ``(N, ..., N, n)``."""
        return grid_points(self.box, self.resolution)

    def point(self, index) -> np.ndarray:
        return np.array([self.box.lower[j] + self.h * index[j] for j in range(self.n)])

    def index_of(self, x) -> tuple[int, ...]:
        """Index of the sample whose cell contains ``x``."""
        return tuple(
            int(math.floor((x[j] - self.box.lower[j]) / self.h + 0.5)) for j in range(self.n)
        )

    def with_values(self, values: np.ndarray, corpus_id: str | None = None) -> "GridFunction":
        return GridFunction(self.box, self.resolution, values, corpus_id)


def grid_points(box: Box, resolution: int) -> np.ndarray:
    h = box.side / resolution
    axes = [box.lower[j] + h * np.arange(resolution) for j in range(box.n)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack(mesh, axis=-1)


def check_margin(values: np.ndarray, cells: int = MARGIN_CELLS) -> bool:
    """True when ``values`` vanish on the outermost ``cells`` layers of every face."""
    for j in range(values.ndim):
        lo = np.take(values, range(cells), axis=j)
        hi = np.take(values, range(values.shape[j] - cells, values.shape[j]), axis=j)
        if np.any(lo != 0) or np.any(hi != 0):
            return False
    return True


def sample(
    expr_id: str,
    params: dict | None = None,
    box: Box | None = None,
    resolution: int = 128,
    *,
    n: int = 2,
    enforce_margin: bool = True,
) -> GridFunction:
    """Sample a corpus function on a grid.

    Raises:
        KeyError: unknown ``expr_id`` or parameter name.
        ValueError: bad resolution, or support touching the box margin
            while ``enforce_margin`` is set.
    """
    if not is_power_of_two(resolution) or resolution < 16:
        raise ValueError("resolution must be a power of two >= 16")
    box = box or Box.centered(n)
    merged = resolve_params(expr_id, params)
    entry = CORPUS[expr_id]
    pts = grid_points(box, resolution)
    values = entry.value(pts, **merged)
    if enforce_margin and not check_margin(values):
        raise ValueError(
            f"{expr_id!r} does not vanish on the outer {MARGIN_CELLS} cells of the box"
        )
    grad = None
    if entry.gradient is not None:
        grad_fn = entry.gradient

        def grad(x, _fn=grad_fn, _p=merged):
            return _fn(x, **_p)

    return GridFunction(box, resolution, values, expr_id, merged, grad)


@dataclass(frozen=True, eq=False)
class GridGradient:
    """Gradient components on the grid of ``source``."""

    source: GridFunction
    components: np.ndarray
    analytic: bool

    def magnitude(self) -> GridFunction:
        mag = np.sqrt(np.sum(self.components**2, axis=0))
        return GridFunction(self.source.box, self.source.resolution, mag, "grad_norm")


def gradient(f: GridFunction, method: str = "auto") -> GridGradient:
    """Gradient of ``f``.

    ``method`` is ``"analytic"``, ``"fd"`` (second-order central
    differences, one-sided at the boundary) or ``"auto"``, which prefers the
    analytic gradient when the corpus supplies one.
    """
    if method not in ("auto", "fd", "analytic"):
        raise ValueError("method must be auto, fd or analytic")
    use_analytic = f.has_analytic_gradient and method != "fd"
    if method == "analytic" and not f.has_analytic_gradient:
        raise ValueError("no analytic gradient available")
    if use_analytic:
        g = f.analytic_gradient(f.points())
        comps = np.moveaxis(g, -1, 0).copy()
    else:
        comps = np.stack(np.gradient(f.values, f.h, edge_order=2), axis=0)
    return GridGradient(f, comps, use_analytic)


def _axis_range(lo: float, hi: float, origin: float, h: float) -> tuple[int, int]:
    """Indices ``i`` with ``lo <= origin + i*h < hi``, as ``[start, stop)``.

    Computed in exact rationals so that samples on cube faces are assigned by
    the half-open rule.
    """
    fo, fh = Fraction(origin), Fraction(h)
    start = math.ceil((Fraction(lo) - fo) / fh)
    stop = math.ceil((Fraction(hi) - fo) / fh)
    return start, stop


def _power_mean(total: float, count: int, s: float) -> float:
    if count == 0:
        return 0.0
    mean = total / count
    return mean if s == 1 else mean ** (1.0 / s)


def cube_sample_slices(f: GridFunction, q: Cube):
    """In-box slices of the samples inside ``q`` and the full lattice count."""
    slices = []
    count = 1
    for j in range(f.n):
        start, stop = _axis_range(q.lower[j], q.lower[j] + q.side, f.box.lower[j], f.h)
        count *= max(stop - start, 0)
        slices.append(slice(min(max(start, 0), f.resolution), min(max(stop, 0), f.resolution)))
    return tuple(slices), count


def _containing_cell_value(f: GridFunction, x) -> float:
    idx = f.index_of(x)
    if all(0 <= i < f.resolution for i in idx):
        return float(f.values[idx])
    return 0.0


def cell_average(f: GridFunction, q: Cube, s: float = 1.0) -> float:
    """``(mean of |f|^s over the lattice points of q)^(1/s)``.

    Lattice points outside the box count as zeros, so the denominator is the
    number of lattice points in the whole cube. A cube holding no lattice
    point takes the value of the cell containing its centre.
    """
    if s < 1:
        raise ValueError("power s must be >= 1")
    slices, count = cube_sample_slices(f, q)
    if count == 0:
        centre = [a + q.side / 2 for a in q.lower]
        return abs(_containing_cell_value(f, centre))
    block = np.abs(f.values[slices])
    total = float(np.sum(block**s)) if block.size else 0.0
    return _power_mean(total, count, s)


def ball_sample_mask(f: GridFunction, x, t: float):
    """Slices of the ball's bounding block, the in-ball mask and the full count."""
    slices = []
    offsets = []
    count_axes = []
    for j in range(f.n):
        lo = math.ceil((x[j] - t - f.box.lower[j]) / f.h - 1e-12)
        hi = math.floor((x[j] + t - f.box.lower[j]) / f.h + 1e-12)
        count_axes.append(np.arange(lo, hi + 1))
        offsets.append(lo)
    coords = np.meshgrid(
        *[f.box.lower[j] + f.h * count_axes[j] - x[j] for j in range(f.n)], indexing="ij"
    )
    dist2 = sum(c * c for c in coords)
    inside = dist2 < t * t
    count = int(np.count_nonzero(inside))
    in_box = np.ones_like(inside)
    for j in range(f.n):
        idx = count_axes[j]
        ok = (idx >= 0) & (idx < f.resolution)
        shape = [1] * f.n
        shape[j] = -1
        in_box = in_box & ok.reshape(shape)
    for j in range(f.n):
        idx = count_axes[j]
        slices.append(np.clip(idx, 0, f.resolution - 1))
    return slices, inside & in_box, count


def ball_average(f: GridFunction, x, t: float, s: float = 1.0) -> float:
    """``(mean of |f|^s over lattice points with |y - x| < t)^(1/s)``."""
    if s < 1:
        raise ValueError("power s must be >= 1")
    if not t > 0:
        raise ValueError("radius must be positive")
    idx, mask, count = ball_sample_mask(f, x, t)
    if count == 0:
        return abs(_containing_cell_value(f, x))
    block = np.abs(f.values[np.ix_(*idx)])
    total = float(np.sum(np.where(mask, block, 0.0) ** s))
    return _power_mean(total, count, s)


def save(f: GridFunction, path: str | Path) -> None:
    """Write a JSON header line followed by little-endian float64 samples (C order)."""
    header = {
        "n": f.n,
        "lower": list(f.box.lower),
        "side": f.box.side,
        "resolution": f.resolution,
        "corpus_id": f.corpus_id,
        "params": _jsonable(f.params),
        "dtype": "<f8",
        "order": "C",
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes())


def load(path: str | Path) -> GridFunction:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline())
        data = np.frombuffer(fh.read(), dtype="<f8")
    res = header["resolution"]
    box = Box(tuple(header["lower"]), header["side"])
    values = data.reshape((res,) * header["n"])
    params = header.get("params") or {}
    corpus_id = header.get("corpus_id")
    grad = None
    if corpus_id in CORPUS and CORPUS[corpus_id].gradient is not None:
        merged = resolve_params(corpus_id, params)
        grad_fn = CORPUS[corpus_id].gradient

        def grad(x, _fn=grad_fn, _p=merged):
            return _fn(x, **_p)

    return GridFunction(box, res, values, corpus_id, params, grad)


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj
