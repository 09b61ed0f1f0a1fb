"""Riesz potentials, dyadic and sparse fractional sums, fractional maximal functions."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate

from . import dyadic, kernels
from .grid import GridFunction
from .sphere import sphere_area, sphere_mesh


@dataclass(frozen=True)
class FracParams:
    """Exponents of a fractional operator: order ``alpha`` and power ``s < n/alpha``."""

    n: int
    alpha: float
    s: float = 1.0

    def __post_init__(self):
        if not 0 < self.alpha < self.n:
            raise ValueError(f"alpha must lie in (0, {self.n})")
        if self.s < 1:
            raise ValueError("s must be >= 1")
        if self.s >= self.n / self.alpha:
            raise ValueError("s must be below n/alpha; the sparse sums diverge otherwise")

    @classmethod
    def from_r(cls, n: int, alpha: float, r: float) -> "FracParams":
        """``s`` from ``1/s = 1/n + 1/r'``."""
        if not 1 < r < n:
            raise ValueError("r must lie in (1, n)")
        rp = r / (r - 1.0)
        return cls(n, alpha, rp * n / (n + rp))

    def sobolev_exponent(self, p: float) -> float:
        """``p* = n p / (n - p)``."""
        if not 1 <= p < self.n:
            raise ValueError("p must lie in [1, n)")
        return self.n * p / (self.n - p)


def riesz_constant(n: int, alpha: float) -> float:
    """Normalization making the Riesz potential the Fourier multiplier ``|xi|^-alpha``."""
    if not 0 < alpha < n:
        raise ValueError(f"alpha must lie in (0, {n})")
    return math.gamma((n - alpha) / 2) / (
        2**alpha * math.pi ** (n / 2) * math.gamma(alpha / 2)
    )


@lru_cache(maxsize=32)
def _riesz_weights(n: int, alpha: float, h: float, window: int, scheme: str) -> np.ndarray:
    if scheme == "product":
        nodes, w = sphere_mesh(n)
        out = kernels.ray_weights(nodes, w, window, alpha - 1.0, h)
    elif scheme == "midpoint":
        axes = np.arange(-window, window + 1) * h
        mesh = np.meshgrid(*([axes] * n), indexing="ij")
        r = np.sqrt(sum(m * m for m in mesh))
        with np.errstate(divide="ignore"):
            out = np.where(r > 0, r ** (alpha - n), 0.0) * h**n
        lo, hi = self_cell_bracket(n, alpha, h)
        out[(window,) * n] = 0.5 * (lo + hi)
    else:
        raise ValueError("scheme must be 'product' or 'midpoint'")
    out.setflags(write=False)
    return out


def self_cell_bracket(n: int, alpha: float, h: float) -> tuple[float, float]:
    """Bounds for the integral of ``|y|^(alpha-n)`` over the cell centred at 0.

    The inscribed and circumscribed balls bracket the cell.
    """
    omega = sphere_area(n)
    inner = omega * (h / 2) ** alpha / alpha
    outer = omega * (h * math.sqrt(n) / 2) ** alpha / alpha
    return inner, outer


def riesz_weights(n: int, alpha: float, h: float, window: int, *, normalized: bool = True,
                  scheme: str = "product") -> np.ndarray:
    """Lattice weights of ``|y|^(alpha-n)`` (times the Riesz constant if ``normalized``)."""
    w = _riesz_weights(n, float(alpha), float(h), int(window), scheme)
    return w * riesz_constant(n, alpha) if normalized else w


def riesz_potential(
    f: GridFunction,
    alpha: float,
    *,
    normalized: bool = True,
    method: str = "fft",
    scheme: str = "product",
    points=None,
):
    """Riesz potential of ``f``.

    ``method="fft"`` evaluates the whole grid; ``method="direct"`` sums the
    same weights at the grid indices ``points`` and returns an array of
    values. ``normalized=False`` drops the Riesz constant.
    """
    FracParams(f.n, alpha)
    w = riesz_weights(f.n, alpha, f.h, f.resolution - 1, normalized=normalized, scheme=scheme)
    if method == "fft":
        return f.with_values(kernels.convolve(f.values, w), "riesz")
    if method == "direct":
        if points is None:
            points = list(np.ndindex(f.values.shape))
        return np.array([kernels.convolve_at(f.values, w, p) for p in points])
    raise ValueError("method must be 'fft' or 'direct'")


def composition_truncation_bound(n: int, gamma: float, beta: float, mass: float, x_norm: float,
                                 inner_radius: float, support_radius: float) -> float:
    """Bound for what the box loses in ``I_gamma(I_beta f)`` at a point with ``|x| = x_norm``.

    On the grid, ``I_gamma`` only sees ``I_beta f`` inside the box, which
    contains the ball of radius ``inner_radius``. For ``f >= 0`` supported in
    the ball of radius ``support_radius`` with integral ``mass``,
    ``I_beta f(y) <= c_beta * mass * (|y| - support_radius)^(beta-n)``, and the
    bound integrates that against ``c_gamma (|y| - x_norm)^(gamma-n)`` over
    ``|y| > inner_radius``.
    """
    if not x_norm < inner_radius or not support_radius < inner_radius:
        raise ValueError("x and the support must lie inside the inner ball")
    scale = riesz_constant(n, gamma) * riesz_constant(n, beta) * mass * sphere_area(n)
    val, _ = integrate.quad(
        lambda r: (r - x_norm) ** (gamma - n) * (r - support_radius) ** (beta - n) * r ** (n - 1),
        inner_radius, math.inf,
    )
    return scale * val


# --- dyadic machinery -------------------------------------------------------------


def _levels(f: GridFunction, levels=None) -> range:
    if levels is not None:
        return range(levels[0], levels[1] + 1)
    lo, hi = dyadic.level_range(f.h, f.box.side)
    return range(lo, hi + 1)


def level_averages(values: np.ndarray, f: GridFunction, k: int, shift) -> np.ndarray:
    return dyadic.level_average_field(values, f.box.lower, f.h, k, shift)


def dyadic_fractional(f: GridFunction, alpha: float, shift, s: float = 1.0,
                      levels=None) -> GridFunction:
    """Sum over the clamped levels of ``2^(k alpha)`` times the ``L^s`` cube averages."""
    if s < 1:
        raise ValueError("s must be >= 1")
    powered = np.abs(f.values) ** s
    out = np.zeros_like(powered)
    for k in _levels(f, levels):
        avg = level_averages(powered, f, k, shift)
        out += 2.0 ** (k * alpha) * (avg if s == 1 else avg ** (1.0 / s))
    return f.with_values(out, "dyadic_fractional")


def _cube_groups(cubes) -> dict[tuple, np.ndarray]:
    if isinstance(cubes, dict):
        return cubes
    groups: dict[tuple, list] = {}
    for c in cubes:
        if c.tag is None:
            raise ValueError("sparse cubes must carry dyadic tags")
        groups.setdefault((tuple(c.tag.shift), c.tag.level), []).append(c.tag.index)
    return {key: np.array(v, dtype=np.int64) for key, v in groups.items()}


def sparse_sum(f: GridFunction, alpha: float, s: float, cubes) -> np.ndarray:
    """``sum over cubes of side^alpha * L^s average * indicator``, without checks.

    ``cubes`` is a list of dyadic-tagged cubes or a mapping from
    ``(shift, level)`` to an array of labels; repeated cubes count repeatedly.
    """
    powered = np.abs(f.values) ** s
    out = np.zeros_like(powered)
    for (shift, k), labels in sorted(_cube_groups(cubes).items()):
        labels = np.asarray(labels, dtype=np.int64).reshape(-1, f.n)
        ids, axis_labels, sizes = dyadic.cube_ids(f.box.lower, f.h, f.resolution, k, shift)
        sums = np.bincount(ids.ravel(), weights=powered.ravel(), minlength=sizes.size)
        avg = sums / sizes
        if s != 1:
            avg = avg ** (1.0 / s)
        firsts = np.array([int(l[0]) for l in axis_labels])
        dims = tuple(int(l[-1] - l[0]) + 1 for l in axis_labels)
        local = labels - firsts
        inside = np.all((local >= 0) & (local < np.array(dims)), axis=1)
        selected = np.zeros(sizes.size)
        if inside.any():
            np.add.at(selected, np.ravel_multi_index(local[inside].T, dims), 1.0)
        out += 2.0 ** (k * alpha) * (selected * avg)[ids]
    return out


def sparse_fractional(f: GridFunction, alpha: float, s: float, family) -> GridFunction:
    """Sparse operator over the cubes of ``family`` (a SparseFamily or cube list)."""
    FracParams(f.n, alpha, s)
    cubes = family.groups() if hasattr(family, "groups") else list(family)
    return f.with_values(sparse_sum(f, alpha, s, cubes), "sparse_fractional")


def fractional_maximal(f: GridFunction, alpha: float = 0.0, s: float = 1.0,
                       levels=None, return_argmax: bool = False):
    """Sup of ``side^alpha * (mean |f|^s)^(1/s)`` over shifted dyadic cubes containing each point.

    Every one of the ``2^n`` shifted grids is scanned over the clamped levels.
    With ``return_argmax`` the side length attaining the sup is returned too.
    """
    if s < 1:
        raise ValueError("s must be >= 1")
    if alpha != 0:
        FracParams(f.n, alpha, s)
    powered = np.abs(f.values) ** s
    best = np.zeros_like(powered)
    best_side = np.zeros_like(powered)
    for shift in dyadic.all_shifts(f.n):
        for k in _levels(f, levels):
            avg = level_averages(powered, f, k, shift)
            val = 2.0 ** (k * alpha) * (avg if s == 1 else avg ** (1.0 / s))
            better = val > best
            best = np.where(better, val, best)
            best_side = np.where(better, 2.0**k, best_side)
    out = f.with_values(best, "fractional_maximal")
    return (out, best_side) if return_argmax else out


def _segment_lorentz(ids: np.ndarray, vals: np.ndarray, sizes: np.ndarray, p: float,
                     q: float) -> np.ndarray:
    """Normalized Lorentz average of ``vals`` on each cube id (measure 1 per cube)."""
    ids = ids.ravel()
    a = np.abs(vals.ravel())
    order = np.lexsort((-a, ids))
    ids_s, a_s = ids[order], a[order]
    mu = 1.0 / sizes[ids_s]
    # cumulative measure within each cube segment
    cum = np.cumsum(mu)
    starts = np.r_[0, np.flatnonzero(ids_s[1:] != ids_s[:-1]) + 1]
    seg_index = np.repeat(np.arange(starts.size), np.diff(np.r_[starts, ids_s.size]))
    cum = cum - (cum[starts] - mu[starts])[seg_index]
    nxt = np.r_[a_s[1:], 0.0]
    same_seg = np.r_[ids_s[1:] == ids_s[:-1], False]
    nxt = np.where(same_seg, nxt, 0.0)
    out = np.zeros(sizes.size)
    if math.isinf(q):
        np.maximum.at(out, ids_s, a_s * cum ** (1.0 / p))
        return out
    # Ties contribute zero width steps, so summing sample by sample is exact.
    contrib = cum ** (q / p) * (a_s**q - nxt**q)
    np.add.at(out, ids_s, contrib)
    return (p * out / q) ** (1.0 / q)


def lorentz_maximal(f: GridFunction, p: float, q: float, levels=None) -> GridFunction:
    """Sup of normalized Lorentz cube averages over shifted dyadic cubes."""
    from .local_norms import LorentzIndex

    LorentzIndex(p, q)
    best = np.zeros(f.values.shape)
    for shift in dyadic.all_shifts(f.n):
        for k in _levels(f, levels):
            ids, _, sizes = dyadic.cube_ids(f.box.lower, f.h, f.resolution, k, shift)
            per_cube = _segment_lorentz(ids, f.values, sizes, p, q)
            best = np.maximum(best, per_cube[ids])
    return f.with_values(best, "lorentz_maximal")


def ball_fractional_maximal(f: GridFunction, beta: float, radii) -> tuple[np.ndarray, np.ndarray]:
    """Per-radius ball averages ``t^beta * mean_{B(x,t)} |f|`` and their sup.

    Averages use the product-integration ball kernels of :mod:`rough`.
    """
    from .rough import ball_kernel_average

    per_radius = []
    for t in radii:
        per_radius.append(t**beta * ball_kernel_average(f, np.abs(f.values), t))
    stack = np.stack(per_radius)
    return stack.max(axis=0), stack
