"""Rough fractional singular integrals and rough maximal operators.

All operators act on the multilinear interpolant of the samples. Linear
ones are convolutions with product-integration weights from
:mod:`rieszlab.kernels`; the nonlinear ones are lattice sums evaluated by
compiled loops restricted to the support of ``f``.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numba
import numpy as np
from scipy.ndimage import map_coordinates

from . import kernels
from .grid import GridFunction
from .sphere import SphereSymbol, ball_volume, sphere_area, sphere_mesh

MEAN_ZERO_TOL = 1e-10
SPHERE_RADII_PER_OCTAVE = 8

_KERNEL_CACHE: dict = {}


def _symbol_key(sym: SphereSymbol) -> tuple:
    return (sym.n, sym.values.size, sym.values.tobytes().__hash__())


def _cached(key, build):
    if key not in _KERNEL_CACHE:
        if len(_KERNEL_CACHE) > 96:
            _KERNEL_CACHE.clear()
        w = build()
        w.setflags(write=False)
        _KERNEL_CACHE[key] = w
    return _KERNEL_CACHE[key]


def require_mean_zero(sym: SphereSymbol) -> None:
    scale = max(sym.l1(), 1.0)
    if abs(sym.integral()) > MEAN_ZERO_TOL * scale:
        raise ValueError("symbol must have mean zero on the sphere")


def _check_alpha(n: int, alpha: float) -> None:
    if not 0 < alpha < n:
        raise ValueError(f"alpha must lie in (0, {n})")


def singular_weights(sym: SphereSymbol, alpha: float, h: float, window: int) -> np.ndarray:
    """Principal-value weights of ``Omega(y') |y|^(alpha-1-n)``."""
    require_mean_zero(sym)
    key = ("sing", _symbol_key(sym), alpha, h, window)
    return _cached(key, lambda: kernels.ray_weights(
        sym.nodes, sym.weights * sym.values, window, alpha - 2.0, h, origin=kernels.ORIGIN_PV))


def rough_singular(f: GridFunction, sym: SphereSymbol, alpha: float, *,
                   mode: str = "subtract_ball_average") -> GridFunction:
    """Rough fractional singular integral of ``f``.

    Per annulus, subtracting the ball average or the centre value changes the
    result by a multiple of the symbol's integral, which vanishes on the mesh.
    Both modes therefore reduce to the same principal-value weights.
    """
    _check_alpha(f.n, alpha)
    if mode not in ("subtract_ball_average", "subtract_center_value"):
        raise ValueError("unknown cancellation mode")
    w = singular_weights(sym, alpha, f.h, f.resolution - 1)
    return f.with_values(kernels.convolve(f.values, w), "rough_singular")


def rough_singular_polar(f: GridFunction, sym: SphereSymbol, alpha: float, points, *,
                         mode: str = "subtract_ball_average", panels_per_cell: int = 2,
                         nodes_per_panel: int = 4, inner_nodes: int = 24) -> np.ndarray:
    """Independent evaluation by annular polar quadrature at grid indices ``points``.

    Annuli ``2^(k-1) < |y| <= 2^k`` are integrated with Gauss–Legendre panels
    of width ``h / panels_per_cell`` on the bilinear interpolant. The
    innermost disc uses the substitution ``r = R u^(1/alpha)`` which removes
    the ``r^(alpha-1)`` weight. Each annulus subtracts either the ball average
    of its outer radius or the centre value.
    """
    require_mean_zero(sym)
    _check_alpha(f.n, alpha)
    h = f.h
    nodes = sym.nodes
    amps = sym.weights * sym.values
    diam = f.box.side * math.sqrt(f.n)
    k_hi = math.ceil(math.log2(diam)) + 1
    k_lo = math.floor(math.log2(h))
    gx, gw = np.polynomial.legendre.leggauss(nodes_per_panel)
    ix, iw = np.polynomial.legendre.leggauss(inner_nodes)
    out = []
    for p in points:
        x = f.point(p)

        def ray_values(radii):
            pts = x[None, None, :] - radii[:, None, None] * nodes[None, :, :]
            coords = (pts - np.array(f.box.lower)) / h
            vals = map_coordinates(f.values, np.moveaxis(coords, -1, 0), order=1,
                                   mode="constant", cval=0.0)
            return vals

        centre = f.values[tuple(p)]
        total = 0.0
        # ball integrals of the interpolant, accumulated outward
        ball_integral = 0.0
        outer = 2.0**k_lo
        u = 0.5 * (ix + 1.0)
        radii = outer * u ** (1.0 / alpha)
        vals = ray_values(radii)
        diff = (vals - centre) @ amps
        # r^(alpha-2) dr = (R^alpha/alpha) du / r
        total += float(np.sum(0.5 * iw * diff / radii)) * outer**alpha / alpha
        rad_n = outer * u ** (1.0 / f.n)
        ball_integral += float(np.sum(0.5 * iw * (ray_values(rad_n) @ sym.weights))) * outer**f.n / f.n
        for k in range(k_lo + 1, k_hi + 1):
            a, b = 2.0 ** (k - 1), 2.0**k
            panels = max(1, int(math.ceil((b - a) / h * panels_per_cell)))
            edges = np.linspace(a, b, panels + 1)
            mids = 0.5 * (edges[1:] + edges[:-1])
            halfs = 0.5 * (edges[1:] - edges[:-1])
            radii = (mids[:, None] + halfs[:, None] * gx[None, :]).ravel()
            rw = (halfs[:, None] * gw[None, :]).ravel()
            vals = ray_values(radii)
            ball_integral += float(np.sum(rw * radii ** (f.n - 1) * (vals @ sym.weights)))
            if mode == "subtract_ball_average":
                c = ball_integral / (ball_volume(f.n) * b**f.n)
            else:
                c = centre
            total += float(np.sum(rw * radii ** (alpha - 2.0) * ((vals - c) @ amps)))
        out.append(total)
    return np.array(out)


# --- nonlinear fractional derivative --------------------------------------------


@lru_cache(maxsize=16)
def _derivative_weights(n: int, alpha: float, h: float, window: int):
    nodes, w = sphere_mesh(n)
    c = kernels.ray_weights(nodes, w, window, alpha - 2.0, h, origin=kernels.ORIGIN_EXCLUDE)
    total = _derivative_total(nodes, w, alpha - 2.0) * h ** (alpha - 1.0)
    c.setflags(write=False)
    return c, total


def _derivative_total(nodes: np.ndarray, w: np.ndarray, p: float) -> float:
    """Sum over all nonzero offsets of the hat-function weights, in lattice units.

    Along each ray ``sum_{v != 0} phi_v = 1 - phi_0`` and ``phi_0`` is the
    product of ``1 - s|theta_j|`` up to ``s = 1/max|theta_j|``.
    """
    total = 0.0
    for theta, weight in zip(np.abs(nodes), w):
        end = 1.0 / theta.max()
        poly = np.array([1.0])
        for t in theta:
            poly = np.convolve(poly, np.array([1.0, -t]))
        # 1 - phi_0: drop the constant term and flip signs
        coef = -poly.copy()
        coef[0] = 0.0
        inner = sum(
            c * end ** (p + m + 1) / (p + m + 1) for m, c in enumerate(coef) if c != 0.0
        )
        tail = end ** (p + 1) / -(p + 1)
        total += weight * (inner + tail)
    return float(total)


@numba.njit(cache=True, fastmath=True)
def _deviation_sum2(values, points, lo, hi, weights, window, centre_vals, out):
    for i in range(points.shape[0]):
        x0, x1 = points[i, 0], points[i, 1]
        c = centre_vals[i]
        ac = abs(c)
        a0, b0 = max(lo[0], x0 - window), min(hi[0], x0 + window + 1)
        a1, b1 = max(lo[1], x1 - window), min(hi[1], x1 + window + 1)
        acc = 0.0
        for y0 in range(a0, b0):
            wrow = weights[y0 - x0 + window]
            vrow = values[y0]
            off = window - x1
            for y1 in range(a1, b1):
                acc += wrow[y1 + off] * (abs(vrow[y1] - c) - ac)
        out[i] = acc


@numba.njit(cache=True, fastmath=True)
def _deviation_sum3(values, points, lo, hi, weights, window, centre_vals, out):
    for i in range(points.shape[0]):
        x0, x1, x2 = points[i, 0], points[i, 1], points[i, 2]
        c = centre_vals[i]
        ac = abs(c)
        a0, b0 = max(lo[0], x0 - window), min(hi[0], x0 + window + 1)
        a1, b1 = max(lo[1], x1 - window), min(hi[1], x1 + window + 1)
        a2, b2 = max(lo[2], x2 - window), min(hi[2], x2 + window + 1)
        acc = 0.0
        off = window - x2
        for y0 in range(a0, b0):
            r0 = y0 - x0 + window
            for y1 in range(a1, b1):
                wrow = weights[r0, y1 - x1 + window]
                vrow = values[y0, y1]
                for y2 in range(a2, b2):
                    acc += wrow[y2 + off] * (abs(vrow[y2] - c) - ac)
        out[i] = acc


def deviation_sum(f: GridFunction, points: np.ndarray, weights: np.ndarray, centre: np.ndarray,
                  total: float) -> np.ndarray:
    """``sum_v w[v] |f(x-v) - c(x)|`` over all of Z^n, ``f`` extended by zero.

    Offsets landing outside the support of ``f`` contribute ``w[v] |c|``,
    which is folded into ``|c| * total`` with ``total = sum_v w[v]``.
    """
    window = (weights.shape[0] - 1) // 2
    nz = np.argwhere(f.values != 0)
    out = np.zeros(len(points))
    if nz.size:
        lo = nz.min(axis=0).astype(np.int64)
        hi = (nz.max(axis=0) + 1).astype(np.int64)
        fn = _deviation_sum2 if f.n == 2 else _deviation_sum3
        # reversed weights make the inner loops run forward through memory
        flipped = np.ascontiguousarray(weights[(slice(None, None, -1),) * f.n])
        fn(np.ascontiguousarray(f.values), points, lo, hi, flipped,
           window, np.ascontiguousarray(centre, dtype=float), out)
    return out + np.abs(centre) * total


def _point_array(f: GridFunction, points) -> np.ndarray:
    if points is None:
        return np.indices(f.values.shape).reshape(f.n, -1).T.astype(np.int64)
    return np.asarray(points, dtype=np.int64).reshape(-1, f.n)


def nonlinear_frac_derivative(f: GridFunction, alpha: float, points=None):
    """``int |f(y) - f(x)| |x-y|^(alpha-1-n) dy`` on the lattice.

    The integrand is integrated against the hat-function weights of the
    kernel, which dominate the weights of every rough singular kernel with
    ``|Omega| <= 1``. With ``points=None`` the whole grid is returned as a
    GridFunction; otherwise an array at the given indices.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    window = f.resolution - 1
    c, total = _derivative_weights(f.n, float(alpha), float(f.h), window)
    pts = _point_array(f, points)
    out = deviation_sum(f, pts, c, f.values[tuple(pts.T)], total)
    if points is None:
        return f.with_values(out.reshape(f.values.shape), "frac_derivative")
    return out


# --- ball kernels and maximal operators -------------------------------------------


def dyadic_radii(f: GridFunction) -> list[float]:
    """Radii ``2^k`` from one cell up to four box sides."""
    lo = math.floor(math.log2(f.h))
    hi = math.ceil(math.log2(4.0 * f.box.side))
    return [2.0**k for k in range(lo, hi + 1)]


def _ball_window(f: GridFunction, t: float) -> int:
    return int(min(f.resolution - 1, math.ceil(t / f.h) + 1))


def ball_weights(sym: SphereSymbol | None, kind: str, t: float, h: float, window: int,
                 n: int) -> np.ndarray:
    """Weights of ``g(y') 1_{|y|<t}`` with ``g`` = 1, ``|Omega|`` or ``Omega``."""
    if sym is None:
        nodes, w = sphere_mesh(n)
        amps = w
        key = ("ball", n, t, h, window)
    else:
        nodes = sym.nodes
        vals = {"abs": np.abs(sym.values), "signed": sym.values}[kind]
        amps = sym.weights * vals
        key = ("ball", kind, _symbol_key(sym), t, h, window)
    return _cached(key, lambda: kernels.ray_weights(nodes, amps, window, n - 1.0, h, r_max=t))


def ball_kernel_average(f: GridFunction, values: np.ndarray, t: float) -> np.ndarray:
    """``mean over B(x,t)`` of the interpolant of ``values`` at every sample."""
    w = ball_weights(None, "one", t, f.h, _ball_window(f, t), f.n)
    return kernels.convolve(values, w) / (ball_volume(f.n) * t**f.n)


def rough_maximal(f: GridFunction, sym: SphereSymbol, alpha: float, *, per_radius=False):
    """``sup_t t^(alpha-1) mean_{|y|<t} |Omega(y')| |f(x-y)|`` over dyadic radii."""
    if not 1 <= alpha < f.n:
        raise ValueError("alpha must lie in [1, n)")
    rows = []
    for t in dyadic_radii(f):
        w = ball_weights(sym, "abs", t, f.h, _ball_window(f, t), f.n)
        val = kernels.convolve(np.abs(f.values), w) / (ball_volume(f.n) * t**f.n)
        rows.append(t ** (alpha - 1.0) * np.maximum(val, 0.0))
    stack = np.stack(rows)
    out = f.with_values(stack.max(axis=0), "rough_maximal")
    return (out, stack) if per_radius else out


def natural_rough_maximal(f: GridFunction, sym: SphereSymbol, alpha: float, *, per_radius=False):
    """``sup_t t^(alpha-1) |mean_{|y|<t} Omega(y') f(x-y)|`` over dyadic radii."""
    require_mean_zero(sym)
    _check_alpha(f.n, alpha)
    rows = []
    for t in dyadic_radii(f):
        w = ball_weights(sym, "signed", t, f.h, _ball_window(f, t), f.n)
        val = kernels.convolve(f.values, w) / (ball_volume(f.n) * t**f.n)
        rows.append(t ** (alpha - 1.0) * np.abs(val))
    stack = np.stack(rows)
    out = f.with_values(stack.max(axis=0), "natural_rough_maximal")
    return (out, stack) if per_radius else out


def sharp_rough_maximal(f: GridFunction, sym: SphereSymbol, alpha: float, *, points=None,
                        per_radius=False):
    """``sup_t t^(alpha-1) mean_{|y|<t} |Omega(y')| |f(x-y) - f_{B(x,t)}|``.

    Returns the sup (GridFunction, or array when ``points`` is given) and,
    with ``per_radius``, the stacked per-radius values and the ball averages.
    """
    _check_alpha(f.n, alpha)
    pts = _point_array(f, points)
    l1 = float(np.dot(sym.weights, np.abs(sym.values)))
    radii = dyadic_radii(f)
    rows, centres = [], []
    for t in radii:
        window = _ball_window(f, t)
        avg = ball_kernel_average(f, f.values, t)[tuple(pts.T)]
        w = ball_weights(sym, "abs", t, f.h, window, f.n)
        acc = deviation_sum(f, pts, w, avg, l1 * t**f.n / f.n)
        rows.append(t ** (alpha - 1.0) * acc / (ball_volume(f.n) * t**f.n))
        centres.append(avg)
    stack = np.stack(rows)
    best = stack.max(axis=0)
    if points is None:
        best = f.with_values(best.reshape(f.values.shape), "sharp_rough_maximal")
    if per_radius:
        return best, stack, np.stack(centres), radii
    return best


def sphere_radii(f: GridFunction) -> list[float]:
    """Radii ``h * 2^(j/8)`` from one cell to the box diameter."""
    top = f.box.side * math.sqrt(f.n)
    count = int(math.ceil(SPHERE_RADII_PER_OCTAVE * math.log2(top / f.h)))
    return [f.h * 2.0 ** (j / SPHERE_RADII_PER_OCTAVE) for j in range(count + 1)]


def spherical_maximal(f: GridFunction, beta: float, *, return_radius=False):
    """``sup_r r^beta * mean over the sphere of radius r around x of |f|``."""
    if not 0 <= beta < f.n - 1:
        raise ValueError(f"beta must lie in [0, {f.n - 1})")
    nodes, w = sphere_mesh(f.n)
    amps = w / sphere_area(f.n)
    absf = np.abs(f.values)
    best = np.zeros_like(absf)
    arg = np.zeros_like(absf)
    for r in sphere_radii(f):
        window = _ball_window(f, r)
        key = ("sphere", f.n, r, f.h, window)
        kern = _cached(key, lambda: kernels.sphere_splat(nodes, amps, r, window, f.h))
        val = r**beta * np.maximum(kernels.convolve(absf, kern), 0.0)
        better = val > best
        best = np.where(better, val, best)
        arg = np.where(better, r, arg)
    out = f.with_values(best, "spherical_maximal")
    return (out, arg) if return_radius else out
