"""Convolution weights for homogeneous kernels on the sample lattice.

A sampled function is extended by multilinear interpolation, so integrating
it against a kernel ``K(y) = A(y/|y|) |y|^p`` in polar coordinates reduces to
lattice weights

    W[v] = sum_i a_i * integral of r^p * phi(r theta_i / h - v) dr,

where ``theta_i`` are sphere nodes, ``a_i`` the node weight times the
angular factor and ``phi`` the tensor hat function. Along a ray ``phi`` is a
polynomial of degree ``n`` between consecutive lattice-plane crossings, so
the radial integrals are done exactly near the origin and by Gauss–Legendre
farther out. Evaluating the kernel on the grid is then one convolution.
"""

from __future__ import annotations

import math

import numba
import numpy as np
from scipy.signal import fftconvolve

ORIGIN_INCLUDE = 0
ORIGIN_PV = 1
ORIGIN_EXCLUDE = 2

_NEAR = 4.0
_GL_X, _GL_W = np.polynomial.legendre.leggauss(6)


@numba.njit(cache=True)
def _monomial(e, a, b):
    e1 = e + 1.0
    if abs(e1) < 1e-13:
        if a <= 0.0:
            return math.inf
        return math.log(b / a)
    if a <= 0.0:
        if e1 < 0.0:
            return math.inf
        return b**e1 / e1
    return (b**e1 - a**e1) / e1


@numba.njit(cache=True)
def _march(dirs, amps, M, power, s_min, s_max, origin_mode, pv_cut, gl_x, gl_w, out):
    n = dirs.shape[1]
    width = 2 * M + 1
    ncorner = 1 << n
    centre = 0
    stride = 1
    for j in range(n - 1, -1, -1):
        centre += M * stride
        stride *= width
    strides = np.empty(n, np.int64)
    stride = 1
    for j in range(n - 1, -1, -1):
        strides[j] = stride
        stride *= width
    absd = np.empty(n)
    crossed = np.empty(n)
    nxt = np.empty(n)
    cell = np.empty(n, np.int64)
    fa = np.empty(n)
    fb = np.empty(n)
    coef = np.empty(n + 1)
    for r in range(dirs.shape[0]):
        amp = amps[r]
        if amp == 0.0:
            continue
        maxabs = 0.0
        for j in range(n):
            absd[j] = abs(dirs[r, j])
            if absd[j] > maxabs:
                maxabs = absd[j]
        s_end = (M + 1.0) / maxabs
        if s_max < s_end:
            s_end = s_max
        if s_end <= s_min:
            continue
        for j in range(n):
            if absd[j] > 0.0:
                crossed[j] = math.floor(s_min * absd[j])
                nxt[j] = (crossed[j] + 1.0) / absd[j]
            else:
                nxt[j] = math.inf
        s = s_min
        first_end = -1.0
        while s < s_end:
            s_next = s_end
            for j in range(n):
                if nxt[j] < s_next:
                    s_next = nxt[j]
            for j in range(n):
                if nxt[j] <= s_next:
                    crossed[j] += 1.0
                    nxt[j] = (crossed[j] + 1.0) / absd[j]
            if first_end < 0.0:
                first_end = s_next
            if s_next - s <= 1e-15 * (1.0 + s_next):
                s = s_next
                continue
            mid = 0.5 * (s + s_next)
            for j in range(n):
                cell[j] = int(math.floor(mid * dirs[r, j]))
            is_first = s == 0.0
            for e in range(ncorner):
                flat = 0
                inside = True
                is_origin = True
                for j in range(n):
                    bit = (e >> j) & 1
                    v = cell[j] + bit
                    if v < -M or v > M:
                        inside = False
                        break
                    if v != 0:
                        is_origin = False
                    flat += (v + M) * strides[j]
                    if bit == 1:
                        fa[j] = -float(cell[j])
                        fb[j] = dirs[r, j]
                    else:
                        fa[j] = 1.0 + cell[j]
                        fb[j] = -dirs[r, j]
                if not inside:
                    continue
                if is_origin and origin_mode == 2:
                    continue
                if s < 4.0:
                    coef[0] = 1.0
                    for m in range(1, n + 1):
                        coef[m] = 0.0
                    deg = 0
                    for j in range(n):
                        for m in range(deg + 1, 0, -1):
                            coef[m] = coef[m] * fa[j] + coef[m - 1] * fb[j]
                        coef[0] = coef[0] * fa[j]
                        deg += 1
                    if is_origin and origin_mode == 1 and is_first:
                        coef[0] -= 1.0
                    val = 0.0
                    for m in range(n + 1):
                        if coef[m] != 0.0:
                            val += coef[m] * _monomial(power + m, s, s_next)
                else:
                    half = 0.5 * (s_next - s)
                    val = 0.0
                    for q in range(gl_x.shape[0]):
                        sq = mid + half * gl_x[q]
                        phi = 1.0
                        for j in range(n):
                            phi *= fa[j] + fb[j] * sq
                        val += gl_w[q] * phi * sq**power
                    val *= half
                out[flat] += amp * val
            s = s_next
        if origin_mode == 1 and s_min == 0.0:
            out[centre] -= amp * _monomial(power, first_end, pv_cut)


@numba.njit(cache=True)
def _splat(dirs, amps, radius, M, out):
    n = dirs.shape[1]
    width = 2 * M + 1
    strides = np.empty(n, np.int64)
    stride = 1
    for j in range(n - 1, -1, -1):
        strides[j] = stride
        stride *= width
    cell = np.empty(n, np.int64)
    frac = np.empty(n)
    for r in range(dirs.shape[0]):
        for j in range(n):
            x = radius * dirs[r, j]
            cell[j] = int(math.floor(x))
            frac[j] = x - cell[j]
        for e in range(1 << n):
            flat = 0
            w = amps[r]
            inside = True
            for j in range(n):
                bit = (e >> j) & 1
                v = cell[j] + bit
                if v < -M or v > M:
                    inside = False
                    break
                flat += (v + M) * strides[j]
                w *= frac[j] if bit == 1 else 1.0 - frac[j]
            if inside:
                out[flat] += w


def ray_weights(
    dirs: np.ndarray,
    amps: np.ndarray,
    window: int,
    power: float,
    h: float,
    *,
    r_min: float = 0.0,
    r_max: float = math.inf,
    origin: int = ORIGIN_INCLUDE,
) -> np.ndarray:
    """Lattice weights of ``sum_i amps_i * r^power`` along the rays ``dirs``.

    Args:
        dirs: unit directions, shape ``(R, n)``.
        amps: per-direction factors (node weight times angular value).
        window: offsets ``|v_j| <= window`` are returned.
        power: radial exponent of the kernel in polar coordinates.
        h: lattice spacing.
        r_min, r_max: radial truncation in physical units.
        origin: how the offset ``v = 0`` is treated when the radial integral
            diverges there. ``ORIGIN_PV`` subtracts the centre value from the
            hat function near 0, which is exact when ``sum amps = 0``;
            ``ORIGIN_EXCLUDE`` drops the ``v = 0`` weight.

    Returns:
        Array of shape ``(2*window+1,)*n`` indexed by ``v + window``.
    """
    dirs = np.ascontiguousarray(dirs, dtype=float)
    amps = np.ascontiguousarray(amps, dtype=float)
    n = dirs.shape[1]
    if origin == ORIGIN_PV and r_min != 0:
        raise ValueError("principal value needs r_min = 0")
    if origin == ORIGIN_INCLUDE and r_min == 0 and power <= -1:
        raise ValueError("kernel is not locally integrable; use ORIGIN_PV or ORIGIN_EXCLUDE")
    out = np.zeros((2 * window + 1) ** n)
    _march(
        dirs, amps, int(window), float(power), r_min / h, r_max / h, int(origin),
        math.sqrt(n), _GL_X, _GL_W, out,
    )
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("non-finite kernel weight")
    return out.reshape((2 * window + 1,) * n) * h ** (power + 1.0)


def sphere_splat(dirs: np.ndarray, amps: np.ndarray, radius: float, window: int, h: float):
    """Lattice weights of a point mass ``amps_i`` at ``radius * dirs_i``."""
    dirs = np.ascontiguousarray(dirs, dtype=float)
    n = dirs.shape[1]
    out = np.zeros((2 * window + 1) ** n)
    _splat(dirs, np.ascontiguousarray(amps, dtype=float), radius / h, int(window), out)
    return out.reshape((2 * window + 1,) * n)


def convolve(values: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """``out[x] = sum_v weights[v] * values[x - v]`` on the grid of ``values``."""
    out = fftconvolve(values, weights, mode="same")
    return out


def convolve_at(values: np.ndarray, weights: np.ndarray, index) -> float:
    """Direct evaluation of :func:`convolve` at one grid index."""
    n = values.ndim
    window = (weights.shape[0] - 1) // 2
    vals_sl, w_sl = [], []
    for j in range(n):
        i = index[j]
        size = values.shape[j]
        # values index i - v must lie in [0, size) with |v| <= window.
        v_lo = max(-window, i - size + 1)
        v_hi = min(window, i)
        if v_lo > v_hi:
            return 0.0
        w_sl.append(slice(v_lo + window, v_hi + window + 1))
        vals_sl.append(slice(i - v_hi, i - v_lo + 1))
    block = values[tuple(vals_sl)]
    wblock = weights[tuple(w_sl)]
    flipped = wblock[(slice(None, None, -1),) * n]
    return float(np.sum(block * flipped))
