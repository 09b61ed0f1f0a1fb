"""Power and sampled weights, A_{p,q} constants, weighted norms, window sweeps.

Averages of ``|x|^gamma`` over boxes are computed exactly up to quadrature
error: a box touching the origin is split into corner boxes, and each corner
box into pyramids over its far faces, which turns the singular volume
integral into smooth face integrals.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import integrate

from . import dyadic
from .grid import Box, Cube, GridFunction, cell_average
from .reports import CheckReport, ResolutionResult
from .sphere import sphere_area

OCTAVES = 6
FINITE_RATIO = 1.0 - 1e-6
_GL_NODES = 20


# --- exact integrals of |x|^gamma ------------------------------------------------


def _face_integral(gamma: float, height: float, extents) -> float:
    """Integral of ``(height^2 + |y|^2)^(gamma/2)`` over the box ``prod [0, extents]``."""
    if len(extents) == 1:
        val, _ = integrate.quad(lambda y: (height * height + y * y) ** (gamma / 2), 0.0,
                                extents[0], epsabs=0.0, epsrel=1e-12, limit=200)
        return val
    a, b = extents
    val, _ = integrate.dblquad(
        lambda z, y: (height * height + y * y + z * z) ** (gamma / 2), 0.0, a, 0.0, b,
        epsabs=0.0, epsrel=1e-11,
    )
    return val


def corner_box_integral(gamma: float, corner) -> float:
    """Integral of ``|x|^gamma`` over ``prod [0, corner_j]``.

    The box is the union of the pyramids with apex 0 over its faces
    ``x_j = corner_j``; on each one the radial integral is explicit.
    Returns ``inf`` when ``gamma <= -n``.
    """
    c = [float(v) for v in corner]
    n = len(c)
    if any(v <= 0 for v in c):
        return 0.0
    if gamma <= -n:
        return math.inf
    total = 0.0
    for j in range(n):
        others = [c[i] for i in range(n) if i != j]
        total += c[j] / (gamma + n) * _face_integral(gamma, c[j], others)
    return total


def _axis_pieces(lo: float, hi: float) -> list[tuple[float, float]]:
    if lo < 0 < hi:
        return [(0.0, -lo), (0.0, hi)]
    if hi <= 0:
        return [(-hi, -lo)]
    return [(lo, hi)]


def _gauss_box(gamma: float, lo, hi) -> float:
    x, w = np.polynomial.legendre.leggauss(_GL_NODES)
    axes = [0.5 * (b - a) * x + 0.5 * (a + b) for a, b in zip(lo, hi)]
    wts = [0.5 * (b - a) * w for a, b in zip(lo, hi)]
    mesh = np.meshgrid(*axes, indexing="ij")
    r2 = sum(m * m for m in mesh)
    wmesh = np.ones_like(r2)
    for j, wt in enumerate(wts):
        shape = [1] * len(lo)
        shape[j] = -1
        wmesh = wmesh * wt.reshape(shape)
    return float(np.sum(wmesh * r2 ** (gamma / 2)))


def power_box_integral(gamma: float, lower, upper) -> float:
    """Integral of ``|x|^gamma`` over the box ``prod [lower_j, upper_j]``."""
    n = len(lower)
    total = 0.0
    for piece in itertools.product(*[_axis_pieces(a, b) for a, b in zip(lower, upper)]):
        lo = [p[0] for p in piece]
        hi = [p[1] for p in piece]
        gap = math.sqrt(sum(v * v for v in lo))
        width = max(b - a for a, b in zip(lo, hi))
        if gap >= width:
            total += _gauss_box(gamma, lo, hi)
            continue
        if gamma <= -n:
            return math.inf
        for choice in itertools.product((0, 1), repeat=n):
            corner = [hi[j] if choice[j] else lo[j] for j in range(n)]
            sign = (-1) ** (n - sum(choice))
            total += sign * corner_box_integral(gamma, corner)
    return total


def power_cube_average(gamma: float, cube: Cube) -> float:
    return power_box_integral(gamma, cube.lower, cube.upper) / cube.volume()


# --- weights ---------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Weight:
    """A weight: ``|x|^lam`` or positive values sampled on a grid."""

    kind: str
    lam: float = 0.0
    samples: GridFunction | None = None

    def __post_init__(self):
        if self.kind not in ("power", "sampled"):
            raise ValueError("kind must be 'power' or 'sampled'")
        if self.kind == "sampled":
            if self.samples is None:
                raise ValueError("a sampled weight needs samples")
            if np.any(self.samples.values <= 0):
                raise ValueError("sampled weights must be positive")

    @classmethod
    def power(cls, lam: float) -> "Weight":
        return cls("power", float(lam))

    @classmethod
    def sampled(cls, samples: GridFunction) -> "Weight":
        return cls("sampled", 0.0, samples)

    def to_power(self, exponent: float) -> "Weight":
        """The weight ``w^exponent``."""
        if self.kind == "power":
            return Weight.power(self.lam * exponent)
        return Weight.sampled(self.samples.with_values(self.samples.values ** exponent))

    def on_grid(self, box: Box, resolution: int, exponent: float = 1.0) -> np.ndarray:
        """``w^exponent`` at the samples of a grid.

        For power weights the sample at the origin carries the exact average
        of ``|x|^(lam*exponent)`` over its cell, which is ``inf`` when that
        is not integrable.
        """
        if self.kind == "sampled":
            if self.samples.resolution != resolution or self.samples.box != box:
                raise ValueError("sampled weight lives on a different grid")
            return self.samples.values ** exponent
        gamma = self.lam * exponent
        h = box.side / resolution
        axes = [box.lower[j] + h * np.arange(resolution) for j in range(box.n)]
        mesh = np.meshgrid(*axes, indexing="ij")
        r2 = sum(m * m for m in mesh)
        with np.errstate(divide="ignore"):
            out = np.where(r2 > 0, r2 ** (gamma / 2), 0.0)
        zero = np.argwhere(r2 == 0)
        for idx in zero:
            lower = [axes[j][idx[j]] - h / 2 for j in range(box.n)]
            cube = Cube(tuple(lower), h)
            out[tuple(idx)] = power_cube_average(gamma, cube)
        return out

    def cube_average(self, cube: Cube, exponent: float = 1.0) -> float:
        """Mean of ``w^exponent`` over a cube."""
        if self.kind == "power":
            return power_cube_average(self.lam * exponent, cube)
        return cell_average(self.samples.with_values(self.samples.values ** exponent), cube)

    def cube_infimum(self, cube: Cube) -> float:
        if self.kind == "sampled":
            from .grid import cube_sample_slices

            sl, _ = cube_sample_slices(self.samples, cube)
            vals = self.samples.values[sl]
            return float(vals.min()) if vals.size else 0.0
        lo = np.array(cube.lower)
        hi = np.array(cube.upper)
        nearest = np.clip(0.0, lo, hi)
        farthest = np.maximum(np.abs(lo), np.abs(hi))
        if self.lam >= 0:
            d = float(np.linalg.norm(nearest))
            return d**self.lam if self.lam > 0 else 1.0
        return float(np.linalg.norm(farthest)) ** self.lam


def dual_exponent(p: float) -> float:
    if p <= 1:
        raise ValueError("need p > 1")
    return p / (p - 1.0)


# --- sweeps and constants ----------------------------------------------------------


def sweep_cubes(n: int, levels: tuple[int, int] = (-3, 2), reach: int = 2) -> list[Cube]:
    """Test cubes: shifted dyadic cubes near the origin plus cubes centred at it.

    Dyadic cubes of every shift are taken at each level whose distance to the
    origin is at most ``reach`` side lengths; power weights are extremal
    there. Centred cubes run over the same sides.
    """
    out = []
    for k in range(levels[0], levels[1] + 1):
        side = 2.0**k
        for shift in dyadic.all_shifts(n):
            centre = dyadic.locate_index((0.0,) * n, k, shift)
            for offset in itertools.product(range(-reach, reach + 1), repeat=n):
                m = tuple(c + o for c, o in zip(centre, offset))
                out.append(dyadic.dyadic_cube(shift, k, m))
        out.append(Cube(tuple([-side / 2] * n), side))
    return out


def apq_product(w: Weight, p: float, q: float, cube: Cube) -> float:
    """``(mean w^q)^(1/q) (mean w^-p')^(1/p')`` on one cube (``inf`` if not integrable)."""
    pp = dual_exponent(p)
    a = w.cube_average(cube, q)
    b = w.cube_average(cube, -pp)
    if math.isinf(a) or math.isinf(b):
        return math.inf
    return a ** (1.0 / q) * b ** (1.0 / pp)


def apq_constant(w: Weight, p: float, q: float, cubes=None, n: int = 2) -> float:
    """Sup of the A_{p,q} product over the cube sweep."""
    cubes = sweep_cubes(n) if cubes is None else cubes
    return max(apq_product(w, p, q, c) for c in cubes)


def a1_s_constant(w: Weight, s: float, q: float, cubes=None, n: int = 2) -> float:
    """Sup over the sweep of ``mean(w^q) / inf(w)^q``: the condition ``w^s in A_{1,q/s}``."""
    if s < 1 or q < s:
        raise ValueError("need 1 <= s <= q")
    cubes = sweep_cubes(n) if cubes is None else cubes
    best = 0.0
    for c in cubes:
        low = w.cube_infimum(c)
        if low <= 0:
            return math.inf
        avg = w.cube_average(c, q)
        best = max(best, avg / low**q)
    return best


def ap_constant(w: Weight, r: float, cubes=None, n: int = 2) -> float:
    """Muckenhoupt ``A_r`` constant ``(mean w)(mean w^(-1/(r-1)))^(r-1)`` over the sweep."""
    cubes = sweep_cubes(n) if cubes is None else cubes
    return max(_ar_product(w, r, c) for c in cubes)


def weighted_norm(f: GridFunction, w: Weight | np.ndarray, p: float, weak: bool = False,
                  exponent: float = 1.0) -> float:
    """``L^p(w)`` norm of the samples of ``f`` with cell measure ``h^n``.

    ``w`` is a Weight (raised to ``exponent``) or an array of densities on the
    grid. The weak norm is ``sup_t t * w(|f| > t)^(1/p)``, taken over the
    sample values, which is exact for the piecewise-constant function.
    """
    dens = w.on_grid(f.box, f.resolution, exponent) if isinstance(w, Weight) else np.asarray(w)
    cell = f.h**f.n
    a = np.abs(f.values).ravel()
    m = dens.ravel() * cell
    if not weak:
        active = a > 0
        return float(np.sum(a[active] ** p * m[active]) ** (1.0 / p))
    order = np.argsort(-a, kind="stable")
    a_s, m_s = a[order], m[order]
    cum = np.cumsum(m_s)
    # ties share the measure of every sample at that value
    last = np.r_[a_s[1:] != a_s[:-1], True]
    idx = np.flatnonzero(last & (a_s > 0))
    if idx.size == 0:
        return 0.0
    return float(np.max(a_s[idx] * cum[idx] ** (1.0 / p)))


# --- power-weight windows ----------------------------------------------------------


def apq_window(n: int, p: float, q: float) -> tuple[float, float]:
    """Open interval of ``lam`` with ``|x|^lam in A_{p,q}``."""
    return -n / q, n / dual_exponent(p)


def rescaled_window(n: int, p: float, q: float, s: float) -> tuple[float, float]:
    """Open interval of ``lam`` with ``|x|^(lam s) in A_{p/s,q/s}``."""
    return -n / q, n / s - n / p


def rescaled_exponents(lam: float, p: float, q: float, s: float) -> tuple[float, float]:
    """Powers of ``|x|`` in the two averages of the rescaled A_{p/s,q/s} product."""
    if not s < p:
        raise ValueError("need s < p")
    return lam * q, -lam * p * s / (p - s)


def _shell(gamma: float, n: int, inner: float, outer: float) -> float:
    val, _ = integrate.quad(lambda r: r ** (gamma + n - 1), inner, outer, epsabs=0.0,
                            epsrel=1e-13)
    return sphere_area(n) * val


@dataclass
class WindowResult:
    lam: float
    finite: bool
    ratios: list[float]
    constants: list[float]
    expected: bool | None = None
    params: dict = field(default_factory=dict)

    @property
    def misclassified(self) -> bool:
        return self.expected is not None and self.expected != self.finite


def _outside_ball(gamma: float, n: int, half: float, rho: float) -> float:
    """Integral of ``|x|^gamma`` over ``[-half, half]^n`` minus the ball of radius ``rho <= half``.

    Each of the ``2n`` pyramids over a face ``x_j = half`` contributes
    ``half * int_face |y|^gamma g(rho/|y|) dS`` with
    ``g(u) = int_u^1 t^(gamma+n-1) dt``.
    """
    e = gamma + n

    def g(u):
        return -math.log(u) if abs(e) < 1e-14 else (1.0 - u**e) / e

    if n == 2:
        val, _ = integrate.quad(
            lambda y: (half * half + y * y) ** (gamma / 2)
            * g(rho / math.sqrt(half * half + y * y)),
            0.0, half, epsabs=0.0, epsrel=1e-12, limit=200,
        )
        return 2 * n * half * 2 * val
    val, _ = integrate.dblquad(
        lambda z, y: (half * half + y * y + z * z) ** (gamma / 2)
        * g(rho / math.sqrt(half * half + y * y + z * z)),
        0.0, half, 0.0, half, epsabs=0.0, epsrel=1e-11,
    )
    return 2 * n * half * 4 * val


def classify_power_weight(lam: float, p: float, q: float, s: float = 1.0, n: int = 2,
                          octaves: int = OCTAVES) -> WindowResult:
    """Decide whether ``|x|^(lam s) in A_{p/s,q/s}`` from the trend of truncated products.

    On the unit cube centred at 0 both averages of the product are taken
    with the ball of radius ``eps_j = 2^-j / 2`` removed, ``j = 0..octaves``.
    The increments over successive shells decay geometrically exactly when
    the power is integrable at the origin, so the weight is classified
    finite when every increment ratio of both averages is below
    ``1 - 1e-6``. Far from the origin the products tend to 1 and on centred
    cubes they are scale invariant, so the origin decides.

    ``constants`` lists the truncated products, one per ``eps_j``.
    """
    exps = rescaled_exponents(lam, p, q, s)
    powers = (1.0 / q, (p - s) / (p * s))
    radii = [0.5 * 2.0 ** (-j) for j in range(octaves + 1)]
    worst, partial = [], []
    finite = True
    for gamma in exps:
        shells = [_shell(gamma, n, radii[j + 1], radii[j]) for j in range(octaves)]
        ratios = [shells[j + 1] / shells[j] for j in range(octaves - 1)]
        worst.append(max(ratios))
        finite = finite and max(ratios) < FINITE_RATIO
        start = _outside_ball(gamma, n, 0.5, radii[0])
        partial.append(np.cumsum([start] + shells))
    constants = [
        float(partial[0][j] ** powers[0] * partial[1][j] ** powers[1]) for j in range(octaves + 1)
    ]
    return WindowResult(lam, finite, worst, constants, None, {"p": p, "q": q, "s": s, "n": n})


def lambda_grid(lo: float, hi: float, step: float = 0.125) -> list[float]:
    count = int(round((hi - lo) / step))
    return [lo + i * step for i in range(count + 1)]


def window_sweep(window: tuple[float, float], lams, p: float, q: float, s: float = 1.0,
                 n: int = 2) -> list[WindowResult]:
    """Classify every ``lam`` and attach the analytic verdict ``lo < lam < hi``."""
    out = []
    for lam in lams:
        res = classify_power_weight(lam, p, q, s, n)
        res.expected = window[0] < lam < window[1]
        out.append(res)
    return out


def write_sweep_csv(results: list[WindowResult], path: str | Path) -> None:
    """One row per ``lam``: exponents, verdicts and the truncated product per octave."""
    octaves = max((len(r.constants) for r in results), default=0)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["lambda", "p", "q", "s", "finite", "expected"]
                        + [f"octave_{j}" for j in range(octaves)])
        for r in results:
            writer.writerow(
                [repr(r.lam), repr(r.params["p"]), repr(r.params["q"]), repr(r.params["s"]),
                 int(r.finite), "" if r.expected is None else int(r.expected)]
                + [repr(c) for c in r.constants]
            )


def rescaling_check(w: Weight, p: float, q: float, s: float = 1.0, cubes=None,
                    n: int = 2) -> CheckReport:
    """Compare ``[w^s]_{A_{p/s,q/s}}`` with ``[w^q]_{A_{1+(q/s)/(p/s)'}}``.

    On every cube the second product is the first raised to ``q/s``, so the
    two constants must be finite together and satisfy that relation.
    """
    if not 1 <= s < p < q:
        raise ValueError("need 1 <= s < p < q")
    cubes = sweep_cubes(n) if cubes is None else cubes
    ws, wq = w.to_power(s), w.to_power(q)
    ps, qs = p / s, q / s
    r = 1.0 + qs / dual_exponent(ps)
    worst_rel = 0.0
    agree = True
    c1 = c2 = 0.0
    for c in cubes:
        a = apq_product(ws, ps, qs, c)
        b = _ar_product(wq, r, c)
        if math.isinf(a) or math.isinf(b):
            agree = agree and math.isinf(a) and math.isinf(b)
            c1 = c2 = math.inf
            continue
        c1, c2 = max(c1, a), max(c2, b)
        worst_rel = max(worst_rel, abs(b - a**qs) / max(b, 1e-300))
    ok = agree and (math.isinf(c1) or worst_rel < 1e-8)
    result = ResolutionResult(
        0, c1, worst_rel, None,
        {"rescaled_constant": c2, "finite_together": agree, "relation_power": qs},
    )
    return CheckReport(
        "weight-rescaling", "A_{p,q} rescaling identity",
        {"p": p, "q": q, "s": s, "lambda": w.lam if w.kind == "power" else None},
        [result], "pass" if ok else "fail", kind="consistency",
    )


def _ar_product(v: Weight, r: float, cube: Cube) -> float:
    a = v.cube_average(cube, 1.0)
    b = v.cube_average(cube, -1.0 / (r - 1.0))
    if math.isinf(a) or math.isinf(b):
        return math.inf
    return a * b ** (r - 1.0)
