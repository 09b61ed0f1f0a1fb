"""Registry of executable checks, refinement studies and report output.

Each check binds one inequality to a computation on sampled corpus
functions. A check runs at several resolutions and the verdict is read off
the per-resolution results:

* ``documented``: the inequality has an explicit constant and must hold at
  every grid point within the carried quadrature band, and the band must
  shrink under refinement.
* ``empirical``: the constant is not explicit, so the sup ratio must be
  finite and stay within 10% (or decrease) between consecutive resolutions.
* ``negative``: the inequality is false; the verdict is ``fail`` when the
  ratio grows at every refinement.
* ``consistency``: finite sweeps that agree with an analytic statement.
"""

from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path
from typing import Callable

import numpy as np

from . import dyadic, grid, potentials, rough, sparse, weights
from .corpus import CORPUS, resolve_params
from .grid import Box, Cube, GridFunction
from .local_norms import YoungFunction, lorentz_average, luxemburg_average
from .reports import CheckReport, ResolutionResult
from .sphere import make_symbol, project_mean_zero, sphere_area, sphere_norm

STABILITY = 0.10
RATIO_FLOOR = 1e-12

THEOREMS = {
    "rough-pointwise-critical": "|T f| <= c ||Omega||_{L^{n,inf}} I_alpha(|grad f|)",
    "rough-pointwise-sparse": "|T f| <= c ||Omega||_{L^{r,r*}} sum_k I^{S_k}_{alpha,L^s}(|grad f|)",
    "rough-pointwise-llogl": "|T f| <= c ||Omega||_{L(log L)^{1/n'}} sum_k I^{S_k}_{alpha,L^n}(|grad f|)",
    "gradient-potential-pointwise": "|f| <= (1/omega_{n-1}) int |grad f(y)| |x-y|^{1-n} dy",
    "rough-maximal-sharp-difference": "|M_{Omega,alpha} f - M#_{Omega,alpha} f| <= (||Omega||_1/omega_{n-1}) M_{alpha-1} f",
    "sharp-maximal-three-branch": "M#_{Omega,alpha} f <= c ||Omega||_X M_{alpha,L^s}(|grad f|)",
    "spherical-maximal-pointwise": "S_{alpha-1} f <= c_n I_alpha(|grad f|)",
    "lorentz-poincare": "||f - f_Q||_{L^{p*,p}(Q)} <= C l(Q) (mean_Q |grad f|^p)^{1/p}",
    "trudinger": "||f - f_Q||_{exp L^{n'}(Q)} <= C (int_Q |grad f|^n)^{1/n}",
    "maximal-gradient-false": "M f <= c M_1(|grad f|) fails",
    "power-weight-sobolev-rough": "|x|^lam T: L^p -> L^q for alpha - n/p < lam < 1 + n/r' - n/p",
    "power-weight-sobolev-hypersingular": "|x|^lam T: L^p -> L^q for alpha - n/p < lam < 1 - n/p",
    "sparse-maximal-weighted": "||I^S_{alpha,L^s} f||_{L^p(w)} <= C ||M_{alpha,L^s} f||_{L^p(w)}",
    "sparse-sum-divergence": "sparse sums over nested cubes converge iff s < n/alpha",
}


class InvalidSpec(ValueError):
    """A check configuration outside the hypotheses of its theorem."""


def _require(ok: bool, spec: "CheckSpec", hypothesis: str) -> None:
    if not ok:
        raise InvalidSpec(f"{spec.check_id}: violates the hypothesis {hypothesis} "
                          f"of {spec.theorem}")


@dataclass(frozen=True)
class CheckSpec:
    check_id: str
    theorem: str
    params: dict
    resolutions: tuple[int, ...]
    constant: float | str = "empirical"
    kind: str = "empirical"
    expected: str = "pass"

    def validate(self) -> "CheckSpec":
        if self.check_id not in REGISTRY:
            raise InvalidSpec(f"unknown check {self.check_id!r}")
        if self.theorem not in THEOREMS:
            raise InvalidSpec(f"unknown theorem anchor {self.theorem!r}")
        if not self.resolutions:
            raise InvalidSpec(f"{self.check_id}: no resolutions given")
        for r in self.resolutions:
            if not grid.is_power_of_two(int(r)):
                raise InvalidSpec(f"{self.check_id}: resolution {r} is not a power of two")
        REGISTRY[self.check_id].validate(self)
        return self

    def with_resolutions(self, resolutions) -> "CheckSpec":
        return replace(self, resolutions=tuple(int(r) for r in resolutions))

    def to_json(self) -> dict:
        return {"check_id": self.check_id, "theorem": self.theorem, "params": self.params,
                "resolutions": list(self.resolutions), "constant": self.constant,
                "kind": self.kind, "expected": self.expected}


@dataclass(frozen=True)
class CheckDefinition:
    check_id: str
    theorem: str
    kind: str
    expected: str
    constant: float | str
    params: dict
    resolutions: tuple[int, ...]
    run: Callable[[CheckSpec, int], ResolutionResult]
    validate: Callable[[CheckSpec], None]
    summary: str = ""

    def spec(self, params: dict | None = None, resolutions=None) -> CheckSpec:
        merged = dict(self.params)
        merged.update(params or {})
        res = self.resolutions if resolutions is None else tuple(int(r) for r in resolutions)
        return CheckSpec(self.check_id, self.theorem, merged, res, self.constant, self.kind,
                         self.expected)


# --- shared inputs ---------------------------------------------------------------


def _freeze(obj):
    if isinstance(obj, dict):
        return tuple(sorted((k, _freeze(v)) for k, v in obj.items()))
    if isinstance(obj, (list, tuple)):
        return tuple(_freeze(v) for v in obj)
    return obj


def _thaw(obj):
    if isinstance(obj, tuple) and all(isinstance(v, tuple) and len(v) == 2 for v in obj):
        return {k: _thaw(v) for k, v in obj}
    return obj


def _entry(item) -> tuple[str, dict]:
    """Corpus or symbol entry given as ``"id"`` or ``["id", {params}]``."""
    if isinstance(item, str):
        return item, {}
    name, params = item
    return name, dict(params)


def _label(item) -> str:
    name, params = _entry(item)
    if not params:
        return name
    return name + "(" + ",".join(f"{k}={v}" for k, v in sorted(params.items())) + ")"


@lru_cache(maxsize=32)
def _sampled(name: str, params, res: int, n: int) -> GridFunction:
    return grid.sample(name, _thaw(params), resolution=res, n=n)


def sampled(item, res: int, n: int = 2) -> GridFunction:
    name, params = _entry(item)
    return _sampled(name, _freeze(params), res, n)


@lru_cache(maxsize=32)
def _grad_norm(name: str, params, res: int, n: int) -> GridFunction:
    return grid.gradient(_sampled(name, params, res, n)).magnitude()


def gradient_norm(item, res: int, n: int = 2) -> GridFunction:
    name, params = _entry(item)
    return _grad_norm(name, _freeze(params), res, n)


@lru_cache(maxsize=32)
def _symbol(name: str, params, n: int):
    sym = make_symbol(name, n, **_thaw(params))
    return sym if name == "one" else project_mean_zero(sym)


def symbol(item, n: int = 2):
    """Corpus symbol, projected to mean zero unless it is the constant one."""
    name, params = _entry(item)
    return _symbol(name, _freeze(params), n)


def sup_ratio(f: GridFunction, lhs: np.ndarray, rhs: np.ndarray) -> tuple[float, list]:
    """Sup of ``lhs / rhs`` and its location.

    Points where ``rhs`` is below ``RATIO_FLOOR`` times its maximum are
    excluded unless ``lhs`` is not negligible there, which gives ``inf``.
    """
    lhs = np.asarray(lhs, dtype=float).reshape(f.values.shape)
    rhs = np.asarray(rhs, dtype=float).reshape(f.values.shape)
    top = float(rhs.max(initial=0.0))
    if top <= 0:
        return (math.inf if lhs.max(initial=0.0) > 0 else 0.0), None
    active = rhs > RATIO_FLOOR * top
    lost = ~active & (lhs > RATIO_FLOOR * max(float(lhs.max(initial=0.0)), top))
    if lost.any():
        idx = np.unravel_index(int(np.argmax(np.where(lost, lhs, -1.0))), lhs.shape)
        return math.inf, f.point(idx).tolist()
    ratio = np.where(active, lhs / np.where(active, rhs, 1.0), 0.0)
    idx = np.unravel_index(int(np.argmax(ratio)), ratio.shape)
    return float(ratio[idx]), f.point(idx).tolist()


def _pairing_result(res: int, f: GridFunction, pairings: dict, locations: dict,
                    error_bound: float = 0.0) -> ResolutionResult:
    worst = max(pairings, key=lambda k: pairings[k])
    return ResolutionResult(res, pairings[worst], error_bound, locations[worst],
                            {"pairings": pairings, "worst_pairing": worst})


def interpolation_error(values: np.ndarray, exact: Callable[[np.ndarray], np.ndarray],
                        f: GridFunction) -> np.ndarray:
    """Nodal bound on ``|g - interpolant of its samples|``.

    The error is measured at cell centres, where the multilinear interpolant
    is the mean of the cell's corners, and each node receives twice the
    largest error of the cells around it.
    """
    n, h = f.n, f.h
    padded = np.pad(values, [(0, 1)] * n)
    corners = np.zeros(values.shape)
    for offset in np.ndindex(*(2,) * n):
        corners += padded[tuple(slice(o, o + values.shape[0]) for o in offset)]
    corners /= 2**n
    centres = f.points() + h / 2.0
    cell = np.abs(exact(centres) - corners)
    padded_cell = np.pad(cell, [(1, 0)] * n)
    node = np.zeros(values.shape)
    for offset in np.ndindex(*(2,) * n):
        node = np.maximum(node, padded_cell[tuple(slice(o, o + values.shape[0]) for o in offset)])
    return 2.0 * node


def _exact_value(item) -> Callable:
    name, params = _entry(item)
    merged = resolve_params(name, params)
    return lambda x: CORPUS[name].value(x, **merged)


def _exact_grad_norm(item) -> Callable:
    name, params = _entry(item)
    merged = resolve_params(name, params)
    return lambda x: np.sqrt(np.sum(CORPUS[name].gradient(x, **merged) ** 2, axis=-1))


def signed_average(f: GridFunction, q: Cube) -> float:
    """Mean of ``f`` over the lattice points of ``q``, zero outside the box."""
    slices, count = grid.cube_sample_slices(f, q)
    return float(np.sum(f.values[slices])) / count if count else 0.0


def _lists(params: dict, *keys):
    return [list(params[k]) if isinstance(params[k], (list, tuple)) else [params[k]]
            for k in keys]


# --- pointwise checks for the rough singular integral ---------------------------


def _validate_crit(spec: CheckSpec) -> None:
    n = spec.params.get("n", 2)
    (alphas,) = _lists(spec.params, "alphas")
    for a in alphas:
        _require(0 < a < n, spec, f"0 < alpha < n (alpha={a})")
    for item in spec.params["symbols"]:
        _require(_entry(item)[0] != "one", spec, "Omega has mean zero")


def _run_crit(spec: CheckSpec, res: int) -> ResolutionResult:
    n = spec.params.get("n", 2)
    pairings, locations = {}, {}
    for fitem in spec.params["functions"]:
        f = sampled(fitem, res, n)
        g = gradient_norm(fitem, res, n)
        for a in spec.params["alphas"]:
            pot = potentials.riesz_potential(g, a).values
            for oitem in spec.params["symbols"]:
                om = symbol(oitem, n)
                t = np.abs(rough.rough_singular(f, om, a).values)
                key = f"{_label(fitem)}/{_label(oitem)}/alpha={a}"
                pairings[key], locations[key] = sup_ratio(f, t, sphere_norm(om, "weak_n") * pot)
    return _pairing_result(res, f, pairings, locations)


def sparse_potential(g: GridFunction, alpha: float, s: float) -> np.ndarray:
    """``sum over the 2^n shifted grids`` of the sparse operator built from ``g``."""
    total = np.zeros(g.values.shape)
    for shift in dyadic.all_shifts(g.n):
        family = sparse.build_sparse_family(g, alpha, s, shift)
        total += sparse.sparse_operator(g, family)
    return total


def _sub_exponent(n: int, r: float) -> float:
    rp = r / (r - 1.0)
    return rp * n / (rp + n)


def _validate_sub(spec: CheckSpec) -> None:
    for case in spec.params["cases"]:
        n, r = case["n"], case["r"]
        _require(1 < r < n, spec, f"1 < r < n (r={r}, n={n})")
        s = _sub_exponent(n, r)
        if "s" in case:
            _require(abs(case["s"] - s) < 1e-12, spec, f"1/s = 1/n + 1/r' (s={case['s']})")
        for a in case["alphas"]:
            _require(0 < a < 1 + n * (r - 1.0) / r, spec, f"0 < alpha < 1 + n/r' (alpha={a})")
            _require(s < n / a, spec, f"s < n/alpha (alpha={a}, s={s:.6g})")


def _case_resolution(res: int, n: int) -> int:
    """Three-dimensional cases run at a quarter of the nominal resolution."""
    return res if n == 2 else max(16, res // 4)


def _run_sub(spec: CheckSpec, res: int) -> ResolutionResult:
    pairings, locations = {}, {}
    for case in spec.params["cases"]:
        n, r = case["n"], case["r"]
        s = _sub_exponent(n, r)
        cres = _case_resolution(res, n)
        for fitem in case["functions"]:
            f = sampled(fitem, cres, n)
            g = gradient_norm(fitem, cres, n)
            for a in case["alphas"]:
                rhs = sparse_potential(g, a, s)
                for oitem in case["symbols"]:
                    om = symbol(oitem, n)
                    t = np.abs(rough.rough_singular(f, om, a).values)
                    norm = sphere_norm(om, "Lr_rstar", r)
                    key = f"n={n}/r={r}/{_label(fitem)}/{_label(oitem)}/alpha={a}"
                    pairings[key], locations[key] = sup_ratio(f, t, norm * rhs)
    return _pairing_result(res, f, pairings, locations)


def _validate_end(spec: CheckSpec) -> None:
    for a in spec.params["alphas"]:
        _require(0 < a < 1, spec, f"0 < alpha < 1 (alpha={a})")


def _run_end(spec: CheckSpec, res: int) -> ResolutionResult:
    n = spec.params.get("n", 2)
    pairings, locations = {}, {}
    for fitem in spec.params["functions"]:
        f = sampled(fitem, res, n)
        g = gradient_norm(fitem, res, n)
        for a in spec.params["alphas"]:
            rhs = sparse_potential(g, a, float(n))
            for oitem in spec.params["symbols"]:
                om = symbol(oitem, n)
                t = np.abs(rough.rough_singular(f, om, a).values)
                key = f"{_label(fitem)}/{_label(oitem)}/alpha={a}"
                pairings[key], locations[key] = sup_ratio(f, t, sphere_norm(om, "llogl") * rhs)
    return _pairing_result(res, f, pairings, locations)


# --- exact-constant checks ---------------------------------------------------------


def _validate_none(spec: CheckSpec) -> None:
    return None


def _run_sob(spec: CheckSpec, res: int) -> ResolutionResult:
    n = spec.params.get("n", 2)
    omega = sphere_area(n)
    violations, worst, band_max, margin = 0, 0.0, 0.0, math.inf
    pairings, locations = {}, {}
    for fitem in spec.params["functions"]:
        f = sampled(fitem, res, n)
        g = gradient_norm(fitem, res, n)
        w = potentials.riesz_weights(n, 1.0, f.h, res - 1, normalized=False)
        rhs = potentials.kernels.convolve(g.values, w) / omega
        err = interpolation_error(g.values, _exact_grad_norm(fitem), f)
        band = potentials.kernels.convolve(err, w) / omega
        lhs = np.abs(f.values)
        slack = 1e-12 * max(float(lhs.max()), 1.0)
        violations += int(np.sum(lhs > rhs + band + slack))
        margin = min(margin, float(np.min(rhs + band - lhs)))
        band_max = max(band_max, float(band.max()))
        key = _label(fitem)
        pairings[key], locations[key] = sup_ratio(f, lhs, rhs)
    out = _pairing_result(res, f, pairings, locations, band_max)
    out.extra.update({"violations": violations, "margin": margin, "bound": 1.0})
    return out


_STACKS: dict = {}


def sharp_stacks(item, oitem, res: int, n: int, stride: int = 1):
    """Per-radius stacks at ``alpha = 1`` of the rough, sharp and ball maximal averages.

    Multiplying row ``j`` by ``t_j^(alpha-1)`` gives the stacks for any
    ``alpha``. Only every ``stride``-th grid point along each axis is kept.
    """
    key = (_freeze(_entry(item)), _freeze(_entry(oitem)), res, n, stride)
    if key in _STACKS:
        return _STACKS[key]
    f = sampled(item, res, n)
    om = symbol(oitem, n)
    axes = [np.arange(0, res, stride)] * n
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    _, sharp_stack, _, radii = rough.sharp_rough_maximal(f, om, 1.0, points=pts, per_radius=True)
    _, plain = rough.rough_maximal(f, om, 1.0, per_radius=True)
    sel = (slice(None),) + tuple(pts.T)
    _, balls = potentials.ball_fractional_maximal(f, 0.0, radii)
    value = {"points": pts, "radii": np.array(radii), "sharp": sharp_stack,
             "plain": plain[sel], "ball": balls[sel]}
    if len(_STACKS) > 24:
        _STACKS.clear()
    _STACKS[key] = value
    return value


def _stride(spec: CheckSpec, res: int) -> int:
    return max(1, res // int(spec.params.get("point_resolution", res)))


def _validate_maxsharp(spec: CheckSpec) -> None:
    n = spec.params.get("n", 2)
    for a in spec.params["alphas"]:
        _require(1 <= a < n, spec, f"1 <= alpha < n (alpha={a})")


def _run_maxsharp(spec: CheckSpec, res: int) -> ResolutionResult:
    n = spec.params.get("n", 2)
    omega = sphere_area(n)
    stride = _stride(spec, res)
    violations, band_max, margin = 0, 0.0, math.inf
    pairings, locations = {}, {}
    for fitem in spec.params["functions"]:
        f = sampled(fitem, res, n)
        e = float(interpolation_error(f.values, _exact_value(fitem), f).max())
        for oitem in spec.params["symbols"]:
            om = symbol(oitem, n)
            factor = om.l1() / omega
            st = sharp_stacks(fitem, oitem, res, n, stride)
            for a in spec.params["alphas"]:
                scale = (st["radii"] ** (a - 1.0))[:, None]
                diff = np.abs((scale * st["plain"]).max(0) - (scale * st["sharp"]).max(0))
                rhs = factor * (scale * st["ball"]).max(0)
                band = factor * 3.0 * e * float(scale.max())
                slack = 1e-12 * max(float(rhs.max()), 1.0)
                violations += int(np.sum(diff > rhs + band + slack))
                margin = min(margin, float(np.min(rhs + band - diff)))
                band_max = max(band_max, band)
                ratio = np.where(rhs > 0, diff / np.where(rhs > 0, rhs, 1.0), 0.0)
                j = int(np.argmax(ratio))
                key = f"{_label(fitem)}/{_label(oitem)}/alpha={a}"
                pairings[key] = float(ratio[j])
                locations[key] = f.point(st["points"][j]).tolist()
    out = _pairing_result(res, f, pairings, locations, band_max)
    out.extra.update({"violations": violations, "margin": margin, "bound": 1.0,
                      "point_stride": stride})
    return out


def _validate_maxtrio(spec: CheckSpec) -> None:
    n = spec.params.get("n", 2)
    for branch in spec.params["branches"]:
        for a in branch["alphas"]:
            _require(0 < a < n, spec, f"0 < alpha < n (alpha={a})")
            if branch["norm"] == "Lr_rstar":
                r = branch["r"]
                _require(1 < r < n, spec, f"1 < r < n (r={r})")
                _require(a < 1 + n * (r - 1.0) / r, spec, f"alpha < 1 + n/r' (alpha={a})")
            if branch["norm"] == "llogl":
                _require(a < 1, spec, f"alpha < 1 in the L log L branch (alpha={a})")


def _branch_power(branch: dict, n: int) -> float:
    if branch["norm"] == "weak_n":
        return 1.0
    if branch["norm"] == "Lr_rstar":
        return _sub_exponent(n, branch["r"])
    return float(n)


def _run_maxtrio(spec: CheckSpec, res: int) -> ResolutionResult:
    n = spec.params.get("n", 2)
    stride = _stride(spec, res)
    pairings, locations = {}, {}
    for branch in spec.params["branches"]:
        s = _branch_power(branch, n)
        for fitem in spec.params["functions"]:
            f = sampled(fitem, res, n)
            g = gradient_norm(fitem, res, n)
            om = symbol(branch["symbol"], n)
            norm = sphere_norm(om, branch["norm"], branch.get("r"))
            st = sharp_stacks(fitem, branch["symbol"], res, n, stride)
            for a in branch["alphas"]:
                scale = (st["radii"] ** (a - 1.0))[:, None]
                lhs = (scale * st["sharp"]).max(0)
                rhs = potentials.fractional_maximal(g, a, s).values[tuple(st["points"].T)]
                ratio = np.where(rhs > 0, lhs / np.where(rhs > 0, rhs * norm, 1.0), 0.0)
                j = int(np.argmax(ratio))
                key = f"{branch['norm']}/{_label(fitem)}/{_label(branch['symbol'])}/alpha={a}"
                pairings[key] = float(ratio[j])
                locations[key] = f.point(st["points"][j]).tolist()
    out = _pairing_result(res, f, pairings, locations)
    out.extra["point_stride"] = stride
    return out


def _validate_sph(spec: CheckSpec) -> None:
    n = spec.params.get("n", 2)
    for a in spec.params["alphas"]:
        _require(1 <= a < n, spec, f"1 <= alpha < n (alpha={a})")


def _run_sph(spec: CheckSpec, res: int) -> ResolutionResult:
    n = spec.params.get("n", 2)
    omega = sphere_area(n)
    pairings, locations = {}, {}
    for fitem in spec.params["functions"]:
        f = sampled(fitem, res, n)
        g = gradient_norm(fitem, res, n)
        for a in spec.params["alphas"]:
            lhs = rough.spherical_maximal(f, a - 1.0).values
            rhs = potentials.riesz_potential(g, a, normalized=False).values / omega
            key = f"{_label(fitem)}/alpha={a}"
            pairings[key], locations[key] = sup_ratio(f, lhs, rhs)
    return _pairing_result(res, f, pairings, locations)


# --- Poincare-Sobolev checks -------------------------------------------------------


def random_cubes(n: int, count: int, seed: int, centre_range: float = 0.75,
                 sides=(0.25, 1.0)) -> list[Cube]:
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        side = float(rng.uniform(*sides))
        centre = rng.uniform(-centre_range, centre_range, size=n)
        out.append(Cube(tuple(float(c - side / 2) for c in centre), side))
    return out


def _cube_ratios(spec: CheckSpec, res: int, numerator, denominator) -> ResolutionResult:
    n = spec.params.get("n", 2)
    cubes = random_cubes(n, spec.params["cubes"], spec.params["seed"])
    pairings, locations = {}, {}
    for fitem in spec.params["functions"]:
        f = sampled(fitem, res, n)
        g = gradient_norm(fitem, res, n)
        for key, p in spec.params.get("exponents", {"": None}).items():
            best, where = 0.0, None
            for q in cubes:
                dev = f.with_values(f.values - signed_average(f, q))
                num, den = numerator(dev, q, p, n), denominator(g, q, p, n)
                if den <= 0:
                    if num > RATIO_FLOOR:
                        best, where = math.inf, list(q.lower)
                    continue
                if num / den > best:
                    best, where = num / den, list(q.lower)
            label = f"{_label(fitem)}/{key}" if key else _label(fitem)
            pairings[label], locations[label] = best, where
    out = _pairing_result(res, f, pairings, locations)
    out.extra["cubes"] = len(cubes)
    return out


def _validate_lor(spec: CheckSpec) -> None:
    n = spec.params.get("n", 2)
    for p in spec.params["exponents"].values():
        _require(1 <= p < n, spec, f"1 <= p < n (p={p})")


def _lorentz_numerator(dev, q, p, n):
    return lorentz_average(dev, q, n * p / (n - p), p)


def _lorentz_denominator(g, q, p, n):
    return q.side * grid.cell_average(g, q, p)


def _run_lor(spec: CheckSpec, res: int) -> ResolutionResult:
    return _cube_ratios(spec, res, _lorentz_numerator, _lorentz_denominator)


def _trudinger_numerator(dev, q, p, n):
    return luxemburg_average(dev, q, YoungFunction("exp_power", n / (n - 1.0)))


def _trudinger_denominator(g, q, p, n):
    return q.side * grid.cell_average(g, q, float(n))


def _run_tru(spec: CheckSpec, res: int) -> ResolutionResult:
    return _cube_ratios(spec, res, _trudinger_numerator, _trudinger_denominator)


# --- the false maximal inequality -----------------------------------------------


def _run_negmax(spec: CheckSpec, res: int) -> ResolutionResult:
    n = spec.params.get("n", 2)
    params = dict(spec.params["function_params"])
    params["delta"] = spec.params["delta_cells"] * 4.0 / res
    f = sampled(["log_power", params], res, n)
    g = gradient_norm(["log_power", params], res, n)
    lhs = potentials.fractional_maximal(f, 0.0).values
    rhs = potentials.fractional_maximal(g, 1.0).values
    ratio, loc = sup_ratio(f, lhs, rhs)
    return ResolutionResult(res, ratio, 0.0, loc, {"delta": params["delta"],
                                                   "sup_f": float(f.values.max())})


# --- power weights ---------------------------------------------------------------


_SWEEPS: dict = {}


def _window_sweep(spec: CheckSpec, window, p, q, s, n):
    step = spec.params.get("step", 0.125)
    pad = spec.params.get("pad", 0.5)
    lo = math.floor((window[0] - pad) / step) * step
    hi = math.ceil((window[1] + pad) / step) * step
    key = (window, p, q, s, n, step, lo, hi)
    if key not in _SWEEPS:
        _SWEEPS[key] = weights.window_sweep(window, weights.lambda_grid(lo, hi, step), p, q, s, n)
    return _SWEEPS[key]


def _weight_exponents(spec: CheckSpec):
    prm = spec.params
    n, a, p = prm.get("n", 2), prm["alpha"], prm["p"]
    q = 1.0 / (1.0 / p - a / n)
    if "r" in prm:
        r = prm["r"]
        s = _sub_exponent(n, r)
        window = (a - n / p, 1 + n * (r - 1.0) / r - n / p)
    else:
        s = float(n)
        window = (a - n / p, 1 - n / p)
    return n, a, p, q, s, window


def _validate_pow(spec: CheckSpec) -> None:
    n, a, p, q, s, window = _weight_exponents(spec)
    if "r" in spec.params:
        r = spec.params["r"]
        _require(1 < r < n, spec, f"1 < r < n (r={r})")
        _require(0 < a < 1 + n * (r - 1.0) / r, spec, f"0 < alpha < 1 + n/r' (alpha={a})")
        _require(s < p < n / a, spec, f"r'n/(r'+n) < p < n/alpha (p={p})")
    else:
        _require(0 < a < 1, spec, f"0 < alpha < 1 (alpha={a})")
        _require(n < p < n / a, spec, f"n < p < n/alpha (p={p})")
    for lam in spec.params["lambdas"]:
        _require(window[0] < lam < window[1], spec,
                 f"{window[0]:.6g} < lambda < {window[1]:.6g} (lambda={lam})")


def _run_pow(spec: CheckSpec, res: int) -> ResolutionResult:
    n, a, p, q, s, window = _weight_exponents(spec)
    sweep = _window_sweep(spec, window, p, q, s, n)
    analytic = weights.rescaled_window(n, p, q, s)
    fitem, oitem = spec.params["function"], spec.params["symbol"]
    f = sampled(fitem, res, n)
    g = gradient_norm(fitem, res, n)
    t = rough.rough_singular(f, symbol(oitem, n), a)
    ratios = {}
    for lam in spec.params["lambdas"]:
        w = weights.Weight.power(lam)
        lhs = weights.weighted_norm(t, w, q, exponent=q)
        rhs = weights.weighted_norm(g, w, p, exponent=p)
        ratios[f"lambda={lam}"] = lhs / rhs
    worst = max(ratios, key=lambda k: ratios[k])
    return ResolutionResult(res, ratios[worst], 0.0, None, {
        "pairings": ratios,
        "worst_pairing": worst,
        "exponents": {"p": p, "q": q, "s": s},
        "window": list(window),
        "window_gap": max(abs(window[0] - analytic[0]), abs(window[1] - analytic[1])),
        "lambdas_swept": len(sweep),
        "misclassified": [r.lam for r in sweep if r.misclassified],
    })


def _validate_cmp(spec: CheckSpec) -> None:
    n = spec.params.get("n", 2)
    a, s = spec.params["alpha"], spec.params["s"]
    _require(0 < a < n and 1 <= s < n / a, spec, f"1 <= s < n/alpha (alpha={a}, s={s})")
    for lam in spec.params["lambdas"]:
        _require(lam > -n, spec, f"power weight in A_infinity, lambda > -n (lambda={lam})")


def _run_cmp(spec: CheckSpec, res: int) -> ResolutionResult:
    n = spec.params.get("n", 2)
    a, s = spec.params["alpha"], spec.params["s"]
    pairings, locations = {}, {}
    for fitem in spec.params["functions"]:
        f = sampled(fitem, res, n)
        family = sparse.build_sparse_family(f, a, s, (0,) * n)
        lhs = f.with_values(sparse.sparse_operator(f, family))
        rhs = potentials.fractional_maximal(f, a, s)
        for p in spec.params["exponents"]:
            for lam in spec.params["lambdas"]:
                w = weights.Weight.power(lam)
                key = f"{_label(fitem)}/p={p}/lambda={lam}"
                pairings[key] = weights.weighted_norm(lhs, w, p) / weights.weighted_norm(rhs, w, p)
                locations[key] = None
    return _pairing_result(res, f, pairings, locations)


# --- divergence example ----------------------------------------------------------


def nested_cube_sum(n: int, alpha: float, s: float, levels: int) -> tuple[float, float]:
    """Sparse sum at 0 over ``[0, 2^k)^n``, ``k = 1..levels``, of the indicator of ``[0,1)^n``.

    Returns the computed value and the partial geometric series.
    """
    res = 2**levels
    box = Box((0.0,) * n, float(res))
    f = grid.sample("cube_indicator", {"lower": 0.0, "upper": 1.0}, box, res, n=n,
                    enforce_margin=False)
    cubes = {((0,) * n, k): np.zeros((1, n), dtype=np.int64) for k in range(1, levels + 1)}
    value = float(potentials.sparse_sum(f, alpha, s, cubes)[(0,) * n])
    ratio = 2.0 ** (alpha - n / s)
    series = math.fsum(ratio**k for k in range(1, levels + 1))
    return value, series


def _run_div(spec: CheckSpec, res: int) -> ResolutionResult:
    n = spec.params.get("n", 2)
    levels = int(round(math.log2(res)))
    out, worst = {}, 0.0
    for case in spec.params["cases"]:
        value, series = nested_cube_sum(n, case["alpha"], case["s"], levels)
        label = f"alpha={case['alpha']}/s={case['s']}"
        out[label] = {"sum": value, "series": series,
                      "convergent": case["s"] < n / case["alpha"]}
        worst = max(worst, abs(value - series))
    first = out[next(iter(out))]["sum"]
    return ResolutionResult(res, first, worst, [0.0] * n, {"levels": levels, "cases": out})


# --- verdicts ---------------------------------------------------------------------


def drift(series: list[float]) -> float:
    """Largest ``|c_{k+1} / c_k - 1|`` over consecutive resolutions."""
    worst = 0.0
    for x, y in zip(series, series[1:]):
        if not (math.isfinite(x) and math.isfinite(y)) or x <= 0:
            return math.inf
        worst = max(worst, abs(y / x - 1.0))
    return worst


def refinement_stable(series: list[float], tol: float = STABILITY) -> bool:
    """Finite, and each refinement at most ``tol`` above the previous value."""
    if not all(math.isfinite(x) for x in series):
        return False
    return all(y <= x * (1.0 + tol) for x, y in zip(series, series[1:]))


def _pairing_series(results: list[ResolutionResult]) -> dict[str, list[float]]:
    keys = results[0].extra.get("pairings", {}).keys()
    return {k: [r.extra["pairings"][k] for r in results] for k in keys}


def _verdict_empirical(spec, results, notes) -> str:
    series = _pairing_series(results) or {"constant": [r.constant for r in results]}
    unstable = [k for k, v in series.items() if not refinement_stable(v)]
    if len(results) < 2:
        notes.append("a single resolution cannot show refinement stability")
        return "inconclusive"
    if unstable:
        notes.append("unstable under refinement: " + ", ".join(unstable))
        return "fail"
    return "pass"


def _verdict_documented(spec, results, notes) -> str:
    if any(r.extra["violations"] for r in results):
        notes.append("the inequality fails outside the quadrature band")
        return "fail"
    bands = [r.error_bound for r in results]
    if any(y >= x for x, y in zip(bands, bands[1:])):
        notes.append("the quadrature band does not shrink under refinement")
        return "fail"
    return "pass"


def _verdict_negative(spec, results, notes) -> str:
    series = [r.constant for r in results]
    if len(series) >= 2 and all(y > x for x, y in zip(series, series[1:])):
        notes.append("the ratio grows at every refinement, so no constant works")
        return "fail"
    notes.append("no monotone growth observed")
    return "inconclusive"


def _verdict_pow(spec, results, notes) -> str:
    if any(r.extra["misclassified"] for r in results):
        notes.append("the sweep misclassifies some exponents")
        return "fail"
    if any(r.extra["window_gap"] > 1e-12 for r in results):
        notes.append("the window does not match the rescaled weight window")
        return "fail"
    return _verdict_empirical(spec, results, notes)


def _verdict_div(spec, results, notes) -> str:
    if any(r.error_bound > spec.params.get("tolerance", 1e-9) for r in results):
        notes.append("sparse sums disagree with the geometric series")
        return "fail"
    n = spec.params.get("n", 2)
    for case in spec.params["cases"]:
        label = f"alpha={case['alpha']}/s={case['s']}"
        sums = [r.extra["cases"][label]["sum"] for r in results]
        if case["s"] < n / case["alpha"]:
            limit = 1.0 / (2.0 ** (n / case["s"] - case["alpha"]) - 1.0)
            gaps = [limit - x for x in sums]
            if not all(y < x for x, y in zip(gaps, gaps[1:])):
                notes.append(f"{label}: partial sums do not approach the limit")
                return "fail"
        else:
            slopes = [(y - x) / (ry.extra["levels"] - rx.extra["levels"])
                      for x, y, rx, ry in zip(sums, sums[1:], results, results[1:])]
            if not all(s >= 1.0 - 1e-9 for s in slopes):
                notes.append(f"{label}: partial sums do not grow without bound")
                return "fail"
    return "pass"


VERDICTS = {
    "empirical": _verdict_empirical,
    "documented": _verdict_documented,
    "negative": _verdict_negative,
    "consistency": _verdict_empirical,
}


# --- registry ---------------------------------------------------------------------


def _define(check_id, theorem, kind, expected, constant, params, resolutions, run, validate,
            summary, verdict=None) -> CheckDefinition:
    d = CheckDefinition(check_id, theorem, kind, expected, constant, params, tuple(resolutions),
                        run, validate, summary)
    if verdict is not None:
        _CUSTOM_VERDICTS[check_id] = verdict
    return d


_CUSTOM_VERDICTS: dict[str, Callable] = {}
_FUNCTIONS = ["bump", "dipole"]

REGISTRY: dict[str, CheckDefinition] = {d.check_id: d for d in [
    _define("PW-CRIT", "rough-pointwise-critical", "empirical", "pass", "empirical",
            {"n": 2, "alphas": [0.5, 1.0, 1.5], "symbols": ["cos1", "sign", "weak_n"],
             "functions": _FUNCTIONS},
            (128, 256), _run_crit, _validate_crit,
            "|T f| against the weak-norm of Omega times I_alpha(|grad f|)"),
    _define("PW-SUB", "rough-pointwise-sparse", "empirical", "pass", "empirical",
            {"cases": [
                {"n": 2, "r": 1.5, "alphas": [0.5, 1.0, 1.5], "symbols": ["sign", "power"],
                 "functions": _FUNCTIONS},
                {"n": 3, "r": 2.0, "alphas": [1.0], "symbols": [["power", {"r": 2.0}]],
                 "functions": ["bump"]},
            ]},
            (128, 256), _run_sub, _validate_sub,
            "|T f| against the sum of L^s sparse potentials of |grad f| over all shifts"),
    _define("PW-END", "rough-pointwise-llogl", "empirical", "pass", "empirical",
            {"n": 2, "alphas": [0.25, 0.5, 0.75], "symbols": ["llogl"], "functions": _FUNCTIONS},
            (128, 256), _run_end, _validate_end,
            "hypersingular |T f| against L^n sparse potentials of |grad f|"),
    _define("PW-SOB", "gradient-potential-pointwise", "documented", "pass", 1.0,
            {"n": 2, "functions": ["bump", "dipole", "tensor_bump"]},
            (128, 256), _run_sob, _validate_none,
            "|f| against the unnormalized first-order potential of |grad f| over omega_{n-1}"),
    _define("PW-MAXSHARP", "rough-maximal-sharp-difference", "documented", "pass", 1.0,
            {"n": 2, "alphas": [1.0, 1.5], "symbols": ["one", "power"],
             "functions": _FUNCTIONS},
            (128, 256), _run_maxsharp, _validate_maxsharp,
            "difference of the rough and sharp rough maximal functions"),
    _define("PW-MAXTRIO", "sharp-maximal-three-branch", "empirical", "pass", "empirical",
            {"n": 2, "functions": _FUNCTIONS, "branches": [
                {"norm": "weak_n", "symbol": "weak_n", "alphas": [0.5, 1.0, 1.5]},
                {"norm": "Lr_rstar", "symbol": "power", "r": 1.5, "alphas": [0.5, 1.0, 1.5]},
                {"norm": "llogl", "symbol": "llogl", "alphas": [0.5]},
            ]},
            (128, 256), _run_maxtrio, _validate_maxtrio,
            "sharp rough maximal function against L^s fractional maximal functions of |grad f|"),
    _define("PW-SPH", "spherical-maximal-pointwise", "empirical", "pass", "empirical",
            {"n": 2, "alphas": [1.0, 1.5], "functions": _FUNCTIONS},
            (128, 256), _run_sph, _validate_sph,
            "fractional spherical maximal function against I_alpha(|grad f|)"),
    _define("PS-LOR", "lorentz-poincare", "empirical", "pass", "empirical",
            {"n": 2, "functions": _FUNCTIONS, "exponents": {"p=1": 1.0, "p=1.5": 1.5},
             "cubes": 48, "seed": 20240611},
            (128, 256), _run_lor, _validate_lor,
            "Lorentz oscillation on random cubes against gradient averages"),
    _define("PS-TRU", "trudinger", "empirical", "pass", "empirical",
            {"n": 2, "functions": _FUNCTIONS, "cubes": 48, "seed": 20240611},
            (128, 256), _run_tru, _validate_none,
            "exponential Orlicz oscillation on random cubes against the L^n gradient norm"),
    _define("NEG-MAX", "maximal-gradient-false", "negative", "fail", "empirical",
            {"n": 2, "function_params": {"exponent": 0.45}, "delta_cells": 4},
            (64, 128, 256), _run_negmax, _validate_none,
            "M f against M_1(|grad f|) on a truncated log-power function"),
    _define("W-POW1", "power-weight-sobolev-rough", "consistency", "pass", "empirical",
            {"n": 2, "r": 1.5, "alpha": 1.0, "p": 1.5, "lambdas": [-0.25, 0.0, 0.25],
             "function": "bump", "symbol": "power", "step": 0.125, "pad": 0.5},
            (128, 256), _run_pow, _validate_pow,
            "power-weight window sweep and weighted norm ratios, alpha >= 1",
            _verdict_pow),
    _define("W-POW2", "power-weight-sobolev-hypersingular", "consistency", "pass", "empirical",
            {"n": 2, "alpha": 0.5, "p": 3.0, "lambdas": [-0.125, 0.0, 0.25],
             "function": "bump", "symbol": "llogl", "step": 0.125, "pad": 0.5},
            (128, 256), _run_pow, _validate_pow,
            "power-weight window sweep and weighted norm ratios, alpha < 1",
            _verdict_pow),
    _define("W-CMP", "sparse-maximal-weighted", "empirical", "pass", "empirical",
            {"n": 2, "alpha": 1.0, "s": 1.2, "exponents": [1.0, 2.0],
             "lambdas": [-1.0, 0.0, 1.0], "functions": ["bump", ["bump", {"center": [0.3, -0.2]}]]},
            (128, 256), _run_cmp, _validate_cmp,
            "weighted norms of a sparse operator against the L^s fractional maximal function"),
    _define("DIV-EX", "sparse-sum-divergence", "consistency", "pass", "empirical",
            {"n": 2, "cases": [{"alpha": 1.0, "s": 1.0}, {"alpha": 1.0, "s": 2.0}],
             "tolerance": 1e-9},
            (16, 32, 64, 128), _run_div, _validate_none,
            "sparse sums over nested cubes against the geometric series",
            _verdict_div),
]}


# --- running ----------------------------------------------------------------------


def default_spec(check_id: str, params: dict | None = None, resolutions=None) -> CheckSpec:
    if check_id not in REGISTRY:
        raise InvalidSpec(f"unknown check {check_id!r}")
    return REGISTRY[check_id].spec(params, resolutions)


def run_check(spec: CheckSpec) -> CheckReport:
    """Validate ``spec``, run it at every resolution and assign the verdict."""
    spec.validate()
    definition = REGISTRY[spec.check_id]
    start = time.perf_counter()
    results = [definition.run(spec, int(res)) for res in spec.resolutions]
    notes: list[str] = []
    decide = _CUSTOM_VERDICTS.get(spec.check_id, VERDICTS[spec.kind])
    verdict = decide(spec, results, notes)
    if spec.kind in ("empirical", "consistency") and len(results) > 1:
        series = _pairing_series(results) or {"constant": [r.constant for r in results]}
        notes.append(f"largest refinement drift {max(drift(v) for v in series.values()):.4f}")
    return CheckReport(spec.check_id, spec.theorem, dict(spec.params), results, verdict,
                       spec.expected, spec.kind, notes, time.perf_counter() - start)


def refinement_study(spec: CheckSpec, resolutions) -> CheckReport:
    """Run ``spec`` at ``resolutions`` and fit ``log constant`` against ``log res``.

    The fitted slope is stored on each result and summarized in the notes.
    """
    report = run_check(spec.with_resolutions(resolutions))
    pts = [(math.log(r.res), math.log(r.constant)) for r in report.per_resolution
           if r.constant is not None and math.isfinite(r.constant) and r.constant > 0]
    if len(pts) >= 2:
        x, y = np.array(pts).T
        slope = float(np.polyfit(x, y, 1)[0])
        report.notes.append(f"log-log refinement slope {slope:.4f}")
        for r in report.per_resolution:
            r.extra["trend_slope"] = slope
    return report


def load_config(path: str | Path) -> dict:
    """JSON overrides: ``{"resolutions": [...], "checks": {id: {"params", "resolutions"}}}``."""
    cfg = json.loads(Path(path).read_text())
    unknown = set(cfg) - {"resolutions", "checks"}
    if unknown:
        raise InvalidSpec(f"unknown config keys {sorted(unknown)}")
    for cid in cfg.get("checks", {}):
        if cid not in REGISTRY:
            raise InvalidSpec(f"config names unknown check {cid!r}")
    return cfg


def build_specs(ids, config: dict | None = None, resolutions=None) -> list[CheckSpec]:
    """Specs for ``ids`` with config overrides, then explicit ``resolutions`` on top."""
    config = config or {}
    specs = []
    for cid in ids:
        over = config.get("checks", {}).get(cid, {})
        res = over.get("resolutions", config.get("resolutions"))
        if resolutions is not None:
            res = resolutions
        specs.append(default_spec(cid, over.get("params"), res).validate())
    return specs


def _run_one(spec: CheckSpec) -> CheckReport:
    return run_check(spec)


def run_checks(specs: list[CheckSpec], jobs: int = 1) -> list[CheckReport]:
    """Run checks in order; with ``jobs > 1`` they run in worker processes."""
    if jobs <= 1 or len(specs) <= 1:
        return [run_check(s) for s in specs]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_one, specs))


def reports_json(reports: list[CheckReport]) -> str:
    return json.dumps([r.to_json() for r in reports], indent=2, sort_keys=True) + "\n"


def write_json(reports: list[CheckReport], path: str | Path) -> None:
    Path(path).write_text(reports_json(reports))


CSV_COLUMNS = ["check_id", "theorem", "kind", "verdict", "expected", "res", "constant",
               "error_bound", "lhs_sup_location"]


def write_csv(reports: list[CheckReport], path: str | Path) -> None:
    """One row per check and resolution."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for rep in reports:
            for r in rep.per_resolution:
                row = r.to_json()
                loc = row["lhs_sup_location"]
                writer.writerow([rep.check_id, rep.theorem, rep.kind, rep.verdict, rep.expected,
                                 row["res"], repr(row["constant"]), repr(row["error_bound"]),
                                 "" if loc is None else " ".join(repr(v) for v in loc)])
