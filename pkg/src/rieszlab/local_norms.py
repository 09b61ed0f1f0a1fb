"""Lorentz, weak-type and Luxemburg averages of sampled functions.

Samples are treated as simple functions: value ``v_i`` on a set of measure
``mu_i``. Lorentz quantities are then exact closed-form integrals over the
step distribution function, with no quadrature in the level variable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import Cube, GridFunction, ball_sample_mask, cube_sample_slices


@dataclass(frozen=True)
class LorentzIndex:
    p: float
    q: float

    def __post_init__(self):
        if not self.p > 1 or math.isinf(self.p):
            raise ValueError("Lorentz exponent p must lie in (1, inf)")
        if not self.q >= 1:
            raise ValueError("Lorentz exponent q must lie in [1, inf]")

    @property
    def weak(self) -> bool:
        return math.isinf(self.q)


@dataclass(frozen=True)
class YoungFunction:
    """``exp_power``: exp(t^q) - 1.  ``log_power``: t * log(1 + t)^(1/q)."""

    kind: str
    q: float

    def __post_init__(self):
        if self.kind not in ("exp_power", "log_power"):
            raise ValueError("kind must be exp_power or log_power")
        if not self.q > 1:
            raise ValueError("Young function parameter q must exceed 1")

    def __call__(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.kind == "exp_power":
            with np.errstate(over="ignore"):
                return np.expm1(t**self.q)
        return t * np.log1p(t) ** (1.0 / self.q)

    def associate(self) -> "YoungFunction":
        return YoungFunction("log_power" if self.kind == "exp_power" else "exp_power", self.q)


def distribution_steps(values, measures):
    """Distinct ``|values|`` in decreasing order with cumulative measures.

    Returns ``(levels, cum)`` where ``cum[j]`` is the measure of the set where
    ``|f| >= levels[j]``; only positive levels are kept.
    """
    a = np.abs(np.asarray(values, dtype=float)).ravel()
    mu = np.broadcast_to(np.asarray(measures, dtype=float), a.shape).ravel()
    keep = a > 0
    a, mu = a[keep], mu[keep]
    if a.size == 0:
        return np.empty(0), np.empty(0)
    order = np.argsort(-a, kind="stable")
    a, mu = a[order], mu[order]
    cum = np.cumsum(mu)
    last = np.r_[a[1:] != a[:-1], True]
    return a[last], cum[last]


def lorentz_global(values, measures, p: float, q: float) -> float:
    """Lorentz quasi-norm of the simple function ``sum v_i 1_{E_i}``, ``|E_i| = mu_i``.

    Uses ``(p * int_0^inf t^q lambda(t)^(q/p) dt/t)^(1/q)``; ``q = inf`` gives
    ``sup_t t * lambda(t)^(1/p)``.
    """
    idx = LorentzIndex(p, q)
    levels, cum = distribution_steps(values, measures)
    if levels.size == 0:
        return 0.0
    if idx.weak:
        return float(np.max(levels * cum ** (1.0 / p)))
    nxt = np.r_[levels[1:], 0.0]
    total = p * np.sum(cum ** (q / p) * (levels**q - nxt**q)) / q
    return float(total ** (1.0 / q))


def _cube_samples(f: GridFunction, region) -> tuple[np.ndarray, int]:
    """Samples of ``f`` in a cube, padded conceptually by out-of-box zeros."""
    if isinstance(region, Cube):
        slices, count = cube_sample_slices(f, region)
        return f.values[slices].ravel(), count
    centre, radius = region
    idx, mask, count = ball_sample_mask(f, centre, radius)
    block = f.values[np.ix_(*idx)]
    return block[mask].ravel(), count


def lorentz_average(f: GridFunction, region, p: float, q: float) -> float:
    """Normalized Lorentz average ``|Q|^(-1/p) ||f 1_Q||_{L^{p,q}}``.

    ``region`` is a :class:`Cube` or a ``(centre, radius)`` ball. Each lattice
    point carries measure ``1/count``, so ``|Q| = 1``.
    """
    vals, count = _cube_samples(f, region)
    if count == 0:
        return 0.0
    return lorentz_global(vals, 1.0 / count, p, q)


def luxemburg_values(values, measures, phi: YoungFunction, rtol: float = 1e-10) -> float:
    """Luxemburg norm ``inf{lam : sum mu_i phi(|v_i| / lam) <= 1}`` by bisection.

    ``measures`` are normalized so that they sum to the averaging volume 1.
    """
    a = np.abs(np.asarray(values, dtype=float)).ravel()
    mu = np.broadcast_to(np.asarray(measures, dtype=float), a.shape).ravel()
    if not np.any(a > 0):
        return 0.0

    def excess(lam: float) -> float:
        return float(np.sum(mu * phi(a / lam))) - 1.0

    top = float(np.max(a))
    lo, hi = top * 1e-3, top
    while excess(hi) > 0:
        hi *= 2.0
    while excess(lo) <= 0:
        lo /= 2.0
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if excess(mid) > 0:
            lo = mid
        else:
            hi = mid
    return hi


def luxemburg_average(f: GridFunction, region, phi: YoungFunction) -> float:
    vals, count = _cube_samples(f, region)
    if count == 0:
        return 0.0
    return luxemburg_values(vals, 1.0 / count, phi)


@dataclass(frozen=True)
class HolderResult:
    lhs: float
    rhs: float
    ratio: float


def holder_defect_values(f_vals, g_vals, measures, pairing) -> HolderResult:
    """Hölder comparison of ``mean |f g|`` with a product of dual averages.

    ``pairing`` is ``("orlicz", q)``, pairing L(log L)^(1/q) with exp L^q, or
    ``("lorentz", p, q)``, pairing L^{p,q} with L^{p',q'}.
    """
    f_vals = np.asarray(f_vals, dtype=float).ravel()
    g_vals = np.asarray(g_vals, dtype=float).ravel()
    mu = np.broadcast_to(np.asarray(measures, dtype=float), f_vals.shape).ravel()
    lhs = float(np.sum(mu * np.abs(f_vals * g_vals)))
    kind = pairing[0]
    if kind == "orlicz":
        q = pairing[1]
        rhs = luxemburg_values(f_vals, mu, YoungFunction("log_power", q)) * luxemburg_values(
            g_vals, mu, YoungFunction("exp_power", q)
        )
    elif kind == "lorentz":
        p, q = pairing[1], pairing[2]
        pd = p / (p - 1)
        qd = math.inf if q == 1 else (1.0 if math.isinf(q) else q / (q - 1))
        rhs = lorentz_global(f_vals, mu, p, q) * lorentz_global(g_vals, mu, pd, qd)
    else:
        raise ValueError(f"unknown pairing {pairing!r}")
    if rhs == 0:
        if lhs > 0:
            raise RuntimeError("dual averages vanish while the product does not")
        return HolderResult(lhs, rhs, 0.0)
    return HolderResult(lhs, rhs, lhs / rhs)


def holder_defect(f: GridFunction, g: GridFunction, region, pairing) -> HolderResult:
    fv, count = _cube_samples(f, region)
    gv, _ = _cube_samples(g, region)
    if count == 0:
        return HolderResult(0.0, 0.0, 0.0)
    # Out-of-box lattice points carry zeros; they change only the normalization.
    pad = count - fv.size
    fv = np.r_[fv, np.zeros(pad)]
    gv = np.r_[gv, np.zeros(pad)]
    return holder_defect_values(fv, gv, 1.0 / count, pairing)


def lorentz_constant_factor(p: float, q: float) -> float:
    """Lorentz average of the constant 1 on a unit-measure set: ``(p/q)^(1/q)``."""
    if math.isinf(q):
        return 1.0
    return (p / q) ** (1.0 / q)
