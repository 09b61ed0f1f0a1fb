"""Built-in test-function corpus.

Every entry maps points of shape ``(..., n)`` to values, and most also
provide an analytic gradient. Parameters are passed as keyword arguments
and validated by the entry itself.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

ValueFn = Callable[..., np.ndarray]


@dataclass(frozen=True)
class CorpusEntry:
    name: str
    value: ValueFn
    gradient: ValueFn | None
    defaults: dict
    description: str


def _center(x: np.ndarray, center) -> np.ndarray:
    if center is None:
        return x
    return x - np.asarray(center, dtype=float)


def _smooth_step(t: np.ndarray) -> np.ndarray:
    """C-infinity step: 0 for t <= 0, 1 for t >= 1."""
    t = np.clip(t, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        a = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
        b = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
    return a / (a + b)


def _smooth_step_deriv(t: np.ndarray) -> np.ndarray:
    inside = (t > 0) & (t < 1)
    tt = np.where(inside, t, 0.5)
    a = np.exp(-1.0 / tt)
    b = np.exp(-1.0 / (1.0 - tt))
    da = a / tt**2
    db = -b / (1.0 - tt) ** 2
    d = (da * (a + b) - a * (da + db)) / (a + b) ** 2
    return np.where(inside, d, 0.0)


def _radial_cutoff(r: np.ndarray, inner: float, outer: float):
    """Value and radial derivative of a cutoff equal to 1 below ``inner``."""
    t = (outer - r) / (outer - inner)
    return _smooth_step(t), -_smooth_step_deriv(t) / (outer - inner)


def _zero(x, **_):
    return np.zeros(x.shape[:-1])


def _zero_grad(x, **_):
    return np.zeros(x.shape)


def _bump(x, center=None, radius=1.0, amplitude=1.0):
    y = _center(x, center) / radius
    rho2 = np.sum(y * y, axis=-1)
    inside = rho2 < 1.0
    safe = np.where(inside, rho2, 0.0)
    return np.where(inside, amplitude * np.exp(1.0 / (safe - 1.0)), 0.0)


def _bump_grad(x, center=None, radius=1.0, amplitude=1.0):
    y = _center(x, center) / radius
    rho2 = np.sum(y * y, axis=-1)
    inside = rho2 < 1.0
    safe = np.where(inside, rho2, 0.0)
    f = np.where(inside, amplitude * np.exp(1.0 / (safe - 1.0)), 0.0)
    factor = np.where(inside, -2.0 * f / (radius * (1.0 - safe) ** 2), 0.0)
    return factor[..., None] * y


def _tensor_bump(x, center=None, radius=1.0, amplitude=1.0):
    y = _center(x, center) / radius
    inside = np.all(np.abs(y) < 1.0, axis=-1)
    safe = np.where(np.abs(y) < 1.0, y * y, 0.0)
    prod = np.prod(np.exp(1.0 / (safe - 1.0)), axis=-1)
    return np.where(inside, amplitude * prod, 0.0)


def _tensor_bump_grad(x, center=None, radius=1.0, amplitude=1.0):
    y = _center(x, center) / radius
    f = _tensor_bump(x, center, radius, amplitude)
    safe = np.where(np.abs(y) < 1.0, y * y, 0.0)
    factor = -2.0 * y / (radius * (1.0 - safe) ** 2)
    return np.where(np.abs(y) < 1.0, f[..., None] * factor, 0.0)


def _dipole(x, separation=0.5, radius=0.8, amplitude=1.0):
    n = x.shape[-1]
    shift = np.zeros(n)
    shift[0] = separation
    return _bump(x, shift, radius, amplitude) - _bump(x, -shift, radius, amplitude)


def _dipole_grad(x, separation=0.5, radius=0.8, amplitude=1.0):
    n = x.shape[-1]
    shift = np.zeros(n)
    shift[0] = separation
    return _bump_grad(x, shift, radius, amplitude) - _bump_grad(x, -shift, radius, amplitude)


def _plateau(x, inner=1.0, outer=1.5):
    """Tensor cutoff equal to 1 on the cube of half-side ``inner``."""
    vals = []
    ders = []
    for j in range(x.shape[-1]):
        v, d = _radial_cutoff(np.abs(x[..., j]), inner, outer)
        vals.append(v)
        ders.append(d * np.sign(x[..., j]))
    return np.stack(vals, axis=-1), np.stack(ders, axis=-1)


def _tensor_grad(vals, ders, outer_value, outer_grad):
    """Gradient of ``outer_value * prod(vals)`` given per-axis factors."""
    prod = np.prod(vals, axis=-1)
    grads = []
    n = vals.shape[-1]
    for j in range(n):
        others = np.prod(np.delete(vals, j, axis=-1), axis=-1)
        grads.append(outer_grad[..., j] * prod + outer_value * ders[..., j] * others)
    return np.stack(grads, axis=-1)


def _ramp(x, inner=1.0, outer=1.5):
    vals, _ = _plateau(x, inner, outer)
    return x[..., 0] * np.prod(vals, axis=-1)


def _ramp_grad(x, inner=1.0, outer=1.5):
    vals, ders = _plateau(x, inner, outer)
    lin_grad = np.zeros(x.shape)
    lin_grad[..., 0] = 1.0
    return _tensor_grad(vals, ders, x[..., 0], lin_grad)


def _quadratic(x, inner=1.0, outer=1.5):
    vals, _ = _plateau(x, inner, outer)
    q = x[..., 0] ** 2 + x[..., 0] * x[..., 1]
    return q * np.prod(vals, axis=-1)


def _quadratic_grad(x, inner=1.0, outer=1.5):
    vals, ders = _plateau(x, inner, outer)
    q = x[..., 0] ** 2 + x[..., 0] * x[..., 1]
    qg = np.zeros(x.shape)
    qg[..., 0] = 2 * x[..., 0] + x[..., 1]
    qg[..., 1] = x[..., 0]
    return _tensor_grad(vals, ders, q, qg)


def _log_power(x, exponent=0.5, delta=0.0, inner=0.5, outer=1.0):
    r = np.sqrt(np.sum(x * x, axis=-1))
    rd = np.sqrt(r * r + delta * delta)
    cut, _ = _radial_cutoff(r, inner, outer)
    # outside the cutoff the logarithm may be negative; it is never used there
    base = np.where(cut > 0, np.log(np.e / np.where(rd > 0, rd, 1.0)), 1.0)
    base = np.where(rd > 0, base, np.inf)
    return np.where(cut > 0, base**exponent * cut, 0.0)


def _log_power_grad(x, exponent=0.5, delta=0.0, inner=0.5, outer=1.0):
    r = np.sqrt(np.sum(x * x, axis=-1))
    rd = np.sqrt(r * r + delta * delta)
    cut, dcut = _radial_cutoff(r, inner, outer)
    safe_rd = np.where(rd > 0, rd, 1.0)
    base = np.where(cut > 0, np.log(np.e / safe_rd), 1.0)
    # d/dr of base^e = e * base^(e-1) * (-r / rd^2)
    dval = exponent * base ** (exponent - 1.0) * (-r / safe_rd**2) * cut
    dval = dval + base**exponent * dcut
    safe_r = np.where(r > 0, r, 1.0)
    g = (dval / safe_r)[..., None] * x
    return np.where(((r > 0) & (cut > 0))[..., None], g, 0.0)


def _smooth_indicator(x, radius=1.0, width=0.25):
    r = np.sqrt(np.sum(x * x, axis=-1))
    v, _ = _radial_cutoff(r, radius - width, radius + width)
    return v


def _smooth_indicator_grad(x, radius=1.0, width=0.25):
    r = np.sqrt(np.sum(x * x, axis=-1))
    _, d = _radial_cutoff(r, radius - width, radius + width)
    safe = np.where(r > 0, r, 1.0)
    return np.where((r > 0)[..., None], (d / safe)[..., None] * x, 0.0)


def _ball_indicator(x, radius=1.0):
    r2 = np.sum(x * x, axis=-1)
    return (r2 < radius * radius).astype(float)


def _cube_indicator(x, lower=0.0, upper=1.0):
    inside = np.all((x >= lower) & (x < upper), axis=-1)
    return inside.astype(float)


def _constant(x, value=1.0):
    return np.full(x.shape[:-1], float(value))


CORPUS: dict[str, CorpusEntry] = {
    e.name: e
    for e in [
        CorpusEntry("zero", _zero, _zero_grad, {}, "identically zero"),
        CorpusEntry(
            "bump", _bump, _bump_grad,
            {"center": None, "radius": 1.0, "amplitude": 1.0},
            "radial bump exp(1/(|y|^2-1)), y=(x-center)/radius",
        ),
        CorpusEntry(
            "tensor_bump", _tensor_bump, _tensor_bump_grad,
            {"center": None, "radius": 1.0, "amplitude": 1.0},
            "product of one-dimensional bumps",
        ),
        CorpusEntry(
            "dipole", _dipole, _dipole_grad,
            {"separation": 0.5, "radius": 0.8, "amplitude": 1.0},
            "difference of two bumps displaced along the first axis",
        ),
        CorpusEntry(
            "ramp", _ramp, _ramp_grad, {"inner": 1.0, "outer": 1.5},
            "x_1 times a tensor plateau cutoff",
        ),
        CorpusEntry(
            "quadratic", _quadratic, _quadratic_grad, {"inner": 1.0, "outer": 1.5},
            "x_1^2 + x_1 x_2 times a tensor plateau cutoff",
        ),
        CorpusEntry(
            "log_power", _log_power, _log_power_grad,
            {"exponent": 0.5, "delta": 0.0, "inner": 0.5, "outer": 1.0},
            "log(e/sqrt(|x|^2+delta^2))^exponent times a radial cutoff",
        ),
        CorpusEntry(
            "smooth_indicator", _smooth_indicator, _smooth_indicator_grad,
            {"radius": 1.0, "width": 0.25},
            "smoothed indicator of the ball of given radius",
        ),
        CorpusEntry(
            "ball_indicator", _ball_indicator, None, {"radius": 1.0},
            "indicator of the open ball |x| < radius",
        ),
        CorpusEntry(
            "cube_indicator", _cube_indicator, None, {"lower": 0.0, "upper": 1.0},
            "indicator of the half-open cube [lower, upper)^n",
        ),
        CorpusEntry(
            "constant", _constant, _zero_grad, {"value": 1.0},
            "constant function (not compactly supported)",
        ),
    ]
}


def resolve_params(name: str, params: dict | None) -> dict:
    if name not in CORPUS:
        raise KeyError(f"unknown corpus function {name!r}")
    entry = CORPUS[name]
    merged = dict(entry.defaults)
    for key, val in (params or {}).items():
        if key not in merged:
            raise KeyError(f"{name!r} has no parameter {key!r}")
        merged[key] = val
    return merged
