"""Symbols on the unit sphere: quadrature meshes, corpus, norms.

The circle uses ``M`` equally spaced angles offset by half a step. The
two-sphere uses a subdivided icosahedron whose vertex weights are one third
of the areas of the adjacent spherical triangles, so they sum to ``4 pi``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .local_norms import YoungFunction, lorentz_global, luxemburg_values

CIRCLE_NODES = 4096
ICOSPHERE_LEVEL = 5


def sphere_area(n: int) -> float:
    """Surface measure of the unit sphere in R^n."""
    return 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)


def ball_volume(n: int) -> float:
    return sphere_area(n) / n


@lru_cache(maxsize=8)
def circle_mesh(count: int = CIRCLE_NODES) -> tuple[np.ndarray, np.ndarray]:
    theta = 2.0 * math.pi * (np.arange(count) + 0.5) / count
    nodes = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    weights = np.full(count, 2.0 * math.pi / count)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def _spherical_triangle_area(a, b, c) -> np.ndarray:
    """Area of spherical triangles via the van Oosterom–Strackee formula."""
    num = np.abs(np.einsum("ij,ij->i", a, np.cross(b, c)))
    den = 1.0 + np.einsum("ij,ij->i", a, b) + np.einsum("ij,ij->i", b, c) + np.einsum(
        "ij,ij->i", c, a
    )
    return 2.0 * np.arctan2(num, den)


@lru_cache(maxsize=8)
def icosphere_mesh(level: int = ICOSPHERE_LEVEL) -> tuple[np.ndarray, np.ndarray]:
    g = (1.0 + math.sqrt(5.0)) / 2.0
    verts = [
        (-1, g, 0), (1, g, 0), (-1, -g, 0), (1, -g, 0),
        (0, -1, g), (0, 1, g), (0, -1, -g), (0, 1, -g),
        (g, 0, -1), (g, 0, 1), (-g, 0, -1), (-g, 0, 1),
    ]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    pts = [np.array(v, dtype=float) / np.linalg.norm(v) for v in verts]
    for _ in range(level):
        midpoint_cache: dict[tuple[int, int], int] = {}

        def midpoint(i: int, j: int) -> int:
            key = (min(i, j), max(i, j))
            if key not in midpoint_cache:
                m = pts[i] + pts[j]
                pts.append(m / np.linalg.norm(m))
                midpoint_cache[key] = len(pts) - 1
            return midpoint_cache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    nodes = np.array(pts)
    tri = np.array(faces)
    areas = _spherical_triangle_area(nodes[tri[:, 0]], nodes[tri[:, 1]], nodes[tri[:, 2]])
    weights = np.zeros(len(nodes))
    for col in range(3):
        np.add.at(weights, tri[:, col], areas / 3.0)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def sphere_mesh(n: int, order: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    if n == 2:
        return circle_mesh(order or CIRCLE_NODES)
    if n == 3:
        return icosphere_mesh(ICOSPHERE_LEVEL if order is None else order)
    raise ValueError("dimension must be 2 or 3")


# --- symbol corpus -------------------------------------------------------------


def _pole(n: int) -> np.ndarray:
    e = np.zeros(n)
    e[0] = 1.0
    return e


def _geodesic(nodes: np.ndarray, pole: np.ndarray) -> np.ndarray:
    return np.arccos(np.clip(nodes @ pole, -1.0, 1.0))


def _capped_power(d: np.ndarray, exponent: float, log_power: float, cap: float) -> np.ndarray:
    dd = np.maximum(d, cap)
    return dd ** (-exponent) * (1.0 + np.abs(np.log(dd))) ** (-log_power)


def _sym_one(nodes, cap, **_):
    return np.ones(len(nodes))


def _sym_cos(nodes, cap, frequency=1, **_):
    if nodes.shape[1] == 2:
        theta = np.arctan2(nodes[:, 1], nodes[:, 0])
        return np.cos(frequency * theta)
    # Zonal Legendre polynomial in the polar coordinate.
    x = nodes[:, 2]
    if frequency == 1:
        return x
    if frequency == 2:
        return 1.5 * x * x - 0.5
    raise ValueError("frequency must be 1 or 2 on the two-sphere")


def _sym_sign(nodes, cap, **_):
    return np.sign(nodes[:, 1])


def _sym_power(nodes, cap, r=1.5, log_power=0.0, **_):
    n = nodes.shape[1]
    d = _geodesic(nodes, _pole(n))
    return _capped_power(d, (n - 1) / r, log_power, cap)


def _sym_llogl(nodes, cap, **_):
    n = nodes.shape[1]
    d = _geodesic(nodes, _pole(n))
    return _capped_power(d, n - 1, 2.0, cap)


def _sym_weak(nodes, cap, **_):
    n = nodes.shape[1]
    d = _geodesic(nodes, _pole(n))
    return _capped_power(d, (n - 1) / n, 0.0, cap)


SYMBOLS = {
    "one": (_sym_one, {}, "constant 1 (not mean zero)"),
    "cos1": (_sym_cos, {"frequency": 1}, "first harmonic"),
    "cos2": (_sym_cos, {"frequency": 2}, "second harmonic"),
    "sign": (_sym_sign, {}, "sign of the second coordinate"),
    "power": (
        _sym_power, {"r": 1.5, "log_power": 1.0},
        "geodesic distance to a pole to the power -(n-1)/r, with optional log damping",
    ),
    "llogl": (
        _sym_llogl, {},
        "d^-(n-1) (1+|log d|)^-2: integrable with log^(1/n') margin but in no L^r, r>1",
    ),
    "weak_n": (_sym_weak, {}, "d^-(n-1)/n: in the weak space of exponent n"),
}


@dataclass(frozen=True, eq=False)
class SphereSymbol:
    nodes: np.ndarray
    weights: np.ndarray
    values: np.ndarray
    expr_id: str = "custom"
    params: dict = field(default_factory=dict)
    mean_zero: bool = False

    def __post_init__(self):
        for name in ("nodes", "weights", "values"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.values.shape != self.weights.shape:
            raise ValueError("values and weights must align")

    @property
    def n(self) -> int:
        return self.nodes.shape[1]

    def integral(self) -> float:
        return float(np.dot(self.weights, self.values))

    def l1(self) -> float:
        return float(np.dot(self.weights, np.abs(self.values)))

    def sup(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    def scaled(self, c: float) -> "SphereSymbol":
        return SphereSymbol(self.nodes, self.weights, c * self.values, self.expr_id,
                            dict(self.params), self.mean_zero)

    def shifted(self, c: float) -> "SphereSymbol":
        return SphereSymbol(self.nodes, self.weights, self.values + c, self.expr_id,
                            dict(self.params), False)

    def level_set_measure(self, t: float) -> float:
        return float(np.sum(self.weights[np.abs(self.values) > t]))

    def to_json(self) -> dict:
        return {
            "expr_id": self.expr_id,
            "params": self.params,
            "n": self.n,
            "nodes": self.nodes.tolist(),
            "weights": self.weights.tolist(),
            "values": self.values.tolist(),
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json()))


def make_symbol(expr_id: str, n: int = 2, mesh_order: int | None = None, **params) -> SphereSymbol:
    """Sample a corpus symbol on the default mesh.

    Singular symbols are capped at the mesh scale, the typical node spacing.
    """
    if expr_id not in SYMBOLS:
        raise KeyError(f"unknown symbol {expr_id!r}")
    fn, defaults, _ = SYMBOLS[expr_id]
    merged = dict(defaults)
    merged.update(params)
    nodes, weights = sphere_mesh(n, mesh_order)
    cap = float(np.mean(weights) ** (1.0 / (n - 1)))
    values = fn(nodes, cap, **merged)
    return SphereSymbol(nodes, weights, values, expr_id, merged)


def project_mean_zero(sym: SphereSymbol) -> SphereSymbol:
    mean = sym.integral() / float(np.sum(sym.weights))
    vals = sym.values - mean
    # A second pass removes the rounding residue of the first subtraction.
    vals = vals - float(np.dot(sym.weights, vals)) / float(np.sum(sym.weights))
    return SphereSymbol(sym.nodes, sym.weights, vals, sym.expr_id, dict(sym.params), True)


def critical_index(n: int, r: float) -> float:
    """``r* = n r / (n - r)`` for ``1 < r < n``."""
    if not 1 < r < n:
        raise ValueError("need 1 < r < n")
    return n * r / (n - r)


def sphere_norm(sym: SphereSymbol, norm_class: str, r: float | None = None) -> float:
    """Norm of a symbol for ``surface measure``.

    ``norm_class`` is one of ``"L1"``, ``"Linf"``, ``"Lr"``, ``"Lr_rstar"``,
    ``"weak_n"`` and ``"llogl"``. The Orlicz class uses the Luxemburg norm
    of ``t log(1+t)^(1/n')`` averaged over the sphere.
    """
    vals, w = sym.values, sym.weights
    n = sym.n
    if norm_class == "L1":
        return sym.l1()
    if norm_class == "Linf":
        return sym.sup()
    if norm_class == "Lr":
        if r is None or r < 1:
            raise ValueError("Lr needs r >= 1")
        return float(np.dot(w, np.abs(vals) ** r) ** (1.0 / r))
    if norm_class == "Lr_rstar":
        if r is None:
            raise ValueError("Lr_rstar needs r")
        return lorentz_global(vals, w, r, critical_index(n, r))
    if norm_class == "weak_n":
        return lorentz_global(vals, w, float(n), math.inf)
    if norm_class == "llogl":
        total = float(np.sum(w))
        q = n / (n - 1.0)
        return luxemburg_values(vals, w / total, YoungFunction("log_power", q))
    raise ValueError(f"unknown norm class {norm_class!r}")


def evaluate_symbol(sym: SphereSymbol, directions: np.ndarray) -> np.ndarray:
    """Values at arbitrary unit directions by nearest-node lookup."""
    d = np.asarray(directions, dtype=float)
    flat = d.reshape(-1, sym.n)
    if sym.n == 2:
        m = len(sym.values)
        theta = np.mod(np.arctan2(flat[:, 1], flat[:, 0]), 2 * math.pi)
        idx = np.floor(theta * m / (2 * math.pi)).astype(int) % m
    else:
        from scipy.spatial import cKDTree

        idx = cKDTree(sym.nodes).query(flat)[1]
    return sym.values[idx].reshape(d.shape[:-1])
