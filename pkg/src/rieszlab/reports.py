"""Report records shared by the certifiers and the check harness."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

VERDICTS = ("pass", "fail", "inconclusive")


def _clean(value):
    """JSON-safe copy: non-finite floats become strings, tuples become lists."""
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if hasattr(value, "item"):
        return _clean(value.item())
    return value


@dataclass
class ResolutionResult:
    """Outcome of one check at one resolution."""

    res: int
    constant: float | None
    error_bound: float = 0.0
    lhs_sup_location: list | None = None
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        out = {
            "res": self.res,
            "constant": self.constant,
            "error_bound": self.error_bound,
            "lhs_sup_location": self.lhs_sup_location,
        }
        out.update(self.extra)
        return _clean(out)


@dataclass
class CheckReport:
    check_id: str
    theorem: str
    params: dict
    per_resolution: list[ResolutionResult]
    verdict: str
    expected: str = "pass"
    kind: str = "empirical"
    notes: list[str] = field(default_factory=list)
    runtime: float = 0.0

    def __post_init__(self):
        for v in (self.verdict, self.expected):
            if v not in VERDICTS:
                raise ValueError(f"verdict must be one of {VERDICTS}")

    @property
    def as_expected(self) -> bool:
        return self.verdict == self.expected

    def to_json(self) -> dict:
        """Report as a JSON-ready dict. The runtime is left out so reruns are byte-identical."""
        return _clean({
            "check_id": self.check_id,
            "theorem": self.theorem,
            "kind": self.kind,
            "params": self.params,
            "per_resolution": [r.to_json() for r in self.per_resolution],
            "verdict": self.verdict,
            "expected": self.expected,
            "notes": self.notes,
        })
