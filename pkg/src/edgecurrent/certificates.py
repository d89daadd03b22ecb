"""Certificate records: one instantiated inequality with its margin and verdict."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

# Multiplicative slack that absorbs h^2 discretisation and quadrature noise.
# Every certificate in the package uses this one value.
SLACK = 1e-6

PASS = "pass"
FAIL = "fail"
VACUOUS = "vacuous"
DIAGNOSTIC = "diagnostic"
VERDICTS = (PASS, FAIL, VACUOUS, DIAGNOSTIC)


def _clean(value):
    """Make a value JSON-safe: numpy scalars become floats, non-finite floats become strings."""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if hasattr(value, "item") and not isinstance(value, (str, bytes)):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return repr(value)
    return value


@dataclass(frozen=True)
class Certificate:
    """An inequality ``lhs >= rhs`` (``sense=">="``) or ``lhs <= rhs`` (``sense="<="``).

    ``margin`` is signed so that a positive margin means the inequality holds.
    The verdict is ``pass`` iff ``margin > -slack * |rhs|``. ``vacuous`` marks a bound
    whose own hypotheses fail (for instance a nonpositive lower bound); ``diagnostic``
    marks a record that is reported but never judged.
    """

    name: str
    paper_ref: str
    parameters: dict
    lhs: float
    rhs: float
    margin: float
    verdict: str
    slack: float = SLACK
    sense: str = ">="
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.verdict == PASS

    @property
    def failed(self) -> bool:
        return self.verdict == FAIL

    @property
    def relative_margin(self) -> float:
        return self.margin / abs(self.rhs) if self.rhs else math.inf

    def to_dict(self) -> dict:
        return _clean({
            "name": self.name,
            "paper_ref": self.paper_ref,
            "parameters": self.parameters,
            "lhs": float(self.lhs),
            "rhs": float(self.rhs),
            "margin": float(self.margin),
            "verdict": self.verdict,
            "slack": self.slack,
            "sense": self.sense,
            "details": self.details,
        })

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def summary_line(self) -> str:
        return (f"{self.verdict.upper():10s} {self.name:38s} lhs={self.lhs:.6g} "
                f"{self.sense} rhs={self.rhs:.6g} margin={self.margin:.3g}")


def certify(
    name: str,
    paper_ref: str,
    parameters: dict,
    lhs: float,
    rhs: float,
    sense: str = ">=",
    *,
    vacuous: bool = False,
    diagnostic: bool = False,
    slack: float = SLACK,
    details: dict | None = None,
) -> Certificate:
    if sense not in (">=", "<="):
        raise ValueError(f"unknown sense {sense!r}")
    lhs, rhs = float(lhs), float(rhs)
    margin = lhs - rhs if sense == ">=" else rhs - lhs
    if diagnostic:
        verdict = DIAGNOSTIC
    elif vacuous:
        verdict = VACUOUS
    elif math.isnan(margin):
        verdict = FAIL
    else:
        verdict = PASS if margin > -slack * abs(rhs) else FAIL
    return Certificate(name, paper_ref, dict(parameters), lhs, rhs, margin, verdict,
                       slack, sense, dict(details or {}))


def report_json(certs) -> str:
    return json.dumps([c.to_dict() for c in certs], indent=2, sort_keys=True)


def summary_table(certs) -> str:
    lines = [c.summary_line() for c in certs]
    counts = {v: sum(c.verdict == v for c in certs) for v in VERDICTS}
    lines.append("  ".join(f"{v}={counts[v]}" for v in VERDICTS))
    return "\n".join(lines)
