"""Verification reports: a flat list of inequality checks plus run metadata.

Every numerical estimate verified by the package is recorded as a
:class:`Check`.  Upper-bound checks store ``measured <= bound`` with
``margin = bound - measured``; a check passes when ``margin >= -tolerance``.
Lower-bound or sign conditions are normalised into that form by the caller.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Any, Iterable

__all__ = [
    "SCHEMA_VERSION",
    "REPORT_SCHEMA",
    "Check",
    "VerificationReport",
    "upper_bound_check",
    "skipped_check",
    "merge",
    "render",
    "parse",
]

SCHEMA_VERSION = "gf-report/1"

PASS, FAIL, SKIPPED = "pass", "fail", "skipped"
_SEVERITY = {PASS: 0, SKIPPED: 1, FAIL: 2}

_NUMBER_OR_NULL = {"type": ["number", "null"]}

REPORT_SCHEMA: dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "gfrac verification report",
    "type": "object",
    "required": ["schema", "status", "checks", "metadata"],
    "additionalProperties": False,
    "properties": {
        "schema": {"const": SCHEMA_VERSION},
        "status": {"enum": [PASS, FAIL, SKIPPED]},
        "metadata": {"type": "object"},
        "checks": {
            "type": "array",
            "items": {
                "type": "object",
                "required": [
                    "name",
                    "paper_anchor",
                    "status",
                    "measured",
                    "bound",
                    "margin",
                    "tolerance",
                ],
                "additionalProperties": False,
                "properties": {
                    "name": {"type": "string", "minLength": 1},
                    "paper_anchor": {"type": "string", "minLength": 1},
                    "status": {"enum": [PASS, FAIL, SKIPPED]},
                    "measured": _NUMBER_OR_NULL,
                    "bound": _NUMBER_OR_NULL,
                    "margin": _NUMBER_OR_NULL,
                    "tolerance": _NUMBER_OR_NULL,
                    "note": {"type": "string"},
                },
            },
        },
    },
}


@dataclass(frozen=True)
class Check:
    name: str
    paper_anchor: str
    status: str
    measured: float
    bound: float
    margin: float
    tolerance: float
    note: str = ""

    def __post_init__(self):
        if not self.paper_anchor:
            raise ValueError(f"check {self.name!r} needs a non-empty anchor")
        if self.status not in _SEVERITY:
            raise ValueError(f"unknown status {self.status!r}")

    @property
    def passed(self) -> bool:
        return self.status == PASS


def upper_bound_check(name, anchor, measured, bound, tolerance=0.0, note=""):
    """Build a check asserting ``measured <= bound`` up to ``tolerance``."""
    measured = float(measured)
    bound = float(bound)
    tolerance = float(abs(tolerance))
    if math.isnan(measured) or math.isnan(bound):
        return Check(name, anchor, FAIL, measured, bound, math.nan, tolerance,
                     note or "non-finite value")
    margin = bound - measured
    status = PASS if margin >= -tolerance else FAIL
    return Check(name, anchor, status, measured, bound, margin, tolerance, note)


def skipped_check(name, anchor, note):
    nan = math.nan
    return Check(name, anchor, SKIPPED, nan, nan, nan, nan, note)


@dataclass(frozen=True)
class VerificationReport:
    checks: tuple[Check, ...] = ()
    metadata: dict[str, Any] = field(default_factory=dict)

    @property
    def status(self) -> str:
        worst = PASS
        for c in self.checks:
            if _SEVERITY[c.status] > _SEVERITY[worst]:
                worst = c.status
        return worst

    @property
    def passed(self) -> bool:
        return self.status != FAIL

    def failures(self) -> list[Check]:
        return [c for c in self.checks if c.status == FAIL]

    def by_name(self, prefix: str) -> list[Check]:
        return [c for c in self.checks if c.name.startswith(prefix)]

    def with_metadata(self, **items) -> "VerificationReport":
        meta = dict(self.metadata)
        meta.update(items)
        return replace(self, metadata=meta)

    def prefixed(self, prefix: str) -> "VerificationReport":
        """Copy with ``prefix/`` prepended to every check name."""
        checks = tuple(replace(c, name=f"{prefix}/{c.name}") for c in self.checks)
        return replace(self, checks=checks)

    def __len__(self) -> int:
        return len(self.checks)


def merge(reports: Iterable[VerificationReport]) -> VerificationReport:
    """Concatenate checks and union metadata (later reports win on key clashes)."""
    checks: list[Check] = []
    meta: dict[str, Any] = {}
    for r in reports:
        checks.extend(r.checks)
        meta.update(r.metadata)
    return VerificationReport(tuple(checks), meta)


def _num(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def _to_dict(report: VerificationReport) -> dict[str, Any]:
    checks = []
    for c in report.checks:
        d = {
            "name": c.name,
            "paper_anchor": c.paper_anchor,
            "status": c.status,
            "measured": _num(c.measured),
            "bound": _num(c.bound),
            "margin": _num(c.margin),
            "tolerance": _num(c.tolerance),
        }
        if c.note:
            d["note"] = c.note
        checks.append(d)
    return {
        "schema": SCHEMA_VERSION,
        "status": report.status,
        "checks": checks,
        "metadata": report.metadata,
    }


def _fmt(x: float) -> str:
    if x is None or not math.isfinite(x):
        return "-"
    return f"{x:+.3e}"


def render(report: VerificationReport, format: str = "json") -> bytes:
    """Serialise deterministically as JSON or as a fixed-width text table."""
    if format == "json":
        text = json.dumps(_to_dict(report), sort_keys=True, indent=1,
                          allow_nan=False, default=str)
        return (text + "\n").encode()
    if format != "text":
        raise ValueError(f"unknown format {format!r}")
    width = max([len(c.name) for c in report.checks] + [5])
    lines = [
        f"{'check':<{width}}  {'status':<7}  {'measured':>10}  {'bound':>10}  {'margin':>10}",
        "-" * (width + 47),
    ]
    for c in report.checks:
        lines.append(
            f"{c.name:<{width}}  {c.status:<7}  {_fmt(c.measured):>10}  "
            f"{_fmt(c.bound):>10}  {_fmt(c.margin):>10}"
        )
    lines.append(f"overall: {report.status} ({len(report.checks)} checks)")
    return ("\n".join(lines) + "\n").encode()


def parse(data: bytes | str) -> VerificationReport:
    """Inverse of ``render(report, "json")``."""
    obj = json.loads(data)
    if obj.get("schema") != SCHEMA_VERSION:
        raise ValueError(f"unsupported report schema {obj.get('schema')!r}")

    def f(x):
        return math.nan if x is None else float(x)

    checks = tuple(
        Check(c["name"], c["paper_anchor"], c["status"], f(c["measured"]),
              f(c["bound"]), f(c["margin"]), f(c["tolerance"]), c.get("note", ""))
        for c in obj["checks"]
    )
    return VerificationReport(checks, obj.get("metadata", {}))
