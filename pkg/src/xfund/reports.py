"""Check results and byte-stable artifact emission.

A :class:`Report` states one verified fact: the quantity checked, the value
it must take, where that value comes from, what was computed, and whether the
gap fits the tolerance.  Artifacts are reproducible: given identical inputs
the emitted JSON and CSV are byte-identical, which is why wall-clock runtime
stays on the console and never enters a file.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import os
from typing import Iterable, Sequence

__all__ = ["Report", "bounded", "emit_report", "summary", "versus"]


@dataclasses.dataclass(frozen=True)
class Report:
    """One named check: computed value against its expected value.

    ``provenance`` states how the expected value was obtained (a closed-form
    oracle, an exact identity, a derived reference computation, a property
    that must hold by construction).  ``runtime`` is seconds spent computing,
    reported for the console only.
    """

    name: str
    expected: float
    provenance: str
    computed: float
    tolerance: float
    passed: bool
    runtime: float = 0.0
    detail: str = ""

    @property
    def gap(self) -> float:
        return abs(self.computed - self.expected)


def versus(
    name: str, expected: float, computed: float, tolerance: float,
    provenance: str, runtime: float = 0.0, detail: str = "",
) -> Report:
    ok = math.isfinite(computed) and abs(computed - expected) <= tolerance
    return Report(name, float(expected), provenance, float(computed),
                  float(tolerance), ok, runtime, detail)


def bounded(
    name: str, computed: float, tolerance: float,
    provenance: str, runtime: float = 0.0, detail: str = "",
) -> Report:
    """A residual-style check: the computed value must sit within
    ``tolerance`` of zero."""
    return versus(name, 0.0, computed, tolerance, provenance, runtime, detail)


def summary(reports: Sequence[Report]) -> dict:
    """JSON-ready summary; deterministic field order, no runtimes."""
    failures = [
        {
            "name": r.name,
            "computed": r.computed,
            "expected": r.expected,
            "gap": r.gap,
            "tolerance": r.tolerance,
        }
        for r in reports
        if not r.passed
    ]
    return {
        "passed": sum(1 for r in reports if r.passed),
        "failed": len(failures),
        "failures": failures,
        "reports": [
            {
                "name": r.name,
                "provenance": r.provenance,
                "expected": r.expected,
                "computed": r.computed,
                "gap": r.gap,
                "tolerance": r.tolerance,
                "passed": r.passed,
                "detail": r.detail,
            }
            for r in reports
        ],
    }


_CSV_FIELDS = ("name", "provenance", "expected", "computed", "gap", "tolerance", "passed")


def _csv_text(reports: Iterable[Report]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(_CSV_FIELDS)
    for r in reports:
        w.writerow([
            r.name, r.provenance, repr(r.expected), repr(r.computed),
            repr(r.gap), repr(r.tolerance), "pass" if r.passed else "FAIL",
        ])
    return buf.getvalue()


def emit_report(
    reports: Sequence[Report],
    out_dir: str,
    stem: str = "validation",
    formats: Sequence[str] = ("json", "csv"),
) -> list[str]:
    """Write the summary JSON and/or detail CSV; returns the paths written.

    IO errors propagate as raised by the OS, carrying the offending path.
    """
    os.makedirs(out_dir, exist_ok=True)
    written: list[str] = []
    if "json" in formats:
        path = os.path.join(out_dir, f"{stem}.json")
        with open(path, "w", newline="\n") as fh:
            json.dump(summary(reports), fh, indent=2, sort_keys=True)
            fh.write("\n")
        written.append(path)
    if "csv" in formats:
        path = os.path.join(out_dir, f"{stem}.csv")
        with open(path, "w", newline="\n") as fh:
            fh.write(_csv_text(reports))
        written.append(path)
    return written
