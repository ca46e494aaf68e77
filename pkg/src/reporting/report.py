"""
Analysis report document and its schema validation.
"""

import json
import logging
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Dict, List, Optional

from jsonschema import Draft202012Validator

from config.settings import config
from src.certificates.positive import ConditionReport, LyapunovTrace
from src.data.storage import to_jsonable, write_json
from src.utils.errors import ReportSchemaError, VbcertError

logger = logging.getLogger(__name__)


@dataclass
class AnalysisReport:
    """One analysis run: inputs digest, verdicts, traces and optional sections."""

    mode: str  # vc, vi or td
    input_digest: str
    parameters: Dict[str, Any] = field(default_factory=dict)
    condition_reports: List[Dict[str, Any]] = field(default_factory=list)
    lyapunov_traces: List[Dict[str, Any]] = field(default_factory=list)
    unavailable: List[Dict[str, Any]] = field(default_factory=list)
    sections: Dict[str, Any] = field(default_factory=dict)  # certificate, vi, mjls
    timings: Dict[str, float] = field(default_factory=dict)
    satisfied: Optional[bool] = None

    def add_condition(self, report: ConditionReport) -> None:
        self.condition_reports.append(report.to_dict())

    def add_lyapunov(self, trace: LyapunovTrace) -> None:
        self.lyapunov_traces.append(trace.to_dict())

    def add_unavailable(self, name: str, error: VbcertError) -> None:
        """Record a check that could not run, e.g. V2 on a reducible chain."""
        self.unavailable.append({"name": name, "error": error.code, "message": error.message})
        if name in ("V1", "V2", "V3"):
            self.lyapunov_traces.append({"kind": name, "available": False, "error": error.code})

    @contextmanager
    def phase(self, name: str):
        """Accumulate wall time of a named phase."""
        start = time.perf_counter()
        try:
            yield
        finally:
            self.timings[name] = self.timings.get(name, 0.0) + time.perf_counter() - start

    def overall_satisfied(self) -> bool:
        """All conditions satisfied and every available Lyapunov trace decreasing."""
        conditions = all(c["satisfied"] for c in self.condition_reports)
        traces = all(t["rate_ok"] for t in self.lyapunov_traces if t.get("available", True))
        return conditions and traces

    def to_dict(self, include_timings: bool = False) -> Dict[str, Any]:
        satisfied = self.overall_satisfied() if self.satisfied is None else self.satisfied
        out = {
            "mode": self.mode,
            "input_digest": self.input_digest,
            "parameters": self.parameters,
            "satisfied": satisfied,
            "condition_reports": self.condition_reports,
            "lyapunov_traces": self.lyapunov_traces,
            "unavailable": self.unavailable,
            "timings": self.timings if include_timings else {},
        }
        out.update(self.sections)
        return to_jsonable(out)


@lru_cache(maxsize=4)
def _load_schema(path: str) -> Dict[str, Any]:
    with open(path, encoding="utf-8") as f:
        return json.load(f)


def validate_report(report: Dict[str, Any], schema_path: Optional[str] = None) -> None:
    """
    Validate a report dictionary against the published schema.

    Raises:
        ReportSchemaError: listing every schema violation
    """
    schema_path = config.REPORT_SCHEMA_PATH if schema_path is None else schema_path
    validator = Draft202012Validator(_load_schema(str(schema_path)))
    errors = sorted(validator.iter_errors(report), key=lambda e: list(e.absolute_path))
    if errors:
        raise ReportSchemaError(
            f"report violates its schema ({len(errors)} error(s))",
            [f"{'/'.join(str(p) for p in e.absolute_path) or '<root>'}: {e.message}" for e in errors],
        )


def write_report(report: AnalysisReport, path, include_timings: bool = False) -> Dict[str, Any]:
    """Validate and write the report canonically; returns the written dictionary."""
    payload = report.to_dict(include_timings)
    validate_report(payload)
    write_json(payload, path)
    return payload
