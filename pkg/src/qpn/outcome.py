"""Verdict object returned by every check_* / is_* operation.

Failures are verdicts, not exceptions: callers get the witnessing data
(eigenvalues, offending node ids, ...) and can re-judge with their own
tolerances.
"""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class CheckOutcome:
    passed: bool
    reason: str = ""
    data: dict = field(default_factory=dict)

    def __bool__(self) -> bool:
        return self.passed

    @staticmethod
    def ok(reason: str = "", **data) -> "CheckOutcome":
        return CheckOutcome(True, reason, dict(data))

    @staticmethod
    def fail(reason: str, **data) -> "CheckOutcome":
        return CheckOutcome(False, reason, dict(data))

    def __str__(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}: {self.reason}" if self.reason else status
