"""Pass/fail bookkeeping for verification runs."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AssertionGroup:
    name: str
    tolerance: float
    checked: int = 0
    failures: int = 0
    max_error: float = 0.0
    first_failure: str | None = None

    @property
    def passed(self) -> bool:
        return self.failures == 0

    def record(self, errors, labels=None) -> None:
        """Count a batch of absolute errors; ``labels(i)`` describes failure i."""
        errors = np.asarray(errors, dtype=np.float64).reshape(-1)
        self.checked += errors.size
        if errors.size:
            self.max_error = max(self.max_error, float(np.max(errors)))
        bad = np.flatnonzero(~(errors <= self.tolerance))
        self.failures += bad.size
        if bad.size and self.first_failure is None:
            i = int(bad[0])
            where = labels(i) if labels is not None else f"index {i}"
            self.first_failure = f"{where}: error {errors[i]:.3e} > {self.tolerance:.0e}"

    def check(self, ok: bool, detail: str) -> None:
        self.checked += 1
        if not ok:
            self.failures += 1
            if self.first_failure is None:
                self.first_failure = detail

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        out = (f"[{status}] {self.name}: {self.checked} checked, {self.failures} failed, "
               f"max error {self.max_error:.2e}")
        if self.first_failure:
            out += f"\n       first failure: {self.first_failure}"
        return out


@dataclass
class VerificationReport:
    title: str
    groups: list[AssertionGroup] = field(default_factory=list)

    def group(self, name: str, tolerance: float = 0.0) -> AssertionGroup:
        g = AssertionGroup(name, tolerance)
        self.groups.append(g)
        return g

    @property
    def passed(self) -> bool:
        return all(g.passed for g in self.groups)

    @property
    def first_failure(self) -> str | None:
        for g in self.groups:
            if not g.passed:
                return f"{g.name}: {g.first_failure}"
        return None

    def text(self) -> str:
        lines = [self.title] + [g.line() for g in self.groups]
        return "\n".join(lines)

    def as_dict(self) -> dict:
        return {"title": self.title, "passed": self.passed,
                "groups": [{"name": g.name, "checked": g.checked, "failures": g.failures,
                            "max_error": g.max_error, "tolerance": g.tolerance,
                            "first_failure": g.first_failure} for g in self.groups]}
