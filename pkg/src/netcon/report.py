"""Per-run records and aggregate experiment reports."""
from __future__ import annotations

import json
import math
import statistics
from dataclasses import asdict, dataclass, field


@dataclass
class RunRecord:
    seed: int
    status: str
    steps: int
    stabilization_step: int | None
    faults: int
    verdict: bool | None
    order: int
    size: int
    n: int | None = None
    waste: int | None = None
    extra: dict = field(default_factory=dict)

    @property
    def passed(self):
        return self.verdict is True


def fit_exponent(ns, values):
    """Least-squares slope of log(value) on log(n)."""
    xs = [math.log(n) for n in ns]
    ys = [math.log(v) for v in values]
    mx, my = statistics.fmean(xs), statistics.fmean(ys)
    sxx = sum((x - mx) ** 2 for x in xs)
    if sxx == 0:
        raise ValueError("need at least two distinct n values")
    return sum((x - mx) * (y - my) for x, y in zip(xs, ys)) / sxx


@dataclass
class ExperimentReport:
    name: str
    runs: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    fits: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    artifacts: list = field(default_factory=list, repr=False, compare=False)

    @property
    def run(self):
        if len(self.runs) != 1:
            raise ValueError(f"report holds {len(self.runs)} runs")
        return self.runs[0]

    @property
    def pass_rate(self):
        return sum(r.passed for r in self.runs) / len(self.runs) if self.runs else 0.0

    def _steps(self):
        return [r.stabilization_step for r in self.runs if r.stabilization_step is not None]

    @property
    def mean_steps(self):
        s = self._steps()
        return statistics.fmean(s) if s else None

    @property
    def median_steps(self):
        s = self._steps()
        return statistics.median(s) if s else None

    @property
    def failed(self):
        return any(r.verdict is False for r in self.runs)

    def to_dict(self):
        return {
            "name": self.name,
            "config": self.config,
            "aggregate": {"runs": len(self.runs), "pass_rate": self.pass_rate,
                          "mean_steps": self.mean_steps, "median_steps": self.median_steps},
            "fits": self.fits,
            "warnings": self.warnings,
            "runs": [asdict(r) for r in self.runs],
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, default=str) + "\n"
