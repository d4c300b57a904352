"""Monte Carlo estimate containers and small statistical helpers."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

Z95 = 1.959963984540054


@dataclass
class EstimatorReport:
    estimate: float
    stderr: float
    reps: int
    method: str = ""
    ci_low: float = field(default=math.nan)
    ci_high: float = field(default=math.nan)
    flags: dict = field(default_factory=dict)

    def __post_init__(self):
        if math.isnan(self.ci_low):
            self.ci_low = self.estimate - Z95 * self.stderr
        if math.isnan(self.ci_high):
            self.ci_high = self.estimate + Z95 * self.stderr

    def to_dict(self) -> dict:
        return asdict(self)

    def within(self, target: float, k: float = 3.0) -> bool:
        """``|estimate - target| <= k * stderr`` (exact match required when stderr is 0)."""
        return abs(self.estimate - target) <= k * self.stderr

    def agrees(self, other: "EstimatorReport", k: float = 3.0) -> bool:
        return abs(self.estimate - other.estimate) <= k * combined_stderr(self, other)


def combined_stderr(*reports: EstimatorReport) -> float:
    return math.sqrt(sum(r.stderr**2 for r in reports))


def mean_report(samples, method: str = "") -> EstimatorReport:
    x = np.asarray(samples, dtype=float)
    n = x.size
    if n < 2:
        raise ValueError("need at least two replicates")
    return EstimatorReport(float(x.mean()), float(x.std(ddof=1) / math.sqrt(n)), n, method)


class RunningMean:
    """Fixed-order accumulation of block sums, for deterministic blocked estimators."""

    def __init__(self):
        self.n = 0
        self.total = 0.0
        self.total_sq = 0.0
        self._shift = None

    def add(self, x: np.ndarray) -> None:
        x = np.asarray(x, dtype=float).reshape(-1)
        if self._shift is None:
            self._shift = float(x[0]) if x.size else 0.0
        y = x - self._shift
        self.n += x.size
        self.total += float(y.sum())
        self.total_sq += float((y * y).sum())

    def report(self, method: str = "") -> EstimatorReport:
        if self.n < 2:
            raise ValueError("need at least two replicates")
        m = self.total / self.n
        var = max(self.total_sq - self.n * m * m, 0.0) / (self.n - 1)
        return EstimatorReport(self._shift + m, math.sqrt(var / self.n), self.n, method)


def ks_1samp(sample, cdf) -> tuple[float, float]:
    res = stats.kstest(np.asarray(sample, dtype=float), cdf)
    return float(res.statistic), float(res.pvalue)


def ks_2samp(a, b) -> tuple[float, float]:
    res = stats.ks_2samp(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    return float(res.statistic), float(res.pvalue)


def gumbel_cdf(x):
    return np.exp(-np.exp(-np.asarray(x, dtype=float)))
