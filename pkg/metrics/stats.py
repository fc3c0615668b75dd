"""Paired t-test and per-class summaries."""

import math
from dataclasses import dataclass
from typing import Dict, Mapping, Optional, Sequence

import numpy as np
from scipy.special import betainc

from utils.errors import ShapeError, UsageError


@dataclass(frozen=True)
class TTestResult:
    """Paired t-test outcome; `degenerate` marks zero-variance differences."""
    t: float
    df: int
    p: float
    degenerate: bool = False


@dataclass(frozen=True)
class ClassSummary:
    """Mean and sample standard deviation of one class's per-image scores."""
    class_id: int
    mean: float
    std: float
    count: int
    degenerate: int = 0

    @property
    def single_sample(self) -> bool:
        """std is defined as 0 for a single image."""
        return self.count == 1


def student_t_cdf(t: float, df: float) -> float:
    """
    CDF of Student's t via the regularized incomplete beta function.

    Args:
        t: Statistic value
        df: Degrees of freedom

    Returns:
        P(T <= t)
    """
    if math.isinf(t):
        return 1.0 if t > 0 else 0.0
    tail = 0.5 * betainc(df / 2.0, 0.5, df / (df + t * t))
    return 1.0 - tail if t >= 0 else tail


def two_tailed_p(t: float, df: float) -> float:
    """P(|T| >= |t|) for Student's t with `df` degrees of freedom."""
    if math.isinf(t):
        return 0.0
    return float(min(1.0, max(0.0, betainc(df / 2.0, 0.5, df / (df + t * t)))))


def paired_t_test(a: Sequence[float], b: Sequence[float]) -> TTestResult:
    """
    Two-tailed paired t-test on per-image scores.

    Args:
        a: Scores of method A
        b: Scores of method B on the same images, same order

    Returns:
        TTestResult with df = n − 1
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ShapeError(f"paired_t_test needs equal-length 1-D inputs, got {a.shape} and {b.shape}",
                         dimension='n', expected=a.shape, actual=b.shape)
    n = a.size
    if n < 2:
        raise UsageError(f"paired_t_test needs at least 2 pairs, got {n}")

    d = a - b
    df = n - 1
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    if sd == 0.0:
        if mean == 0.0:
            return TTestResult(0.0, df, 1.0, degenerate=True)
        return TTestResult(math.copysign(math.inf, mean), df, 0.0, degenerate=True)

    t = mean / (sd / math.sqrt(n))
    return TTestResult(t, df, two_tailed_p(t, df))


def summarize(scores: Mapping[int, Sequence[float]],
              degenerate: Optional[Mapping[int, int]] = None) -> Dict[int, ClassSummary]:
    """
    Per-class mean ± sample standard deviation.

    Args:
        scores: class_id -> per-image dice values
        degenerate: class_id -> number of those values that are both-empty 1.0s

    Returns:
        class_id -> ClassSummary
    """
    if not scores or any(len(values) == 0 for values in scores.values()):
        raise UsageError("summarize needs at least one score per class")

    summaries = {}
    for class_id in sorted(scores):
        values = np.asarray(scores[class_id], dtype=np.float64)
        std = float(values.std(ddof=1)) if values.size > 1 else 0.0
        summaries[class_id] = ClassSummary(class_id, float(values.mean()), std, int(values.size),
                                           int((degenerate or {}).get(class_id, 0)))
    return summaries
