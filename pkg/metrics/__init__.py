"""Dice evaluation and paired statistical comparison."""

from .dice import DiceScore, argmax_labels, dice
from .stats import ClassSummary, TTestResult, paired_t_test, student_t_cdf, summarize, two_tailed_p
from .report import Comparison, DiceRow, RunReport, compare_reports, write_comparisons

__all__ = [
    'DiceScore', 'argmax_labels', 'dice',
    'ClassSummary', 'TTestResult', 'paired_t_test', 'student_t_cdf', 'summarize', 'two_tailed_p',
    'Comparison', 'DiceRow', 'RunReport', 'compare_reports', 'write_comparisons',
]
