"""Per-image dice reports and paired comparisons between runs."""

import os
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

from exporter.writer import CSVWriter, read_rows
from metrics.stats import ClassSummary, TTestResult, paired_t_test, summarize
from utils.errors import DataFormatError
from utils.formatters import format_float
from utils.logger import get_logger

logger = get_logger(__name__)

METRICS_HEADER = ['image_id', 'class_id', 'dice']
COMPARISON_HEADER = ['class_id', 'method_a', 'method_b', 't', 'df', 'p']


@dataclass(frozen=True)
class DiceRow:
    image_id: str
    class_id: int
    dice: float
    degenerate: bool = False


@dataclass(frozen=True)
class Comparison:
    """Paired t-test of one class between two methods."""
    class_id: int
    method_a: str
    method_b: str
    result: TTestResult


@dataclass
class RunReport:
    """Per-image per-class dice of one run."""
    rows: List[DiceRow] = field(default_factory=list)

    def scores_by_class(self) -> 'OrderedDict[int, List[float]]':
        grouped: 'OrderedDict[int, List[float]]' = OrderedDict()
        for row in sorted(self.rows, key=lambda r: r.class_id):
            grouped.setdefault(row.class_id, []).append(row.dice)
        return grouped

    def degenerate_counts(self) -> Dict[int, int]:
        counts: Dict[int, int] = {}
        for row in self.rows:
            counts[row.class_id] = counts.get(row.class_id, 0) + int(row.degenerate)
        return counts

    def summaries(self) -> Dict[int, ClassSummary]:
        """Per-class mean ± std, with the number of both-empty scores in each class."""
        return summarize(self.scores_by_class(), self.degenerate_counts())

    def mean_dice(self, class_ids: Sequence[int]) -> float:
        """Mean per-image dice over the given classes."""
        values = [row.dice for row in self.rows if row.class_id in class_ids]
        return sum(values) / len(values) if values else 0.0

    def keyed(self) -> Dict[Tuple[str, int], float]:
        return {(row.image_id, row.class_id): row.dice for row in self.rows}

    def write_csv(self, path: str) -> str:
        """
        Write the metrics CSV: image_id,class_id,dice.

        The degenerate flag is not stored; a report read back counts none.

        Args:
            path: Destination file

        Returns:
            Path written
        """
        writer = CSVWriter(os.path.dirname(path) or '.')
        rows = [[row.image_id, row.class_id, format_float(row.dice)] for row in self.rows]
        return writer.write_table(os.path.basename(path), METRICS_HEADER, rows)

    @classmethod
    def read_csv(cls, path: str) -> 'RunReport':
        """Read a metrics CSV written by write_csv()."""
        rows = []
        for record in read_rows(path, METRICS_HEADER):
            try:
                rows.append(DiceRow(record['image_id'], int(record['class_id']), float(record['dice'])))
            except ValueError:
                raise DataFormatError(f"{path}: malformed metrics row {record}")
        if not rows:
            raise DataFormatError(f"{path}: no metrics rows")
        return cls(rows)


def compare_reports(report_a: RunReport, report_b: RunReport,
                    name_a: str = 'a', name_b: str = 'b') -> List[Comparison]:
    """
    Paired t-test per class, pairing rows by (image_id, class_id).

    Args:
        report_a: First run
        report_b: Second run on the same images
        name_a: Label of the first run
        name_b: Label of the second run

    Returns:
        One Comparison per class, ascending class_id
    """
    keyed_a, keyed_b = report_a.keyed(), report_b.keyed()
    if set(keyed_a) != set(keyed_b):
        missing = sorted(set(keyed_a) ^ set(keyed_b))
        raise DataFormatError(
            f"Cannot pair runs: {len(missing)} (image_id, class_id) pairs appear in only one run, "
            f"e.g. {missing[0]}"
        )

    comparisons = []
    for class_id in sorted({key[1] for key in keyed_a}):
        keys = sorted(key for key in keyed_a if key[1] == class_id)
        result = paired_t_test([keyed_a[k] for k in keys], [keyed_b[k] for k in keys])
        comparisons.append(Comparison(class_id, name_a, name_b, result))
    return comparisons


def write_comparisons(path: str, comparisons: Sequence[Comparison]) -> str:
    """Write the comparison CSV: class_id,method_a,method_b,t,df,p."""
    writer = CSVWriter(os.path.dirname(path) or '.')
    rows = [
        [c.class_id, c.method_a, c.method_b, format_float(c.result.t), c.result.df, format_float(c.result.p)]
        for c in comparisons
    ]
    return writer.write_table(os.path.basename(path), COMPARISON_HEADER, rows)
