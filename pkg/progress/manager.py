"""Training log and run summary persistence."""

import json
import os
from dataclasses import asdict, dataclass, field
from datetime import datetime
from threading import Lock
from typing import Any, Dict, List, Optional

from exporter.writer import CSVWriter, read_rows
from utils.errors import DataFormatError
from utils.formatters import format_float
from utils.logger import get_logger

logger = get_logger(__name__)

TRAIN_LOG_HEADER = ['step', 'epoch', 'loss', 'mean_weight']
VALIDATION_HEADER = ['epoch', 'mean_val_dice']
TRAIN_LOG_FILE = 'train_log.csv'
VALIDATION_FILE = 'validation.csv'
SUMMARY_FILE = 'run_summary.json'


@dataclass(frozen=True)
class IterationRecord:
    step: int
    epoch: int
    loss: float
    mean_weight: float


@dataclass(frozen=True)
class ValidationRecord:
    epoch: int
    mean_val_dice: float


@dataclass
class TrainLog:
    """Per-iteration loss and mean feedback weight, per-epoch validation dice."""
    iterations: List[IterationRecord] = field(default_factory=list)
    validation: List[ValidationRecord] = field(default_factory=list)
    best_epoch: Optional[int] = None
    best_val_dice: Optional[float] = None

    def add_iteration(self, step: int, epoch: int, loss: float, mean_weight: float):
        self.iterations.append(IterationRecord(step, epoch, loss, mean_weight))

    def add_validation(self, epoch: int, dice: float) -> bool:
        """Record a validation score; True if it strictly improves on the best so far."""
        self.validation.append(ValidationRecord(epoch, dice))
        if self.best_val_dice is None or dice > self.best_val_dice:
            self.best_epoch, self.best_val_dice = epoch, dice
            return True
        return False

    @property
    def losses(self) -> List[float]:
        return [r.loss for r in self.iterations]

    @property
    def mean_weights(self) -> List[float]:
        return [r.mean_weight for r in self.iterations]


@dataclass
class RunSummary:
    """Outcome of one training run."""
    config_hash: str
    method: str
    parameter_count: int
    iterations: int
    best_epoch: Optional[int]
    best_val_dice: Optional[float]
    final_val_dice: Optional[float]
    start_time: str
    duration_seconds: float

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary."""
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'RunSummary':
        """Create from dictionary."""
        return cls(**data)


class ProgressManager:
    """Write and read the training artifacts of one output directory."""

    def __init__(self, output_directory: str):
        """
        Initialize progress manager.

        Args:
            output_directory: Run output directory
        """
        self.output_directory = output_directory
        self.writer = CSVWriter(output_directory)
        self.lock = Lock()

    @staticmethod
    def now() -> str:
        return datetime.now().strftime('%Y-%m-%d %H:%M:%S')

    def write_log(self, log: TrainLog) -> List[str]:
        """
        Write train_log.csv and validation.csv.

        Args:
            log: Training log

        Returns:
            Paths written
        """
        train_rows = [
            [r.step, r.epoch, format_float(r.loss), format_float(r.mean_weight)]
            for r in log.iterations
        ]
        val_rows = [[r.epoch, format_float(r.mean_val_dice)] for r in log.validation]
        with self.lock:
            paths = [
                self.writer.write_table(TRAIN_LOG_FILE, TRAIN_LOG_HEADER, train_rows),
                self.writer.write_table(VALIDATION_FILE, VALIDATION_HEADER, val_rows),
            ]
        logger.info(f"Training log saved: {paths[0]} ({len(train_rows)} iterations)")
        return paths

    def read_log(self) -> Optional[TrainLog]:
        """Read train_log.csv and validation.csv back into a TrainLog, or None if never written."""
        train_path = self.writer.get_file_path(TRAIN_LOG_FILE)
        if not os.path.exists(train_path):
            return None
        log = TrainLog()
        try:
            for rec in read_rows(train_path, TRAIN_LOG_HEADER):
                log.add_iteration(int(rec['step']), int(rec['epoch']),
                                  float(rec['loss']), float(rec['mean_weight']))
            for rec in read_rows(self.writer.get_file_path(VALIDATION_FILE), VALIDATION_HEADER):
                log.add_validation(int(rec['epoch']), float(rec['mean_val_dice']))
        except ValueError as e:
            raise DataFormatError(f"Malformed training log in {self.output_directory}: {e}")
        return log

    def save_summary(self, summary: RunSummary) -> str:
        """
        Save run_summary.json.

        Args:
            summary: Run summary

        Returns:
            Path written
        """
        path = self.writer.get_file_path(SUMMARY_FILE)
        with self.lock:
            with open(path, 'w', encoding='utf-8') as f:
                json.dump(summary.to_dict(), f, ensure_ascii=False, indent=2)
        logger.debug(f"Run summary saved: {path}")
        return path

    def load_summary(self) -> Optional[RunSummary]:
        """
        Load run_summary.json.

        Returns:
            RunSummary if the file exists, None otherwise
        """
        path = self.writer.get_file_path(SUMMARY_FILE)
        if not os.path.exists(path):
            logger.info("No run summary found")
            return None
        try:
            with open(path, 'r', encoding='utf-8') as f:
                return RunSummary.from_dict(json.load(f))
        except (ValueError, TypeError) as e:
            raise DataFormatError(f"Malformed run summary {path}: {e}")
