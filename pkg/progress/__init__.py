"""Training logs and run summaries."""

from .manager import IterationRecord, ProgressManager, RunSummary, TrainLog, ValidationRecord

__all__ = ['IterationRecord', 'ProgressManager', 'RunSummary', 'TrainLog', 'ValidationRecord']
