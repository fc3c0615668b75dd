"""Segmentation maps and the dice overlap score."""

from dataclasses import dataclass
from typing import Union

import numpy as np

from autodiff import Tensor
from utils.errors import ShapeError, shape_mismatch


@dataclass(frozen=True)
class DiceScore:
    """Dice of one class in one image; `degenerate` marks an empty prediction and truth."""
    value: float
    degenerate: bool = False


def argmax_labels(probs: Union[Tensor, np.ndarray]) -> np.ndarray:
    """
    Per-pixel class with the highest probability; ties go to the lowest index.

    Args:
        probs: N×C×H×W probability map

    Returns:
        N×H×W integer label map
    """
    data = probs.data if isinstance(probs, Tensor) else np.asarray(probs)
    if data.ndim != 4:
        raise ShapeError(f"probs must be N×C×H×W, got shape {data.shape}",
                         dimension='ndim', expected=4, actual=data.ndim)
    # np.argmax returns the first maximum
    return data.argmax(axis=1).astype(np.int64)


def dice(pred: np.ndarray, truth: np.ndarray, class_id: int) -> DiceScore:
    """
    DC = 2|P∩T| / (|P| + |T|) over the pixels labelled `class_id`.

    When neither map contains the class the score is 1.0 and flagged degenerate.

    Args:
        pred: Predicted label map
        truth: Ground-truth label map of the same shape
        class_id: Class to score

    Returns:
        DiceScore
    """
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise shape_mismatch('dice', 'shape', truth.shape, pred.shape)

    p = pred == class_id
    t = truth == class_id
    total = int(p.sum()) + int(t.sum())
    if total == 0:
        return DiceScore(1.0, degenerate=True)
    overlap = int(np.logical_and(p, t).sum())
    return DiceScore(2.0 * overlap / total)
