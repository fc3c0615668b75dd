"""Per-image dice evaluation of a trained network."""

import os
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional

from data import Dataset, Sample, save_prediction
from metrics import DiceRow, RunReport, argmax_labels, dice
from network import Network
from utils.logger import get_logger

logger = get_logger(__name__)


def _score_sample(net: Network, sample: Sample, class_ids: List[int],
                  predictions_dir: Optional[str] = None) -> List[DiceRow]:
    images, labels = Dataset([sample], net.spec.num_classes).batch([0])
    pred = argmax_labels(net.forward(images, mode='eval'))[0]
    if predictions_dir:
        save_prediction(sample.id, pred, predictions_dir)
    rows = []
    for class_id in class_ids:
        score = dice(pred, labels[0], class_id)
        rows.append(DiceRow(sample.id, class_id, score.value, score.degenerate))
    return rows


def evaluate(net: Network, dataset: Dataset, include_background: bool = True,
             workers: int = 1, predictions_dir: Optional[str] = None) -> RunReport:
    """
    Eval-mode forward per image (batch size 1), argmax, per-class dice.

    Images fan out over a thread pool; rows keep dataset order and then
    ascending class id regardless of the worker count.

    Args:
        net: Trained network
        dataset: Images to score
        include_background: Also report class 0
        workers: Thread pool size
        predictions_dir: When set, each argmax label map is written there as <id>_pred.pgm

    Returns:
        RunReport with |dataset| × (number of reported classes) rows
    """
    frozen = net.frozen_copy()
    first_class = 0 if include_background else 1
    class_ids = list(range(first_class, net.spec.num_classes))
    for sample in dataset:
        sample.check_labels(net.spec.num_classes)
    if predictions_dir:
        os.makedirs(predictions_dir, exist_ok=True)

    score = lambda s: _score_sample(frozen, s, class_ids, predictions_dir)
    if workers > 1 and len(dataset) > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            per_sample = list(executor.map(score, dataset))
    else:
        per_sample = [score(s) for s in dataset]

    report = RunReport([row for rows in per_sample for row in rows])
    degenerate = sum(row.degenerate for row in report.rows)
    logger.debug(f"Evaluated {len(dataset)} images over classes {class_ids} "
                 f"({degenerate} degenerate scores)")
    if predictions_dir:
        logger.info(f"Predicted label maps written to {predictions_dir} ({len(dataset)} files)")
    return report
