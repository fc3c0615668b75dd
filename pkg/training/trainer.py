"""Mini-batch Adam training with best-validation checkpointing."""

from dataclasses import dataclass, field
from typing import Iterator, List, Optional

import numpy as np
from tqdm import tqdm

from autodiff import Tape, backward
from data import Dataset
from loss import loss_step
from network import Network
from network.unet import NetworkSnapshot
from progress import TrainLog
from training.evaluator import evaluate
from training.hyperparams import Hyperparams
from training.optimizer import Adam
from utils.errors import NumericalError
from utils.logger import get_logger

logger = get_logger(__name__)


@dataclass
class TrainState:
    """Everything that changes while training one network."""
    network: Network
    optimizer: Adam
    rng: np.random.Generator
    step: int = 0
    best: Optional[NetworkSnapshot] = None
    log: TrainLog = field(default_factory=TrainLog)


def batch_order(n_train: int, batch_size: int, rng: np.random.Generator) -> Iterator[List[int]]:
    """
    Endless stream of batches drawn without replacement within each pass.

    A pass is a fresh permutation; when fewer than batch_size indices are
    left the remainder is dropped and a new pass starts.
    """
    while True:
        order = rng.permutation(n_train)
        for start in range(0, n_train - batch_size + 1, batch_size):
            yield [int(i) for i in order[start:start + batch_size]]


def validation_dice(net: Network, val_set: Dataset, workers: int = 1) -> float:
    """Mean per-image dice over the foreground classes."""
    report = evaluate(net, val_set, include_background=False, workers=workers)
    return report.mean_dice(range(1, net.spec.num_classes))


def train_step(state: TrainState, dataset: Dataset, indices: List[int], hp: Hyperparams):
    """
    One iteration: forward(train) → loss → backward → Adam.

    Returns:
        Tuple of (loss value, mean feedback weight)
    """
    net = state.network
    images, labels = dataset.batch(indices)
    with Tape() as tape:
        probs = net.forward(images, mode='train')
        loss, weights = loss_step(probs, labels, hp.loss)

    value = loss.item()
    if not np.isfinite(value):
        norms = net.parameter_norms()
        bad = sorted(name for name, norm in norms.items() if not np.isfinite(norm))
        raise NumericalError(
            f"Non-finite loss {value} at iteration {state.step}; {len(bad)} parameters have non-finite norms "
            f"(max finite norm {max((v for v in norms.values() if np.isfinite(v)), default=0.0):.4g})",
            iteration=state.step, parameter_norms=norms
        )

    state.optimizer.zero_grad()
    backward(loss, tape)
    state.optimizer.step()
    state.step += 1
    return value, float(np.mean(weights))


def train(net: Network, train_set: Dataset, val_set: Dataset, hp: Hyperparams):
    """
    Train with the configured loss and keep the best-validation network.

    After every epoch the network is scored on val_set; the parameters and
    batch-norm statistics of the strictly best epoch are restored before
    returning. With an empty val_set the final network is returned.

    Args:
        net: Freshly built network, trained in place
        train_set: Training samples
        val_set: Validation samples
        hp: Hyperparameters

    Returns:
        Tuple of (trained network, TrainLog)
    """
    hp.validate(len(train_set))
    for sample in train_set:
        sample.check_labels(net.spec.num_classes)

    iterations = hp.iterations(len(train_set))
    total = iterations * hp.epochs
    state = TrainState(
        network=net,
        optimizer=Adam(net.parameter_list(), hp.learning_rate, hp.adam_beta1, hp.adam_beta2, hp.adam_epsilon),
        rng=np.random.default_rng(hp.seed),
    )
    batches = batch_order(len(train_set), hp.batch_size, state.rng)

    logger.info(f"Training {net.spec.variant} network with {hp.loss.mode} loss "
                f"(β={hp.loss.beta}): {hp.epochs} epochs × {iterations} iterations, "
                f"batch size {hp.batch_size}, lr {hp.learning_rate}")

    progress_bar = tqdm(total=total, desc="Training", unit="it", disable=not hp.progress_bar)
    try:
        for epoch in range(hp.epochs):
            for _ in range(iterations):
                loss, mean_weight = train_step(state, train_set, next(batches), hp)
                state.log.add_iteration(state.step - 1, epoch, loss, mean_weight)
                logger.debug(f"step {state.step - 1}: loss={loss:.6f} mean_weight={mean_weight:.4f}")
                progress_bar.update(1)
                progress_bar.set_postfix(loss=f"{loss:.4f}", w=f"{mean_weight:.3f}",
                                         best=f"{state.log.best_val_dice or 0.0:.4f}")

            if len(val_set):
                score = validation_dice(net, val_set, hp.eval_workers)
                if state.log.add_validation(epoch, score):
                    state.best = net.snapshot()
                    logger.info(f"Epoch {epoch + 1}/{hp.epochs}: val dice {score:.4f} (new best)")
                else:
                    logger.info(f"Epoch {epoch + 1}/{hp.epochs}: val dice {score:.4f}")
    finally:
        progress_bar.close()

    if state.best is not None:
        net.restore(state.best)
        logger.info(f"Restored best checkpoint from epoch {state.log.best_epoch + 1} "
                    f"(val dice {state.log.best_val_dice:.4f})")
    return net, state.log
