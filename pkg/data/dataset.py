"""Samples, datasets and the train/val/test partition."""

from dataclasses import dataclass, field
from typing import Iterator, List, Sequence, Tuple

import numpy as np

from autodiff import Tensor
from utils.errors import LabelIndexError, ShapeError, UsageError, shape_mismatch


@dataclass
class Sample:
    """Grayscale image in [0, 1] with its integer label mask over the same pixels."""
    image: np.ndarray
    mask: np.ndarray
    id: str

    def __post_init__(self):
        self.image = np.asarray(self.image, dtype=np.float64)
        self.mask = np.asarray(self.mask, dtype=np.int64)
        if self.image.ndim != 2:
            raise ShapeError(f"sample {self.id}: image must be H×W, got shape {self.image.shape}",
                             dimension='ndim', expected=2, actual=self.image.ndim)
        if self.mask.shape != self.image.shape:
            raise shape_mismatch(f"sample {self.id} mask", 'H×W', self.image.shape, self.mask.shape)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.image.shape

    def check_labels(self, num_classes: int):
        """Raise LabelIndexError if any mask value is outside [0, num_classes)."""
        bad = np.argwhere((self.mask < 0) | (self.mask >= num_classes))
        if bad.size:
            pixel = tuple(int(i) for i in bad[0])
            value = int(self.mask[pixel])
            raise LabelIndexError(
                f"sample {self.id}: mask value {value} at pixel (y, x)={pixel} is outside [0, {num_classes})",
                pixel=pixel, value=value
            )

    def class_counts(self, num_classes: int) -> np.ndarray:
        return np.bincount(self.mask.ravel(), minlength=num_classes)


@dataclass
class Dataset:
    """Ordered collection of samples sharing a class count."""
    samples: List[Sample] = field(default_factory=list)
    num_classes: int = 3

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self) -> Iterator[Sample]:
        return iter(self.samples)

    def __getitem__(self, index: int) -> Sample:
        return self.samples[index]

    @property
    def ids(self) -> List[str]:
        return [s.id for s in self.samples]

    def subset(self, indices: Sequence[int]) -> 'Dataset':
        return Dataset([self.samples[i] for i in indices], self.num_classes)

    def batch(self, indices: Sequence[int]) -> Tuple[Tensor, np.ndarray]:
        """
        Stack samples into network input.

        Args:
            indices: Sample positions

        Returns:
            Tuple of (N×1×H×W image tensor, N×H×W label array)
        """
        chosen = [self.samples[i] for i in indices]
        if not chosen:
            raise UsageError("cannot build an empty batch")
        shapes = {s.shape for s in chosen}
        if len(shapes) > 1:
            raise ShapeError(f"batch mixes image shapes {sorted(shapes)}", dimension='H×W')
        images = np.stack([s.image for s in chosen])[:, None, :, :]
        labels = np.stack([s.mask for s in chosen])
        return Tensor(images), labels

    def small_class_fraction(self) -> float:
        """Mean fraction of pixels carrying the highest class index."""
        small = self.num_classes - 1
        return float(np.mean([np.mean(s.mask == small) for s in self.samples]))


def split(dataset: Dataset, n_train: int, n_val: int, seed: int) -> Tuple[Dataset, Dataset, Dataset]:
    """
    Uniform random partition into train, validation and test sets.

    Args:
        dataset: Samples to partition
        n_train: Training set size
        n_val: Validation set size; the remainder is the test set
        seed: Partition seed

    Returns:
        Tuple of (train, val, test), each keeping the dataset order
    """
    if n_train < 0 or n_val < 0:
        raise UsageError(f"split sizes must be non-negative, got {n_train}/{n_val}")
    if n_train + n_val > len(dataset):
        raise UsageError(
            f"split needs {n_train} + {n_val} samples but the dataset has only {len(dataset)}"
        )
    order = np.random.default_rng(seed).permutation(len(dataset))
    train_idx = sorted(order[:n_train].tolist())
    val_idx = sorted(order[n_train:n_train + n_val].tolist())
    test_idx = sorted(order[n_train + n_val:].tolist())
    return dataset.subset(train_idx), dataset.subset(val_idx), dataset.subset(test_idx)
