"""Dataset manifest: CSV `id,image_path,mask_path` with paths relative to the manifest."""

import os
from typing import List, Tuple

from data.dataset import Dataset
from data.pgm import load_sample, save_sample
from exporter.writer import CSVWriter, read_rows
from utils.errors import DataFormatError
from utils.logger import get_logger

logger = get_logger(__name__)

MANIFEST_HEADER = ['id', 'image_path', 'mask_path']
MANIFEST_NAME = 'manifest.csv'


def write_dataset(dataset: Dataset, directory: str) -> str:
    """
    Write every sample as PGM pairs plus a manifest.

    Args:
        dataset: Samples to write
        directory: Output directory; samples go to <directory>/samples

    Returns:
        Manifest path
    """
    sample_dir = os.path.join(directory, 'samples')
    rows: List[Tuple[str, str, str]] = []
    for sample in dataset:
        image_path, mask_path = save_sample(sample, sample_dir)
        rows.append((
            sample.id,
            os.path.relpath(image_path, directory).replace(os.sep, '/'),
            os.path.relpath(mask_path, directory).replace(os.sep, '/'),
        ))
    path = CSVWriter(directory).write_table(MANIFEST_NAME, MANIFEST_HEADER, rows)
    logger.info(f"Wrote {len(rows)} samples and manifest {path}")
    return path


def load_dataset(manifest_path: str, num_classes: int) -> Dataset:
    """
    Load every sample listed in a manifest.

    Args:
        manifest_path: Manifest CSV
        num_classes: Mask values must be below this

    Returns:
        Dataset in manifest order
    """
    logger.info(f"Loading dataset from manifest: {manifest_path}")
    base = os.path.dirname(manifest_path)
    records = read_rows(manifest_path, MANIFEST_HEADER)

    seen = set()
    samples = []
    for record in records:
        sample_id = record['id']
        if not sample_id:
            raise DataFormatError(f"{manifest_path}: empty sample id")
        if sample_id in seen:
            raise DataFormatError(f"{manifest_path}: duplicate sample id {sample_id}")
        seen.add(sample_id)
        samples.append(load_sample(
            os.path.join(base, record['image_path']),
            os.path.join(base, record['mask_path']),
            num_classes,
            sample_id,
        ))

    if not samples:
        raise DataFormatError(f"{manifest_path}: manifest lists no samples")
    logger.info(f"Loaded {len(samples)} samples")
    return Dataset(samples, num_classes)
