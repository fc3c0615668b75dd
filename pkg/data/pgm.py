"""Binary PGM (P5, maxval 255) codec for images and label masks.

Images are quantized with round(x·255); masks store raw class indices.
"""

import os
from typing import List, Tuple

import numpy as np

from data.dataset import Sample
from utils.errors import DataFormatError
from utils.logger import get_logger

logger = get_logger(__name__)

MAXVAL = 255


def quantize(image: np.ndarray) -> np.ndarray:
    """[0, 1] doubles to 8-bit values."""
    return np.round(np.clip(image, 0.0, 1.0) * MAXVAL).astype(np.uint8)


def dequantize(values: np.ndarray) -> np.ndarray:
    return values.astype(np.float64) / MAXVAL


def encode_pgm(values: np.ndarray) -> bytes:
    """
    Serialize an H×W uint8 array.

    Args:
        values: 2-D array of 8-bit values

    Returns:
        Header b"P5\\n<W> <H>\\n255\\n" followed by row-major bytes
    """
    values = np.asarray(values)
    if values.ndim != 2:
        raise DataFormatError(f"PGM payload must be 2-D, got shape {values.shape}")
    height, width = values.shape
    header = f"P5\n{width} {height}\n{MAXVAL}\n".encode('ascii')
    return header + np.ascontiguousarray(values, dtype=np.uint8).tobytes()


def _header_tokens(data: bytes, path: str) -> Tuple[List[bytes], int]:
    """Read magic, width, height, maxval; skip '#' comments. Returns (tokens, payload offset)."""
    tokens: List[bytes] = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos >= len(data):
            raise DataFormatError(f"{path}: truncated PGM header")
        if data[pos:pos + 1] == b"#":
            end = data.find(b"\n", pos)
            if end < 0:
                raise DataFormatError(f"{path}: truncated PGM header")
            pos = end + 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    # Exactly one whitespace byte separates maxval from the payload
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise DataFormatError(f"{path}: truncated PGM header")
    return tokens, pos + 1


def decode_pgm(data: bytes, path: str = '<bytes>') -> np.ndarray:
    """
    Parse a P5 PGM with maxval 255.

    Args:
        data: File contents
        path: Name used in error messages

    Returns:
        H×W uint8 array
    """
    if not data.startswith(b"P5"):
        raise DataFormatError(f"{path}: not a binary PGM (missing P5 magic)")
    tokens, offset = _header_tokens(data, path)
    if tokens[0] != b"P5":
        raise DataFormatError(f"{path}: not a binary PGM (missing P5 magic)")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise DataFormatError(f"{path}: malformed PGM header {tokens[1:]}")
    if width <= 0 or height <= 0:
        raise DataFormatError(f"{path}: invalid PGM size {width}×{height}")
    if maxval != MAXVAL:
        raise DataFormatError(f"{path}: unsupported maxval {maxval}, expected {MAXVAL}")

    payload = data[offset:]
    expected = width * height
    if len(payload) < expected:
        raise DataFormatError(f"{path}: truncated PGM payload ({len(payload)} of {expected} bytes)")
    if len(payload) > expected:
        raise DataFormatError(f"{path}: {len(payload) - expected} trailing bytes after PGM payload")
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width).copy()


def write_pgm(path: str, values: np.ndarray):
    with open(path, 'wb') as f:
        f.write(encode_pgm(values))


def read_pgm(path: str) -> np.ndarray:
    if not os.path.exists(path):
        raise DataFormatError(f"PGM file not found: {path}")
    with open(path, 'rb') as f:
        return decode_pgm(f.read(), path)


def save_sample(sample: Sample, directory: str) -> Tuple[str, str]:
    """
    Write a sample as <id>_image.pgm and <id>_mask.pgm.

    Args:
        sample: Sample to write
        directory: Destination directory

    Returns:
        Tuple of (image path, mask path)
    """
    os.makedirs(directory, exist_ok=True)
    if sample.mask.min() < 0 or sample.mask.max() > MAXVAL:
        raise DataFormatError(f"sample {sample.id}: mask values do not fit in 8 bits")
    image_path = os.path.join(directory, f"{sample.id}_image.pgm")
    mask_path = os.path.join(directory, f"{sample.id}_mask.pgm")
    write_pgm(image_path, quantize(sample.image))
    write_pgm(mask_path, sample.mask.astype(np.uint8))
    logger.debug(f"Saved sample {sample.id} to {directory}")
    return image_path, mask_path


def load_sample(image_path: str, mask_path: str, num_classes: int, sample_id: str) -> Sample:
    """
    Read a sample written by save_sample().

    Args:
        image_path: Image PGM
        mask_path: Mask PGM holding class indices
        num_classes: Mask values must be below this
        sample_id: Identifier of the sample

    Returns:
        Sample with the dequantized image
    """
    image = read_pgm(image_path)
    mask = read_pgm(mask_path)
    if image.shape != mask.shape:
        raise DataFormatError(
            f"sample {sample_id}: image {image.shape} and mask {mask.shape} sizes differ"
        )
    if mask.size and int(mask.max()) >= num_classes:
        bad = tuple(int(i) for i in np.argwhere(mask >= num_classes)[0])
        raise DataFormatError(
            f"{mask_path}: mask value {int(mask[bad])} at pixel (y, x)={bad} is not below {num_classes}"
        )
    return Sample(dequantize(image), mask.astype(np.int64), sample_id)


def save_prediction(sample_id: str, labels: np.ndarray, directory: str) -> str:
    """Write a predicted label map as <id>_pred.pgm, class indices stored like masks."""
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 0 or labels.max() > MAXVAL):
        raise DataFormatError(f"prediction {sample_id}: labels do not fit in 8 bits")
    path = os.path.join(directory, f"{sample_id}_pred.pgm")
    write_pgm(path, labels.astype(np.uint8))
    return path
