"""Synthetic unbalanced segmentation data and its file formats."""

from .dataset import Dataset, Sample, split
from .synth import NUM_CLASSES, SynthConfig, generate
from .pgm import decode_pgm, encode_pgm, load_sample, save_prediction, save_sample
from .manifest import load_dataset, write_dataset

__all__ = [
    'Dataset', 'Sample', 'split', 'NUM_CLASSES', 'SynthConfig', 'generate',
    'decode_pgm', 'encode_pgm', 'load_sample', 'save_prediction', 'save_sample',
    'load_dataset', 'write_dataset',
]
