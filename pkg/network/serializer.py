"""Model file codec.

Layout:
    b"FUNET1\n"
    key=value spec lines, including param_hash, terminated by an empty line
    per entry, in canonical order (parameters, then batch-norm running stats):
        name line, comma-separated shape line, raw little-endian float64 values
"""

import io
import os
from collections import OrderedDict
from typing import Dict, List, Tuple

import numpy as np

from autodiff import BatchNormState, Tensor
from network.spec import NetworkSpec
from network.unet import Network, batch_norm_layout, parameter_layout
from utils.errors import ConfigError, DataFormatError
from utils.formatters import stable_hash
from utils.logger import get_logger

logger = get_logger(__name__)

MAGIC = b"FUNET1\n"
_LE_F64 = np.dtype('<f8')


def _entry_layout(spec: NetworkSpec) -> List[Tuple[str, Tuple[int, ...]]]:
    """(name, shape) of every stored array, in file order."""
    entries = [(decl.name, decl.shape) for decl in parameter_layout(spec)]
    for name, channels in batch_norm_layout(spec):
        entries.append((f"{name}.running_mean", (channels,)))
        entries.append((f"{name}.running_var", (channels,)))
    return entries


def layout_hash(spec: NetworkSpec) -> str:
    """Hash of entry names and shapes; detects spec/payload disagreement."""
    return stable_hash([[name, list(shape)] for name, shape in _entry_layout(spec)])


def save(net: Network, path: str):
    """
    Write a network to disk.

    Args:
        net: Network to save
        path: Destination file
    """
    spec = net.spec
    buf = io.BytesIO()
    buf.write(MAGIC)
    for key, value in spec.to_dict().items():
        buf.write(f"{key}={value}\n".encode('ascii'))
    buf.write(f"param_hash={layout_hash(spec)}\n\n".encode('ascii'))

    arrays: Dict[str, np.ndarray] = {name: t.data for name, t in net.parameters.items()}
    for name, state in net.bn_states.items():
        if not state.initialized:
            raise DataFormatError(f"batch norm {name} has no running statistics to save")
        arrays[f"{name}.running_mean"] = state.running_mean
        arrays[f"{name}.running_var"] = state.running_var

    for name, shape in _entry_layout(spec):
        values = np.asarray(arrays[name], dtype=_LE_F64)
        buf.write(f"{name}\n".encode('ascii'))
        buf.write((','.join(str(s) for s in shape) + "\n").encode('ascii'))
        buf.write(values.tobytes(order='C'))

    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, 'wb') as f:
        f.write(buf.getvalue())
    logger.info(f"Saved model to {path} ({net.parameter_count():,} parameters)")


def _read_line(stream: io.BytesIO, what: str) -> str:
    line = stream.readline()
    if not line.endswith(b"\n"):
        raise DataFormatError(f"Truncated model file while reading {what}")
    try:
        return line[:-1].decode('ascii')
    except UnicodeDecodeError:
        raise DataFormatError(f"Corrupted model file: non-ASCII {what}")


def load(path: str) -> Network:
    """
    Read a network written by save().

    Args:
        path: Model file

    Returns:
        Network whose eval-mode forward matches the saved one bit for bit
    """
    if not os.path.exists(path):
        raise DataFormatError(f"Model file not found: {path}")
    with open(path, 'rb') as f:
        stream = io.BytesIO(f.read())

    if stream.read(len(MAGIC)) != MAGIC:
        raise DataFormatError(f"{path}: not a model file (bad magic)")

    header: Dict[str, str] = {}
    while True:
        line = _read_line(stream, 'spec block')
        if line == '':
            break
        key, sep, value = line.partition('=')
        if not sep or not key:
            raise DataFormatError(f"{path}: malformed spec line {line!r}")
        header[key] = value

    stored_hash = header.pop('param_hash', None)
    try:
        spec = NetworkSpec.from_dict(header)
    except ConfigError as e:
        raise DataFormatError(f"{path}: invalid spec block: {e}")
    if stored_hash != layout_hash(spec):
        raise DataFormatError(
            f"{path}: spec/hash mismatch (file {stored_hash}, spec implies {layout_hash(spec)})"
        )

    arrays: Dict[str, np.ndarray] = {}
    for name, shape in _entry_layout(spec):
        found = _read_line(stream, f"entry name for {name}")
        if found != name:
            raise DataFormatError(f"{path}: expected entry {name!r}, found {found!r}")
        shape_line = _read_line(stream, f"shape of {name}")
        try:
            found_shape = tuple(int(s) for s in shape_line.split(','))
        except ValueError:
            raise DataFormatError(f"{path}: malformed shape line for {name}: {shape_line!r}")
        if found_shape != tuple(shape):
            raise DataFormatError(f"{path}: entry {name} has shape {found_shape}, expected {shape}")
        nbytes = int(np.prod(shape)) * _LE_F64.itemsize
        payload = stream.read(nbytes)
        if len(payload) != nbytes:
            raise DataFormatError(f"{path}: truncated payload for {name}")
        arrays[name] = np.frombuffer(payload, dtype=_LE_F64).astype(np.float64).reshape(shape)

    if stream.read(1):
        raise DataFormatError(f"{path}: trailing bytes after last entry")

    parameters: 'OrderedDict[str, Tensor]' = OrderedDict(
        (decl.name, Tensor(arrays[decl.name], requires_grad=True, name=decl.name))
        for decl in parameter_layout(spec)
    )
    bn_states: 'OrderedDict[str, BatchNormState]' = OrderedDict(
        (name, BatchNormState(arrays[f"{name}.running_mean"], arrays[f"{name}.running_var"]))
        for name, _ in batch_norm_layout(spec)
    )
    logger.debug(f"Loaded model from {path}: {spec.variant}, depth={spec.depth}")
    return Network(spec, parameters, bn_states)
