"""Dense tensor type and reverse-mode gradient tape."""

import threading
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from utils.errors import NumericalError, ShapeError, UsageError
from utils.logger import get_logger

logger = get_logger(__name__)

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_state = threading.local()


def _tape_stack() -> List['Tape']:
    if not hasattr(_state, 'tapes'):
        _state.tapes = []
    return _state.tapes


def is_grad_enabled() -> bool:
    """Whether ops on this thread record onto a tape."""
    return getattr(_state, 'grad_enabled', True)


@contextmanager
def no_grad() -> Iterator[None]:
    """Disable tape recording on the current thread."""
    previous = is_grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


class Tensor:
    """
    Dense float64 n-dimensional array participating in the autodiff tape.

    Activations use the N×C×H×W layout, convolution kernels Cout×Cin×Kh×Kw.
    The value array is read-only; only the grad slot changes after creation
    (parameters are replaced wholesale by the optimizer through assign()).
    """

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        array = np.array(data, dtype=np.float64)
        array.setflags(write=False)
        self.data: np.ndarray = array
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.tape: Optional['Tape'] = None
        self.name = name

    @classmethod
    def from_flat(cls, shape: Sequence[int], values: Sequence[float],
                  requires_grad: bool = False, name: Optional[str] = None) -> 'Tensor':
        """
        Create a tensor from a shape and flat row-major values.

        Args:
            shape: List of positive extents
            values: Flat values, product(shape) of them
            requires_grad: Whether this leaf receives gradients
            name: Optional stable name

        Returns:
            Tensor instance
        """
        shape = tuple(int(s) for s in shape)
        if any(s <= 0 for s in shape):
            raise ShapeError(f"Extents must be positive, got {shape}", dimension='shape')
        flat = np.asarray(values, dtype=np.float64).ravel()
        expected = int(np.prod(shape)) if shape else 1
        if flat.size != expected:
            raise ShapeError(
                f"product(shape)={expected} does not match {flat.size} values",
                dimension='data', expected=expected, actual=flat.size
            )
        return cls(flat.reshape(shape), requires_grad=requires_grad, name=name)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self.tape is None

    def numpy(self) -> np.ndarray:
        """Return a writable copy of the values."""
        return np.array(self.data)

    def item(self) -> float:
        if self.size != 1:
            raise UsageError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.data).all())

    def check_finite(self, what: str = 'tensor') -> 'Tensor':
        """Raise NumericalError if any value is NaN or infinite."""
        if not self.is_finite():
            bad = int((~np.isfinite(self.data)).sum())
            raise NumericalError(f"{what} ({self.name or 'unnamed'}) holds {bad} non-finite values")
        return self

    def assign(self, values: np.ndarray):
        """Replace the values of a leaf tensor (optimizer updates)."""
        if not self.is_leaf:
            raise UsageError("Only leaf tensors can be assigned")
        values = np.array(values, dtype=np.float64)
        if values.shape != self.shape:
            raise ShapeError(
                f"assign: shape {values.shape} does not match {self.shape}",
                dimension='shape', expected=self.shape, actual=values.shape
            )
        values.setflags(write=False)
        self.data = values

    def zero_grad(self):
        self.grad = None

    def accumulate_grad(self, grad: np.ndarray):
        if grad.shape != self.shape:
            raise ShapeError(
                f"gradient shape {grad.shape} does not match tensor {self.shape}",
                dimension='grad', expected=self.shape, actual=grad.shape
            )
        if self.grad is None:
            self.grad = np.array(grad, dtype=np.float64)
        else:
            self.grad = self.grad + grad

    def __add__(self, other):
        from autodiff import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        from autodiff import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from autodiff import ops
        return ops.mul(self, -1.0)

    def __sub__(self, other):
        from autodiff import ops
        return ops.add(self, ops.mul(as_tensor(other), -1.0))

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ''
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"


def as_tensor(value) -> Tensor:
    """Wrap constants so ops accept numbers and arrays."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


@dataclass
class TapeRecord:
    """One recorded op: inputs, output, and the closure holding saved intermediates."""
    op: str
    inputs: Tuple[Tensor, ...]
    output: Tensor
    backward_fn: BackwardFn


class Tape:
    """
    Ordered op records in forward (topological) order.

    Usable as a context manager: ops whose inputs are all leaves record onto
    the innermost active tape of the current thread. Outside any context they
    start an implicit tape; implicit tapes merge when a later op joins them.
    """

    def __init__(self, implicit: bool = False):
        self.records: List[TapeRecord] = []
        self.implicit = implicit
        self.merged_into: Optional['Tape'] = None

    def record(self, op: str, inputs: Sequence[Tensor], output: Tensor, backward_fn: BackwardFn):
        output.tape = self
        self.records.append(TapeRecord(op, tuple(inputs), output, backward_fn))

    def absorb(self, other: 'Tape'):
        """Append the records of an independent tape; its outputs now belong to this one."""
        for record in other.records:
            record.output.tape = self
        self.records.extend(other.records)
        other.records = []
        other.merged_into = self

    def resolved(self) -> 'Tape':
        """The tape this one was merged into, or itself."""
        tape = self
        while tape.merged_into is not None:
            tape = tape.merged_into
        return tape

    def __len__(self) -> int:
        return len(self.records)

    def __enter__(self) -> 'Tape':
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        stack = _tape_stack()
        if stack and stack[-1] is self:
            stack.pop()
        return False

    def leaves(self) -> List[Tensor]:
        """Distinct requires_grad leaves consumed by this tape, in first-use order."""
        seen: Dict[int, Tensor] = {}
        for record in self.records:
            for tensor in record.inputs:
                if tensor.is_leaf and tensor.requires_grad and id(tensor) not in seen:
                    seen[id(tensor)] = tensor
        return list(seen.values())


def current_tape() -> Optional[Tape]:
    stack = _tape_stack()
    return stack[-1] if stack else None


def _resolve_tape(inputs: Sequence[Tensor]) -> Tape:
    tapes: Dict[int, Tape] = {}
    for t in inputs:
        if t.tape is not None:
            tape = t.tape.resolved()
            tapes.setdefault(id(tape), tape)
    if not tapes:
        tape = current_tape()
        return tape if tape is not None else Tape(implicit=True)

    explicit = [tape for tape in tapes.values() if not tape.implicit]
    if len(explicit) > 1:
        raise UsageError("Op inputs were recorded on different tapes")
    # inputs on separate tapes share no records, so appending keeps forward order
    target = explicit[0] if explicit else next(iter(tapes.values()))
    for tape in tapes.values():
        if tape is not target:
            target.absorb(tape)
    return target


def make_output(op: str, data: np.ndarray, inputs: Sequence[Tensor], backward_fn: BackwardFn) -> Tensor:
    """
    Wrap an op result and record it when any input needs a gradient.

    Args:
        op: Op identifier for the tape record
        data: Forward result
        inputs: Op inputs (in backward_fn return order)
        backward_fn: Maps the upstream gradient to one gradient per input

    Returns:
        Output tensor
    """
    needs_grad = is_grad_enabled() and any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=needs_grad)
    if needs_grad:
        _resolve_tape(inputs).record(op, inputs, out, backward_fn)
    return out


def backward(loss: Tensor, tape: Optional[Tape] = None):
    """
    Populate gradients on every requires_grad leaf of the tape.

    Gradients accumulate into existing grad slots; call zero_grad() to reset.
    Leaves on the tape that the loss does not reach get an all-zero gradient.

    Args:
        loss: Single-element tensor produced on the tape
        tape: Tape to replay, defaults to the tape that produced the loss
    """
    if loss.size != 1:
        raise UsageError(f"backward needs a scalar loss, got shape {loss.shape}")

    tape = tape or loss.tape
    if tape is not None:
        tape = tape.resolved()
    if tape is None:
        if not loss.requires_grad:
            raise UsageError("loss is not on a tape and does not require grad")
        loss.accumulate_grad(np.ones(loss.shape))
        return
    if loss.tape is not tape:
        raise UsageError("loss was not recorded on the given tape")

    grads: Dict[int, np.ndarray] = {id(loss): np.ones(loss.shape)}
    for record in reversed(tape.records):
        upstream = grads.pop(id(record.output), None)
        if upstream is None:
            continue
        input_grads = record.backward_fn(upstream)
        for tensor, grad in zip(record.inputs, input_grads):
            if grad is None or not tensor.requires_grad:
                continue
            if tensor.is_leaf:
                tensor.accumulate_grad(grad)
            else:
                existing = grads.get(id(tensor))
                grads[id(tensor)] = grad if existing is None else existing + grad

    for leaf in tape.leaves():
        if leaf.grad is None:
            leaf.grad = np.zeros(leaf.shape)


def zero_grad(parameters: Iterable[Tensor]):
    """Reset the grad slot of every tensor."""
    for tensor in parameters:
        tensor.zero_grad()
