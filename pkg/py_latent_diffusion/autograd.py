# -*- coding: utf-8 -*-
"""Dense tensors and the reverse-mode differentiation tape.

A `Tensor` wraps a numpy array. While a `Tape` is active (``with Tape() as
tape:``) every primitive from :mod:`py_latent_diffusion.ops` that touches a
tensor already on the tape appends a node holding its operand handles and a
vector-Jacobian product. `backward` walks the tape once, from the loss node
down to the first node, and returns one gradient per trainable parameter.

Arrays default to 32-bit floats; ``with precision(np.float64):`` switches the
default for gradient checking. The open tapes and the default precision live in
context variables, so each thread starts with no tape and 32-bit floats.
"""
import contextlib
from contextvars import ContextVar, Token
from typing import Any, Callable, Dict, Iterator, List, NamedTuple, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from .exceptions import ShapeError

__all__ = [
    'Tensor', 'Tape', 'as_tensor', 'backward', 'precision', 'get_default_dtype', 'active_tape',
    'record'
]

VJP = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_DEFAULT_DTYPE: ContextVar[Any] = ContextVar('default_dtype', default=np.float32)
_TAPES: ContextVar[Tuple['Tape', ...]] = ContextVar('tapes', default=())


def get_default_dtype() -> Any:
    return _DEFAULT_DTYPE.get()


@contextlib.contextmanager
def precision(dtype: Any) -> Iterator[None]:
    token = _DEFAULT_DTYPE.set(np.dtype(dtype).type)
    try:
        yield
    finally:
        _DEFAULT_DTYPE.reset(token)


class Tensor:
    __slots__ = ('data', 'node')

    def __init__(self, data: Any, node: Optional[int] = None) -> None:
        array = np.asarray(data)
        if array.dtype.kind != 'f':
            array = array.astype(_DEFAULT_DTYPE.get())
        self.data: np.ndarray = array
        self.node = node

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self) -> Any:
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        return f'Tensor(shape={self.shape}, dtype={self.dtype}, node={self.node})'


def as_tensor(value: Any) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


class _Node(NamedTuple):
    op: str
    parents: Tuple[Optional[int], ...]
    shape: Tuple[int, ...]
    vjp: Optional[VJP]


class Tape:
    """Append-only record of differentiable operations."""

    def __init__(self) -> None:
        self.nodes: List[_Node] = []
        self.parameters: Dict[str, int] = {}
        self._token: Optional[Token] = None

    def __enter__(self) -> 'Tape':
        self._token = _TAPES.set(_TAPES.get() + (self, ))
        return self

    def __exit__(self, *exc_info: Any) -> None:
        assert _TAPES.get()[-1] is self, 'tapes must be closed in the order they were opened'
        _TAPES.reset(self._token)
        self._token = None

    def __len__(self) -> int:
        return len(self.nodes)

    def append(self, op: str, parents: Tuple[Optional[int], ...], shape: Tuple[int, ...],
               vjp: Optional[VJP]) -> int:
        assert all(parent is None or parent < len(self.nodes) for parent in parents)
        self.nodes.append(_Node(op, parents, shape, vjp))
        return len(self.nodes) - 1

    def parameter(self, value: Any, name: Optional[str] = None) -> Tensor:
        """Registers ``value`` as a trainable leaf and returns its tensor."""
        name = name if name is not None else f'param{len(self.parameters)}'
        if name in self.parameters:
            raise ValueError(f'parameter {name!r} is already on the tape')
        tensor = Tensor(value)
        tensor.node = self.append('parameter', (), tensor.shape, None)
        self.parameters[name] = tensor.node
        return tensor

    def to_graph(self) -> nx.DiGraph:
        graph = nx.DiGraph()
        for index, node in enumerate(self.nodes):
            graph.add_node(index, op=node.op, shape=node.shape)
            for parent in node.parents:
                if parent is not None:
                    graph.add_edge(parent, index)
        return graph


def active_tape() -> Optional[Tape]:
    tapes = _TAPES.get()
    return tapes[-1] if tapes else None


def record(op: str, value: np.ndarray, operands: Sequence[Tensor], vjp: VJP) -> Tensor:
    """Wraps ``value`` and, when an operand is on the active tape, appends a node for it."""
    tape = active_tape()
    if tape is None or all(operand.node is None for operand in operands):
        return Tensor(value)
    out = Tensor(value)
    out.node = tape.append(op, tuple(operand.node for operand in operands), out.shape, vjp)
    return out


def backward(tape: Tape, loss: Tensor) -> Dict[str, np.ndarray]:
    if loss.data.size != 1:
        raise ShapeError(f'backward needs a scalar loss, got shape {loss.shape}')
    leaves: Dict[int, np.ndarray] = {}
    if loss.node is not None:
        pending: Dict[int, np.ndarray] = {loss.node: np.ones_like(loss.data)}
        for index in range(loss.node, -1, -1):
            grad = pending.pop(index, None)
            if grad is None:
                continue
            node = tape.nodes[index]
            if node.vjp is None:
                leaves[index] = grad
                continue
            for parent, parent_grad in zip(node.parents, node.vjp(grad)):
                if parent is None or parent_grad is None:
                    continue
                if parent in pending:
                    pending[parent] = pending[parent] + parent_grad
                else:
                    pending[parent] = parent_grad
        assert not pending
    gradients = {}
    for name, index in tape.parameters.items():
        shape = tape.nodes[index].shape
        grad = leaves.get(index)
        gradients[name] = grad.reshape(shape) if grad is not None else np.zeros(
            shape, dtype=loss.dtype)
    return gradients
