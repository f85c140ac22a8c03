# -*- coding: utf-8 -*-
"""Differentiable primitives of the tensor core.

Every function accepts tensors or plain arrays and returns a `Tensor`. Only
leading batch axes broadcast: the shorter operand's shape must equal the
trailing extents of the longer one. Anything else needs an explicit
`reshape` or `broadcast_to`.
"""
import math
from typing import Any, Mapping, Optional, Sequence, Tuple

import numpy as np

from .autograd import Tensor, as_tensor, record
from .exceptions import ShapeError

__all__ = [
    'add', 'sub', 'mul', 'scale', 'matmul', 'reshape', 'transpose', 'concat', 'slice_axis',
    'take_rows', 'broadcast_to', 'sum_all', 'mean_all', 'mse', 'linear', 'layer_norm', 'softmax',
    'gelu', 'multi_head_attention'
]

GELU_COEFF = 0.044715
SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)


def _check_leading_broadcast(op: str, a_shape: Tuple[int, ...], b_shape: Tuple[int, ...]) -> None:
    short, long_ = sorted((a_shape, b_shape), key=len)
    if long_[len(long_) - len(short):] != short:
        raise ShapeError(f'{op}: shapes {a_shape} and {b_shape} do not broadcast over leading axes')


def _sum_to_shape(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    return grad


def add(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_leading_broadcast('add', a.shape, b.shape)

    def vjp(grad: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return _sum_to_shape(grad, a.shape), _sum_to_shape(grad, b.shape)

    return record('add', a.data + b.data, (a, b), vjp)


def sub(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_leading_broadcast('sub', a.shape, b.shape)

    def vjp(grad: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return _sum_to_shape(grad, a.shape), -_sum_to_shape(grad, b.shape)

    return record('sub', a.data - b.data, (a, b), vjp)


def mul(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_leading_broadcast('mul', a.shape, b.shape)

    def vjp(grad: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return _sum_to_shape(grad * b.data, a.shape), _sum_to_shape(grad * a.data, b.shape)

    return record('mul', a.data * b.data, (a, b), vjp)


def scale(a: Any, factor: float) -> Tensor:
    a = as_tensor(a)
    factor = float(factor)

    def vjp(grad: np.ndarray) -> Tuple[np.ndarray]:
        return (grad * factor, )

    return record('scale', a.data * factor, (a, ), vjp)


def matmul(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f'matmul needs operands of rank >= 2, got {a.shape} and {b.shape}')
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f'matmul: inner extents differ, {a.shape} x {b.shape}')
    _check_leading_broadcast('matmul', a.shape[:-2], b.shape[:-2])

    def vjp(grad: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        grad_a = np.matmul(grad, np.swapaxes(b.data, -1, -2))
        grad_b = np.matmul(np.swapaxes(a.data, -1, -2), grad)
        return _sum_to_shape(grad_a, a.shape), _sum_to_shape(grad_b, b.shape)

    return record('matmul', np.matmul(a.data, b.data), (a, b), vjp)


def reshape(a: Any, shape: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    try:
        value = a.data.reshape(tuple(shape))
    except ValueError as error:
        raise ShapeError(f'cannot reshape {a.shape} into {tuple(shape)}') from error

    def vjp(grad: np.ndarray) -> Tuple[np.ndarray]:
        return (grad.reshape(a.shape), )

    return record('reshape', value, (a, ), vjp)


def transpose(a: Any, axes: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    axes = tuple(axes)
    inverse = tuple(int(axis) for axis in np.argsort(axes))

    def vjp(grad: np.ndarray) -> Tuple[np.ndarray]:
        return (grad.transpose(inverse), )

    return record('transpose', a.data.transpose(axes), (a, ), vjp)


def concat(tensors: Sequence[Any], axis: int) -> Tensor:
    tensors = [as_tensor(tensor) for tensor in tensors]
    if not tensors:
        raise ValueError('concat needs at least one tensor')
    value = np.concatenate([tensor.data for tensor in tensors], axis=axis)
    offsets = np.cumsum([tensor.shape[axis] for tensor in tensors])[:-1]

    def vjp(grad: np.ndarray) -> Sequence[np.ndarray]:
        return np.split(grad, offsets, axis=axis)

    return record('concat', value, tensors, vjp)


def slice_axis(a: Any, axis: int, start: int, stop: Optional[int] = None) -> Tensor:
    a = as_tensor(a)
    index = [slice(None)] * a.ndim
    index[axis] = slice(start, stop)
    key = tuple(index)

    def vjp(grad: np.ndarray) -> Tuple[np.ndarray]:
        full = np.zeros(a.shape, dtype=grad.dtype)
        full[key] = grad
        return (full, )

    return record('slice', a.data[key], (a, ), vjp)


def take_rows(table: Any, indices: Any) -> Tensor:
    """Gathers rows of a 2-D table, the embedding lookup."""
    table = as_tensor(table)
    indices = np.asarray(indices, dtype=np.int64)
    if table.ndim != 2:
        raise ShapeError(f'take_rows needs a 2-D table, got {table.shape}')
    if indices.size and (indices.min() < 0 or indices.max() >= table.shape[0]):
        raise ValueError(f'row indices must lie in [0, {table.shape[0]}), got {indices}')

    def vjp(grad: np.ndarray) -> Tuple[np.ndarray]:
        full = np.zeros(table.shape, dtype=grad.dtype)
        np.add.at(full, indices, grad)
        return (full, )

    return record('take_rows', table.data[indices], (table, ), vjp)


def broadcast_to(a: Any, shape: Sequence[int]) -> Tensor:
    """Expands size-1 axes of ``a`` to ``shape``; ranks must match."""
    a = as_tensor(a)
    shape = tuple(shape)
    if len(shape) != a.ndim or any(src not in (1, dst) for src, dst in zip(a.shape, shape)):
        raise ShapeError(f'cannot broadcast {a.shape} to {shape}')
    expanded = tuple(axis for axis, (src, dst) in enumerate(zip(a.shape, shape)) if src != dst)

    def vjp(grad: np.ndarray) -> Tuple[np.ndarray]:
        return (grad.sum(axis=expanded, keepdims=True) if expanded else grad, )

    return record('broadcast_to', np.broadcast_to(a.data, shape).copy(), (a, ), vjp)


def sum_all(a: Any) -> Tensor:
    a = as_tensor(a)

    def vjp(grad: np.ndarray) -> Tuple[np.ndarray]:
        return (np.full(a.shape, grad, dtype=a.dtype), )

    return record('sum', np.asarray(a.data.sum()), (a, ), vjp)


def mean_all(a: Any) -> Tensor:
    a = as_tensor(a)
    return scale(sum_all(a), 1.0 / a.data.size)


def mse(prediction: Any, target: Any) -> Tensor:
    prediction, target = as_tensor(prediction), as_tensor(target)
    if prediction.shape != target.shape:
        raise ShapeError(f'mse: shapes differ, {prediction.shape} vs {target.shape}')
    diff = sub(prediction, target)
    return mean_all(mul(diff, diff))


def linear(x: Any, weight: Any, bias: Any) -> Tensor:
    """``x @ weight + bias`` with ``weight`` stored as [in, out]."""
    return add(matmul(x, weight), bias)


def layer_norm(x: Any, gain: Any, bias: Any, eps: float = 1e-5) -> Tensor:
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    if x.ndim == 0 or x.shape[-1] == 0:
        raise ShapeError(f'layer_norm needs a non-empty last axis, got {x.shape}')
    if eps <= 0:
        raise ValueError(f'eps must be positive, got {eps}')
    width = x.shape[-1]
    if gain.shape != (width, ) or bias.shape != (width, ):
        raise ShapeError(f'layer_norm: gain {gain.shape} and bias {bias.shape} must be ({width},)')
    centered = x.data - x.data.mean(axis=-1, keepdims=True)
    variance = (centered * centered).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(variance + float(eps))
    normed = centered * inv_std

    def vjp(grad: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        grad_normed = grad * gain.data
        grad_x = inv_std * (grad_normed - grad_normed.mean(axis=-1, keepdims=True) -
                            normed * (grad_normed * normed).mean(axis=-1, keepdims=True))
        return (grad_x, _sum_to_shape(grad * normed, gain.shape), _sum_to_shape(grad, bias.shape))

    return record('layer_norm', normed * gain.data + bias.data, (x, gain, bias), vjp)


def softmax(x: Any) -> Tensor:
    """Softmax over the last axis, max-subtracted."""
    x = as_tensor(x)
    if x.ndim == 0 or x.shape[-1] == 0:
        raise ShapeError(f'softmax needs a non-empty last axis, got {x.shape}')
    shifted = np.exp(x.data - x.data.max(axis=-1, keepdims=True))
    probs = shifted / shifted.sum(axis=-1, keepdims=True)

    def vjp(grad: np.ndarray) -> Tuple[np.ndarray]:
        return (probs * (grad - (grad * probs).sum(axis=-1, keepdims=True)), )

    return record('softmax', probs, (x, ), vjp)


def gelu(x: Any) -> Tensor:
    """Tanh approximation of GELU."""
    x = as_tensor(x)
    data = x.data
    inner = np.tanh(SQRT_2_OVER_PI * (data + GELU_COEFF * data**3))

    def vjp(grad: np.ndarray) -> Tuple[np.ndarray]:
        sech2 = 1.0 - inner * inner
        slope = 0.5 * (1.0 + inner) + 0.5 * data * sech2 * SQRT_2_OVER_PI * (
            1.0 + 3.0 * GELU_COEFF * data * data)
        return (grad * slope, )

    return record('gelu', 0.5 * data * (1.0 + inner), (x, ), vjp)


def multi_head_attention(q: Any, k: Any, v: Any, heads: int, params: Mapping[str, Any]) -> Tensor:
    """Scaled dot-product attention over [b, n, d] inputs.

    ``params`` maps ``q``, ``k``, ``v`` and ``out`` projections, each as
    ``<name>.weight`` ([d, d]) and ``<name>.bias`` ([d]).
    """
    q, k, v = as_tensor(q), as_tensor(k), as_tensor(v)
    if q.ndim != 3:
        raise ShapeError(f'attention inputs must be [batch, tokens, dim], got {q.shape}')
    batch, _, dim = q.shape
    if heads < 1 or dim % heads:
        raise ShapeError(f'embedding dim {dim} is not divisible by {heads} heads')
    if k.shape != v.shape or k.shape[0] != batch or k.shape[2] != dim:
        raise ShapeError(f'attention: incompatible q {q.shape}, k {k.shape}, v {v.shape}')
    head_dim = dim // heads

    def split_heads(x: Tensor, name: str) -> Tensor:
        projected = linear(x, params[f'{name}.weight'], params[f'{name}.bias'])
        return transpose(reshape(projected, (batch, x.shape[1], heads, head_dim)), (0, 2, 1, 3))

    q_heads = split_heads(q, 'q')
    k_heads = split_heads(k, 'k')
    v_heads = split_heads(v, 'v')
    scores = scale(matmul(q_heads, transpose(k_heads, (0, 1, 3, 2))), 1.0 / math.sqrt(head_dim))
    mixed = matmul(softmax(scores), v_heads)
    merged = reshape(transpose(mixed, (0, 2, 1, 3)), (batch, q.shape[1], dim))
    return linear(merged, params['out.weight'], params['out.bias'])
