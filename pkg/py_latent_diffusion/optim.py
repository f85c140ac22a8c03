# -*- coding: utf-8 -*-
"""Adam with bias-corrected moments over named parameter tables."""
from dataclasses import dataclass, field
from typing import Dict, Mapping, Tuple

import numpy as np

from .exceptions import ShapeError

__all__ = ['AdamConfig', 'AdamState', 'init_adam', 'adam_step']

Params = Dict[str, np.ndarray]


@dataclass(frozen=True)
class AdamConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class AdamState:
    learning_rate: float
    beta1: float
    beta2: float
    epsilon: float
    step_count: int = 0
    first_moment: Params = field(default_factory=dict)
    second_moment: Params = field(default_factory=dict)


def init_adam(params: Mapping[str, np.ndarray], config: AdamConfig = AdamConfig()) -> AdamState:
    return AdamState(learning_rate=config.lr,
                     beta1=config.beta1,
                     beta2=config.beta2,
                     epsilon=config.eps,
                     first_moment={name: np.zeros_like(value)
                                   for name, value in params.items()},
                     second_moment={name: np.zeros_like(value)
                                    for name, value in params.items()})


def _check_aligned(params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray],
                   state: AdamState) -> None:
    if set(params) != set(grads) or set(params) != set(state.first_moment):
        missing = set(params) ^ set(grads) | set(params) ^ set(state.first_moment)
        raise ShapeError(f'parameter, gradient and moment tables differ on {sorted(missing)}')
    for name, value in params.items():
        shapes = {value.shape, grads[name].shape, state.first_moment[name].shape,
                  state.second_moment[name].shape}
        if len(shapes) != 1:
            raise ShapeError(f'{name}: parameter {value.shape} vs gradient {grads[name].shape} '
                             f'vs moments {state.first_moment[name].shape}')


def adam_step(params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray],
              state: AdamState) -> Tuple[Params, AdamState]:
    """Returns updated parameters and a new state; inputs are left untouched."""
    _check_aligned(params, grads, state)
    step = state.step_count + 1
    b1, b2 = float(state.beta1), float(state.beta2)
    correction1 = 1.0 - b1**step
    correction2 = 1.0 - b2**step
    lr, eps = float(state.learning_rate), float(state.epsilon)
    new_params: Params = {}
    first: Params = {}
    second: Params = {}
    for name, value in params.items():
        grad = grads[name].astype(value.dtype, copy=False)
        first[name] = b1 * state.first_moment[name] + (1.0 - b1) * grad
        second[name] = b2 * state.second_moment[name] + (1.0 - b2) * grad * grad
        m_hat = first[name] / correction1
        v_hat = second[name] / correction2
        new_params[name] = value - lr * m_hat / (np.sqrt(v_hat) + eps)
    new_state = AdamState(learning_rate=state.learning_rate,
                          beta1=state.beta1,
                          beta2=state.beta2,
                          epsilon=state.epsilon,
                          step_count=step,
                          first_moment=first,
                          second_moment=second)
    return new_params, new_state
