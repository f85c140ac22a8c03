# -*- coding: utf-8 -*-
"""Central finite-difference checks of tape gradients, run in 64-bit."""
from typing import Callable, Dict, Mapping

import numpy as np

from .autograd import Tape, Tensor, backward, precision
from .config import RunConfig
from .diffusion import training_loss
from .latent_codec import LatentCodec
from .seeding import make_rng
from .vit_denoiser import denoiser_forward, init_params

__all__ = [
    'finite_diff_check', 'finite_diff_errors', 'parameter_group', 'group_errors',
    'fixed_batch_loss', 'denoiser_gradcheck', 'record_loss_tape'
]

LossFn = Callable[[Mapping[str, Tensor]], Tensor]


def _evaluate(f: LossFn, values: Mapping[str, np.ndarray]) -> float:
    return float(f({name: Tensor(value) for name, value in values.items()}).data)


def finite_diff_errors(f: LossFn, params: Mapping[str, np.ndarray],
                       h: float = 1e-5) -> Dict[str, float]:
    """Max relative error between analytic and central-difference gradients, per parameter.

    The relative error of one scalar is |a - cd| / max(|a|, |cd|, 1e-8).
    """
    if h <= 0:
        raise ValueError(f'step must be positive, got {h}')
    values = {name: np.array(value, dtype=np.float64) for name, value in params.items()}
    errors: Dict[str, float] = {}
    with precision(np.float64):
        with Tape() as tape:
            watched = {name: tape.parameter(value.copy(), name) for name, value in values.items()}
            loss = f(watched)
        analytic = backward(tape, loss)
        for name, value in values.items():
            flat = value.reshape(-1)
            grad = analytic[name].reshape(-1)
            worst = 0.0
            for index in range(flat.size):
                original = flat[index]
                flat[index] = original + h
                plus = _evaluate(f, values)
                flat[index] = original - h
                minus = _evaluate(f, values)
                flat[index] = original
                numeric = (plus - minus) / (2.0 * h)
                denominator = max(abs(grad[index]), abs(numeric), 1e-8)
                worst = max(worst, abs(grad[index] - numeric) / denominator)
            errors[name] = worst
    return errors


def finite_diff_check(f: LossFn, params: Mapping[str, np.ndarray], h: float = 1e-5) -> float:
    return max(finite_diff_errors(f, params, h).values(), default=0.0)


def parameter_group(name: str) -> str:
    """``encoder.0.attn.q.weight`` -> ``encoder.0``; ``class_embed`` -> ``class_embed``."""
    parts = name.split('.')
    if len(parts) > 1 and parts[1].isdigit():
        return '.'.join(parts[:2])
    return parts[0]


def group_errors(errors: Mapping[str, float]) -> Dict[str, float]:
    grouped: Dict[str, float] = {}
    for name, error in errors.items():
        group = parameter_group(name)
        grouped[group] = max(grouped.get(group, 0.0), error)
    return grouped


def fixed_batch_loss(config: RunConfig, seed: int = 0, batch: int = 2) -> LossFn:
    """The full noise-prediction loss of ``config``'s denoiser on one seeded minibatch.

    Inputs, timesteps, noise and label drops are fixed by ``seed``, so every
    evaluation of the loss sees the same minibatch. The codec must be the
    identity so that only denoiser parameters are involved.
    """
    if config.codec.kind != 'identity':
        raise ValueError(f'gradient checks run on an identity codec, got {config.codec.kind!r}')
    vit = config.vit
    sched = config.schedule.build()
    codec = LatentCodec(config.codec)
    rng = make_rng(seed, 1)
    x0 = rng.uniform(-1.0, 1.0, size=(batch, ) + codec.pixel_shape)
    y = rng.integers(0, vit.num_classes, size=batch)
    t = rng.integers(0, sched.T, size=batch)
    eps = rng.standard_normal((batch, ) + codec.latent_shape)

    def loss(watched: Mapping[str, Tensor]) -> Tensor:
        return training_loss(lambda z, ts, ys: denoiser_forward(z, ts, ys, watched, vit), codec,
                             x0, y, t, eps, config.guidance, make_rng(seed, 2), sched)

    return loss


def denoiser_gradcheck(config: RunConfig, seed: int = 0, batch: int = 2,
                       h: float = 1e-4) -> Dict[str, float]:
    """Per-parameter errors of `fixed_batch_loss`.

    Key-projection biases have an exactly zero gradient, so the step is large
    enough to keep the round-off of the central difference under the 1e-8 floor.
    """
    params = init_params(config.vit, seed, dtype=np.float64)
    return finite_diff_errors(fixed_batch_loss(config, seed, batch), params, h)


def record_loss_tape(config: RunConfig, seed: int = 0, batch: int = 2) -> Tape:
    """One 64-bit evaluation of `fixed_batch_loss`, recorded for inspection."""
    loss = fixed_batch_loss(config, seed, batch)
    with precision(np.float64):
        with Tape() as tape:
            watched = {
                name: tape.parameter(value, name)
                for name, value in init_params(config.vit, seed, dtype=np.float64).items()
            }
            loss(watched)
    return tape
