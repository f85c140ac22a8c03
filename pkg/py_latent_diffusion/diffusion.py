# -*- coding: utf-8 -*-
"""DDPM machinery in latent space.

Timesteps are 0-based: ``t`` in [0, T). ``alpha_bar[t]`` is the product of
``alpha[0..t]``, so ``q_sample(z0, t, eps)`` is the marginal after ``t + 1``
forward steps. The reverse step uses sigma_t^2 = beta_t and a noise-free final
step at t == 0.

Classifier-free guidance uses the reserved label ``K`` (one past the last
real class): labels are replaced by it during training with probability
``drop_probability``, and at sampling time the conditional and null-label
predictions are combined as ``uncond + s * (cond - uncond)``.
"""
import logging
import math
from dataclasses import dataclass
from typing import Any, Callable, List, Sequence

import numpy as np

from .autograd import Tensor
from .exceptions import ShapeError
from .ops import mse
from .seeding import make_rng

__all__ = [
    'NoiseSchedule', 'GuidanceConfig', 'SampleRequest', 'make_linear_schedule', 'q_sample',
    'q_step', 'sample_timesteps', 'drop_labels', 'training_loss', 'cfg_epsilon', 'ddpm_step',
    'sample', 'sample_many'
]

logger = logging.getLogger(__name__)

# eps_theta(z_t, t, y): latents [b, c, h, w], timesteps [b], labels [b].
DenoiserFn = Callable[[Any, np.ndarray, np.ndarray], Any]


@dataclass(frozen=True)
class NoiseSchedule:
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray

    @property
    def T(self) -> int:
        return len(self.beta)


@dataclass(frozen=True)
class GuidanceConfig:
    drop_probability: float = 0.10
    guidance_scale: float = 1.25
    null_label_index: int = 8

    def problems(self) -> List[str]:
        found = []
        if not 0.0 <= self.drop_probability <= 1.0:
            found.append(f'guidance.drop_probability={self.drop_probability} is outside [0, 1]')
        if not (math.isfinite(self.guidance_scale) and self.guidance_scale >= 0):
            found.append(f'guidance.guidance_scale={self.guidance_scale} must be finite and '
                         'non-negative')
        return found


@dataclass(frozen=True)
class SampleRequest:
    class_label: int
    seed: int
    num_steps: int
    guidance_scale: float = 1.25


def make_linear_schedule(T: int, beta_start: float = 1e-4, beta_end: float = 0.02) -> NoiseSchedule:
    if T < 1:
        raise ValueError(f'T must be at least 1, got {T}')
    if not 0.0 < beta_start <= beta_end < 1.0:
        raise ValueError(f'need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}')
    beta = np.linspace(beta_start, beta_end, T, dtype=np.float64)
    alpha = 1.0 - beta
    alpha_bar = np.empty(T, dtype=np.float64)
    running = 1.0
    for index in range(T):
        running = running * alpha[index]
        alpha_bar[index] = running
    return NoiseSchedule(beta=beta, alpha=alpha, alpha_bar=alpha_bar)


def _check_timesteps(t: Any, sched: NoiseSchedule) -> np.ndarray:
    t = np.asarray(t, dtype=np.int64)
    if np.any(t < 0) or np.any(t >= sched.T):
        raise ValueError(f'timesteps must lie in [0, {sched.T}), got {t}')
    return t


def _per_example(coeff: np.ndarray, like: np.ndarray) -> np.ndarray:
    # scalar timestep -> scalar; [b] timesteps -> [b, 1, 1, ...]
    coeff = coeff.astype(like.dtype)
    if coeff.ndim == 0:
        return coeff
    return coeff.reshape(coeff.shape + (1, ) * (like.ndim - 1))


def q_sample(z0: np.ndarray, t: Any, eps: np.ndarray, sched: NoiseSchedule) -> np.ndarray:
    """sqrt(alpha_bar[t]) * z0 + sqrt(1 - alpha_bar[t]) * eps; ``t`` scalar or one per row."""
    z0, eps = np.asarray(z0), np.asarray(eps)
    if z0.shape != eps.shape:
        raise ShapeError(f'noise shape {eps.shape} differs from latent shape {z0.shape}')
    t = _check_timesteps(t, sched)
    alpha_bar = sched.alpha_bar[t]
    return (_per_example(np.sqrt(alpha_bar), z0) * z0 +
            _per_example(np.sqrt(1.0 - alpha_bar), z0) * eps)


def q_step(x_prev: np.ndarray, t: Any, noise: np.ndarray, sched: NoiseSchedule) -> np.ndarray:
    """One forward Markov step: sqrt(alpha[t]) * x_prev + sqrt(beta[t]) * noise."""
    x_prev, noise = np.asarray(x_prev), np.asarray(noise)
    if x_prev.shape != noise.shape:
        raise ShapeError(f'noise shape {noise.shape} differs from sample shape {x_prev.shape}')
    t = _check_timesteps(t, sched)
    return (_per_example(np.sqrt(sched.alpha[t]), x_prev) * x_prev +
            _per_example(np.sqrt(sched.beta[t]), x_prev) * noise)


def sample_timesteps(rng: np.random.Generator, T: int, size: int) -> np.ndarray:
    return rng.integers(0, T, size=size, dtype=np.int64)


def drop_labels(y: Any, drop_probability: float, null_label: int,
                rng: np.random.Generator) -> np.ndarray:
    """Replaces each label by ``null_label`` with probability ``drop_probability``."""
    y = np.asarray(y, dtype=np.int64)
    draws = rng.random(y.shape)
    return np.where(draws < drop_probability, null_label, y)


def training_loss(denoiser: DenoiserFn, codec: Any, x0: np.ndarray, y: Any, t: Any,
                  eps: np.ndarray, g: GuidanceConfig, rng: np.random.Generator,
                  sched: NoiseSchedule) -> Tensor:
    """Mean squared error between ``eps`` and the prediction on the noised latent of ``x0``.

    Labels already equal to ``g.null_label_index`` are accepted as dropped.
    """
    y = np.asarray(y, dtype=np.int64)
    if np.any(y < 0) or np.any(y > g.null_label_index):
        raise ValueError(f'labels must lie in [0, {g.null_label_index}], got {y}')
    z0 = codec.encode(x0)
    eps = np.asarray(eps)
    if eps.shape != z0.shape:
        raise ShapeError(f'noise shape {eps.shape} differs from latent shape {z0.shape}')
    batch = z0.shape[0]
    t = np.broadcast_to(_check_timesteps(t, sched), (batch, ))
    y = np.broadcast_to(y, (batch, ))
    z_t = q_sample(z0, t, eps, sched)
    y_used = drop_labels(y, g.drop_probability, g.null_label_index, rng)
    return mse(eps, denoiser(z_t, t, y_used))


def cfg_epsilon(eps_cond: np.ndarray, eps_uncond: np.ndarray, s: float) -> np.ndarray:
    eps_cond, eps_uncond = np.asarray(eps_cond), np.asarray(eps_uncond)
    if eps_cond.shape != eps_uncond.shape:
        raise ShapeError(f'conditional {eps_cond.shape} and unconditional {eps_uncond.shape} '
                         'predictions differ in shape')
    if s == 1:
        return eps_cond.copy()
    if s == 0:
        return eps_uncond.copy()
    return eps_uncond + float(s) * (eps_cond - eps_uncond)


def ddpm_step(z_t: np.ndarray, eps_hat: np.ndarray, t: int, noise: np.ndarray,
              sched: NoiseSchedule) -> np.ndarray:
    """z_{t-1} from z_t; ``noise`` is ignored at t == 0."""
    z_t, eps_hat, noise = np.asarray(z_t), np.asarray(eps_hat), np.asarray(noise)
    if not z_t.shape == eps_hat.shape == noise.shape:
        raise ShapeError(f'latent {z_t.shape}, prediction {eps_hat.shape} and noise '
                         f'{noise.shape} must share one shape')
    t = int(_check_timesteps(t, sched))
    beta = sched.beta[t]
    mean = (1.0 / np.sqrt(sched.alpha[t])) * (z_t - (beta / np.sqrt(1.0 - sched.alpha_bar[t])) *
                                              eps_hat)
    if t > 0:
        mean = mean + np.sqrt(beta) * noise
    return mean.astype(z_t.dtype)


def _as_array(value: Any) -> np.ndarray:
    return value.data if isinstance(value, Tensor) else np.asarray(value)


def _guided_predictions(denoiser: DenoiserFn, z_t: np.ndarray, t: int, labels: np.ndarray,
                        scales: np.ndarray, null_label: int) -> np.ndarray:
    batch = z_t.shape[0]
    steps = np.full(batch, t, dtype=np.int64)
    needs_cond = scales != 0
    needs_uncond = scales != 1
    eps_cond = np.zeros_like(z_t)
    eps_uncond = np.zeros_like(z_t)
    if needs_cond.all() and needs_uncond.all():
        nulls = np.full(batch, null_label, dtype=np.int64)
        stacked = _as_array(
            denoiser(np.concatenate([z_t, z_t]), np.concatenate([steps, steps]),
                     np.concatenate([labels, nulls])))
        eps_cond, eps_uncond = stacked[:batch], stacked[batch:]
    else:
        if needs_cond.any():
            rows = np.flatnonzero(needs_cond)
            eps_cond[rows] = _as_array(denoiser(z_t[rows], steps[rows], labels[rows]))
        if needs_uncond.any():
            rows = np.flatnonzero(needs_uncond)
            nulls = np.full(len(rows), null_label, dtype=np.int64)
            eps_uncond[rows] = _as_array(denoiser(z_t[rows], steps[rows], nulls))
    return np.stack([
        cfg_epsilon(eps_cond[row], eps_uncond[row], float(scales[row])) for row in range(batch)
    ])


def sample_many(denoiser: DenoiserFn, codec: Any, requests: Sequence[SampleRequest],
                g: GuidanceConfig, sched: NoiseSchedule) -> np.ndarray:
    """Runs independent requests side by side; returns [n, h, w, c] pixels in [-1, 1].

    Each request draws its start latent and then its per-step noise from its own
    stream ``make_rng(seed)``. A scale of exactly 1 skips the null-label pass and
    a scale of exactly 0 skips the conditional one.
    """
    if not requests:
        raise ValueError('at least one sample request is required')
    for req in requests:
        if not 0 <= req.class_label < g.null_label_index:
            raise ValueError(f'class label {req.class_label} is outside [0, {g.null_label_index})')
        if req.num_steps != sched.T:
            raise ValueError(f'request asks for {req.num_steps} steps, schedule has {sched.T}')
        if not (math.isfinite(req.guidance_scale) and req.guidance_scale >= 0):
            raise ValueError(f'guidance scale {req.guidance_scale} must be finite and non-negative')
    rngs = [make_rng(req.seed) for req in requests]
    latent_shape = codec.latent_shape
    labels = np.array([req.class_label for req in requests], dtype=np.int64)
    scales = np.array([req.guidance_scale for req in requests], dtype=np.float64)
    z = np.stack([rng.standard_normal(latent_shape, dtype=np.float32) for rng in rngs])
    for t in range(sched.T - 1, -1, -1):
        eps_hat = _guided_predictions(denoiser, z, t, labels, scales, g.null_label_index)
        if t > 0:
            noise = np.stack([rng.standard_normal(latent_shape, dtype=np.float32) for rng in rngs])
        else:
            noise = np.zeros_like(z)
        z = ddpm_step(z, eps_hat, t, noise, sched)
    logger.debug('sampled %d requests over %d steps', len(requests), sched.T)
    pixels = codec.decode(z, clamp=True)
    return np.ascontiguousarray(pixels.transpose(0, 2, 3, 1))


def sample(denoiser: DenoiserFn, codec: Any, req: SampleRequest, g: GuidanceConfig,
           sched: NoiseSchedule) -> np.ndarray:
    """One [h, w, c] image for ``req``; deterministic for a fixed seed and parameters."""
    return sample_many(denoiser, codec, [req], g, sched)[0]
