# -*- coding: utf-8 -*-
"""Pixel to latent mapping.

The ``identity`` codec diffuses in pixel space. The ``linear_patch`` codec
cuts the image into ``factor x factor`` patches and maps each one affinely to
``latent_channels`` values, so a 32x32x3 image with factor 4 becomes an 8x8x4
latent. Decoding is the inverse-direction affine map; clamping to [-1, 1]
happens only when asked for, at emission time.
"""
import hashlib
import logging
from collections import OrderedDict, deque
from dataclasses import dataclass
from typing import Any, Deque, Dict, Iterator, List, Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .autograd import Tape, Tensor, as_tensor, backward
from .data import LabeledImage, sample_batch
from .exceptions import ShapeError
from .ops import linear, mse, reshape, transpose
from .optim import AdamConfig, adam_step, init_adam
from .seeding import make_rng
from .vit_denoiser import fold_patches, patchify

__all__ = [
    'CodecConfig', 'LatentCodec', 'CodecStep', 'codec_param_shapes', 'init_codec_params',
    'encode_tensor', 'decode_tensor', 'codec_training_steps', 'train_codec'
]

logger = logging.getLogger(__name__)

CODEC_KINDS = ('identity', 'linear_patch')

INIT_STREAM = 1
BATCH_STREAM = 2


@dataclass(frozen=True)
class CodecConfig:
    kind: str = 'linear_patch'
    factor: int = 4
    latent_channels: int = 4
    pixel_hw: int = 32
    pixel_channels: int = 3

    @property
    def latent_hw(self) -> int:
        return self.pixel_hw if self.kind == 'identity' else self.pixel_hw // self.factor

    @property
    def latent_shape(self) -> Tuple[int, int, int]:
        if self.kind == 'identity':
            return self.pixel_shape
        return (self.latent_channels, self.latent_hw, self.latent_hw)

    @property
    def pixel_shape(self) -> Tuple[int, int, int]:
        return (self.pixel_channels, self.pixel_hw, self.pixel_hw)

    @property
    def patch_pixels(self) -> int:
        return self.factor * self.factor * self.pixel_channels

    def problems(self) -> List[str]:
        found = []
        if self.kind not in CODEC_KINDS:
            found.append(f'codec.kind={self.kind!r} is not one of {CODEC_KINDS}')
        if min(self.factor, self.latent_channels, self.pixel_hw, self.pixel_channels) < 1:
            found.append('codec: factor, latent_channels, pixel_hw and pixel_channels must be '
                         'positive')
        elif self.kind == 'linear_patch' and self.pixel_hw % self.factor:
            found.append(f'codec.pixel_hw={self.pixel_hw} is not divisible by '
                         f'codec.factor={self.factor}')
        return found


def codec_param_shapes(config: CodecConfig) -> Dict[str, Tuple[int, ...]]:
    if config.kind == 'identity':
        return OrderedDict()
    shapes: Dict[str, Tuple[int, ...]] = OrderedDict()
    shapes['encode.weight'] = (config.patch_pixels, config.latent_channels)
    shapes['encode.bias'] = (config.latent_channels, )
    shapes['decode.weight'] = (config.latent_channels, config.patch_pixels)
    shapes['decode.bias'] = (config.patch_pixels, )
    return shapes


def init_codec_params(config: CodecConfig, seed: int,
                      dtype: Any = np.float32) -> Dict[str, np.ndarray]:
    """Gaussian weights scaled by 1/sqrt(fan_in), zero biases."""
    rng = make_rng(seed, INIT_STREAM)
    params: Dict[str, np.ndarray] = OrderedDict()
    for name, shape in codec_param_shapes(config).items():
        if name.endswith('.weight'):
            value = rng.standard_normal(shape) / np.sqrt(shape[0])
        else:
            value = np.zeros(shape)
        params[name] = value.astype(dtype)
    return params


def encode_tensor(x: Any, params: Mapping[str, Any], config: CodecConfig) -> Tensor:
    """[b, c, h, w] pixels -> [b, latent_channels, h/f, w/f] latents, differentiably."""
    x = as_tensor(x)
    batch = x.shape[0]
    grid = config.latent_hw
    codes = linear(patchify(x, config.factor), params['encode.weight'], params['encode.bias'])
    codes = reshape(codes, (batch, grid, grid, config.latent_channels))
    return transpose(codes, (0, 3, 1, 2))


def decode_tensor(z: Any, params: Mapping[str, Any], config: CodecConfig) -> Tensor:
    z = as_tensor(z)
    batch = z.shape[0]
    grid = config.latent_hw
    codes = reshape(transpose(z, (0, 2, 3, 1)), (batch, grid * grid, config.latent_channels))
    patches = linear(codes, params['decode.weight'], params['decode.bias'])
    return fold_patches(patches, config.factor, config.pixel_channels, config.pixel_hw,
                        config.pixel_hw)


class LatentCodec:
    """A frozen codec: plain arrays in, plain arrays out."""

    def __init__(self, config: CodecConfig, params: Optional[Mapping[str, np.ndarray]] = None):
        found = config.problems()
        if found:
            raise ValueError('; '.join(found))
        expected = codec_param_shapes(config)
        params = dict(params or {})
        shapes = {name: np.shape(value) for name, value in params.items()}
        if shapes != dict(expected):
            raise ShapeError(f'{config.kind} codec expects parameters {dict(expected)}, '
                             f'got {shapes}')
        self.config = config
        self.params = params

    @property
    def latent_shape(self) -> Tuple[int, int, int]:
        return self.config.latent_shape

    @property
    def pixel_shape(self) -> Tuple[int, int, int]:
        return self.config.pixel_shape

    def _check(self, array: np.ndarray, expected: Tuple[int, ...], what: str) -> None:
        if array.ndim != 4 or array.shape[1:] != expected:
            raise ShapeError(f'expected {what} [batch, {expected}], got {array.shape}')

    def encode(self, x: Any) -> np.ndarray:
        x = np.asarray(x)
        self._check(x, self.pixel_shape, 'pixels')
        if self.config.kind == 'identity':
            return x
        return encode_tensor(x, self.params, self.config).data

    def decode(self, z: Any, clamp: bool = True) -> np.ndarray:
        z = np.asarray(z)
        self._check(z, self.latent_shape, 'latents')
        if self.config.kind == 'identity':
            pixels = z
        else:
            pixels = decode_tensor(z, self.params, self.config).data
        return np.clip(pixels, -1.0, 1.0) if clamp else pixels

    def reconstruction_error(self, x: Any) -> float:
        return float(np.mean((self.decode(self.encode(x), clamp=False) - np.asarray(x))**2))

    def checksum(self) -> str:
        digest = hashlib.sha256(self.config.kind.encode())
        for name in sorted(self.params):
            digest.update(name.encode())
            digest.update(np.ascontiguousarray(self.params[name]).tobytes())
        return digest.hexdigest()


class CodecStep(NamedTuple):
    step: int
    loss: float
    params: Dict[str, np.ndarray]


def codec_training_steps(dataset: Sequence[LabeledImage], config: CodecConfig, optim: AdamConfig,
                         seed: int, steps: int, batch_size: int) -> Iterator[CodecStep]:
    """Adam on the reconstruction MSE; step ``i`` draws its batch from ``make_rng(seed, 2, i)``."""
    if not dataset:
        raise ValueError('cannot train a codec on an empty dataset')
    if config.kind == 'identity':
        return
    params = init_codec_params(config, seed)
    state = init_adam(params, optim)
    for step in range(steps):
        pixels, _ = sample_batch(dataset, batch_size, make_rng(seed, BATCH_STREAM, step))
        with Tape() as tape:
            watched = {name: tape.parameter(value, name) for name, value in params.items()}
            loss = mse(decode_tensor(encode_tensor(pixels, watched, config), watched, config),
                       pixels)
        grads = backward(tape, loss)
        params, state = adam_step(params, grads, state)
        yield CodecStep(step, float(loss.data), params)


def train_codec(dataset: Sequence[LabeledImage], config: CodecConfig, optim: AdamConfig,
                seed: int, steps: int = 2000, batch_size: int = 32,
                target_mse: Optional[float] = None, window: int = 20) -> LatentCodec:
    """Trains until the mean loss of the last ``window`` steps drops below ``target_mse``.

    Without a target the full step budget is used.
    """
    if not dataset:
        raise ValueError('cannot train a codec on an empty dataset')
    if config.kind == 'identity':
        return LatentCodec(config)
    params = init_codec_params(config, seed)
    recent: Deque[float] = deque(maxlen=window)
    for record in codec_training_steps(dataset, config, optim, seed, steps, batch_size):
        params = record.params
        recent.append(record.loss)
        running = sum(recent) / len(recent)
        if target_mse is not None and len(recent) == window and running < target_mse:
            logger.info('codec reached reconstruction MSE %.5f after %d steps', running,
                        record.step + 1)
            break
    else:
        if target_mse is not None:
            logger.warning('codec stopped at its step budget above the target MSE %g', target_mse)
    return LatentCodec(config, params)
