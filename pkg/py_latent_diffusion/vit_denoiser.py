# -*- coding: utf-8 -*-
"""The noise predictor: a ViT encoder-decoder over latent patches.

``denoiser_forward`` patchifies the noised latent, embeds every patch, prepends
a class token, adds the same timestep embedding to every token, runs the
encoder and then the decoder blocks over the whole sequence, and projects the
patch tokens back onto the latent grid. The class token is dropped before the
output head.

Parameters live in a flat table keyed by dotted names (``encoder.0.attn.q.weight``);
`param_shapes` is the ledger every other helper derives from.
"""
import math
from collections import OrderedDict
from dataclasses import dataclass
from typing import Any, Dict, Mapping, Tuple

import numpy as np

from .autograd import Tensor, as_tensor
from .exceptions import ShapeError
from .ops import (add, broadcast_to, concat, gelu, layer_norm, linear, multi_head_attention,
                  reshape, slice_axis, take_rows, transpose)
from .seeding import make_rng

__all__ = [
    'ViTConfig', 'Denoiser', 'param_shapes', 'count_params', 'init_params', 'patchify',
    'unpatchify', 'fold_patches', 'sincos_pos_embed', 'timestep_embed', 'embed_inputs',
    'run_blocks', 'denoiser_forward'
]

# A [batch, 1 + token_count, embed_dim] tensor; index 0 is the class token.
TokenSequence = Tensor

NORM_EPS = 1e-6


@dataclass(frozen=True)
class ViTConfig:
    latent_hw: int = 8
    latent_channels: int = 4
    patch_size: int = 2
    embed_dim: int = 128
    enc_depth: int = 3
    dec_depth: int = 3
    heads: int = 4
    mlp_ratio: float = 4.0
    num_classes: int = 8
    init_std: float = 0.02

    @property
    def grid(self) -> int:
        return self.latent_hw // self.patch_size

    @property
    def token_count(self) -> int:
        return self.grid * self.grid

    @property
    def patch_dim(self) -> int:
        return self.patch_size * self.patch_size * self.latent_channels

    @property
    def mlp_hidden(self) -> int:
        return int(self.embed_dim * self.mlp_ratio)

    @property
    def latent_shape(self) -> Tuple[int, int, int]:
        return (self.latent_channels, self.latent_hw, self.latent_hw)

    def problems(self) -> Tuple[str, ...]:
        found = []
        if min(self.latent_hw, self.latent_channels, self.patch_size, self.embed_dim,
               self.heads) < 1:
            found.append('vit: latent_hw, latent_channels, patch_size, embed_dim and heads '
                         'must be positive')
            return tuple(found)
        if self.latent_hw % self.patch_size:
            found.append(f'vit.latent_hw={self.latent_hw} is not divisible by '
                         f'vit.patch_size={self.patch_size}')
        if self.embed_dim % self.heads:
            found.append(f'vit.embed_dim={self.embed_dim} is not divisible by '
                         f'vit.heads={self.heads}')
        if self.embed_dim % 4:
            found.append(f'vit.embed_dim={self.embed_dim} is not divisible by 4')
        if self.enc_depth < 0 or self.dec_depth < 0:
            found.append('vit.enc_depth and vit.dec_depth must be non-negative')
        if self.mlp_ratio <= 0 or self.mlp_hidden < 1:
            found.append(f'vit.mlp_ratio={self.mlp_ratio} must give a positive MLP width')
        if self.num_classes < 1:
            found.append(f'vit.num_classes={self.num_classes} must be positive')
        if self.init_std <= 0:
            found.append(f'vit.init_std={self.init_std} must be positive')
        return tuple(found)

    def validate(self) -> None:
        found = self.problems()
        if found:
            raise ShapeError('; '.join(found))


def _block_shapes(prefix: str, config: ViTConfig) -> Dict[str, Tuple[int, ...]]:
    dim, hidden = config.embed_dim, config.mlp_hidden
    shapes: Dict[str, Tuple[int, ...]] = OrderedDict()
    shapes[f'{prefix}.norm1.gain'] = (dim, )
    shapes[f'{prefix}.norm1.bias'] = (dim, )
    for projection in ('q', 'k', 'v', 'out'):
        shapes[f'{prefix}.attn.{projection}.weight'] = (dim, dim)
        shapes[f'{prefix}.attn.{projection}.bias'] = (dim, )
    shapes[f'{prefix}.norm2.gain'] = (dim, )
    shapes[f'{prefix}.norm2.bias'] = (dim, )
    shapes[f'{prefix}.mlp.fc1.weight'] = (dim, hidden)
    shapes[f'{prefix}.mlp.fc1.bias'] = (hidden, )
    shapes[f'{prefix}.mlp.fc2.weight'] = (hidden, dim)
    shapes[f'{prefix}.mlp.fc2.bias'] = (dim, )
    return shapes


def param_shapes(config: ViTConfig) -> Dict[str, Tuple[int, ...]]:
    config.validate()
    dim = config.embed_dim
    shapes: Dict[str, Tuple[int, ...]] = OrderedDict()
    shapes['patch_embed.weight'] = (config.patch_dim, dim)
    shapes['patch_embed.bias'] = (dim, )
    shapes['class_embed'] = (config.num_classes + 1, dim)
    shapes['time_mlp.fc1.weight'] = (dim, dim)
    shapes['time_mlp.fc1.bias'] = (dim, )
    shapes['time_mlp.fc2.weight'] = (dim, dim)
    shapes['time_mlp.fc2.bias'] = (dim, )
    for index in range(config.enc_depth):
        shapes.update(_block_shapes(f'encoder.{index}', config))
    for index in range(config.dec_depth):
        shapes.update(_block_shapes(f'decoder.{index}', config))
    shapes['final_norm.gain'] = (dim, )
    shapes['final_norm.bias'] = (dim, )
    shapes['head.weight'] = (dim, config.patch_dim)
    shapes['head.bias'] = (config.patch_dim, )
    return shapes


def count_params(config: ViTConfig) -> int:
    return sum(int(np.prod(shape)) for shape in param_shapes(config).values())


def _truncated_normal(rng: np.random.Generator, shape: Tuple[int, ...], std: float) -> np.ndarray:
    values = rng.standard_normal(shape)
    outside = np.abs(values) > 2.0
    while outside.any():
        values[outside] = rng.standard_normal(int(outside.sum()))
        outside = np.abs(values) > 2.0
    return values * std


def init_params(config: ViTConfig, seed: int, dtype: Any = np.float32) -> Dict[str, np.ndarray]:
    """Truncated-normal weights and class table, zero biases, unit norm gains."""
    rng = make_rng(seed)
    params: Dict[str, np.ndarray] = OrderedDict()
    for name, shape in param_shapes(config).items():
        if name.endswith('.gain'):
            value = np.ones(shape)
        elif name.endswith('.weight') or name == 'class_embed':
            value = _truncated_normal(rng, shape, config.init_std)
        else:
            value = np.zeros(shape)
        params[name] = value.astype(dtype)
    return params


def patchify(z: Any, patch_size: int) -> Tensor:
    """[b, c, h, w] -> [b, (h/p)(w/p), c*p*p].

    Patches are taken in row-major grid order; each is flattened channel-major,
    then row-major inside the patch.
    """
    z = as_tensor(z)
    if z.ndim != 4:
        raise ShapeError(f'patchify needs [batch, channels, height, width], got {z.shape}')
    batch, channels, height, width = z.shape
    p = patch_size
    if p < 1 or height % p or width % p:
        raise ShapeError(f'spatial extents {height}x{width} are not divisible by patch size {p}')
    grid = reshape(z, (batch, channels, height // p, p, width // p, p))
    grid = transpose(grid, (0, 2, 4, 1, 3, 5))
    return reshape(grid, (batch, (height // p) * (width // p), channels * p * p))


def fold_patches(tokens: Any, patch_size: int, channels: int, height: int, width: int) -> Tensor:
    tokens = as_tensor(tokens)
    p = patch_size
    if height % p or width % p:
        raise ShapeError(f'spatial extents {height}x{width} are not divisible by patch size {p}')
    expected = ((height // p) * (width // p), channels * p * p)
    if tokens.ndim != 3 or tokens.shape[1:] != expected:
        raise ShapeError(f'expected tokens [batch, {expected[0]}, {expected[1]}], '
                         f'got {tokens.shape}')
    batch = tokens.shape[0]
    grid = reshape(tokens, (batch, height // p, width // p, channels, p, p))
    grid = transpose(grid, (0, 3, 1, 4, 2, 5))
    return reshape(grid, (batch, channels, height, width))


def unpatchify(tokens: Any, config: ViTConfig) -> Tensor:
    return fold_patches(tokens, config.patch_size, config.latent_channels, config.latent_hw,
                        config.latent_hw)


def _frequencies(count: int) -> np.ndarray:
    return np.exp(-math.log(10000.0) * np.arange(count, dtype=np.float64) / count)


def sincos_pos_embed(config: ViTConfig) -> np.ndarray:
    """[token_count, embed_dim] fixed 2-D embedding.

    The first half of the channels encodes the patch row, the second half the
    column; inside each half channels alternate sin, cos over geometric
    frequencies with base 10000.
    """
    if config.embed_dim % 4:
        raise ShapeError(f'embed_dim {config.embed_dim} must be divisible by 4')
    quarter = config.embed_dim // 4
    freqs = _frequencies(quarter)
    rows, cols = np.meshgrid(np.arange(config.grid), np.arange(config.grid), indexing='ij')

    def encode(positions: np.ndarray) -> np.ndarray:
        angles = positions.reshape(-1, 1).astype(np.float64) * freqs
        half = np.empty((angles.shape[0], 2 * quarter))
        half[:, 0::2] = np.sin(angles)
        half[:, 1::2] = np.cos(angles)
        return half

    return np.concatenate([encode(rows), encode(cols)], axis=1)


def timestep_embed(t: Any, embed_dim: int) -> np.ndarray:
    """Sinusoidal timestep vector: sines in the first half, cosines in the second."""
    t = np.asarray(t)
    if embed_dim % 2:
        raise ShapeError(f'embed_dim {embed_dim} must be even')
    if np.any(t < 0):
        raise ValueError(f'timesteps must be non-negative, got {t}')
    angles = t.astype(np.float64)[..., None] * _frequencies(embed_dim // 2)
    return np.concatenate([np.sin(angles), np.cos(angles)], axis=-1)


def _subtree(params: Mapping[str, Any], prefix: str) -> Dict[str, Any]:
    start = len(prefix) + 1
    return {name[start:]: value for name, value in params.items() if name.startswith(prefix + '.')}


def embed_inputs(z_t: Any, t: Any, y: Any, params: Mapping[str, Any],
                 config: ViTConfig) -> TokenSequence:
    z_t = as_tensor(z_t)
    batch = z_t.shape[0]
    dtype = as_tensor(params['patch_embed.weight']).dtype
    t = np.broadcast_to(np.asarray(t, dtype=np.int64), (batch, ))
    y = np.broadcast_to(np.asarray(y, dtype=np.int64), (batch, ))
    if np.any(y < 0) or np.any(y > config.num_classes):
        raise ValueError(f'labels must lie in [0, {config.num_classes}], got {y}')
    dim = config.embed_dim

    # [batch, 1, dim]: one matmul per example, so no row depends on the batch size
    time_vec = timestep_embed(t, dim).astype(dtype)[:, None, :]
    time_hidden = gelu(linear(time_vec, params['time_mlp.fc1.weight'],
                              params['time_mlp.fc1.bias']))
    time_token = linear(time_hidden, params['time_mlp.fc2.weight'], params['time_mlp.fc2.bias'])

    patches = patchify(z_t, config.patch_size)
    patch_tokens = linear(patches, params['patch_embed.weight'], params['patch_embed.bias'])
    patch_tokens = add(patch_tokens, sincos_pos_embed(config).astype(dtype))
    class_token = reshape(take_rows(params['class_embed'], y), (batch, 1, dim))
    tokens = concat([class_token, patch_tokens], axis=1)
    offset = broadcast_to(time_token, tokens.shape)
    return add(tokens, offset)


def _block(tokens: Tensor, params: Mapping[str, Any], config: ViTConfig) -> Tensor:
    normed = layer_norm(tokens, params['norm1.gain'], params['norm1.bias'], NORM_EPS)
    tokens = add(tokens,
                 multi_head_attention(normed, normed, normed, config.heads, _subtree(params,
                                                                                    'attn')))
    normed = layer_norm(tokens, params['norm2.gain'], params['norm2.bias'], NORM_EPS)
    hidden = gelu(linear(normed, params['mlp.fc1.weight'], params['mlp.fc1.bias']))
    return add(tokens, linear(hidden, params['mlp.fc2.weight'], params['mlp.fc2.bias']))


def run_blocks(tokens: Any, params: Mapping[str, Any], config: ViTConfig) -> Tensor:
    """Encoder blocks then decoder blocks; the full sequence passes between them."""
    tokens = as_tensor(tokens)
    for index in range(config.enc_depth):
        tokens = _block(tokens, _subtree(params, f'encoder.{index}'), config)
    for index in range(config.dec_depth):
        tokens = _block(tokens, _subtree(params, f'decoder.{index}'), config)
    return tokens


def denoiser_forward(z_t: Any, t: Any, y: Any, params: Mapping[str, Any],
                     config: ViTConfig) -> Tensor:
    z_t = as_tensor(z_t)
    if z_t.ndim != 4 or z_t.shape[1:] != config.latent_shape:
        raise ShapeError(f'expected latents [batch, {config.latent_shape}], got {z_t.shape}')
    tokens = run_blocks(embed_inputs(z_t, t, y, params, config), params, config)
    tokens = layer_norm(tokens, params['final_norm.gain'], params['final_norm.bias'], NORM_EPS)
    patch_tokens = slice_axis(tokens, 1, 1)
    return unpatchify(linear(patch_tokens, params['head.weight'], params['head.bias']), config)


@dataclass
class Denoiser:
    """A frozen parameter table bound to its config, callable as eps_theta(z_t, t, y)."""
    config: ViTConfig
    params: Dict[str, np.ndarray]

    def __call__(self, z_t: Any, t: Any, y: Any) -> Tensor:
        return denoiser_forward(z_t, t, y, self.params, self.config)
