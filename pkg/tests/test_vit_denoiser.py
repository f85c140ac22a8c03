# -*- coding: utf-8 -*-
import dataclasses
import itertools

import hypothesis.strategies as st
from hypothesis import given, example
import numpy as np
import pytest

from py_latent_diffusion.config import micro_config
from py_latent_diffusion.exceptions import ShapeError
from py_latent_diffusion.seeding import make_rng
from py_latent_diffusion.vit_denoiser import (Denoiser, ViTConfig, count_params, embed_inputs,
                                              fold_patches, init_params, param_shapes, patchify,
                                              run_blocks, sincos_pos_embed, timestep_embed,
                                              unpatchify)

# Known limitation of pylint to process composites from hypothesis
# pylint: disable=no-value-for-parameter; `draw` provided by `@composite`


@st.composite
def latent_grids(draw):
    batch = draw(st.integers(min_value=1, max_value=3))
    channels = draw(st.integers(min_value=1, max_value=4))
    patch = draw(st.integers(min_value=1, max_value=3))
    rows = draw(st.integers(min_value=1, max_value=4)) * patch
    cols = draw(st.integers(min_value=1, max_value=4)) * patch
    seed = draw(st.integers(min_value=0, max_value=3))
    return batch, channels, rows, cols, patch, seed


def wide_config(**overrides):
    fields = dict(latent_hw=32, latent_channels=4, patch_size=2, embed_dim=16, enc_depth=0,
                  dec_depth=0, heads=2, num_classes=8)
    fields.update(overrides)
    return ViTConfig(**fields)


def test_patch_two_on_32_grid_gives_256_tokens_plus_class_token():
    config = wide_config()
    z = make_rng(0).standard_normal((2, ) + config.latent_shape).astype(np.float32)
    assert patchify(z, 2).shape == (2, 256, 16)
    tokens = embed_inputs(z, [3, 7], [1, 8], init_params(config, 0), config)
    assert tokens.shape == (2, 257, 16)


@given(latent_grids())
@example((100, 4, 32, 32, 2, 0))
def test_patchify_then_fold_is_lossless(grid):
    batch, channels, rows, cols, patch, seed = grid
    z = make_rng(seed).standard_normal((batch, channels, rows, cols))
    tokens = patchify(z, patch)
    assert tokens.shape == (batch, (rows // patch) * (cols // patch), channels * patch * patch)
    assert np.array_equal(fold_patches(tokens, patch, channels, rows, cols).data, z)


def test_patch_order_is_row_major_and_channel_major():
    z = np.arange(2 * 4 * 4, dtype=np.float64).reshape(1, 2, 4, 4)
    tokens = patchify(z, 2).data
    np.testing.assert_array_equal(tokens[0, 0], [0, 1, 4, 5, 16, 17, 20, 21])
    np.testing.assert_array_equal(tokens[0, 1], [2, 3, 6, 7, 18, 19, 22, 23])


def test_patchify_rejects_indivisible_grid():
    with pytest.raises(ShapeError):
        patchify(np.zeros((1, 1, 5, 4)), 2)


def test_unpatchify_uses_config_geometry():
    config = micro_config().vit
    z = make_rng(1).standard_normal((3, ) + config.latent_shape)
    assert np.array_equal(unpatchify(patchify(z, config.patch_size), config).data, z)


@pytest.mark.parametrize(
    'config,                    expected',
    [
        (ViTConfig(),               1228304),
        (micro_config().vit,        1536),
    ]
)  # yapf: disable
def test_count_params(config, expected):
    assert count_params(config) == expected
    params = init_params(config, 0)
    assert sum(value.size for value in params.values()) == expected
    assert {name: value.shape for name, value in params.items()} == dict(param_shapes(config))


def test_init_is_seeded_and_truncated():
    config = micro_config().vit
    first, second = init_params(config, 4), init_params(config, 4)
    assert all(np.array_equal(first[name], second[name]) for name in first)
    weights = np.concatenate([value.ravel() for name, value in first.items()
                              if name.endswith('.weight')])
    assert np.abs(weights).max() <= 2.0 * config.init_std
    assert (first['encoder.0.norm1.gain'] == 1.0).all()
    assert not first['head.bias'].any()


def test_timestep_embedding_layout():
    embedding = timestep_embed(np.array([0, 5]), 8)
    np.testing.assert_array_equal(embedding[0], [0, 0, 0, 0, 1, 1, 1, 1])
    assert embedding[1, 0] == pytest.approx(np.sin(5.0))
    assert embedding[1, 4] == pytest.approx(np.cos(5.0))


def test_position_embedding_splits_rows_and_columns():
    config = wide_config(latent_hw=8, embed_dim=16)
    table = sincos_pos_embed(config)
    grid = config.grid
    assert table.shape == (config.token_count, 16)
    # tokens 0 and 1 share a row, tokens 0 and `grid` share a column
    np.testing.assert_array_equal(table[0, :8], table[1, :8])
    np.testing.assert_array_equal(table[0, 8:], table[grid, 8:])
    np.testing.assert_array_equal(table[0], np.tile([0.0, 1.0], 8))
    assert len({row.tobytes() for row in table}) == config.token_count


def test_class_token_sits_at_index_zero():
    config = wide_config(latent_hw=4)
    params = init_params(config, 2)
    for name in ('time_mlp.fc2.weight', 'time_mlp.fc2.bias'):
        params[name] = np.zeros_like(params[name])
    z = np.zeros((2, ) + config.latent_shape, dtype=np.float32)
    tokens = embed_inputs(z, [0, 9], [5, 8], params, config).data
    np.testing.assert_array_equal(tokens[:, 0], params['class_embed'][[5, 8]])


def test_denoiser_maps_latents_to_latents():
    config = micro_config().vit
    denoiser = Denoiser(config, init_params(config, 0))
    z = make_rng(2).standard_normal((4, ) + config.latent_shape).astype(np.float32)
    out = denoiser(z, np.array([0, 1, 2, 9]), np.array([0, 1, 2, 3]))
    assert out.shape == z.shape
    assert np.array_equal(out.data, denoiser(z, np.array([0, 1, 2, 9]),
                                             np.array([0, 1, 2, 3])).data)


def test_denoiser_rejects_unknown_label():
    config = micro_config().vit
    denoiser = Denoiser(config, init_params(config, 0))
    with pytest.raises(ValueError):
        denoiser(np.zeros((1, ) + config.latent_shape), [0], [config.num_classes + 1])


@pytest.mark.parametrize(
    'overrides',
    [
        {'latent_hw': 7},
        {'embed_dim': 10, 'heads': 2},
        {'embed_dim': 12, 'heads': 5},
    ]
)  # yapf: disable
def test_invalid_geometry_is_rejected(overrides):
    config = dataclasses.replace(micro_config().vit, **overrides)
    assert config.problems()
    with pytest.raises(ShapeError):
        param_shapes(config)


def test_timestep_embeddings_are_distinct_over_the_schedule():
    table = timestep_embed(np.arange(200), 128)
    assert len({row.tobytes() for row in table}) == 200
    gaps = np.linalg.norm(table[:, None] - table[None], axis=-1) + np.eye(200)
    assert gaps.min() > 1e-3


def test_position_embeddings_on_a_16x16_grid():
    config = wide_config(latent_hw=32, embed_dim=128)
    table = sincos_pos_embed(config)
    assert table.shape == (256, 128)
    assert len({row.tobytes() for row in table}) == 256
    assert np.abs(table).max() <= 1.0


def _depth_zero_count(config):
    dim, patch_dim = config.embed_dim, config.patch_dim
    return (patch_dim * dim + dim  # patch embedding
            + (config.num_classes + 1) * dim  # class table with the null row
            + 2 * (dim * dim + dim)  # timestep MLP
            + 2 * dim  # final norm
            + dim * patch_dim + patch_dim)  # head


@pytest.mark.parametrize(
    'enc_depth, dec_depth',
    [
        (0,         0),
        (1,         0),
        (0,         2),
        (3,         3),
    ]
)  # yapf: disable
def test_count_params_grows_linearly_with_depth(enc_depth, dec_depth):
    base = dataclasses.replace(micro_config().vit, enc_depth=0, dec_depth=0)
    assert count_params(base) == _depth_zero_count(base) == 336
    dim, hidden = base.embed_dim, base.mlp_hidden
    per_block = 4 * dim + 4 * (dim * dim + dim) + dim * hidden + hidden + hidden * dim + dim
    deeper = dataclasses.replace(base, enc_depth=enc_depth, dec_depth=dec_depth)
    assert count_params(deeper) == 336 + (enc_depth + dec_depth) * per_block


def test_denoiser_output_depends_on_the_label():
    config = micro_config().vit
    denoiser = Denoiser(config, init_params(config, 3))
    z = make_rng(3).standard_normal((1, ) + config.latent_shape).astype(np.float32)
    outputs = [denoiser(z, [4], [label]).data for label in range(config.num_classes + 1)]
    for first, second in itertools.combinations(outputs, 2):
        assert np.abs(first - second).max() > 1e-6


def test_blocks_are_permutation_equivariant():
    config = micro_config().vit
    params = init_params(config, 5, dtype=np.float64)
    rng = make_rng(5)
    tokens = rng.standard_normal((2, 1 + config.token_count, config.embed_dim))
    order = rng.permutation(tokens.shape[1])
    permuted_first = run_blocks(tokens[:, order], params, config).data
    np.testing.assert_allclose(permuted_first, run_blocks(tokens, params, config).data[:, order],
                               atol=1e-12)


def test_rows_do_not_depend_on_their_batch():
    config = micro_config().vit
    denoiser = Denoiser(config, init_params(config, 1))
    rng = make_rng(8)
    z = rng.standard_normal((5, ) + config.latent_shape).astype(np.float32)
    t, y = np.array([0, 3, 9, 2, 5]), np.array([0, 1, 2, 3, 1])
    together = denoiser(z, t, y).data
    for row in range(5):
        np.testing.assert_array_equal(denoiser(z[row:row + 1], t[row:row + 1],
                                               y[row:row + 1]).data[0], together[row])
