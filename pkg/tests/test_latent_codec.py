# -*- coding: utf-8 -*-
import itertools
import logging
from pathlib import Path

import numpy as np
import pytest

from py_latent_diffusion.config import load_config
from py_latent_diffusion.data import DatasetSpec, make_dataset, stack_images
from py_latent_diffusion.exceptions import ShapeError
from py_latent_diffusion.gradcheck import finite_diff_check
from py_latent_diffusion.latent_codec import (CodecConfig, LatentCodec, codec_param_shapes,
                                              codec_training_steps, decode_tensor, encode_tensor,
                                              init_codec_params, train_codec)
from py_latent_diffusion.ops import mse
from py_latent_diffusion.optim import AdamConfig
from py_latent_diffusion.seeding import make_rng

SMALL = CodecConfig(factor=2, latent_channels=4, pixel_hw=8)


@pytest.fixture(scope='module')
def dataset():
    return make_dataset(DatasetSpec(num_classes=2, image_hw=8, count=4, seed=3))


@pytest.mark.parametrize(
    'config,                                               latent_shape, n_params',
    [
        (CodecConfig(),                                        (4, 8, 8),    48 * 4 + 4 + 4 * 48 + 48),
        (SMALL,                                                (4, 4, 4),    12 * 4 + 4 + 4 * 12 + 12),
        (CodecConfig(kind='identity', pixel_hw=16),            (3, 16, 16),  0),
    ]
)  # yapf: disable
def test_geometry(config, latent_shape, n_params):
    assert config.latent_shape == latent_shape
    params = init_codec_params(config, 0)
    assert sum(value.size for value in params.values()) == n_params
    assert {name: value.shape for name, value in params.items()} == dict(codec_param_shapes(config))


def test_identity_codec_passes_pixels_through():
    codec = LatentCodec(CodecConfig(kind='identity', pixel_hw=8))
    x = make_rng(0).uniform(-1.5, 1.5, size=(2, 3, 8, 8))
    assert codec.encode(x) is x
    assert np.array_equal(codec.decode(x, clamp=False), x)
    assert np.array_equal(codec.decode(x), np.clip(x, -1, 1))
    assert codec.reconstruction_error(x) == 0.0


def test_linear_patch_codec_is_local():
    codec = LatentCodec(SMALL, init_codec_params(SMALL, 1))
    x = make_rng(1).uniform(-1, 1, size=(1, ) + SMALL.pixel_shape)
    nudged = x.copy()
    nudged[0, 1, 2, 5] += 0.5  # pixel row 2, column 5 -> patch (1, 2)
    changed = np.any(codec.encode(nudged) != codec.encode(x), axis=1)[0]
    expected = np.zeros((4, 4), dtype=bool)
    expected[1, 2] = True
    assert np.array_equal(changed, expected)


def test_decode_clamps_only_on_request():
    params = init_codec_params(SMALL, 2)
    params['decode.bias'] = np.full_like(params['decode.bias'], 5.0)
    codec = LatentCodec(SMALL, params)
    z = np.zeros((1, ) + SMALL.latent_shape, dtype=np.float32)
    assert (codec.decode(z) == 1.0).all()
    assert (codec.decode(z, clamp=False) == 5.0).all()


def test_reconstruction_gradients():
    config = CodecConfig(factor=2, latent_channels=2, pixel_hw=4)
    x = make_rng(3).uniform(-1, 1, size=(2, ) + config.pixel_shape)

    def loss(watched):
        return mse(decode_tensor(encode_tensor(x, watched, config), watched, config), x)

    assert finite_diff_check(loss, init_codec_params(config, 0, dtype=np.float64)) < 1e-5


@pytest.mark.parametrize(
    'params',
    [
        {},
        {'encode.weight': np.zeros((12, 4))},
        dict(init_codec_params(SMALL, 0), extra=np.zeros(1)),
    ]
)  # yapf: disable
def test_parameter_tables_must_match(params):
    with pytest.raises(ShapeError):
        LatentCodec(SMALL, params)


def test_inputs_must_match_geometry():
    codec = LatentCodec(SMALL, init_codec_params(SMALL, 0))
    with pytest.raises(ShapeError):
        codec.encode(np.zeros((1, 3, 4, 4)))
    with pytest.raises(ShapeError):
        codec.decode(np.zeros((1, 3, 4, 4)))


def test_invalid_config_is_rejected():
    assert CodecConfig(factor=3).problems()
    assert CodecConfig(kind='vq').problems()
    with pytest.raises(ValueError):
        LatentCodec(CodecConfig(factor=3))


def test_checksum_tracks_parameters():
    params = init_codec_params(SMALL, 0)
    first = LatentCodec(SMALL, params).checksum()
    assert LatentCodec(SMALL, init_codec_params(SMALL, 0)).checksum() == first
    params['decode.bias'] = params['decode.bias'] + 1e-3
    assert LatentCodec(SMALL, params).checksum() != first


def test_training_reduces_reconstruction_error(dataset):
    pixels, _ = stack_images(dataset)
    untrained = LatentCodec(SMALL, init_codec_params(SMALL, 7)).reconstruction_error(pixels)
    codec = train_codec(dataset, SMALL, AdamConfig(lr=5e-3), seed=7, steps=300, batch_size=8)
    assert codec.reconstruction_error(pixels) < 0.5 * untrained


def test_training_is_deterministic_and_stops_at_target(dataset, caplog):
    optim = AdamConfig(lr=5e-3)
    with caplog.at_level(logging.INFO, logger='py_latent_diffusion.latent_codec'):
        codec = train_codec(dataset, SMALL, optim, seed=2, steps=100, batch_size=4,
                            target_mse=100.0, window=5)
    assert 'after 5 steps' in caplog.text
    fifth = list(itertools.islice(codec_training_steps(dataset, SMALL, optim, 2, 100, 4), 5))[-1]
    assert fifth.step == 4
    assert all(np.array_equal(codec.params[name], fifth.params[name]) for name in fifth.params)


def test_identity_codec_needs_no_training(dataset):
    codec = train_codec(dataset, CodecConfig(kind='identity', pixel_hw=8), AdamConfig(), seed=0)
    assert codec.params == {}
    with pytest.raises(ValueError):
        train_codec([], SMALL, AdamConfig(), seed=0)


def test_encode_and_decode_are_affine():
    codec = LatentCodec(SMALL, init_codec_params(SMALL, 4))
    rng = make_rng(4)
    a, b = (rng.uniform(-1, 1, size=(2, ) + SMALL.pixel_shape) for _ in range(2))
    origin = codec.encode(np.zeros_like(a))
    np.testing.assert_allclose(codec.encode(a + b) - origin,
                               (codec.encode(a) - origin) + (codec.encode(b) - origin), atol=1e-5)

    z, w = (rng.standard_normal((2, ) + SMALL.latent_shape) for _ in range(2))
    offset = codec.decode(np.zeros_like(z), clamp=False)
    np.testing.assert_allclose(codec.decode(z + w, clamp=False) - offset,
                               (codec.decode(z, clamp=False) - offset) +
                               (codec.decode(w, clamp=False) - offset), atol=1e-5)


def test_initial_weights_do_not_reuse_the_first_batch_stream():
    params = init_codec_params(SMALL, 6)
    first = params['encode.weight'] * np.sqrt(SMALL.patch_pixels)
    for keys in [(6, ), (6, 0), (6, 2, 0)]:
        replayed = make_rng(*keys).standard_normal(first.shape)
        assert not np.allclose(first, replayed, atol=1e-5)


def test_desk_codec_reconstructs_the_desk_dataset():
    config = load_config(Path(__file__).parent.parent / 'configs' / 'desk.cfg')
    dataset = make_dataset(config.data)
    optim = AdamConfig(lr=config.train.codec_lr)
    codec = train_codec(dataset, config.codec, optim, seed=0, steps=config.train.codec_steps,
                        batch_size=config.train.codec_batch_size, target_mse=0.006)
    pixels, _ = stack_images(dataset)
    assert config.train.codec_target_mse == 0.01
    assert codec.reconstruction_error(pixels) < config.train.codec_target_mse
