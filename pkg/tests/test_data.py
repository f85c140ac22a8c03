# -*- coding: utf-8 -*-
import itertools
import struct

import numpy as np
import pytest

from py_latent_diffusion.data import (BACKGROUND, MAX_CLASSES, MAX_JITTER, PALETTE, SHAPES,
                                      DatasetSpec, _signed_distance, batches, generate_image,
                                      load_dataset, make_dataset, sample_batch, save_dataset,
                                      stack_images)
from py_latent_diffusion.exceptions import ChecksumError, VersionError
from py_latent_diffusion.seeding import make_rng

HW = 32


def foreground(pixels):
    return np.abs(pixels - BACKGROUND).max(axis=-1) > 0.45


def best_template_iou(mask, shape):
    rows, cols = np.mgrid[0:HW, 0:HW].astype(np.float64)
    best = 0.0
    for jy, jx in itertools.product(range(-MAX_JITTER, MAX_JITTER + 1), repeat=2):
        center = (HW - 1) / 2.0 + np.array([jy, jx])
        for radius in np.linspace(0.25, 0.3, 11) * HW:
            template = _signed_distance(shape, rows - center[0], cols - center[1], radius) <= 0
            iou = (mask & template).sum() / (mask | template).sum()
            best = max(best, iou)
    return best


def classify(pixels):
    mask = foreground(pixels)
    shape = max(range(len(SHAPES)), key=lambda index: best_template_iou(mask, SHAPES[index]))
    mean_color = pixels[mask].mean(axis=0)
    color = int(np.argmin([np.linalg.norm(mean_color - np.array(c)) for c in PALETTE]))
    return color * len(SHAPES) + shape


@pytest.mark.parametrize('label', range(MAX_CLASSES))
def test_every_image_matches_its_archetype(label):
    for index in range(2):
        image = generate_image(label, make_rng(9, label, index), HW)
        assert classify(image.pixels) == label


def test_images_vary_within_a_class():
    masks = {foreground(generate_image(1, make_rng(0, 1, index), HW).pixels).tobytes()
             for index in range(10)}
    assert len(masks) > 1


def test_dataset_layout():
    spec = DatasetSpec(num_classes=3, image_hw=8, count=4, seed=1)
    dataset = make_dataset(spec)
    assert [image.label for image in dataset] == [0] * 4 + [1] * 4 + [2] * 4
    for image in dataset:
        assert image.pixels.shape == (8, 8, 3)
        assert image.pixels.dtype == np.float32
        assert np.abs(image.pixels).max() <= 1.0


def test_dataset_is_deterministic():
    spec = DatasetSpec(num_classes=2, image_hw=8, count=3, seed=5)
    first, second = make_dataset(spec), make_dataset(spec)
    assert all(np.array_equal(a.pixels, b.pixels) for a, b in zip(first, second))
    other = make_dataset(DatasetSpec(num_classes=2, image_hw=8, count=3, seed=6))
    assert not np.array_equal(first[0].pixels, other[0].pixels)


@pytest.mark.parametrize(
    'spec',
    [
        DatasetSpec(num_classes=1),
        DatasetSpec(num_classes=MAX_CLASSES + 1),
        DatasetSpec(image_hw=7),
        DatasetSpec(count=0),
        DatasetSpec(seed=-1),
    ]
)  # yapf: disable
def test_invalid_specs_are_rejected(spec):
    assert spec.problems()
    with pytest.raises(ValueError):
        make_dataset(spec)


def test_generate_image_rejects_unknown_class():
    with pytest.raises(ValueError):
        generate_image(MAX_CLASSES, make_rng(0))


def test_stack_images_is_channel_first():
    dataset = make_dataset(DatasetSpec(num_classes=2, image_hw=8, count=2))
    pixels, labels = stack_images(dataset)
    assert pixels.shape == (4, 3, 8, 8)
    assert labels.dtype == np.int64
    np.testing.assert_array_equal(pixels[3].transpose(1, 2, 0), dataset[3].pixels)


def test_epoch_visits_every_image_once():
    dataset = make_dataset(DatasetSpec(num_classes=2, image_hw=8, count=5))
    sizes, seen = [], []
    for pixels, labels in batches(dataset, 4, epoch_seed=3):
        sizes.append(len(labels))
        seen.extend(pixels[:, 0, 0, 0].tolist())
    assert sizes == [4, 4, 2]
    assert sorted(seen) == sorted(float(image.pixels[0, 0, 0]) for image in dataset)


def test_sample_batch_follows_the_stream():
    dataset = make_dataset(DatasetSpec(num_classes=2, image_hw=8, count=5))
    first = sample_batch(dataset, 6, make_rng(4))
    second = sample_batch(dataset, 6, make_rng(4))
    assert np.array_equal(first[0], second[0]) and np.array_equal(first[1], second[1])
    with pytest.raises(ValueError):
        sample_batch([], 2, make_rng(0))


def test_dump_round_trip(tmp_path):
    spec = DatasetSpec(num_classes=3, image_hw=8, count=2, seed=4)
    dataset = make_dataset(spec)
    path = tmp_path / 'shapes.ldtd'
    save_dataset(path, dataset, spec)
    assert path.read_bytes()[:4] == b'LDTD'
    loaded_spec, loaded = load_dataset(path)
    assert (loaded_spec.num_classes, loaded_spec.image_hw, loaded_spec.count) == (3, 8, 2)
    assert [image.label for image in loaded] == [image.label for image in dataset]
    assert all(np.array_equal(a.pixels, b.pixels) for a, b in zip(loaded, dataset))


@pytest.mark.parametrize(
    'corrupt,                                                          error',
    [
        (lambda raw: raw[:-5],                                             ChecksumError),
        (lambda raw: raw[:10],                                             ChecksumError),
        (lambda raw: b'XXXX' + raw[4:],                                    VersionError),
        (lambda raw: raw[:4] + struct.pack('<I', 2) + raw[8:],             VersionError),
    ]
)  # yapf: disable
def test_corrupt_dumps_are_rejected(tmp_path, corrupt, error):
    spec = DatasetSpec(num_classes=2, image_hw=8, count=1)
    path = tmp_path / 'shapes.ldtd'
    save_dataset(path, make_dataset(spec), spec)
    path.write_bytes(corrupt(path.read_bytes()))
    with pytest.raises(error):
        load_dataset(path)
