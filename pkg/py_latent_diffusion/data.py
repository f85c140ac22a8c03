# -*- coding: utf-8 -*-
"""Procedural class-conditioned images: soft-edged colored shapes on a noisy gray background.

Class ``k`` draws shape ``SHAPES[k % 4]`` filled with ``PALETTE[k // 4]``, so
eight classes cover four shapes in two colors. Every image has its own random
stream keyed by (dataset seed, label, index); position, size and background
noise vary per image, the archetype never does.
"""
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, List, Sequence, Tuple, Union

import numpy as np

from .exceptions import ChecksumError, VersionError
from .seeding import make_rng

__all__ = [
    'DatasetSpec', 'LabeledImage', 'SHAPES', 'PALETTE', 'MAX_CLASSES', 'generate_image',
    'make_dataset', 'stack_images', 'batches', 'sample_batch', 'save_dataset', 'load_dataset'
]

logger = logging.getLogger(__name__)

SHAPES = ('disk', 'square', 'triangle', 'ring')
PALETTE = (
    (0.9, -0.5, -0.6),   # red
    (-0.5, 0.2, 0.95),   # blue
    (0.1, 0.9, -0.4),    # green
    (0.95, 0.85, -0.7),  # yellow
)  # yapf: disable
MAX_CLASSES = len(SHAPES) * len(PALETTE)

BACKGROUND = 0.0
NOISE_STD = 0.03
# logistic edge scale in pixels; a 4x4 patch sees a nearly planar ramp
EDGE_WIDTH = 1.2
MAX_JITTER = 3

DATASET_MAGIC = b'LDTD'
DATASET_VERSION = 1
_HEADER = struct.Struct('<4sIIII')


@dataclass(frozen=True)
class DatasetSpec:
    num_classes: int = 8
    image_hw: int = 32
    count: int = 256
    seed: int = 0

    def problems(self) -> List[str]:
        found = []
        if not 2 <= self.num_classes <= MAX_CLASSES:
            found.append(f'data.num_classes={self.num_classes} is outside [2, {MAX_CLASSES}]')
        if self.image_hw < 8:
            found.append(f'data.image_hw={self.image_hw} is smaller than 8')
        if self.count < 1:
            found.append(f'data.count={self.count} must be at least 1')
        if self.seed < 0:
            found.append(f'data.seed={self.seed} is negative')
        return found


@dataclass(frozen=True)
class LabeledImage:
    pixels: np.ndarray  # [image_hw, image_hw, 3] in [-1, 1]
    label: int


def _signed_distance(shape: str, dy: np.ndarray, dx: np.ndarray, radius: float) -> np.ndarray:
    """Pixel distance to the shape outline, negative inside."""
    if shape == 'disk':
        return np.hypot(dy, dx) - radius
    if shape == 'square':
        half = 0.8 * radius
        qy, qx = np.abs(dy) - half, np.abs(dx) - half
        outside = np.hypot(np.maximum(qy, 0.0), np.maximum(qx, 0.0))
        return outside + np.minimum(np.maximum(qy, qx), 0.0)
    if shape == 'triangle':
        # apex up, base at 0.8 * radius below the center
        base = 0.8 * radius
        slant = np.hypot(radius + base, radius)
        sides = (np.abs(dx) * (radius + base) - radius * (dy + radius)) / slant
        return np.maximum(dy - base, sides)
    if shape == 'ring':
        inner = 0.55 * radius
        return np.abs(np.hypot(dy, dx) - 0.5 * (radius + inner)) - 0.5 * (radius - inner)
    raise ValueError(f'unknown shape {shape!r}')


def _coverage(distance: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 - np.tanh(0.5 * distance / EDGE_WIDTH))


def generate_image(class_label: int, rng: np.random.Generator, image_hw: int = 32) -> LabeledImage:
    if not 0 <= class_label < MAX_CLASSES:
        raise ValueError(f'class label {class_label} is outside [0, {MAX_CLASSES})')
    if image_hw < 8:
        raise ValueError(f'image side {image_hw} is smaller than 8')
    shape = SHAPES[class_label % len(SHAPES)]
    color = np.array(PALETTE[class_label // len(SHAPES)], dtype=np.float64)

    jitter = rng.integers(-MAX_JITTER, MAX_JITTER + 1, size=2)
    radius = rng.uniform(0.25, 0.3) * image_hw
    center = (image_hw - 1) / 2.0 + jitter
    rows, cols = np.mgrid[0:image_hw, 0:image_hw].astype(np.float64)
    coverage = _coverage(_signed_distance(shape, rows - center[0], cols - center[1], radius))

    pixels = BACKGROUND + coverage[..., None] * (color - BACKGROUND)
    pixels += rng.normal(0.0, NOISE_STD, size=pixels.shape)
    return LabeledImage(pixels=np.clip(pixels, -1.0, 1.0).astype(np.float32), label=class_label)


def make_dataset(spec: DatasetSpec) -> List[LabeledImage]:
    """``num_classes * count`` images ordered by (class, index)."""
    found = spec.problems()
    if found:
        raise ValueError('; '.join(found))
    return [
        generate_image(label, make_rng(spec.seed, label, index), spec.image_hw)
        for label in range(spec.num_classes)
        for index in range(spec.count)
    ]


def stack_images(images: Sequence[LabeledImage]) -> Tuple[np.ndarray, np.ndarray]:
    """[n, 3, h, w] float32 pixels and [n] int64 labels."""
    if not images:
        raise ValueError('cannot stack an empty image collection')
    pixels = np.stack([image.pixels for image in images]).transpose(0, 3, 1, 2)
    labels = np.array([image.label for image in images], dtype=np.int64)
    return np.ascontiguousarray(pixels, dtype=np.float32), labels


def batches(dataset: Sequence[LabeledImage], batch_size: int,
            epoch_seed: int) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
    """One shuffled epoch; the last batch may be short."""
    if batch_size < 1:
        raise ValueError(f'batch size must be at least 1, got {batch_size}')
    order = make_rng(epoch_seed).permutation(len(dataset))
    for start in range(0, len(order), batch_size):
        yield stack_images([dataset[index] for index in order[start:start + batch_size]])


def sample_batch(dataset: Sequence[LabeledImage], batch_size: int,
                 rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """``batch_size`` images drawn uniformly with replacement."""
    if not dataset:
        raise ValueError('cannot draw from an empty dataset')
    if batch_size < 1:
        raise ValueError(f'batch size must be at least 1, got {batch_size}')
    indices = rng.integers(0, len(dataset), size=batch_size)
    return stack_images([dataset[index] for index in indices])


def _record_dtype(image_hw: int) -> np.dtype:
    return np.dtype([('label', '<u2'), ('pixels', '<f4', (image_hw, image_hw, 3))])


def save_dataset(path: Union[str, Path], dataset: Sequence[LabeledImage],
                 spec: DatasetSpec) -> None:
    """Writes the flat LDTD dump; the header ``count`` is the per-class count."""
    if len(dataset) != spec.num_classes * spec.count:
        raise ValueError(f'dataset holds {len(dataset)} images, spec describes '
                         f'{spec.num_classes * spec.count}')
    records = np.empty(len(dataset), dtype=_record_dtype(spec.image_hw))
    records['label'] = [image.label for image in dataset]
    records['pixels'] = np.stack([image.pixels for image in dataset])
    with open(path, 'wb') as handle:
        handle.write(
            _HEADER.pack(DATASET_MAGIC, DATASET_VERSION, spec.num_classes, spec.image_hw,
                         spec.count))
        handle.write(records.tobytes())
    logger.debug('wrote %d images to %s', len(dataset), path)


def load_dataset(path: Union[str, Path]) -> Tuple[DatasetSpec, List[LabeledImage]]:
    """Reads an LDTD dump; the returned spec carries seed 0 since the file has none."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ChecksumError(f'{path}: {len(raw)} bytes is shorter than the dataset header')
    magic, version, num_classes, image_hw, count = _HEADER.unpack_from(raw)
    if magic != DATASET_MAGIC:
        raise VersionError(f'{path}: magic {magic!r} is not a dataset dump')
    if version != DATASET_VERSION:
        raise VersionError(f'{path}: dataset version {version}, expected {DATASET_VERSION}')
    dtype = _record_dtype(image_hw)
    expected = _HEADER.size + num_classes * count * dtype.itemsize
    if len(raw) != expected:
        raise ChecksumError(f'{path}: {len(raw)} bytes, header implies {expected}')
    records = np.frombuffer(raw, dtype=dtype, offset=_HEADER.size)
    images = [
        LabeledImage(pixels=np.array(record['pixels'], dtype=np.float32),
                     label=int(record['label']))
        for record in records
    ]
    spec = DatasetSpec(num_classes=num_classes, image_hw=image_hw, count=count)
    return spec, images
