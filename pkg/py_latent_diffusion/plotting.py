# -*- coding: utf-8 -*-
"""Image files and figures: PPM samples, sample grids, loss curves and tape graphs."""
import csv
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple, Union

import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt  # noqa: E402
import networkx as nx  # noqa: E402
import numpy as np  # noqa: E402
from PIL import Image  # noqa: E402

from .autograd import Tape  # noqa: E402
from .exceptions import ShapeError  # noqa: E402

__all__ = ['to_uint8', 'write_ppm', 'draw_sample_grid', 'draw_loss_curve', 'draw_tape',
           'tape_node_positions']

PathLike = Union[str, Path]


def to_uint8(pixels: np.ndarray) -> np.ndarray:
    """[-1, 1] -> {0..255}: clamp, then round half to even."""
    scaled = (np.clip(np.asarray(pixels, dtype=np.float64), -1.0, 1.0) + 1.0) * 127.5
    return np.rint(scaled).astype(np.uint8)


def write_ppm(path: PathLike, pixels: np.ndarray) -> None:
    """Writes an [h, w, 3] image as binary PPM (P6, maxval 255)."""
    pixels = np.asarray(pixels)
    if pixels.ndim != 3 or pixels.shape[2] != 3:
        raise ShapeError(f'PPM needs [height, width, 3] pixels, got {pixels.shape}')
    Image.fromarray(to_uint8(pixels)).save(path, format='PPM')


def draw_sample_grid(images: Sequence[np.ndarray], labels: Sequence[int], path: PathLike,
                     columns: int = 8, class_names: Optional[Sequence[str]] = None) -> None:
    if len(images) != len(labels):
        raise ValueError(f'{len(images)} images but {len(labels)} labels')
    if len(images) == 0:
        raise ValueError('nothing to draw')
    rows = -(-len(images) // columns)
    figure, axes = plt.subplots(rows, columns, figsize=(1.5 * columns, 1.6 * rows), squeeze=False)
    for axis in axes.flat:
        axis.axis('off')
    for axis, image, label in zip(axes.flat, images, labels):
        axis.imshow(to_uint8(image))
        axis.set_title(class_names[label] if class_names else str(label), fontsize=8)
    figure.tight_layout()
    figure.savefig(path)
    plt.close(figure)


def draw_loss_curve(csv_path: PathLike, path: PathLike, window: int = 50) -> None:
    """Raw per-step losses from the training CSV and their ``window``-step running mean."""
    with open(csv_path, newline='') as handle:
        rows = list(csv.DictReader(handle))
    steps = np.array([int(row['step']) for row in rows])
    losses = np.array([float(row['loss']) for row in rows])
    figure, axis = plt.subplots(figsize=(6, 4))
    axis.plot(steps, losses, alpha=0.3, label='loss')
    if len(losses) >= window:
        smooth = np.convolve(losses, np.ones(window) / window, mode='valid')
        axis.plot(steps[window - 1:], smooth, label=f'{window}-step mean')
    axis.set_xlabel('step')
    axis.set_ylabel('noise-prediction MSE')
    if len(losses):
        axis.set_yscale('log')
        axis.legend()
    figure.tight_layout()
    figure.savefig(path)
    plt.close(figure)


def tape_node_positions(graph: nx.DiGraph) -> Dict[int, Tuple[int, int]]:
    """Longest-path depth on x, order within that depth on y."""
    depth: Dict[int, int] = {}
    for node in nx.topological_sort(graph):
        depth[node] = max((depth[parent] + 1 for parent in graph.predecessors(node)), default=0)
    seen: Dict[int, int] = {}
    pos: Dict[int, Tuple[int, int]] = {}
    for node in sorted(depth):
        pos[node] = (depth[node], seen.get(depth[node], 0))
        seen[depth[node]] = seen.get(depth[node], 0) + 1
    return pos


def draw_tape(tape: Tape, path: PathLike) -> None:
    graph = tape.to_graph()
    figure = plt.figure(figsize=(12, 6))
    labels = {node: data['op'] for node, data in graph.nodes(data=True)}
    nx.draw(graph, pos=tape_node_positions(graph), labels=labels, node_size=200, font_size=6)
    figure.savefig(path)
    plt.close(figure)
