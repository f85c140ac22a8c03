# -*- coding: utf-8 -*-
import numpy as np
import pytest

from py_latent_diffusion.autograd import Tape
from py_latent_diffusion.exceptions import ShapeError
from py_latent_diffusion.ops import add, matmul, mul, sum_all
from py_latent_diffusion.plotting import (draw_loss_curve, draw_sample_grid, draw_tape,
                                          tape_node_positions, to_uint8, write_ppm)


@pytest.mark.parametrize(
    'value,   expected',
    [
        (-1.0,    0),
        (1.0,     255),
        (0.0,     128),
        (-3.0,    0),
        (7.5,     255),
        (0.5,     191),
    ]
)  # yapf: disable
def test_to_uint8(value, expected):
    assert to_uint8(np.array([value]))[0] == expected


def test_ppm_layout(tmp_path):
    pixels = np.zeros((8, 8, 3))
    pixels[0, 0] = [1.0, -1.0, 0.0]
    path = tmp_path / 'one.ppm'
    write_ppm(path, pixels)
    raw = path.read_bytes()
    header = b'P6\n8 8\n255\n'
    assert raw.startswith(header)
    assert len(raw) == len(header) + 8 * 8 * 3
    assert raw[len(header):len(header) + 3] == bytes([255, 0, 128])


def test_ppm_needs_rgb(tmp_path):
    with pytest.raises(ShapeError):
        write_ppm(tmp_path / 'gray.ppm', np.zeros((4, 4)))


def test_sample_grid(tmp_path):
    images = [np.full((8, 8, 3), value) for value in np.linspace(-1, 1, 5)]
    draw_sample_grid(images, [0, 1, 2, 0, 1], tmp_path / 'grid.png', columns=3,
                     class_names=['disk', 'square', 'triangle'])
    assert (tmp_path / 'grid.png').stat().st_size > 0
    with pytest.raises(ValueError):
        draw_sample_grid(images, [0], tmp_path / 'bad.png')
    with pytest.raises(ValueError):
        draw_sample_grid([], [], tmp_path / 'empty.png')


def test_loss_curve(tmp_path):
    csv_path = tmp_path / 'loss.csv'
    rows = ['step,loss,wall_time'] + [f'{step},{1.0 / (step + 1)},{step * 0.1}'
                                      for step in range(60)]
    csv_path.write_text('\n'.join(rows) + '\n')
    draw_loss_curve(csv_path, tmp_path / 'loss.png', window=10)
    assert (tmp_path / 'loss.png').stat().st_size > 0


def test_tape_drawing(tmp_path):
    with Tape() as tape:
        w = tape.parameter(np.ones((2, 2)), 'w')
        b = tape.parameter(np.ones(2), 'b')
        hidden = add(matmul(np.ones((3, 2)), w), b)
        loss = sum_all(mul(hidden, hidden))
    graph = tape.to_graph()
    pos = tape_node_positions(graph)
    assert pos[w.node][0] == pos[b.node][0] == 0
    assert pos[loss.node][0] == max(x for x, _ in pos.values())
    assert len(set(pos.values())) == len(pos)
    draw_tape(tape, tmp_path / 'tape.png')
    assert (tmp_path / 'tape.png').stat().st_size > 0
