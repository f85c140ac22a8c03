# -*- coding: utf-8 -*-
import csv
import dataclasses
import logging

import numpy as np
import pytest

from py_latent_diffusion.checkpoint import load_checkpoint
from py_latent_diffusion.config import ScheduleConfig, dump_config
from py_latent_diffusion.diffusion import SampleRequest, sample
from py_latent_diffusion.exceptions import CheckpointError
from py_latent_diffusion.optim import AdamConfig
from py_latent_diffusion.training import CSV_HEADER, restore_checkpoint, run_training

from .conftest import make_tiny_config


def read_log(config):
    with open(config.paths.resolve('metrics_csv'), newline='') as handle:
        return list(csv.reader(handle))


def same_tensors(first, second):
    return list(first.tensors) == list(second.tensors) and all(
        np.array_equal(first.tensors[name], second.tensors[name]) for name in first.tensors)


def test_run_writes_checkpoint_and_loss_log(tiny_config):
    ckpt = run_training(tiny_config, progress=False)
    assert (ckpt.step, ckpt.adam_step) == (6, 6)
    assert ckpt.config_text == dump_config(tiny_config)
    assert same_tensors(load_checkpoint(tiny_config.paths.resolve('checkpoint')), ckpt)
    rows = read_log(tiny_config)
    assert tuple(rows[0]) == CSV_HEADER
    assert [int(row[0]) for row in rows[1:]] == list(range(6))
    assert all(np.isfinite(float(row[1])) for row in rows[1:])


def test_checkpoint_holds_every_group(tiny_config):
    ckpt = run_training(tiny_config, progress=False)
    prefixes = {name.split('.')[0] for name in ckpt.tensors}
    assert prefixes == {'denoiser', 'codec', 'adam'}
    assert list(ckpt.group('adam.m')) == list(ckpt.group('denoiser'))
    assert list(ckpt.group('adam.v')) == list(ckpt.group('denoiser'))
    assert list(ckpt.group('codec')) == ['encode.weight', 'encode.bias', 'decode.weight',
                                         'decode.bias']


def test_runs_are_reproducible(tmp_path):
    first = run_training(make_tiny_config(tmp_path / 'a'), progress=False)
    second = run_training(make_tiny_config(tmp_path / 'b'), progress=False)
    assert same_tensors(first, second)


def test_resume_matches_uninterrupted_run(tmp_path):
    straight = run_training(make_tiny_config(tmp_path / 'straight'), progress=False)

    short = make_tiny_config(tmp_path / 'resumed', steps=3)
    halfway = run_training(short, progress=False)
    assert halfway.step == 3
    resumed_config = dataclasses.replace(short, train=dataclasses.replace(short.train, steps=6))
    resume = load_checkpoint(short.paths.resolve('checkpoint'))
    resumed = run_training(resumed_config, resume=resume, progress=False)
    assert resumed.step == 6
    assert same_tensors(resumed, straight)
    assert [int(row[0]) for row in read_log(resumed_config)[1:]] == list(range(6))


def test_codec_stays_frozen(tmp_path):
    config = make_tiny_config(tmp_path / 'run', steps=3)
    halfway = run_training(config, progress=False)
    longer = dataclasses.replace(config, train=dataclasses.replace(config.train, steps=6))
    final = run_training(longer, resume=halfway, progress=False)
    for name, value in halfway.group('codec').items():
        assert np.array_equal(final.group('codec')[name], value)


def test_progress_is_logged(tiny_config, caplog):
    with caplog.at_level(logging.INFO, logger='py_latent_diffusion.training'):
        run_training(tiny_config, progress=False)
    assert 'step 2: mean loss' in caplog.text
    assert 'step 6: mean loss' in caplog.text


def test_restored_model_samples(tiny_config):
    config, codec, denoiser, state = restore_checkpoint(run_training(tiny_config,
                                                                     progress=False))
    assert config == tiny_config
    assert state.step_count == 6
    image = sample(denoiser, codec, SampleRequest(1, seed=4, num_steps=5), config.guidance,
                   config.schedule.build())
    assert image.shape == (8, 8, 3)
    assert np.abs(image).max() <= 1.0


def test_nothing_left_to_train_keeps_the_checkpoint(tiny_config):
    done = run_training(tiny_config, progress=False)
    again = run_training(tiny_config, resume=done, progress=False)
    assert again.step == 6
    assert same_tensors(again, done)
    assert len(read_log(tiny_config)) == 7


def test_resume_rejects_foreign_geometry(tiny_config):
    done = run_training(tiny_config, progress=False)
    wider = dataclasses.replace(tiny_config,
                                vit=dataclasses.replace(tiny_config.vit, embed_dim=16))
    with pytest.raises(CheckpointError):
        run_training(wider, resume=done, progress=False)


def test_run_keeps_step_tagged_checkpoints_and_plots_the_loss(tiny_config):
    final = run_training(tiny_config, progress=False)
    paths = tiny_config.paths
    assert paths.step_checkpoint(3).name == 'model_step000003.ldtc'
    assert load_checkpoint(paths.step_checkpoint(3)).step == 3
    assert same_tensors(load_checkpoint(paths.step_checkpoint(6)), final)
    assert paths.resolve('loss_plot').stat().st_size > 0


def test_training_loss_goes_down(tmp_path):
    config = make_tiny_config(tmp_path / 'run', steps=300)
    config = dataclasses.replace(
        config, schedule=ScheduleConfig(T=5, beta_start=0.1, beta_end=0.5),
        optim=AdamConfig(lr=1e-2),
        train=dataclasses.replace(config.train, checkpoint_every=300, log_every=100))
    run_training(config, progress=False)
    losses = [float(row[1]) for row in read_log(config)[1:]]
    assert len(losses) == 300
    assert np.mean(losses[-50:]) < 0.75 * np.mean(losses[:50])
