# -*- coding: utf-8 -*-
"""Training loops: codec first, then the denoiser on frozen latents.

Step ``i`` of the denoiser loop draws its minibatch from ``make_rng(seed,
BATCH_STREAM, i)`` and its timesteps, noise and label drops (in that order)
from ``make_rng(seed, NOISE_STREAM, i)``, so a run resumed from a checkpoint
replays exactly the steps an uninterrupted run would have taken.
"""
import csv
import logging
import time
from pathlib import Path
from typing import Dict, Iterator, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from .autograd import Tape, backward
from .checkpoint import Checkpoint, save_checkpoint
from .config import RunConfig, dump_config, parse_config
from .data import LabeledImage, make_dataset, sample_batch
from .diffusion import NoiseSchedule, sample_timesteps, training_loss
from .exceptions import CheckpointError, ShapeError
from .latent_codec import LatentCodec, train_codec
from .optim import AdamConfig, AdamState, adam_step, init_adam
from .plotting import draw_loss_curve
from .seeding import derive_seed, make_rng
from .vit_denoiser import Denoiser, denoiser_forward, init_params, param_shapes

__all__ = [
    'TrainRecord', 'DenoiserStep', 'denoiser_training_steps', 'make_checkpoint',
    'restore_checkpoint', 'run_training', 'CSV_HEADER'
]

logger = logging.getLogger(__name__)

INIT_STREAM = 0
CODEC_STREAM = 1
BATCH_STREAM = 2
NOISE_STREAM = 3

CSV_HEADER = ('step', 'loss', 'wall_time')

Params = Dict[str, np.ndarray]


class TrainRecord(NamedTuple):
    step: int
    loss: float
    wall_time: float


class DenoiserStep(NamedTuple):
    record: TrainRecord
    params: Params
    state: AdamState


def denoiser_training_steps(dataset: Sequence[LabeledImage], codec: LatentCodec,
                            config: RunConfig, sched: NoiseSchedule, params: Params,
                            state: AdamState, start_step: int = 0) -> Iterator[DenoiserStep]:
    """Steps ``start_step .. config.train.steps - 1`` of Adam on the noise-prediction loss."""
    vit, train = config.vit, config.train
    started = time.perf_counter()
    for step in range(start_step, train.steps):
        pixels, labels = sample_batch(dataset, train.batch_size,
                                      make_rng(train.seed, BATCH_STREAM, step))
        rng = make_rng(train.seed, NOISE_STREAM, step)
        t = sample_timesteps(rng, sched.T, len(labels))
        eps = rng.standard_normal((len(labels), ) + codec.latent_shape, dtype=np.float32)
        with Tape() as tape:
            watched = {name: tape.parameter(value, name) for name, value in params.items()}
            loss = training_loss(lambda z, ts, ys: denoiser_forward(z, ts, ys, watched, vit),
                                 codec, pixels, labels, t, eps, config.guidance, rng, sched)
        grads = backward(tape, loss)
        params, state = adam_step(params, grads, state)
        yield DenoiserStep(TrainRecord(step, float(loss.data), time.perf_counter() - started),
                           params, state)


def make_checkpoint(config: RunConfig, step: int, codec: LatentCodec, params: Params,
                    state: AdamState) -> Checkpoint:
    ckpt = Checkpoint(config_text=dump_config(config), step=step, adam_step=state.step_count)
    ckpt.add_group('denoiser', params)
    ckpt.add_group('codec', codec.params)
    ckpt.add_group('adam.m', state.first_moment)
    ckpt.add_group('adam.v', state.second_moment)
    return ckpt


def restore_checkpoint(
        ckpt: Checkpoint,
        config: Optional[RunConfig] = None) -> Tuple[RunConfig, LatentCodec, Denoiser, AdamState]:
    """Rebuilds the run from ``ckpt``; ``config`` overrides the stored one (e.g. more steps)."""
    config = config if config is not None else parse_config(ckpt.config_text)
    params = ckpt.group('denoiser')
    expected = param_shapes(config.vit)
    found = {name: value.shape for name, value in params.items()}
    if found != dict(expected):
        mismatched = sorted(set(found.items()) ^ set(expected.items()))
        raise CheckpointError('denoiser tensors do not fit the configured ViT: '
                              f'{mismatched[:4]}')
    try:
        codec = LatentCodec(config.codec, ckpt.group('codec'))
    except ShapeError as error:
        raise CheckpointError(f'codec tensors do not fit the config: {error}') from error
    denoiser = Denoiser(config.vit, params)
    state = init_adam(denoiser.params, config.optim)
    state.step_count = ckpt.adam_step
    if ckpt.adam_step:
        state.first_moment = ckpt.group('adam.m')
        state.second_moment = ckpt.group('adam.v')
    return config, codec, denoiser, state


def _open_log(path: Path, append: bool):
    fresh = not (append and path.exists())
    handle = open(path, 'a' if not fresh else 'w', newline='')
    writer = csv.writer(handle)
    if fresh:
        writer.writerow(CSV_HEADER)
    return handle, writer


def run_training(config: RunConfig, resume: Optional[Checkpoint] = None,
                 progress: bool = True) -> Checkpoint:
    """Full pipeline under ``paths.out_dir``.

    Writes the loss CSV and its plot, and every ``checkpoint_every`` steps both the latest
    checkpoint and a step-tagged copy (`PathsConfig.step_checkpoint`).
    """
    train = config.train
    out_dir = Path(config.paths.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt_path = config.paths.resolve('checkpoint')
    sched = config.schedule.build()
    dataset = make_dataset(config.data)

    if resume is not None:
        _, codec, denoiser, state = restore_checkpoint(resume, config)
        params, start = denoiser.params, resume.step
        logger.info('resuming from step %d', start)
    else:
        codec_optim = AdamConfig(lr=train.codec_lr, beta1=config.optim.beta1,
                                 beta2=config.optim.beta2, eps=config.optim.eps)
        codec = train_codec(dataset, config.codec, codec_optim,
                            derive_seed(train.seed, CODEC_STREAM), train.codec_steps,
                            train.codec_batch_size, train.codec_target_mse)
        if config.codec.kind != 'identity':
            pixels = np.stack([image.pixels for image in dataset]).transpose(0, 3, 1, 2)
            logger.info('codec reconstruction MSE over the dataset: %.5f',
                        codec.reconstruction_error(pixels))
        params = init_params(config.vit, derive_seed(train.seed, INIT_STREAM))
        state = init_adam(params, config.optim)
        start = 0

    frozen = codec.checksum()
    ckpt = make_checkpoint(config, start, codec, params, state)
    recent: List[float] = []
    handle, writer = _open_log(config.paths.resolve('metrics_csv'), append=resume is not None)
    try:
        with tqdm(total=train.steps, initial=start, disable=not progress, unit='step') as bar:
            for record, params, state in denoiser_training_steps(dataset, codec, config, sched,
                                                                 params, state, start):
                writer.writerow((record.step, repr(record.loss), f'{record.wall_time:.3f}'))
                recent.append(record.loss)
                bar.update(1)
                done = record.step + 1
                if done % train.log_every == 0:
                    mean = sum(recent) / len(recent)
                    bar.set_postfix(loss=f'{mean:.4f}')
                    logger.info('step %d: mean loss %.5f over the last %d steps', done, mean,
                                len(recent))
                    recent.clear()
                if done % train.checkpoint_every == 0 or done == train.steps:
                    ckpt = make_checkpoint(config, done, codec, params, state)
                    save_checkpoint(config.paths.step_checkpoint(done), ckpt)
                    save_checkpoint(ckpt_path, ckpt)
                    handle.flush()
    finally:
        handle.close()
    if train.steps > 0:
        draw_loss_curve(config.paths.resolve('metrics_csv'), config.paths.resolve('loss_plot'),
                        window=max(1, min(train.log_every, train.steps)))
    assert codec.checksum() == frozen, 'codec parameters changed during denoiser training'
    if start >= train.steps:
        save_checkpoint(ckpt_path, ckpt)
    return ckpt
