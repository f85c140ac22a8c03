# -*- coding: utf-8 -*-
"""Command-line entry point: ``py-latent-diffusion {train,sample,eval,gradcheck}``.

Exit codes: 0 success, 1 failed gradient check, 2 usage or configuration
error, 3 I/O error, 4 corrupt checkpoint.
"""
import argparse
import csv
import dataclasses
import logging
import math
import sys
import time
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
from tqdm import tqdm

from .checkpoint import load_checkpoint
from .config import RunConfig, load_config, micro_config
from .data import DatasetSpec, LabeledImage, make_dataset
from .diffusion import SampleRequest, sample_many
from .exceptions import CheckpointError, ConfigError, UsageError
from .gradcheck import denoiser_gradcheck, group_errors, record_loss_tape
from .latent_codec import LatentCodec
from .metrics import FeatureExtractor, proxy_fid
from .plotting import draw_sample_grid, draw_tape, write_ppm
from .seeding import derive_seed, make_rng
from .training import restore_checkpoint, run_training
from .vit_denoiser import Denoiser

__all__ = ['main', 'build_parser']

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_GRADCHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_CORRUPT = 4

DEFAULT_GUIDANCE = 1.25
GRADCHECK_TOLERANCE = 1e-3
EVAL_CSV_HEADER = ('step', 'n', 'guidance_scale', 'proxy_fid', 'wall_time')
NOT_COMPARABLE_BANNER = ('proxy-FID uses a seeded random-feature extractor; the values are not '
                         'comparable with published FID numbers')


def _valid_scale(scale: float) -> bool:
    return math.isfinite(scale) and scale >= 0


def _generate(denoiser: Denoiser, codec: LatentCodec, config: RunConfig,
              requests: Sequence[SampleRequest], quiet: bool) -> np.ndarray:
    sched = config.schedule.build()
    chunk = config.train.eval_batch_size
    images = []
    for start in tqdm(range(0, len(requests), chunk), disable=quiet, unit='batch'):
        images.append(sample_many(denoiser, codec, requests[start:start + chunk],
                                  config.guidance, sched))
    return np.concatenate(images)


def cmd_train(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    resume = load_checkpoint(args.resume) if args.resume else None
    ckpt = run_training(config, resume=resume, progress=not args.quiet)
    print(f'trained to step {ckpt.step}; checkpoint at {config.paths.resolve("checkpoint")}')
    return EXIT_OK


def cmd_sample(args: argparse.Namespace) -> int:
    config, codec, denoiser, _ = restore_checkpoint(load_checkpoint(args.ckpt))
    classes = config.vit.num_classes
    labels: List[int] = args.label if args.label else list(range(classes))
    for label in labels:
        if not 0 <= label < classes:
            raise UsageError(f'label {label} is outside [0, {classes})')
    if args.count < 1:
        raise UsageError(f'--count must be at least 1, got {args.count}')
    if not _valid_scale(args.guidance):
        raise UsageError(f'--guidance must be finite and non-negative, got {args.guidance}')
    requests = [
        SampleRequest(class_label=label, seed=derive_seed(args.seed, label, index),
                      num_steps=config.schedule.T, guidance_scale=args.guidance)
        for label in labels
        for index in range(args.count)
    ]
    images = _generate(denoiser, codec, config, requests, args.quiet)
    out_dir = Path(args.out) if args.out else Path(config.paths.out_dir) / 'samples'
    out_dir.mkdir(parents=True, exist_ok=True)
    for position, request in enumerate(requests):
        index = position % args.count
        write_ppm(out_dir / f'sample_l{request.class_label}_s{args.seed}_i{index}.ppm',
                  images[position])
    if args.grid:
        draw_sample_grid(list(images), [request.class_label for request in requests], args.grid,
                         columns=max(args.count, 1))
    print(f'wrote {len(requests)} samples to {out_dir}')
    return EXIT_OK


def reference_images(spec: DatasetSpec, n: int, seed: int) -> List[LabeledImage]:
    """``n`` images in class round-robin from a generator stream disjoint from training data."""
    reference_seed = derive_seed(spec.seed, seed, 1)
    if reference_seed == spec.seed:
        reference_seed += 1
    count = -(-n // spec.num_classes)
    dataset = make_dataset(dataclasses.replace(spec, count=count, seed=reference_seed))
    ordered = [
        dataset[label * count + index] for index in range(count)
        for label in range(spec.num_classes)
    ]
    return ordered[:n]


def cmd_eval(args: argparse.Namespace) -> int:
    """Scores every ``--ckpt`` against one shared reference set; one CSV row per scale."""
    if args.n < 2:
        raise UsageError(f'--n must be at least 2, got {args.n}')
    scales = args.guidance if args.guidance else [DEFAULT_GUIDANCE]
    if not all(_valid_scale(scale) for scale in scales):
        raise UsageError(f'guidance scales must be finite and non-negative, got {scales}')
    checkpoints = [load_checkpoint(path) for path in args.ckpt]
    runs = [restore_checkpoint(ckpt) for ckpt in checkpoints]
    config = runs[0][0]
    for path, (other, _, _, _) in zip(args.ckpt[1:], runs[1:]):
        if other.data != config.data:
            raise UsageError(f'{path} was trained on {other.data}, {args.ckpt[0]} on {config.data}')
    reference = np.stack([image.pixels for image in reference_images(config.data, args.n,
                                                                     args.seed)])
    extractor = FeatureExtractor.create(args.seed, int(np.prod(reference.shape[1:])))
    print(NOT_COMPARABLE_BANNER)
    rows = []
    for ckpt, (run_config, codec, denoiser, _) in zip(checkpoints, runs):
        classes = run_config.vit.num_classes
        for scale in scales:
            started = time.perf_counter()
            requests = [
                SampleRequest(class_label=index % classes, seed=derive_seed(args.seed, index),
                              num_steps=run_config.schedule.T, guidance_scale=scale)
                for index in range(args.n)
            ]
            generated = _generate(denoiser, codec, run_config, requests, args.quiet)
            value = proxy_fid(generated, reference, extractor)
            wall_time = time.perf_counter() - started
            print(f'step={ckpt.step} n={args.n} guidance={scale:g} proxy_fid={value:.6f}')
            rows.append((ckpt.step, args.n, repr(float(scale)), repr(value), f'{wall_time:.3f}'))
    if args.baseline:
        noise = make_rng(args.seed, 3).uniform(-1.0, 1.0, size=reference.shape)
        value = proxy_fid(noise, reference, extractor)
        print(f'n={args.n} uniform-noise baseline proxy_fid={value:.6f}')
        rows.append(('', args.n, 'noise', repr(value), '0.000'))
    csv_path = Path(args.csv) if args.csv else config.paths.resolve('eval_csv')
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    fresh = not csv_path.exists()
    with open(csv_path, 'a', newline='') as handle:
        writer = csv.writer(handle)
        if fresh:
            writer.writerow(EVAL_CSV_HEADER)
        writer.writerows(rows)
    return EXIT_OK


def cmd_gradcheck(args: argparse.Namespace) -> int:
    config = micro_config()
    if args.config:
        loaded = load_config(args.config)
        config = dataclasses.replace(config, schedule=loaded.schedule,
                                     guidance=dataclasses.replace(
                                         config.guidance,
                                         drop_probability=loaded.guidance.drop_probability))
    errors = group_errors(denoiser_gradcheck(config, seed=args.seed))
    width = max(len(group) for group in errors)
    for group, error in errors.items():
        print(f'{group:<{width}}  {error:.3e}')
    worst = max(errors.values())
    passed = worst < args.tolerance
    print(f'max relative error {worst:.3e}: {"PASS" if passed else "FAIL"}')
    if args.graph:
        draw_tape(record_loss_tape(config, seed=args.seed), args.graph)
        print(f'wrote the loss tape to {args.graph}')
    return EXIT_OK if passed else EXIT_GRADCHECK_FAILED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='py-latent-diffusion',
                                     description='Desk-scale latent diffusion with a ViT denoiser.')
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument('-v', '--verbose', action='store_true', help='debug logging')
    verbosity.add_argument('-q', '--quiet', action='store_true',
                           help='warnings only, no progress bars')
    commands = parser.add_subparsers(dest='command', required=True)

    train = commands.add_parser('train', help='train the codec, then the denoiser')
    train.add_argument('--config', required=True, help='key=value run configuration')
    train.add_argument('--resume', help='checkpoint to continue from')
    train.set_defaults(handler=cmd_train)

    sample = commands.add_parser('sample', help='write PPM samples from a checkpoint')
    sample.add_argument('--ckpt', required=True)
    sample.add_argument('--label', type=int, action='append',
                        help='class label, repeatable (default: every class)')
    sample.add_argument('--count', type=int, default=1, help='images per label')
    sample.add_argument('--seed', type=int, default=0)
    sample.add_argument('--guidance', type=float, default=DEFAULT_GUIDANCE)
    sample.add_argument('--out', help='output directory (default: <out_dir>/samples)')
    sample.add_argument('--grid', help='also draw the samples into this image file')
    sample.set_defaults(handler=cmd_sample)

    evaluate = commands.add_parser('eval', help='proxy-FID of samples against reference images')
    evaluate.add_argument('--ckpt', required=True, action='append',
                          help='checkpoint to score, repeatable (e.g. every step-tagged copy)')
    evaluate.add_argument('--n', type=int, default=2000)
    evaluate.add_argument('--seed', type=int, default=0)
    evaluate.add_argument('--guidance', type=float, action='append',
                          help=f'guidance scale, repeatable (default: {DEFAULT_GUIDANCE})')
    evaluate.add_argument('--baseline', action='store_true',
                          help='also report uniform noise against the reference set')
    evaluate.add_argument('--csv', help='CSV to append to (default: <out_dir>/<paths.eval_csv>)')
    evaluate.set_defaults(handler=cmd_eval)

    gradcheck = commands.add_parser('gradcheck', help='finite-difference check in 64-bit')
    gradcheck.add_argument('--config', help='take the schedule and label dropout from here')
    gradcheck.add_argument('--seed', type=int, default=0)
    gradcheck.add_argument('--tolerance', type=float, default=GRADCHECK_TOLERANCE)
    gradcheck.add_argument('--graph', help='also draw the recorded loss tape into this image file')
    gradcheck.set_defaults(handler=cmd_gradcheck)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format='%(asctime)s %(levelname)s %(name)s: %(message)s')
    handler: Callable[[argparse.Namespace], int] = args.handler
    failures: Dict[type, int] = {
        ConfigError: EXIT_USAGE,
        UsageError: EXIT_USAGE,
        CheckpointError: EXIT_CORRUPT,
        OSError: EXIT_IO,
    }
    try:
        return handler(args)
    except tuple(failures) as error:
        code = next(code for kind, code in failures.items() if isinstance(error, kind))
        logger.error('%s', error)
        return code


if __name__ == '__main__':
    sys.exit(main())
