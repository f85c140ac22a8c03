# -*- coding: utf-8 -*-
"""Run configuration and its flat ``section.key = value`` text format.

::

    # comments start with '#'
    schedule.T = 200
    vit.embed_dim = 128
    paths.out_dir = runs/desk

Values are converted by the type of the field's default. Every problem in a
file (unknown keys, malformed lines, bad values, inconsistent fields) is
collected and reported in one `ConfigError`.
"""
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Union

from .data import DatasetSpec
from .diffusion import GuidanceConfig, NoiseSchedule, make_linear_schedule
from .exceptions import ConfigError
from .latent_codec import CodecConfig
from .optim import AdamConfig
from .vit_denoiser import ViTConfig

__all__ = [
    'ScheduleConfig', 'TrainConfig', 'PathsConfig', 'RunConfig', 'parse_config', 'load_config',
    'dump_config', 'validate_config', 'micro_config'
]


@dataclass(frozen=True)
class ScheduleConfig:
    T: int = 200
    beta_start: float = 1e-4
    beta_end: float = 0.02

    def build(self) -> NoiseSchedule:
        return make_linear_schedule(self.T, self.beta_start, self.beta_end)

    def problems(self) -> List[str]:
        found = []
        if self.T < 1:
            found.append(f'schedule.T={self.T} must be at least 1')
        if not 0.0 < self.beta_start <= self.beta_end < 1.0:
            found.append(f'schedule.beta_start={self.beta_start} and '
                         f'schedule.beta_end={self.beta_end} need 0 < start <= end < 1')
        return found


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    steps: int = 2000
    seed: int = 0
    codec_steps: int = 3000
    codec_batch_size: int = 32
    codec_lr: float = 5e-3
    codec_target_mse: float = 0.01
    checkpoint_every: int = 500
    log_every: int = 50
    eval_batch_size: int = 64

    def problems(self) -> List[str]:
        found = []
        for name in ('batch_size', 'codec_batch_size', 'checkpoint_every', 'log_every',
                     'eval_batch_size'):
            if getattr(self, name) < 1:
                found.append(f'train.{name}={getattr(self, name)} must be at least 1')
        for name in ('steps', 'codec_steps', 'seed'):
            if getattr(self, name) < 0:
                found.append(f'train.{name}={getattr(self, name)} is negative')
        if self.codec_lr <= 0:
            found.append(f'train.codec_lr={self.codec_lr} must be positive')
        return found


@dataclass(frozen=True)
class PathsConfig:
    out_dir: str = 'runs/desk'
    checkpoint: str = 'model.ldtc'
    metrics_csv: str = 'train_loss.csv'
    eval_csv: str = 'eval.csv'
    loss_plot: str = 'train_loss.png'

    def resolve(self, name: str) -> Path:
        """``out_dir / name`` unless the configured path is absolute."""
        value = Path(getattr(self, name))
        return value if value.is_absolute() else Path(self.out_dir) / value

    def step_checkpoint(self, step: int) -> Path:
        """``model.ldtc`` -> ``model_step000500.ldtc`` next to the latest checkpoint."""
        latest = self.resolve('checkpoint')
        return latest.with_name(f'{latest.stem}_step{step:06d}{latest.suffix}')


@dataclass(frozen=True)
class RunConfig:
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    vit: ViTConfig = field(default_factory=ViTConfig)
    codec: CodecConfig = field(default_factory=CodecConfig)
    guidance: GuidanceConfig = field(default_factory=GuidanceConfig)
    optim: AdamConfig = field(default_factory=AdamConfig)
    data: DatasetSpec = field(default_factory=DatasetSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)


def _convert(raw: str, default: Any) -> Any:
    if isinstance(default, bool):
        if raw.lower() not in ('true', 'false'):
            raise ValueError(f'expected true or false, got {raw!r}')
        return raw.lower() == 'true'
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw


def validate_config(config: RunConfig) -> List[str]:
    found: List[str] = []
    found += config.schedule.problems()
    found += list(config.vit.problems())
    found += config.codec.problems()
    found += config.guidance.problems()
    found += config.data.problems()
    found += config.train.problems()
    if config.optim.lr <= 0 or config.optim.eps <= 0:
        found.append('optim.lr and optim.eps must be positive')
    if not (0.0 <= config.optim.beta1 < 1.0 and 0.0 <= config.optim.beta2 < 1.0):
        found.append('optim.beta1 and optim.beta2 must lie in [0, 1)')
    if found:
        return found
    if config.codec.latent_shape != config.vit.latent_shape:
        found.append(f'codec latent shape {config.codec.latent_shape} differs from '
                     f'vit latent shape {config.vit.latent_shape}')
    if config.codec.pixel_hw != config.data.image_hw:
        found.append(f'codec.pixel_hw={config.codec.pixel_hw} differs from '
                     f'data.image_hw={config.data.image_hw}')
    if config.codec.pixel_channels != 3:
        found.append(f'codec.pixel_channels={config.codec.pixel_channels} must be 3 for RGB data')
    if config.vit.num_classes != config.data.num_classes:
        found.append(f'vit.num_classes={config.vit.num_classes} differs from '
                     f'data.num_classes={config.data.num_classes}')
    if config.guidance.null_label_index != config.vit.num_classes:
        found.append(f'guidance.null_label_index={config.guidance.null_label_index} must equal '
                     f'the class count {config.vit.num_classes}')
    return found


def parse_config(text: str, base: RunConfig = RunConfig()) -> RunConfig:
    sections = {section.name: getattr(base, section.name) for section in dataclasses.fields(base)}
    updates: Dict[str, Dict[str, Any]] = {name: {} for name in sections}
    diagnostics: List[str] = []
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            diagnostics.append(f'line {number}: expected "section.key = value", got {line!r}')
            continue
        key, raw = (part.strip() for part in line.split('=', 1))
        section_name, _, field_name = key.partition('.')
        if section_name not in sections:
            diagnostics.append(f'line {number}: unknown section {section_name!r}')
            continue
        section = sections[section_name]
        known = {item.name for item in dataclasses.fields(section)}
        if field_name not in known:
            diagnostics.append(f'line {number}: unknown key {key!r}')
            continue
        try:
            updates[section_name][field_name] = _convert(raw, getattr(section, field_name))
        except ValueError as error:
            diagnostics.append(f'line {number}: {key}: {error}')
    if diagnostics:
        raise ConfigError(diagnostics)
    config = RunConfig(**{
        name: dataclasses.replace(section, **updates[name])
        for name, section in sections.items()
    })
    problems = validate_config(config)
    if problems:
        raise ConfigError(problems)
    return config


def load_config(path: Union[str, Path]) -> RunConfig:
    return parse_config(Path(path).read_text(encoding='utf-8'))


def dump_config(config: RunConfig) -> str:
    lines = []
    for section in dataclasses.fields(config):
        values = getattr(config, section.name)
        for item in dataclasses.fields(values):
            value = getattr(values, item.name)
            text = repr(value) if isinstance(value, float) else str(value)
            lines.append(f'{section.name}.{item.name} = {text}')
    return '\n'.join(lines) + '\n'


def micro_config(T: int = 10) -> RunConfig:
    """A tiny 64-bit friendly configuration for gradient checks: 4x4x2 latents, one block each."""
    vit = ViTConfig(latent_hw=4, latent_channels=2, patch_size=2, embed_dim=8, enc_depth=1,
                    dec_depth=1, heads=2, mlp_ratio=2.0, num_classes=3, init_std=0.5)
    return RunConfig(schedule=ScheduleConfig(T=T),
                     vit=vit,
                     codec=CodecConfig(kind='identity', pixel_hw=4, pixel_channels=2),
                     guidance=GuidanceConfig(null_label_index=3),
                     data=DatasetSpec(num_classes=3, image_hw=8, count=1))
