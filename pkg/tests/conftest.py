# -*- coding: utf-8 -*-
import pytest

from py_latent_diffusion.config import PathsConfig, RunConfig, ScheduleConfig, TrainConfig
from py_latent_diffusion.data import DatasetSpec
from py_latent_diffusion.diffusion import GuidanceConfig
from py_latent_diffusion.latent_codec import CodecConfig
from py_latent_diffusion.vit_denoiser import ViTConfig


def make_tiny_config(out_dir, steps=6):
    """Two classes of 8x8 images, 4x4x2 latents, a one-block-each ViT and five timesteps."""
    return RunConfig(
        schedule=ScheduleConfig(T=5),
        vit=ViTConfig(latent_hw=4, latent_channels=2, patch_size=2, embed_dim=8, enc_depth=1,
                      dec_depth=1, heads=2, mlp_ratio=2.0, num_classes=2),
        codec=CodecConfig(factor=2, latent_channels=2, pixel_hw=8),
        guidance=GuidanceConfig(null_label_index=2),
        data=DatasetSpec(num_classes=2, image_hw=8, count=4, seed=0),
        train=TrainConfig(batch_size=4, steps=steps, codec_steps=20, codec_batch_size=4,
                          checkpoint_every=3, log_every=2, eval_batch_size=8),
        paths=PathsConfig(out_dir=str(out_dir)))


@pytest.fixture
def tiny_config(tmp_path):
    return make_tiny_config(tmp_path / 'run')
