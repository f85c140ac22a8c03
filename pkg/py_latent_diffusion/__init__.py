"""Top-level package for Py Latent Diffusion."""

__author__ = """Francisco Moretti"""
__email__ = 'franciscoemoretti@gmail.com'
__version__ = '0.1.0'

# flake8: noqa

from .autograd import Tape, Tensor, backward, precision
from .diffusion import (GuidanceConfig, NoiseSchedule, SampleRequest, cfg_epsilon, ddpm_step,
                        make_linear_schedule, q_sample, sample, sample_many, training_loss)
from .latent_codec import CodecConfig, LatentCodec, train_codec
from .metrics import FeatureExtractor, fit_stats, frechet_distance, proxy_fid, sqrtm_trace
from .vit_denoiser import Denoiser, ViTConfig, count_params, denoiser_forward, init_params
