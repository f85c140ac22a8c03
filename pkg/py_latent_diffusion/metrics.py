# -*- coding: utf-8 -*-
"""Proxy-FID: Frechet distance between Gaussians fitted to random features.

The feature extractor is a fixed, seeded two-layer random projection
``W2 tanh(W1 x + b1)``. It stands in for a pretrained network, so values are
only comparable with other values computed by the same extractor.
"""
import logging
from dataclasses import dataclass
from typing import Any, Sequence, Union

import numpy as np

from .exceptions import ShapeError
from .linalg_utils import check_symmetric, clip_eigenvalues, jacobi_eigh, psd_sqrt, symmetrize
from .seeding import make_rng

__all__ = [
    'GaussianStats', 'FeatureExtractor', 'extract_features', 'fit_stats', 'sqrtm_trace',
    'frechet_distance', 'proxy_fid'
]

logger = logging.getLogger(__name__)

NEGATIVE_DISTANCE_TOL = 1e-6

Images = Union[np.ndarray, Sequence[np.ndarray]]


@dataclass(frozen=True)
class GaussianStats:
    mean: np.ndarray
    cov: np.ndarray
    count: int

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


@dataclass(frozen=True)
class FeatureExtractor:
    seed: int
    w1: np.ndarray  # [hidden, d_in]
    b1: np.ndarray  # [hidden]
    w2: np.ndarray  # [d_out, hidden]

    @classmethod
    def create(cls, seed: int, d_in: int, hidden: int = 256, d_out: int = 64) -> 'FeatureExtractor':
        if min(d_in, hidden, d_out) < 1:
            raise ValueError(f'extractor sizes must be positive, got {d_in}, {hidden}, {d_out}')
        rng = make_rng(seed)
        w1 = rng.standard_normal((hidden, d_in)) / np.sqrt(d_in)
        b1 = rng.standard_normal(hidden) * 0.5
        w2 = rng.standard_normal((d_out, hidden)) / np.sqrt(hidden)
        return cls(seed=seed, w1=w1, b1=b1, w2=w2)

    @property
    def d_in(self) -> int:
        return self.w1.shape[1]

    @property
    def d_out(self) -> int:
        return self.w2.shape[0]


def extract_features(images: Images, extractor: FeatureExtractor) -> np.ndarray:
    """[n, d_out] float64 features, one row per image."""
    if len(images) == 0:
        raise ValueError('cannot extract features from an empty image set')
    try:
        stacked = np.stack([np.asarray(image, dtype=np.float64) for image in images])
    except ValueError as error:
        raise ShapeError(f'images must share one shape: {error}') from error
    flat = stacked.reshape(len(stacked), -1)
    if flat.shape[1] != extractor.d_in:
        raise ShapeError(f'images have {flat.shape[1]} values, extractor expects {extractor.d_in}')
    return np.tanh(flat @ extractor.w1.T + extractor.b1) @ extractor.w2.T


def fit_stats(features: Any) -> GaussianStats:
    """Sample mean and unbiased (n - 1) covariance, computed in two passes."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2:
        raise ShapeError(f'features must be [n, d], got {features.shape}')
    count = features.shape[0]
    if count < 2:
        raise ValueError(f'need at least 2 samples to fit a covariance, got {count}')
    mean = features.mean(axis=0)
    centered = features - mean
    cov = symmetrize(centered.T @ centered / (count - 1))
    return GaussianStats(mean=mean, cov=cov, count=count)


def sqrtm_trace(a: Any, b: Any) -> float:
    """Tr((a b)^{1/2}) for symmetric PSD ``a`` and ``b``.

    Uses the symmetric similarity transform a^{1/2} b a^{1/2}, whose eigenvalues
    are those of a b.
    """
    a, b = check_symmetric(a), check_symmetric(b)
    if a.shape != b.shape:
        raise ShapeError(f'matrices differ in shape: {a.shape} vs {b.shape}')
    root_a = psd_sqrt(a)
    inner = symmetrize(root_a @ b @ root_a)
    values = clip_eigenvalues(jacobi_eigh(inner).values, float(np.linalg.norm(inner)))
    return float(np.sum(np.sqrt(values)))


def frechet_distance(s1: GaussianStats, s2: GaussianStats) -> float:
    if s1.dim != s2.dim:
        raise ShapeError(f'statistics differ in dimension: {s1.dim} vs {s2.dim}')
    diff = s1.mean - s2.mean
    value = (float(diff @ diff) + float(np.trace(s1.cov)) + float(np.trace(s2.cov)) -
             2.0 * sqrtm_trace(s1.cov, s2.cov))
    if value < -NEGATIVE_DISTANCE_TOL:
        logger.warning('Frechet distance %.3e is negative beyond round-off; clipped to 0', value)
    return max(value, 0.0)


def proxy_fid(generated: Images, reference: Images, extractor: FeatureExtractor) -> float:
    return frechet_distance(fit_stats(extract_features(generated, extractor)),
                            fit_stats(extract_features(reference, extractor)))
