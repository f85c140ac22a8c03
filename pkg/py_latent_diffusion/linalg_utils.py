# -*- coding: utf-8 -*-
"""Symmetric eigendecomposition by cyclic Jacobi rotations, plus PSD helpers."""
import logging
from typing import NamedTuple

import numpy as np

from .exceptions import ConvergenceError, MatrixError, NotSymmetricError, ShapeError

__all__ = [
    'Eigh', 'jacobi_eigh', 'symmetrize', 'check_symmetric', 'clip_eigenvalues', 'psd_sqrt',
    'off_diagonal_norm'
]

logger = logging.getLogger(__name__)

SYMMETRY_TOL = 1e-8
NEGATIVE_EIGEN_TOL = 1e-8


class Eigh(NamedTuple):
    values: np.ndarray  # ascending
    vectors: np.ndarray  # columns
    sweeps: int


def symmetrize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


def off_diagonal_norm(a: np.ndarray) -> float:
    return float(np.sqrt(max(np.sum(a * a) - np.sum(np.diag(a)**2), 0.0)))


def check_symmetric(a: np.ndarray, tol: float = SYMMETRY_TOL) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f'expected a square matrix, got shape {a.shape}')
    scale = max(float(np.max(np.abs(a), initial=0.0)), 1.0)
    asymmetry = float(np.max(np.abs(a - a.T), initial=0.0))
    if asymmetry > tol * scale:
        raise NotSymmetricError(f'matrix is not symmetric: max |a - a.T| = {asymmetry:.3e} '
                                f'exceeds {tol * scale:.3e}')
    return a


def _rotate(a: np.ndarray, v: np.ndarray, p: int, q: int) -> None:
    apq = a[p, q]
    theta = (a[q, q] - a[p, p]) / (2.0 * apq)
    t = (1.0 if theta >= 0 else -1.0) / (abs(theta) + np.sqrt(theta * theta + 1.0))
    c = 1.0 / np.sqrt(t * t + 1.0)
    s = t * c
    col_p, col_q = a[:, p].copy(), a[:, q].copy()
    a[:, p] = c * col_p - s * col_q
    a[:, q] = s * col_p + c * col_q
    row_p, row_q = a[p, :].copy(), a[q, :].copy()
    a[p, :] = c * row_p - s * row_q
    a[q, :] = s * row_p + c * row_q
    a[p, q] = a[q, p] = 0.0
    vec_p, vec_q = v[:, p].copy(), v[:, q].copy()
    v[:, p] = c * vec_p - s * vec_q
    v[:, q] = s * vec_p + c * vec_q


def jacobi_eigh(a: np.ndarray, tol: float = 1e-10, max_sweeps: int = 100) -> Eigh:
    """Eigenvalues and orthonormal eigenvectors of a symmetric matrix.

    Sweeps visit every upper off-diagonal pair in row order and stop once the
    off-diagonal Frobenius norm is below ``tol``, an absolute bound.
    """
    a = symmetrize(check_symmetric(a)).copy()
    n = a.shape[0]
    v = np.eye(n)
    sweeps = 0
    while off_diagonal_norm(a) >= tol:
        if sweeps == max_sweeps:
            raise ConvergenceError(f'Jacobi eigensolver did not converge after {sweeps} sweeps: '
                                   f'off-diagonal norm {off_diagonal_norm(a):.3e}, '
                                   f'target {tol:.3e}')
        for p in range(n - 1):
            for q in range(p + 1, n):
                if a[p, q] != 0.0:
                    _rotate(a, v, p, q)
        sweeps += 1
    order = np.argsort(np.diag(a), kind='stable')
    logger.debug('Jacobi eigensolver on %dx%d converged in %d sweeps', n, n, sweeps)
    return Eigh(values=np.diag(a)[order].copy(), vectors=v[:, order], sweeps=sweeps)


def clip_eigenvalues(values: np.ndarray, scale: float) -> np.ndarray:
    """Clips small negative eigenvalues to zero; rejects ones below -1e-8 * scale."""
    floor = -NEGATIVE_EIGEN_TOL * max(scale, 1.0)
    if values.size and values.min() < floor:
        raise MatrixError(f'matrix is not positive semi-definite: eigenvalue {values.min():.3e} '
                          f'is below {floor:.3e}')
    return np.clip(values, 0.0, None)


def psd_sqrt(a: np.ndarray) -> np.ndarray:
    """Symmetric square root of a PSD matrix."""
    eig = jacobi_eigh(a)
    roots = np.sqrt(clip_eigenvalues(eig.values, float(np.linalg.norm(a))))
    return symmetrize((eig.vectors * roots) @ eig.vectors.T)
