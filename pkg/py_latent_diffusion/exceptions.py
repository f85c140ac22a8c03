# -*- coding: utf-8 -*-
"""Error definitions shared by every module of the package."""
from typing import Iterable, List


class LatentDiffusionError(Exception):
    pass


class ShapeError(LatentDiffusionError, ValueError):
    pass


class ConfigError(LatentDiffusionError):
    """Invalid configuration; ``diagnostics`` holds one message per offending field."""

    def __init__(self, diagnostics: Iterable[str]) -> None:
        self.diagnostics: List[str] = list(diagnostics)
        super().__init__('; '.join(self.diagnostics))


class CheckpointError(LatentDiffusionError):
    """An unreadable binary artifact: a checkpoint or a dataset dump."""


class ChecksumError(CheckpointError):
    pass


class VersionError(CheckpointError):
    pass


class MatrixError(LatentDiffusionError):
    pass


class NotSymmetricError(MatrixError):
    pass


class ConvergenceError(MatrixError):
    pass


class UsageError(LatentDiffusionError):
    """A command-line request that cannot be honored, such as an unknown class label."""
