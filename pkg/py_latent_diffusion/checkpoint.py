# -*- coding: utf-8 -*-
"""Binary checkpoints.

Layout, all integers little-endian::

    b'LDTC'  u32 version  u64 step  u64 adam_step
    u32 config length, UTF-8 config text (the `dump_config` form)
    u32 tensor count, then per tensor:
        u16 name length, UTF-8 name, u8 ndim, u32 extent * ndim, float32 data
    32-byte SHA-256 digest of everything above

Tensor names are prefixed by their owner: ``denoiser.``, ``codec.``,
``adam.m.`` and ``adam.v.``.
"""
import hashlib
import logging
import os
import struct
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Mapping, Union

import numpy as np

from .exceptions import ChecksumError, VersionError

__all__ = ['Checkpoint', 'save_checkpoint', 'load_checkpoint', 'encode_checkpoint',
           'decode_checkpoint', 'MAGIC', 'FORMAT_VERSION']

logger = logging.getLogger(__name__)

MAGIC = b'LDTC'
FORMAT_VERSION = 1
DIGEST_SIZE = 32

_HEADER = struct.Struct('<4sIQQ')
_U32 = struct.Struct('<I')
_U16 = struct.Struct('<H')
_U8 = struct.Struct('<B')


@dataclass
class Checkpoint:
    config_text: str
    step: int = 0
    adam_step: int = 0
    tensors: Dict[str, np.ndarray] = field(default_factory=OrderedDict)
    version: int = FORMAT_VERSION

    def group(self, prefix: str) -> Dict[str, np.ndarray]:
        """Tensors under ``prefix.`` with the prefix stripped."""
        start = len(prefix) + 1
        return OrderedDict((name[start:], value) for name, value in self.tensors.items()
                           if name.startswith(prefix + '.'))

    def add_group(self, prefix: str, tensors: Mapping[str, np.ndarray]) -> None:
        for name, value in tensors.items():
            self.tensors[f'{prefix}.{name}'] = value


def encode_checkpoint(ckpt: Checkpoint) -> bytes:
    parts = [_HEADER.pack(MAGIC, ckpt.version, ckpt.step, ckpt.adam_step)]
    config = ckpt.config_text.encode('utf-8')
    parts += [_U32.pack(len(config)), config, _U32.pack(len(ckpt.tensors))]
    for name, value in ckpt.tensors.items():
        encoded = name.encode('utf-8')
        array = np.asarray(value)
        parts += [_U16.pack(len(encoded)), encoded, _U8.pack(array.ndim)]
        parts += [_U32.pack(extent) for extent in array.shape]
        parts.append(np.ascontiguousarray(array, dtype='<f4').tobytes())
    body = b''.join(parts)
    return body + hashlib.sha256(body).digest()


class _Reader:

    def __init__(self, raw: bytes) -> None:
        self.raw = raw
        self.offset = 0

    def take(self, size: int) -> bytes:
        if self.offset + size > len(self.raw):
            raise ChecksumError(f'checkpoint ends early: needed {size} bytes at offset '
                                f'{self.offset}, {len(self.raw) - self.offset} left')
        chunk = self.raw[self.offset:self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, layout: struct.Struct) -> tuple:
        return layout.unpack(self.take(layout.size))


def decode_checkpoint(raw: bytes) -> Checkpoint:
    if raw[:len(MAGIC)] != MAGIC:
        if len(raw) < len(MAGIC):
            raise ChecksumError(f'checkpoint is truncated to {len(raw)} bytes')
        raise VersionError(f'magic {raw[:len(MAGIC)]!r} is not a checkpoint')
    if len(raw) < _HEADER.size + DIGEST_SIZE:
        raise ChecksumError(f'checkpoint is truncated to {len(raw)} bytes')
    body, digest = raw[:-DIGEST_SIZE], raw[-DIGEST_SIZE:]
    if hashlib.sha256(body).digest() != digest:
        raise ChecksumError('checkpoint digest does not match its content')
    reader = _Reader(body)
    _, version, step, adam_step = reader.unpack(_HEADER)
    if version != FORMAT_VERSION:
        raise VersionError(f'checkpoint format version {version}, expected {FORMAT_VERSION}')
    (config_size, ) = reader.unpack(_U32)
    config_text = reader.take(config_size).decode('utf-8')
    (count, ) = reader.unpack(_U32)
    tensors: Dict[str, np.ndarray] = OrderedDict()
    for _ in range(count):
        (name_size, ) = reader.unpack(_U16)
        name = reader.take(name_size).decode('utf-8')
        (ndim, ) = reader.unpack(_U8)
        shape = tuple(reader.unpack(_U32)[0] for _ in range(ndim))
        size = int(np.prod(shape, dtype=np.int64)) * 4
        tensors[name] = np.frombuffer(reader.take(size), dtype='<f4').reshape(shape).astype(
            np.float32)
    if reader.offset != len(body):
        raise ChecksumError(f'{len(body) - reader.offset} unexpected trailing bytes')
    return Checkpoint(config_text=config_text, step=step, adam_step=adam_step, tensors=tensors,
                      version=version)


def save_checkpoint(path: Union[str, Path], ckpt: Checkpoint) -> None:
    """Writes atomically: a temporary sibling file is renamed over ``path``."""
    path = Path(path)
    temporary = path.with_name(path.name + '.tmp')
    temporary.write_bytes(encode_checkpoint(ckpt))
    os.replace(temporary, path)
    logger.info('wrote checkpoint at step %d to %s', ckpt.step, path)


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    return decode_checkpoint(Path(path).read_bytes())
