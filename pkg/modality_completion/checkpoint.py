"""
Binary checkpoints of named float64 tensors.

Layout, all integers little-endian::

    b'MCDB'                     magic
    u32                         version (1)
    u32                         tensor count
    per tensor, names sorted:
        u32 + UTF-8 bytes       name
        u32                     number of dimensions
        u64 * ndims             dimensions
        f64 * prod(dims)        data, row-major
"""

import logging
import struct
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import autograd as ag
from .data import ModalityScalers
from .decoders import DECODERS, decoder_kind
from .errors import CheckpointError
from .numerics import Rng
from .rbm import VISIBLE_KINDS
from .training import TASKS, MCDBNModel, TrainConfig

logger = logging.getLogger(__name__)

MAGIC = b'MCDB'
VERSION = 1


def encode_tensors(tensors):
    parts = [MAGIC, struct.pack('<II', VERSION, len(tensors))]
    for name in sorted(tensors):
        array = np.asarray(tensors[name], dtype='<f8')
        encoded = name.encode('utf-8')
        parts.append(struct.pack('<I', len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack('<I', array.ndim))
        parts.append(struct.pack(f'<{array.ndim}Q', *array.shape))
        parts.append(array.tobytes())
    return b''.join(parts)


class _Reader:
    def __init__(self, data, source):
        self.data, self.source, self.offset = data, source, 0

    def take(self, n, what):
        if self.offset + n > len(self.data):
            raise CheckpointError(f'{self.source}: truncated at offset {self.offset} reading {what}: '
                                  f'expected {self.offset + n} bytes, file has {len(self.data)}')
        chunk = self.data[self.offset:self.offset + n]
        self.offset += n
        return chunk

    def unpack(self, fmt, what):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def decode_tensors(data, source='checkpoint'):
    reader = _Reader(data, source)
    magic = reader.take(4, 'magic')
    if magic != MAGIC:
        raise CheckpointError(f'{source}: bad magic {magic!r} at offset 0, expected {MAGIC!r}')
    version, = reader.unpack('<I', 'version')
    if version != VERSION:
        raise CheckpointError(f'{source}: unsupported version {version} at offset 4, expected {VERSION}')
    count, = reader.unpack('<I', 'tensor count')
    tensors = {}
    for _ in range(count):
        length, = reader.unpack('<I', 'name length')
        start = reader.offset
        try:
            name = reader.take(length, 'name').decode('utf-8')
        except UnicodeDecodeError:
            raise CheckpointError(f'{source}: tensor name at offset {start} is not UTF-8')
        ndims, = reader.unpack('<I', f'rank of {name}')
        dims = reader.unpack(f'<{ndims}Q', f'dims of {name}')
        n = int(np.prod(dims)) if ndims else 1
        raw = reader.take(8 * n, f'data of {name}')
        tensors[name] = np.frombuffer(raw, dtype='<f8').astype(np.float64).reshape(dims)
    if reader.offset != len(data):
        raise CheckpointError(f'{source}: {len(data) - reader.offset} trailing bytes after offset {reader.offset}')
    return tensors


def save_checkpoint(tensors, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_tensors(tensors))
    logger.info(f'saved {len(tensors)} tensors to {path}')


def load_checkpoint(path):
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise CheckpointError(f'cannot read checkpoint {path}: {e}')
    return decode_tensors(data, str(path))


def _meta(cfg, model, d_x, d_y, target_column):
    return {
        'meta.dims': np.array([[d_x, d_y, target_column]], dtype=np.float64),
        'meta.hidden_sizes': np.array([cfg.hidden_sizes], dtype=np.float64),
        'meta.arch': np.array([[cfg.d_model, cfg.transformer_heads, cfg.heads, cfg.d_k, cfg.d_fusion,
                                cfg.ln_eps]], dtype=np.float64),
        'meta.kinds': np.array([[DECODERS.index(decoder_kind(model.decoder_x)),
                                 DECODERS.index(decoder_kind(model.decoder_y)),
                                 VISIBLE_KINDS.index(cfg.visible_kind),
                                 TASKS.index(model.head.kind),
                                 model.head.n_outputs]], dtype=np.float64),
    }


def model_tensors(model, scalers, cfg, target_column=0):
    """Every parameter by dotted name plus scaler bounds and architecture metadata"""
    tensors = {f'model.{name}': np.asarray(array) for name, array in ag.named_arrays(model)}
    tensors.update(scalers.to_arrays())
    tensors.update(_meta(cfg, model, model.completion.d_x, model.completion.d_y, target_column))
    return tensors


def model_from_tensors(tensors, cfg=None):
    """
    Rebuild (model, scalers, train config, target column) from checkpoint tensors.
    Architecture comes from the metadata; ``cfg`` supplies the remaining
    training settings.
    """
    try:
        d_x, d_y, target_column = (int(v) for v in tensors['meta.dims'][0])
        d_model, t_heads, heads, d_k, d_fusion, eps = tensors['meta.arch'][0]
        dec_x, dec_y, visible, task, n_out = (int(v) for v in tensors['meta.kinds'][0])
        hidden = tuple(int(v) for v in tensors['meta.hidden_sizes'][0])
    except (KeyError, ValueError, IndexError) as e:
        raise CheckpointError(f'checkpoint metadata is missing or malformed: {e}')
    base = cfg or TrainConfig()
    cfg = replace(base, hidden_sizes=hidden, d_model=int(d_model), transformer_heads=int(t_heads),
                  heads=int(heads), d_k=int(d_k), d_fusion=int(d_fusion), ln_eps=float(eps),
                  decoder_x=DECODERS[dec_x], decoder_y=DECODERS[dec_y], visible_kind=VISIBLE_KINDS[visible],
                  task=TASKS[task], n_classes=n_out if TASKS[task] == 'classification' else base.n_classes)
    skeleton = MCDBNModel.init(d_x, d_y, cfg, Rng(0))

    def restore(name, array):
        key = f'model.{name}'
        if key not in tensors:
            raise CheckpointError(f'checkpoint has no tensor {key}')
        if tensors[key].shape != array.shape:
            raise CheckpointError(f'tensor {key} has shape {tensors[key].shape}, expected {array.shape}')
        return tensors[key].copy()

    model = ag.map_arrays(skeleton, restore)
    scalers = ModalityScalers.from_arrays(tensors)
    return model, scalers, cfg, target_column
