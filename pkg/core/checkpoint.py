"""
Checkpoint codec

Binary layout (all integers little-endian):

    b"NJDC"                      magic
    u32 version
    u32 n, n bytes               config, canonical `key = value` text (utf-8)
    u32 n, n bytes               metadata JSON (epoch, metric, optimizer groups, extras)
    u32 blob count
    per blob, in fixed order:
        u32 n, n bytes           blob name "<net>/<tensor key>"
        u32 ndim, ndim x u32     shape
        u64 count                number of values
        count x f32              values, row-major
    u32 crc32                    of every preceding byte

Fixed order: nets sorted by name; inside a net, tensors in state_dict order.
Optimizers are stored as nets named "optim:<name>" with tensors keyed
"<param index>.<state key>"; their param_groups go into the metadata.
"""

import collections
import dataclasses
import json
import os
import struct
import zlib

import numpy as np
import torch

from .errors import CheckpointCorruptError, CheckpointVersionError

MAGIC = b'NJDC'
FORMAT_VERSION = 1
OPTIM_PREFIX = 'optim:'


@dataclasses.dataclass
class Checkpoint:
    nets: dict          # name -> OrderedDict[tensor key -> np.ndarray(float32)]
    config_text: str
    epoch: int
    metric: float
    meta: dict
    version: int = FORMAT_VERSION

    @property
    def config(self):
        from config import parse_config_text
        return parse_config_text(self.config_text)

    def restore_module(self, name, module):
        """Load the blobs of net `name` into a torch module (dtypes follow the module)"""
        state = module.state_dict()
        blobs = self.nets[name]
        missing = set(state) - set(blobs)
        if missing:
            raise CheckpointCorruptError(f"net {name!r} lacks tensors: {sorted(missing)}")
        restored = {key: torch.from_numpy(np.array(blobs[key])).to(state[key].dtype).reshape(state[key].shape)
                    for key in state}
        module.load_state_dict(restored)
        return module

    def restore_optimizer(self, name, optimizer):
        """Load Adam moments and step counters saved under `name`"""
        blobs = self.nets[OPTIM_PREFIX + name]
        state = collections.defaultdict(dict)
        for key, value in blobs.items():
            index, field = key.split('.', 1)
            state[int(index)][field] = torch.from_numpy(np.array(value))
        optimizer.load_state_dict({
            'state': dict(state),
            'param_groups': self.meta['optimizers'][name],
        })
        return optimizer


def _state_of(obj):
    """Flatten a module, optimizer or mapping into an ordered {key: float32 array}"""
    if isinstance(obj, torch.optim.Optimizer):
        flat = collections.OrderedDict()
        state = obj.state_dict()['state']
        for index in sorted(state):
            for field, value in state[index].items():
                flat[f"{index}.{field}"] = _to_f32(value)
        return flat
    if isinstance(obj, torch.nn.Module):
        obj = obj.state_dict()
    return collections.OrderedDict((key, _to_f32(value)) for key, value in obj.items())


def _to_f32(value):
    if isinstance(value, torch.Tensor):
        value = value.detach().cpu().numpy()
    return np.ascontiguousarray(np.asarray(value, dtype='<f4'))


def encode_checkpoint(nets, config_text, epoch=0, metric=float('nan'), extra=None, version=FORMAT_VERSION):
    """Serialize to bytes (see module docstring for the layout)"""
    meta = {'epoch': int(epoch), 'metric': float(metric), 'extra': extra or {}, 'optimizers': {}}
    flat_nets = collections.OrderedDict()
    for name in sorted(nets):
        obj = nets[name]
        if isinstance(obj, torch.optim.Optimizer):
            groups = obj.state_dict()['param_groups']
            meta['optimizers'][name] = json.loads(json.dumps(groups, default=float))
            flat_nets[OPTIM_PREFIX + name] = _state_of(obj)
        else:
            flat_nets[name] = _state_of(obj)

    parts = [MAGIC, struct.pack('<I', version)]
    for text in (config_text, json.dumps(meta, sort_keys=True)):
        data = text.encode('utf-8')
        parts += [struct.pack('<I', len(data)), data]

    blobs = [(f"{net}/{key}", value) for net, tensors in flat_nets.items() for key, value in tensors.items()]
    parts.append(struct.pack('<I', len(blobs)))
    for name, value in blobs:
        encoded = name.encode('utf-8')
        parts += [struct.pack('<I', len(encoded)), encoded,
                  struct.pack('<I', value.ndim), struct.pack(f'<{value.ndim}I', *value.shape),
                  struct.pack('<Q', value.size), value.tobytes(order='C')]
    payload = b''.join(parts)
    return payload + struct.pack('<I', zlib.crc32(payload) & 0xFFFFFFFF)


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.data):
            raise CheckpointCorruptError(
                f"checkpoint truncated: need {n} bytes at offset {self.pos}, file has {len(self.data)}")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u32(self):
        return struct.unpack('<I', self.take(4))[0]

    def u64(self):
        return struct.unpack('<Q', self.take(8))[0]


def decode_checkpoint(data):
    """Parse bytes produced by encode_checkpoint"""
    reader = _Reader(data)
    if reader.take(4) != MAGIC:
        raise CheckpointCorruptError("bad magic bytes, not a checkpoint file")
    version = reader.u32()
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"checkpoint format version {version} is not supported (expected {FORMAT_VERSION})")
    config_text = reader.take(reader.u32()).decode('utf-8')
    try:
        meta = json.loads(reader.take(reader.u32()).decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointCorruptError(f"unreadable metadata: {e}") from e

    nets = collections.OrderedDict()
    for _ in range(reader.u32()):
        name = reader.take(reader.u32()).decode('utf-8')
        ndim = reader.u32()
        shape = struct.unpack(f'<{ndim}I', reader.take(4 * ndim))
        count = reader.u64()
        if count != int(np.prod(shape, dtype=np.int64)):
            raise CheckpointCorruptError(f"blob {name!r}: {count} values do not fill shape {shape}")
        values = np.frombuffer(reader.take(4 * count), dtype='<f4').reshape(shape).copy()
        net, key = name.split('/', 1)
        nets.setdefault(net, collections.OrderedDict())[key] = values

    body_end = reader.pos
    stored_crc = reader.u32()
    if reader.pos != len(data):
        raise CheckpointCorruptError(f"{len(data) - reader.pos} trailing bytes after checkpoint")
    if zlib.crc32(data[:body_end]) & 0xFFFFFFFF != stored_crc:
        raise CheckpointCorruptError("checksum mismatch")

    return Checkpoint(nets=dict(nets), config_text=config_text, epoch=meta['epoch'],
                      metric=meta['metric'], meta=meta, version=version)


def save_checkpoint(nets, config, path, epoch=0, metric=float('nan'), extra=None):
    """
    Write networks (and optionally optimizers) with a config snapshot

    Parameters:
    -----------
    nets : dict
        name -> torch.nn.Module, torch.optim.Optimizer or {key: array}
    config : ExperimentConfig or str
        Configuration (stored as canonical text)
    path : str
        Output file
    epoch : int
        Training epoch the snapshot belongs to
    metric : float
        Selection metric value of the snapshot
    """
    config_text = config if isinstance(config, str) else config.to_text()
    data = encode_checkpoint(nets, config_text, epoch=epoch, metric=metric, extra=extra)
    os.makedirs(os.path.dirname(path) or '.', exist_ok=True)
    tmp_path = path + '.tmp'
    with open(tmp_path, 'wb') as f:
        f.write(data)
    os.replace(tmp_path, path)
    return path


def load_checkpoint(path):
    """Read a checkpoint file; raises CheckpointVersionError / CheckpointCorruptError"""
    with open(path, 'rb') as f:
        return decode_checkpoint(f.read())
