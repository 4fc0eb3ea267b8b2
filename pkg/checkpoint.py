"""
Binary checkpoint container for model parameters, buffers and Adam state.

Layout (little-endian):
    magic     4 bytes  b"OCKP"
    version   u16
    count     u32      number of blobs
    blobs     count x (u16 name length, UTF-8 name, u8 ndim, ndim x u32 dims, float32 data)
    adam step u64

Blob names are prefixed "param/", "buffer/", "adam/m/" or "adam/v/".
A JSON sidecar (same path with ".json" appended) records model kind, N, seed and epoch.
"""
import struct
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np

from errors import CheckpointError
from files import FileHandler
from layers import Module
from optim import Adam

MAGIC = b"OCKP"
VERSION = 1


def sidecar_path(path: Path) -> Path:
    return Path(path).with_name(Path(path).name + '.json')


def _collect(model: Module, optimizer: Optional[Adam]) -> Dict[str, np.ndarray]:
    blobs = {f"param/{name}": p.data for name, p in model.parameters().items()}
    blobs.update({f"buffer/{name}": b for name, b in model.buffers().items()})
    if optimizer is not None:
        blobs.update({f"adam/m/{name}": m for name, m in optimizer.state.m.items()})
        blobs.update({f"adam/v/{name}": v for name, v in optimizer.state.v.items()})
    return blobs


def save_checkpoint(path: Path, model: Module, metadata: dict, optimizer: Optional[Adam] = None) -> Path:
    """
    Writes the model (and optimizer) state plus the JSON sidecar.

    Args:
        path: Destination of the binary container.
        model: Model whose parameters and buffers are stored.
        metadata: Sidecar record; expected keys are model, N, seed and epoch.
        optimizer: Optional Adam whose moments and step are stored.

    Returns:
        The binary checkpoint path.
    """
    path = Path(path)
    FileHandler.ensure_dir(path.parent)
    blobs = _collect(model, optimizer)
    with open(path, 'wb') as f:
        f.write(MAGIC)
        f.write(struct.pack('<HI', VERSION, len(blobs)))
        for name, array in blobs.items():
            encoded = name.encode('utf-8')
            f.write(struct.pack('<H', len(encoded)))
            f.write(encoded)
            f.write(struct.pack('<B', array.ndim))
            f.write(struct.pack(f'<{array.ndim}I', *array.shape))
            f.write(np.ascontiguousarray(array, dtype='<f4').tobytes())
        f.write(struct.pack('<Q', optimizer.state.step if optimizer is not None else 0))
    FileHandler.write_json(sidecar_path(path), metadata)
    return path


def read_checkpoint(path: Path) -> Tuple[Dict[str, np.ndarray], int]:
    """
    Parses a checkpoint container.

    Returns:
        (blobs by name as float32 arrays, adam step).

    Raises:
        CheckpointError: On bad magic, unsupported version or truncation.
    """
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (magic {data[:4]!r})")
    try:
        version, count = struct.unpack_from('<HI', data, 4)
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
        offset = 10
        blobs = {}
        for _ in range(count):
            (name_len,) = struct.unpack_from('<H', data, offset)
            offset += 2
            name = data[offset:offset + name_len].decode('utf-8')
            offset += name_len
            (ndim,) = struct.unpack_from('<B', data, offset)
            offset += 1
            shape = struct.unpack_from(f'<{ndim}I', data, offset)
            offset += 4 * ndim
            nbytes = 4 * int(np.prod(shape, dtype=np.int64))
            if offset + nbytes > len(data):
                raise CheckpointError(f"{path}: truncated in blob {name}")
            blobs[name] = np.frombuffer(data, dtype='<f4', count=nbytes // 4, offset=offset).reshape(shape).copy()
            offset += nbytes
        (step,) = struct.unpack_from('<Q', data, offset)
    except struct.error as e:
        raise CheckpointError(f"{path}: truncated checkpoint ({e})") from e
    return blobs, step


def load_checkpoint(path: Path, model: Module, optimizer: Optional[Adam] = None) -> dict:
    """
    Restores a model (and optimizer) saved by `save_checkpoint`.

    Returns:
        The sidecar metadata, or an empty dict when the sidecar is missing.

    Raises:
        CheckpointError: If a parameter is missing or has the wrong shape.
    """
    blobs, step = read_checkpoint(path)
    state = {}
    for name, parameter in model.parameters().items():
        blob = blobs.get(f"param/{name}")
        if blob is None:
            raise CheckpointError(f"{path}: missing parameter {name}")
        if blob.shape != parameter.shape:
            raise CheckpointError(f"{path}: parameter {name} has shape {blob.shape}, model expects {parameter.shape}")
        state[name] = blob
    for name in model.buffers():
        blob = blobs.get(f"buffer/{name}")
        if blob is None:
            raise CheckpointError(f"{path}: missing buffer {name}")
        state[name] = blob
    model.load_state_dict(state)

    if optimizer is not None:
        dtype = next(iter(optimizer.params.values())).dtype if optimizer.params else np.float32
        for name in optimizer.params:
            if f"adam/m/{name}" in blobs:
                optimizer.state.m[name] = blobs[f"adam/m/{name}"].astype(dtype)
                optimizer.state.v[name] = blobs[f"adam/v/{name}"].astype(dtype)
        optimizer.state.step = step

    sidecar = sidecar_path(path)
    return FileHandler.read_json(sidecar) if sidecar.exists() else {}
