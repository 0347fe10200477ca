"""Binary feature files (``MMFS``) and checkpoints (``MMCK``), little-endian.

Feature file::

    b"MMFS" | u32 version | u32 len + utf-8 modality name | u32 T | u32 D
    | u8 dtype (0 = float32) | u32 len + utf-8 extraction-config JSON
    | T*D float32, row-major

Checkpoint::

    b"MMCK" | u32 version | u32 len + utf-8 model-config JSON | u32 n
    | n x (u32 len + utf-8 name | u32 ndim | ndim x u32 extent | float32 data)
"""

from __future__ import annotations

import io
import json
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError

FEATURE_MAGIC = b"MMFS"
CHECKPOINT_MAGIC = b"MMCK"
FORMAT_VERSION = 1
DTYPE_FLOAT32 = 0


def atomic_write(path, data: bytes | str):
    """Write via a temp file in the same directory and rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _pack_str(s: str) -> bytes:
    b = s.encode("utf-8")
    return struct.pack("<I", len(b)) + b


class _Reader:
    def __init__(self, data: bytes, what: str):
        self.buf = io.BytesIO(data)
        self.what = what

    def read(self, n: int) -> bytes:
        b = self.buf.read(n)
        if len(b) != n:
            raise FormatError(f"{self.what}: truncated file")
        return b

    def u32(self) -> int:
        return struct.unpack("<I", self.read(4))[0]

    def string(self) -> str:
        return self.read(self.u32()).decode("utf-8")

    def rest(self) -> bytes:
        return self.buf.read()


@dataclass
class FeatureFile:
    modality: str
    data: np.ndarray  # [T, D] float32
    config: dict = field(default_factory=dict)


def encode_features(ff: FeatureFile) -> bytes:
    arr = np.ascontiguousarray(ff.data, dtype="<f4")
    if arr.ndim != 2:
        raise FormatError(f"feature matrix must be 2-D, got shape {arr.shape}")
    T_, D = arr.shape
    header = (
        FEATURE_MAGIC
        + struct.pack("<I", FORMAT_VERSION)
        + _pack_str(ff.modality)
        + struct.pack("<IIB", T_, D, DTYPE_FLOAT32)
        + _pack_str(canonical_json(ff.config))
    )
    return header + arr.tobytes()


def decode_features(data: bytes, what: str = "feature file") -> FeatureFile:
    r = _Reader(data, what)
    if r.read(4) != FEATURE_MAGIC:
        raise FormatError(f"{what}: bad magic, not an MMFS feature file")
    version = r.u32()
    if version != FORMAT_VERSION:
        raise FormatError(f"{what}: unsupported version {version}")
    name = r.string()
    T_, D = r.u32(), r.u32()
    dtype = r.read(1)[0]
    if dtype != DTYPE_FLOAT32:
        raise FormatError(f"{what}: unsupported dtype tag {dtype}")
    config = json.loads(r.string())
    body = r.rest()
    if len(body) != 4 * T_ * D:
        raise FormatError(f"{what}: body has {len(body)} bytes, expected {4 * T_ * D}")
    arr = np.frombuffer(body, dtype="<f4").reshape(T_, D).astype(np.float32)
    return FeatureFile(name, arr, config)


def write_features(path, ff: FeatureFile):
    atomic_write(path, encode_features(ff))


def read_features(path) -> FeatureFile:
    path = Path(path)
    return decode_features(path.read_bytes(), str(path))


def encode_checkpoint(config: dict, arrays: dict[str, np.ndarray]) -> bytes:
    out = [CHECKPOINT_MAGIC, struct.pack("<I", FORMAT_VERSION), _pack_str(canonical_json(config))]
    out.append(struct.pack("<I", len(arrays)))
    for name, arr in arrays.items():
        a = np.ascontiguousarray(arr, dtype="<f4")
        out.append(_pack_str(name))
        out.append(struct.pack("<I", a.ndim))
        out.append(struct.pack(f"<{a.ndim}I", *a.shape))
        out.append(a.tobytes())
    return b"".join(out)


def decode_checkpoint(data: bytes, what: str = "checkpoint") -> tuple[dict, dict[str, np.ndarray]]:
    r = _Reader(data, what)
    if r.read(4) != CHECKPOINT_MAGIC:
        raise FormatError(f"{what}: bad magic, not an MMCK checkpoint")
    version = r.u32()
    if version != FORMAT_VERSION:
        raise FormatError(f"{what}: unsupported version {version}")
    config = json.loads(r.string())
    arrays = {}
    for _ in range(r.u32()):
        name = r.string()
        ndim = r.u32()
        shape = struct.unpack(f"<{ndim}I", r.read(4 * ndim))
        n = int(np.prod(shape)) if ndim else 1
        arrays[name] = np.frombuffer(r.read(4 * n), dtype="<f4").reshape(shape).astype(np.float32)
    if r.rest():
        raise FormatError(f"{what}: trailing bytes after parameter records")
    return config, arrays


def save_checkpoint(path, model, extra: dict | None = None):
    """Write ``model`` (config + float32 parameters); ``extra`` goes into the config JSON."""
    config = {"model": model.config.to_dict()}
    if extra:
        config.update(extra)
    atomic_write(path, encode_checkpoint(config, model.arrays()))


def load_checkpoint(path):
    """Return ``(model, config_json)``."""
    from .model import Model, ModelConfig

    path = Path(path)
    config, arrays = decode_checkpoint(path.read_bytes(), str(path))
    model = Model.from_arrays(ModelConfig.from_dict(config["model"]), arrays)
    return model, config
