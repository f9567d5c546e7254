"""Binary model checkpoints.

Layout (little-endian): magic, version, raw architecture digest, parameter
count, then per parameter a length-prefixed name, rank, dims and a float32
payload. A JSON sidecar carries the full layer list and an optimizer-state
flag so a checkpoint is self-describing.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import PipelineError
from .models import ModelConfig, architecture_hash

MAGIC = b"VCNP"
VERSION = 1
_HEADER = struct.Struct("<4sI32sI")


def save_checkpoint(
    path: str | Path, config: ModelConfig, params: dict[str, np.ndarray]
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arch_hex = architecture_hash(config)
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, VERSION, bytes.fromhex(arch_hex), len(params)))
        for name in sorted(params):
            value = np.ascontiguousarray(params[name], dtype="<f4")
            encoded = name.encode()
            f.write(struct.pack("<H", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<B", value.ndim))
            f.write(struct.pack(f"<{value.ndim}I", *value.shape))
            f.write(value.tobytes())
    sidecar = {
        "model": config.to_dict(),
        "architecture_hash": arch_hex,
        "optimizer_state": False,
    }
    Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    return path


def load_checkpoint(path: str | Path) -> tuple[ModelConfig, dict[str, np.ndarray]]:
    path = Path(path)
    sidecar_path = Path(str(path) + ".json")
    if not path.is_file() or not sidecar_path.is_file():
        raise PipelineError(f"missing checkpoint or sidecar at {path}")
    sidecar = json.loads(sidecar_path.read_text())
    config = ModelConfig.from_dict(sidecar["model"])
    with open(path, "rb") as f:
        header = f.read(_HEADER.size)
        magic, version, digest, n_params = _HEADER.unpack(header)
        if magic != MAGIC:
            raise PipelineError(f"{path}: bad checkpoint magic {magic!r}")
        if version != VERSION:
            raise PipelineError(f"{path}: unsupported checkpoint version {version}")
        if digest.hex() != architecture_hash(config):
            raise PipelineError(f"{path}: architecture hash does not match sidecar")
        params: dict[str, np.ndarray] = {}
        for _ in range(n_params):
            (name_len,) = struct.unpack("<H", f.read(2))
            name = f.read(name_len).decode()
            (rank,) = struct.unpack("<B", f.read(1))
            shape = struct.unpack(f"<{rank}I", f.read(4 * rank))
            count = int(np.prod(shape)) if rank else 1
            payload = f.read(4 * count)
            if len(payload) != 4 * count:
                raise PipelineError(f"{path}: truncated payload for {name!r}")
            params[name] = np.frombuffer(payload, dtype="<f4").reshape(shape).copy()
    return config, params
