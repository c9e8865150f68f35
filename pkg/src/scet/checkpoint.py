"""Binary checkpoint files.

Layout::

    b"SCET"  u32 version  u32 header_bytes  header JSON (UTF-8)  tensor data

The header holds the model config, the tokenizer document (optional) and a
tensor directory ``[{name, shape, offset, count}]``; offsets are in bytes
from the start of the data section.  Tensors are little-endian float32.
Output is a pure function of the parameters, so reruns are byte-identical.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .corpus import Tokenizer
from .errors import CheckpointError
from .model import ModelConfig, ScetModel

MAGIC = b"SCET"
VERSION = 1


@dataclass
class Checkpoint:
    model: ScetModel
    tokenizer: Tokenizer | None
    extra: dict

    @property
    def config(self) -> ModelConfig:
        return self.model.config


def save_checkpoint(path, model: ScetModel, tokenizer: Tokenizer | None = None, extra: dict | None = None):
    directory, blobs, offset = [], [], 0
    for name, p in model.named_parameters():
        arr = np.ascontiguousarray(p.detach().cpu().numpy(), dtype="<f4")
        directory.append({"name": name, "shape": list(arr.shape), "offset": offset, "count": int(arr.size)})
        blobs.append(arr.tobytes())
        offset += arr.nbytes
    header = {"config": model.config.to_dict(), "tensors": directory,
              "tokenizer": tokenizer.to_json() if tokenizer is not None else None, "extra": extra or {}}
    raw = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC + struct.pack("<II", VERSION, len(raw)) + raw)
        for blob in blobs:
            fh.write(blob)
    tmp.replace(path)


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if len(data) < 12 or data[:4] != MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint (bad magic)")
    version, n = struct.unpack("<II", data[4:12])
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    try:
        header = json.loads(data[12:12 + n].decode("utf-8"))
        config = ModelConfig.from_dict(header["config"])
    except (ValueError, KeyError) as exc:
        raise CheckpointError(f"{path}: corrupt header: {exc}") from exc
    body = memoryview(data)[12 + n:]
    model = ScetModel(config)
    params = dict(model.named_parameters())
    seen = set()
    with torch.no_grad():
        for entry in header["tensors"]:
            name = entry["name"]
            if name not in params:
                raise CheckpointError(f"{path}: unexpected tensor {name}")
            start, count = entry["offset"], entry["count"]
            if start + 4 * count > len(body):
                raise CheckpointError(f"{path}: tensor {name} runs past the end of the file")
            arr = np.frombuffer(body[start:start + 4 * count], dtype="<f4").reshape(entry["shape"])
            if tuple(arr.shape) != tuple(params[name].shape):
                raise CheckpointError(f"{path}: tensor {name} has shape {arr.shape}, "
                                      f"model expects {tuple(params[name].shape)}")
            params[name].copy_(torch.from_numpy(arr.astype(np.float32)))
            seen.add(name)
    missing = set(params) - seen
    if missing:
        raise CheckpointError(f"{path}: missing tensors {sorted(missing)}")
    model.eval()
    tok = Tokenizer.from_json(header["tokenizer"]) if header.get("tokenizer") else None
    return Checkpoint(model, tok, header.get("extra", {}))
