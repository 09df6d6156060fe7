"""Single-file binary checkpoint container.

Layout::

    bytes 0..3    magic "PADJ"
    bytes 4..7    container format version, uint32 little-endian
    bytes 8..15   manifest length in bytes, uint64 little-endian
    manifest      UTF-8 JSON: tensor names/shapes/dtypes/offsets, the
                  TrainConfig snapshot, class-weight state, step counter
    data region   raw tensor bytes, little-endian, float tensors as
                  32-bit floats

Save/load round-trips are bit-identical for float32 models.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .adjustmap import ClassWeightState
from .config import TrainConfig, train_config_from_dict, train_config_to_dict
from .model import AdjustmentModel

MAGIC = b"PADJ"
FORMAT_VERSION = 1

_DTYPES = {"f4": np.dtype("<f4"), "i8": np.dtype("<i8")}


@dataclass
class ModelCheckpoint:
    format_version: int
    tensors: dict[str, np.ndarray]
    config: TrainConfig
    class_state: ClassWeightState
    step: int


def _encode_tensor(t: torch.Tensor) -> tuple[str, np.ndarray]:
    arr = t.detach().cpu().numpy()
    if np.issubdtype(arr.dtype, np.floating):
        return "f4", np.ascontiguousarray(arr, dtype="<f4")
    return "i8", np.ascontiguousarray(arr, dtype="<i8")


def save_checkpoint(
    model: nn.Module,
    config: TrainConfig,
    class_state: ClassWeightState,
    step: int,
    path: str | Path,
) -> None:
    entries = []
    blobs = []
    offset = 0
    for name, tensor in model.state_dict().items():
        code, arr = _encode_tensor(tensor)
        raw = arr.tobytes()
        entries.append(
            {
                "name": name,
                "shape": list(arr.shape),
                "dtype": code,
                "offset": offset,
                "nbytes": len(raw),
            }
        )
        blobs.append(raw)
        offset += len(raw)
    manifest = {
        "format_version": FORMAT_VERSION,
        "tensors": entries,
        "config": train_config_to_dict(config),
        "class_state": {
            "k": class_state.k,
            "alpha": class_state.alpha,
            "a": class_state.a.tolist(),
            "t": class_state.t,
        },
        "step": step,
    }
    payload = json.dumps(manifest).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<Q", len(payload)))
        fh.write(payload)
        for raw in blobs:
            fh.write(raw)


def load_checkpoint(path: str | Path) -> ModelCheckpoint:
    data = Path(path).read_bytes()
    if len(data) < 16 or data[:4] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint file (bad magic)")
    (version,) = struct.unpack("<I", data[4:8])
    if version != FORMAT_VERSION:
        raise ValueError(
            f"{path}: checkpoint format version {version} != supported {FORMAT_VERSION}"
        )
    (mlen,) = struct.unpack("<Q", data[8:16])
    if len(data) < 16 + mlen:
        raise ValueError(f"{path}: truncated checkpoint (manifest incomplete)")
    manifest = json.loads(data[16 : 16 + mlen].decode("utf-8"))
    base = 16 + mlen
    tensors: dict[str, np.ndarray] = {}
    for entry in manifest["tensors"]:
        start = base + entry["offset"]
        end = start + entry["nbytes"]
        if end > len(data):
            raise ValueError(f"{path}: truncated checkpoint (tensor {entry['name']!r} incomplete)")
        arr = np.frombuffer(data[start:end], dtype=_DTYPES[entry["dtype"]])
        tensors[entry["name"]] = arr.reshape(entry["shape"]).copy()
    cs = manifest["class_state"]
    return ModelCheckpoint(
        format_version=version,
        tensors=tensors,
        config=train_config_from_dict(manifest["config"]),
        class_state=ClassWeightState(
            k=cs["k"], alpha=cs["alpha"], a=np.array(cs["a"]), t=cs["t"]
        ),
        step=manifest["step"],
    )


def restore_into(model: nn.Module, checkpoint: ModelCheckpoint) -> None:
    """Copy checkpoint tensors into an existing model; shapes must match."""
    state = model.state_dict()
    missing = [n for n in state if n not in checkpoint.tensors]
    extra = [n for n in checkpoint.tensors if n not in state]
    if missing or extra:
        raise ValueError(
            f"checkpoint/model tensor sets differ (missing {missing}, unexpected {extra})"
        )
    new_state = {}
    for name, current in state.items():
        arr = checkpoint.tensors[name]
        if tuple(arr.shape) != tuple(current.shape):
            raise ValueError(
                f"shape mismatch for {name!r}: checkpoint {tuple(arr.shape)} "
                f"vs model {tuple(current.shape)}"
            )
        new_state[name] = torch.as_tensor(arr).to(current.dtype)
    model.load_state_dict(new_state)


def build_model(checkpoint: ModelCheckpoint) -> AdjustmentModel:
    """Construct the model described by a checkpoint and restore its weights."""
    model = AdjustmentModel(checkpoint.config.model_config())
    restore_into(model, checkpoint)
    model.eval()
    return model
