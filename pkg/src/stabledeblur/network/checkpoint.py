"""Self-describing binary checkpoints and loss-history CSV.

Layout::

    8 bytes   magic b"SDBCKPT1"
    u32 LE    header length L
    L bytes   UTF-8 JSON header: architecture tag, model config, and the
              tensor table [[name, shape], ...] (parameters, then BN buffers)
    rest      every tensor in table order as little-endian float64, row-major
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .models import NetworkModel, build_model

MAGIC = b"SDBCKPT1"


def save_checkpoint(model: NetworkModel, path) -> None:
    state = model.state()
    header = {
        "architecture": model.architecture,
        "config": model.config,
        "tensors": [[name, list(arr.shape)] for name, arr in state],
    }
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    blob = b"".join(np.ascontiguousarray(arr, dtype="<f8").tobytes() for _, arr in state)
    Path(path).write_bytes(MAGIC + struct.pack("<I", len(hbytes)) + hbytes + blob)


def load_checkpoint(path) -> NetworkModel:
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint (bad magic)")
    (hlen,) = struct.unpack_from("<I", data, 8)
    header = json.loads(data[12:12 + hlen].decode("utf-8"))
    model = build_model(header["architecture"], header["config"])
    offset = 12 + hlen
    targets = {}
    for mod_name, arr in model.state():
        targets[mod_name] = arr
    for name, shape in header["tensors"]:
        count = int(np.prod(shape)) if shape else 1
        values = np.frombuffer(data, dtype="<f8", count=count, offset=offset).reshape(shape)
        offset += 8 * count
        if name not in targets or targets[name].shape != tuple(shape):
            raise ValueError(f"{path}: tensor {name} {shape} does not match the architecture")
        targets[name][...] = values
    if offset != len(data):
        raise ValueError(f"{path}: {len(data) - offset} trailing bytes")
    return model


def write_loss_history(path, history) -> None:
    lines = ["epoch,mean_loss"] + [f"{i + 1},{loss!r}" for i, loss in enumerate(history)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_loss_history(path):
    rows = Path(path).read_text().strip().splitlines()[1:]
    return [float(r.split(",")[1]) for r in rows]
