"""Checkpoint files in the versioned ``DREC`` little-endian envelope.

Layout after the 8-byte header: u32 metadata length, UTF-8 JSON metadata,
then every tensor as raw ``<f8`` bytes in the order listed in the metadata.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .data import KIND_CHECKPOINT, read_header, write_header


@dataclass
class Checkpoint:
    params: dict  # name -> array (network state, including buffers)
    optim: dict = field(default_factory=dict)  # group -> {"step", "m": {..}, "v": {..}}
    epoch: int = 0
    sigma: float = 0.0
    rng_state: dict | None = None
    config: dict | None = None
    config_hash: str = ""
    extra: dict = field(default_factory=dict)


def _flatten(ckpt: Checkpoint) -> list[tuple[str, np.ndarray]]:
    items = [(f"param/{k}", v) for k, v in ckpt.params.items()]
    for group, st in ckpt.optim.items():
        for slot in ("m", "v"):
            items += [(f"optim/{group}/{slot}/{k}", v) for k, v in st[slot].items()]
    return items


def save_checkpoint(path, ckpt: Checkpoint):
    items = _flatten(ckpt)
    meta = {
        "epoch": ckpt.epoch,
        "sigma": ckpt.sigma,
        "rng_state": ckpt.rng_state,
        "config": ckpt.config,
        "config_hash": ckpt.config_hash,
        "extra": ckpt.extra,
        "optim_steps": {g: st["step"] for g, st in ckpt.optim.items()},
        "tensors": [[name, list(np.shape(arr))] for name, arr in items],
    }
    blob = json.dumps(meta, sort_keys=True).encode()
    with open(path, "wb") as fh:
        write_header(fh, KIND_CHECKPOINT)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for _, arr in items:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        read_header(fh, KIND_CHECKPOINT)
        (n,) = struct.unpack("<I", fh.read(4))
        meta = json.loads(fh.read(n).decode())
        ckpt = Checkpoint(params={}, epoch=meta["epoch"], sigma=meta["sigma"],
                          rng_state=meta["rng_state"], config=meta["config"],
                          config_hash=meta["config_hash"], extra=meta.get("extra", {}))
        for g, step in meta["optim_steps"].items():
            ckpt.optim[g] = {"step": step, "m": {}, "v": {}}
        for name, shape in meta["tensors"]:
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(8 * count)
            if len(raw) != 8 * count:
                raise ValueError(f"truncated checkpoint while reading {name}")
            arr = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)
            kind, rest = name.split("/", 1)
            if kind == "param":
                ckpt.params[rest] = arr
            else:
                group, slot, key = rest.split("/", 2)
                ckpt.optim[group][slot][key] = arr
    return ckpt
