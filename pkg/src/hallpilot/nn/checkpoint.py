"""Versioned binary model checkpoints.

Layout: magic ``BCNN1``, little-endian uint32 header length, JSON header
(model description plus ordered parameter names/shapes), then raw little-endian
float32 parameter blobs in header order. A ``<path>.json`` sidecar repeats the
model description and the preprocessing pipeline used at training time.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"BCNN1"


def save_checkpoint(path, spec: dict, params: list[np.ndarray],
                    param_names: list[str], pipeline: list | None = None) -> None:
    path = Path(path)
    header = {
        "spec": spec,
        "params": [{"name": n, "shape": list(p.shape)}
                   for n, p in zip(param_names, params)],
    }
    blob = json.dumps(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for p in params:
            fh.write(np.ascontiguousarray(p, dtype="<f4").tobytes())
    sidecar = {"spec": spec, "pipeline": pipeline if pipeline is not None else []}
    Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=2) + "\n",
                                         encoding="utf-8")


def load_checkpoint(path) -> tuple[dict, list[np.ndarray], list[str]]:
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise ValueError(f"{path}: not a checkpoint (bad magic {magic!r})")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        params, names = [], []
        for entry in header["params"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(4 * count)
            if len(buf) != 4 * count:
                raise ValueError(f"{path}: truncated parameter {entry['name']}")
            params.append(np.frombuffer(buf, dtype="<f4").reshape(shape).copy())
            names.append(entry["name"])
    return header["spec"], params, names


def load_sidecar(path) -> dict:
    return json.loads(Path(str(path) + ".json").read_text(encoding="utf-8"))
