"""Writers for the FTD dump format and the run-manifest JSON schema.

This is the producer side of the wire formats consumed by the probing
toolkit; the byte layout and JSON schema here must match its reader
exactly (FTD: "FTD1" magic, u8 format code 1 = float32 LE, u8 ndim 2,
two u64 LE dims, row-major payload; manifest: schema_version 1 with
paths relative to the manifest's directory).
"""

from __future__ import annotations

import json
import os
import struct

import numpy as np

MAGIC = b"FTD1"
FORMAT_FLOAT32_LE = 1
SCHEMA_VERSION = 1
ABSTAIN = -1

_HEADER = struct.Struct("<4sBBQQ")


def write_ftd(matrix: np.ndarray, path: str | os.PathLike) -> None:
    arr = np.ascontiguousarray(matrix, dtype="<f4")
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"need a non-degenerate 2-D matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("refusing to dump non-finite values")
    tmp = f"{os.fspath(path)}.tmp.{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FORMAT_FLOAT32_LE, 2, arr.shape[0], arr.shape[1]))
        fh.write(arr.tobytes())
    os.replace(tmp, path)


def read_ftd(path: str | os.PathLike) -> np.ndarray:
    """Minimal reader used by our own tests to check what we wrote."""
    with open(path, "rb") as fh:
        raw = fh.read()
    magic, fmt, ndim, n, d = _HEADER.unpack_from(raw)
    if magic != MAGIC or fmt != FORMAT_FLOAT32_LE or ndim != 2:
        raise ValueError("not a supported FTD file")
    payload = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size)
    if payload.size != n * d:
        raise ValueError("payload length does not match declared dims")
    return payload.reshape(n, d)


def write_manifest(
    path: str | os.PathLike,
    *,
    model_name: str,
    dataset_name: str,
    class_names: list[str],
    labels: list[int],
    split: list[str],
    sites: list[dict],
    final_predictions: list[int] | None = None,
) -> None:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "model_name": model_name,
        "dataset_name": dataset_name,
        "class_names": class_names,
        "labels": labels,
        "split": split,
        "sites": sites,
    }
    if final_predictions is not None:
        doc["final_predictions"] = final_predictions
    tmp = f"{os.fspath(path)}.tmp.{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def site_entry(site_id: str, module: str, layer_index: int, aggregation: str, file: str) -> dict:
    return {
        "site_id": site_id,
        "module": module,
        "layer_index": layer_index,
        "aggregation": aggregation,
        "file": file,
    }
