"""On-disk feature dumps (FTD files) and the run manifest that binds them.

An FTD file holds one N x D float32 matrix of per-sample features for a
single probing site. The byte layout is fixed:

    magic   4 bytes   b"FTD1"
    format  1 byte    u8, 1 = IEEE-754 binary32 little-endian
    ndim    1 byte    u8, always 2
    dims    16 bytes  n_samples then dim, each u64 little-endian
    payload           row-major float32 values, n_samples * dim of them

A run manifest is a single UTF-8 JSON document (``schema_version`` 1) that
declares the probing sites, per-sample labels and train/test split, and
optionally the model's parsed final predictions. FTD paths inside a
manifest are relative to the manifest's directory.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"FTD1"
FORMAT_FLOAT32_LE = 1
SCHEMA_VERSION = 1

MODULES = ("V", "C", "L", "FINAL")
AGGREGATIONS = ("mean_image_tokens", "last_input_token", "raw")
SPLITS = ("train", "test")

_HEADER = struct.Struct("<4sBBQQ")

# Sentinel in final_predictions for an unparseable generated answer; it never
# matches a true label, so abstentions count as wrong.
ABSTAIN = -1


class TensorFormatError(ValueError):
    """Malformed FTD file: bad magic, unknown format code, bad dims, truncation."""


class TensorValidationError(ValueError):
    """Structurally valid data that violates tensor invariants (e.g. NaN values)."""


def _check_finite(data: np.ndarray) -> None:
    finite = np.isfinite(data)
    if not finite.all():
        row, col = np.argwhere(~finite)[0]
        raise TensorValidationError(
            f"non-finite value {data[row, col]!r} at row {row}, column {col}"
        )


@dataclass(frozen=True)
class FeatureTensor:
    """Immutable N x D float32 feature matrix for one probing site."""

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.data, dtype=np.float32)
        if arr.ndim != 2:
            raise TensorValidationError(f"expected a 2-D matrix, got ndim={arr.ndim}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise TensorValidationError(f"degenerate shape {arr.shape}")
        _check_finite(arr)
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def n_samples(self) -> int:
        return int(self.data.shape[0])

    @property
    def dim(self) -> int:
        return int(self.data.shape[1])


def write_ftd(tensor: FeatureTensor, path: str | os.PathLike) -> None:
    """Write *tensor* to *path* in FTD format (atomically: temp file + rename)."""
    header = _HEADER.pack(MAGIC, FORMAT_FLOAT32_LE, 2, tensor.n_samples, tensor.dim)
    payload = np.ascontiguousarray(tensor.data, dtype="<f4").tobytes()
    tmp = f"{os.fspath(path)}.tmp.{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(header)
        fh.write(payload)
    os.replace(tmp, path)


def read_ftd(path: str | os.PathLike) -> FeatureTensor:
    """Read an FTD file, checking magic, format code, dims, and payload."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise TensorFormatError(f"file too short for FTD header ({len(raw)} bytes)")
    magic, fmt, ndim, n_samples, dim = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise TensorFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if fmt != FORMAT_FLOAT32_LE:
        raise TensorFormatError(f"unknown format code {fmt}")
    if ndim != 2:
        raise TensorFormatError(f"unsupported ndim {ndim}, expected 2")
    if n_samples < 1 or dim < 1:
        raise TensorFormatError(f"degenerate declared shape {n_samples}x{dim}")
    expected = n_samples * dim * 4
    got = len(raw) - _HEADER.size
    if got < expected:
        raise TensorFormatError(
            f"truncated payload: declared {n_samples}x{dim} needs {expected} bytes, got {got}"
        )
    if got > expected:
        raise TensorFormatError(f"trailing garbage: {got - expected} bytes past payload")
    data = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size).reshape(n_samples, dim)
    return FeatureTensor(data)


@dataclass(frozen=True)
class SiteDescriptor:
    """One probing site: where in the pipeline a dump was taken and how."""

    site_id: str
    module: str
    layer_index: int
    aggregation: str
    file: str

    @classmethod
    def from_dict(cls, d: dict) -> "SiteDescriptor":
        return cls(
            site_id=str(d["site_id"]),
            module=str(d["module"]),
            layer_index=int(d["layer_index"]),
            aggregation=str(d["aggregation"]),
            file=str(d["file"]),
        )

    def to_dict(self) -> dict:
        return {
            "site_id": self.site_id,
            "module": self.module,
            "layer_index": self.layer_index,
            "aggregation": self.aggregation,
            "file": self.file,
        }


@dataclass
class RunManifest:
    """Declares one probing run: sites, labels, splits, final predictions."""

    model_name: str
    dataset_name: str
    class_names: list[str]
    labels: list[int]
    split: list[str]
    sites: list[SiteDescriptor]
    final_predictions: list[int] | None = None
    schema_version: int = SCHEMA_VERSION

    @classmethod
    def from_dict(cls, d: dict) -> "RunManifest":
        return cls(
            model_name=str(d["model_name"]),
            dataset_name=str(d["dataset_name"]),
            class_names=[str(c) for c in d["class_names"]],
            labels=[int(x) for x in d["labels"]],
            split=[str(s) for s in d["split"]],
            sites=[SiteDescriptor.from_dict(s) for s in d["sites"]],
            final_predictions=(
                [int(x) for x in d["final_predictions"]]
                if d.get("final_predictions") is not None
                else None
            ),
            schema_version=int(d.get("schema_version", SCHEMA_VERSION)),
        )

    def to_dict(self) -> dict:
        out = {
            "schema_version": self.schema_version,
            "model_name": self.model_name,
            "dataset_name": self.dataset_name,
            "class_names": list(self.class_names),
            "labels": list(self.labels),
            "split": list(self.split),
            "sites": [s.to_dict() for s in self.sites],
        }
        if self.final_predictions is not None:
            out["final_predictions"] = list(self.final_predictions)
        return out

    @property
    def n_samples(self) -> int:
        return len(self.labels)

    def train_mask(self) -> np.ndarray:
        return np.asarray([s == "train" for s in self.split], dtype=bool)

    def test_mask(self) -> np.ndarray:
        return np.asarray([s == "test" for s in self.split], dtype=bool)


def load_manifest(path: str | os.PathLike) -> RunManifest:
    with open(path, "r", encoding="utf-8") as fh:
        return RunManifest.from_dict(json.load(fh))


def save_manifest(manifest: RunManifest, path: str | os.PathLike) -> None:
    tmp = f"{os.fspath(path)}.tmp.{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(manifest.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


@dataclass
class ValidationReport:
    """Outcome of manifest validation; never raises, all problems are listed."""

    passed: bool
    violations: list[str] = field(default_factory=list)


def validate_manifest(manifest: RunManifest, base_dir: str | os.PathLike) -> ValidationReport:
    """Check a manifest and its referenced FTD files; purely read-only.

    Verifies schema version, label/split/prediction lengths and ranges,
    split sanity (both splits non-empty, test split with >= 2 classes),
    site uniqueness, per-(module, aggregation) layer contiguity from 0,
    and that every referenced FTD file exists, parses, and has one row per
    sample.
    """
    v: list[str] = []
    n = manifest.n_samples
    n_classes = len(manifest.class_names)

    if manifest.schema_version != SCHEMA_VERSION:
        v.append(f"unsupported schema_version {manifest.schema_version}")
    if n_classes < 2:
        v.append(f"need at least 2 class names, got {n_classes}")
    if n < 1:
        v.append("manifest declares no samples")
    if len(manifest.split) != n:
        v.append(f"split length {len(manifest.split)} != labels length {n}")
    if any(lab < 0 or lab >= n_classes for lab in manifest.labels):
        v.append("label out of range [0, num_classes)")
    bad_split = sorted({s for s in manifest.split if s not in SPLITS})
    if bad_split:
        v.append(f"unknown split values {bad_split}")

    if len(manifest.split) == n and not bad_split:
        train_labels = [l for l, s in zip(manifest.labels, manifest.split) if s == "train"]
        test_labels = [l for l, s in zip(manifest.labels, manifest.split) if s == "test"]
        if not train_labels:
            v.append("empty train split")
        if not test_labels:
            v.append("empty test split")
        elif len(set(test_labels)) < 2:
            v.append("degenerate test split: fewer than 2 distinct classes")

    if manifest.final_predictions is not None:
        if len(manifest.final_predictions) != n:
            v.append(
                f"final_predictions length {len(manifest.final_predictions)} != labels length {n}"
            )
        if any(p != ABSTAIN and (p < 0 or p >= n_classes) for p in manifest.final_predictions):
            v.append("final prediction out of range (only -1/abstain or a class index)")

    if not manifest.sites:
        v.append("manifest declares no sites")
    seen_ids: set[str] = set()
    for site in manifest.sites:
        if site.site_id in seen_ids:
            v.append(f"duplicate site_id {site.site_id!r}")
        seen_ids.add(site.site_id)
        if site.module not in MODULES:
            v.append(f"site {site.site_id!r}: unknown module {site.module!r}")
        if site.aggregation not in AGGREGATIONS:
            v.append(f"site {site.site_id!r}: unknown aggregation {site.aggregation!r}")
        if site.layer_index < 0:
            v.append(f"site {site.site_id!r}: negative layer_index")

    # Layer indices must be contiguous from 0 within each (module, aggregation)
    # group, so each group forms one gap-free per-layer curve.
    groups: dict[tuple[str, str], list[int]] = {}
    for site in manifest.sites:
        groups.setdefault((site.module, site.aggregation), []).append(site.layer_index)
    for (module, agg), idxs in sorted(groups.items()):
        if sorted(idxs) != list(range(len(idxs))):
            v.append(
                f"module {module} ({agg}): layer indices {sorted(idxs)} "
                f"not contiguous from 0"
            )

    base = os.fspath(base_dir)
    for site in manifest.sites:
        fpath = os.path.join(base, site.file)
        if not os.path.isfile(fpath):
            v.append(f"site {site.site_id!r}: missing file {site.file}")
            continue
        try:
            tensor = read_ftd(fpath)
        except (TensorFormatError, TensorValidationError) as exc:
            v.append(f"site {site.site_id!r}: unreadable file {site.file}: {exc}")
            continue
        if tensor.n_samples != n:
            v.append(
                f"site {site.site_id!r}: {tensor.n_samples} rows, manifest declares {n} samples"
            )

    return ValidationReport(passed=not v, violations=v)
