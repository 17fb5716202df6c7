"""Deterministic report artifacts: versioned JSON documents and CSV tables.

Writers are atomic (temp file + rename) and byte-stable: sorted JSON keys,
two-space indent, LF line endings, comma-separated CSVs with dot decimals.
Re-running a command over identical inputs reproduces identical bytes.
"""

from __future__ import annotations

import csv
import io
import json
import os

REPORT_SCHEMA_VERSION = 1

LAYER_RESULT_COLUMNS = (
    "module",
    "layer_index",
    "site_id",
    "accuracy",
    "precision",
    "recall",
    "f1",
    "auc",
    "repeats",
    "seed",
)

CURVE_COLUMNS = ("module", "layer_index", "value")

COMPARE_COLUMNS = ("model", "dataset", "fhs_v", "fhs_c", "fhs_l", "p_final")


def _atomic_write_text(path: str | os.PathLike, text: str) -> None:
    path = os.fspath(path)
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_json(path: str | os.PathLike, payload: dict) -> None:
    _atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def read_json(path: str | os.PathLike) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def write_csv(path: str | os.PathLike, header: tuple[str, ...], rows: list[tuple]) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(row)
    _atomic_write_text(path, buf.getvalue())


def read_csv(path: str | os.PathLike) -> tuple[list[str], list[list[str]]]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        rows = list(reader)
    return rows[0], rows[1:]


def layer_results_csv_rows(results) -> list[tuple]:
    rows = []
    for r in results:
        m = r.metrics
        rows.append(
            (
                r.module,
                r.layer_index,
                r.site_id,
                repr(m.accuracy),
                repr(m.precision),
                repr(m.recall),
                repr(m.f1),
                repr(m.auc),
                r.repeats,
                r.seed,
            )
        )
    return rows


def curve_csv_rows(curves: dict) -> list[tuple]:
    rows = []
    for module in ("V", "C", "L"):
        if module not in curves:
            continue
        for i, value in enumerate(curves[module]):
            rows.append((module, i, repr(float(value))))
    return rows
