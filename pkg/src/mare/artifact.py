"""Self-describing JSON model files with base64-packed float arrays.

Output is byte-deterministic for identical inputs.
"""

from __future__ import annotations

import base64
import json
from pathlib import Path

import numpy as np


class ArtifactError(ValueError):
    pass


def pack_array(arr: np.ndarray) -> dict:
    arr = np.ascontiguousarray(arr)
    dtype = "<i8" if np.issubdtype(arr.dtype, np.integer) else "<f8"
    data = arr.astype(dtype).tobytes()
    return {"dtype": dtype, "shape": list(arr.shape), "data": base64.b64encode(data).decode("ascii")}


def unpack_array(record: dict) -> np.ndarray:
    try:
        raw = base64.b64decode(record["data"])
        return np.frombuffer(raw, dtype=record["dtype"]).reshape(record["shape"]).copy()
    except (KeyError, ValueError, TypeError) as exc:
        raise ArtifactError(f"corrupt array record: {exc}") from exc


def write_artifact(payload: dict, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
        f.write("\n")


def read_artifact(path: str | Path, expected_format: str | None = None) -> dict:
    with open(path, encoding="utf-8") as f:
        try:
            payload = json.load(f)
        except json.JSONDecodeError as exc:
            raise ArtifactError(f"{path}: not a model artifact ({exc.msg})") from exc
    if expected_format is not None and payload.get("format") != expected_format:
        raise ArtifactError(
            f"{path}: expected a {expected_format!r} artifact, found {payload.get('format')!r}")
    return payload
