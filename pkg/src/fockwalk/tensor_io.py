"""Tensor dumps.

Binary form: one JSON header line, then the values as little-endian float64
pairs ``(re, im)`` in row-major order. Plain JSON form: the header fields plus
``"data"``, a flat row-major list of ``[re, im]`` pairs.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

__all__ = ["write_tensor", "read_tensor", "write_json_tensor", "read_json_tensor", "FORMAT"]

FORMAT = "fockwalk-tensor/1"


def _header(array: np.ndarray, convention: str, meta: dict | None) -> dict:
    return {
        "format": FORMAT,
        "shape": list(array.shape),
        "dtype": "<c16",
        "order": "row-major",
        "convention": convention,
        "meta": meta or {},
    }


def write_tensor(path, array, convention: str, meta: dict | None = None) -> Path:
    array = np.ascontiguousarray(array, dtype="<c16")
    path = Path(path)
    head = json.dumps(_header(array, convention, meta), sort_keys=True)
    with open(path, "wb") as fh:
        fh.write(head.encode() + b"\n")
        fh.write(array.tobytes(order="C"))
    return path


def read_tensor(path) -> tuple[np.ndarray, dict]:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline())
        raw = fh.read()
    if header.get("format") != FORMAT:
        raise ValueError(f"{path} is not a {FORMAT} file")
    data = np.frombuffer(raw, dtype="<c16").reshape(header["shape"])
    return data.astype(np.complex128), header


def write_json_tensor(path, array, convention: str, meta: dict | None = None) -> Path:
    array = np.asarray(array, dtype=np.complex128)
    obj = _header(array, convention, meta)
    flat = array.reshape(-1)
    obj["data"] = [[float(z.real), float(z.imag)] for z in flat]
    path = Path(path)
    path.write_text(json.dumps(obj, sort_keys=True))
    return path


def read_json_tensor(path) -> tuple[np.ndarray, dict]:
    obj = json.loads(Path(path).read_text())
    pairs = np.asarray(obj.pop("data"), dtype=float).reshape(-1, 2)
    return (pairs[:, 0] + 1j * pairs[:, 1]).reshape(obj["shape"]), obj
