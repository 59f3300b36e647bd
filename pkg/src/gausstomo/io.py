"""On-disk formats.

GTM1 matrix container (little-endian)::

    b"GTM1" | u32 rows | u32 cols | u8 dtype | payload (row-major)

dtype 0 is float64, dtype 1 is complex128 stored as interleaved (re, im)
float64 pairs.

Shot datasets are CSV files whose first line is ``# `` followed by a JSON
header; the table columns are ``r,s,n_0,...,n_{Ntot-1}`` with ``s`` 1-based.
"""
from __future__ import annotations

import csv
import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .errors import InvalidArgumentError
from .simulator import ShotDataset

MAGIC = b"GTM1"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIIB")


def write_matrix(path, A) -> None:
    A = np.atleast_2d(np.asarray(A))
    if A.ndim != 2:
        raise InvalidArgumentError("only 2d arrays can be stored")
    is_complex = np.iscomplexobj(A)
    payload = np.ascontiguousarray(A, dtype="<c16" if is_complex else "<f8")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, A.shape[0], A.shape[1], int(is_complex)))
        fh.write(payload.tobytes())


def read_matrix(path) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise InvalidArgumentError(f"{path}: truncated header")
    magic, rows, cols, tag = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise InvalidArgumentError(f"{path}: bad magic {magic!r}")
    if tag not in (0, 1):
        raise InvalidArgumentError(f"{path}: unknown dtype tag {tag}")
    dtype = "<c16" if tag else "<f8"
    expected = rows * cols * np.dtype(dtype).itemsize
    body = raw[_HEADER.size:]
    if len(body) != expected:
        raise InvalidArgumentError(f"{path}: payload has {len(body)} bytes, expected {expected}")
    return np.frombuffer(body, dtype=dtype).reshape(rows, cols).astype(complex if tag else float)


def write_matrix_csv(path, A) -> None:
    A = np.atleast_2d(np.asarray(A))
    if np.iscomplexobj(A):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            for row in A:
                w.writerow([f"{z.real!r}{z.imag:+.17g}j" for z in row])
    else:
        np.savetxt(path, A, delimiter=",", fmt="%.17g")


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, complex):
        return {"re": o.real, "im": o.imag}
    raise TypeError(f"cannot serialize {type(o).__name__}")


def save_bundle(directory, name: str, bundle, mmap=None) -> dict:
    """Write G, W, L (and F) as GTM1 files plus a JSON sidecar; returns the sidecar."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    files = {"G": bundle.G}
    if bundle.L is not None:
        files["L"] = bundle.L
    if bundle.W is not None:
        files["W_blocks"] = bundle.W.reshape(-1, bundle.W.shape[-1])
    if mmap is not None:
        files["F"] = mmap.F
        files["d_anc"] = mmap.d_anc[:, None]
    sidecar = dict(bundle.sidecar(), format_version=FORMAT_VERSION, files={})
    for key, arr in files.items():
        fname = f"{name}_{key}.gtm"
        write_matrix(directory / fname, arr)
        sidecar["files"][key] = {"file": fname, "sha256": file_hash(directory / fname)}
    write_json(directory / f"{name}.json", sidecar)
    return sidecar


def file_hash(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_dataset(path, dataset: ShotDataset, extra_header: dict | None = None) -> None:
    header = {
        "format_version": FORMAT_VERSION,
        "seed": dataset.seed,
        "fingerprint": dataset.fingerprint,
        "R": dataset.R,
        "n_sites": dataset.n_sites,
        **dataset.meta,
        **(extra_header or {}),
    }
    with open(path, "w", newline="") as fh:
        fh.write("# " + json.dumps(header, sort_keys=True, default=_json_default) + "\n")
        w = csv.writer(fh)
        w.writerow(["r", "s"] + [f"n_{j}" for j in range(dataset.n_sites)])
        for r in range(dataset.R):
            w.writerow([r, int(dataset.s[r]) + 1, *dataset.n[r].tolist()])


def read_dataset(path) -> ShotDataset:
    with open(path, newline="") as fh:
        first = fh.readline()
        if not first.startswith("#"):
            raise InvalidArgumentError(f"{path}: missing JSON header line")
        header = json.loads(first[1:].strip())
        reader = csv.reader(fh)
        cols = next(reader)
        if cols[:2] != ["r", "s"]:
            raise InvalidArgumentError(f"{path}: expected columns r,s,n_0,...")
        rows = np.array([[int(v) for v in row] for row in reader if row], dtype=np.int64)
    if rows.size == 0:
        raise InvalidArgumentError(f"{path}: no records")
    n = rows[:, 2:]
    if np.any((n != 0) & (n != 1)):
        raise InvalidArgumentError(f"{path}: occupations must be 0 or 1")
    if np.any(rows[:, 1] < 1):
        raise InvalidArgumentError(f"{path}: member index s is 1-based")
    meta = {k: v for k, v in header.items() if k not in ("seed", "fingerprint", "R", "n_sites", "format_version")}
    return ShotDataset(rows[:, 1] - 1, n.astype(np.uint8), header.get("fingerprint", ""), header.get("seed"), meta)
