"""Checkpoint serialization for named float64 tensors.

Layout (all little-endian):

    TGMT1\n
    <name>\n
    <dim0> <dim1> ...\n        (blank line of "" for scalars is not allowed;
                                scalars are written as an empty dims line)
    <row-major float64 payload>
    ... repeated per tensor, sorted by name ...

Writing sorts by name so the same mapping always produces the same bytes.
"""

from __future__ import annotations

import numpy as np

from .errors import FormatError, IoError

MAGIC = b"TGMT1\n"


def save_checkpoint(path, tensors: dict) -> None:
    """Write {name: array} to `path`. Names must be unique non-empty
    strings without newlines; values are coerced to float64."""
    items = []
    for name in sorted(tensors):
        if not name or "\n" in name:
            raise FormatError("parse", f"bad tensor name {name!r}")
        # NOT ascontiguousarray: that would bump 0-d arrays to shape (1,)
        arr = np.asarray(tensors[name], dtype=np.float64)
        items.append((name, arr))
    try:
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            for name, arr in items:
                fh.write(name.encode("utf-8") + b"\n")
                fh.write(" ".join(str(d) for d in arr.shape).encode("ascii") + b"\n")
                fh.write(arr.astype("<f8", copy=False).tobytes())
    except OSError as exc:
        raise IoError(f"cannot write checkpoint {path}: {exc}") from exc


def _read_line(blob: bytes, pos: int, what: str):
    end = blob.find(b"\n", pos)
    if end < 0:
        raise FormatError("truncated", f"unterminated {what}", offset=pos)
    return blob[pos:end], end + 1


def load_checkpoint(path) -> dict:
    """Read a checkpoint back into {name: float64 array}."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise IoError(f"cannot read checkpoint {path}: {exc}") from exc
    if not blob.startswith(MAGIC):
        raise FormatError("header", f"bad magic in {path}", offset=0)
    pos = len(MAGIC)
    out = {}
    while pos < len(blob):
        raw_name, pos = _read_line(blob, pos, "tensor name")
        try:
            name = raw_name.decode("utf-8")
        except UnicodeDecodeError:
            raise FormatError("parse", "tensor name is not utf-8", offset=pos) from None
        if not name:
            raise FormatError("parse", "empty tensor name", offset=pos)
        if name in out:
            raise FormatError("duplicate", f"tensor {name!r} appears twice", offset=pos)
        raw_shape, pos = _read_line(blob, pos, "shape line")
        try:
            shape = tuple(int(tok) for tok in raw_shape.split())
        except ValueError:
            raise FormatError("parse", f"bad shape line for {name!r}", offset=pos) from None
        if any(d < 0 for d in shape):
            raise FormatError("parse", f"negative dimension for {name!r}", offset=pos)
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        nbytes = count * 8
        if pos + nbytes > len(blob):
            raise FormatError(
                "truncated", f"payload of {name!r} cut short", offset=pos
            )
        out[name] = np.frombuffer(blob[pos : pos + nbytes], dtype="<f8").reshape(shape).copy()
        pos += nbytes
    if not out:
        raise FormatError("empty", f"checkpoint {path} holds no tensors", offset=pos)
    return out
