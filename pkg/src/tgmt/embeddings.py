"""Word-embedding tables: binary/text file formats and cosine similarity.

Binary format (bit-exact round trip):
    header line  ``<vocab_count> <dim>\\n``  (canonical decimal integers)
    per entry    token bytes, one space, ``dim`` little-endian float32
                 values, one newline
Text format: the same header line, then one line per entry with the token
and ``dim`` decimal floats, space-separated.

Vectors are kept as float32 (the on-disk precision); similarity math is
done in float64. Entry order is preserved and significant.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import DegenerateVectorError, DimError, FormatError, IoError

_NEWLINE = 0x0A


def _decode(raw: bytes) -> str:
    # surrogateescape keeps arbitrary token bytes round-trippable
    return raw.decode("utf-8", errors="surrogateescape")


def _encode(token: str) -> bytes:
    return token.encode("utf-8", errors="surrogateescape")


class EmbeddingTable:
    """Immutable ordered map from token to fixed-dimension vector."""

    def __init__(self, dim, entries):
        dim = int(dim)
        if dim <= 0:
            raise FormatError("empty", "vector dimension must be positive")
        self.dim = dim
        self._vectors: dict[str, np.ndarray] = {}
        self._norms: dict[str, float] = {}
        for token, vec in entries:
            if not token:
                raise FormatError("parse", "empty token")
            if " " in token or "\n" in token:
                raise FormatError("parse", f"token {token!r} contains whitespace")
            if token in self._vectors:
                raise FormatError("duplicate", f"token {token!r} appears twice")
            arr = np.asarray(vec, dtype=np.float32)
            if arr.shape != (dim,):
                raise DimError(f"token {token!r}: expected {dim} components, got {arr.shape}")
            arr = arr.copy()
            arr.flags.writeable = False
            self._vectors[token] = arr
            self._norms[token] = float(np.linalg.norm(arr.astype(np.float64)))

    def __len__(self):
        return len(self._vectors)

    def __contains__(self, token):
        return token in self._vectors

    def __eq__(self, other):
        if not isinstance(other, EmbeddingTable):
            return NotImplemented
        if self.dim != other.dim or list(self._vectors) != list(other._vectors):
            return False
        return all(
            self._vectors[t].tobytes() == other._vectors[t].tobytes() for t in self._vectors
        )

    def tokens(self) -> list[str]:
        return list(self._vectors)

    def items(self):
        return self._vectors.items()

    def lookup(self, token: str) -> np.ndarray | None:
        """The stored vector for `token`, or None. Case-sensitive."""
        return self._vectors.get(token)

    def norm(self, token: str) -> float:
        """Cached L2 norm of the stored vector."""
        return self._norms[token]


def cosine(u, v) -> float:
    """Cosine similarity of two vectors, computed in float64, clamped to [-1, 1]."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.ndim != 1 or u.shape != v.shape:
        raise DimError(f"cannot compare shapes {u.shape} and {v.shape}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise DegenerateVectorError("cosine undefined for zero-norm vector")
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def _parse_header(line: bytes, offset: int) -> tuple[int, int]:
    parts = line.split(b" ")
    if len(parts) != 2:
        raise FormatError("header", f"expected '<count> <dim>', got {line!r}", offset)
    values = []
    for part in parts:
        if not part.isdigit() or _encode(str(int(part))) != part:
            raise FormatError("header", f"non-canonical integer {part!r}", offset)
        values.append(int(part))
    count, dim = values
    if count == 0 or dim == 0:
        raise FormatError("empty", "zero vocabulary or zero dimension", offset)
    return count, dim


def load_binary(path) -> EmbeddingTable:
    """Parse a binary embedding file into a table."""
    data = Path(path).read_bytes()
    nl = data.find(b"\n")
    if nl < 0:
        raise FormatError("header", "missing header line", 0)
    count, dim = _parse_header(data[:nl], 0)
    pos = nl + 1
    vec_bytes = 4 * dim
    entries = []
    seen = set()
    for i in range(count):
        sp = data.find(b" ", pos)
        if sp < 0:
            raise FormatError("truncated", f"entry {i}: unterminated token", pos)
        token_bytes = data[pos:sp]
        if not token_bytes:
            raise FormatError("parse", f"entry {i}: empty token", pos)
        if b"\n" in token_bytes:
            raise FormatError("parse", f"entry {i}: newline inside token", pos)
        start = sp + 1
        end = start + vec_bytes
        if end + 1 > len(data):
            raise FormatError("truncated", f"entry {i}: vector data ends early", start)
        if data[end] != _NEWLINE:
            raise FormatError("parse", f"entry {i}: missing newline after vector", end)
        token = _decode(token_bytes)
        if token in seen:
            raise FormatError("duplicate", f"token {token!r} appears twice", pos)
        seen.add(token)
        entries.append((token, np.frombuffer(data, dtype="<f4", count=dim, offset=start)))
        pos = end + 1
    if pos != len(data):
        raise FormatError("parse", f"{len(data) - pos} trailing bytes after last entry", pos)
    return EmbeddingTable(dim, entries)


def load_text(path) -> EmbeddingTable:
    """Parse a text embedding file into a table."""
    data = Path(path).read_bytes()
    lines = data.split(b"\n")
    if not lines or not lines[0]:
        raise FormatError("header", "missing header line", 0)
    count, dim = _parse_header(lines[0], 0)
    offset = len(lines[0]) + 1
    entries = []
    seen = set()
    body = lines[1:]
    for i in range(count):
        if i >= len(body) or not body[i]:
            raise FormatError("truncated", f"entry {i}: missing line", offset)
        fields = body[i].split(b" ")
        if len(fields) != dim + 1:
            raise FormatError(
                "parse", f"entry {i}: expected token + {dim} values, got {len(fields)} fields", offset
            )
        token = _decode(fields[0])
        if not fields[0]:
            raise FormatError("parse", f"entry {i}: empty token", offset)
        if token in seen:
            raise FormatError("duplicate", f"token {token!r} appears twice", offset)
        seen.add(token)
        values = []
        for field in fields[1:]:
            try:
                values.append(float(field))
            except ValueError:
                raise FormatError(
                    "parse", f"entry {i}: non-numeric component {field!r}", offset
                ) from None
        entries.append((token, np.asarray(values, dtype=np.float32)))
        offset += len(body[i]) + 1
    for extra in body[count:]:
        if extra:
            raise FormatError("parse", "trailing content after last entry", offset)
    return EmbeddingTable(dim, entries)


def write_binary(table: EmbeddingTable, path) -> None:
    """Serialize `table` to the binary format. Round-trips byte-for-byte."""
    if len(table) == 0:
        raise FormatError("empty", "refusing to write an empty table")
    chunks = [f"{len(table)} {table.dim}\n".encode("ascii")]
    for token, vec in table.items():
        chunks.append(_encode(token))
        chunks.append(b" ")
        chunks.append(np.ascontiguousarray(vec, dtype="<f4").tobytes())
        chunks.append(b"\n")
    try:
        Path(path).write_bytes(b"".join(chunks))
    except OSError as exc:
        raise IoError(f"cannot write embedding file {path}: {exc}") from exc
