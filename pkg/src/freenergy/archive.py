"""Versioned binary model archives.

Layout: 8-byte magic, u32 format version, 1-byte byte-order tag (always
little-endian), u32 section count, then named sections. Every section
carries a CRC32 of its payload so a flipped byte is caught and named.
Matrices are stored as explicit little-endian float64, row-major, behind a
shape header, which makes save -> load -> save byte-identical across
platforms.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"FENARCH\n"
VERSION = 1
_KIND_TEXT = 0
_KIND_MATRIX = 1


class ArchiveError(Exception):
    """Raised for any malformed, corrupted, or unsupported archive."""


@dataclass
class ModelArchive:
    """Framework tag, dims, activation tags, named matrices, and metadata.

    ``meta`` values are strings; matrices are float64 arrays. Insertion
    order of matrices and meta keys is preserved on disk.
    """

    framework: str
    dims: list[int]
    activation: str
    matrices: dict[str, np.ndarray] = field(default_factory=dict)
    meta: dict[str, str] = field(default_factory=dict)


def _encode_matrix(arr: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    head = struct.pack("<B", arr.ndim) + b"".join(struct.pack("<Q", d) for d in arr.shape)
    return head + arr.astype("<f8").tobytes()


def _decode_matrix(payload: bytes, name: str) -> np.ndarray:
    if len(payload) < 1:
        raise ArchiveError(f"section {name!r}: empty matrix payload")
    ndim = payload[0]
    off = 1
    shape = []
    for _ in range(ndim):
        if off + 8 > len(payload):
            raise ArchiveError(f"section {name!r}: truncated shape header")
        shape.append(struct.unpack_from("<Q", payload, off)[0])
        off += 8
    count = int(np.prod(shape)) if shape else 1
    if len(payload) - off != count * 8:
        raise ArchiveError(f"section {name!r}: payload size does not match shape {shape}")
    flat = np.frombuffer(payload, dtype="<f8", count=count, offset=off)
    return flat.astype(np.float64).reshape(shape)


def _write_section(fh, name: str, kind: int, payload: bytes) -> None:
    raw = name.encode("utf-8")
    fh.write(struct.pack("<H", len(raw)))
    fh.write(raw)
    fh.write(struct.pack("<B", kind))
    fh.write(struct.pack("<Q", len(payload)))
    fh.write(payload)
    fh.write(struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF))


def archive_save(path, archive: ModelArchive) -> None:
    """Write the archive; the encoding is deterministic for fixed content."""
    sections: list[tuple[str, int, bytes]] = [
        ("framework", _KIND_TEXT, archive.framework.encode("utf-8")),
        ("dims", _KIND_TEXT, ",".join(str(int(d)) for d in archive.dims).encode("utf-8")),
        ("activation", _KIND_TEXT, archive.activation.encode("utf-8")),
        (
            "meta",
            _KIND_TEXT,
            "\n".join(f"{k}={v}" for k, v in archive.meta.items()).encode("utf-8"),
        ),
    ]
    for name, arr in archive.matrices.items():
        sections.append((f"mat:{name}", _KIND_MATRIX, _encode_matrix(arr)))
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(b"<")
        fh.write(struct.pack("<I", len(sections)))
        for name, kind, payload in sections:
            _write_section(fh, name, kind, payload)


def archive_load(path) -> ModelArchive:
    """Read an archive back, refusing unknown versions and corrupt sections."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[: len(MAGIC)] != MAGIC:
        raise ArchiveError(f"{path}: not a model archive (bad magic)")
    off = len(MAGIC)
    if len(blob) < off + 9:
        raise ArchiveError(f"{path}: truncated header")
    version = struct.unpack_from("<I", blob, off)[0]
    off += 4
    if version != VERSION:
        raise ArchiveError(
            f"{path}: format version {version} is not supported (this build reads {VERSION})"
        )
    if blob[off : off + 1] != b"<":
        raise ArchiveError(f"{path}: unknown byte-order tag {blob[off:off+1]!r}")
    off += 1
    n_sections = struct.unpack_from("<I", blob, off)[0]
    off += 4

    texts: dict[str, str] = {}
    matrices: dict[str, np.ndarray] = {}
    for _ in range(n_sections):
        if off + 2 > len(blob):
            raise ArchiveError(f"{path}: truncated section table")
        name_len = struct.unpack_from("<H", blob, off)[0]
        off += 2
        name = blob[off : off + name_len].decode("utf-8")
        off += name_len
        kind = blob[off]
        off += 1
        size = struct.unpack_from("<Q", blob, off)[0]
        off += 8
        payload = blob[off : off + size]
        if len(payload) != size:
            raise ArchiveError(f"{path}: section {name!r} is truncated")
        off += size
        crc = struct.unpack_from("<I", blob, off)[0]
        off += 4
        if crc != (zlib.crc32(payload) & 0xFFFFFFFF):
            raise ArchiveError(f"{path}: checksum failure in section {name!r}")
        if kind == _KIND_MATRIX:
            matrices[name[4:]] = _decode_matrix(payload, name)
        elif kind == _KIND_TEXT:
            texts[name] = payload.decode("utf-8")
        else:
            raise ArchiveError(f"{path}: section {name!r} has unknown kind {kind}")

    for required in ("framework", "dims", "activation", "meta"):
        if required not in texts:
            raise ArchiveError(f"{path}: missing required section {required!r}")
    dims = [int(v) for v in texts["dims"].split(",")] if texts["dims"] else []
    meta: dict[str, str] = {}
    if texts["meta"]:
        for line in texts["meta"].split("\n"):
            k, _, v = line.partition("=")
            meta[k] = v
    return ModelArchive(texts["framework"], dims, texts["activation"], matrices, meta)
