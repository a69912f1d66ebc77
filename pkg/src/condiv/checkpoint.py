"""Named-section little-endian container for parameters and training state.

Layout::

    magic "CDLC" | u32 version (1) | u32 section count
    per section:
        u16 name length | name (utf-8) | u8 dtype | u8 ndim | ndim x u32 dims
        | u64 payload length | payload

dtype tags: 1 = f32, 2 = f64, 3 = i64, 4 = raw bytes (ndim 0).  Sections are
written in sorted name order so identical state gives identical bytes.
"""
from __future__ import annotations

import os
import struct
from os import PathLike

import numpy as np

MAGIC = b"CDLC"
VERSION = 1
_DTYPES = {1: "<f4", 2: "<f8", 3: "<i8"}
_TAGS = {np.dtype("float32"): 1, np.dtype("float64"): 2, np.dtype("int64"): 3}


class CheckpointError(ValueError):
    def __init__(self, message: str, offset: int):
        self.offset = offset
        super().__init__(f"{message} (at byte offset {offset})")


def encode_sections(sections: dict[str, np.ndarray | bytes]) -> bytes:
    out = [struct.pack("<4sII", MAGIC, VERSION, len(sections))]
    for name in sorted(sections):
        value = sections[name]
        key = name.encode("utf-8")
        if isinstance(value, (bytes, bytearray)):
            out.append(struct.pack("<H", len(key)) + key + struct.pack("<BB", 4, 0))
            payload = bytes(value)
        else:
            arr = np.asarray(value)
            if arr.dtype not in _TAGS:
                arr = arr.astype(np.float64) if arr.dtype.kind == "f" else arr.astype(np.int64)
            tag = _TAGS[arr.dtype]
            out.append(struct.pack("<H", len(key)) + key + struct.pack("<BB", tag, arr.ndim)
                       + struct.pack(f"<{arr.ndim}I", *arr.shape))
            payload = np.ascontiguousarray(arr).astype(_DTYPES[tag]).tobytes()
        out.append(struct.pack("<Q", len(payload)) + payload)
    return b"".join(out)


def decode_sections(buf: bytes) -> dict[str, np.ndarray | bytes]:
    def need(off, n, what):
        if off + n > len(buf):
            raise CheckpointError(f"truncated {what}", off)

    need(0, 12, "header")
    magic, version, count = struct.unpack_from("<4sII", buf, 0)
    if magic != MAGIC:
        raise CheckpointError(f"bad magic {magic!r}", 0)
    if version != VERSION:
        raise CheckpointError(f"unsupported version {version}", 4)
    off, sections = 12, {}
    for _ in range(count):
        need(off, 2, "section name length")
        (klen,) = struct.unpack_from("<H", buf, off)
        off += 2
        need(off, klen + 2, "section header")
        name = buf[off:off + klen].decode("utf-8")
        tag, ndim = struct.unpack_from("<BB", buf, off + klen)
        off += klen + 2
        need(off, 4 * ndim + 8, "section dims")
        dims = struct.unpack_from(f"<{ndim}I", buf, off)
        off += 4 * ndim
        (plen,) = struct.unpack_from("<Q", buf, off)
        off += 8
        need(off, plen, f"payload of {name!r}")
        payload = buf[off:off + plen]
        if tag == 4:
            sections[name] = bytes(payload)
        elif tag in _DTYPES:
            dt = np.dtype(_DTYPES[tag])
            if plen != dt.itemsize * int(np.prod(dims)):
                raise CheckpointError(f"payload size mismatch for {name!r}", off)
            sections[name] = np.frombuffer(payload, dtype=dt).reshape(dims).astype(dt.newbyteorder("="))
        else:
            raise CheckpointError(f"unknown dtype tag {tag} for {name!r}", off - 8 - 4 * ndim - 2)
        off += plen
    if off != len(buf):
        raise CheckpointError(f"{len(buf) - off} trailing bytes", off)
    return sections


def save_sections(path: str | PathLike, sections: dict[str, np.ndarray | bytes]) -> None:
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(encode_sections(sections))
    os.replace(tmp, path)


def load_sections(path: str | PathLike) -> dict[str, np.ndarray | bytes]:
    with open(path, "rb") as fh:
        return decode_sections(fh.read())
