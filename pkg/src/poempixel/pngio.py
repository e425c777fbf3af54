"""Minimal PNG encode/read helpers for the mock image provider.

Hand-rolled (zlib + struct) so mock image bytes are stable across library
versions: same inputs always produce the same bytes. Only what the mocks
need is supported — 8-bit RGB, solid logic left to callers, and iTXt
metadata chunks (UTF-8, uncompressed). Reading extracts dimensions and
text chunks without decoding pixel data.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from typing import Mapping

from .errors import ValidationError

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"


@dataclass(frozen=True)
class PngInfo:
    width: int
    height: int
    text: dict[str, str]


def _chunk(tag: bytes, payload: bytes) -> bytes:
    return (
        struct.pack(">I", len(payload))
        + tag
        + payload
        + struct.pack(">I", zlib.crc32(tag + payload) & 0xFFFFFFFF)
    )


def encode_rgb_png(
    width: int,
    height: int,
    rgb: tuple[int, int, int],
    text: Mapping[str, str] | None = None,
) -> bytes:
    """Encode a solid-color RGB PNG with optional iTXt metadata.

    Chunk order is fixed (IHDR, sorted iTXt, IDAT, IEND) so output is
    byte-deterministic.
    """
    if width <= 0 or height <= 0:
        raise ValidationError(f"image dimensions must be positive, got {width}x{height}")
    ihdr = struct.pack(">IIBBBBB", width, height, 8, 2, 0, 0, 0)
    row = b"\x00" + bytes(rgb) * width
    idat = zlib.compress(row * height, 9)
    out = [PNG_SIGNATURE, _chunk(b"IHDR", ihdr)]
    for key in sorted(text or {}):
        payload = key.encode("latin-1") + b"\x00\x00\x00\x00\x00" + text[key].encode("utf-8")
        out.append(_chunk(b"iTXt", payload))
    out.append(_chunk(b"IDAT", idat))
    out.append(_chunk(b"IEND", b""))
    return b"".join(out)


def read_png(data: bytes) -> PngInfo:
    """Parse dimensions and tEXt/iTXt chunks from PNG bytes."""
    if not data.startswith(PNG_SIGNATURE):
        raise ValidationError("not a PNG: bad signature")
    pos = len(PNG_SIGNATURE)
    width = height = None
    text: dict[str, str] = {}
    while pos + 8 <= len(data):
        length, tag = struct.unpack(">I4s", data[pos : pos + 8])
        payload = data[pos + 8 : pos + 8 + length]
        if len(payload) < length:
            raise ValidationError("not a PNG: truncated chunk")
        if tag == b"IHDR":
            width, height = struct.unpack(">II", payload[:8])
        elif tag == b"iTXt":
            key, rest = payload.split(b"\x00", 1)
            # skip compression flag/method and the two empty language fields
            rest = rest[2:]
            _, rest = rest.split(b"\x00", 1)
            _, value = rest.split(b"\x00", 1)
            text[key.decode("latin-1")] = value.decode("utf-8")
        elif tag == b"tEXt":
            key, value = payload.split(b"\x00", 1)
            text[key.decode("latin-1")] = value.decode("latin-1")
        elif tag == b"IEND":
            break
        pos += 8 + length + 4
    if width is None or height is None:
        raise ValidationError("not a PNG: missing IHDR")
    return PngInfo(width=width, height=height, text=text)
