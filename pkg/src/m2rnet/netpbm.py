"""Binary PGM (P5) and PPM (P6) reading and writing, 8-bit only.

Loaded images are float64 in [0, 1]: PGM as ``[H, W]``, PPM as ``[3, H, W]``.
"""

from __future__ import annotations

import numpy as np

from .errors import CodecError

_WHITESPACE = b" \t\n\r\v\f"


def _header(buf: bytes):
    """Parse magic, width, height, maxval; return them and the raster offset."""
    if len(buf) < 2:
        raise CodecError("file too short for a netpbm header (offset 0)")
    magic = buf[:2]
    if magic in (b"P2", b"P3", b"P1", b"P4"):
        raise CodecError(f"unsupported netpbm variant {magic.decode()} at offset 0; "
                         "only binary P5 (gray) and P6 (RGB) are accepted")
    if magic not in (b"P5", b"P6"):
        raise CodecError(f"bad magic {magic!r} at offset 0")
    pos = 2
    fields = []
    while len(fields) < 3:
        if pos >= len(buf):
            raise CodecError(f"truncated header at offset {pos}")
        ch = buf[pos:pos + 1]
        if ch in _WHITESPACE:
            pos += 1
        elif ch == b"#":
            end = buf.find(b"\n", pos)
            if end < 0:
                raise CodecError(f"unterminated comment at offset {pos}")
            pos = end + 1
        elif ch.isdigit():
            start = pos
            while pos < len(buf) and buf[pos:pos + 1].isdigit():
                pos += 1
            fields.append((int(buf[start:pos]), start))
        else:
            raise CodecError(f"unexpected byte {ch!r} in header at offset {pos}")
    if pos >= len(buf) or buf[pos:pos + 1] not in _WHITESPACE:
        raise CodecError(f"missing whitespace after header at offset {pos}")
    (width, w_off), (height, h_off), (maxval, m_off) = fields
    if width < 1:
        raise CodecError(f"width must be positive (offset {w_off})")
    if height < 1:
        raise CodecError(f"height must be positive (offset {h_off})")
    if maxval != 255:
        raise CodecError(f"maxval {maxval} at offset {m_off}; only 8-bit (255) is supported")
    return magic, width, height, pos + 1


def decode(buf: bytes) -> np.ndarray:
    magic, width, height, offset = _header(buf)
    channels = 3 if magic == b"P6" else 1
    need = width * height * channels
    if len(buf) - offset < need:
        raise CodecError(f"raster truncated: need {need} bytes from offset {offset}, have {len(buf) - offset}")
    raw = np.frombuffer(buf, dtype=np.uint8, count=need, offset=offset)
    if channels == 3:
        return raw.reshape(height, width, 3).transpose(2, 0, 1) / 255.0
    return raw.reshape(height, width) / 255.0


def to_uint8(image) -> np.ndarray:
    image = np.asarray(image)
    if image.dtype == np.uint8:
        return image
    return np.rint(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)


def encode(image) -> bytes:
    """PGM for ``[H, W]`` / ``[1, H, W]``; PPM for ``[3, H, W]`` (floats in [0, 1] or uint8)."""
    img = to_uint8(image)
    if img.ndim == 3 and img.shape[0] == 1:
        img = img[0]
    if img.ndim == 2:
        h, w = img.shape
        return b"P5\n%d %d\n255\n" % (w, h) + img.tobytes()
    if img.ndim == 3 and img.shape[0] == 3:
        _, h, w = img.shape
        return b"P6\n%d %d\n255\n" % (w, h) + img.transpose(1, 2, 0).tobytes()
    raise CodecError(f"cannot encode array of shape {img.shape}; want [H,W], [1,H,W] or [3,H,W]")


def load(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return decode(fh.read())


def save(path, image):
    data = encode(image)
    with open(path, "wb") as fh:
        fh.write(data)
