"""8-bit raster images, alpha mattes, and the binary PPM/PGM codec.

Images are stored as uint8 numpy arrays of shape (height, width, channels),
row-major and channel-interleaved. Mattes are float arrays of shape
(height, width) with values in [0, 1]. The only file formats handled here
are binary PGM (P5, one channel) and binary PPM (P6, three channels) with
maxval 255.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_WHITESPACE = b" \t\n\r\x0b\x0c"


class NetpbmError(ValueError):
    """Malformed PPM/PGM data; the message names the offending byte offset."""


def round_half_away(x: np.ndarray) -> np.ndarray:
    """Round to nearest integer, ties away from zero (repo-wide rule)."""
    return np.copysign(np.floor(np.abs(x) + 0.5), x)


def _to_uint8(x: np.ndarray) -> np.ndarray:
    return np.clip(round_half_away(x), 0, 255).astype(np.uint8)


@dataclass(eq=False)
class RasterImage:
    """8-bit image; ``pixels`` has shape (height, width, channels)."""

    pixels: np.ndarray

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels)
        if self.pixels.dtype != np.uint8:
            raise ValueError(f"pixels must be uint8, got {self.pixels.dtype}")
        if self.pixels.ndim != 3:
            raise ValueError(f"pixels must be (height, width, channels), got shape {self.pixels.shape}")
        h, w, c = self.pixels.shape
        if h < 1 or w < 1 or c < 1:
            raise ValueError(f"degenerate image shape {self.pixels.shape}")

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    def __eq__(self, other):
        if not isinstance(other, RasterImage):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and np.array_equal(self.pixels, other.pixels)


@dataclass(eq=False)
class AlphaMatte:
    """Per-pixel foreground opacity; ``values`` has shape (height, width), in [0, 1]."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError(f"matte values must be (height, width), got shape {self.values.shape}")
        if self.values.shape[0] < 1 or self.values.shape[1] < 1:
            raise ValueError(f"degenerate matte shape {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("matte values must be finite")
        if self.values.min() < 0.0 or self.values.max() > 1.0:
            raise ValueError("matte values must lie in [0, 1]")

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def __eq__(self, other):
        if not isinstance(other, AlphaMatte):
            return NotImplemented
        return self.values.shape == other.values.shape and np.array_equal(self.values, other.values)


def _next_token(data: bytes, pos: int) -> tuple[bytes, int, int]:
    """Skip whitespace/comments, return (token, token_start, new_pos)."""
    n = len(data)
    while pos < n:
        b = data[pos]
        if b in _WHITESPACE:
            pos += 1
        elif b == ord("#"):
            nl = data.find(b"\n", pos)
            pos = n if nl < 0 else nl + 1
        else:
            break
    start = pos
    while pos < n and data[pos] not in _WHITESPACE and data[pos] != ord("#"):
        pos += 1
    if start == pos:
        raise NetpbmError(f"unexpected end of header at byte {start}")
    return data[start:pos], start, pos


def _parse_header_int(data: bytes, pos: int, what: str) -> tuple[int, int]:
    token, start, pos = _next_token(data, pos)
    if not token.isdigit():
        raise NetpbmError(f"invalid {what} {token!r} at byte {start}")
    return int(token), pos


def decode_image(data: bytes) -> RasterImage:
    """Decode binary PGM (P5) or PPM (P6) bytes, maxval 255 only."""
    magic = bytes(data[:2])
    if magic == b"P5":
        channels = 1
    elif magic == b"P6":
        channels = 3
    else:
        raise NetpbmError(f"bad magic number {magic!r} at byte 0 (expected P5 or P6)")

    pos = 2
    width, pos = _parse_header_int(data, pos, "width")
    height, pos = _parse_header_int(data, pos, "height")
    if width < 1 or height < 1:
        raise NetpbmError(f"degenerate dimensions {width}x{height} in header")
    maxval_token, maxval_start, pos = _next_token(data, pos)
    if not maxval_token.isdigit() or int(maxval_token) != 255:
        raise NetpbmError(f"unsupported maxval {maxval_token!r} at byte {maxval_start} (only 255)")
    if pos >= len(data) or data[pos] not in _WHITESPACE:
        raise NetpbmError(f"expected single whitespace after maxval at byte {pos}")
    payload_start = pos + 1

    need = width * height * channels
    got = len(data) - payload_start
    if got < need:
        raise NetpbmError(
            f"truncated payload at byte {len(data)}: expected {need} bytes "
            f"from byte {payload_start}, found {got}"
        )
    if got > need:
        raise NetpbmError(f"trailing data after payload at byte {payload_start + need}")

    pixels = np.frombuffer(data, dtype=np.uint8, count=need, offset=payload_start)
    return RasterImage(pixels.reshape(height, width, channels).copy())


def encode_image(img: RasterImage) -> bytes:
    """Encode to canonical binary PGM/PPM; inverse of decode_image."""
    if img.channels == 1:
        magic = b"P5"
    elif img.channels == 3:
        magic = b"P6"
    else:
        raise NetpbmError(f"unsupported channel count {img.channels} (P5/P6 hold 1 or 3)")
    header = magic + b"\n%d %d\n255\n" % (img.width, img.height)
    return header + img.pixels.tobytes()


def matte_from_gray(img: RasterImage) -> AlphaMatte:
    """Grayscale image to matte: alpha = sample / 255."""
    if img.channels != 1:
        raise ValueError(f"matte source must have 1 channel, got {img.channels}")
    return AlphaMatte(img.pixels[:, :, 0].astype(np.float64) / 255.0)


def matte_to_gray(matte: AlphaMatte) -> RasterImage:
    """Matte to grayscale image: sample = round(alpha * 255), ties away from zero."""
    return RasterImage(_to_uint8(matte.values * 255.0)[:, :, None])


def image_to_tensor(img: RasterImage) -> np.ndarray:
    """Image to a (1, channels, height, width) float32 tensor scaled to [0, 1]."""
    scaled = img.pixels.astype(np.float32) / np.float32(255.0)
    return np.ascontiguousarray(scaled.transpose(2, 0, 1)[None, :, :, :])
