"""Raster containers, coordinate normalization, and bit-exact file I/O.

Images travel as binary PGM (P5, grayscale) or PPM (P6, RGB) with maxval
255.  Scalar fields (bias estimates, level set functions, corrected
channels) use a small custom container, F64F: the 4-byte magic ``F64F``,
width and height as 32-bit little-endian unsigned integers, then
width*height IEEE-754 doubles, little-endian, row-major.  Both formats
round-trip bit-exactly.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

#: Luma weights of the standard RGB -> gray conversion.
GRAY_WEIGHTS = (0.2989, 0.5870, 0.1140)

FIELD_MAGIC = b"F64F"

_WHITESPACE = frozenset(b" \t\n\r\x0b\x0c")


class PnmParseError(ValueError):
    """Malformed PGM/PPM input; ``offset`` is the byte where parsing failed."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class FieldFormatError(ValueError):
    """Malformed F64F field file."""


@dataclass(frozen=True)
class RasterImage:
    """A real-valued image, row-major with interleaved channels.

    ``data`` has shape (height, width, channels), dtype float64.  Values
    loaded from 8-bit files lie in [0, 255]; computed images may exceed
    that range but must stay finite.
    """

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 3 or data.shape[2] < 1:
            raise ValueError("image data must have shape (height, width, channels)")
        if not np.all(np.isfinite(data)):
            raise ValueError("image data contains non-finite values")
        object.__setattr__(self, "data", data)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    def channel(self, j: int) -> np.ndarray:
        """Scalar field of channel ``j`` (0-based), shape (height, width)."""
        return self.data[:, :, j]


@dataclass(frozen=True)
class LabelMap:
    """Per-pixel region indices in {1..N}, shape (height, width)."""

    labels: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 2:
            raise ValueError("label map must be 2-D")
        if not np.issubdtype(labels.dtype, np.integer):
            labels = labels.astype(np.int32)
        if labels.size and labels.min() < 1:
            raise ValueError("labels must be >= 1")
        object.__setattr__(self, "labels", labels.astype(np.int32))

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def n_regions(self) -> int:
        return int(self.labels.max())


def _next_token(buf: bytes, pos: int) -> tuple[bytes, int, int]:
    """Next header token after whitespace/comments: (token, start, end)."""
    n = len(buf)
    while pos < n:
        c = buf[pos]
        if c in _WHITESPACE:
            pos += 1
        elif c == ord("#"):
            while pos < n and buf[pos] not in (10, 13):
                pos += 1
        else:
            break
    if pos >= n:
        raise PnmParseError("unexpected end of file in header", pos)
    start = pos
    while pos < n and buf[pos] not in _WHITESPACE and buf[pos] != ord("#"):
        pos += 1
    return buf[start:pos], start, pos


def _int_token(buf: bytes, pos: int, what: str) -> tuple[int, int, int]:
    token, start, end = _next_token(buf, pos)
    if not token.isdigit():
        raise PnmParseError(f"expected integer {what}, got {token!r}", start)
    return int(token), start, end


def load_image(path) -> RasterImage:
    """Load a binary PGM (P5) or PPM (P6) file with maxval 255.

    Headers may contain arbitrary whitespace and ``#`` comments.  Any
    malformed header, unsupported maxval, or truncated payload raises
    :class:`PnmParseError` naming the offending byte offset.
    """
    with open(path, "rb") as fh:
        buf = fh.read()
    magic, magic_at, pos = _next_token(buf, 0)
    if magic == b"P5":
        channels = 1
    elif magic == b"P6":
        channels = 3
    else:
        raise PnmParseError(f"not a binary PGM/PPM, magic {magic!r}", magic_at)
    width, _, pos = _int_token(buf, pos, "width")
    height, _, pos = _int_token(buf, pos, "height")
    maxval, maxval_at, pos = _int_token(buf, pos, "maxval")
    if width < 1 or height < 1:
        raise PnmParseError(f"bad dimensions {width}x{height}", maxval_at)
    if maxval != 255:
        raise PnmParseError(f"unsupported maxval {maxval} (only 255)", maxval_at)
    if pos >= len(buf) or buf[pos] not in _WHITESPACE:
        raise PnmParseError("missing whitespace byte before pixel payload", pos)
    payload_at = pos + 1
    need = width * height * channels
    have = len(buf) - payload_at
    if have < need:
        raise PnmParseError(
            f"truncated payload: need {need} bytes, have {have}", payload_at + have
        )
    raw = np.frombuffer(buf, dtype=np.uint8, count=need, offset=payload_at)
    data = raw.astype(np.float64).reshape(height, width, channels)
    return RasterImage(data)


def save_image(image: RasterImage, path) -> None:
    """Write a 1-channel image as P5 or a 3-channel image as P6.

    Values must already be integers in [0, 255]; quantization is the
    caller's decision (see :func:`quantize`).
    """
    if image.channels == 1:
        magic = b"P5"
    elif image.channels == 3:
        magic = b"P6"
    else:
        raise ValueError(f"cannot export {image.channels}-channel image as PGM/PPM")
    data = image.data
    if data.min() < 0 or data.max() > 255 or not np.array_equal(data, np.round(data)):
        raise ValueError("image values must be integers in [0, 255] for 8-bit export")
    header = b"%s\n%d %d\n255\n" % (magic, image.width, image.height)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(data.astype(np.uint8).tobytes(order="C"))


def quantize(image: RasterImage) -> RasterImage:
    """Round and clamp intensities to [0, 255] for 8-bit export."""
    return RasterImage(np.clip(np.round(image.data), 0.0, 255.0))


def save_field(field: np.ndarray, path) -> None:
    """Write a 2-D float64 field in the F64F format (bit-exact)."""
    field = np.asarray(field, dtype=np.float64)
    if field.ndim != 2:
        raise ValueError("field must be 2-D")
    if not np.all(np.isfinite(field)):
        raise ValueError("field contains non-finite values")
    height, width = field.shape
    with open(path, "wb") as fh:
        fh.write(FIELD_MAGIC)
        fh.write(struct.pack("<II", width, height))
        fh.write(field.astype("<f8").tobytes(order="C"))


def load_field(path) -> np.ndarray:
    """Read an F64F field file written by :func:`save_field`."""
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:4] != FIELD_MAGIC:
        raise FieldFormatError(f"bad magic {buf[:4]!r}, expected {FIELD_MAGIC!r}")
    if len(buf) < 12:
        raise FieldFormatError("truncated F64F header")
    width, height = struct.unpack("<II", buf[4:12])
    need = width * height * 8
    if len(buf) - 12 < need:
        raise FieldFormatError(
            f"truncated F64F payload: need {need} bytes, have {len(buf) - 12}"
        )
    data = np.frombuffer(buf, dtype="<f8", count=width * height, offset=12)
    return data.reshape(height, width).astype(np.float64)


def save_labels(labels: LabelMap, path) -> None:
    """Serialize a label map as a PGM whose gray values are the labels."""
    if labels.n_regions > 255:
        raise ValueError("label values exceed 8-bit range")
    save_image(RasterImage(labels.labels.astype(np.float64)[:, :, None]), path)


def load_labels(path) -> LabelMap:
    """Read a label map previously written by :func:`save_labels`."""
    img = load_image(path)
    if img.channels != 1:
        raise ValueError("label maps must be single-channel PGM")
    return LabelMap(img.channel(0).astype(np.int32))


def to_domain_coords(i, j, width: int, height: int):
    """Map pixel indices (row i, column j) to (x1, x2) in [-1, 1]^2.

    x1 runs along columns, x2 along rows:
    x1 = -1 + 2j/(width-1), x2 = -1 + 2i/(height-1).
    Accepts scalars or arrays.
    """
    if width <= 1 or height <= 1:
        raise ValueError("coordinate normalization needs width > 1 and height > 1")
    i = np.asarray(i)
    j = np.asarray(j)
    if np.any(i < 0) or np.any(i >= height) or np.any(j < 0) or np.any(j >= width):
        raise ValueError("pixel index out of range")
    x1 = -1.0 + 2.0 * j / (width - 1)
    x2 = -1.0 + 2.0 * i / (height - 1)
    if x1.ndim == 0:
        return float(x1), float(x2)
    return x1, x2


def domain_grid(width: int, height: int) -> tuple[np.ndarray, np.ndarray]:
    """Full-grid (x1, x2) coordinate fields, each of shape (height, width)."""
    rows = np.arange(height)[:, None]
    cols = np.arange(width)[None, :]
    x1, x2 = to_domain_coords(rows, cols, width, height)
    return np.broadcast_to(x1, (height, width)), np.broadcast_to(x2, (height, width))


def to_gray(image: RasterImage) -> RasterImage:
    """Collapse an RGB image to one channel with the standard luma weights."""
    if image.channels != 3:
        raise ValueError(f"gray conversion needs 3 channels, got {image.channels}")
    r, g, b = GRAY_WEIGHTS
    gray = r * image.channel(0) + g * image.channel(1) + b * image.channel(2)
    return RasterImage(gray[:, :, None])
