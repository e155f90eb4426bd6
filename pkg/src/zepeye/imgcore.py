"""Grayscale raster container, binary PGM I/O, resampling and noise."""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np


class PgmError(ValueError):
    """Base class for PGM decoding failures."""


class MalformedHeader(PgmError):
    pass


class UnsupportedMaxval(PgmError):
    pass


class Truncated(PgmError):
    pass


@dataclass(frozen=True, eq=False)
class GrayImage:
    """8-bit grayscale raster stored row-major as a read-only uint8 array."""

    pixels: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.pixels)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"expected a non-empty 2D raster, got shape {arr.shape}")
        if arr.dtype != np.uint8:
            if np.issubdtype(arr.dtype, np.floating) and not np.all(np.isfinite(arr)):
                raise ValueError("pixel values must be finite")
            if arr.size and (arr.min() < 0 or arr.max() > 255):
                raise ValueError("pixel values must lie in [0, 255]")
            if np.issubdtype(arr.dtype, np.floating) and np.any(arr != np.round(arr)):
                raise ValueError("pixel values must be integral")
            arr = arr.astype(np.uint8)
        else:
            arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "pixels", arr)

    @classmethod
    def from_flat(cls, width: int, height: int, values) -> "GrayImage":
        flat = np.asarray(values)
        if flat.size != width * height:
            raise ValueError(f"{flat.size} values for a {width}x{height} image")
        return cls(flat.reshape(height, width))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape

    def crop(self, rect: "Rect") -> "GrayImage":
        rect.check_inside(self.height, self.width)
        return GrayImage(self.pixels[rect.row_min:rect.row_max + 1, rect.col_min:rect.col_max + 1])

    def transpose(self) -> "GrayImage":
        return GrayImage(self.pixels.T)

    def __eq__(self, other):
        if not isinstance(other, GrayImage):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.pixels, other.pixels))

    def __hash__(self):
        return hash((self.shape, self.pixels.tobytes()))

    def __repr__(self):
        return f"GrayImage({self.width}x{self.height})"


@dataclass(frozen=True)
class Rect:
    """Inclusive row/column window."""

    row_min: int
    row_max: int
    col_min: int
    col_max: int

    def __post_init__(self):
        if self.row_min > self.row_max or self.col_min > self.col_max:
            raise ValueError(f"empty rect {self}")

    @classmethod
    def from_size(cls, row: int, col: int, height: int, width: int) -> "Rect":
        return cls(row, row + height - 1, col, col + width - 1)

    @property
    def height(self) -> int:
        return self.row_max - self.row_min + 1

    @property
    def width(self) -> int:
        return self.col_max - self.col_min + 1

    def inside(self, height: int, width: int) -> bool:
        return (0 <= self.row_min and self.row_max < height
                and 0 <= self.col_min and self.col_max < width)

    def check_inside(self, height: int, width: int) -> None:
        if not self.inside(height, width):
            raise OutOfBounds(f"{self} does not fit inside a {width}x{height} raster")

    def contains(self, row: float, col: float) -> bool:
        return self.row_min <= row <= self.row_max and self.col_min <= col <= self.col_max

    def shifted(self, drow: int, dcol: int) -> "Rect":
        return Rect(self.row_min + drow, self.row_max + drow, self.col_min + dcol, self.col_max + dcol)


class OutOfBounds(ValueError):
    pass


@dataclass(frozen=True)
class Point:
    row: float
    col: float

    def __post_init__(self):
        if not (np.isfinite(self.row) and np.isfinite(self.col)):
            raise ValueError("point coordinates must be finite")

    def distance(self, other: "Point") -> float:
        return float(np.hypot(self.row - other.row, self.col - other.col))


def _header_tokens(data: bytes):
    """Yield (token, end_offset) for the first three header fields after the magic."""
    pos = 2
    n = len(data)
    for _ in range(3):
        while pos < n:
            ch = data[pos:pos + 1]
            if ch == b"#":
                while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                    pos += 1
            elif ch.isspace():
                pos += 1
            else:
                break
        start = pos
        while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise MalformedHeader("PGM header ends prematurely")
        yield data[start:pos], pos


def decode_pgm(data: bytes) -> GrayImage:
    if data[:2] != b"P5":
        raise MalformedHeader("not a binary graymap (missing P5 magic)")
    fields = []
    end = 2
    for tok, end in _header_tokens(data):
        if not tok.isdigit():
            raise MalformedHeader(f"non-numeric header field {tok!r}")
        fields.append(int(tok))
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise MalformedHeader(f"bad dimensions {width}x{height}")
    if maxval < 1 or maxval > 255:
        raise UnsupportedMaxval(f"maxval {maxval} not supported (8-bit only)")
    if end >= len(data):
        raise Truncated("missing payload")
    payload = data[end + 1:end + 1 + width * height]
    if len(payload) < width * height:
        raise Truncated(f"payload has {len(payload)} of {width * height} bytes")
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(height, width)
    return GrayImage(pixels)


def encode_pgm(img: GrayImage) -> bytes:
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    return header + img.pixels.tobytes()


def load_pgm(path: str | os.PathLike) -> GrayImage:
    with open(path, "rb") as f:
        return decode_pgm(f.read())


def save_pgm(img: GrayImage, path: str | os.PathLike) -> None:
    with open(path, "wb") as f:
        f.write(encode_pgm(img))


def _bilinear_taps(n_in: int, n_out: int):
    # source coordinate (2k+1)*n_in/(2*n_out) - 1/2, kept as an exact fraction num/den
    den = 2 * n_out
    num = (2 * np.arange(n_out, dtype=np.int64) + 1) * n_in - n_out
    num = np.clip(num, 0, (n_in - 1) * den)
    lo = num // den
    frac = num - lo * den
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, frac, den


def resize_bilinear(img: GrayImage, new_w: int, new_h: int) -> GrayImage:
    """Pixel-center aligned bilinear resampling with exact integer arithmetic.

    Rounds half up. Because the interpolation weights are exact rationals that
    sum to one, ``resize(img + c) == resize(img) + c`` for any clipping-free
    integer offset ``c``.
    """
    if new_w < 1 or new_h < 1:
        raise ValueError(f"target size {new_w}x{new_h} must be at least 1x1")
    if (new_w, new_h) == (img.width, img.height):
        return img
    p = img.pixels.astype(np.int64)
    r0, r1, fr, dr = _bilinear_taps(img.height, new_h)
    c0, c1, fc, dc = _bilinear_taps(img.width, new_w)
    # interpolate along rows first, still scaled by dr
    rows = p[r0, :] * (dr - fr)[:, None] + p[r1, :] * fr[:, None]
    acc = rows[:, c0] * (dc - fc)[None, :] + rows[:, c1] * fc[None, :]
    den = dr * dc
    out = (2 * acc + den) // (2 * den)
    return GrayImage(out.astype(np.uint8))


def add_gaussian_noise(img: GrayImage, sigma: float, seed: int) -> GrayImage:
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if sigma == 0:
        return img
    rng = np.random.default_rng(seed)
    noisy = img.pixels.astype(np.float64) + rng.normal(0.0, sigma, size=img.shape)
    return GrayImage(np.clip(np.rint(noisy), 0, 255).astype(np.uint8))


def add_constant(img: GrayImage, c: int) -> GrayImage:
    """Brightness offset with clamping to [0, 255]."""
    return GrayImage(np.clip(img.pixels.astype(np.int64) + c, 0, 255).astype(np.uint8))
