"""Integral and edge projections over rectangular windows.

Two paths compute the same numbers: a direct per-window summation and a fast
path that gathers every projection element from per-line prefix sums with a
single subtraction. Both accumulate in int64 and divide once per element, so
their results are bit-identical.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterator, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .imgcore import GrayImage, OutOfBounds, Rect


class Axis(enum.Enum):
    HORIZONTAL = "H"  # one value per column
    VERTICAL = "V"    # one value per row


@dataclass(frozen=True, eq=False)
class Projection:
    """Window sums along one axis plus the divisor that turns them into means."""

    sums: np.ndarray
    count: int
    axis: Axis

    @property
    def values(self) -> np.ndarray:
        return self.sums / self.count

    def __len__(self):
        return len(self.sums)

    def __eq__(self, other):
        if not isinstance(other, Projection):
            return NotImplemented
        return (self.axis == other.axis and self.count == other.count
                and np.array_equal(self.sums, other.sums))

    def __repr__(self):
        return f"Projection({self.axis.name}, n={len(self)}, count={self.count})"


@dataclass(frozen=True, eq=False)
class SobelEnergy:
    """Squared Sobel gradient magnitude; the outer 1-pixel border is zero."""

    values: np.ndarray

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def shape(self):
        return self.values.shape


Raster = Union[GrayImage, SobelEnergy, np.ndarray]


def _as_int_raster(raster: Raster) -> np.ndarray:
    if isinstance(raster, GrayImage):
        return raster.pixels.astype(np.int64)
    if isinstance(raster, SobelEnergy):
        return raster.values
    arr = np.asarray(raster)
    if arr.ndim != 2:
        raise ValueError("raster must be 2D")
    if not np.issubdtype(arr.dtype, np.integer):
        raise TypeError("raster must hold integers")
    return arr.astype(np.int64)


def sobel_components(pixels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Interior Sobel responses (H-2, W-2).

    ``s_h`` responds to horizontal edges (derivative down the rows) and
    ``s_v`` to vertical edges (derivative across the columns).
    """
    p = np.asarray(pixels, dtype=np.int64)
    if p.shape[0] < 3 or p.shape[1] < 3:
        raise ValueError(f"Sobel needs at least 3x3 pixels, got {p.shape[1]}x{p.shape[0]}")
    # column derivative smoothed down the rows with [1, 2, 1]
    dx = p[:, 2:] - p[:, :-2]
    s_v = dx[:-2] + 2 * dx[1:-1] + dx[2:]
    dy = p[2:, :] - p[:-2, :]
    s_h = dy[:, :-2] + 2 * dy[:, 1:-1] + dy[:, 2:]
    return s_h, s_v


def _energy_block(pixels: np.ndarray, rect: Rect) -> np.ndarray:
    """Sobel energy over ``rect`` of a full raster, border pixels of the raster zeroed."""
    h, w = pixels.shape
    out = np.zeros((rect.height, rect.width), dtype=np.int64)
    # interior part of the rect (pixels with a full 3x3 neighbourhood)
    r0, r1 = max(rect.row_min, 1), min(rect.row_max, h - 2)
    c0, c1 = max(rect.col_min, 1), min(rect.col_max, w - 2)
    if r0 > r1 or c0 > c1:
        return out
    s_h, s_v = sobel_components(pixels[r0 - 1:r1 + 2, c0 - 1:c1 + 2])
    out[r0 - rect.row_min:r1 - rect.row_min + 1, c0 - rect.col_min:c1 - rect.col_min + 1] = s_h * s_h + s_v * s_v
    return out


def sobel_energy(img: GrayImage, region: Rect | None = None) -> SobelEnergy:
    """S = S_H^2 + S_V^2, computed over ``region`` only when given."""
    if img.width < 3 or img.height < 3:
        raise ValueError(f"image {img.width}x{img.height} is smaller than 3x3")
    if region is None:
        region = Rect(0, img.height - 1, 0, img.width - 1)
    region.check_inside(img.height, img.width)
    return SobelEnergy(_energy_block(img.pixels, region))


def _naive(raster: np.ndarray, rect: Rect, axis: Axis) -> Projection:
    rect.check_inside(*raster.shape)
    block = raster[rect.row_min:rect.row_max + 1, rect.col_min:rect.col_max + 1]
    if axis is Axis.HORIZONTAL:
        return Projection(block.sum(axis=0, dtype=np.int64), rect.height, axis)
    return Projection(block.sum(axis=1, dtype=np.int64), rect.width, axis)


def integral_projection_naive(raster: Raster, rect: Rect, axis: Axis) -> Projection:
    return _naive(_as_int_raster(raster), rect, axis)


def edge_projection_naive(img: GrayImage, rect: Rect, axis: Axis) -> Projection:
    return _naive(sobel_energy(img).values, rect, axis)


class OrientedIntegralImages:
    """Per-column and per-row running sums, each line starting with a zero.

    ``col_cumsum[j][i]`` is the sum of the first ``i`` pixels of column ``j``;
    ``row_cumsum[i][j]`` the sum of the first ``j`` pixels of row ``i``.
    """

    def __init__(self, raster: Raster):
        data = _as_int_raster(raster)
        h, w = data.shape
        self.height, self.width = h, w
        # stored line-major for contiguous gathers; public views are transposed
        self._down = np.zeros((h + 1, w), dtype=np.int64)
        np.cumsum(data, axis=0, out=self._down[1:])
        self._across = np.zeros((h, w + 1), dtype=np.int64)
        np.cumsum(data, axis=1, out=self._across[:, 1:])

    @property
    def col_cumsum(self) -> np.ndarray:
        return self._down.T

    @property
    def row_cumsum(self) -> np.ndarray:
        return self._across

    def window_sums(self, rows: np.ndarray, cols: np.ndarray, win_h: int, win_w: int):
        """Horizontal and vertical sums for many windows given their top-left corners.

        Returns arrays of shape (n, win_w) and (n, win_h).
        """
        rows = np.asarray(rows, dtype=np.intp)
        cols = np.asarray(cols, dtype=np.intp)
        if rows.size and (rows.min() < 0 or cols.min() < 0
                          or rows.max() + win_h > self.height or cols.max() + win_w > self.width):
            raise OutOfBounds("window outside the tabulated raster")
        jj = cols[:, None] + np.arange(win_w)
        horiz = self._down[(rows + win_h)[:, None], jj] - self._down[rows[:, None], jj]
        ii = rows[:, None] + np.arange(win_h)
        vert = self._across[ii, (cols + win_w)[:, None]] - self._across[ii, cols[:, None]]
        return horiz, vert

    def grid_sums(self, row_starts: np.ndarray, col_starts: np.ndarray, win_h: int, win_w: int):
        """Like ``window_sums`` for every (row, col) pair of two start vectors, row-major.

        Line differences are formed once per start row (or column) and windows are
        cut from them as strided views, which avoids a 2D gather per element.
        """
        R = np.asarray(row_starts, dtype=np.intp)
        C = np.asarray(col_starts, dtype=np.intp)
        if R.size and C.size and (R.min() < 0 or C.min() < 0 or R.max() + win_h > self.height
                                  or C.max() + win_w > self.width):
            raise OutOfBounds("window outside the tabulated raster")
        n = R.size * C.size
        diff_down = self._down[R + win_h] - self._down[R]                    # (nr, W)
        horiz = sliding_window_view(diff_down, win_w, axis=1)[:, C].reshape(n, win_w)
        diff_across = self._across[:, C + win_w] - self._across[:, C]         # (H, nc)
        vert = sliding_window_view(diff_across, win_h, axis=0)[R].reshape(n, win_h)
        return horiz, vert


def build_oriented_integrals(raster: Raster) -> OrientedIntegralImages:
    return OrientedIntegralImages(raster)


def fast_projection(tables: OrientedIntegralImages, rect: Rect, axis: Axis) -> Projection:
    rect.check_inside(tables.height, tables.width)
    if axis is Axis.HORIZONTAL:
        down = tables._down
        sums = down[rect.row_max + 1, rect.col_min:rect.col_max + 1] - down[rect.row_min, rect.col_min:rect.col_max + 1]
        return Projection(sums, rect.height, axis)
    across = tables._across
    sums = across[rect.row_min:rect.row_max + 1, rect.col_max + 1] - across[rect.row_min:rect.row_max + 1, rect.col_min]
    return Projection(sums, rect.width, axis)


@dataclass(frozen=True)
class WindowSums:
    """Projection sums for a batch of equally sized windows.

    Arrays are (n, win_w) for the horizontal projections and (n, win_h) for the
    vertical ones; ``rows``/``cols`` are window top-left corners in image
    coordinates.
    """

    rows: np.ndarray
    cols: np.ndarray
    win_h: int
    win_w: int
    ph: np.ndarray
    pv: np.ndarray
    eh: np.ndarray
    ev: np.ndarray

    def __len__(self):
        return len(self.rows)

    def take(self, index) -> "WindowSums":
        index = np.asarray(index, dtype=np.intp)
        return WindowSums(self.rows[index], self.cols[index], self.win_h, self.win_w,
                          self.ph[index], self.pv[index], self.eh[index], self.ev[index])

    def projections(self, k: int) -> tuple[Projection, Projection, Projection, Projection]:
        H, V = Axis.HORIZONTAL, Axis.VERTICAL
        return (Projection(self.ph[k], self.win_h, H), Projection(self.pv[k], self.win_w, V),
                Projection(self.eh[k], self.win_h, H), Projection(self.ev[k], self.win_w, V))


def window_sums(img: GrayImage, rows, cols, win_h: int, win_w: int) -> WindowSums:
    """Fast-path sums for windows with the given top-left corners.

    Gray and Sobel-energy tables are built once over the bounding box of all
    windows, so the energy is only evaluated where it is needed.
    """
    rows = np.asarray(rows, dtype=np.intp)
    cols = np.asarray(cols, dtype=np.intp)
    if rows.size == 0:
        empty_w = np.zeros((0, win_w), dtype=np.int64)
        empty_h = np.zeros((0, win_h), dtype=np.int64)
        return WindowSums(rows, cols, win_h, win_w, empty_w, empty_h, empty_w, empty_h)
    box = Rect(int(rows.min()), int(rows.max()) + win_h - 1, int(cols.min()), int(cols.max()) + win_w - 1)
    box.check_inside(img.height, img.width)
    gray = img.pixels[box.row_min:box.row_max + 1, box.col_min:box.col_max + 1]
    energy = _energy_block(img.pixels, box)
    lr, lc = rows - box.row_min, cols - box.col_min
    ph, pv = OrientedIntegralImages(gray).window_sums(lr, lc, win_h, win_w)
    eh, ev = OrientedIntegralImages(energy).window_sums(lr, lc, win_h, win_w)
    return WindowSums(rows, cols, win_h, win_w, ph, pv, eh, ev)


def grid_window_sums(img: GrayImage, row_starts, col_starts, win_h: int, win_w: int) -> WindowSums:
    """``window_sums`` for the full grid of top-left corners ``row_starts`` x ``col_starts``."""
    R = np.asarray(row_starts, dtype=np.intp)
    C = np.asarray(col_starts, dtype=np.intp)
    rr, cc = np.meshgrid(R, C, indexing="ij")
    rows, cols = rr.ravel(), cc.ravel()
    if rows.size == 0:
        return window_sums(img, rows, cols, win_h, win_w)
    box = Rect(int(R.min()), int(R.max()) + win_h - 1, int(C.min()), int(C.max()) + win_w - 1)
    box.check_inside(img.height, img.width)
    gray = img.pixels[box.row_min:box.row_max + 1, box.col_min:box.col_max + 1]
    energy = _energy_block(img.pixels, box)
    lr, lc = R - box.row_min, C - box.col_min
    ph, pv = OrientedIntegralImages(gray).grid_sums(lr, lc, win_h, win_w)
    eh, ev = OrientedIntegralImages(energy).grid_sums(lr, lc, win_h, win_w)
    return WindowSums(rows, cols, win_h, win_w, ph, pv, eh, ev)


def _scan_starts(roi: Rect, window_h: int, window_w: int, stride: int):
    if stride < 1:
        raise ValueError("stride must be positive")
    if window_h > roi.height or window_w > roi.width:
        raise ValueError(f"{window_w}x{window_h} window does not fit in {roi.width}x{roi.height} ROI")
    return (np.arange(roi.row_min, roi.row_max - window_h + 2, stride),
            np.arange(roi.col_min, roi.col_max - window_w + 2, stride))


def scan_positions(roi: Rect, window_h: int, window_w: int, stride: int):
    """Row-major top-left corners of every stride-aligned window inside ``roi``."""
    r, c = _scan_starts(roi, window_h, window_w, stride)
    rr, cc = np.meshgrid(r, c, indexing="ij")
    return rr.ravel(), cc.ravel()


def scan_window_sums(img: GrayImage, roi: Rect, window_h: int, window_w: int, stride: int) -> WindowSums:
    roi.check_inside(img.height, img.width)
    r, c = _scan_starts(roi, window_h, window_w, stride)
    return grid_window_sums(img, r, c, window_h, window_w)


def scan_projections(img: GrayImage, roi: Rect, window_h: int, window_w: int,
                     stride: int) -> Iterator[tuple[Rect, tuple[Projection, ...]]]:
    """Yield (window, (P_H, P_V, E_H, E_V)) for every stride-aligned window in ``roi``."""
    batch = scan_window_sums(img, roi, window_h, window_w, stride)
    for k in range(len(batch)):
        rect = Rect.from_size(int(batch.rows[k]), int(batch.cols[k]), window_h, window_w)
        yield rect, batch.projections(k)


def naive_scan_projections(img: GrayImage, roi: Rect, window_h: int, window_w: int,
                           stride: int) -> list[tuple[Rect, tuple[Projection, ...]]]:
    """Reference scan: direct summation inside every window.

    The Sobel energy is still evaluated once over the ROI, as in the fast path;
    only the per-window accumulation differs.
    """
    roi.check_inside(img.height, img.width)
    rows, cols = scan_positions(roi, window_h, window_w, stride)
    gray = img.pixels.astype(np.int64)
    energy = np.zeros_like(gray)
    energy[roi.row_min:roi.row_max + 1, roi.col_min:roi.col_max + 1] = _energy_block(img.pixels, roi)
    out = []
    H, V = Axis.HORIZONTAL, Axis.VERTICAL
    for r, c in zip(rows.tolist(), cols.tolist()):
        rect = Rect.from_size(r, c, window_h, window_w)
        out.append((rect, (_naive(gray, rect, H), _naive(gray, rect, V),
                           _naive(energy, rect, H), _naive(energy, rect, V))))
    return out
