"""Zero-crossing epoch encoding of projections into the fixed-width ZEP feature.

A projection is mean-centred and scaled into [-128, 127], cut into epochs
(maximal runs of same-sign samples) and every epoch is summarised by its
duration, signed amplitude and shape (number of local extremes). The four
encoded projections of a window, truncated or zero-padded to ``max_epochs``
each, form the feature.

``extract_epochs`` is the readable single-pass reference; ``encode_batch``
computes the same parameters for many signals at once and is what the
scanner uses.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .projections import Projection, WindowSums

DEFAULT_MAX_EPOCHS = 5
DEFAULT_SHAPE_CAP = 7
AMPLITUDE_SCALE = 127.0
THIRD_PARAMS = ("shape", "mode_range")


@dataclass(frozen=True)
class Epoch:
    duration: int
    amplitude: float
    shape: int
    mode_range: float = 0.0

    def as_tuple(self):
        return (self.duration, self.amplitude, self.shape)


@dataclass(frozen=True, eq=False)
class NormalizedProjection:
    values: np.ndarray

    def __len__(self):
        return len(self.values)

    def __eq__(self, other):
        if not isinstance(other, NormalizedProjection):
            return NotImplemented
        return np.array_equal(self.values, other.values)


def normalize_batch(sums: np.ndarray) -> np.ndarray:
    """Mean-centre each row and scale it symmetrically so max |value| is 127.

    Integer input is centred exactly: with row length ``n`` the centred
    numerators ``n*s - sum(s)`` are integers, so adding a constant to every
    pixel (or duplicating samples) leaves the output bit-identical. Constant
    rows map to zeros.
    """
    s = np.asarray(sums)
    if s.ndim != 2:
        raise ValueError("expected a 2D batch")
    n = s.shape[1]
    if n == 0:
        raise ValueError("empty projection")
    if np.issubdtype(s.dtype, np.integer):
        centred = n * s.astype(np.int64) - s.sum(axis=1, dtype=np.int64)[:, None]
        peak = np.abs(centred).max(axis=1)
        safe = np.where(peak > 0, peak, 1).astype(np.float64)
        out = (AMPLITUDE_SCALE * centred).astype(np.float64) / safe[:, None]
    else:
        centred = s - s.mean(axis=1, keepdims=True)
        peak = np.abs(centred).max(axis=1)
        safe = np.where(peak > 0, peak, 1.0)
        out = AMPLITUDE_SCALE * centred / safe[:, None]
    out[peak == 0] = 0.0
    return out


def normalize_projection(p: Projection | Sequence[float]) -> NormalizedProjection:
    if isinstance(p, Projection):
        data = np.asarray(p.sums)[None, :]
    else:
        data = np.asarray(p, dtype=np.float64)[None, :]
    if data.shape[1] == 0:
        raise ValueError("empty projection")
    return NormalizedProjection(normalize_batch(data)[0])


def extract_epochs(signal, stats: dict | None = None) -> list[Epoch]:
    """Split ``signal`` into epochs in a single left-to-right pass.

    Exact zeros end the current epoch and belong to none. Extremes are strict
    local maxima/minima against the nearest differing neighbours, a plateau
    counting once at its first sample; the first and last samples of the
    signal have no outer neighbour and never count. An epoch always reports
    at least one extreme (its amplitude sample).

    If ``stats`` is given, ``stats["visits"]`` receives the number of samples
    examined.
    """
    if isinstance(signal, NormalizedProjection):
        signal = signal.values
    epochs: list[list] = []  # [duration, amplitude, shape, sign, mode_lo, mode_hi]
    cur = None
    prev_sign = 0
    plat_val = None
    plat_epoch = None
    into = 0
    visits = 0
    for k, v in enumerate(np.asarray(signal, dtype=np.float64).tolist()):
        visits += 1
        s = (v > 0) - (v < 0)
        if s == 0:
            cur = None
        elif cur is None or s != prev_sign:
            epochs.append([1, v, 0, s, None, None])
            cur = len(epochs) - 1
        else:
            e = epochs[cur]
            e[0] += 1
            if abs(v) > abs(e[1]):
                e[1] = v
        prev_sign = s

        if plat_val is None:
            plat_val, plat_epoch, into = v, cur, 0
        elif v != plat_val:
            leaving = 1 if v > plat_val else -1
            if into * leaving < 0 and plat_epoch is not None:
                e = epochs[plat_epoch]
                e[2] += 1
                if into * e[3] > 0:  # a peak of |signal|: a mode of the epoch
                    m = abs(plat_val)
                    e[4] = m if e[4] is None else min(e[4], m)
                    e[5] = m if e[5] is None else max(e[5], m)
            into = leaving
            plat_val, plat_epoch = v, cur
    if stats is not None:
        stats["visits"] = visits
    out = []
    for dur, amp, shape, _, lo, hi in epochs:
        mrange = 0.0 if lo is None else (hi - lo)
        out.append(Epoch(dur, amp, max(shape, 1), mrange))
    return out


def normalize_epoch_params(epochs: Sequence[Epoch], signal_len: int,
                           shape_cap: int = DEFAULT_SHAPE_CAP,
                           third: str = "shape") -> list[tuple[float, float, float]]:
    if signal_len < 1:
        raise ValueError("signal_len must be at least 1")
    out = []
    for e in epochs:
        if third == "shape":
            last = min(e.shape, shape_cap) / shape_cap
        else:
            last = e.mode_range / 128.0
        out.append((e.duration / signal_len, e.amplitude / 128.0, last))
    return out


def encode_projection(p: Projection | Sequence[float], max_epochs: int = DEFAULT_MAX_EPOCHS,
                      shape_cap: int = DEFAULT_SHAPE_CAP, third: str = "shape") -> np.ndarray:
    """Normalized epoch triples of one projection, truncated/zero-padded to ``max_epochs``."""
    norm = normalize_projection(p)
    epochs = extract_epochs(norm.values)[:max_epochs]
    out = np.zeros((max_epochs, 3))
    params = normalize_epoch_params(epochs, len(norm), shape_cap, third)
    if params:
        out[:len(params)] = params
    return out.ravel()


def assemble_zep(ph, pv, eh, ev, max_epochs: int = DEFAULT_MAX_EPOCHS,
                 shape_cap: int = DEFAULT_SHAPE_CAP, third: str = "shape") -> np.ndarray:
    """ZEP feature of one window: 4 * max_epochs * 3 values in [-1, 1]."""
    parts = []
    for p in (ph, pv, eh, ev):
        if len(p) == 0:
            raise ValueError("empty projection")
        parts.append(encode_projection(p, max_epochs, shape_cap, third))
    return np.concatenate(parts)


def _extreme_flags(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Boolean extreme flags and the incoming direction at each sample."""
    B, n = x.shape
    ext = np.zeros((B, n), dtype=bool)
    into = np.zeros((B, n), dtype=np.int8)
    if n < 3:
        return ext, into
    d = np.sign(np.diff(x, axis=1)).astype(np.int8)
    # index of the first non-zero difference at or after each position
    pos = np.where(d != 0, np.arange(n - 1), n - 1)
    nxt = np.minimum.accumulate(pos[:, ::-1], axis=1)[:, ::-1]
    dpad = np.concatenate([d, np.zeros((B, 1), dtype=np.int8)], axis=1)
    leaving = np.take_along_axis(dpad, nxt[:, 1:n - 1], axis=1)
    left = d[:, :n - 2]
    ext[:, 1:n - 1] = (left * leaving) < 0
    into[:, 1:n - 1] = left
    return ext, into


def encode_batch(x: np.ndarray, max_epochs: int = DEFAULT_MAX_EPOCHS,
                 shape_cap: int = DEFAULT_SHAPE_CAP, third: str = "shape") -> np.ndarray:
    """Vectorised ``extract_epochs`` + ``normalize_epoch_params`` over rows of ``x``.

    Returns (B, max_epochs * 3); rows of ``x`` must already be normalized.
    """
    if third not in THIRD_PARAMS:
        raise ValueError(f"unknown epoch parameter {third!r}")
    x = np.asarray(x, dtype=np.float64)
    B, n = x.shape
    E = max_epochs
    out = np.zeros((B, E, 3))
    if B == 0 or n == 0:
        return out.reshape(B, 3 * E)
    sgn = np.sign(x).astype(np.int8)
    start = sgn != 0
    start[:, 1:] &= sgn[:, 1:] != sgn[:, :-1]
    eid = np.cumsum(start, axis=1) - 1
    keep = (sgn != 0) & (eid < E)
    slot = np.arange(B)[:, None] * E + eid

    dur = np.bincount(slot[keep], minlength=B * E)[:B * E]

    amp = np.zeros(B * E)
    flat_start = np.flatnonzero(start)
    if flat_start.size:
        peak = np.maximum.reduceat(np.abs(x).ravel(), flat_start)
        first = start.ravel()[flat_start] & keep.ravel()[flat_start]
        slots = slot.ravel()[flat_start][first]
        amp[slots] = peak[first] * sgn.ravel()[flat_start][first]

    ext, into = _extreme_flags(x)
    hits = keep & ext
    if third == "shape":
        shape = np.bincount(slot[hits], minlength=B * E)[:B * E]
        shape = np.where(dur > 0, np.maximum(shape, 1), 0)
        last = np.minimum(shape, shape_cap) / shape_cap
    else:
        modes = hits & (into * sgn > 0)
        mslot = slot[modes]
        mval = np.abs(x[modes])
        hi = np.full(B * E, -np.inf)
        lo = np.full(B * E, np.inf)
        np.maximum.at(hi, mslot, mval)
        np.minimum.at(lo, mslot, mval)
        last = np.where(np.isfinite(hi), hi - lo, 0.0) / 128.0

    out[..., 0] = (dur / n).reshape(B, E)
    out[..., 1] = (amp / 128.0).reshape(B, E)
    out[..., 2] = last.reshape(B, E)
    return out.reshape(B, 3 * E)


def zep_features(ws: WindowSums, max_epochs: int = DEFAULT_MAX_EPOCHS,
                 shape_cap: int = DEFAULT_SHAPE_CAP, third: str = "shape") -> np.ndarray:
    """ZEP features of every window in a batch, shape (n, 12 * max_epochs)."""
    parts = [encode_batch(normalize_batch(s), max_epochs, shape_cap, third)
             for s in (ws.ph, ws.pv, ws.eh, ws.ev)]
    return np.concatenate(parts, axis=1)


def epoch_overflow_rate(ws: WindowSums, max_epochs: int = DEFAULT_MAX_EPOCHS) -> float:
    """Fraction of projections in the batch that produce more than ``max_epochs`` epochs."""
    total = over = 0
    for s in (ws.ph, ws.pv, ws.eh, ws.ev):
        if len(s) == 0:
            continue
        sgn = np.sign(normalize_batch(s))
        start = sgn != 0
        start[:, 1:] &= sgn[:, 1:] != sgn[:, :-1]
        over += int((start.sum(axis=1) > max_epochs).sum())
        total += len(s)
    return over / total if total else 0.0
