"""Normalized worst-eye error, accuracy curves, noise sweeps and throughput score."""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .dataset import Annotation
from .imgcore import GrayImage, Point, add_gaussian_noise
from .localizer import EyePair, NoCandidates

STANDARD_THRESHOLDS = (0.05, 0.1, 0.25)


@dataclass(frozen=True)
class LocalizationError:
    eps_left: float
    eps_right: float
    d_eye: float

    def __post_init__(self):
        if not self.d_eye > 0:
            raise ValueError("inter-ocular distance must be positive")

    @property
    def eps(self) -> float:
        return max(self.eps_left, self.eps_right) / self.d_eye

    @property
    def best(self) -> float:
        return min(self.eps_left, self.eps_right) / self.d_eye

    @property
    def average(self) -> float:
        return (self.eps_left + self.eps_right) / (2 * self.d_eye)


def stringent_error(found: EyePair | tuple[Point, Point], truth: Annotation | tuple[Point, Point]
                    ) -> LocalizationError:
    left, right = (found.left, found.right) if isinstance(found, EyePair) else found
    tl, tr = (truth.left_eye, truth.right_eye) if isinstance(truth, Annotation) else truth
    d = tl.distance(tr)
    if d == 0:
        raise ValueError("ground-truth eyes coincide")
    return LocalizationError(left.distance(tl), right.distance(tr), d)


# Unlocalized faces count as failures at every threshold.
FAILED = LocalizationError(math.inf, math.inf, 1.0)


@dataclass(frozen=True)
class AccuracyCurve:
    thresholds: np.ndarray
    min_curve: np.ndarray  # worst eye
    avg_curve: np.ndarray
    max_curve: np.ndarray  # best eye

    def at(self, threshold: float) -> float:
        """Worst-eye accuracy at a threshold on the curve."""
        hit = np.flatnonzero(np.isclose(self.thresholds, threshold))
        if not hit.size:
            raise KeyError(threshold)
        return float(self.min_curve[hit[0]])


def accuracy_curve(errors: Sequence[LocalizationError],
                   thresholds: Iterable[float] = STANDARD_THRESHOLDS) -> AccuracyCurve:
    """Fraction of faces with error strictly below each threshold."""
    if not len(errors):
        raise ValueError("no errors to summarize")
    th = np.asarray(sorted(thresholds), dtype=np.float64)
    worst = np.array([e.eps for e in errors])
    avg = np.array([e.average for e in errors])
    best = np.array([e.best for e in errors])

    def frac(v):
        return (v[None, :] < th[:, None]).mean(axis=1)

    return AccuracyCurve(th, frac(worst), frac(avg), frac(best))


Localizer = Callable[[GrayImage, Annotation], EyePair]


def evaluate(faces: Iterable[tuple[GrayImage, Annotation]], localize_fn: Localizer
             ) -> list[tuple[str, LocalizationError | None]]:
    """Per-face errors; ``None`` where no candidate region was found."""
    out = []
    for img, ann in faces:
        try:
            pair = localize_fn(img, ann)
        except NoCandidates:
            out.append((ann.image_id, None))
            continue
        out.append((ann.image_id, stringent_error(pair, ann)))
    return out


def worst_eye_accuracy(results, threshold: float = 0.1) -> float:
    errs = [e if e is not None else FAILED for _, e in results]
    return float(np.mean([e.eps < threshold for e in errs]))


def noise_sweep(faces: Sequence[tuple[GrayImage, Annotation]], localize_fn: Localizer,
                sigmas: Sequence[float], seed: int = 0, threshold: float = 0.1
                ) -> list[tuple[float, float]]:
    """Worst-eye accuracy at ``threshold`` for each noise level.

    Every face gets its own noise seed derived from ``seed`` and its index, so
    a level's result does not depend on which other levels are swept.
    """
    rows = []
    for sigma in sigmas:
        noisy = [(add_gaussian_noise(img, sigma, [seed, i]) if sigma > 0 else img, ann)
                 for i, (img, ann) in enumerate(faces)]
        rows.append((float(sigma), worst_eye_accuracy(evaluate(noisy, localize_fn), threshold)))
    return rows


def tp_score(fps: float, frame_w: float, frame_h: float, cpu_score: float) -> float:
    """Frames per second times the smaller frame side, per unit of CPU benchmark score."""
    for name, v in (("fps", fps), ("frame_w", frame_w), ("frame_h", frame_h),
                    ("cpu_score", cpu_score)):
        if not v > 0:
            raise ValueError(f"{name} must be positive, got {v}")
    return fps * min(frame_w, frame_h) / cpu_score


def _fmt(v: float) -> str:
    return "" if v is None or math.isinf(v) else f"{v:.6f}"


def write_errors_csv(results, path: str | os.PathLike) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["id", "eps_l", "eps_r", "eps"])
        for image_id, e in results:
            if e is None:
                w.writerow([image_id, "", "", ""])
            else:
                w.writerow([image_id, _fmt(e.eps_left / e.d_eye), _fmt(e.eps_right / e.d_eye),
                            _fmt(e.eps)])


def write_curve_csv(curve: AccuracyCurve, path: str | os.PathLike) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["threshold", "min", "avg", "max"])
        for row in zip(curve.thresholds, curve.min_curve, curve.avg_curve, curve.max_curve):
            w.writerow([_fmt(v) for v in row])


def format_accuracy_table(curve: AccuracyCurve) -> str:
    lines = [f"{'threshold':>9}  {'worst':>6}  {'average':>7}  {'best':>6}"]
    for t, lo, avg, hi in zip(curve.thresholds, curve.min_curve, curve.avg_curve, curve.max_curve):
        lines.append(f"{t:>9.2f}  {100 * lo:>5.2f}%  {100 * avg:>6.2f}%  {100 * hi:>5.2f}%")
    return "\n".join(lines)


__all__ = [
    "LocalizationError", "AccuracyCurve", "stringent_error", "accuracy_curve", "evaluate",
    "worst_eye_accuracy", "noise_sweep", "tp_score", "write_errors_csv", "write_curve_csv",
    "format_accuracy_table", "STANDARD_THRESHOLDS", "FAILED",
]
