"""Annotations, training-patch extraction and the synthetic face corpus."""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .config import Config, Illumination
from .encoder import zep_features
from .imgcore import GrayImage, Point, Rect
from .localizer import DEFAULT_CONFIG, make_face_context
from .mlp import Head, TrainingSet
from .projections import window_sums

ANNOTATION_HEADER = ["id", "face_r0", "face_r1", "face_c0", "face_c1",
                     "le_row", "le_col", "re_row", "re_col"]


class AnnotationError(ValueError):
    def __init__(self, row: int, message: str):
        super().__init__(f"row {row}: {message}")
        self.row = row


class EyeNearBorder(ValueError):
    pass


@dataclass(frozen=True)
class Annotation:
    image_id: str
    face_rect: Rect
    left_eye: Point
    right_eye: Point

    def __post_init__(self):
        for name, p in (("left", self.left_eye), ("right", self.right_eye)):
            if not self.face_rect.contains(p.row, p.col):
                raise ValueError(f"{name} eye {p} lies outside face {self.face_rect}")

    def eye(self, side: str) -> Point:
        return self.left_eye if side == "left" else self.right_eye


def load_annotations(path: str | os.PathLike) -> list[Annotation]:
    out = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None:
            return out
        if [h.strip() for h in header] != ANNOTATION_HEADER:
            raise AnnotationError(1, f"expected header {','.join(ANNOTATION_HEADER)}")
        for lineno, row in enumerate(reader, 2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(ANNOTATION_HEADER):
                raise AnnotationError(lineno, f"expected {len(ANNOTATION_HEADER)} fields, got {len(row)}")
            try:
                r0, r1, c0, c1 = (int(v) for v in row[1:5])
                le = Point(float(row[5]), float(row[6]))
                re = Point(float(row[7]), float(row[8]))
                out.append(Annotation(row[0].strip(), Rect(r0, r1, c0, c1), le, re))
            except ValueError as exc:
                raise AnnotationError(lineno, str(exc)) from None
    return out


def save_annotations(anns, path: str | os.PathLike) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(ANNOTATION_HEADER)
        for a in anns:
            r = a.face_rect
            w.writerow([a.image_id, r.row_min, r.row_max, r.col_min, r.col_max,
                        repr(a.left_eye.row), repr(a.left_eye.col),
                        repr(a.right_eye.row), repr(a.right_eye.col)])


# -- training patches -------------------------------------------------------

def patch_iou(drow: int, dcol: int, size: int) -> float:
    """Intersection over union of two size x size squares offset by (drow, dcol)."""
    inter = max(0, size - abs(drow)) * max(0, size - abs(dcol))
    return inter / (2 * size * size - inter)


@lru_cache(maxsize=None)
def negative_offsets(size: int, lo: float, hi: float) -> tuple[tuple[int, int], ...]:
    """All integer offsets whose patch IoU with the centered patch lies in (lo, hi]."""
    out = []
    for dr in range(-size + 1, size):
        for dc in range(-size + 1, size):
            iou = patch_iou(dr, dc, size)
            if lo < iou <= hi:
                out.append((dr, dc))
    return tuple(out)


@lru_cache(maxsize=None)
def far_offsets(size: int, iou_max: float, reach_rows: int, reach_cols: int) -> tuple[tuple[int, int], ...]:
    """Offsets inside the scan reach whose patches overlap the centered one by at most ``iou_max``."""
    return tuple((dr, dc) for dr in range(-reach_rows, reach_rows + 1)
                 for dc in range(-reach_cols, reach_cols + 1) if patch_iou(dr, dc, size) <= iou_max)


def positive_offsets(grid: int, step: int) -> list[tuple[int, int]]:
    half = grid // 2
    return [(step * a, step * b) for a in range(-half, half + 1) for b in range(-half, half + 1)]


def regression_target(distance, zero_distance: float):
    """1 at the eye center, falling linearly with distance, 0 at ``zero_distance``, floored at -1."""
    return np.maximum(-1.0, 1.0 - np.asarray(distance, dtype=np.float64) / zero_distance)


@dataclass(frozen=True)
class PatchSample:
    feature: np.ndarray = field(repr=False)
    target: float
    image_id: str
    eye: str
    offset: tuple[int, int]
    iou: float


def extract_patches(img: GrayImage, ann: Annotation, head: Head, seed: int,
                    config: Config = DEFAULT_CONFIG, ctx=None) -> list[PatchSample]:
    """Positives (5x5 grid at the scan stride) and seeded band negatives for both eyes."""
    ctx = ctx or make_face_context(img, ann.face_rect, config)
    face = ctx.face
    k, half = config.patch_size, config.half_patch
    pos = positive_offsets(config.positive_grid, config.positive_step)
    band = negative_offsets(k, config.negative_iou_lo, config.positive_iou)
    if len(band) < config.negatives_per_eye:
        raise ValueError("overlap band holds fewer offsets than requested negatives")
    reach = max(max(abs(a), abs(b)) for a, b in band + tuple(pos))
    rng = np.random.default_rng(seed)
    samples = []
    for side in ("left", "right"):
        true = ctx.to_working(ann.eye(side))
        cr, cc = int(round(true.row)), int(round(true.col))
        if (cr - half - reach < 0 or cc - half - reach < 0
                or cr + half + reach >= face.height or cc + half + reach >= face.width):
            raise EyeNearBorder(f"{ann.image_id} {side} eye at ({cr}, {cc}) is too close to the face border")
        picks = rng.choice(len(band), size=config.negatives_per_eye, replace=False)
        offsets = pos + [band[i] for i in sorted(picks)]
        if config.far_negatives_per_eye:
            far = [(a, b) for a, b in far_offsets(k, config.negative_iou_lo, config.far_reach_rows,
                                                  config.far_reach_cols)
                   if half <= cr + a < face.height - half and half <= cc + b < face.width - half]
            n_far = min(config.far_negatives_per_eye, len(far))
            offsets += [far[i] for i in sorted(rng.choice(len(far), size=n_far, replace=False))]
        centers = np.array([(cr + a, cc + b) for a, b in offsets])
        ws = window_sums(face, centers[:, 0] - half, centers[:, 1] - half, k, k)
        feats = zep_features(ws, config.max_epochs, config.shape_cap, config.epoch_third_param)
        dist = np.hypot(centers[:, 0] - true.row, centers[:, 1] - true.col)
        if head is Head.BINARY:
            targets = np.array([1.0] * len(pos) + [-1.0] * (len(offsets) - len(pos)))
        else:
            targets = regression_target(dist, config.regression_zero_distance)
        for i, off in enumerate(offsets):
            samples.append(PatchSample(feats[i], float(targets[i]), ann.image_id, side, off,
                                       patch_iou(off[0], off[1], k)))
    return samples


def to_training_set(samples, head: Head) -> TrainingSet:
    if not samples:
        return TrainingSet(np.zeros((0, 0)), np.zeros(0), head)
    return TrainingSet(np.stack([s.feature for s in samples]), np.array([s.target for s in samples]), head)


# -- synthetic faces -----------------------------------------------------------

@dataclass(frozen=True)
class SyntheticEyeSpec:
    """One eye of a synthetic face. Face-wide settings (skin, noise, shading)
    are read from the first eye of the pair."""

    pupil_row: float = 114.0
    pupil_col: float = 93.0
    pupil_radius: float = 4.0
    iris_radius: float = 10.0
    iris_level: int = 80
    pupil_level: int = 25
    sclera_level: int = 215
    skin_level: int = 180
    eye_half_width: float = 17.0
    eye_half_height: float = 10.0
    gaze_offset: float = 0.0           # iris/pupil column offset inside the opening
    brow_offset: float = 26.0          # brow center above the pupil
    brow_thickness: float = 7.0
    brow_half_length: float = 20.0
    brow_level: int = 90
    openness: float = 1.0
    noise_sigma: float = 0.0
    shading_strength: float = 0.0     # depth of the shadowed side in [0, 1)
    shading_angle: float = 0.0        # shadow direction in radians, 0 = darker to the right

    def __post_init__(self):
        if not 0 < self.pupil_radius < self.iris_radius:
            raise ValueError("need 0 < pupil radius < iris radius")
        for name in ("iris_level", "pupil_level", "sclera_level", "skin_level", "brow_level"):
            if not 0 <= getattr(self, name) <= 255:
                raise ValueError(f"{name} must lie in [0, 255]")
        if not 0.0 <= self.openness <= 1.0:
            raise ValueError("openness must lie in [0, 1]")
        if not 0.0 <= self.shading_strength < 1.0:
            raise ValueError("shading strength must lie in [0, 1)")
        if self.noise_sigma < 0:
            raise ValueError("noise sigma must be non-negative")


FACE_SIZE = 300
_SS = 4  # supersampling factor for shape edges


def _render_eye(canvas: np.ndarray, spec: SyntheticEyeSpec) -> None:
    """Paint brow, eye opening, iris, pupil and lid line into ``canvas`` (float, in place)."""
    h, w = canvas.shape
    box = Rect(max(0, int(spec.pupil_row - spec.brow_offset - 20)), min(h - 1, int(spec.pupil_row + 25)),
               max(0, int(spec.pupil_col - 35)), min(w - 1, int(spec.pupil_col + 35)))
    ys = box.row_min + (np.arange(box.height * _SS) + 0.5) / _SS - 0.5
    xs = box.col_min + (np.arange(box.width * _SS) + 0.5) / _SS - 0.5
    Y, X = np.meshgrid(ys, xs, indexing="ij")
    hi = np.repeat(np.repeat(canvas[box.row_min:box.row_max + 1, box.col_min:box.col_max + 1], _SS, 0), _SS, 1)

    ey, ex = spec.pupil_row, spec.pupil_col - spec.gaze_offset  # opening center
    # brow: slightly arched bar
    by = ey - spec.brow_offset + 0.004 * (X - ex) ** 2
    brow = (np.abs(Y - by) <= spec.brow_thickness / 2) & (np.abs(X - ex) <= spec.brow_half_length)
    hi[brow] = spec.brow_level

    b = spec.eye_half_height * spec.openness
    u = (X - ex) / spec.eye_half_width
    if b >= 1.0:
        opening = u * u + ((Y - ey) / b) ** 2 <= 1.0
        hi[opening] = spec.sclera_level
        iris = opening & ((Y - spec.pupil_row) ** 2 + (X - spec.pupil_col) ** 2 <= spec.iris_radius ** 2)
        hi[iris] = spec.iris_level
        pupil = opening & ((Y - spec.pupil_row) ** 2 + (X - spec.pupil_col) ** 2 <= spec.pupil_radius ** 2)
        hi[pupil] = spec.pupil_level
        upper = ey - b * np.sqrt(np.clip(1.0 - u * u, 0.0, None))
        lid = (np.abs(u) <= 1.0) & (Y <= upper + 0.5) & (Y >= upper - 1.5)
    else:
        lid = (np.abs(u) <= 1.0) & (np.abs(Y - ey) <= 1.0)
    hi[lid] = min(spec.brow_level, spec.iris_level)
    down = hi.reshape(box.height, _SS, box.width, _SS).mean(axis=(1, 3))
    canvas[box.row_min:box.row_max + 1, box.col_min:box.col_max + 1] = down


def synth_face(specs: tuple[SyntheticEyeSpec, SyntheticEyeSpec], seed: int,
               image_id: str = "synth") -> tuple[GrayImage, Annotation]:
    left, right = specs
    size = FACE_SIZE
    for s in specs:
        if not (45 <= s.pupil_row <= size * 0.5 and 0.2 * size <= s.pupil_col <= 0.8 * size):
            raise ValueError(f"eye at ({s.pupil_row}, {s.pupil_col}) is outside the eye region band")
    rng = np.random.default_rng(seed)
    canvas = np.full((size, size), float(left.skin_level))
    # gentle vertical skin gradient so the face is not perfectly flat
    canvas += np.linspace(-6.0, 6.0, size)[:, None]
    for s in specs:
        _render_eye(canvas, s)
    if left.shading_strength > 0:
        r, c = np.mgrid[0:size, 0:size] / (size - 1)
        t = (c - 0.5) * math.cos(left.shading_angle) + (r - 0.5) * math.sin(left.shading_angle)
        # soft shadow edge through the face center
        canvas *= 1.0 - left.shading_strength / (1.0 + np.exp(-t / 0.08))
    if left.noise_sigma > 0:
        canvas += rng.normal(0.0, left.noise_sigma, canvas.shape)
    img = GrayImage(np.clip(np.rint(canvas), 0, 255).astype(np.uint8))
    ann = Annotation(image_id, Rect(0, size - 1, 0, size - 1),
                     Point(left.pupil_row, left.pupil_col), Point(right.pupil_row, right.pupil_col))
    return img, ann


@dataclass(frozen=True)
class VariationRanges:
    eye_row: tuple[float, float] = (106.0, 122.0)
    left_col: tuple[float, float] = (88.0, 98.0)
    right_col: tuple[float, float] = (202.0, 212.0)
    pupil_radius: tuple[float, float] = (3.0, 5.0)
    iris_radius: tuple[float, float] = (8.5, 11.5)
    iris_level: tuple[int, int] = (45, 100)
    pupil_level: tuple[int, int] = (5, 40)
    sclera_delta: tuple[int, int] = (-5, 35)     # relative to skin
    skin_level: tuple[int, int] = (150, 200)
    eye_half_width: tuple[float, float] = (14.0, 18.0)
    eye_half_height: tuple[float, float] = (8.0, 11.0)
    gaze_offset: tuple[float, float] = (-3.0, 3.0)
    brow_offset: tuple[float, float] = (22.0, 30.0)
    brow_thickness: tuple[float, float] = (5.0, 9.0)
    brow_level: tuple[int, int] = (60, 120)
    openness: tuple[float, float] = (0.45, 1.0)
    noise_sigma: tuple[float, float] = (0.0, 10.0)
    shading_strength: tuple[float, float] = (0.0, 0.85)


LATERAL_RANGES = VariationRanges(shading_strength=(0.75, 0.9))
FRONTAL_RANGES = VariationRanges(shading_strength=(0.0, 0.3))


def sample_specs(rng: np.random.Generator, ranges: VariationRanges = VariationRanges()):
    def U(lohi):
        lo, hi = lohi
        if isinstance(lo, int) and isinstance(hi, int):
            return int(rng.integers(lo, hi + 1))
        return float(rng.uniform(lo, hi))

    skin = U(ranges.skin_level)
    shared = dict(skin_level=skin, noise_sigma=U(ranges.noise_sigma),
                  shading_strength=U(ranges.shading_strength),
                  shading_angle=float(rng.uniform(-math.pi, math.pi)),
                  brow_offset=U(ranges.brow_offset), openness=U(ranges.openness))
    row = U(ranges.eye_row)
    specs = []
    for col_range in (ranges.left_col, ranges.right_col):
        iris = U(ranges.iris_radius)
        specs.append(SyntheticEyeSpec(
            pupil_row=row + float(rng.uniform(-1.5, 1.5)), pupil_col=U(col_range),
            pupil_radius=min(U(ranges.pupil_radius), iris - 2.0), iris_radius=iris,
            iris_level=U(ranges.iris_level), pupil_level=U(ranges.pupil_level),
            sclera_level=int(np.clip(skin + U(ranges.sclera_delta), 0, 255)),
            eye_half_width=U(ranges.eye_half_width), eye_half_height=U(ranges.eye_half_height),
            gaze_offset=U(ranges.gaze_offset), brow_thickness=U(ranges.brow_thickness),
            brow_half_length=U(ranges.eye_half_width) + 3.0, brow_level=U(ranges.brow_level),
            **shared))
    return tuple(specs)


def face_seed(seed: int, stream: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, stream, index]).generate_state(1)[0])


def random_face(seed: int, ranges: VariationRanges = VariationRanges(), image_id: str = "synth"):
    rng = np.random.default_rng(seed)
    specs = sample_specs(rng, ranges)
    return synth_face(specs, int(rng.integers(2**31)), image_id)


@dataclass
class Corpus:
    train: TrainingSet
    val: TrainingSet
    train_ids: list[str]
    val_ids: list[str]
    faces: dict[str, tuple[GrayImage, Annotation]] = field(default_factory=dict, repr=False)


def synth_faces(n_faces: int, ranges: VariationRanges = VariationRanges(), seed: int = 0,
                stream: int = 0, illumination: Illumination | None = None,
                config: Config = DEFAULT_CONFIG, prefix: str = "f"):
    """Deterministic synthetic faces; with ``illumination`` set, faces detected
    as the other mode are skipped (and replaced by later draws)."""
    out = []
    index = 0
    while len(out) < n_faces:
        fid = f"{prefix}{stream}_{index:05d}"
        img, ann = random_face(face_seed(seed, stream, index), ranges, fid)
        index += 1
        if illumination is not None:
            ctx = make_face_context(img, ann.face_rect, config)
            if ctx.illumination is not illumination:
                continue
        out.append((img, ann))
    return out


DEFAULT_TRAIN_FACES = 8   # 2,000 samples
DEFAULT_VAL_FACES = 80    # 20,000 samples


def build_corpus(n_faces: int = DEFAULT_TRAIN_FACES, ranges: VariationRanges = VariationRanges(),
                 seed: int = 0, head: Head = Head.BINARY, n_val_faces: int = 0,
                 illumination: Illumination | None = None, config: Config = DEFAULT_CONFIG,
                 keep_faces: bool = False) -> Corpus:
    if n_faces < 1:
        raise ValueError("n_faces must be at least 1")

    def collect(faces, stream):
        samples = []
        for i, (img, ann) in enumerate(faces):
            samples.extend(extract_patches(img, ann, head, face_seed(seed, stream + 100, i), config))
        return samples

    train_faces = synth_faces(n_faces, ranges, seed, 0, illumination, config)
    val_faces = synth_faces(n_val_faces, ranges, seed, 1, illumination, config) if n_val_faces else []
    corpus = Corpus(to_training_set(collect(train_faces, 0), head),
                    to_training_set(collect(val_faces, 1), head),
                    [a.image_id for _, a in train_faces], [a.image_id for _, a in val_faces])
    if keep_faces:
        corpus.faces = {a.image_id: (img, a) for img, a in train_faces + val_faces}
    return corpus


__all__ = [
    "Annotation", "AnnotationError", "EyeNearBorder", "PatchSample", "SyntheticEyeSpec",
    "VariationRanges", "Corpus", "load_annotations", "save_annotations", "extract_patches",
    "synth_face", "random_face", "synth_faces", "build_corpus", "patch_iou", "negative_offsets",
    "positive_offsets", "far_offsets", "regression_target", "to_training_set", "replace",
    "FRONTAL_RANGES", "LATERAL_RANGES", "DEFAULT_TRAIN_FACES", "DEFAULT_VAL_FACES", "face_seed",
    "sample_specs",
]
