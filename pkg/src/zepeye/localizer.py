"""Per-face eye-center localization.

Face square -> working-size resample -> eye ROIs -> illumination branch ->
darkness pre-filter -> ZEP + MLP scan into a response grid -> connected
regions -> region choice -> center estimate, mapped back to source pixels.
"""

from __future__ import annotations

import math
import time
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .config import Config, Illumination, ModeParams
from .encoder import zep_features
from .imgcore import GrayImage, Point, Rect, resize_bilinear
from .mlp import Head, Mlp
from .projections import grid_window_sums

DEFAULT_CONFIG = Config()
MIN_FACE = 32


class LocalizationError(RuntimeError):
    pass


class DegenerateFace(LocalizationError, ValueError):
    pass


class NoCandidates(LocalizationError):
    """No accepted response survived for one or both eyes."""

    def __init__(self, eyes, partial: dict | None = None):
        eyes = tuple(eyes)
        super().__init__(f"no eye candidates for: {', '.join(eyes)}")
        self.eyes = eyes
        self.partial = partial or {}


@dataclass(frozen=True)
class FaceContext:
    face_rect: Rect
    face: GrayImage
    left_roi: Rect
    right_roi: Rect
    illumination: Illumination
    ratios: tuple[float, float, float]

    def to_source(self, row: float, col: float) -> Point:
        """Working-face pixel coordinates to source-image coordinates."""
        sr = self.face_rect.height / self.face.height
        sc = self.face_rect.width / self.face.width
        return Point(self.face_rect.row_min + (row + 0.5) * sr - 0.5,
                     self.face_rect.col_min + (col + 0.5) * sc - 0.5)

    def to_working(self, p: Point) -> Point:
        sr = self.face.height / self.face_rect.height
        sc = self.face.width / self.face_rect.width
        return Point((p.row - self.face_rect.row_min + 0.5) * sr - 0.5,
                     (p.col - self.face_rect.col_min + 0.5) * sc - 0.5)


def _round(x: float) -> int:
    return int(math.floor(x + 0.5 + 1e-9))


def eye_rois(height: int, width: int, config: Config = DEFAULT_CONFIG) -> tuple[Rect, Rect]:
    r0, r1 = _round(config.roi_row_lo * height), _round(config.roi_row_hi * height) - 1
    left = Rect(r0, r1, _round(config.left_col_lo * width), _round(config.left_col_hi * width) - 1)
    right = Rect(r0, r1, _round(config.right_col_lo * width), _round(config.right_col_hi * width) - 1)
    return left, right


def _halves(face: GrayImage, roi: Rect) -> tuple[float, float]:
    block = face.pixels[roi.row_min:roi.row_max + 1, roi.col_min:roi.col_max + 1].astype(np.float64)
    split = (roi.height + 1) // 2
    return float(block[:split].mean()), float(block[split:].mean()) if roi.height > 1 else float(block.mean())


def illumination_ratios(face: GrayImage, left_roi: Rect, right_roi: Rect) -> tuple[float, float, float]:
    """(L_ratio, R_ratio, H_ratio); an all-black denominator gives inf (or nan for 0/0)."""
    lt, lb = _halves(face, left_roi)
    rt, rb = _halves(face, right_roi)

    def ratio(a, b):
        if b == 0:
            return math.inf if a > 0 else math.nan
        return a / b

    return ratio(lt, lb), ratio(rt, rb), ratio(lt + lb, rt + rb)


def detect_illumination(face: GrayImage, left_roi: Rect, right_roi: Rect,
                        config: Config = DEFAULT_CONFIG) -> Illumination:
    for roi in (left_roi, right_roi):
        roi.check_inside(face.height, face.width)
    lo, hi = config.illum_ratio_lo, config.illum_ratio_hi
    for r in illumination_ratios(face, left_roi, right_roi):
        if not (lo <= r <= hi):  # nan fails too
            return Illumination.LATERAL
    return Illumination.FRONTAL


def make_face_context(img: GrayImage, face_rect: Rect, config: Config = DEFAULT_CONFIG) -> FaceContext:
    if face_rect.height < MIN_FACE or face_rect.width < MIN_FACE:
        raise DegenerateFace(f"face rect {face_rect.width}x{face_rect.height} is below {MIN_FACE}x{MIN_FACE}")
    if not face_rect.inside(img.height, img.width):
        raise DegenerateFace(f"{face_rect} is not inside the {img.width}x{img.height} image")
    n = config.working_size
    face = resize_bilinear(img.crop(face_rect), n, n)
    left, right = eye_rois(n, n, config)
    ratios = illumination_ratios(face, left, right)
    illum = detect_illumination(face, left, right, config)
    return FaceContext(face_rect, face, left, right, illum, ratios)


def darkness_mask(face: GrayImage, roi: Rect, mode: Illumination | float,
                  config: Config = DEFAULT_CONFIG) -> np.ndarray:
    """Pixels dark enough to be pupil candidates.

    Keeps ``v - lo <= (1 - theta) * (hi - lo)`` where ``lo``/``hi`` are the ROI
    extremes; a flat ROI keeps nothing. Measuring from the ROI minimum makes
    the mask independent of additive brightness changes.
    """
    theta = config.mode(mode).darkness_threshold if isinstance(mode, Illumination) else float(mode)
    roi.check_inside(face.height, face.width)
    block = face.pixels[roi.row_min:roi.row_max + 1, roi.col_min:roi.col_max + 1].astype(np.int64)
    lo, hi = int(block.min()), int(block.max())
    if hi == lo:
        return np.zeros(block.shape, dtype=bool)
    return (block - lo) <= (1.0 - theta) * (hi - lo)


@dataclass
class ZepImage:
    """Thresholded MLP responses on the stride grid of candidate centers (NaN = rejected)."""

    origin: tuple[int, int]
    stride: int
    responses: np.ndarray
    mode: Illumination
    raw: np.ndarray | None = None

    @property
    def shape(self):
        return self.responses.shape

    def accepted(self) -> np.ndarray:
        return ~np.isnan(self.responses)

    def to_working(self, grow: float, gcol: float) -> tuple[float, float]:
        return self.origin[0] + self.stride * grow, self.origin[1] + self.stride * gcol


@dataclass
class Region:
    cells: np.ndarray    # (n, 2) grid (row, col)
    weights: np.ndarray  # responses shifted to be positive
    bbox: Rect           # in grid cells
    label: int = 0

    @property
    def size(self) -> int:
        return len(self.cells)

    @property
    def mass(self) -> float:
        return float(self.weights.sum())

    @property
    def centroid_row(self) -> float:
        return float(self.cells[:, 0].mean())


class StageTimer:
    def __init__(self):
        self.seconds: dict[str, float] = {}

    @contextmanager
    def __call__(self, stage: str):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.seconds[stage] = self.seconds.get(stage, 0.0) + time.perf_counter() - t0


@contextmanager
def _no_timer(stage):
    yield


def candidate_grid(roi: Rect, stride: int) -> tuple[np.ndarray, np.ndarray]:
    return (np.arange(roi.row_min, roi.row_max + 1, stride),
            np.arange(roi.col_min, roi.col_max + 1, stride))


def scan(ctx: FaceContext, roi: Rect, model: Mlp, config: Config = DEFAULT_CONFIG,
         timer: StageTimer | None = None) -> ZepImage:
    mode = ctx.illumination
    params = config.mode(mode)
    if model.head is not params.training_scheme:
        raise ValueError(f"{mode.value} illumination needs a {params.training_scheme.value} model, "
                         f"got {model.head.value}")
    if model.n_in != config.feature_length:
        raise ValueError(f"model expects {model.n_in} inputs, features have {config.feature_length}")
    face = ctx.face
    k = config.patch_size
    if face.height < k or face.width < k:
        raise ValueError(f"{k}x{k} window does not fit in the {face.width}x{face.height} face")
    roi.check_inside(face.height, face.width)
    tick = timer or _no_timer
    stride = config.scan_stride
    gr, gc = candidate_grid(roi, stride)
    responses = np.full((len(gr), len(gc)), np.nan)
    raw = np.full_like(responses, np.nan)
    with tick("prefilter"):
        keep = darkness_mask(face, roi, params.darkness_threshold, config)[::stride, ::stride]
    ii, jj = np.nonzero(keep)
    if len(ii):
        half = config.half_patch
        # windows stay inside the face; the reported location is the candidate center
        top = np.clip(gr - half, 0, face.height - k)
        left = np.clip(gc - half, 0, face.width - k)
        with tick("projections"):
            ws = grid_window_sums(face, top, left, k, k).take(ii * len(gc) + jj)
        with tick("encoding"):
            feats = zep_features(ws, config.max_epochs, config.shape_cap, config.epoch_third_param)
        with tick("mlp"):
            y = model.forward_batch(feats)
        raw[ii, jj] = y
        responses[ii, jj] = np.where(y > params.accept_threshold, y, np.nan)
    return ZepImage((roi.row_min, roi.col_min), stride, responses, mode, raw)


_EIGHT = np.ones((3, 3), dtype=bool)


def segment_regions(z: ZepImage, config: Config = DEFAULT_CONFIG) -> list[Region]:
    accepted = z.accepted()
    if not accepted.any():
        return []
    labels, n = ndimage.label(accepted, structure=_EIGHT)
    shift = config.mode(z.mode).response_shift
    regions = []
    for lab, sl in enumerate(ndimage.find_objects(labels), 1):
        local = labels[sl] == lab
        rr, cc = np.nonzero(local)
        rr = rr + sl[0].start
        cc = cc + sl[1].start
        cells = np.stack([rr, cc], axis=1)
        bbox = Rect(int(rr.min()), int(rr.max()), int(cc.min()), int(cc.max()))
        regions.append(Region(cells, z.responses[rr, cc] + shift, bbox, lab))
    return regions


def select_region(regions: list[Region], mode: Illumination | str,
                  config: Config = DEFAULT_CONFIG) -> Region:
    """Frontal: lowest region among those at least ``lower_region_band`` of the largest size.
    Lateral: largest region. Ties go to larger mass, then lower centroid."""
    if not regions:
        raise NoCandidates(["region"])
    rule = config.mode(mode).region_rule if isinstance(mode, Illumination) else mode
    if rule == "largest":
        return max(regions, key=lambda r: (r.size, r.mass, r.centroid_row))
    if rule == "largest-lower":
        biggest = max(r.size for r in regions)
        band = [r for r in regions if r.size >= config.lower_region_band * biggest]
        return max(band, key=lambda r: (r.centroid_row, r.mass, r.size))
    raise ValueError(f"unknown region rule {rule!r}")


def eye_center(region: Region, z: ZepImage, mode: Illumination | str,
               config: Config = DEFAULT_CONFIG) -> Point:
    """Region center in working-face coordinates."""
    rule = config.mode(mode).center_rule if isinstance(mode, Illumination) else mode
    if region.size == 0:
        raise ValueError("empty region")
    if rule == "weighted-centroid":
        w = region.weights
        total = float(w.sum())
        if not total > 0:
            raise LocalizationError("region has no positive weight")
        grow = float(w @ region.cells[:, 0]) / total
        gcol = float(w @ region.cells[:, 1]) / total
    elif rule == "bounding-rect-center":
        grow = (region.bbox.row_min + region.bbox.row_max) / 2
        gcol = (region.bbox.col_min + region.bbox.col_max) / 2
    else:
        raise ValueError(f"unknown center rule {rule!r}")
    return Point(*z.to_working(grow, gcol))


@dataclass(frozen=True)
class EyeResult:
    center: Point          # source coordinates
    working: Point         # working-face coordinates
    confidence: float
    zep: ZepImage = field(repr=False, compare=False)
    region: Region = field(repr=False, compare=False)


@dataclass(frozen=True)
class EyePair:
    left: Point
    right: Point
    left_confidence: float
    right_confidence: float
    illumination: Illumination


def locate_eye(ctx: FaceContext, roi: Rect, model: Mlp, config: Config = DEFAULT_CONFIG,
               timer: StageTimer | None = None) -> EyeResult | None:
    z = scan(ctx, roi, model, config, timer)
    tick = timer or _no_timer
    with tick("postprocess"):
        regions = segment_regions(z, config)
        if not regions:
            return None
        region = select_region(regions, ctx.illumination, config)
        work = eye_center(region, z, ctx.illumination, config)
        conf = float(np.max(region.weights) - config.mode(ctx.illumination).response_shift)
    return EyeResult(ctx.to_source(work.row, work.col), work, conf, z, region)


def model_for(mode: Illumination, frontal_model: Mlp, lateral_model: Mlp) -> Mlp:
    return frontal_model if mode is Illumination.FRONTAL else lateral_model


def localize_context(ctx: FaceContext, frontal_model: Mlp, lateral_model: Mlp,
                     config: Config = DEFAULT_CONFIG, timer: StageTimer | None = None):
    model = model_for(ctx.illumination, frontal_model, lateral_model)
    left = locate_eye(ctx, ctx.left_roi, model, config, timer)
    right = locate_eye(ctx, ctx.right_roi, model, config, timer)
    return left, right


def localize(img: GrayImage, face_rect: Rect, frontal_model: Mlp, lateral_model: Mlp,
             config: Config = DEFAULT_CONFIG, timer: StageTimer | None = None) -> EyePair:
    """Both eye centers in source-image coordinates.

    Raises ``NoCandidates`` naming the eye(s) with no accepted region; any
    eye that did succeed is available in ``exc.partial``.
    """
    tick = timer or _no_timer
    with tick("context"):
        ctx = make_face_context(img, face_rect, config)
    left, right = localize_context(ctx, frontal_model, lateral_model, config, timer)
    missing = [name for name, r in (("left", left), ("right", right)) if r is None]
    if missing:
        partial = {name: r for name, r in (("left", left), ("right", right)) if r is not None}
        partial["illumination"] = ctx.illumination
        raise NoCandidates(missing, partial)
    return EyePair(left.center, right.center, left.confidence, right.confidence, ctx.illumination)


def check_head(model: Mlp, mode: Illumination, config: Config = DEFAULT_CONFIG) -> None:
    want = config.mode(mode).training_scheme
    if model.head is not want:
        raise ValueError(f"{mode.value} model must have a {want.value} head")


__all__ = [
    "FaceContext", "ZepImage", "Region", "EyePair", "EyeResult", "NoCandidates", "DegenerateFace",
    "eye_rois", "make_face_context", "detect_illumination", "illumination_ratios", "darkness_mask",
    "scan", "segment_regions", "select_region", "eye_center", "localize", "locate_eye",
    "localize_context", "StageTimer", "Head", "ModeParams",
]
