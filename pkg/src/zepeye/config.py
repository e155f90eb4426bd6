"""Pipeline parameters with flat ``key = value`` text serialization."""

from __future__ import annotations

import dataclasses
import enum
import os
from dataclasses import dataclass, fields

from .mlp import Head

CONFIG_ENV = "ZEPEYE_CONFIG"


class Illumination(enum.Enum):
    FRONTAL = "frontal"
    LATERAL = "lateral"


@dataclass(frozen=True)
class ModeParams:
    darkness_threshold: float
    training_scheme: Head
    accept_threshold: float
    region_rule: str
    center_rule: str
    training_source: str
    response_shift: float


@dataclass(frozen=True)
class Config:
    # frontal branch
    frontal_darkness_threshold: float = 0.15
    frontal_training_source: str = "georgiatech+authors"
    frontal_training_scheme: str = "regression"
    frontal_accept_threshold: float = 0.0
    frontal_region_rule: str = "largest-lower"
    frontal_center_rule: str = "weighted-centroid"
    # lateral branch
    lateral_darkness_threshold: float = 0.3
    lateral_training_source: str = "yaleb"
    lateral_training_scheme: str = "binary"
    lateral_accept_threshold: float = -0.5
    lateral_region_rule: str = "largest"
    lateral_center_rule: str = "bounding-rect-center"

    working_size: int = 300
    patch_size: int = 71
    scan_stride: int = 2
    roi_row_lo: float = 0.26
    roi_row_hi: float = 0.50
    left_col_lo: float = 0.25
    left_col_hi: float = 0.37
    right_col_lo: float = 0.63
    right_col_hi: float = 0.75
    illum_ratio_lo: float = 0.5
    illum_ratio_hi: float = 1.75
    lower_region_band: float = 0.6

    max_epochs: int = 5
    shape_cap: int = 7
    epoch_third_param: str = "shape"

    hidden_units: int = 0  # 0: half the feature length
    learning_rate: float = 0.01
    train_epochs: int = 50
    regression_zero_distance: float = 8.0

    positive_grid: int = 5
    positive_step: int = 2
    negatives_per_eye: int = 100
    negative_iou_lo: float = 0.5
    positive_iou: float = 0.75
    far_negatives_per_eye: int = 0
    far_reach_rows: int = 40
    far_reach_cols: int = 24

    def mode(self, illumination: Illumination) -> ModeParams:
        p = illumination.value
        get = lambda name: getattr(self, f"{p}_{name}")  # noqa: E731
        return ModeParams(get("darkness_threshold"), Head(get("training_scheme")),
                          get("accept_threshold"), get("region_rule"), get("center_rule"),
                          get("training_source"),
                          0.0 if illumination is Illumination.FRONTAL else 0.5)

    @property
    def feature_length(self) -> int:
        return 4 * self.max_epochs * 3

    @property
    def half_patch(self) -> int:
        return self.patch_size // 2

    def replace(self, **changes) -> "Config":
        return dataclasses.replace(self, **changes)

    def dumps(self) -> str:
        return "".join(f"{_key(f.name)} = {_fmt(getattr(self, f.name))}\n" for f in fields(self))

    @classmethod
    def loads(cls, text: str) -> "Config":
        by_key = {_key(f.name): f for f in fields(cls)}
        values = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"config line {lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in by_key:
                raise ValueError(f"config line {lineno}: unknown key {key!r}")
            f = by_key[key]
            typ = type(getattr(cls(), f.name))
            try:
                values[f.name] = typ(value)
            except ValueError:
                raise ValueError(f"config line {lineno}: bad value {value!r} for {key}") from None
        return cls(**values)

    @classmethod
    def load(cls, path: str | os.PathLike | None = None) -> "Config":
        path = path or os.environ.get(CONFIG_ENV)
        if not path:
            return cls()
        with open(path) as f:
            return cls.loads(f.read())


def _key(name: str) -> str:
    for prefix in ("frontal_", "lateral_"):
        if name.startswith(prefix):
            return prefix[:-1] + "." + name[len(prefix):]
    return name


def _fmt(v) -> str:
    if isinstance(v, float):
        return format(v, "g")
    return str(v)
