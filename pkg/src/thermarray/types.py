"""Shared domain types for the sensing pipeline.

All types here are immutable value objects. Constructors validate their
invariants, so no partially-valid instance is ever observable.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError


class Subpage(enum.Enum):
    """Readout half of a chessboard-interleaved sensor frame."""

    A = "A"
    B = "B"
    FULL = "full"


@dataclass(frozen=True)
class SensorSpec:
    """Static geometry and noise figure of the thermal array sensor."""

    width_px: int = 32
    height_px: int = 24
    fov_h_deg: float = 110.0
    fov_v_deg: float = 75.0
    frame_rate_hz: float = 16.0
    noise_sigma_c: float = 1.5

    def __post_init__(self):
        if self.width_px <= 0 or self.height_px <= 0:
            raise ValidationError("sensor resolution must be positive")
        for fov in (self.fov_h_deg, self.fov_v_deg):
            if not 0.0 < fov < 180.0:
                raise ValidationError(f"field of view {fov} outside (0, 180)")
        if self.frame_rate_hz <= 0:
            raise ValidationError("frame rate must be positive")

    @property
    def focal_h_px(self) -> float:
        """Horizontal focal length in raw pixels (pinhole, from FOV)."""
        return (self.width_px / 2.0) / math.tan(math.radians(self.fov_h_deg) / 2.0)

    @property
    def focal_v_px(self) -> float:
        """Vertical focal length in raw pixels (pinhole, from FOV)."""
        return (self.height_px / 2.0) / math.tan(math.radians(self.fov_v_deg) / 2.0)

    def to_dict(self) -> dict:
        return {
            "width_px": self.width_px,
            "height_px": self.height_px,
            "fov_h_deg": self.fov_h_deg,
            "fov_v_deg": self.fov_v_deg,
            "frame_rate_hz": self.frame_rate_hz,
            "noise_sigma_c": self.noise_sigma_c,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SensorSpec":
        return cls(**{k: d[k] for k in (
            "width_px", "height_px", "fov_h_deg", "fov_v_deg",
            "frame_rate_hz", "noise_sigma_c")})


def chessboard_mask(height: int, width: int, subpage: Subpage) -> np.ndarray:
    """Boolean grid of the cells *measured* by the given subpage.

    Subpage A covers cells with even (row + col) parity, B the complement.
    """
    rr, cc = np.indices((height, width))
    parity = (rr + cc) % 2
    if subpage is Subpage.A:
        return parity == 0
    if subpage is Subpage.B:
        return parity == 1
    return np.ones((height, width), dtype=bool)


@dataclass(frozen=True)
class RawFrame:
    """One sensor-resolution temperature frame in degrees C.

    Missing cells are NaN. For subpage A/B frames the missing cells must be
    exactly the complement of that subpage's chessboard parity.
    """

    spec: SensorSpec
    values: np.ndarray
    timestamp: float = 0.0
    subpage: Subpage = Subpage.FULL

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float32)
        object.__setattr__(self, "values", values)
        values.setflags(write=False)
        if values.shape != (self.spec.height_px, self.spec.width_px):
            raise ValidationError(
                f"frame shape {values.shape} does not match sensor spec "
                f"({self.spec.height_px}, {self.spec.width_px})")
        if self.subpage is not Subpage.FULL:
            measured = chessboard_mask(*values.shape, self.subpage)
            ok = np.isfinite(values[measured]).all() and np.isnan(values[~measured]).all()
            if not ok:
                raise ValidationError(
                    f"missing cells of a subpage-{self.subpage.value} frame must "
                    "form the complementary chessboard parity")

    def __eq__(self, other):
        if not isinstance(other, RawFrame):
            return NotImplemented
        return (self.spec == other.spec
                and self.timestamp == other.timestamp
                and self.subpage == other.subpage
                and np.array_equal(self.values, other.values, equal_nan=True))


@dataclass(frozen=True)
class TemperatureMap:
    """Up-sampled temperature grid; `scale` is the per-dimension expansion
    factor relative to the raw frame it came from."""

    values: np.ndarray
    scale: int = 1

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        values.setflags(write=False)
        if values.ndim != 2 or values.size == 0:
            raise ValidationError("temperature map must be a non-empty 2D grid")
        if self.scale < 1:
            raise ValidationError("scale must be >= 1")

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass(frozen=True)
class GrayFrame:
    """[0, 255] intensity rendering of a temperature map."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.ndim != 2 or values.size == 0:
            raise ValidationError("gray frame must be a non-empty 2D grid")
        if values.dtype != np.uint8:
            if values.min() < 0 or values.max() > 255:
                raise ValidationError("gray intensities must lie in [0, 255]")
            values = values.astype(np.uint8)
        object.__setattr__(self, "values", values)
        values.setflags(write=False)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in interpolated-pixel coordinates, half-open on both
    axes: pixels (x, y) with x0 <= x < x1 and y0 <= y < y1."""

    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise ValidationError(f"degenerate bbox {self!r}")
        if self.x0 < 0 or self.y0 < 0:
            raise ValidationError(f"bbox {self!r} has negative origin")

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return (self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0

    def translated(self, dx: float, dy: float) -> "BBox":
        return BBox(self.x0 + dx, self.y0 + dy, self.x1 + dx, self.y1 + dy)

    def clipped(self, width: float, height: float) -> "BBox":
        """Shift (not shrink) the box so it lies inside [0,width]x[0,height]."""
        dx = max(0.0, -self.x0) + min(0.0, width - self.x1)
        dy = max(0.0, -self.y0) + min(0.0, height - self.y1)
        return self.translated(dx, dy) if (dx or dy) else self

    def to_int_grid(self) -> "BBox":
        """Round to whole-pixel bounds (round half away from outside)."""
        x0 = int(math.floor(self.x0 + 0.5))
        y0 = int(math.floor(self.y0 + 0.5))
        x1 = max(x0 + 1, int(math.floor(self.x1 + 0.5)))
        y1 = max(y0 + 1, int(math.floor(self.y1 + 0.5)))
        return BBox(x0, y0, x1, y1)

    def inside(self, width: float, height: float) -> bool:
        return self.x0 >= 0 and self.y0 >= 0 and self.x1 <= width and self.y1 <= height

    def to_list(self) -> list[float]:
        return [self.x0, self.y0, self.x1, self.y1]

    @classmethod
    def from_list(cls, xyxy) -> "BBox":
        x0, y0, x1, y1 = xyxy
        return cls(float(x0), float(y0), float(x1), float(y1))


@dataclass(frozen=True)
class Roi:
    """A bbox plus its temperature patch and normalized center location."""

    bbox: BBox
    patch: np.ndarray
    center: tuple[float, float]

    def __post_init__(self):
        patch = np.asarray(self.patch, dtype=np.float64)
        object.__setattr__(self, "patch", patch)
        patch.setflags(write=False)
        expected = (int(self.bbox.height), int(self.bbox.width))
        if patch.shape != expected:
            raise ValidationError(
                f"patch shape {patch.shape} != bbox shape {expected}")
        cx, cy = self.center
        if not (0.0 <= cx <= 1.0 and 0.0 <= cy <= 1.0):
            raise ValidationError(f"normalized center {self.center} outside [0,1]^2")

    @classmethod
    def from_map(cls, tmap: TemperatureMap, bbox: BBox) -> "Roi":
        """Copy the bbox region out of `tmap`; center normalized by map size."""
        box = bbox.to_int_grid()
        h, w = tmap.shape
        if not box.inside(w, h):
            raise ValidationError(f"bbox {box!r} outside map of shape {(h, w)}")
        patch = tmap.values[int(box.y0):int(box.y1), int(box.x0):int(box.x1)].copy()
        cx, cy = box.center
        return cls(bbox=box, patch=patch, center=(cx / w, cy / h))


@dataclass(frozen=True)
class TargetTruth:
    """One target's ground truth in one frame."""

    id: int
    bbox: BBox
    range_m: float
    real_height_m: float

    def __post_init__(self):
        if self.range_m <= 0:
            raise ValidationError("range_m must be positive")
        if self.real_height_m <= 0:
            raise ValidationError("real_height_m must be positive")


@dataclass(frozen=True)
class GroundTruthRecord:
    frame_index: int
    targets: tuple[TargetTruth, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(self.targets))


@dataclass(frozen=True)
class Detection:
    """Pipeline output for one tracked user in one frame."""

    bbox: BBox
    track_id: int
    range_m: float | None = None
    smoothed_range_m: float | None = None
    peak: float = 0.0

    def __post_init__(self):
        for r in (self.range_m, self.smoothed_range_m):
            if r is not None and r <= 0:
                raise ValidationError("range must be positive when present")
