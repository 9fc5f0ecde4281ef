"""Case studies built on ranged detections: fall detection from real-height
kinematics, and occupancy counting with ground-plane heatmaps."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .types import Detection, SensorSpec


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole focal length in interpolated pixels."""

    focal_px: float

    def __post_init__(self):
        if self.focal_px <= 0:
            raise ValidationError("focal length must be positive")

    @classmethod
    def from_spec(cls, spec: SensorSpec, scale: int = 20) -> "CameraIntrinsics":
        frame_h = spec.height_px * scale
        return cls(focal_px=(frame_h / 2.0)
                   / math.tan(math.radians(spec.fov_v_deg) / 2.0))


def real_height(h_px: float, range_m: float, intr: CameraIntrinsics) -> float:
    """Back-project an in-frame pixel height to meters: H = h * r / f."""
    if h_px <= 0 or range_m <= 0:
        raise ValidationError("pixel height and range must be positive")
    return h_px * range_m / intr.focal_px


# --------------------------------------------------------------------------
# fall detection
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class FallEvent:
    t_start: float
    t_end: float
    track_id: int = -1


def _smooth(values: np.ndarray, width: int = 3) -> np.ndarray:
    if len(values) < width:
        return values.astype(np.float64)
    kernel = np.ones(width) / width
    pad = width // 2
    padded = np.concatenate([np.repeat(values[0], pad), values,
                             np.repeat(values[-1], pad)])
    return np.convolve(padded, kernel, mode="valid")


def fall_frames(history, speed_mps: float = 1.0, drop_m: float = 0.6,
                window_s: float = 1.0) -> np.ndarray:
    """Boolean mask of frames inside a fall episode.

    A frame qualifies when the smoothed height has dropped faster than
    `speed_mps` for at least two consecutive samples AND the total drop over
    the trailing `window_s` reaches `drop_m`.
    """
    ts = np.array([t for t, _ in history], dtype=np.float64)
    hs = np.array([h for _, h in history], dtype=np.float64)
    n = len(ts)
    if n < 3:
        return np.zeros(n, dtype=bool)
    hsm = _smooth(hs)
    vel = np.zeros(n)
    dt = np.diff(ts)
    if np.any(dt <= 0):
        raise ValidationError("history timestamps must be increasing")
    vel[1:] = np.diff(hsm) / dt

    fast = vel < -speed_mps
    sustained = fast & np.concatenate([[False], fast[:-1]])
    dropped = np.zeros(n, dtype=bool)
    for i in range(n):
        j0 = np.searchsorted(ts, ts[i] - window_s)
        dropped[i] = hsm[j0:i + 1].max() - hsm[i] >= drop_m
    return sustained & dropped


def detect_fall(history, speed_mps: float = 1.0, drop_m: float = 0.6,
                window_s: float = 1.0, track_id: int = -1) -> list[FallEvent]:
    """Fall events as maximal runs of qualifying frames.

    `history` is a time-ordered sequence of (t_seconds, height_m).
    """
    mask = fall_frames(history, speed_mps, drop_m, window_s)
    ts = [t for t, _ in history]
    events = []
    start = None
    for i, flag in enumerate(mask):
        if flag and start is None:
            start = i
        elif not flag and start is not None:
            events.append(FallEvent(ts[start], ts[i - 1], track_id))
            start = None
    if start is not None:
        events.append(FallEvent(ts[start], ts[-1], track_id))
    return events


def write_events(path, events: list[FallEvent]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for e in events:
            fh.write(json.dumps({"t": e.t_start, "t_end": e.t_end,
                                 "track_id": e.track_id, "type": "fall"},
                                sort_keys=True) + "\n")


# --------------------------------------------------------------------------
# occupancy
# --------------------------------------------------------------------------

@dataclass
class OccupancyGrid:
    """Ground-plane visit tallies; x across the sensor axis, y outward."""

    cell_size_m: float
    x_extent_m: tuple[float, float]
    y_extent_m: tuple[float, float]
    counts: np.ndarray

    @classmethod
    def empty(cls, cell_size_m: float = 0.25,
              x_extent_m: tuple[float, float] = (-4.0, 4.0),
              y_extent_m: tuple[float, float] = (0.0, 6.0)) -> "OccupancyGrid":
        nx = int(math.ceil((x_extent_m[1] - x_extent_m[0]) / cell_size_m))
        ny = int(math.ceil((y_extent_m[1] - y_extent_m[0]) / cell_size_m))
        return cls(cell_size_m=cell_size_m, x_extent_m=x_extent_m,
                   y_extent_m=y_extent_m,
                   counts=np.zeros((ny, nx), dtype=np.int64))


def ground_position(det: Detection, frame_width: int, fov_h_deg: float
                    ) -> tuple[float, float] | None:
    """Map a ranged detection to the ground plane via a linear pixel-to-angle
    approximation."""
    r = det.smoothed_range_m if det.smoothed_range_m is not None else det.range_m
    if r is None:
        return None
    cx = det.bbox.center[0]
    azimuth = math.radians((cx / frame_width - 0.5) * fov_h_deg)
    return r * math.sin(azimuth), r * math.cos(azimuth)


def occupancy(frames: list[tuple[int, list[Detection]]]) -> list[tuple[int, int]]:
    """Per-frame user count: (frame_index, live track count)."""
    return [(idx, len(dets)) for idx, dets in frames]


def heatmap(frames: list[tuple[int, list[Detection]]], frame_width: int,
            fov_h_deg: float, grid: OccupancyGrid | None = None) -> OccupancyGrid:
    """Tally every ranged detection's ground position; positions outside the
    extent clip into the edge cells so tallies always equal detections."""
    if grid is None:
        grid = OccupancyGrid.empty()
    ny, nx = grid.counts.shape
    for _, dets in frames:
        for det in dets:
            pos = ground_position(det, frame_width, fov_h_deg)
            if pos is None:
                continue
            gx = int((pos[0] - grid.x_extent_m[0]) / grid.cell_size_m)
            gy = int((pos[1] - grid.y_extent_m[0]) / grid.cell_size_m)
            grid.counts[min(max(gy, 0), ny - 1), min(max(gx, 0), nx - 1)] += 1
    return grid


def write_heatmap_csv(path, grid: OccupancyGrid) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# cell_size_m={grid.cell_size_m} "
                 f"x_extent={grid.x_extent_m} y_extent={grid.y_extent_m}\n")
        for row in grid.counts:
            fh.write(",".join(str(int(v)) for v in row) + "\n")


def write_heatmap_pgm(path, grid: OccupancyGrid) -> None:
    """Plain-ASCII PGM rendering, brightest cell = most visited."""
    counts = grid.counts
    top = counts.max()
    img = (counts * 255 // top) if top > 0 else counts
    h, w = img.shape
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"P2\n{w} {h}\n255\n")
        for row in img[::-1]:  # far rows on top
            fh.write(" ".join(str(int(v)) for v in row) + "\n")
