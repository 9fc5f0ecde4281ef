"""Kernelized correlation filter tracking with overlap-driven split/merge.

Features are raw windowed intensities (thermal frames are textureless, so
gradient features buy nothing); correlation runs at a fixed internal
resolution so per-update cost is independent of target size.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import PipelineConfig
from .errors import ValidationError
from .types import BBox, GrayFrame, TemperatureMap


@dataclass(frozen=True)
class OverlapRatios:
    """Per-axis overlap length divided by the smaller extent on that axis."""

    horizontal: float
    vertical: float

    def __post_init__(self):
        for v in (self.horizontal, self.vertical):
            if not 0.0 <= v <= 1.0:
                raise ValidationError(f"overlap ratio {v} outside [0, 1]")


def overlap_ratios(a: BBox, b: BBox) -> OverlapRatios:
    ox = min(a.x1, b.x1) - max(a.x0, b.x0)
    oy = min(a.y1, b.y1) - max(a.y0, b.y0)
    h = max(0.0, ox) / min(a.width, b.width)
    v = max(0.0, oy) / min(a.height, b.height)
    return OverlapRatios(horizontal=min(h, 1.0), vertical=min(v, 1.0))


@dataclass
class Track:
    """Persistent identity with correlation-filter model; mutable, single-owner."""

    id: int
    bbox: BBox
    template: np.ndarray
    alphaf: np.ndarray
    age: int = 0
    misses: int = 0
    peak: float = 1.0
    kalman: object | None = None   # KalmanState, owned by the ranging module


# --------------------------------------------------------------------------
# correlation machinery
# --------------------------------------------------------------------------

def _hann2d(n: int) -> np.ndarray:
    w = np.hanning(n)
    return np.outer(w, w)


def _gaussian_response_fft(n: int, sigma: float) -> np.ndarray:
    c = n // 2
    yy, xx = np.ogrid[0:n, 0:n]
    resp = np.exp(-((yy - c) ** 2 + (xx - c) ** 2) / (2.0 * sigma ** 2))
    return np.fft.fft2(resp)


def _resample_window(values: np.ndarray, cx: float, cy: float,
                     win_w: float, win_h: float, n: int) -> np.ndarray:
    """Bilinear N x N resample of the window centered at (cx, cy); samples
    outside the frame replicate the border."""
    h, w = values.shape
    # sample centers in pixel-center space (pixel j spans [j, j+1))
    xs = cx - win_w / 2.0 + (np.arange(n) + 0.5) * (win_w / n) - 0.5
    ys = cy - win_h / 2.0 + (np.arange(n) + 0.5) * (win_h / n) - 0.5
    xs = np.clip(xs, 0.0, w - 1.0)
    ys = np.clip(ys, 0.0, h - 1.0)
    x0 = np.floor(xs).astype(int)
    y0 = np.floor(ys).astype(int)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    wx = (xs - x0)[None, :]
    wy = (ys - y0)[:, None]
    v = values.astype(np.float64)
    top = (1 - wx) * v[np.ix_(y0, x0)] + wx * v[np.ix_(y0, x1)]
    bot = (1 - wx) * v[np.ix_(y1, x0)] + wx * v[np.ix_(y1, x1)]
    return (1 - wy) * top + wy * bot


def _features(gray: GrayFrame, bbox: BBox, cfg: PipelineConfig) -> np.ndarray:
    n = cfg.kcf_window_px
    cx, cy = bbox.center
    win_w = bbox.width * cfg.kcf_padding
    win_h = bbox.height * cfg.kcf_padding
    patch = _resample_window(gray.values, cx, cy, win_w, win_h, n)
    return (patch / 255.0 - 0.5) * _hann2d(n)


def _kernel_correlation(x1: np.ndarray, x2: np.ndarray, sigma: float) -> np.ndarray:
    c = np.real(np.fft.ifft2(np.fft.fft2(x1) * np.conj(np.fft.fft2(x2))))
    c = np.fft.fftshift(c)
    d = (np.sum(x1 * x1) + np.sum(x2 * x2) - 2.0 * c) / x1.size
    return np.exp(-np.maximum(d, 0.0) / (sigma * sigma))


def _train(template: np.ndarray, cfg: PipelineConfig) -> np.ndarray:
    """Dual ridge-regression coefficients for a Gaussian response target."""
    n = cfg.kcf_window_px
    sigma_resp = cfg.kcf_output_sigma_factor * (n / cfg.kcf_padding)
    yf = _gaussian_response_fft(n, sigma_resp)
    k = _kernel_correlation(template, template, cfg.kcf_kernel_sigma)
    return yf / (np.fft.fft2(k) + cfg.kcf_lambda)


def _subpixel(left: float, center: float, right: float) -> float:
    denom = 2.0 * center - right - left
    if abs(denom) < 1e-6:
        return 0.0
    delta = 0.5 * (right - left) / denom
    return 0.0 if abs(delta) < 1e-9 else delta


# --------------------------------------------------------------------------
# public tracker operations
# --------------------------------------------------------------------------

def kcf_init(gray: GrayFrame, bbox: BBox, track_id: int,
             cfg: PipelineConfig | None = None) -> Track:
    """Start a track: learn template and dual coefficients at the bbox."""
    if cfg is None:
        cfg = PipelineConfig()
    h, w = gray.shape
    if not bbox.inside(w, h):
        raise ValidationError(f"bbox {bbox!r} outside {w}x{h} frame")
    if bbox.area < cfg.min_area:
        raise ValidationError(
            f"bbox area {bbox.area:.0f} below minimum {cfg.min_area:.0f}")
    template = _features(gray, bbox, cfg)
    return Track(id=track_id, bbox=bbox, template=template,
                 alphaf=_train(template, cfg))


def _measure_shift(track: Track, gray: GrayFrame, bbox: BBox,
                   cfg: PipelineConfig) -> tuple[float, float, float]:
    """Correlation-response displacement (window px) of the target relative
    to `bbox`, plus the peak response."""
    n = cfg.kcf_window_px
    x = _features(gray, bbox, cfg)
    k = _kernel_correlation(x, track.template, cfg.kcf_kernel_sigma)
    resp = np.real(np.fft.ifft2(np.fft.fft2(k) * track.alphaf))
    py, px = np.unravel_index(np.argmax(resp), resp.shape)
    peak = float(resp[py, px])
    dy = py - n // 2 + _subpixel(resp[(py - 1) % n, px], peak,
                                 resp[(py + 1) % n, px])
    dx = px - n // 2 + _subpixel(resp[py, (px - 1) % n], peak,
                                 resp[py, (px + 1) % n])
    return dx, dy, peak


def kcf_update(track: Track, gray: GrayFrame,
               cfg: PipelineConfig | None = None) -> tuple[BBox, float]:
    """Translate the track to the correlation-response peak and adapt the
    model toward the new appearance. Returns (new bbox, peak response).

    The measure-and-move step is iterated a few times because the response
    peak underestimates large shifts on smooth, textureless targets; each
    pass closes most of the remaining gap.
    """
    if cfg is None:
        cfg = PipelineConfig()
    n = cfg.kcf_window_px
    h, w = gray.shape
    scale_x = track.bbox.width * cfg.kcf_padding / n
    scale_y = track.bbox.height * cfg.kcf_padding / n

    moved = track.bbox
    peak = 0.0
    for _ in range(3):
        dx, dy, peak = _measure_shift(track, gray, moved, cfg)
        if dx == 0.0 and dy == 0.0:
            break
        moved = moved.translated(dx * scale_x, dy * scale_y).clipped(w, h)
        if abs(dx) < 0.25 and abs(dy) < 0.25:
            break

    track.bbox = moved
    track.peak = peak
    track.age += 1
    eta = cfg.kcf_learning_rate
    x_new = _features(gray, moved, cfg)
    track.template = (1 - eta) * track.template + eta * x_new
    track.alphaf = (1 - eta) * track.alphaf + eta * _train(x_new, cfg)
    return moved, peak


def retarget(track: Track, gray: GrayFrame, bbox: BBox,
             cfg: PipelineConfig | None = None) -> None:
    """Snap the track to a corrected bbox (e.g. an associated detection) and
    adapt the model there."""
    if cfg is None:
        cfg = PipelineConfig()
    h, w = gray.shape
    track.bbox = bbox.clipped(w, h)
    eta = cfg.kcf_learning_rate
    x = _features(gray, track.bbox, cfg)
    track.template = (1 - eta) * track.template + eta * x
    track.alphaf = (1 - eta) * track.alphaf + eta * _train(x, cfg)


def split_or_merge(tracks: list[Track], tmap: TemperatureMap,
                   cfg: PipelineConfig | None = None) -> list[Track]:
    """Resolve near-duplicate and vertically conjoined tracks.

    For each pair: mostly-horizontal overlap with little vertical overlap
    gets re-cut at the coolest seam row between the two centers; overlap on
    both axes merges the pair (older id survives). Runs to a fixed point, so
    it is idempotent on its own output.
    """
    if cfg is None:
        cfg = PipelineConfig()
    tracks = sorted(tracks, key=lambda t: t.id)
    for _ in range(len(tracks) + 2):
        changed = False
        for i in range(len(tracks)):
            for j in range(i + 1, len(tracks)):
                a, b = tracks[i], tracks[j]
                ratios = overlap_ratios(a.bbox, b.bbox)
                if ratios.horizontal > cfg.h_thr and ratios.vertical > cfg.v_thr:
                    a.bbox = BBox(min(a.bbox.x0, b.bbox.x0), min(a.bbox.y0, b.bbox.y0),
                                  max(a.bbox.x1, b.bbox.x1), max(a.bbox.y1, b.bbox.y1))
                    tracks.pop(j)
                    changed = True
                    break
                if (ratios.horizontal > cfg.h_thr
                        and 0.0 < ratios.vertical < cfg.v_thr):
                    if _vertical_separation(a, b, tmap):
                        changed = True
                        break
            if changed:
                break
        if not changed:
            break
    return tracks


def _vertical_separation(a: Track, b: Track, tmap: TemperatureMap) -> bool:
    """Re-cut two vertically conjoined boxes at the coolest row between their
    centers. Returns False when no valid seam exists."""
    upper, lower = (a, b) if a.bbox.center[1] <= b.bbox.center[1] else (b, a)
    r0 = int(np.ceil(upper.bbox.center[1]))
    r1 = int(np.floor(lower.bbox.center[1]))
    lo = int(max(upper.bbox.y0 + 1, r0))
    hi = int(min(lower.bbox.y1 - 1, r1))
    if hi < lo:
        return False
    x0 = int(min(upper.bbox.x0, lower.bbox.x0))
    x1 = int(max(upper.bbox.x1, lower.bbox.x1))
    rows = tmap.values[lo:hi + 1, x0:x1].sum(axis=1)
    seam = lo + int(np.argmin(rows))
    if seam <= upper.bbox.y0 or seam >= lower.bbox.y1:
        return False
    new_upper = BBox(upper.bbox.x0, upper.bbox.y0, upper.bbox.x1, seam)
    new_lower = BBox(lower.bbox.x0, seam, lower.bbox.x1, lower.bbox.y1)
    if (new_upper.y1 == upper.bbox.y1 and new_lower.y0 == lower.bbox.y0):
        return False
    upper.bbox = new_upper
    lower.bbox = new_lower
    return True
