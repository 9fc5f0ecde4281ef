"""Raw frame conditioning: chessboard fill, bilinear expansion, cutoff clamp,
grayscale conversion."""

from __future__ import annotations

import dataclasses

import numpy as np

from .config import PipelineConfig
from .errors import InvalidPatternError, ValidationError
from .types import (GrayFrame, RawFrame, Subpage, TemperatureMap,
                    chessboard_mask)


def mask_to_subpage(frame: RawFrame, subpage: Subpage) -> RawFrame:
    """Blank out the cells the given subpage does not measure (test helper,
    inverse of :func:`fill_chessboard` up to interpolation)."""
    if subpage is Subpage.FULL:
        return frame
    measured = chessboard_mask(*frame.values.shape, subpage)
    values = np.where(measured, frame.values, np.float32(np.nan))
    return dataclasses.replace(frame, values=values, subpage=subpage)


def fill_chessboard(frame: RawFrame) -> RawFrame:
    """Fill missing cells with the mean of their valid 4-neighbors.

    Multiple passes handle stray non-chessboard holes; a frame missing more
    than half its cells in a non-chessboard pattern is rejected.
    """
    values = np.array(frame.values, dtype=np.float32)
    missing = np.isnan(values)
    if not missing.any():
        return frame if frame.subpage is Subpage.FULL else dataclasses.replace(
            frame, subpage=Subpage.FULL)

    h, w = values.shape
    frac = missing.mean()
    is_chessboard = any(
        bool(np.all(missing <= ~chessboard_mask(h, w, page)))
        for page in (Subpage.A, Subpage.B))
    if frac > 0.5 and not is_chessboard:
        raise InvalidPatternError(
            f"{frac:.0%} of cells missing in a non-chessboard pattern")
    if missing.all():
        raise InvalidPatternError("frame has no valid cells")

    while missing.any():
        valid = ~missing
        filled = np.where(valid, values, 0.0).astype(np.float64)
        nsum = np.zeros((h, w))
        ncnt = np.zeros((h, w))
        for axis, shift in ((0, 1), (0, -1), (1, 1), (1, -1)):
            nsum += _shift(filled, axis, shift)
            ncnt += _shift(valid.astype(np.float64), axis, shift)
        can_fill = missing & (ncnt > 0)
        if not can_fill.any():
            raise InvalidPatternError("isolated missing region cannot be filled")
        with np.errstate(invalid="ignore"):
            values[can_fill] = (nsum[can_fill] / ncnt[can_fill]).astype(np.float32)
        missing = missing & ~can_fill

    return dataclasses.replace(frame, values=values, subpage=Subpage.FULL)


def _shift(a: np.ndarray, axis: int, amount: int) -> np.ndarray:
    """Shift with zero fill (no wraparound)."""
    out = np.zeros_like(a)
    src = [slice(None)] * a.ndim
    dst = [slice(None)] * a.ndim
    if amount > 0:
        src[axis] = slice(0, -amount)
        dst[axis] = slice(amount, None)
    else:
        src[axis] = slice(-amount, None)
        dst[axis] = slice(0, amount)
    out[tuple(dst)] = a[tuple(src)]
    return out


def interpolate(frame: RawFrame, scale: int) -> TemperatureMap:
    """Bilinear up-sampling by an integer factor per dimension.

    Sample positions use the half-pixel convention with edge clamping, so the
    output is a convex combination of input cells (never overshoots) and
    scale=1 is the identity.
    """
    if scale < 1 or int(scale) != scale:
        raise ValidationError("scale must be a positive integer")
    values = np.asarray(frame.values, dtype=np.float64)
    if np.isnan(values).any():
        raise ValidationError("interpolate requires a filled frame (no NaN)")

    def axis_coords(n):
        pos = (np.arange(n * scale) + 0.5) / scale - 0.5
        pos = np.clip(pos, 0.0, n - 1.0)
        i0 = np.floor(pos).astype(int)
        i1 = np.minimum(i0 + 1, n - 1)
        return i0, i1, pos - i0

    h, w = values.shape
    ry0, ry1, wy = axis_coords(h)
    cx0, cx1, wx = axis_coords(w)
    wy = wy[:, None]
    wx = wx[None, :]
    top = (1 - wx) * values[np.ix_(ry0, cx0)] + wx * values[np.ix_(ry0, cx1)]
    bot = (1 - wx) * values[np.ix_(ry1, cx0)] + wx * values[np.ix_(ry1, cx1)]
    out = (1 - wy) * top + wy * bot
    return TemperatureMap(values=out, scale=int(scale))


def clamp_cutoff(tmap: TemperatureMap, cutoff_c: float = 37.0) -> TemperatureMap:
    """Replace readings above the cutoff; keeps the grid dense."""
    return TemperatureMap(values=np.minimum(tmap.values, cutoff_c),
                          scale=tmap.scale)


def to_gray(tmap: TemperatureMap) -> GrayFrame:
    """Affine rescale of [frame min, frame max] to [0, 255], rounded half-up.
    A constant frame maps to all zeros."""
    values = tmap.values
    lo = values.min()
    hi = values.max()
    if hi == lo:
        return GrayFrame(values=np.zeros(values.shape, dtype=np.uint8))
    norm = (values - lo) / (hi - lo)
    return GrayFrame(values=np.floor(norm * 255.0 + 0.5).astype(np.uint8))


def preprocess(frame: RawFrame, cfg: PipelineConfig
               ) -> tuple[TemperatureMap, GrayFrame]:
    """Full conditioning chain: fill, expand, clamp; gray copy for detection."""
    filled = fill_chessboard(frame)
    tmap = clamp_cutoff(interpolate(filled, cfg.scale), cfg.cutoff_c)
    return tmap, to_gray(tmap)
