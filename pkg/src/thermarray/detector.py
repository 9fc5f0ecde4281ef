"""Per-frame human-region extraction.

Adaptive Gaussian binarization isolates warm foreground, connected components
find candidate regions, and horizontally merged users are separated by
maximizing the between-segment variance of the column-sum histogram, followed
by gradient-guided curved cuts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import ndimage

from .config import PipelineConfig
from .errors import InfeasibleKError, ValidationError
from .types import BBox, GrayFrame, TemperatureMap

FOUR_CONNECTED = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)

# relative slack for the float prescreen before exact re-evaluation
_PRESCREEN_RTOL = 1e-9
_MAX_CANDIDATES = 4096


@dataclass(frozen=True)
class ColumnHistogram:
    """Column-wise foreground temperature mass over a region."""

    values: np.ndarray
    region: BBox

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        values.setflags(write=False)
        if values.ndim != 1:
            raise ValidationError("histogram must be 1D")
        if len(values) != int(self.region.width):
            raise ValidationError("histogram length must equal region width")

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class CutSet:
    """Cut anchors and their refined per-row paths, absolute columns."""

    anchors: tuple[int, ...]
    curved_paths: tuple[np.ndarray, ...]

    def __post_init__(self):
        anchors = tuple(int(a) for a in self.anchors)
        object.__setattr__(self, "anchors", anchors)
        object.__setattr__(self, "curved_paths",
                           tuple(np.asarray(p, dtype=int) for p in self.curved_paths))
        if any(a >= b for a, b in zip(anchors, anchors[1:])):
            raise ValidationError("anchors must be strictly increasing")
        if len(self.curved_paths) != len(anchors):
            raise ValidationError("one curved path per anchor")


# --------------------------------------------------------------------------
# binarization and components
# --------------------------------------------------------------------------

def gaussian_kernel_1d(size: int) -> np.ndarray:
    """Normalized 1D Gaussian with sigma = 0.3*((size-1)*0.5 - 1) + 0.8."""
    sigma = 0.3 * ((size - 1) * 0.5 - 1.0) + 0.8
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    k = np.exp(-(x ** 2) / (2.0 * sigma ** 2))
    return k / k.sum()


def adaptive_mask(gray: GrayFrame, s: int, c_off: float) -> np.ndarray:
    """Foreground = intensity strictly above the Gaussian-weighted local mean
    plus an offset. Borders are replicated."""
    values = gray.values
    h, w = values.shape
    if s % 2 == 0 or not 3 <= s <= min(h, w):
        raise ValidationError(f"kernel size {s} must be odd and in [3, min(H, W)]")
    k = gaussian_kernel_1d(s)
    f = values.astype(np.float64)
    mean = ndimage.convolve1d(f, k, axis=0, mode="nearest")
    mean = ndimage.convolve1d(mean, k, axis=1, mode="nearest")
    return f > mean + c_off


def connected_components(mask: np.ndarray, min_area: float | None = None
                         ) -> list[BBox]:
    """Bounding boxes of 4-connected foreground components, area-filtered and
    sorted by left edge."""
    if min_area is None:
        min_area = PipelineConfig().min_area
    labels, n = ndimage.label(mask, structure=FOUR_CONNECTED)
    if n == 0:
        return []
    areas = np.bincount(labels.ravel())
    boxes = []
    for lbl, sl in enumerate(ndimage.find_objects(labels), start=1):
        if sl is None or areas[lbl] < min_area:
            continue
        boxes.append(BBox(sl[1].start, sl[0].start, sl[1].stop, sl[0].stop))
    boxes.sort(key=lambda b: (b.x0, b.y0))
    return boxes


def column_histogram(tmap: TemperatureMap, region: BBox,
                     mask: np.ndarray) -> ColumnHistogram:
    """Per-column sum of foreground temperatures inside the region; background
    cells contribute zero."""
    h, w = tmap.shape
    box = region.to_int_grid()
    if not box.inside(w, h):
        raise ValidationError(f"region {box!r} outside map")
    ys = slice(int(box.y0), int(box.y1))
    xs = slice(int(box.x0), int(box.x1))
    patch = np.where(mask[ys, xs], tmap.values[ys, xs], 0.0)
    return ColumnHistogram(values=patch.sum(axis=0), region=box)


# --------------------------------------------------------------------------
# multi-level Otsu on the column histogram
# --------------------------------------------------------------------------

def between_segment_variance(hist, anchors: Sequence[int]) -> float:
    """Between-segment variance of the column histogram split at `anchors`.

    Exactly-rounded arithmetic (math.fsum) so independently written evaluators
    agree bitwise; segments with zero mass contribute zero.
    """
    values = hist.values if isinstance(hist, ColumnHistogram) else hist
    c = [float(v) for v in values]
    w = len(c)
    bounds = (0, *[int(a) for a in anchors], w)
    if any(a >= b for a, b in zip(bounds, bounds[1:])):
        raise ValidationError(f"anchors {anchors} not strictly increasing in (0, {w})")
    total = math.fsum(c)
    if total <= 0.0:
        return 0.0
    mu_g = math.fsum(i * c[i] for i in range(w)) / total
    terms = []
    for lo, hi in zip(bounds, bounds[1:]):
        mass = math.fsum(c[lo:hi])
        if mass <= 0.0:
            continue
        mu_k = math.fsum(i * c[i] for i in range(lo, hi)) / mass
        terms.append((mass / total) * (mu_k - mu_g) ** 2)
    return math.fsum(terms)


def multi_otsu(hist, k: int) -> tuple[int, ...]:
    """Anchors S_1 < ... < S_{k-1} maximizing the between-segment variance.

    Exact (including lexicographically-smallest tie-break) for k <= 3 via
    vectorized exhaustive search with exact re-scoring of near-optimal
    candidates; k >= 4 uses a prefix-sum dynamic program with the same
    tie-break applied within float tolerance.
    """
    values = hist.values if isinstance(hist, ColumnHistogram) else np.asarray(
        hist, dtype=np.float64)
    w = len(values)
    if k < 1:
        raise ValidationError("k must be >= 1")
    if w < k:
        raise ValidationError(f"histogram of {w} columns cannot form {k} segments")
    if np.any(values < 0):
        raise ValidationError("histogram masses must be nonnegative")
    support = int(np.count_nonzero(values))
    if k > support:
        raise InfeasibleKError(
            f"{k} segments requested but only {support} populated columns")
    if k == 1:
        return ()

    c = values.astype(np.float64)
    idx = np.arange(w, dtype=np.float64)
    wpre = np.concatenate(([0.0], np.cumsum(c)))          # wpre[i] = sum c[:i]
    mpre = np.concatenate(([0.0], np.cumsum(idx * c)))    # mpre[i] = sum i*c[:i]

    def seg(a, b):
        """Prefix-sum segment score (m^2 / mass); zero-mass segments score 0."""
        dw = wpre[b] - wpre[a]
        dm = mpre[b] - mpre[a]
        return np.where(dw > 0, dm * dm / np.maximum(dw, 1e-300), 0.0)

    if k == 2:
        a = np.arange(1, w)
        scores = seg(0, a) + seg(a, w)
        keep = _near_best_indices(scores)
        candidates = [(int(a[i]),) for i in keep]
    elif k == 3:
        a = np.arange(1, w - 1)
        b = np.arange(2, w)
        left = seg(0, a)
        right = seg(b, w)
        mid = seg(a[:, None], b[None, :])
        scores = left[:, None] + mid + right[None, :]
        scores[a[:, None] >= b[None, :]] = -np.inf
        # row-major flat order is lexicographic in (a, b)
        keep = _near_best_indices(scores.ravel())
        candidates = [(int(a[i // len(b)]), int(b[i % len(b)])) for i in keep]
    else:
        return _dp_anchors(c, k, seg, w)

    best_anchor = None
    best_sigma = -np.inf
    for anchors in candidates:
        sigma = between_segment_variance(c, anchors)
        if sigma > best_sigma:
            best_sigma = sigma
            best_anchor = anchors
    return tuple(best_anchor)


def _near_best_indices(scores: np.ndarray) -> np.ndarray:
    top = float(scores.max())
    tol = _PRESCREEN_RTOL * max(abs(top), 1e-300)
    return np.flatnonzero(scores >= top - tol)[:_MAX_CANDIDATES]


def _dp_anchors(c: np.ndarray, k: int, seg, w: int) -> tuple[int, ...]:
    """O(k*w^2) dynamic program; reconstruction prefers smaller anchors."""
    all_b = np.arange(w + 1)
    score = seg(all_b[:, None], all_b[None, :])  # score[a, b] for segment [a, b)

    # best[j][a] = best score splitting columns [a, w) into j segments
    best = np.full((k + 1, w + 1), -np.inf)
    best[1] = score[:, w]
    for j in range(2, k + 1):
        # segment [a, b) + best of j-1 segments from b on
        comb = score + best[j - 1][None, :]
        comb[:, : j - 1] = -np.inf  # need room for j-1 more boundaries
        best[j] = comb.max(axis=1)

    optimum = best[k][0]
    tol = _PRESCREEN_RTOL * max(abs(optimum), 1e-300)
    anchors = []
    a = 0
    remaining = k
    acc = 0.0
    while remaining > 2:
        target = optimum - acc
        cand = score[a, :] + best[remaining - 1]
        cand[: a + 1] = -np.inf
        cand[w:] = -np.inf
        b = int(np.flatnonzero(cand >= target - tol)[0])
        anchors.append(b)
        acc += float(score[a, b])
        a = b
        remaining -= 1
    # last boundary: two segments remain
    cand = score[a, :] + score[:, w]
    cand[: a + 1] = -np.inf
    cand[w:] = -np.inf
    b = int(np.flatnonzero(cand >= (optimum - acc) - tol)[0])
    anchors.append(b)
    return tuple(anchors)


# --------------------------------------------------------------------------
# segment count and curved cuts
# --------------------------------------------------------------------------

def choose_k(region: BBox, user_width_px: int | None = None, k_cap: int = 4) -> int:
    """Expected user count in a region from its width, capped."""
    if user_width_px is None:
        user_width_px = PipelineConfig().user_width_px
    ratio = region.width / float(user_width_px)
    k = max(1, int(math.floor(ratio + 0.5)))
    return min(k, k_cap)


def refine_cut(tmap: TemperatureMap, region: BBox, anchor: int,
               d_max: int | None = None) -> np.ndarray:
    """Bend a vertical cut to follow the local temperature-gradient minimum.

    Per row the cut moves to the argmin of |dT/dx| within +-d_max of the
    previous row's cut (and of the anchor); ties prefer staying close to the
    previous cut. A final pass limits the path to one column of drift per row.
    Returns the absolute cut column for each region row.
    """
    if d_max is None:
        d_max = PipelineConfig().d_max
    box = region.to_int_grid()
    x0, x1 = int(box.x0), int(box.x1)
    y0, y1 = int(box.y0), int(box.y1)
    anchor = int(anchor)
    if not x0 < anchor < x1:
        raise ValidationError(f"anchor {anchor} not strictly inside ({x0}, {x1})")

    patch = tmap.values[y0:y1, x0:x1]
    h, w = patch.shape
    grad = np.empty_like(patch)
    if w >= 3:
        grad[:, 1:-1] = np.abs((patch[:, 2:] - patch[:, :-2]) / 2.0)
    # one-sided differences at region borders avoid fictitious edge minima
    grad[:, 0] = np.abs(patch[:, min(1, w - 1)] - patch[:, 0])
    grad[:, -1] = np.abs(patch[:, -1] - patch[:, max(w - 2, 0)])

    local_anchor = anchor - x0
    lo_bound = max(1, local_anchor - d_max)
    hi_bound = min(w - 1, local_anchor + d_max + 1)
    prev = local_anchor
    path = np.empty(h, dtype=int)
    for r in range(h):
        lo = max(lo_bound, prev - d_max)
        hi = min(hi_bound, prev + d_max + 1)
        cols = np.arange(lo, hi)
        g = grad[r, lo:hi]
        pick = cols[np.lexsort((cols, np.abs(cols - prev), g))[0]]
        path[r] = pick
        prev = pick

    # smooth: at most one column of drift per row
    for r in range(1, h):
        path[r] = np.clip(path[r], path[r - 1] - 1, path[r - 1] + 1)
    return path + x0


# --------------------------------------------------------------------------
# full spatial detection
# --------------------------------------------------------------------------

def detect(tmap: TemperatureMap, gray: GrayFrame,
           cfg: PipelineConfig | None = None) -> list[BBox]:
    """Adaptive mask -> components -> per-component column-histogram splitting
    -> curved cuts -> tight per-segment boxes."""
    if cfg is None:
        cfg = PipelineConfig()
    if tmap.shape != gray.shape:
        raise ValidationError("temperature map and gray frame must share shape")
    h, w = gray.shape
    s = cfg.kernel_size
    if s > min(h, w):
        s = min(h, w)
        s = s if s % 2 == 1 else s - 1
    mask = adaptive_mask(gray, s, cfg.c_off)
    labels, n = ndimage.label(mask, structure=FOUR_CONNECTED)
    if n == 0:
        return []
    areas = np.bincount(labels.ravel())
    out: list[BBox] = []
    for lbl, sl in enumerate(ndimage.find_objects(labels), start=1):
        if sl is None or areas[lbl] < cfg.min_area:
            continue
        region = BBox(sl[1].start, sl[0].start, sl[1].stop, sl[0].stop)
        comp = labels == lbl
        out.extend(_split_component(tmap, region, comp, cfg))
    out.sort(key=lambda b: (b.x0, b.y0))
    return out


def _split_component(tmap: TemperatureMap, region: BBox, comp: np.ndarray,
                     cfg: PipelineConfig) -> list[BBox]:
    hist = column_histogram(tmap, region, comp)
    k = choose_k(region, cfg.user_width_px, cfg.k_cap)
    k = max(1, min(k, int(np.count_nonzero(hist.values))))
    if k == 1:
        return [region]
    anchors = multi_otsu(hist, k)
    x0, x1 = int(region.x0), int(region.x1)
    y0, y1 = int(region.y0), int(region.y1)
    paths = np.stack([
        refine_cut(tmap, region, x0 + a, cfg.d_max) for a in anchors])
    paths.sort(axis=0)  # per-row order keeps segments from crossing

    rows = np.arange(y0, y1)
    cols = np.arange(x0, x1)
    col_grid = np.broadcast_to(cols[None, :], (len(rows), len(cols)))
    sub = comp[y0:y1, x0:x1]
    bounds = [np.full(len(rows), x0)] + list(paths) + [np.full(len(rows), x1)]

    boxes = []
    for s in range(len(bounds) - 1):
        seg_mask = sub & (col_grid >= bounds[s][:, None]) & (col_grid < bounds[s + 1][:, None])
        if not seg_mask.any():
            continue
        rr, cc = np.nonzero(seg_mask)
        box = BBox(x0 + cc.min(), y0 + rr.min(), x0 + cc.max() + 1, y0 + rr.max() + 1)
        if box.area >= cfg.min_area:
            boxes.append(box)
    return _deoverlap(boxes)


def _deoverlap(boxes: list[BBox]) -> list[BBox]:
    """Clip residual rectangle overlaps between segment boxes at the overlap
    midpoint (curved cuts partition pixels, not rectangles). A box that
    cannot be clipped without degenerating is dropped in favor of the larger
    one."""
    boxes = sorted(boxes, key=lambda b: (b.x0, b.y0))
    out: list[BBox] = []
    for box in boxes:
        dropped = False
        for i, prev in enumerate(out):
            ox0, ox1 = max(prev.x0, box.x0), min(prev.x1, box.x1)
            oy0, oy1 = max(prev.y0, box.y0), min(prev.y1, box.y1)
            if ox0 >= ox1 or oy0 >= oy1:
                continue
            mid = float(int((ox0 + ox1) // 2))
            if prev.x0 < mid < box.x1:
                out[i] = BBox(prev.x0, prev.y0, mid, prev.y1)
                box = BBox(mid, box.y0, box.x1, box.y1)
            elif prev.area >= box.area:
                dropped = True
                break
            else:
                out[i] = box
                dropped = True
                break
        if not dropped:
            out.append(box)
    return out
