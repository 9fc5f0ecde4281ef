"""Combine spatial detections and temporal tracks into per-frame user ROIs:
consistency filtering, greedy association, vertical stack splitting, ROI
extraction."""

from __future__ import annotations

import numpy as np

from .config import PipelineConfig
from .metrics import iou
from .tracker import Track, overlap_ratios
from .types import BBox, Roi, TemperatureMap


def temporal_consistency(detections: list[BBox], prev_detections: list[BBox],
                         track_boxes: list[BBox] = (),
                         first_frame: bool = False) -> list[BBox]:
    """Drop single-frame noise: a detection survives iff it overlaps some
    detection from the previous frame or some live track. The first frame of
    a stream passes everything."""
    if first_frame:
        return list(detections)
    keep = []
    for det in detections:
        if any(iou(det, p) > 0 for p in prev_detections) or \
           any(iou(det, t) > 0 for t in track_boxes):
            keep.append(det)
    return keep


def associate(detections: list[BBox], tracks: list[Track],
              iou_thr: float = 0.3
              ) -> tuple[list[tuple[int, Track]], list[int], list[Track]]:
    """Greedy highest-IoU-first one-to-one assignment.

    Returns (matches as (detection index, track) pairs, unmatched detection
    indices, unmatched tracks). Unmatched detections are new-user candidates;
    unmatched tracks accrue misses at the caller.
    """
    cand = []
    for di, det in enumerate(detections):
        for track in tracks:
            v = iou(det, track.bbox)
            if v >= iou_thr:
                cand.append((v, di, track.id, track))
    cand.sort(key=lambda t: (-t[0], t[1], t[2]))
    used_d, used_t = set(), set()
    matches = []
    for v, di, tid, track in cand:
        if di in used_d or tid in used_t:
            continue
        used_d.add(di)
        used_t.add(tid)
        matches.append((di, track))
    unmatched_dets = [di for di in range(len(detections)) if di not in used_d]
    unmatched_tracks = [t for t in tracks if t.id not in used_t]
    return matches, unmatched_dets, unmatched_tracks


def vertical_stack_split(detection: BBox, tracks: list[Track],
                         tmap: TemperatureMap,
                         cfg: PipelineConfig | None = None) -> list[BBox]:
    """Divide a detection covering several vertically stacked users into one
    box per track, cut at the coolest rows between consecutive track centers.
    Pass-through when fewer than two tracks overlap enough horizontally."""
    if cfg is None:
        cfg = PipelineConfig()
    stacked = [t for t in tracks
               if overlap_ratios(t.bbox, detection).horizontal > cfg.h_thr]
    if len(stacked) < 2:
        return [detection]
    stacked.sort(key=lambda t: t.bbox.center[1])
    x0, x1 = int(detection.x0), int(detection.x1)
    top, bottom = int(detection.y0), int(detection.y1)
    seams = []
    prev = top
    for a, b in zip(stacked, stacked[1:]):
        lo = int(max(np.ceil(a.bbox.center[1]), prev + 1))
        hi = int(min(np.floor(b.bbox.center[1]), bottom - 1))
        if hi < lo:
            continue
        rows = tmap.values[lo:hi + 1, x0:x1].sum(axis=1)
        seam = lo + int(np.argmin(rows))
        if prev < seam < bottom:
            seams.append(seam)
            prev = seam
    bounds = [top] + seams + [bottom]
    out = []
    for lo, hi in zip(bounds, bounds[1:]):
        if hi > lo:
            out.append(BBox(detection.x0, lo, detection.x1, hi))
    return out


def extract_rois(tmap: TemperatureMap, boxes: list[BBox]) -> list[Roi]:
    """Copy each box's patch from the clamped temperature map; centers are
    normalized by the map size. Out-of-bounds boxes raise."""
    return [Roi.from_map(tmap, box) for box in boxes]
