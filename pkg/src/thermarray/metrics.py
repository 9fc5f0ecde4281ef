"""Detection/ranging metrics: IoU matching, F1, MAE, relative error, range
bins and error CDFs."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .types import BBox, Detection, GroundTruthRecord

RANGE_BINS = (("0.0-3.0m", 0.0, 3.0), ("3.0-4.5m", 3.0, 4.5))


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union; disjoint boxes give 0."""
    ox = min(a.x1, b.x1) - max(a.x0, b.x0)
    oy = min(a.y1, b.y1) - max(a.y0, b.y0)
    if ox <= 0 or oy <= 0:
        return 0.0
    inter = ox * oy
    return inter / (a.area + b.area - inter)


@dataclass
class FrameMatch:
    tp: int
    fp: int
    fn: int
    pairs: list  # (detection, truth) tuples for matched boxes


def match_frame(detections, truths, iou_thr: float = 0.5) -> FrameMatch:
    """Greedy one-to-one matching by descending IoU at a threshold.

    Detections are ranked by confidence (peak) then left edge so matching is
    deterministic. Counts satisfy tp+fn == len(truths), tp+fp == len(detections).
    """
    order = sorted(range(len(detections)),
                   key=lambda i: (-getattr(detections[i], "peak", 0.0),
                                  _box(detections[i]).x0))
    rank = {di: r for r, di in enumerate(order)}
    cand = []
    for di in order:
        dbox = _box(detections[di])
        for ti, truth in enumerate(truths):
            v = iou(dbox, _box(truth))
            if v > iou_thr:
                cand.append((v, di, ti))
    cand.sort(key=lambda t: (-t[0], rank[t[1]], t[2]))
    used_d, used_t = set(), set()
    pairs = []
    for v, di, ti in cand:
        if di in used_d or ti in used_t:
            continue
        used_d.add(di)
        used_t.add(ti)
        pairs.append((detections[di], truths[ti]))
    tp = len(pairs)
    return FrameMatch(tp=tp, fp=len(detections) - tp, fn=len(truths) - tp,
                      pairs=pairs)


def _box(obj) -> BBox:
    return obj if isinstance(obj, BBox) else obj.bbox


def _range_of(obj, smoothed: bool):
    if isinstance(obj, Detection):
        if smoothed and obj.smoothed_range_m is not None:
            return obj.smoothed_range_m
        return obj.range_m
    return getattr(obj, "range_m", None)


@dataclass
class Summary:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    abs_errors: list = field(default_factory=list)
    rel_errors: list = field(default_factory=list)
    true_ranges: list = field(default_factory=list)

    @property
    def precision(self):
        return self.tp / (self.tp + self.fp) if (self.tp + self.fp) else None

    @property
    def recall(self):
        return self.tp / (self.tp + self.fn) if (self.tp + self.fn) else None

    @property
    def f1(self):
        # 2tp/(2tp+fp+fn): defined (and zero) whenever any box exists on
        # either side; undefined only with no data at all
        denom = 2 * self.tp + self.fp + self.fn
        return 2 * self.tp / denom if denom else None

    @property
    def mae(self):
        return float(np.mean(self.abs_errors)) if self.abs_errors else None

    @property
    def relative_error(self):
        return float(np.mean(self.rel_errors)) if self.rel_errors else None


def evaluate(detections_by_frame: dict[int, list[Detection]],
             truths: list[GroundTruthRecord],
             iou_thr: float = 0.5, use_smoothed: bool = True) -> dict:
    """Aggregate detection and ranging metrics over a labeled stream.

    Range metrics are computed over IoU-matched pairs only. Returns a JSON-
    ready report; undefined ratios are reported as null, never as 0.
    """
    overall = Summary()
    bins = {name: Summary() for name, _, _ in RANGE_BINS}
    per_frame = []
    for rec in truths:
        dets = detections_by_frame.get(rec.frame_index, [])
        m = match_frame(dets, list(rec.targets), iou_thr)
        overall.tp += m.tp
        overall.fp += m.fp
        overall.fn += m.fn
        per_frame.append({"frame_index": rec.frame_index, "tp": m.tp,
                          "fp": m.fp, "fn": m.fn})
        for det, truth in m.pairs:
            est = _range_of(det, use_smoothed)
            if est is None:
                continue
            err = abs(est - truth.range_m)
            overall.abs_errors.append(err)
            overall.rel_errors.append(err / truth.range_m)
            overall.true_ranges.append(truth.range_m)
            for name, lo, hi in RANGE_BINS:
                if lo < truth.range_m <= hi or (lo == 0.0 and truth.range_m <= hi):
                    bins[name].abs_errors.append(err)
                    bins[name].rel_errors.append(err / truth.range_m)
    report = {
        "detection": {
            "tp": overall.tp, "fp": overall.fp, "fn": overall.fn,
            "precision": overall.precision, "recall": overall.recall,
            "f1": overall.f1,
        },
        "ranging": {
            "matched_with_range": len(overall.abs_errors),
            "mae_m": overall.mae,
            "relative_error": overall.relative_error,
            "per_bin": {
                name: {"count": len(s.abs_errors), "mae_m": s.mae,
                       "relative_error": s.relative_error}
                for name, s in bins.items()
            },
            "cdf_abs_error_m": sorted(overall.abs_errors),
        },
        "per_frame": per_frame,
    }
    return report


def write_report(path, report: dict, timestamp: str | None = None) -> None:
    doc = dict(report)
    doc["generated_at"] = timestamp or ""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")


def write_frame_csv(path, report: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("frame_index,tp,fp,fn\n")
        for row in report["per_frame"]:
            fh.write(f"{row['frame_index']},{row['tp']},{row['fp']},{row['fn']}\n")
