"""Frame-ordered orchestration of the full sensing chain.

A Pipeline owns the tracker set and candidate buffer for one stream; distinct
streams get distinct Pipeline instances.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .config import PipelineConfig
from .detector import detect
from .errors import PatchTooSmallError, ValidationError
from .fusion import (associate, extract_rois, temporal_consistency,
                     vertical_stack_split)
from .gbrt import GBRTModel
from .metrics import iou
from .preprocess import preprocess
from .ranging import KalmanState, estimate_range, kalman_update
from .tracker import (Track, kcf_init, kcf_update, overlap_ratios, retarget,
                      split_or_merge)
from .types import BBox, Detection, RawFrame, Roi


def _int_box_inside(box: BBox, w: int, h: int) -> BBox | None:
    b = box.clipped(w, h).to_int_grid()
    x0 = int(min(max(b.x0, 0), w - 1))
    y0 = int(min(max(b.y0, 0), h - 1))
    x1 = int(min(max(b.x1, x0 + 1), w))
    y1 = int(min(max(b.y1, y0 + 1), h))
    if x1 <= x0 or y1 <= y0:
        return None
    return BBox(x0, y0, x1, y1)


@dataclass
class Pipeline:
    cfg: PipelineConfig = field(default_factory=PipelineConfig)
    model: GBRTModel | None = None
    use_kalman: bool = True

    def __post_init__(self):
        self.tracks: list[Track] = []
        self.next_id = 1
        self.prev_detections: list[BBox] = []
        self.pending: list[BBox] = []
        self.frame_index = 0

    def step(self, frame: RawFrame) -> list[Detection]:
        cfg = self.cfg
        tmap, gray = preprocess(frame, cfg)
        h, w = tmap.shape
        boxes = detect(tmap, gray, cfg)

        dets = temporal_consistency(
            boxes, self.prev_detections, [t.bbox for t in self.tracks],
            first_frame=self.frame_index == 0)

        for track in self.tracks:
            kcf_update(track, gray, cfg)

        matches, unmatched_dets, unmatched_tracks = associate(
            dets, self.tracks, cfg.assoc_iou)
        for di, track in matches:
            retarget(track, gray, dets[di], cfg)
            track.misses = 0
        for track in unmatched_tracks:
            track.misses += 1

        # unmatched detections spawn a track once they have survived the
        # consistency filter for confirm_frames consecutive frames
        new_pending = []
        for di in unmatched_dets:
            det = dets[di]
            confirmed = cfg.confirm_frames <= 1 or any(
                iou(det, p) > 0 for p in self.pending)
            if confirmed:
                try:
                    self.tracks.append(kcf_init(gray, det, self.next_id, cfg))
                    self.next_id += 1
                except ValidationError:
                    pass
            else:
                new_pending.append(det)
        self.pending = new_pending

        self.tracks = [t for t in self.tracks if t.misses <= cfg.miss_limit]

        # one box per user when a detection spans vertically stacked tracks
        for det in dets:
            stacked = sorted(
                (t for t in self.tracks
                 if overlap_ratios(t.bbox, det).horizontal > cfg.h_thr),
                key=lambda t: t.bbox.center[1])
            if len(stacked) < 2:
                continue
            sub = vertical_stack_split(det, stacked, tmap, cfg)
            if len(sub) == len(stacked):
                for box, track in zip(sub, stacked):
                    retarget(track, gray, box, cfg)
                    track.misses = 0

        self.tracks = split_or_merge(self.tracks, tmap, cfg)

        out = []
        for track in sorted(self.tracks, key=lambda t: t.id):
            box = _int_box_inside(track.bbox, w, h)
            if box is None:
                continue
            est = smoothed = None
            if self.model is not None:
                try:
                    roi = Roi.from_map(tmap, box)
                    est = max(cfg.min_range_m, estimate_range(self.model, roi))
                except PatchTooSmallError:
                    est = None
                if est is not None and self.use_kalman:
                    dt = 1.0 / frame.spec.frame_rate_hz
                    if track.kalman is None:
                        track.kalman = KalmanState.initial(
                            est, cfg.kalman_q, cfg.kalman_r)
                    track.kalman = kalman_update(track.kalman, est, dt)
                    smoothed = max(cfg.min_range_m, track.kalman.range_m)
            out.append(Detection(bbox=box, track_id=track.id, range_m=est,
                                 smoothed_range_m=smoothed, peak=track.peak))

        self.prev_detections = boxes
        self.frame_index += 1
        return out


def run_pipeline(frames, cfg: PipelineConfig | None = None,
                 model: GBRTModel | None = None, use_kalman: bool = True):
    """Run a whole stream; yields (frame_index, detections)."""
    pipe = Pipeline(cfg=cfg or PipelineConfig(), model=model,
                    use_kalman=use_kalman)
    for i, frame in enumerate(frames):
        yield i, pipe.step(frame)
