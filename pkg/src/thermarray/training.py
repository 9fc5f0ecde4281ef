"""Build ranging training sets from labeled streams and fit the regressor.

Training ROIs come from the ground-truth boxes, not the detector, so model
quality is decoupled from detection quality.
"""

from __future__ import annotations

import numpy as np

from .config import GBRTParams, PipelineConfig
from .errors import PatchTooSmallError, ValidationError
from .gbrt import GBRTModel, fit
from .pipeline import _int_box_inside
from .preprocess import preprocess
from .ranging import make_feature
from .types import GroundTruthRecord, RawFrame, Roi


def build_training_set(frames: list[RawFrame],
                       labels: list[GroundTruthRecord],
                       cfg: PipelineConfig | None = None,
                       include_center: bool = True
                       ) -> tuple[np.ndarray, np.ndarray]:
    """Feature matrix and range targets from ground-truth ROIs."""
    if cfg is None:
        cfg = PipelineConfig()
    by_index = {rec.frame_index: rec for rec in labels}
    rows, targets = [], []
    for i, frame in enumerate(frames):
        rec = by_index.get(i)
        if rec is None or not rec.targets:
            continue
        tmap, _ = preprocess(frame, cfg)
        h, w = tmap.shape
        for truth in rec.targets:
            box = _int_box_inside(truth.bbox, w, h)
            if box is None:
                continue
            try:
                roi = Roi.from_map(tmap, box)
                rows.append(make_feature(roi, cfg.pool_rows, cfg.pool_cols,
                                         include_center))
            except (PatchTooSmallError, ValidationError):
                continue
            targets.append(truth.range_m)
    if not rows:
        raise ValidationError("no usable training ROIs in the labeled stream")
    return np.array(rows), np.array(targets)


def train_model(frames: list[RawFrame], labels: list[GroundTruthRecord],
                cfg: PipelineConfig | None = None,
                params: GBRTParams | None = None,
                include_center: bool = True) -> GBRTModel:
    if cfg is None:
        cfg = PipelineConfig()
    X, y = build_training_set(frames, labels, cfg, include_center)
    return fit(X, y, params or cfg.gbrt,
               feature_config={"pool_rows": cfg.pool_rows,
                               "pool_cols": cfg.pool_cols,
                               "include_center": include_center})
