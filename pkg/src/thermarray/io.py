"""File formats: frame streams, label files, model documents.

Frame stream layout: one JSON header line (sensor spec, frame count, per-frame
timestamps and subpages, encoding version), then frame-sequential row-major
little-endian float32 grids. Missing cells are IEEE-754 quiet NaN. Everything
round-trips bit-exactly.
"""

from __future__ import annotations

import json
import os
from typing import Iterable, Sequence

import numpy as np

from .errors import (DimensionMismatchError, MalformedHeaderError,
                     SchemaVersionError, TruncatedPayloadError)
from .types import (BBox, GroundTruthRecord, RawFrame, SensorSpec, Subpage,
                    TargetTruth)

STREAM_VERSION = 1
LABELS_VERSION = 1
MODEL_VERSION = 1


# --------------------------------------------------------------------------
# frame streams
# --------------------------------------------------------------------------

def write_stream(path, spec: SensorSpec, frames: Sequence[RawFrame]) -> None:
    frames = list(frames)
    for i, frame in enumerate(frames):
        if frame.spec != spec:
            raise DimensionMismatchError(
                f"frame {i} was captured with a different sensor spec")
    header = {
        "version": STREAM_VERSION,
        "spec": spec.to_dict(),
        "frames": len(frames),
        "timestamps": [f.timestamp for f in frames],
        "subpages": [f.subpage.value for f in frames],
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        for frame in frames:
            fh.write(np.ascontiguousarray(frame.values, dtype="<f4").tobytes())


def read_stream(path) -> tuple[SensorSpec, list[RawFrame]]:
    with open(path, "rb") as fh:
        line = fh.readline()
        if not line.strip():
            raise TruncatedPayloadError(f"{path}: no header line")
        try:
            header = json.loads(line.decode("utf-8"))
            version = header["version"]
            spec = SensorSpec.from_dict(header["spec"])
            count = int(header["frames"])
            timestamps = header["timestamps"]
            subpages = header["subpages"]
        except (ValueError, KeyError, TypeError) as exc:
            raise MalformedHeaderError(f"{path}: {exc}") from exc
        if version != STREAM_VERSION:
            raise SchemaVersionError(
                f"{path}: stream version {version}, expected {STREAM_VERSION}")
        if len(timestamps) != count or len(subpages) != count:
            raise MalformedHeaderError(
                f"{path}: per-frame metadata length does not match frame count")
        frame_bytes = spec.width_px * spec.height_px * 4
        frames = []
        for i in range(count):
            buf = fh.read(frame_bytes)
            if len(buf) != frame_bytes:
                raise TruncatedPayloadError(
                    f"{path}: frame {i} truncated ({len(buf)}/{frame_bytes} bytes)")
            values = np.frombuffer(buf, dtype="<f4").reshape(
                spec.height_px, spec.width_px)
            frames.append(RawFrame(spec=spec, values=values,
                                   timestamp=float(timestamps[i]),
                                   subpage=Subpage(subpages[i])))
        if fh.read(1):
            raise MalformedHeaderError(f"{path}: trailing bytes after last frame")
    return spec, frames


# --------------------------------------------------------------------------
# label files (JSON lines keyed by frame_index)
# --------------------------------------------------------------------------

def write_labels(path, records: Iterable[GroundTruthRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"version": LABELS_VERSION}, sort_keys=True) + "\n")
        for rec in records:
            doc = {
                "frame_index": rec.frame_index,
                "targets": [
                    {"id": t.id, "bbox": t.bbox.to_list(),
                     "range_m": t.range_m, "real_height_m": t.real_height_m}
                    for t in rec.targets
                ],
            }
            fh.write(json.dumps(doc, sort_keys=True) + "\n")


def read_labels(path) -> list[GroundTruthRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        head = fh.readline()
        if not head.strip():
            return []
        try:
            meta = json.loads(head)
        except ValueError as exc:
            raise MalformedHeaderError(f"{path}: {exc}") from exc
        if meta.get("version") != LABELS_VERSION:
            raise SchemaVersionError(
                f"{path}: labels version {meta.get('version')}, "
                f"expected {LABELS_VERSION}")
        for line in fh:
            if not line.strip():
                continue
            doc = json.loads(line)
            targets = [
                TargetTruth(id=int(t["id"]), bbox=BBox.from_list(t["bbox"]),
                            range_m=float(t["range_m"]),
                            real_height_m=float(t["real_height_m"]))
                for t in doc["targets"]
            ]
            records.append(GroundTruthRecord(frame_index=int(doc["frame_index"]),
                                             targets=tuple(targets)))
    return records


# --------------------------------------------------------------------------
# model documents
# --------------------------------------------------------------------------

def write_model(path, model) -> None:
    doc = model.to_dict()
    doc["version"] = MODEL_VERSION
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


def read_model(path):
    from .gbrt import GBRTModel

    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except ValueError as exc:
            raise MalformedHeaderError(f"{path}: {exc}") from exc
    version = doc.get("version")
    if version != MODEL_VERSION:
        raise SchemaVersionError(
            f"{path}: model version {version}, expected {MODEL_VERSION}")
    return GBRTModel.from_dict(doc)


# --------------------------------------------------------------------------
# detection logs (pipeline output)
# --------------------------------------------------------------------------

def write_detections(path, meta: dict, per_frame: Iterable[tuple[int, list]]) -> None:
    """`per_frame` yields (frame_index, [Detection, ...])."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"meta": meta}, sort_keys=True) + "\n")
        for frame_index, detections in per_frame:
            doc = {
                "frame_index": frame_index,
                "detections": [
                    {"track_id": d.track_id, "bbox": d.bbox.to_list(),
                     "range_m": d.range_m,
                     "smoothed_range_m": d.smoothed_range_m,
                     "peak": d.peak}
                    for d in detections
                ],
            }
            fh.write(json.dumps(doc, sort_keys=True) + "\n")


def read_detections(path) -> tuple[dict, list[dict]]:
    from .types import Detection

    with open(path, "r", encoding="utf-8") as fh:
        head = fh.readline()
        if not head.strip():
            raise TruncatedPayloadError(f"{path}: empty detections file")
        try:
            meta = json.loads(head)["meta"]
        except (ValueError, KeyError) as exc:
            raise MalformedHeaderError(f"{path}: {exc}") from exc
        rows = []
        for line in fh:
            if not line.strip():
                continue
            doc = json.loads(line)
            detections = [
                Detection(bbox=BBox.from_list(d["bbox"]),
                          track_id=int(d["track_id"]),
                          range_m=d.get("range_m"),
                          smoothed_range_m=d.get("smoothed_range_m"),
                          peak=float(d.get("peak", 0.0)))
                for d in doc["detections"]
            ]
            rows.append({"frame_index": int(doc["frame_index"]),
                         "detections": detections})
    return meta, rows


def ensure_parent(path) -> None:
    parent = os.path.dirname(os.path.abspath(path))
    if parent:
        os.makedirs(parent, exist_ok=True)
