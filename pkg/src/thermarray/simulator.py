"""Radiometric forward model and synthetic scene renderer.

The forward model treats the sensor band as total-band (Stefan-Boltzmann law),
blends emitted power with path radiance under exponential attenuation, and is
closed-form invertible, which gives the analytic range oracle used throughout
the test suite.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import RadiometricDomainError, ValidationError
from .types import (BBox, GroundTruthRecord, RawFrame, SensorSpec, Subpage,
                    TargetTruth)

STEFAN_BOLTZMANN = 5.670374419e-8  # W m^-2 K^-4
ABSOLUTE_ZERO_C = -273.15

# body geometry as fractions of the configured (width, height) box
HEAD_HEIGHT_FRAC = 0.16
HEAD_WIDTH_FRAC = 0.45
SUPERSAMPLE = 3


def radiant_power(temp_c: float | np.ndarray):
    """Total-band radiant power per unit area of a blackbody at `temp_c`."""
    t_k = np.asarray(temp_c, dtype=np.float64) + 273.15
    if np.any(t_k < 0):
        raise ValidationError("temperature below absolute zero")
    out = STEFAN_BOLTZMANN * t_k ** 4
    return float(out) if np.isscalar(temp_c) else out


def temperature_from_power(power):
    """Inverse of :func:`radiant_power`."""
    power = np.asarray(power, dtype=np.float64)
    t = (power / STEFAN_BOLTZMANN) ** 0.25 + ABSOLUTE_ZERO_C
    return float(t) if t.ndim == 0 else t


@dataclass(frozen=True)
class RadiometricParams:
    """Emission and path-attenuation parameters of the scene."""

    emissivity: float = 0.98
    gamma: float = 0.15            # attenuation coefficient, 1/m
    ambient_temp_c: float = 25.0
    skin_temp_c: float = 34.0

    def __post_init__(self):
        if not 0.0 < self.emissivity <= 1.0:
            raise ValidationError("emissivity must be in (0, 1]")
        if self.gamma < 0.0:
            raise ValidationError("gamma must be >= 0")
        if self.skin_temp_c <= self.ambient_temp_c:
            raise ValidationError(
                "skin temperature must exceed ambient for ranging to be defined")

    def to_dict(self) -> dict:
        return {"emissivity": self.emissivity, "gamma": self.gamma,
                "ambient_temp_c": self.ambient_temp_c,
                "skin_temp_c": self.skin_temp_c}

    @classmethod
    def from_dict(cls, d: dict) -> "RadiometricParams":
        return cls(**d)


def detected_power(params: RadiometricParams, emitted_power, r, gamma=None):
    """Power reaching the sensor after `r` meters: attenuated emission plus
    path radiance that fills in toward the ambient level."""
    g = params.gamma if gamma is None else gamma
    transmission = np.exp(-np.asarray(g, dtype=np.float64) * r)
    ambient = radiant_power(params.ambient_temp_c)
    return transmission * emitted_power + (1.0 - transmission) * ambient


def apparent_temperature(params: RadiometricParams, r: float) -> float:
    """Temperature the sensor reports for bare skin at range `r`."""
    if r < 0:
        raise ValidationError("range must be >= 0")
    emitted = params.emissivity * radiant_power(params.skin_temp_c)
    return float(temperature_from_power(detected_power(params, emitted, r)))


def invert_range(apparent_c: float, params: RadiometricParams) -> float:
    """Analytic inverse of :func:`apparent_temperature`.

    Raises :class:`RadiometricDomainError` when `apparent_c` lies outside the
    image of the forward model (at or below ambient, or hotter than the
    zero-range reading).
    """
    if params.gamma <= 0.0:
        raise ValidationError("invert_range requires gamma > 0")
    ambient = radiant_power(params.ambient_temp_c)
    emitted = params.emissivity * radiant_power(params.skin_temp_c)
    if emitted <= ambient:
        raise RadiometricDomainError(
            "emissivity-scaled skin power does not exceed ambient; "
            "apparent temperature is not decreasing in range")
    power = radiant_power(apparent_c)
    u = (power - ambient) / (emitted - ambient)
    if u <= 0.0:
        raise RadiometricDomainError(
            f"apparent temperature {apparent_c:.3f} C at or below ambient; "
            "range unbounded")
    if u > 1.0:
        # tolerate inverse-then-forward rounding at r == 0
        if u > 1.0 + 1e-9:
            raise RadiometricDomainError(
                f"apparent temperature {apparent_c:.3f} C exceeds the "
                "zero-range reading")
        u = 1.0
    return -math.log(u) / params.gamma


# --------------------------------------------------------------------------
# scenes
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Waypoint:
    t: float
    range_m: float
    azimuth_deg: float = 0.0
    elevation_deg: float = 0.0


def waypoint_trajectory(waypoints: Sequence[Waypoint]) -> Callable:
    """Piecewise-linear trajectory; None outside the waypoint time span."""
    pts = sorted(waypoints, key=lambda w: w.t)
    if not pts:
        raise ValidationError("trajectory needs at least one waypoint")
    ts = np.array([w.t for w in pts])
    rs = np.array([w.range_m for w in pts])
    azs = np.array([w.azimuth_deg for w in pts])
    els = np.array([w.elevation_deg for w in pts])

    def traj(t: float):
        if t < ts[0] - 1e-9 or t > ts[-1] + 1e-9:
            return None
        return (float(np.interp(t, ts, rs)), float(np.interp(t, ts, azs)),
                float(np.interp(t, ts, els)))

    return traj


@dataclass(frozen=True)
class TargetConfig:
    """One simulated person: trajectory plus body rendering parameters."""

    trajectory: Callable              # t -> (range_m, azimuth_deg, elevation_deg) | None
    body_size_m: tuple[float, float] = (0.5, 1.7)
    clothing_factor: float = 0.7
    exposed_head: bool = True

    def __post_init__(self):
        if not 0.0 <= self.clothing_factor <= 1.0:
            raise ValidationError("clothing_factor must be in [0, 1]")
        w, h = self.body_size_m
        if w <= 0 or h <= 0:
            raise ValidationError("body size must be positive")


@dataclass(frozen=True)
class SceneConfig:
    spec: SensorSpec = field(default_factory=SensorSpec)
    params: RadiometricParams = field(default_factory=RadiometricParams)
    targets: tuple[TargetConfig, ...] = ()
    noise_sigma_c: float = 0.0
    border_bias_strength: float = 0.0
    duration_s: float = 1.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(self.targets))
        if self.noise_sigma_c < 0:
            raise ValidationError("noise sigma must be >= 0")
        if not 0.0 <= self.border_bias_strength <= 1.0:
            raise ValidationError("border_bias_strength must be in [0, 1]")

    @property
    def frame_count(self) -> int:
        return max(1, int(round(self.duration_s * self.spec.frame_rate_hz)))


def load_scene(path) -> SceneConfig:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    return scene_from_dict(doc)


def scene_from_dict(doc: dict) -> SceneConfig:
    spec = SensorSpec.from_dict(doc["spec"]) if "spec" in doc else SensorSpec()
    params = (RadiometricParams.from_dict(doc["params"])
              if "params" in doc else RadiometricParams())
    targets = []
    for t in doc.get("targets", []):
        waypoints = [Waypoint(**w) for w in t["waypoints"]]
        targets.append(TargetConfig(
            trajectory=waypoint_trajectory(waypoints),
            body_size_m=tuple(t.get("body_size_m", (0.5, 1.7))),
            clothing_factor=float(t.get("clothing_factor", 0.7)),
            exposed_head=bool(t.get("exposed_head", True))))
    return SceneConfig(
        spec=spec, params=params, targets=tuple(targets),
        noise_sigma_c=float(doc.get("noise_sigma_c", 0.0)),
        border_bias_strength=float(doc.get("border_bias_strength", 0.0)),
        duration_s=float(doc.get("duration_s", 1.0)),
        seed=int(doc.get("seed", 0)))


# --------------------------------------------------------------------------
# rendering
# --------------------------------------------------------------------------

def _project(scene: SceneConfig, range_m, azimuth_deg, elevation_deg,
             body_w, body_h):
    """Pinhole projection of the body box to raw-pixel coordinates."""
    spec = scene.spec
    xc = spec.width_px / 2.0 + spec.focal_h_px * math.tan(math.radians(azimuth_deg))
    yc = spec.height_px / 2.0 - spec.focal_v_px * math.tan(math.radians(elevation_deg))
    half_w = spec.focal_h_px * (body_w / 2.0) / range_m
    half_h = spec.focal_v_px * (body_h / 2.0) / range_m
    return xc, yc, half_w, half_h


def render_frame(scene: SceneConfig, t: float, scale: int = 20
                 ) -> tuple[RawFrame, GroundTruthRecord]:
    """Render the scene at time `t`.

    Ground-truth boxes are reported in interpolated-pixel coordinates for the
    given expansion `scale`. Per-pixel power is supersampled 3x3, composited
    far-to-near, then converted back to an apparent temperature. Noise comes
    from an RNG stream derived from (seed, frame_index), so rendering is
    deterministic and frame-parallel safe.
    """
    spec = scene.spec
    params = scene.params
    if t < -1e-9 or t > scene.duration_s + 1e-9:
        raise ValidationError(f"t={t} outside scene duration")
    frame_index = int(round(t * spec.frame_rate_hz))

    h, w = spec.height_px, spec.width_px
    ss = SUPERSAMPLE
    # supersample grid of pixel-interior sample coordinates
    ys = (np.arange(h * ss) + 0.5) / ss
    xs = (np.arange(w * ss) + 0.5) / ss
    sx = xs[None, :]
    sy = ys[:, None]

    ambient = radiant_power(params.ambient_temp_c)
    skin = params.emissivity * radiant_power(params.skin_temp_c)
    power = np.full((h * ss, w * ss), ambient)

    # horizontal bias: attenuation grows toward the border columns
    bias = 1.0 + scene.border_bias_strength * np.abs(sx - w / 2.0) / (w / 2.0)
    gamma_eff = params.gamma * bias

    visible = []
    for tid, target in enumerate(scene.targets):
        pose = target.trajectory(t)
        if pose is None:
            continue
        range_m, az, el = pose
        if range_m <= 0:
            continue
        body_w, body_h = target.body_size_m
        xc, yc, half_w, half_h = _project(scene, range_m, az, el, body_w, body_h)
        x0, x1 = xc - half_w, xc + half_w
        y0, y1 = yc - half_h, yc + half_h
        if x1 <= 0 or x0 >= w or y1 <= 0 or y0 >= h:
            continue
        visible.append((range_m, tid, target, (x0, y0, x1, y1), (xc, yc, half_w, half_h)))

    # composite far to near so close targets occlude distant ones
    for range_m, tid, target, _, geom in sorted(visible, key=lambda v: -v[0]):
        xc, yc, half_w, half_h = geom
        head_h = 2 * half_h * HEAD_HEIGHT_FRAC
        head_half_w = half_w * HEAD_WIDTH_FRAC
        head_cy = yc - half_h + head_h / 2.0
        torso_cy = yc - half_h + head_h + (2 * half_h - head_h) / 2.0
        torso_half_h = (2 * half_h - head_h) / 2.0

        head = (((sx - xc) / max(head_half_w, 1e-9)) ** 2
                + ((sy - head_cy) / max(head_h / 2.0, 1e-9)) ** 2) <= 1.0
        torso = (((sx - xc) / max(half_w, 1e-9)) ** 2
                 + ((sy - torso_cy) / max(torso_half_h, 1e-9)) ** 2) <= 1.0

        cf = target.clothing_factor
        torso_emit = ambient + cf * (skin - ambient)
        head_emit = skin if target.exposed_head else torso_emit

        trans = np.exp(-gamma_eff * range_m)
        seen_head = trans * head_emit + (1.0 - trans) * ambient
        seen_torso = trans * torso_emit + (1.0 - trans) * ambient
        power = np.where(torso, np.broadcast_to(seen_torso, power.shape), power)
        power = np.where(head, np.broadcast_to(seen_head, power.shape), power)

    # average supersamples down to sensor resolution
    power = power.reshape(h, ss, w, ss).mean(axis=(1, 3))
    temps = temperature_from_power(power)

    if scene.noise_sigma_c > 0:
        rng = np.random.default_rng(np.random.SeedSequence((scene.seed, frame_index)))
        temps = temps + rng.normal(0.0, scene.noise_sigma_c, size=temps.shape)

    truths = []
    for range_m, tid, target, (x0, y0, x1, y1), _ in sorted(visible, key=lambda v: v[1]):
        cx0 = max(0.0, x0) * scale
        cy0 = max(0.0, y0) * scale
        cx1 = min(float(w), x1) * scale
        cy1 = min(float(h), y1) * scale
        if cx1 - cx0 < 1.0 or cy1 - cy0 < 1.0:
            continue
        truths.append(TargetTruth(id=tid, bbox=BBox(cx0, cy0, cx1, cy1),
                                  range_m=range_m,
                                  real_height_m=target.body_size_m[1]))

    frame = RawFrame(spec=spec, values=temps,
                     timestamp=frame_index / spec.frame_rate_hz,
                     subpage=Subpage.FULL)
    return frame, GroundTruthRecord(frame_index=frame_index, targets=tuple(truths))


def render_scene(scene: SceneConfig, scale: int = 20
                 ) -> tuple[list[RawFrame], list[GroundTruthRecord]]:
    """Render every frame of the scene at its native frame rate."""
    frames, labels = [], []
    for i in range(scene.frame_count):
        t = i / scene.spec.frame_rate_hz
        frame, truth = render_frame(scene, min(t, scene.duration_s), scale=scale)
        frames.append(frame)
        labels.append(truth)
    return frames, labels
