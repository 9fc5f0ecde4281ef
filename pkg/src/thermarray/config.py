"""Layered configuration for every tunable in the pipeline.

Resolution order is defaults < config file < explicit overrides, so one JSON
document fully describes a run.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

from .errors import ValidationError


@dataclass(frozen=True)
class GBRTParams:
    """Hyperparameters of the histogram gradient-boosted regressor."""

    n_bins: int = 256
    max_iterations: int = 200
    learning_rate: float = 0.1
    max_leaves: int = 31
    min_samples_leaf: int = 20
    l2_regularization: float = 0.0
    early_stopping_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.n_bins < 2:
            raise ValidationError("n_bins must be >= 2")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValidationError("learning_rate must be in (0, 1]")
        if self.max_leaves < 2:
            raise ValidationError("max_leaves must be >= 2")
        if not 0.0 <= self.early_stopping_fraction < 1.0:
            raise ValidationError("early_stopping_fraction must be in [0, 1)")


@dataclass(frozen=True)
class PipelineConfig:
    """All pipeline tunables in one auditable document."""

    # preprocess
    scale: int = 20                 # per-dimension bilinear expansion factor
    cutoff_c: float = 37.0          # clamp ceiling, deg C

    # spatial detector
    kappa: int = 5                  # minimum single-user size, raw pixels
    c_off: float = 2.0              # adaptive-threshold offset, intensity levels
    k_cap: int = 4                  # most users one component is split into

    # temporal tracker (KCF)
    kcf_padding: float = 1.5
    kcf_lambda: float = 1e-4
    kcf_learning_rate: float = 0.075
    kcf_kernel_sigma: float = 0.2
    kcf_output_sigma_factor: float = 0.125
    kcf_window_px: int = 64         # fixed internal correlation resolution
    h_thr: float = 0.6              # horizontal overlap ratio threshold
    v_thr: float = 0.3              # vertical overlap ratio threshold
    peak_min: float = 0.15
    miss_limit: int = 8             # 0.5 s at 16 Hz

    # fusion
    assoc_iou: float = 0.3
    confirm_frames: int = 2         # frames a detection must survive to spawn

    # ranging
    pool_rows: int = 2
    pool_cols: int = 4
    kalman_q: float = 0.5           # process noise intensity
    kalman_r: float = 0.1           # measurement noise variance, m^2
    min_range_m: float = 0.05       # floor for regressor output

    # fall detection
    fall_speed_mps: float = 1.0     # |dH/dt| trigger
    fall_drop_m: float = 0.6
    fall_window_s: float = 1.0

    gbrt: GBRTParams = field(default_factory=GBRTParams)

    def __post_init__(self):
        if self.scale < 1:
            raise ValidationError("scale must be >= 1")
        if self.kappa < 1:
            raise ValidationError("kappa must be >= 1")

    # --- derived quantities -------------------------------------------------

    @property
    def kernel_size(self) -> int:
        """Adaptive-threshold kernel: kappa * scale rounded up to odd."""
        s = self.kappa * self.scale
        return s if s % 2 == 1 else s + 1

    @property
    def min_area(self) -> float:
        """Minimum pixel area of a single user's region, interpolated px^2."""
        return (self.kappa * self.scale) ** 2 / 4.0

    @property
    def user_width_px(self) -> int:
        """Expected single-user width in interpolated pixels."""
        return self.kappa * self.scale

    @property
    def d_max(self) -> int:
        """Per-row search window half-width for curved cuts."""
        return 2 * self.scale

    # --- (de)serialization ---------------------------------------------------

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        d = dict(d)
        gbrt = d.pop("gbrt", None)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        if gbrt is not None:
            d["gbrt"] = GBRTParams(**gbrt)
        return cls(**d)

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def replace(self, **kwargs) -> "PipelineConfig":
        return dataclasses.replace(self, **kwargs)
