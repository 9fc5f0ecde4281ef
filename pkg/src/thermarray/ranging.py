"""ROI to range: fixed-grid max pooling, descending sort, center
compensation, regression, and constant-velocity Kalman smoothing."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PatchTooSmallError, ValidationError
from .gbrt import GBRTModel, predict
from .types import Roi


def roi_pool(roi: Roi, rows: int = 2, cols: int = 4) -> np.ndarray:
    """Per-cell maxima over a rows x cols partition of the patch.

    Cells are floor(dim/k) wide with remainder pixels assigned to the last
    cell on each axis; output is row-major.
    """
    patch = roi.patch
    h, w = patch.shape
    if h < rows or w < cols:
        raise PatchTooSmallError(
            f"patch {h}x{w} smaller than pooling grid {rows}x{cols}")
    rstep = h // rows
    cstep = w // cols
    out = np.empty(rows * cols)
    for i in range(rows):
        r0 = i * rstep
        r1 = (i + 1) * rstep if i < rows - 1 else h
        for j in range(cols):
            c0 = j * cstep
            c1 = (j + 1) * cstep if j < cols - 1 else w
            out[i * cols + j] = patch[r0:r1, c0:c1].max()
    return out


def make_feature(roi: Roi, rows: int = 2, cols: int = 4,
                 include_center: bool = True) -> np.ndarray:
    """Pooled maxima sorted descending (hottest, typically face/neck, first),
    concatenated with the normalized ROI center.

    Output length is rows*cols (+2 with center) regardless of ROI size.
    `include_center=False` is the horizontal-bias ablation.
    """
    tau = np.sort(roi_pool(roi, rows, cols))[::-1]
    if not include_center:
        return tau
    return np.concatenate([tau, roi.center])


def estimate_range(model: GBRTModel, roi: Roi) -> float:
    """Single-frame range estimate; no temporal smoothing."""
    fc = model.feature_config
    feature = make_feature(roi,
                           rows=int(fc.get("pool_rows", 2)),
                           cols=int(fc.get("pool_cols", 4)),
                           include_center=bool(fc.get("include_center", True)))
    return predict(model, feature)


# --------------------------------------------------------------------------
# Kalman smoothing (constant-velocity model on range)
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class KalmanState:
    """Range and range-rate with covariance; immutable, updates return new
    states."""

    state: tuple[float, float]          # (range m, range-rate m/s)
    covariance: np.ndarray              # 2x2, symmetric PSD
    process_noise: float = 0.5
    measurement_noise: float = 0.1

    def __post_init__(self):
        cov = np.asarray(self.covariance, dtype=np.float64)
        object.__setattr__(self, "covariance", cov)
        cov.setflags(write=False)
        if cov.shape != (2, 2):
            raise ValidationError("covariance must be 2x2")
        if not np.allclose(cov, cov.T, atol=1e-9):
            raise ValidationError("covariance must be symmetric")
        if np.linalg.eigvalsh(cov).min() < -1e-9:
            raise ValidationError("covariance must be positive semi-definite")

    @property
    def range_m(self) -> float:
        return self.state[0]

    @property
    def rate_mps(self) -> float:
        return self.state[1]

    @classmethod
    def initial(cls, measurement: float, process_noise: float = 0.5,
                measurement_noise: float = 0.1) -> "KalmanState":
        """Start at the first measurement with wide-open covariance."""
        cov = np.diag([100.0, 100.0])
        return cls(state=(float(measurement), 0.0), covariance=cov,
                   process_noise=process_noise,
                   measurement_noise=measurement_noise)


def kalman_update(state: KalmanState, measurement: float, dt: float
                  ) -> KalmanState:
    """Constant-velocity predict step then a scalar range measurement update.

    Process noise uses the discrete-white-noise-acceleration form scaled by
    the state's process_noise intensity.
    """
    if dt <= 0:
        raise ValidationError("dt must be positive")
    x = np.array(state.state, dtype=np.float64)
    p = np.array(state.covariance, dtype=np.float64)
    f = np.array([[1.0, dt], [0.0, 1.0]])
    q = state.process_noise * np.array(
        [[dt ** 4 / 4.0, dt ** 3 / 2.0],
         [dt ** 3 / 2.0, dt ** 2]])

    x = f @ x
    p = f @ p @ f.T + q

    # measurement update on range only: H = [1, 0]
    s = p[0, 0] + state.measurement_noise
    k = p[:, 0] / s
    x = x + k * (measurement - x[0])
    ikh = np.eye(2) - np.outer(k, [1.0, 0.0])
    # Joseph form keeps the covariance symmetric PSD
    p = ikh @ p @ ikh.T + np.outer(k, k) * state.measurement_noise
    p = (p + p.T) / 2.0
    return KalmanState(state=(float(x[0]), float(x[1])), covariance=p,
                       process_noise=state.process_noise,
                       measurement_noise=state.measurement_noise)


def kalman_gain(state: KalmanState, dt: float) -> float:
    """Range-component gain the next update would apply (diagnostic)."""
    p = np.array(state.covariance, dtype=np.float64)
    f = np.array([[1.0, dt], [0.0, 1.0]])
    q = state.process_noise * np.array(
        [[dt ** 4 / 4.0, dt ** 3 / 2.0],
         [dt ** 3 / 2.0, dt ** 2]])
    p = f @ p @ f.T + q
    return float(p[0, 0] / (p[0, 0] + state.measurement_noise))
