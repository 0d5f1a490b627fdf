"""Constant-velocity Kalman filter over ``(cx, cy, aspect, height)``.

Noise is scaled by box height as in DeepSORT (position std ``h/20``, velocity
std ``h/160`` per frame). Prediction takes an explicit frame gap ``dt`` so
decimated footage can be filtered in original-frame velocity units.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import BoundingBox

MIN_HEIGHT = 1e-3


@dataclass(frozen=True, eq=False)
class KalmanState:
    mean: np.ndarray
    covariance: np.ndarray

    def to_box(self) -> BoundingBox:
        return BoundingBox.from_array(state_to_xyxy(self.mean))


def box_to_xyah(box: BoundingBox) -> np.ndarray:
    cx, cy = box.center
    return np.array([cx, cy, box.width / box.height, box.height], dtype=np.float64)


def state_to_xyxy(mean) -> np.ndarray:
    cx, cy, a, h = mean[:4]
    h = max(h, MIN_HEIGHT)
    w = max(a * h, MIN_HEIGHT)
    return np.array([cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2], dtype=np.float64)


def _symmetrize(p: np.ndarray) -> np.ndarray:
    return 0.5 * (p + p.T)


class KalmanFilter:
    def __init__(self, std_weight_position=1.0 / 20, std_weight_velocity=1.0 / 160, measurement_noise_scale=1.0):
        self.std_weight_position = std_weight_position
        self.std_weight_velocity = std_weight_velocity
        self.measurement_noise_scale = measurement_noise_scale
        self._update_mat = np.eye(4, 8)

    @staticmethod
    def transition(dt: float) -> np.ndarray:
        f = np.eye(8)
        f[:4, 4:] = dt * np.eye(4)
        return f

    def process_noise(self, h: float, dt: float) -> np.ndarray:
        # Q grows linearly in dt (variance of a random walk over dt frames)
        sp, sv = self.std_weight_position * h, self.std_weight_velocity * h
        std = np.array([sp, sp, 1e-2, sp, sv, sv, 1e-5, sv])
        return np.diag(dt * std**2)

    def measurement_noise(self, h: float) -> np.ndarray:
        sp = self.std_weight_position * h
        std = np.array([sp, sp, 1e-1, sp])
        return np.diag(self.measurement_noise_scale * std**2)

    def initiate(self, box: BoundingBox) -> KalmanState:
        z = box_to_xyah(box)
        h = z[3]
        sp, sv = self.std_weight_position * h, self.std_weight_velocity * h
        std = np.array([2 * sp, 2 * sp, 1e-2, 2 * sp, 10 * sv, 10 * sv, 1e-5, 10 * sv])
        return KalmanState(np.r_[z, np.zeros(4)], np.diag(std**2))

    def predict(self, state: KalmanState, dt: float = 1) -> KalmanState:
        if dt < 0:
            raise ValueError("dt must be non-negative")
        f = self.transition(dt)
        mean = f @ state.mean
        cov = f @ state.covariance @ f.T + self.process_noise(state.mean[3], dt)
        return KalmanState(mean, _symmetrize(cov))

    def project(self, state: KalmanState) -> tuple[np.ndarray, np.ndarray]:
        hm = self._update_mat
        s = hm @ state.covariance @ hm.T + self.measurement_noise(state.mean[3])
        return hm @ state.mean, _symmetrize(s)

    def update(self, state: KalmanState, box: BoundingBox) -> KalmanState:
        z = box_to_xyah(box)
        hm = self._update_mat
        r = self.measurement_noise(state.mean[3])
        projected, s = self.project(state)
        gain = np.linalg.solve(s, hm @ state.covariance).T
        mean = state.mean + gain @ (z - projected)
        mean[3] = max(mean[3], MIN_HEIGHT)
        i_kh = np.eye(8) - gain @ hm
        # Joseph form keeps the covariance PSD under rounding
        cov = i_kh @ state.covariance @ i_kh.T + gain @ r @ gain.T
        return KalmanState(mean, _symmetrize(cov))


_DEFAULT = KalmanFilter()


def kf_initiate(box: BoundingBox) -> KalmanState:
    return _DEFAULT.initiate(box)


def kf_predict(state: KalmanState, dt: float = 1) -> KalmanState:
    return _DEFAULT.predict(state, dt)


def kf_update(state: KalmanState, box: BoundingBox) -> KalmanState:
    return _DEFAULT.update(state, box)
