"""Displacement fields: storage, trajectories, smoothness and estimators.

``D[:, i, h, w]`` is the motion ``(dx, dy)`` in pixels of the content sitting at
pixel ``(h, w)`` between the bin boundaries ``tau_i`` and ``tau_{i+1}``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
from scipy import ndimage
from scipy.linalg import expm

from .events import VoxelGrid, bin_event_images
from .exposure import TimeBins
from .imaging import bilinear_sample
from .lk import pyramidal_lk

DEFAULT_T = 6


@dataclass
class DisplacementField:
    data: np.ndarray  # (2, T, H, W)
    bins: TimeBins

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 4 or self.data.shape[0] != 2:
            raise ValueError(f"field must be 2xTxHxW, got {self.data.shape}")
        if self.data.shape[1] != self.bins.T:
            raise ValueError("field bin count does not match its TimeBins")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("field contains non-finite values")

    @property
    def T(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[2]

    @property
    def width(self) -> int:
        return self.data.shape[3]

    @classmethod
    def zeros(cls, bins: TimeBins, height: int, width: int) -> "DisplacementField":
        return cls(np.zeros((2, bins.T, height, width)), bins)

    def with_data(self, data) -> "DisplacementField":
        return DisplacementField(data, self.bins)


# -- motion models ---------------------------------------------------------

@dataclass(frozen=True)
class Translation:
    """Constant velocity in pixels per second."""

    vx: float
    vy: float = 0.0

    def displacement(self, xs, ys, t_a, t_b):
        dt = t_b - t_a
        return np.full(np.shape(xs), self.vx * dt), np.full(np.shape(ys), self.vy * dt)

    def source_position(self, xs, ys, t):
        """Where the content seen at ``(xs, ys)`` at time ``t`` sat at time 0."""
        return xs - self.vx * t, ys - self.vy * t


@dataclass(frozen=True)
class Affine:
    """Velocity field ``v(p) = A @ p + b`` per second, with ``coeffs = [[a11, a12, b1], [a21, a22, b2]]``."""

    coeffs: tuple

    def _generator(self):
        g = np.zeros((3, 3))
        g[:2] = np.asarray(self.coeffs, dtype=np.float64).reshape(2, 3)
        return g

    def _apply(self, xs, ys, dt):
        phi = expm(self._generator() * dt)
        x = phi[0, 0] * xs + phi[0, 1] * ys + phi[0, 2]
        y = phi[1, 0] * xs + phi[1, 1] * ys + phi[1, 2]
        return x, y

    def displacement(self, xs, ys, t_a, t_b):
        x, y = self._apply(np.asarray(xs, float), np.asarray(ys, float), t_b - t_a)
        return x - xs, y - ys

    def source_position(self, xs, ys, t):
        return self._apply(np.asarray(xs, float), np.asarray(ys, float), -t)

    @classmethod
    def scaling(cls, rate: float, cx: float, cy: float) -> "Affine":
        """Uniform expansion about ``(cx, cy)`` at relative rate ``rate`` per second."""
        return cls(((rate, 0.0, -rate * cx), (0.0, rate, -rate * cy)))


@dataclass(frozen=True)
class Scripted:
    """Piecewise-constant velocity: ``knots`` are times, ``velocities[k]`` holds on ``[knots[k], knots[k+1])``."""

    knots: tuple
    velocities: tuple

    def _integral(self, t):
        """Integral of the velocity from ``knots[0]`` to ``t``; end segments extrapolate."""
        knots = np.asarray(self.knots, dtype=np.float64)
        vel = np.asarray(self.velocities, dtype=np.float64).reshape(-1, 2)
        if len(knots) != len(vel) + 1:
            raise ValueError("need one more knot than velocities")
        t = float(t)
        if t < knots[0]:
            return (t - knots[0]) * vel[0]
        cover = np.clip(np.minimum(t, knots[1:]) - knots[:-1], 0.0, None)
        return cover @ vel + max(0.0, t - knots[-1]) * vel[-1]

    def _offset(self, t):
        return self._integral(t) - self._integral(0.0)

    def displacement(self, xs, ys, t_a, t_b):
        d = self._offset(t_b) - self._offset(t_a)
        return np.full(np.shape(xs), d[0]), np.full(np.shape(ys), d[1])

    def source_position(self, xs, ys, t):
        d = self._offset(t)
        return xs - d[0], ys - d[1]


MotionModel = Union[Translation, Affine, Scripted]


def oracle_field(model: MotionModel, bins: TimeBins, height: int, width: int) -> DisplacementField:
    """Ground-truth field of a motion model, exact per bin."""
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    data = np.empty((2, bins.T, height, width))
    edges = bins.edges
    for i in range(bins.T):
        dx, dy = model.displacement(xs, ys, edges[i], edges[i + 1])
        data[0, i], data[1, i] = dx, dy
    return DisplacementField(data, bins)


# -- trajectories and smoothness --------------------------------------------

def compose_trajectory(field: DisplacementField, p0: Sequence[float], i0: int, n: int):
    """Position after ``n`` bins starting from ``p0 = (x, y)`` at bin boundary ``i0``.

    Displacements are read at the fixed start location.
    """
    if n < 0 or i0 < 0 or i0 + n > field.T:
        raise IndexError(f"bins [{i0}, {i0 + n}) outside [0, {field.T}]")
    x, y = float(p0[0]), float(p0[1])
    if n == 0:
        return x, y
    summed = field.data[:, i0:i0 + n].sum(axis=1)
    dx = float(bilinear_sample(summed[0], x, y))
    dy = float(bilinear_sample(summed[1], x, y))
    return x + dx, y + dy


def _forward_diffs(d):
    return d[..., :, 1:] - d[..., :, :-1], d[..., 1:, :] - d[..., :-1, :]


def smoothness_loss(field: Union[DisplacementField, np.ndarray]) -> float:
    """Mean over bins of the squared forward differences, summed over components, per pixel."""
    d = field.data if isinstance(field, DisplacementField) else np.asarray(field)
    _, T, H, W = d.shape
    gx, gy = _forward_diffs(d)
    return float(((gx ** 2).sum() + (gy ** 2).sum()) / (T * H * W))


def smoothness_grad(d: np.ndarray) -> np.ndarray:
    _, T, H, W = d.shape
    gx, gy = _forward_diffs(d)
    g = np.zeros_like(d)
    g[..., :, 1:] += 2 * gx
    g[..., :, :-1] -= 2 * gx
    g[..., 1:, :] += 2 * gy
    g[..., :-1, :] -= 2 * gy
    return g / (T * H * W)


# -- estimation from events ---------------------------------------------------

LK_LEVELS = 3
LK_WINDOW = 7
LK_ITERS = 5
LK_MIN_EIG = 1e-6
SMOOTH_MEDIAN = (3, 15, 15)   # (bins, rows, cols)
SMOOTH_SIGMA = 3.0


def estimate_field_classical(grid: VoxelGrid, levels: int = LK_LEVELS, window: int = LK_WINDOW,
                             iters: int = LK_ITERS, min_eig: float = LK_MIN_EIG,
                             regularize: bool = True) -> DisplacementField:
    """Per-bin flow between consecutive event images by pyramidal Lucas-Kanade.

    The event images are taken in absolute value and smoothed with a 3x3 box
    before tracking.  Event images are sparse, so the raw flow has heavy
    outliers; with ``regularize`` it is passed through a median filter over
    neighbouring bins and pixels and then a spatial Gaussian.
    """
    images = bin_event_images(grid)
    if len(images) < 2:
        raise ValueError("need T >= 1 (at least two event bins)")
    feats = [ndimage.uniform_filter(np.abs(im), 3, mode="nearest") for im in images]
    T = len(images) - 1
    H, W = images.shape[1:]
    data = np.zeros((2, T, H, W))
    for k in range(T):
        data[:, k] = pyramidal_lk(feats[k], feats[k + 1], levels, window, iters, min_eig)
    if regularize:
        data = ndimage.median_filter(data, size=(1,) + SMOOTH_MEDIAN, mode="nearest")
        data = ndimage.gaussian_filter(data, (0, 0, SMOOTH_SIGMA, SMOOTH_SIGMA), mode="nearest")
    return DisplacementField(data, grid.bins)
