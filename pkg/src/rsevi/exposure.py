"""Exposure planes of rolling/global shutter frames and temporal weight maps.

A weight map ``M[src -> dst]`` has shape ``(T, H, W)`` and lives on the
destination grid.  Contracting a displacement field with it gives the flow that
backward-warps the source frame onto the destination exposure plane.  Row
``h`` of bin ``i`` holds the signed fraction of the bin covered by the interval
running from ``t_dst(h)`` to ``t_src(h)``; the sign is positive when the source
row is exposed later than the destination row.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

DEFAULT_SH = 50
DEFAULT_ST = 100


@dataclass(frozen=True)
class RollingShutter:
    t_start: float
    t_end: float
    height: int

    def __post_init__(self):
        if self.height < 2:
            raise ValueError("a rolling shutter frame needs at least two rows")
        if not self.t_end > self.t_start:
            raise ValueError("rolling shutter needs t_end > t_start")

    @property
    def line_delay(self) -> float:
        # later rows expose later
        return (self.t_end - self.t_start) / (self.height - 1)

    def time_at(self, h):
        """Exposure time at (possibly fractional) row coordinate ``h``."""
        return self.t_start + np.asarray(h, dtype=np.float64) * self.line_delay

    def row_times(self) -> np.ndarray:
        return self.time_at(np.arange(self.height))

    @property
    def mid_time(self) -> float:
        return 0.5 * (self.t_start + self.t_end)

    @property
    def span(self):
        return self.t_start, self.t_end


@dataclass(frozen=True)
class GlobalShutter:
    t_g: float
    height: int

    def time_at(self, h):
        return np.full(np.shape(h), self.t_g, dtype=np.float64)

    def row_times(self) -> np.ndarray:
        return np.full(self.height, self.t_g, dtype=np.float64)

    @property
    def mid_time(self) -> float:
        return self.t_g

    @property
    def span(self):
        return self.t_g, self.t_g


ExposureModel = Union[RollingShutter, GlobalShutter]


def row_exposure_time(model: ExposureModel, h: int) -> float:
    if not 0 <= h < model.height:
        raise IndexError(f"row {h} outside [0, {model.height})")
    return float(model.time_at(h))


def rs_effective_frame_rate(gs_fps: float, height: int) -> float:
    """RS frame rate when every row consumes one high-speed GS frame."""
    if gs_fps <= 0 or height < 1:
        raise ValueError("need gs_fps > 0 and height >= 1")
    return gs_fps / height


@dataclass(frozen=True)
class TimeBins:
    """``T`` equal bins tiling ``[t0, t1]``."""

    t0: float
    t1: float
    T: int

    def __post_init__(self):
        if not self.t1 > self.t0:
            raise ValueError("need t1 > t0")
        if self.T < 1:
            raise ValueError("need at least one bin")

    @property
    def width(self) -> float:
        return (self.t1 - self.t0) / self.T

    @property
    def edges(self) -> np.ndarray:
        return self.t0 + np.arange(self.T + 1) * self.width

    @property
    def voxel_window(self):
        """Window tiled by the T+1 event bins centred on the bin edges."""
        half = 0.5 * self.width
        return self.t0 - half, self.t1 + half

    def contains(self, t: float, rtol: float = 1e-12) -> bool:
        tol = rtol * (self.t1 - self.t0)
        return self.t0 - tol <= t <= self.t1 + tol


@dataclass
class WeightMap:
    weights: np.ndarray
    src: ExposureModel
    dst: ExposureModel

    @property
    def shape(self):
        return self.weights.shape


def _check_planes(src, dst, bins: TimeBins):
    if src.height != dst.height:
        raise ValueError(f"exposure heights differ: {src.height} vs {dst.height}")
    for model in (src, dst):
        lo, hi = model.span
        if not (bins.contains(lo) and bins.contains(hi)):
            raise ValueError(f"exposure {model} leaves the bin window [{bins.t0}, {bins.t1}]")


def weight_map_analytic(src: ExposureModel, dst: ExposureModel, bins: TimeBins, width: int) -> WeightMap:
    """Exact interval-overlap weight map."""
    _check_planes(src, dst, bins)
    t_src, t_dst = src.row_times(), dst.row_times()
    lo = np.minimum(t_src, t_dst)
    hi = np.maximum(t_src, t_dst)
    sign = np.sign(t_src - t_dst)
    edges = bins.edges
    overlap = np.minimum(hi[None, :], edges[1:, None]) - np.maximum(lo[None, :], edges[:-1, None])
    rows = sign[None, :] * np.clip(overlap / bins.width, 0.0, 1.0)
    return WeightMap(np.repeat(rows[:, :, None], width, axis=2), src, dst)


def weight_map_sampled(src: ExposureModel, dst: ExposureModel, bins: TimeBins, width: int,
                       s_h: int = DEFAULT_SH, s_t: int = DEFAULT_ST) -> WeightMap:
    """Weight map estimated on an ``s_h`` x ``s_t`` grid of cell-centre samples per element.

    Each sample at sub-row ``h'`` and time ``s`` counts +1 when
    ``t_dst(h') < s < t_src(h')`` and -1 when ``t_src(h') < s < t_dst(h')``.
    """
    if s_h < 1 or s_t < 1:
        raise ValueError("sample counts must be >= 1")
    _check_planes(src, dst, bins)
    H = src.height
    sub = (np.arange(s_h) + 0.5) / s_h - 0.5
    hh = np.arange(H)[:, None] + sub[None, :]          # (H, s_h)
    t_src, t_dst = src.time_at(hh), dst.time_at(hh)
    lo = np.minimum(t_src, t_dst)[:, :, None]
    hi = np.maximum(t_src, t_dst)[:, :, None]
    forward = (t_src > t_dst)[:, :, None]
    frac = (np.arange(s_t) + 0.5) / s_t
    rows = np.empty((bins.T, H))
    for i, left in enumerate(bins.edges[:-1]):
        s = left + frac * bins.width                    # (s_t,)
        inside = (s > lo) & (s < hi)                     # (H, s_h, s_t)
        pos = np.count_nonzero(inside & forward, axis=(1, 2))
        neg = np.count_nonzero(inside & ~forward, axis=(1, 2))
        rows[i] = (pos - neg) / (s_h * s_t)
    return WeightMap(np.repeat(rows[:, :, None], width, axis=2), src, dst)


def negate(wm: WeightMap) -> WeightMap:
    """Reverse a transformation: ``M[b -> a] = -M[a -> b]``."""
    return WeightMap(-wm.weights, wm.dst, wm.src)
