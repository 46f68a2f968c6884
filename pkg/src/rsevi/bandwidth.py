"""Raw data-volume accounting for frame video versus event streams."""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Dict

import numpy as np

from .events import EventStream

EVENT_FIELDS = 4   # t, x, y, p


def video_params(fps: float, height: int, width: int, seconds: float) -> int:
    """Stored values for ``round(fps * seconds)`` frames of ``height x width``."""
    if fps < 0 or height < 0 or width < 0 or seconds < 0:
        raise ValueError("video parameters must be non-negative")
    return int(round(fps * seconds)) * int(height) * int(width)


def event_params(stream: EventStream) -> int:
    return EVENT_FIELDS * len(stream)


def reduction_ratio(rs_fps: float, stream: EventStream, target_fps: float, height: int, width: int,
                    seconds: float):
    """``1 - (rs video + events) / target video``, clamped at zero.

    Returns ``(ratio, clamped)`` where ``clamped`` flags that the RS frames
    plus events needed more values than the high-rate video.
    """
    if not target_fps > rs_fps:
        raise ValueError("target_fps must exceed rs_fps")
    if seconds <= 0:
        raise ValueError("duration must be positive")
    target = video_params(target_fps, height, width, seconds)
    if target == 0:
        raise ValueError("target video holds no frames over this duration")
    used = video_params(rs_fps, height, width, seconds) + event_params(stream)
    ratio = 1.0 - used / target
    if ratio < 0:
        return 0.0, True
    return ratio, False


def event_rate_histogram(stream: EventStream, window: float) -> Dict[int, float]:
    """Fraction of pixels emitting each event count during ``[t_begin, t_begin + window]``."""
    if window <= 0:
        raise ValueError("window must be positive")
    counts = stream.window(stream.t_begin, stream.t_begin + window).counts().ravel()
    values, tally = np.unique(counts, return_counts=True)
    n = counts.size
    return {int(v): float(c) / n for v, c in zip(values, tally)}


@dataclass
class BandwidthReport:
    video_params: int
    event_params: int
    rs_params: int
    reduction_ratio: float
    clamped: bool
    duration_s: float
    height: int
    width: int

    def to_dict(self) -> dict:
        return asdict(self)


def bandwidth_report(stream: EventStream, rs_fps: float, target_fps: float, seconds: float) -> BandwidthReport:
    H, W = stream.height, stream.width
    ratio, clamped = reduction_ratio(rs_fps, stream, target_fps, H, W, seconds)
    return BandwidthReport(video_params(target_fps, H, W, seconds), event_params(stream),
                           video_params(rs_fps, H, W, seconds), ratio, clamped, float(seconds), H, W)
