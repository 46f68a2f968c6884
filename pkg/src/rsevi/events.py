"""Event simulation, rolling-shutter synthesis and voxel grids."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .exposure import RollingShutter, TimeBins

LOG_EPS = 1e-3
DEFAULT_SUBBINS = 5


@dataclass
class EventStream:
    """Events as parallel arrays, sorted by time."""

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    p: np.ndarray
    width: int
    height: int
    t_begin: float
    t_end: float

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=np.float64)
        self.x = np.asarray(self.x, dtype=np.int64)
        self.y = np.asarray(self.y, dtype=np.int64)
        self.p = np.asarray(self.p, dtype=np.int8)
        n = len(self.t)
        if not (len(self.x) == len(self.y) == len(self.p) == n):
            raise ValueError("event arrays differ in length")
        if n:
            if np.any(np.diff(self.t) < 0):
                raise ValueError("events must be sorted by time")
            if self.t[0] < self.t_begin or self.t[-1] > self.t_end:
                raise ValueError("events fall outside [t_begin, t_end]")
            if self.x.min() < 0 or self.x.max() >= self.width or self.y.min() < 0 or self.y.max() >= self.height:
                raise ValueError("event coordinates outside the sensor")
            if not np.all(np.abs(self.p) == 1):
                raise ValueError("polarities must be +1 or -1")

    def __len__(self):
        return len(self.t)

    @classmethod
    def empty(cls, width, height, t_begin=0.0, t_end=0.0):
        z = np.zeros(0)
        return cls(z, z, z, z, width, height, t_begin, t_end)

    def window(self, t_a: float, t_b: float) -> "EventStream":
        """Events with ``t_a <= t <= t_b``."""
        lo = np.searchsorted(self.t, t_a, side="left")
        hi = np.searchsorted(self.t, t_b, side="right")
        sl = slice(lo, hi)
        return EventStream(self.t[sl], self.x[sl], self.y[sl], self.p[sl], self.width, self.height,
                           max(t_a, self.t_begin), min(t_b, self.t_end))

    def counts(self) -> np.ndarray:
        """Per-pixel event counts, shape (H, W)."""
        c = np.zeros(self.height * self.width, dtype=np.int64)
        np.add.at(c, self.y * self.width + self.x, 1)
        return c.reshape(self.height, self.width)


def _crossings(log_frames, intensities, times, pixels, C, log_eps, interp):
    """Threshold crossings for a subset of flattened pixels."""
    base = log_frames[0, pixels]
    m = np.zeros(len(pixels), dtype=np.int64)  # reference level = base + m*C
    out_t, out_i, out_p = [], [], []
    for k in range(len(times) - 1):
        la, lb = log_frames[k, pixels], log_frames[k + 1, pixels]
        ta, dt = times[k], times[k + 1] - times[k]
        ref = base + m * C
        n_up = np.where(lb > la, np.floor((lb - ref) / C), 0).astype(np.int64)
        n_dn = np.where(lb < la, np.floor((ref - lb) / C), 0).astype(np.int64)
        n_up = np.maximum(n_up, 0)
        n_dn = np.maximum(n_dn, 0)
        for n, sgn in ((n_up, 1), (n_dn, -1)):
            sel = np.nonzero(n)[0]
            if not len(sel):
                continue
            reps = n[sel]
            owner = np.repeat(sel, reps)
            j = np.arange(reps.sum()) - np.repeat(np.cumsum(reps) - reps, reps) + 1
            level = base[owner] + (m[owner] + sgn * j) * C
            if interp == "log":
                frac = (level - la[owner]) / (lb[owner] - la[owner])
            else:
                La = intensities[k, pixels][owner]
                Lb = intensities[k + 1, pixels][owner]
                frac = (np.exp(level) - log_eps - La) / (Lb - La)
            out_t.append(ta + np.clip(frac, 0.0, 1.0) * dt)
            out_i.append(pixels[owner])
            out_p.append(np.full(len(owner), sgn, dtype=np.int8))
        m += n_up - n_dn
    if not out_t:
        return np.zeros(0), np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int8)
    return np.concatenate(out_t), np.concatenate(out_i), np.concatenate(out_p)


def simulate_events(frames, timestamps, C: float, log_eps: float = LOG_EPS,
                    interp: str = "log", workers: int = 1) -> EventStream:
    """Idealised event camera driven by a dense stack of GS frames.

    Each pixel tracks ``log(L + log_eps)``; between frames the signal is
    interpolated linearly in log intensity (``interp="log"``) or in intensity
    (``interp="linear"``).  An event fires every time the signal moves a full
    ``C`` away from the last event's reference level, and the reference moves
    by exactly ``C``.
    """
    frames = np.asarray(frames, dtype=np.float64)
    times = np.asarray(timestamps, dtype=np.float64)
    if frames.ndim != 3 or len(frames) != len(times):
        raise ValueError("need a (K, H, W) stack and K timestamps")
    if len(times) < 2:
        raise ValueError("need at least two frames")
    if np.any(np.diff(times) <= 0):
        raise ValueError("timestamps must be strictly increasing")
    if C <= 0:
        raise ValueError("threshold C must be positive")
    if interp not in ("log", "linear"):
        raise ValueError(f"unknown interpolation {interp!r}")
    K, H, W = frames.shape
    flat = frames.reshape(K, H * W)
    log_frames = np.log(flat + log_eps)
    chunks = np.array_split(np.arange(H * W), max(1, workers))

    def run(pixels):
        return _crossings(log_frames, flat, times, pixels, C, log_eps, interp)

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            parts = list(ex.map(run, chunks))
    else:
        parts = [run(c) for c in chunks]
    t = np.concatenate([p[0] for p in parts])
    idx = np.concatenate([p[1] for p in parts])
    pol = np.concatenate([p[2] for p in parts])
    y, x = np.divmod(idx, W)
    order = np.lexsort((pol, x, y, t))
    return EventStream(t[order], x[order], y[order], pol[order], W, H, float(times[0]), float(times[-1]))


def synthesize_rs(frames, timestamps, model: RollingShutter) -> np.ndarray:
    """Compose an RS frame: row ``h`` comes from the GS frame nearest to ``t_h``.

    Ties go to the earlier frame.
    """
    frames = np.asarray(frames, dtype=np.float64)
    times = np.asarray(timestamps, dtype=np.float64)
    if frames.shape[1] != model.height:
        raise ValueError("frame height does not match the exposure model")
    tol = 1e-9 * max(1.0, abs(model.t_end))
    if times[0] > model.t_start + tol or times[-1] < model.t_end - tol:
        raise ValueError("GS timestamps do not cover the RS exposure")
    t_rows = model.row_times()
    nxt = np.clip(np.searchsorted(times, t_rows, side="left"), 1, len(times) - 1)
    prev = nxt - 1
    pick = np.where(t_rows - times[prev] <= times[nxt] - t_rows, prev, nxt)
    rows = np.arange(model.height)
    return frames[pick, rows].copy()


@dataclass
class VoxelGrid:
    data: np.ndarray  # (T+1, N, H, W)
    bins: TimeBins

    @property
    def subbins(self) -> int:
        return self.data.shape[1]


def voxelize(stream: EventStream, bins: TimeBins, subbins: int = DEFAULT_SUBBINS) -> VoxelGrid:
    """Accumulate polarities into ``T+1`` bins of ``subbins`` voxels each.

    Event bin ``k`` spans ``tau_k +- delta/2`` so bin centres sit on the
    displacement-bin boundaries.  Inside a bin each event is split linearly
    between the two nearest sub-bin centres; events before the first centre or
    after the last go entirely to the end voxel.
    """
    if subbins < 1:
        raise ValueError("need at least one sub-bin")
    lo, hi = bins.voxel_window
    grid = np.zeros((bins.T + 1, subbins, stream.height, stream.width))
    if len(stream) == 0:
        return VoxelGrid(grid, bins)
    tol = 1e-12 * (hi - lo)
    if stream.t[0] < lo - tol or stream.t[-1] > hi + tol:
        raise ValueError(f"events outside the voxel window [{lo}, {hi}]")
    delta = bins.width
    pos = (stream.t - lo) / delta
    k = np.clip(np.floor(pos).astype(np.int64), 0, bins.T)
    u = (pos - k) * subbins - 0.5
    n0 = np.floor(u).astype(np.int64)
    frac = u - n0
    outside = (n0 < 0) | (n0 >= subbins - 1)
    frac = np.where(outside, 0.0, frac)
    n0 = np.clip(n0, 0, subbins - 1)
    n1 = np.minimum(n0 + 1, subbins - 1)
    pol = stream.p.astype(np.float64)
    flat = grid.reshape(-1)
    HW = stream.height * stream.width
    pix = stream.y * stream.width + stream.x
    idx0 = (k * subbins + n0) * HW + pix
    idx1 = (k * subbins + n1) * HW + pix
    np.add.at(flat, idx0, pol * (1.0 - frac))
    np.add.at(flat, idx1, pol * frac)
    return VoxelGrid(grid, bins)


def bin_event_images(grid: VoxelGrid) -> np.ndarray:
    """Collapse sub-bins: returns ``(T+1, H, W)`` signed event images."""
    return grid.data.sum(axis=1)
