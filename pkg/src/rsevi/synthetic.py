"""Synthetic moving scenes with exact ground truth.

A scene is a smooth random texture moved by a motion model.  GS frames, RS
frames (row ``h`` rendered exactly at ``t_h``) and dense frame stacks for the
event simulator are all rendered from the same continuous texture.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .events import EventStream, simulate_events
from .exposure import RollingShutter, TimeBins
from .field import DEFAULT_T, MotionModel, Translation, oracle_field
from .reconstruction import FramePairContext


@dataclass(frozen=True)
class Texture:
    """Random low-frequency sinusoids squashed into ``[lo, hi]`` by a tanh."""

    seed: int = 0
    n_waves: int = 12
    max_freq: float = 0.06   # cycles per pixel
    lo: float = 0.05
    hi: float = 0.95
    gain: float = 1.0

    def _params(self):
        rng = np.random.default_rng(self.seed)
        freq = rng.uniform(0.02, self.max_freq, self.n_waves)
        angle = rng.uniform(0, 2 * np.pi, self.n_waves)
        phase = rng.uniform(0, 2 * np.pi, self.n_waves)
        amp = rng.uniform(0.5, 1.0, self.n_waves)
        return freq * np.cos(angle), freq * np.sin(angle), phase, amp

    def __call__(self, x, y):
        kx, ky, phase, amp = self._params()
        x = np.asarray(x, dtype=np.float64)[..., None]
        y = np.asarray(y, dtype=np.float64)[..., None]
        s = (amp * np.sin(2 * np.pi * (kx * x + ky * y) + phase)).sum(-1)
        s /= np.sqrt(0.5 * (amp ** 2).sum())     # unit variance
        return self.lo + (self.hi - self.lo) * 0.5 * (np.tanh(self.gain * s) + 1.0)


@dataclass
class Scene:
    motion: MotionModel
    height: int = 64
    width: int = 64
    texture: Texture = Texture()

    def render(self, t: float) -> np.ndarray:
        """GS frame at time ``t``."""
        ys, xs = np.mgrid[0:self.height, 0:self.width].astype(np.float64)
        sx, sy = self.motion.source_position(xs, ys, t)
        return self.texture(sx, sy)

    def render_rs(self, model: RollingShutter) -> np.ndarray:
        """RS frame with each row rendered at its own exposure time."""
        out = np.empty((self.height, self.width))
        xs = np.arange(self.width, dtype=np.float64)
        for h, t in enumerate(model.row_times()):
            sx, sy = self.motion.source_position(xs, np.full_like(xs, h), t)
            out[h] = self.texture(sx, sy)
        return out

    def render_stack(self, t_a: float, t_b: float, n: int):
        times = np.linspace(t_a, t_b, n)
        return np.stack([self.render(t) for t in times]), times

    def events(self, t_a: float, t_b: float, n_frames: int, C: float = 0.3, workers: int = 1) -> EventStream:
        frames, times = self.render_stack(t_a, t_b, n_frames)
        return simulate_events(frames, times, C, workers=workers)


@dataclass
class PairSetup:
    scene: Scene
    model0: RollingShutter
    model1: RollingShutter
    bins: TimeBins

    def context(self, field=None, **kw) -> FramePairContext:
        if field is None:
            field = self.oracle()
        return FramePairContext(self.scene.render_rs(self.model0), self.scene.render_rs(self.model1),
                                self.model0, self.model1, field, **kw)

    def oracle(self):
        return oracle_field(self.scene.motion, self.bins, self.scene.height, self.scene.width)

    def events(self, C: float = 0.3, frames_per_bin: int = 40, workers: int = 1,
               lead_in: float = 2.0) -> EventStream:
        """Events covering the voxel window of ``bins``.

        The sensor starts ``lead_in`` bins early so that reference levels are
        already settled when the window opens.
        """
        lo, hi = self.bins.voxel_window
        start = lo - lead_in * self.bins.width
        n = int(round(frames_per_bin * (hi - start) / self.bins.width)) + 1
        return self.scene.events(start, hi, n, C, workers).window(lo, hi)


def rs_pair(height: int, frame_period: float = 0.05, readout_fraction: float = 0.8, t0: float = 0.0):
    """Two consecutive RS exposures, the second one ``frame_period`` later."""
    readout = readout_fraction * frame_period
    m0 = RollingShutter(t0, t0 + readout, height)
    m1 = RollingShutter(t0 + frame_period, t0 + frame_period + readout, height)
    return m0, m1


def translation_setup(v_px_per_frame=(3.0, 0.0), size=(64, 64), T: int = DEFAULT_T,
                      frame_period: float = 0.05, readout_fraction: float = 0.8,
                      seed: int = 0) -> PairSetup:
    """A translating texture seen by two consecutive RS frames.

    Velocities are given in pixels per RS frame period.
    """
    H, W = size
    vx, vy = v_px_per_frame
    motion = Translation(vx / frame_period, vy / frame_period)
    scene = Scene(motion, H, W, Texture(seed=seed))
    m0, m1 = rs_pair(H, frame_period, readout_fraction)
    bins = TimeBins(m0.t_start, m1.t_end, T)
    return PairSetup(scene, m0, m1, bins)


def interior_mask(shape, margin: int) -> np.ndarray:
    m = np.zeros(shape[:2], dtype=bool)
    m[margin:shape[0] - margin, margin:shape[1] - margin] = True
    return m


def write_sequence(scene: Scene, times, directory, prefix: str = "f") -> list:
    """Render GS frames at ``times`` into ``directory`` as FRM1 files."""
    from .formats import write_frame
    from .imaging import Frame

    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for j, t in enumerate(times):
        p = out / f"{prefix}_{j:04d}.frm"
        write_frame(p, Frame(scene.render(float(t)), float(t)))
        paths.append(p)
    return paths
