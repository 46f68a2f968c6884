"""File-level stages: simulate, interpolate, evaluate and bandwidth.

Each stage reads and writes the formats in :mod:`rsevi.formats`.  Outputs
depend only on the inputs and the :class:`RunConfig`, never on thread count.
"""
from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field as dc_field
from pathlib import Path
from typing import List, Optional

import numpy as np

from .bandwidth import bandwidth_report
from .events import DEFAULT_SUBBINS, EventStream, simulate_events, synthesize_rs, voxelize
from .exposure import DEFAULT_SH, DEFAULT_ST, RollingShutter, TimeBins, rs_effective_frame_rate
from .field import DEFAULT_T, Affine, Scripted, Translation, estimate_field_classical, oracle_field
from .formats import (FormatError, load_events, load_frame, read_json, write_events, write_field,
                      write_frame, write_json, write_pnm, write_trace)
from .imaging import Frame, psnr, ssim, to_gray
from .reconstruction import FramePairContext, latent_times, synthesize_gs
from .selfsup import LossWeights, OptimizerConfig, optimize_field

log = logging.getLogger(__name__)

FRAME_SUFFIXES = (".frm", ".pgm", ".ppm")


class ConsistencyError(ValueError):
    """Inputs parse but disagree with each other (sizes, time windows, counts)."""


@dataclass
class RunConfig:
    T: int = DEFAULT_T
    subbins: int = DEFAULT_SUBBINS
    s_h: int = DEFAULT_SH
    s_t: int = DEFAULT_ST
    weight_mode: str = "analytic"
    weights: LossWeights = dc_field(default_factory=LossWeights)
    optimizer: OptimizerConfig = dc_field(default_factory=OptimizerConfig)
    factor: int = 4
    seed: int = 0
    threads: int = 1

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("threads")   # never part of the recorded outputs
        return d


# -- motion scripts ---------------------------------------------------------------

def motion_from_dict(cfg: dict):
    """``{"kind": "translation", "vx": .., "vy": ..}``, ``{"kind": "affine", "coeffs": [[..], [..]]}``
    or ``{"kind": "scripted", "knots": [..], "velocities": [[vx, vy], ..]}``; units are pixels and seconds."""
    kind = cfg.get("kind")
    try:
        if kind == "translation":
            return Translation(float(cfg["vx"]), float(cfg.get("vy", 0.0)))
        if kind == "affine":
            return Affine(tuple(tuple(float(c) for c in row) for row in cfg["coeffs"]))
        if kind == "scripted":
            return Scripted(tuple(float(k) for k in cfg["knots"]),
                            tuple(tuple(float(c) for c in v) for v in cfg["velocities"]))
    except (KeyError, TypeError) as exc:
        raise FormatError(f"malformed motion script: {exc}") from exc
    raise FormatError(f"unknown motion kind {kind!r}")


def list_frames(directory) -> List[Path]:
    d = Path(directory)
    if not d.is_dir():
        raise FormatError(f"{d} is not a directory")
    return sorted(p for p in d.iterdir() if p.suffix.lower() in FRAME_SUFFIXES)


# -- simulate -----------------------------------------------------------------------

def run_simulate(frame_dir, fps: float, out_dir, C: float = 0.3, rs_period: Optional[float] = None,
                 rs_readout: Optional[float] = None, motion: Optional[dict] = None,
                 config: RunConfig = RunConfig()) -> dict:
    """RS frames, events and (optionally) oracle fields from a dense GS frame directory.

    By default each RS row consumes one GS frame, so an RS frame spans ``H``
    input frames and the RS frame rate is ``fps / H``.
    """
    paths = list_frames(frame_dir)
    if len(paths) < 2:
        raise FormatError(f"{frame_dir}: need at least two frames")
    if fps <= 0:
        raise FormatError("fps must be positive")
    frames = [load_frame(p, i / fps) for i, p in enumerate(paths)]
    shape = frames[0].data.shape
    if any(f.data.shape != shape for f in frames):
        raise ConsistencyError("input frames differ in size")
    H, W = shape[:2]
    times = np.arange(len(frames)) / fps
    stack = np.stack([f.data for f in frames])
    period = H / fps if rs_period is None else rs_period
    readout = (H - 1) / fps if rs_readout is None else rs_readout
    if not (period > 0 and readout > 0):
        raise FormatError("RS period and readout must be positive")
    n_rs = int(np.floor((times[-1] - readout) / period + 1e-9)) + 1
    if n_rs < 1:
        raise ConsistencyError("input video is shorter than one RS readout")

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rs_entries = []
    for k in range(n_rs):
        model = RollingShutter(k * period, k * period + readout, H)
        rs = synthesize_rs(stack, times, model)
        name = f"rs_{k:04d}"
        write_frame(out / f"{name}.frm", Frame(rs, model.t_start))
        write_pnm(out / (f"{name}.ppm" if rs.ndim == 3 else f"{name}.pgm"), Frame(rs, model.t_start))
        rs_entries.append(dict(file=f"{name}.frm", t_start=model.t_start, t_end=model.t_end))

    gray = np.stack([to_gray(f.data) for f in frames])
    stream = simulate_events(gray, times, C, workers=config.threads)
    write_events(out / "events.evs", stream)

    fields = []
    if motion is not None:
        model = motion_from_dict(motion)
        for k in range(n_rs - 1):
            bins = TimeBins(rs_entries[k]["t_start"], rs_entries[k + 1]["t_end"], config.T)
            name = f"oracle_{k:04d}.dfb"
            write_field(out / name, oracle_field(model, bins, H, W))
            fields.append(name)

    manifest = dict(
        gs_fps=fps, gs_timestamps=times.tolist(), height=H, width=W,
        channels=1 if len(shape) == 2 else shape[2],
        rs_frame_rate=1.0 / period, rs_period=period, rs_readout=readout, rs_frames=rs_entries,
        rowwise_frame_rate=rs_effective_frame_rate(fps, H),
        events=dict(file="events.evs", count=len(stream), threshold=C,
                    t_begin=stream.t_begin, t_end=stream.t_end),
        oracle_fields=fields, motion=motion, T=config.T, seed=config.seed,
    )
    write_json(out / "manifest.json", manifest)
    log.info("simulated %d RS frames and %d events", n_rs, len(stream))
    return manifest


# -- interpolate --------------------------------------------------------------------

def _model_from(manifest: Optional[dict], path: Path, frame: Frame, explicit):
    H = frame.height
    if explicit is not None:
        return RollingShutter(float(explicit[0]), float(explicit[1]), H)
    if manifest is None:
        raise FormatError(f"no exposure times for {path}; pass a manifest or explicit times")
    for e in manifest["rs_frames"]:
        if Path(e["file"]).name == path.name:
            return RollingShutter(float(e["t_start"]), float(e["t_end"]), H)
    raise ConsistencyError(f"{path.name} is not listed in the manifest")


def build_context(rs0: Frame, rs1: Frame, m0: RollingShutter, m1: RollingShutter,
                  stream: EventStream, config: RunConfig):
    """Classical field estimate plus a context holding it."""
    if rs0.data.shape != rs1.data.shape:
        raise ConsistencyError("RS frames differ in size")
    if (stream.height, stream.width) != (rs0.height, rs0.width):
        raise ConsistencyError("event sensor size differs from the RS frames")
    if not m1.t_start > m0.t_start:
        raise ConsistencyError("second RS frame must start after the first")
    bins = TimeBins(m0.t_start, m1.t_end, config.T)
    lo, hi = bins.voxel_window
    if len(stream) and (stream.t_end < m0.t_start or stream.t_begin > m1.t_end):
        raise ConsistencyError("event stream does not overlap the RS exposures")
    grid = voxelize(stream.window(lo, hi), bins, config.subbins)
    init = estimate_field_classical(grid)
    ctx = FramePairContext(rs0.data, rs1.data, m0, m1, init, config.weight_mode, config.s_h, config.s_t)
    return ctx, init


def run_interpolate(rs0_path, rs1_path, events_path, out_dir, config: RunConfig = RunConfig(),
                    manifest_path=None, times0=None, times1=None, gt_dir=None, margin: int = 0) -> dict:
    rs0_path, rs1_path = Path(rs0_path), Path(rs1_path)
    manifest = read_json(manifest_path) if manifest_path else None
    rs0, rs1 = load_frame(rs0_path), load_frame(rs1_path)
    m0 = _model_from(manifest, rs0_path, rs0, times0)
    m1 = _model_from(manifest, rs1_path, rs1, times1)
    stream = load_events(events_path, rs0.width, rs0.height)
    ctx, init = build_context(rs0, rs1, m0, m1, stream, config)

    times = latent_times(ctx, config.factor)
    refined, trace = optimize_field(ctx, init, config.weights, config.optimizer, times)
    if not np.isfinite(trace[-1]["total"]):
        raise FloatingPointError("loss became non-finite")
    ctx = ctx.with_field(refined)

    def one(t):
        start = time.perf_counter()
        img, _, _ = synthesize_gs(ctx, t)
        return np.clip(img, 0.0, 1.0), time.perf_counter() - start

    if config.threads > 1:
        with ThreadPoolExecutor(config.threads) as ex:
            results = list(ex.map(one, times))
    else:
        results = [one(t) for t in times]

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = []
    for j, ((img, dt), t) in enumerate(zip(results, times)):
        log.info("GS frame %d at t=%.6f took %.1f ms", j, t, 1e3 * dt)
        frame = Frame(img, float(t))
        write_frame(out / f"gs_{j:04d}.frm", frame)
        write_pnm(out / (f"gs_{j:04d}.ppm" if img.ndim == 3 else f"gs_{j:04d}.pgm"), frame)
        names.append(f"gs_{j:04d}.frm")
    (out / "timestamps.txt").write_text("".join(f"{t!r}\n" for t in map(float, times)))
    write_trace(out / "loss_trace.csv", trace)
    write_field(out / "field.dfb", refined)

    report = dict(config=config.to_dict(), frames=names, timestamps=[float(t) for t in times],
                  iterations=len(trace) - 1, loss_initial=trace[0]["total"], loss_final=trace[-1]["total"],
                  terms_final={k: trace[-1][k] for k in ("field", "rs2rs", "gs2rs")})
    if gt_dir is not None:
        report["evaluation"] = evaluate_dirs(out, gt_dir, margin)
    write_json(out / "report.json", report)
    return report


# -- evaluate -----------------------------------------------------------------------

def _eval_frames(directory) -> List[Path]:
    """Prefer lossless FRM1 files; fall back to PGM/PPM."""
    paths = list_frames(directory)
    frm = [p for p in paths if p.suffix == ".frm"]
    return frm if frm else paths


def evaluate_dirs(pred_dir, gt_dir, margin: int = 0) -> dict:
    """Per-frame and mean PSNR/SSIM over an optional interior ``margin``."""
    preds, gts = _eval_frames(pred_dir), _eval_frames(gt_dir)
    if not preds or not gts:
        raise FormatError("evaluation directories must not be empty")
    if len(preds) != len(gts):
        raise ConsistencyError(f"{len(preds)} predictions but {len(gts)} ground-truth frames")
    rows = []
    for p, g in zip(preds, gts):
        a, b = to_gray(load_frame(p).data), to_gray(load_frame(g).data)
        if a.shape != b.shape:
            raise ConsistencyError(f"{p.name} and {g.name} differ in size")
        if margin:
            a, b = a[margin:-margin, margin:-margin], b[margin:-margin, margin:-margin]
        rows.append(dict(frame=p.name, psnr=psnr(a, b), ssim=ssim(a, b)))
    return dict(frames=rows, mean_psnr=float(np.mean([r["psnr"] for r in rows])),
                mean_ssim=float(np.mean([r["ssim"] for r in rows])))


def metrics_csv(metrics: dict) -> str:
    lines = ["frame,psnr,ssim"]
    lines += [f"{r['frame']},{r['psnr']:.6f},{r['ssim']:.6f}" for r in metrics["frames"]]
    lines.append(f"mean,{metrics['mean_psnr']:.6f},{metrics['mean_ssim']:.6f}")
    return "\n".join(lines) + "\n"


# -- bandwidth ------------------------------------------------------------------------

def run_bandwidth(events_path, rs_fps: float, target_fps: float, seconds: float, width: int = 0,
                  height: int = 0) -> dict:
    if seconds <= 0:
        raise FormatError("duration must be positive")
    stream = load_events(events_path, width, height)
    return bandwidth_report(stream, rs_fps, target_fps, seconds).to_dict()
