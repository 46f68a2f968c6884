"""Acceptance gates.

Each test prints one ``criterion N: PASS|FAIL`` line (visible even under
output capture) and then asserts the same condition.
"""
import time

import numpy as np
import pytest

from rsevi.bandwidth import event_rate_histogram, reduction_ratio, video_params
from rsevi.cli import main
from rsevi.events import EventStream, simulate_events, voxelize
from rsevi.exposure import (GlobalShutter, RollingShutter, TimeBins, negate, weight_map_analytic,
                            weight_map_sampled)
from rsevi.field import DisplacementField, compose_trajectory, estimate_field_classical
from rsevi.imaging import psnr
from rsevi.reconstruction import (gs_to_rs, interpolate_sequence, latent_times, rs_to_gs, rs_to_rs,
                                  synthesize_gs)
from rsevi.selfsup import LossWeights, OptimizerConfig, optimize_field, total_loss
from rsevi.synthetic import interior_mask, translation_setup

from gradcheck import compare, random_instance, relative_error
from test_reconstruction import static_context

INNER = interior_mask((64, 64), 8)
EPS = 1e-3


@pytest.fixture
def verdict(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'} ({detail})")
        assert ok, detail
    return emit


def random_plane(rng, H, lo, hi):
    """A random RS or GS exposure inside ``[lo, hi]``."""
    if rng.random() < 0.5:
        return GlobalShutter(float(rng.uniform(lo, hi)), H)
    a, b = np.sort(rng.uniform(lo, hi, 2))
    return RollingShutter(float(a), float(max(b, a + 1e-3 * (hi - lo))), H)


def test_c01_weight_map_antisymmetry(verdict):
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    bad = 0
    for k in range(100):
        T = (2, 6, 12)[k % 3]
        H = int(rng.integers(2, 65))
        bins = TimeBins(0.0, 1.0, T)
        a, b = random_plane(rng, H, 0.0, 1.0), random_plane(rng, H, 0.0, 1.0)
        ab = weight_map_analytic(a, b, bins, 5).weights
        ba = weight_map_analytic(b, a, bins, 5).weights
        bad += not (np.array_equal(ab, -ba) and np.array_equal(negate(weight_map_analytic(a, b, bins, 5)).weights,
                                                              ba))
    dt = time.perf_counter() - start
    verdict(1, bad == 0 and dt < 5, f"{bad} mismatching pairs, {dt:.2f} s")


def test_c02_analytic_vs_sampled(verdict):
    rng = np.random.default_rng(2)
    start = time.perf_counter()
    worst = 0.0
    for k in range(50):
        H = int(rng.integers(64, 261))      # operating sensor heights
        period = rng.uniform(0.03, 0.06)
        m0, m1 = (RollingShutter(0.0, rng.uniform(0.4, 1.0) * period, H),
                  RollingShutter(period, period + rng.uniform(0.4, 1.0) * period, H))
        bins = TimeBins(0.0, m1.t_end, (2, 6, 12)[k % 3])
        dst = m1 if k % 2 else GlobalShutter(float(rng.uniform(m0.mid_time, m1.mid_time)), H)
        a = weight_map_analytic(m0, dst, bins, 1).weights
        s = weight_map_sampled(m0, dst, bins, 1, 50, 100).weights
        worst = max(worst, float(np.abs(a - s).max()))
    dt = time.perf_counter() - start
    verdict(2, worst <= 0.03 and dt < 10, f"max deviation {worst:.4f}, {dt:.2f} s")


def test_c03_trajectory_exactness(verdict):
    rng = np.random.default_rng(3)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(20):
        v = rng.uniform(-5, 5, 2) / 0.05
        setup = translation_setup(tuple(v * 0.05), size=(24, 24), T=int(rng.integers(2, 13)))
        field = setup.oracle()
        bins = field.bins
        p0 = rng.uniform(0, 23, 2)
        end = compose_trajectory(field, p0, 0, bins.T)
        expect = p0 + v * (bins.t1 - bins.t0)
        worst = max(worst, float(np.abs(np.subtract(end, expect)).max()))
    dt = time.perf_counter() - start
    verdict(3, worst <= 1e-9 and dt < 1, f"max endpoint error {worst:.2e}, {dt:.2f} s")


def test_c04_zero_field_identities(verdict):
    start = time.perf_counter()
    ctx = static_context()
    t = 0.5 * (ctx.model0.mid_time + ctx.model1.mid_time)
    c = rs_to_gs(ctx, t)
    fused, _, _ = synthesize_gs(ctx, t)
    checks = [np.array_equal(c.cand0, ctx.I_r0), np.array_equal(c.cand1, ctx.I_r1),
              np.array_equal(fused, ctx.I_r0),
              np.array_equal(gs_to_rs(ctx.I_r0, t, ctx, 0)[0], ctx.I_r0),
              np.array_equal(gs_to_rs(ctx.I_r0, t, ctx, 1)[0], ctx.I_r1),
              np.array_equal(rs_to_rs(ctx, "r1->r0")[0], ctx.I_r0),
              np.array_equal(rs_to_rs(ctx, "r0->r1")[0], ctx.I_r1),
              all(np.array_equal(f.data, ctx.I_r0) for f in interpolate_sequence(ctx, 4))]
    total, terms = total_loss(ctx, LossWeights(1, 1, 1))
    floors = (abs(total - 3 * EPS) <= 1e-12 and terms["field"] == 0.0
              and abs(terms["rs2rs"] - 2 * EPS) <= 1e-12 and abs(terms["gs2rs"] - EPS) <= 1e-12)
    dt = time.perf_counter() - start
    verdict(4, all(checks) and floors and dt < 1,
            f"{sum(checks)}/{len(checks)} identities, total loss {total:.6g}, {dt:.2f} s")


def test_c05_gradient_correctness(verdict):
    start = time.perf_counter()
    errors = []
    for seed in range(20):
        a, n, keep = compare(random_instance(seed, size=8, T=2), LossWeights(1, 1, 1))
        errors.append(relative_error(a, n, keep))
    dt = time.perf_counter() - start
    worst = max(errors)
    verdict(5, worst <= 1e-3 and dt < 30, f"max relative error {worst:.2e}, {dt:.1f} s")


def test_c06_synthetic_end_to_end(verdict):
    start = time.perf_counter()
    scores = []
    for v in [(2.0, 0.0), (5.0, 0.0), (3.0, 1.0), (-4.0, 2.0), (0.0, 3.0)]:
        setup = translation_setup(v)
        ctx = setup.context()
        init = estimate_field_classical(voxelize(setup.events(C=0.3), setup.bins))
        field, _ = optimize_field(ctx, init, LossWeights(), OptimizerConfig())
        frames = interpolate_sequence(ctx.with_field(field), 4)
        scores.append(np.mean([psnr(f.data, setup.scene.render(f.timestamp), INNER) for f in frames]))

    setup = translation_setup((3.0, 0.0))
    ctx = setup.context()
    biased = setup.oracle().data.copy()
    biased[0] += 1.0
    init = setup.oracle().with_data(biased)

    def score(f):
        frames = interpolate_sequence(ctx.with_field(f), 4)
        return np.mean([psnr(fr.data, setup.scene.render(fr.timestamp), INNER) for fr in frames])

    refined, _ = optimize_field(ctx, init, LossWeights(), OptimizerConfig(max_iters=100))
    gain = score(refined) - score(init)
    dt = time.perf_counter() - start
    mean = float(np.mean(scores))
    verdict(6, mean >= 33.0 and gain >= 3.0 and dt < 120,
            f"mean interior PSNR {mean:.2f} dB, biased-init gain {gain:.2f} dB, {dt:.1f} s")


def test_c07_round_trip_reciprocity(verdict):
    rng = np.random.default_rng(7)
    start = time.perf_counter()
    scores = []
    for k in range(10):
        v = tuple(rng.uniform(-5, 5, 2))
        setup = translation_setup(v, seed=k)
        ctx = setup.context()
        t = float(rng.uniform(ctx.model0.mid_time, ctx.model1.mid_time))
        gs, _, _ = synthesize_gs(ctx, t)
        for target in (0, 1):
            back, mask = gs_to_rs(gs, t, ctx, target)
            scores.append(psnr(back, ctx.frame(target), INNER & (mask == 1)))
    dt = time.perf_counter() - start
    verdict(7, min(scores) >= 35.0 and dt < 30, f"min interior PSNR {min(scores):.2f} dB, {dt:.1f} s")


def test_c08_loss_monotonicity(verdict):
    start = time.perf_counter()
    bad = 0
    for seed in range(10):
        ctx = random_instance(100 + seed, size=12, T=3)
        _, trace = optimize_field(ctx, ctx.field, LossWeights(), OptimizerConfig(max_iters=20))
        totals = [r["total"] for r in trace]
        bad += not all(b <= a for a, b in zip(totals, totals[1:]))
    dt = time.perf_counter() - start
    verdict(8, bad == 0 and dt < 60, f"{bad} non-monotone traces, {dt:.1f} s")


def test_c09_event_counts_and_times(verdict):
    rng = np.random.default_rng(9)
    start = time.perf_counter()
    count_bad, time_err = 0, 0.0
    for _ in range(100):
        a, b = rng.uniform(0.01, 1.0, 2)
        C = float(rng.uniform(0.05, 0.5))
        t1 = float(rng.uniform(0.01, 1.0))
        ev = simulate_events(np.array([[[a]], [[b]]]), [0.0, t1], C)
        la, lb = np.log(a + 1e-3), np.log(b + 1e-3)
        n = int(np.floor(abs(lb - la) / C))
        count_bad += len(ev) != n
        expect = t1 * C * np.arange(1, n + 1) / abs(lb - la)
        if len(ev) == n and n:
            time_err = max(time_err, float(np.abs(ev.t - expect).max()))
    dt = time.perf_counter() - start
    verdict(9, count_bad == 0 and time_err <= 1e-9 and dt < 1,
            f"{count_bad} count mismatches, max time error {time_err:.1e} s, {dt:.2f} s")


def bandwidth_checks():
    start = time.perf_counter()
    H, W = 260, 346
    ratio, clamped = reduction_ratio(4, EventStream.empty(W, H, 0.0, 1.0), 128, H, W, 1.0)
    rng = np.random.default_rng(10)
    n = 5000
    s = EventStream(np.sort(rng.uniform(0, 1, n)), rng.integers(0, W, n), rng.integers(0, H, n),
                    np.ones(n), W, H, 0.0, 1.0)
    hist_err = abs(sum(event_rate_histogram(s, 1.0).values()) - 1.0)
    vp = video_params(128, H, W, 1.0)
    dt = time.perf_counter() - start
    return vp, ratio == 0.96875 and not clamped and hist_err <= 1e-12 and dt < 1, \
        f"video_params {vp:,} (stated 11,512,960), empty-event ratio {ratio}, " \
        f"histogram sum error {hist_err:.1e}, {dt:.2f} s"


@pytest.mark.xfail(strict=True, reason="stated video count 11,512,960 differs from 128*260*346 = 11,514,880")
def test_c10_bandwidth_formulas(verdict):
    vp, rest_ok, detail = bandwidth_checks()
    verdict(10, vp == 11_512_960 and rest_ok, detail)


def test_c10_bandwidth_formulas_corrected():
    vp, rest_ok, detail = bandwidth_checks()
    assert vp == 128 * 260 * 346 and rest_ok, detail


def test_c11_thread_determinism(verdict, tmp_path, gs_dir, motion_file):
    start = time.perf_counter()
    same = True
    for threads in (1, 8):
        d = tmp_path / f"t{threads}"
        assert main(["simulate", str(gs_dir), "--fps", "800", "--out", str(d / "sim"),
                     "--motion", str(motion_file), "--threads", str(threads)]) == 0
        sim = d / "sim"
        assert main(["interpolate", str(sim / "rs_0000.frm"), str(sim / "rs_0001.frm"),
                     str(sim / "events.evs"), "--manifest", str(sim / "manifest.json"),
                     "--out", str(d / "out"), "--threads", str(threads)]) == 0
    a, b = tmp_path / "t1", tmp_path / "t8"
    files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    same = files == sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
    same = same and all((a / f).read_bytes() == (b / f).read_bytes() for f in files)
    dt = time.perf_counter() - start
    verdict(11, same and len(files) > 0 and dt < 120, f"{len(files)} files compared, {dt:.1f} s")
