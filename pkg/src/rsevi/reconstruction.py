"""Latent GS frame generation and the inverse GS->RS / RS->RS warps."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
from typing import List, Optional

import numpy as np

from .exposure import (DEFAULT_SH, DEFAULT_ST, GlobalShutter, RollingShutter, WeightMap,
                       negate, weight_map_analytic, weight_map_sampled)
from .field import DisplacementField
from .imaging import Frame, warp_backward

OCC_SIGMA = 1.0
OCC_EPS = 1e-6


def contract_flow(field: DisplacementField, wm: WeightMap) -> np.ndarray:
    """``F(h, w) = sum_i D[:, i, h, w] * M[i, h, w]``, shape ``(2, H, W)``."""
    d = field.data if isinstance(field, DisplacementField) else np.asarray(field)
    m = wm.weights if isinstance(wm, WeightMap) else np.asarray(wm)
    if d.shape[1:] != m.shape:
        raise ValueError(f"field {d.shape} and weight map {m.shape} disagree")
    return np.einsum("cthw,thw->chw", d, m)


@dataclass
class FramePairContext:
    """Two consecutive RS frames and the displacement field spanning both exposures."""

    I_r0: np.ndarray
    I_r1: np.ndarray
    model0: RollingShutter
    model1: RollingShutter
    field: DisplacementField
    weight_mode: str = "analytic"
    s_h: int = DEFAULT_SH
    s_t: int = DEFAULT_ST
    _cache: dict = dc_field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.I_r0 = np.asarray(self.I_r0, dtype=np.float64)
        self.I_r1 = np.asarray(self.I_r1, dtype=np.float64)
        if self.I_r0.shape != self.I_r1.shape:
            raise ValueError("RS frames differ in shape")
        H, W = self.I_r0.shape[:2]
        if (self.field.height, self.field.width) != (H, W):
            raise ValueError("field does not match the frame size")
        if self.model0.height != H or self.model1.height != H:
            raise ValueError("exposure models do not match the frame height")
        bins = self.bins
        for m in (self.model0, self.model1):
            if not (bins.contains(m.t_start) and bins.contains(m.t_end)):
                raise ValueError("field window does not cover both exposures")
        if self.weight_mode not in ("analytic", "sampled"):
            raise ValueError(f"unknown weight-map mode {self.weight_mode!r}")

    @property
    def bins(self):
        return self.field.bins

    @property
    def shape(self):
        return self.I_r0.shape[:2]

    def frame(self, i: int) -> np.ndarray:
        return self.I_r0 if i == 0 else self.I_r1

    def model(self, i: int) -> RollingShutter:
        return self.model0 if i == 0 else self.model1

    def gs(self, t_g: float) -> GlobalShutter:
        if not self.bins.contains(t_g):
            raise ValueError(f"t_g={t_g} outside the field window [{self.bins.t0}, {self.bins.t1}]")
        return GlobalShutter(float(t_g), self.shape[0])

    def weight_map(self, src, dst) -> WeightMap:
        """Cached ``M[src -> dst]``."""
        key = (src, dst)
        if key not in self._cache:
            W = self.shape[1]
            if self.weight_mode == "analytic":
                self._cache[key] = weight_map_analytic(src, dst, self.bins, W)
            else:
                self._cache[key] = weight_map_sampled(src, dst, self.bins, W, self.s_h, self.s_t)
        return self._cache[key]

    def with_field(self, field: DisplacementField) -> "FramePairContext":
        ctx = FramePairContext(self.I_r0, self.I_r1, self.model0, self.model1, field,
                               self.weight_mode, self.s_h, self.s_t)
        ctx._cache = self._cache
        return ctx


@dataclass
class GSCandidates:
    cand0: np.ndarray
    cand1: np.ndarray
    mask0: np.ndarray
    mask1: np.ndarray
    flow0: np.ndarray   # F[r0 -> g]
    flow1: np.ndarray   # F[r1 -> g]
    t_g: float


def rs_to_gs(ctx: FramePairContext, t_g: float) -> GSCandidates:
    """Warp both RS frames onto the GS plane ``t = t_g``."""
    g = ctx.gs(t_g)
    out = []
    for i in (0, 1):
        flow = contract_flow(ctx.field, ctx.weight_map(ctx.model(i), g))
        img, mask = warp_backward(ctx.frame(i), flow)
        out.append((img, mask, flow))
    (c0, m0, f0), (c1, m1, f1) = out
    return GSCandidates(c0, c1, m0, m1, f0, f1, float(t_g))


def gs_to_rs_flow(ctx: FramePairContext, t_g: float, target: int) -> np.ndarray:
    g = ctx.gs(t_g)
    wm = negate(ctx.weight_map(ctx.model(target), g))
    return contract_flow(ctx.field, wm)


def gs_to_rs(I_g: np.ndarray, t_g: float, ctx: FramePairContext, target: int):
    """Backward-warp a latent GS frame at ``t_g`` onto RS frame ``target`` (0 or 1)."""
    if target not in (0, 1):
        raise ValueError("target must be 0 or 1")
    return warp_backward(I_g, gs_to_rs_flow(ctx, t_g, target))


def rs_to_rs_flow(ctx: FramePairContext, direction: str) -> np.ndarray:
    base = ctx.weight_map(ctx.model1, ctx.model0)        # M[r1 -> r0]
    wm = base if direction == "r1->r0" else negate(base)
    return contract_flow(ctx.field, wm)


def rs_to_rs(ctx: FramePairContext, direction: str = "r1->r0"):
    """``"r1->r0"`` warps I_r1 onto the r0 grid, ``"r0->r1"`` the reverse."""
    if direction not in ("r1->r0", "r0->r1"):
        raise ValueError(f"unknown direction {direction!r}")
    src = ctx.I_r1 if direction == "r1->r0" else ctx.I_r0
    return warp_backward(src, rs_to_rs_flow(ctx, direction))


def estimate_occlusion(F_g_r0, F_r0_g, F_g_r1, F_r1_g, mask0, mask1,
                       sigma: float = OCC_SIGMA, eps: float = OCC_EPS) -> np.ndarray:
    """Blend weight of the r0 candidate from forward-backward flow consistency.

    ``c_i = |F[g->ri] + warp(F[ri->g], F[g->ri])|`` and the weight is a soft-min
    over ``exp(-c_i / sigma)`` restricted to valid candidates.
    """
    flows = [np.asarray(f, dtype=np.float64) for f in (F_g_r0, F_r0_g, F_g_r1, F_r1_g)]
    shape = flows[0].shape
    if any(f.shape != shape for f in flows) or np.shape(mask0) != shape[1:] or np.shape(mask1) != shape[1:]:
        raise ValueError("flows and masks must share one grid")

    def consistency(f_g_r, f_r_g):
        back = np.stack([warp_backward(f_r_g[c], f_g_r)[0] for c in (0, 1)])
        return np.linalg.norm(f_g_r + back, axis=0)

    m0 = np.asarray(mask0, dtype=np.float64)
    m1 = np.asarray(mask1, dtype=np.float64)
    w0 = m0 * np.exp(-consistency(flows[0], flows[1]) / sigma)
    w1 = m1 * np.exp(-consistency(flows[2], flows[3]) / sigma)
    occ = w0 / (w0 + w1 + eps)
    return np.where((m0 == 0) & (m1 == 0), 0.5, occ)


def fuse_gs(cand0: np.ndarray, cand1: np.ndarray, occ: np.ndarray) -> np.ndarray:
    """Pixelwise ``O * cand0 + (1 - O) * cand1``."""
    cand0 = np.asarray(cand0, dtype=np.float64)
    cand1 = np.asarray(cand1, dtype=np.float64)
    occ = np.asarray(occ, dtype=np.float64)
    if cand0.ndim == 3:
        occ = occ[..., None]
    return np.where(cand0 == cand1, cand0, occ * cand0 + (1 - occ) * cand1)


def occlusion_for(ctx: FramePairContext, cands: GSCandidates) -> np.ndarray:
    t_g = cands.t_g
    return estimate_occlusion(gs_to_rs_flow(ctx, t_g, 0), cands.flow0,
                              gs_to_rs_flow(ctx, t_g, 1), cands.flow1,
                              cands.mask0, cands.mask1)


def latent_times(ctx: FramePairContext, factor: int) -> np.ndarray:
    """Evenly spaced GS times from the middle row of r0 to the middle row of r1."""
    if factor < 2:
        raise ValueError("interpolation factor must be >= 2")
    a, b = ctx.model0.mid_time, ctx.model1.mid_time
    return a + np.arange(factor) * (b - a) / (factor - 1)


def synthesize_gs(ctx: FramePairContext, t_g: float, occ: Optional[np.ndarray] = None):
    """Fused GS frame at ``t_g`` plus its validity (either candidate valid)."""
    cands = rs_to_gs(ctx, t_g)
    if occ is None:
        occ = occlusion_for(ctx, cands)
    fused = fuse_gs(cands.cand0, cands.cand1, occ)
    return fused, (cands.mask0 | cands.mask1), occ


def interpolate_sequence(ctx: FramePairContext, factor: int, workers: int = 1) -> List[Frame]:
    """``factor`` GS frames between the two RS frames."""
    times = latent_times(ctx, factor)
    H = ctx.shape[0]

    def one(t):
        img, _, _ = synthesize_gs(ctx, t)
        return Frame(np.clip(img, 0.0, 1.0), float(t), GlobalShutter(float(t), H))

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            return list(ex.map(one, times))
    return [one(t) for t in times]
