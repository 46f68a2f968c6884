"""Self-supervision losses over the displacement field and their minimisation.

The total objective is ``lambda_f * L_field + lambda_rs * L_rs2rs + lambda_gs * L_gs2rs``.
Occlusion maps used to fuse latent GS frames are held fixed while a field is
evaluated, which keeps the objective piecewise smooth in ``D``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from .field import DisplacementField, smoothness_grad, smoothness_loss
from .imaging import CHARBONNIER_EPS, warp_stencil
from .reconstruction import (FramePairContext, fuse_gs, latent_times as default_latent_times,
                             occlusion_for, rs_to_gs)

log = logging.getLogger(__name__)

ARMIJO_C = 1e-4
MAX_HALVINGS = 10


@dataclass
class LossWeights:
    lambda_f: float = 0.1
    lambda_rs: float = 1.0
    lambda_gs: float = 1.0

    def __post_init__(self):
        if min(self.lambda_f, self.lambda_rs, self.lambda_gs) < 0:
            raise ValueError("loss weights must be non-negative")


@dataclass
class OptimizerConfig:
    step_size: float = 1.0          # largest per-element change of D per step, pixels
    max_iters: int = 200
    gradient_mode: str = "analytic"  # or "finite_difference"
    fd_epsilon: float = 1e-4
    convergence_tol: float = 1e-7
    n_latent: int = 4
    seed: int = 0                    # recorded only; the descent itself is deterministic

    def __post_init__(self):
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.gradient_mode not in ("analytic", "finite_difference"):
            raise ValueError(f"unknown gradient mode {self.gradient_mode!r}")


def _charbonnier_term(out, target, mask, eps, want_grad=True):
    """Masked Charbonnier mean and (optionally) its derivative with respect to ``out``."""
    diff = out - target
    root = np.sqrt(diff * diff + eps * eps)
    m = mask.astype(bool)
    if out.ndim == 3:
        m = np.broadcast_to(m[..., None], out.shape)
    count = int(m.sum())
    if count == 0:
        return eps, np.zeros_like(out)
    value = float(root[m].sum() / count)
    return value, (np.where(m, diff / root, 0.0) / count if want_grad else None)


def _flow_grad(st, img, g_out):
    gx, gy = st.coord_grad(img)
    if img.ndim == 3:
        return np.stack([(g_out * gx).sum(-1), (g_out * gy).sum(-1)])
    return np.stack([g_out * gx, g_out * gy])


def _accumulate(grad, g_flow, weights):
    grad += g_flow[:, None] * weights[None]


class _Objective:
    """Evaluates the loss terms (and optionally dL/dD) for one context."""

    def __init__(self, ctx: FramePairContext, times: Sequence[float],
                 occlusions: Optional[Sequence[np.ndarray]] = None, eps: float = CHARBONNIER_EPS):
        self.ctx = ctx
        self.times = [float(t) for t in times]
        self.eps = eps
        if occlusions is None:
            occlusions = [occlusion_for(ctx, rs_to_gs(ctx, t)) for t in self.times]
        self.occlusions = list(occlusions)
        if len(self.occlusions) != len(self.times):
            raise ValueError("need one occlusion map per latent time")
        self.m_r1_r0 = ctx.weight_map(ctx.model1, ctx.model0).weights
        self.m_r_g = []
        for t in self.times:
            g = ctx.gs(t)
            self.m_r_g.append([ctx.weight_map(ctx.model(i), g).weights for i in (0, 1)])

    def _contract(self, d, m):
        return np.einsum("cthw,thw->chw", d, m)

    def rs2rs(self, d, scale=0.0, grad=None):
        ctx, eps = self.ctx, self.eps
        total = 0.0
        for m, src, dst in ((self.m_r1_r0, ctx.I_r1, ctx.I_r0), (-self.m_r1_r0, ctx.I_r0, ctx.I_r1)):
            st = warp_stencil(self._contract(d, m))
            out = st.sample(src)
            val, g_out = _charbonnier_term(out, dst, st.inside, eps, grad is not None)
            total += val
            if grad is not None and scale:
                _accumulate(grad, _flow_grad(st, src, scale * g_out), m)
        return total

    def gs2rs(self, d, scale=0.0, grad=None):
        ctx, eps = self.ctx, self.eps
        n = len(self.times)
        total = 0.0
        for occ, maps in zip(self.occlusions, self.m_r_g):
            stencils = [warp_stencil(self._contract(d, m)) for m in maps]
            cands = [st.sample(ctx.frame(i)) for i, st in enumerate(stencils)]
            fused = fuse_gs(cands[0], cands[1], occ)
            valid = stencils[0].inside | stencils[1].inside
            g_fused = np.zeros_like(fused) if grad is not None else None
            for k in (0, 1):
                m_back = -maps[k]
                st = warp_stencil(self._contract(d, m_back))
                rec = st.sample(fused)
                mask = st.inside & st.support_inside(valid)
                val, g_out = _charbonnier_term(rec, ctx.frame(k), mask, eps, grad is not None)
                total += val / (2 * n)
                if grad is not None and scale:
                    g_out = g_out * (scale / (2 * n))
                    _accumulate(grad, _flow_grad(st, fused, g_out), m_back)
                    g_fused += st.scatter(g_out)
            if grad is not None and scale:
                o = occ[..., None] if fused.ndim == 3 else occ
                for i, (st, w) in enumerate(zip(stencils, (o, 1 - o))):
                    _accumulate(grad, _flow_grad(st, ctx.frame(i), w * g_fused), maps[i])
        return total

    def evaluate(self, d, weights: LossWeights, want_grad=False):
        grad = np.zeros_like(d) if want_grad else None
        terms = {
            "field": smoothness_loss(d),
            "rs2rs": self.rs2rs(d, weights.lambda_rs, grad),
            "gs2rs": self.gs2rs(d, weights.lambda_gs, grad),
        }
        total = weights.lambda_f * terms["field"] + weights.lambda_rs * terms["rs2rs"] \
            + weights.lambda_gs * terms["gs2rs"]
        if want_grad and weights.lambda_f:
            grad += weights.lambda_f * smoothness_grad(d)
        return total, terms, grad


def _times(ctx, latent_times, n_latent=4):
    if latent_times is None:
        return default_latent_times(ctx, n_latent)
    if len(latent_times) == 0:
        raise ValueError("need at least one latent GS time")
    return latent_times


def loss_gs2rs(ctx: FramePairContext, latent_times: Sequence[float], occlusions=None) -> float:
    """Mean Charbonnier error of both RS frames rebuilt from each latent GS frame."""
    obj = _Objective(ctx, _times(ctx, latent_times), occlusions)
    return obj.gs2rs(ctx.field.data)


def loss_rs2rs(ctx: FramePairContext) -> float:
    obj = _Objective(ctx, [], [])
    return obj.rs2rs(ctx.field.data)


def total_loss(ctx: FramePairContext, weights: LossWeights, latent_times=None, occlusions=None):
    """Weighted total and the unweighted per-term breakdown."""
    obj = _Objective(ctx, _times(ctx, latent_times), occlusions)
    total, terms, _ = obj.evaluate(ctx.field.data, weights)
    return total, terms


def grad_total_loss(ctx: FramePairContext, weights: LossWeights, latent_times=None,
                    occlusions=None) -> np.ndarray:
    """Analytic ``dL/dD`` with the occlusion maps held fixed."""
    obj = _Objective(ctx, _times(ctx, latent_times), occlusions)
    return obj.evaluate(ctx.field.data, weights, want_grad=True)[2]


def fd_grad_total_loss(ctx: FramePairContext, weights: LossWeights, latent_times=None,
                       occlusions=None, epsilon: float = 1e-4, indices=None) -> np.ndarray:
    """Central finite differences of the total loss; ``indices`` limits the elements probed."""
    obj = _Objective(ctx, _times(ctx, latent_times), occlusions)
    d = ctx.field.data.copy()
    grad = np.zeros_like(d)
    flat, gflat = d.reshape(-1), grad.reshape(-1)
    for idx in (range(d.size) if indices is None else indices):
        keep = flat[idx]
        flat[idx] = keep + epsilon
        up = obj.evaluate(d, weights)[0]
        flat[idx] = keep - epsilon
        down = obj.evaluate(d, weights)[0]
        flat[idx] = keep
        gflat[idx] = (up - down) / (2 * epsilon)
    return grad


def optimize_field(ctx: FramePairContext, init: DisplacementField, weights: LossWeights,
                   config: OptimizerConfig = OptimizerConfig(), latent_times=None):
    """Minimise the total loss over ``D`` by gradient descent with Armijo backtracking.

    Each iteration moves along ``-g``.  The first trial step comes from the
    Barzilai-Borwein rule, capped so no element of ``D`` moves by more than
    ``step_size`` pixels; it is halved until the Armijo condition holds (at
    most 10 halvings).  Returns the refined field and the loss trace, which
    never increases.
    """
    if init.data.shape != ctx.field.data.shape:
        raise ValueError("initial field does not match the context")
    start = ctx.with_field(init)
    obj = _Objective(start, _times(start, latent_times, config.n_latent))
    d = init.data.copy()

    def evaluate(x, want_grad):
        total, terms, grad = obj.evaluate(x, weights, want_grad=want_grad and config.gradient_mode == "analytic")
        if want_grad and config.gradient_mode == "finite_difference":
            grad = fd_grad_total_loss(start.with_field(init.with_data(x)), weights, obj.times,
                                      obj.occlusions, config.fd_epsilon)
        return total, terms, grad

    loss, terms, grad = evaluate(d, True)
    if not np.isfinite(loss):
        raise FloatingPointError("initial loss is not finite")
    trace: List[Dict[str, float]] = [dict(iter=0, total=loss, step=0.0, **terms)]
    prev_d = prev_g = None
    for it in range(1, config.max_iters + 1):
        gmax = float(np.abs(grad).max())
        if gmax == 0.0:
            break
        cap = config.step_size / gmax
        alpha = cap
        if prev_d is not None:
            s_k, y_k = d - prev_d, grad - prev_g
            sy = float((s_k * y_k).sum())
            if sy > 0:
                alpha = min(float((s_k * s_k).sum()) / sy, cap)
        g2 = float((grad * grad).sum())
        accepted = None
        for _ in range(MAX_HALVINGS + 1):
            trial = d - alpha * grad
            t_loss, t_terms, _ = evaluate(trial, False)
            if np.isfinite(t_loss) and t_loss <= loss - ARMIJO_C * alpha * g2:
                accepted = trial
                break
            alpha *= 0.5
        if accepted is None:
            log.debug("line search failed at iteration %d", it)
            break
        rel = (loss - t_loss) / max(abs(loss), 1e-300)
        prev_d, prev_g = d, grad
        d, loss = accepted, t_loss
        trace.append(dict(iter=it, total=loss, step=alpha * gmax, **t_terms))
        if rel < config.convergence_tol:
            break
        _, _, grad = evaluate(d, True)
    return init.with_data(d), trace
