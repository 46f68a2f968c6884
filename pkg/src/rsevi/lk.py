"""Dense pyramidal Lucas-Kanade optical flow."""
from __future__ import annotations

import numpy as np
from scipy import ndimage

from .imaging import warp_backward


def _pyramid(img, levels):
    pyr = [img]
    for _ in range(levels - 1):
        blurred = ndimage.gaussian_filter(pyr[-1], 1.0, mode="nearest")
        pyr.append(blurred[::2, ::2])
    return pyr


def _upsample_flow(flow, shape):
    zoom = (1, shape[0] / flow.shape[1], shape[1] / flow.shape[2])
    up = ndimage.zoom(flow, zoom, order=1, mode="nearest", grid_mode=True)
    up = up[:, :shape[0], :shape[1]]
    up[0] *= shape[1] / flow.shape[2]
    up[1] *= shape[0] / flow.shape[1]
    return up


def _structure(img, window):
    gy, gx = np.gradient(img)
    sxx = ndimage.uniform_filter(gx * gx, window, mode="nearest")
    syy = ndimage.uniform_filter(gy * gy, window, mode="nearest")
    sxy = ndimage.uniform_filter(gx * gy, window, mode="nearest")
    return gx, gy, sxx, syy, sxy


def _min_eig(sxx, syy, sxy):
    tr = 0.5 * (sxx + syy)
    return tr - np.sqrt(np.maximum(tr * tr - (sxx * syy - sxy * sxy), 0.0))


def pyramidal_lk(img0, img1, levels: int = 3, window: int = 7, iters: int = 5,
                 min_eig: float = 1e-6) -> np.ndarray:
    """Flow ``(2, H, W)`` such that ``img1(p + flow) ~ img0(p)``.

    Pixels whose windowed structure tensor has a minimum eigenvalue below
    ``min_eig`` are left at zero flow.
    """
    img0 = np.asarray(img0, dtype=np.float64)
    img1 = np.asarray(img1, dtype=np.float64)
    if img0.shape != img1.shape:
        raise ValueError("images differ in shape")
    levels = max(1, min(levels, int(np.log2(min(img0.shape) / 4)) + 1))
    p0, p1 = _pyramid(img0, levels), _pyramid(img1, levels)
    flow = np.zeros((2,) + p0[-1].shape)
    for lvl in range(levels - 1, -1, -1):
        a, b = p0[lvl], p1[lvl]
        if flow.shape[1:] != a.shape:
            flow = _upsample_flow(flow, a.shape)
        gx, gy, sxx, syy, sxy = _structure(a, window)
        det = sxx * syy - sxy * sxy
        ok = _min_eig(sxx, syy, sxy) >= min_eig
        safe = np.where(ok, det, 1.0)
        for _ in range(iters):
            bw, _ = warp_backward(b, flow)
            it = bw - a
            sxt = ndimage.uniform_filter(gx * it, window, mode="nearest")
            syt = ndimage.uniform_filter(gy * it, window, mode="nearest")
            du = np.where(ok, -(syy * sxt - sxy * syt) / safe, 0.0)
            dv = np.where(ok, -(sxx * syt - sxy * sxt) / safe, 0.0)
            flow[0] += du
            flow[1] += dv
        if lvl == 0:
            flow[:, ~ok] = 0.0
    return flow
