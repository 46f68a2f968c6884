"""Frames, bilinear sampling, backward warping and pixel metrics.

Images are plain float arrays shaped ``(H, W)`` or ``(H, W, C)`` with values in
``[0, 1]``.  Flows are ``(2, H, W)`` arrays holding ``(dx, dy)`` in pixels, x
along columns and y along rows.  Backward warping samples the source at
``p + flow(p)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np
from skimage.metrics import structural_similarity

PSNR_CAP = 99.0
CHARBONNIER_EPS = 1e-3
LUMA = np.array([0.299, 0.587, 0.114])


@dataclass
class Frame:
    """An intensity image with a timestamp and an optional exposure model."""

    data: np.ndarray
    timestamp: float = 0.0
    exposure: Optional[object] = None

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim not in (2, 3) or (self.data.ndim == 3 and self.data.shape[2] not in (1, 3)):
            raise ValueError(f"frame data must be HxW or HxWx{{1,3}}, got {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("frame data must be finite")
        if self.data.size and (self.data.min() < 0.0 or self.data.max() > 1.0):
            raise ValueError("frame intensities must lie in [0, 1]")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return 1 if self.data.ndim == 2 else self.data.shape[2]


def to_gray(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        return img
    if img.shape[2] == 1:
        return img[..., 0]
    return img @ LUMA


def _check_same_shape(a: np.ndarray, b: np.ndarray):
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")


class _Bilinear:
    """Precomputed bilinear stencil for sampling an HxW grid at (X, Y).

    Coordinates are clamped to the image (replicate border).  ``inside`` marks
    samples that were within bounds before clamping.
    """

    def __init__(self, X: np.ndarray, Y: np.ndarray, height: int, width: int):
        if not np.isfinite(X).all() or not np.isfinite(Y).all():
            raise ValueError("sample coordinates must be finite")
        if height < 2 or width < 2:
            raise ValueError("bilinear sampling needs at least a 2x2 image")
        self.shape = (height, width)
        self.X, self.Y = X, Y
        self.inside = (X >= 0) & (X <= width - 1) & (Y >= 0) & (Y <= height - 1)
        xc = np.minimum(np.maximum(X, 0.0), width - 1)
        yc = np.minimum(np.maximum(Y, 0.0), height - 1)
        x0 = np.minimum(xc.astype(np.intp), width - 2)
        y0 = np.minimum(yc.astype(np.intp), height - 2)
        self.x0, self.y0 = x0, y0
        self.fx = xc - x0
        self.fy = yc - y0
        self.base = y0 * width + x0

    @property
    def free_x(self):
        # clamped coordinates do not move with the flow
        return (self.X > 0) & (self.X < self.shape[1] - 1)

    @property
    def free_y(self):
        return (self.Y > 0) & (self.Y < self.shape[0] - 1)

    def _corners(self, img):
        W = self.shape[1]
        flat = img.reshape((-1,) + img.shape[2:])
        b = self.base
        return flat[b], flat[b + 1], flat[b + W], flat[b + W + 1]

    def _weights(self, img):
        fx, fy = self.fx, self.fy
        if img.ndim == 3:
            fx, fy = fx[..., None], fy[..., None]
        return fx, fy

    def sample(self, img: np.ndarray) -> np.ndarray:
        i00, i01, i10, i11 = self._corners(img)
        fx, fy = self._weights(img)
        return (1 - fx) * (1 - fy) * i00 + fx * (1 - fy) * i01 + (1 - fx) * fy * i10 + fx * fy * i11

    def coord_grad(self, img: np.ndarray):
        """d(sample)/dX and d(sample)/dY, zero where the coordinate is clamped."""
        i00, i01, i10, i11 = self._corners(img)
        fx, fy = self._weights(img)
        gx = (1 - fy) * (i01 - i00) + fy * (i11 - i10)
        gy = (1 - fx) * (i10 - i00) + fx * (i11 - i01)
        if img.ndim == 3:
            return gx * self.free_x[..., None], gy * self.free_y[..., None]
        return gx * self.free_x, gy * self.free_y

    def scatter(self, grad_out: np.ndarray) -> np.ndarray:
        """Adjoint of ``sample`` with respect to the image values."""
        H, W = self.shape
        extra = grad_out.shape[2:]
        out = np.zeros((H * W,) + extra)
        fx, fy = self._weights(grad_out)
        base = self.base
        for offset, w in ((0, (1 - fx) * (1 - fy)), (1, fx * (1 - fy)),
                          (W, (1 - fx) * fy), (W + 1, fx * fy)):
            np.add.at(out, (base + offset).ravel(), (w * grad_out).reshape((-1,) + extra))
        return out.reshape((H, W) + extra)

    def support_inside(self, valid: np.ndarray) -> np.ndarray:
        """True where every corner carrying nonzero weight is valid."""
        v00, v01, v10, v11 = self._corners(valid)
        fx0, fx1, fy0, fy1 = self.fx == 0, self.fx == 1, self.fy == 0, self.fy == 1
        return (v00 | fx1 | fy1) & (v01 | fx0 | fy1) & (v10 | fx1 | fy0) & (v11 | fx0 | fy0)


def bilinear_sample(img: np.ndarray, x: float, y: float):
    """Sample ``img`` at column ``x`` and row ``y`` with replicate clamping."""
    img = np.asarray(img, dtype=np.float64)
    st = _Bilinear(np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64),
                   img.shape[0], img.shape[1])
    return st.sample(img)


@lru_cache(maxsize=16)
def pixel_grid(height: int, width: int):
    """Read-only column and row coordinate grids, cached per shape."""
    ys, xs = np.mgrid[0:height, 0:width]
    xs, ys = xs.astype(np.float64), ys.astype(np.float64)
    xs.flags.writeable = ys.flags.writeable = False
    return xs, ys


def warp_stencil(flow: np.ndarray) -> _Bilinear:
    _, H, W = flow.shape
    xs, ys = pixel_grid(H, W)
    return _Bilinear(xs + flow[0], ys + flow[1], H, W)


def warp_backward(src: np.ndarray, flow: np.ndarray):
    """Return ``(out, mask)`` with ``out(p) = src(p + flow(p))``.

    ``mask`` is 1 where the sample position lies inside the source image.
    """
    src = np.asarray(src, dtype=np.float64)
    flow = np.asarray(flow, dtype=np.float64)
    if flow.ndim != 3 or flow.shape[0] != 2 or flow.shape[1:] != src.shape[:2]:
        raise ValueError(f"flow shape {flow.shape} does not match source {src.shape}")
    st = warp_stencil(flow)
    return st.sample(src), st.inside.astype(np.uint8)


def charbonnier(a: np.ndarray, b: np.ndarray, eps: float = CHARBONNIER_EPS,
                mask: Optional[np.ndarray] = None) -> float:
    """Mean of ``sqrt((a - b)**2 + eps**2)``, optionally over masked pixels only.

    An empty mask yields the floor value ``eps``.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check_same_shape(a, b)
    if eps <= 0:
        raise ValueError("eps must be positive")
    r = np.sqrt((a - b) ** 2 + eps * eps)
    if mask is None:
        return float(r.mean())
    m = np.asarray(mask, dtype=bool)
    if r.ndim == 3:
        m = np.broadcast_to(m[..., None], r.shape)
    if not m.any():
        return float(eps)
    return float(r[m].mean())


def mse(a: np.ndarray, b: np.ndarray, mask: Optional[np.ndarray] = None) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check_same_shape(a, b)
    d2 = (a - b) ** 2
    if mask is not None:
        m = np.asarray(mask, dtype=bool)
        if d2.ndim == 3:
            m = np.broadcast_to(m[..., None], d2.shape)
        d2 = d2[m]
    return float(d2.mean())


def psnr(a: np.ndarray, b: np.ndarray, mask: Optional[np.ndarray] = None) -> float:
    """PSNR in dB for peak 1, capped at 99 dB for identical inputs."""
    err = mse(a, b, mask)
    if err == 0.0:
        return PSNR_CAP
    return float(min(-10.0 * np.log10(err), PSNR_CAP))


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean SSIM on luminance, 11x11 Gaussian window (sigma 1.5), data range 1."""
    a, b = to_gray(a), to_gray(b)
    _check_same_shape(a, b)
    if min(a.shape) < 11:
        raise ValueError(f"image {a.shape} is smaller than the 11x11 SSIM window")
    return float(structural_similarity(a, b, data_range=1.0, gaussian_weights=True, sigma=1.5,
                                       use_sample_covariance=False, K1=0.01, K2=0.03))
