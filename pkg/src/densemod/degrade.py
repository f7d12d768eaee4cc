"""Synthetic degradation pipelines that manufacture training pairs.

Three recipes: bicubic x4 downsampling plus JPEG at quality 20 for
super-resolution, a bicubic down-up round trip for detail enhancement, and
a fade / saturation / filtered-noise model for recaptured old photographs.
JPEG is simulated in memory (color transform, 4:2:0 subsampling, 8x8 DCT
and quantization round trip); entropy coding is lossless and therefore
irrelevant to pixel values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.fft import dctn, idctn
from scipy.ndimage import uniform_filter

from .tensor import ShapeError, Tensor

MODES = ("sr", "enhance", "oldphoto")


@dataclass(frozen=True)
class DegradationSpec:
    """Parameters of one synthetic degradation pipeline.

    Range fields are closed [lo, hi] intervals sampled uniformly per image.
    """

    mode: str = "sr"
    scale: int = 4
    jpeg_quality: int = 20
    fade_strength: tuple = (0.1, 0.5)
    gray_level: tuple = (0.4, 0.7)
    saturation_shift: tuple = (0.4, 0.9)
    noise_sigma: tuple = (0.01, 0.06)
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown degradation mode {self.mode!r}")
        if not 1 <= self.jpeg_quality <= 100:
            raise ValueError(f"jpeg_quality must be in [1,100], got {self.jpeg_quality}")
        for name in ("fade_strength", "gray_level", "saturation_shift", "noise_sigma"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} range must satisfy lo <= hi, got ({lo},{hi})")


# ---------------------------------------------------------------------------
# bicubic resampling
# ---------------------------------------------------------------------------

def _cubic_kernel(t):
    # Keys interpolation kernel with a = -0.5 (Catmull-Rom family)
    a = -0.5
    t = np.abs(t)
    t2 = t * t
    t3 = t2 * t
    near = (a + 2) * t3 - (a + 3) * t2 + 1
    far = a * t3 - 5 * a * t2 + 8 * a * t - 4 * a
    return np.where(t <= 1, near, np.where(t < 2, far, 0.0))


def _resize_matrix(in_size, out_size):
    """Row-stochastic (out_size, in_size) matrix of edge-clamped cubic taps."""
    scale = in_size / out_size
    rows = np.zeros((out_size, in_size), dtype=np.float64)
    for i in range(out_size):
        src = (i + 0.5) * scale - 0.5
        base = int(np.floor(src))
        for tap in range(base - 1, base + 3):
            weight = _cubic_kernel(src - tap)
            rows[i, min(max(tap, 0), in_size - 1)] += weight
    return rows


def bicubic_resize(img, out_h, out_w):
    """Separable bicubic resampling of a [N,3,H,W] tensor, clamped to [0,1]."""
    if out_h <= 0 or out_w <= 0:
        raise ValueError(f"bicubic_resize: non-positive target size {out_h}x{out_w}")
    data = np.asarray(img.data if isinstance(img, Tensor) else img, dtype=np.float64)
    n, c, h, w = data.shape
    mat_h = _resize_matrix(h, out_h)
    mat_w = _resize_matrix(w, out_w)
    # rows first, then columns: (out_h, H) @ (H, W) @ (W, out_w)
    out = np.einsum("oh,nchw,wp->ncop", mat_h, data, mat_w.T, optimize=True)
    out = np.clip(out, 0.0, 1.0)
    return Tensor(out.astype(np.float32))


# ---------------------------------------------------------------------------
# JPEG quantization round trip
# ---------------------------------------------------------------------------

# Annex-K reference quantization tables
JPEG_LUMA_TABLE = np.array([
    [16, 11, 10, 16, 24, 40, 51, 61],
    [12, 12, 14, 19, 26, 58, 60, 55],
    [14, 13, 16, 24, 40, 57, 69, 56],
    [14, 17, 22, 29, 51, 87, 80, 62],
    [18, 22, 37, 56, 68, 109, 103, 77],
    [24, 35, 55, 64, 81, 104, 113, 92],
    [49, 64, 78, 87, 103, 121, 120, 101],
    [72, 92, 95, 98, 112, 100, 103, 99],
], dtype=np.float64)

JPEG_CHROMA_TABLE = np.array([
    [17, 18, 24, 47, 99, 99, 99, 99],
    [18, 21, 26, 66, 99, 99, 99, 99],
    [24, 26, 56, 99, 99, 99, 99, 99],
    [47, 66, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
], dtype=np.float64)


def scaled_quant_table(table, quality):
    """Annex-K table scaled by the libjpeg quality curve, clipped to [1,255]."""
    if quality < 50:
        scale = 5000.0 / quality
    else:
        scale = 200.0 - 2.0 * quality
    scaled = np.floor((table * scale + 50.0) / 100.0)
    return np.clip(scaled, 1.0, 255.0)


def _rgb_to_ycbcr(rgb):
    r, g, b = rgb[0], rgb[1], rgb[2]
    y = 0.299 * r + 0.587 * g + 0.114 * b
    cb = -0.168736 * r - 0.331264 * g + 0.5 * b + 128.0
    cr = 0.5 * r - 0.418688 * g - 0.081312 * b + 128.0
    return y, cb, cr


def _ycbcr_to_rgb(y, cb, cr):
    cb = cb - 128.0
    cr = cr - 128.0
    r = y + 1.402 * cr
    g = y - 0.344136 * cb - 0.714136 * cr
    b = y + 1.772 * cb
    return np.stack([r, g, b])


def _blockwise_quantize(plane, table):
    """DCT -> quantize -> dequantize -> inverse DCT over 8x8 blocks."""
    h, w = plane.shape
    blocks = plane.reshape(h // 8, 8, w // 8, 8).transpose(0, 2, 1, 3) - 128.0
    coefs = dctn(blocks, type=2, norm="ortho", axes=(-2, -1))
    coefs = np.round(coefs / table) * table
    rec = idctn(coefs, type=2, norm="ortho", axes=(-2, -1)) + 128.0
    return rec.transpose(0, 2, 1, 3).reshape(h, w)


def jpeg_degrade(img, quality):
    """Baseline-JPEG quantization loss simulation on a [N,3,H,W] tensor.

    Follows the codec's lossy stages (YCbCr, 4:2:0 chroma subsampling, 8x8
    DCT quantization with quality-scaled Annex-K tables) without producing a
    bitstream. Sizes that are not multiples of 16 are edge-replicated
    internally and cropped back.
    """
    if not 1 <= quality <= 100:
        raise ValueError(f"jpeg_degrade: quality must be in [1,100], got {quality}")
    data = np.asarray(img.data if isinstance(img, Tensor) else img, dtype=np.float64)
    n, c, h, w = data.shape
    if c != 3:
        raise ShapeError(f"jpeg_degrade: expected 3 channels, got {c}")
    luma_table = scaled_quant_table(JPEG_LUMA_TABLE, quality)
    chroma_table = scaled_quant_table(JPEG_CHROMA_TABLE, quality)
    pad_h = (-h) % 16
    pad_w = (-w) % 16
    out = np.empty_like(data)
    for i in range(n):
        rgb = np.pad(data[i] * 255.0, ((0, 0), (0, pad_h), (0, pad_w)), mode="edge")
        y, cb, cr = _rgb_to_ycbcr(rgb)
        # 4:2:0 -> average each 2x2 chroma block
        hh, ww = y.shape
        cb_sub = cb.reshape(hh // 2, 2, ww // 2, 2).mean(axis=(1, 3))
        cr_sub = cr.reshape(hh // 2, 2, ww // 2, 2).mean(axis=(1, 3))
        y = _blockwise_quantize(y, luma_table)
        cb_sub = _blockwise_quantize(cb_sub, chroma_table)
        cr_sub = _blockwise_quantize(cr_sub, chroma_table)
        cb = np.repeat(np.repeat(cb_sub, 2, axis=0), 2, axis=1)
        cr = np.repeat(np.repeat(cr_sub, 2, axis=0), 2, axis=1)
        rec = _ycbcr_to_rgb(y, cb, cr)[:, :h, :w] / 255.0
        out[i] = np.clip(rec, 0.0, 1.0)
    return Tensor(out.astype(np.float32))


# ---------------------------------------------------------------------------
# old-photo model
# ---------------------------------------------------------------------------

def _sample(rng, interval):
    lo, hi = interval
    return lo if lo == hi else float(rng.uniform(lo, hi))


def oldphoto_degrade(img, spec, rng):
    """Fade toward gray, shift saturation, add blurred print-pattern noise.

    Applied in that order, then clamped to [0,1]. Parameters are drawn
    uniformly from the spec's ranges with the supplied generator.
    """
    data = np.asarray(img.data if isinstance(img, Tensor) else img, dtype=np.float64)
    n, c, h, w = data.shape
    if c != 3:
        raise ShapeError(f"oldphoto_degrade: expected 3 channels, got {c}")
    out = np.empty_like(data)
    for i in range(n):
        fade = _sample(rng, spec.fade_strength)
        gray = _sample(rng, spec.gray_level)
        sat = _sample(rng, spec.saturation_shift)
        sigma = _sample(rng, spec.noise_sigma)
        x = (1.0 - fade) * data[i] + fade * gray
        luma = 0.299 * x[0] + 0.587 * x[1] + 0.114 * x[2]
        x = luma[None] + sat * (x - luma[None])
        if sigma > 0:
            noise = rng.normal(0.0, sigma, size=(h, w))
            x = x + uniform_filter(noise, size=3)[None]
        out[i] = np.clip(x, 0.0, 1.0)
    return Tensor(out.astype(np.float32))


def make_pair(hr, spec, rng):
    """(degraded input, clean target) for one high-resolution tensor.

    sr       -> (jpeg(bicubic down x scale), hr)
    enhance  -> (bicubic up(bicubic down), hr)
    oldphoto -> (oldphoto_degrade(hr), hr)
    """
    n, c, h, w = hr.shape
    if spec.mode in ("sr", "enhance") and (h % spec.scale or w % spec.scale):
        raise ShapeError(
            f"make_pair: H={h}, W={w} must be divisible by scale={spec.scale}")
    if spec.mode == "sr":
        low = bicubic_resize(hr, h // spec.scale, w // spec.scale)
        return jpeg_degrade(low, spec.jpeg_quality), hr
    if spec.mode == "enhance":
        low = bicubic_resize(hr, h // spec.scale, w // spec.scale)
        return bicubic_resize(low, h, w), hr
    return oldphoto_degrade(hr, spec, rng), hr
