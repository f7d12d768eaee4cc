"""PSNR and SSIM evaluation oracles, independent of the training losses.

Everything here works on plain float arrays in [0, 1] at double precision;
the SSIM path deliberately goes through scipy's correlation routines so it
shares no code with the differentiable loss it cross-checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import correlate2d

SSIM_WINDOW_SIZE = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2


def _as_batched(a):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 4:
        raise ValueError(f"metrics expect [N,C,H,W] arrays, got shape {a.shape}")
    return a


def psnr(a, b, peak=1.0):
    """10 * log10(peak^2 / MSE); identical inputs give +inf."""
    a = _as_batched(a)
    b = _as_batched(b)
    if a.shape != b.shape:
        raise ValueError(f"psnr: shapes {a.shape} and {b.shape} differ")
    if peak <= 0:
        raise ValueError(f"psnr: peak must be positive, got {peak}")
    mse = np.mean((a - b) ** 2, dtype=np.float64)
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def _metric_window():
    half = (SSIM_WINDOW_SIZE - 1) / 2.0
    ax = np.arange(SSIM_WINDOW_SIZE, dtype=np.float64) - half
    gx, gy = np.meshgrid(ax, ax, indexing="ij")
    w = np.exp(-(gx * gx + gy * gy) / (2.0 * SSIM_SIGMA ** 2))
    return w / w.sum()


def ssim(a, b):
    """Mean windowed SSIM with the same window/constants as the loss."""
    a = _as_batched(a)
    b = _as_batched(b)
    if a.shape != b.shape:
        raise ValueError(f"ssim: shapes {a.shape} and {b.shape} differ")
    n, c, h, w = a.shape
    if h < SSIM_WINDOW_SIZE or w < SSIM_WINDOW_SIZE:
        raise ValueError(
            f"ssim: image {h}x{w} smaller than the {SSIM_WINDOW_SIZE}x"
            f"{SSIM_WINDOW_SIZE} window")
    win = _metric_window()
    values = []
    for i in range(n):
        for j in range(c):
            x = a[i, j]
            y = b[i, j]
            mu_x = correlate2d(x, win, mode="valid")
            mu_y = correlate2d(y, win, mode="valid")
            xx = correlate2d(x * x, win, mode="valid")
            yy = correlate2d(y * y, win, mode="valid")
            xy = correlate2d(x * y, win, mode="valid")
            var_x = xx - mu_x * mu_x
            var_y = yy - mu_y * mu_y
            cov = xy - mu_x * mu_y
            num = (2 * mu_x * mu_y + SSIM_C1) * (2 * cov + SSIM_C2)
            den = (mu_x ** 2 + mu_y ** 2 + SSIM_C1) * (var_x + var_y + SSIM_C2)
            values.append(num / den)
    return float(np.mean(values))


@dataclass
class MetricReport:
    """Per-image PSNR/SSIM values with their arithmetic means."""

    per_image: list = field(default_factory=list)  # (name, psnr_db, ssim)
    psnr_db: float = math.nan
    ssim: float = math.nan

    @classmethod
    def from_pairs(cls, pairs):
        """pairs: iterable of (name, candidate, reference) [N,C,H,W] arrays."""
        rows = [(name, psnr(x, ref), ssim(x, ref)) for name, x, ref in pairs]
        if not rows:
            return cls(per_image=[], psnr_db=math.nan, ssim=math.nan)
        return cls(
            per_image=rows,
            psnr_db=float(np.mean([r[1] for r in rows])),
            ssim=float(np.mean([r[2] for r in rows])),
        )

    def format_table(self):
        lines = [f"{'image':<32} {'psnr_db':>10} {'ssim':>8}"]
        for name, p, s in self.per_image:
            ptxt = "inf" if math.isinf(p) else f"{p:.4f}"
            lines.append(f"{name:<32} {ptxt:>10} {s:>8.4f}")
        ptxt = "inf" if math.isinf(self.psnr_db) else f"{self.psnr_db:.4f}"
        lines.append(f"{'mean':<32} {ptxt:>10} {self.ssim:>8.4f}")
        return "\n".join(lines)
