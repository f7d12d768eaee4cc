"""The three degradation pipelines, visualized and quantified.

Writes clean/degraded image pairs for each mode and sweeps JPEG quality to
show the PSNR staircase the quantization tables produce.
"""

import os

import numpy as np

import densemod.degrade as D
import densemod.metrics as M
from densemod.pngio import save_image
from densemod.tensor import Tensor

OUT = os.path.join(os.path.dirname(__file__), "output", "03_degraded")
os.makedirs(OUT, exist_ok=True)


def scene(h, w, seed=0):
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    r = 0.5 + 0.25 * np.sin(2 * np.pi * yy / 37) * np.cos(2 * np.pi * xx / 23)
    g = 0.5 + 0.3 * np.cos(2 * np.pi * (xx + yy) / 41)
    b = 0.5 + 0.2 * np.sin(2 * np.pi * xx / 29)
    img = np.stack([r, g, b])
    img[:, h // 4:h // 2, w // 4:w // 2] += 0.25
    img[:, :, ::7] -= 0.15
    img += rng.normal(0, 0.04, img.shape)
    return np.clip(img, 0, 1).astype(np.float32)[None]


hr = Tensor(scene(128, 128))
save_image(os.path.join(OUT, "clean.png"), hr.data)

for mode in ("sr", "enhance", "oldphoto"):
    spec = D.DegradationSpec(mode=mode)
    degraded, target = D.make_pair(hr, spec, np.random.default_rng(7))
    save_image(os.path.join(OUT, f"{mode}_input.png"), degraded.data)
    n, c, h, w = degraded.shape
    print(f"{mode:8s}: input {w}x{h}, target {target.shape[3]}x{target.shape[2]}")

print("\nJPEG quality sweep on the clean 128x128 scene:")
for q in (10, 20, 50, 90, 100):
    out = D.jpeg_degrade(hr, q)
    print(f"  q={q:3d}: PSNR {M.psnr(out.data, hr.data):6.2f} dB")
    if q == 20:
        save_image(os.path.join(OUT, "jpeg_q20.png"), out.data)

print("\nold-photo model, stage by stage (fixed parameters):")
stages = [
    ("fade only", dict(fade_strength=(0.4, 0.4), saturation_shift=(1, 1), noise_sigma=(0, 0))),
    ("plus desaturation", dict(fade_strength=(0.4, 0.4), saturation_shift=(0.5, 0.5), noise_sigma=(0, 0))),
    ("plus print noise", dict(fade_strength=(0.4, 0.4), saturation_shift=(0.5, 0.5), noise_sigma=(0.04, 0.04))),
]
for label, kwargs in stages:
    spec = D.DegradationSpec(mode="oldphoto", gray_level=(0.55, 0.55), **kwargs)
    out = D.oldphoto_degrade(hr, spec, np.random.default_rng(3))
    name = label.replace(" ", "_") + ".png"
    save_image(os.path.join(OUT, name), out.data)
    print(f"  {label:18s}: PSNR vs clean {M.psnr(out.data, hr.data):6.2f} dB")
print(f"\nimages written to {OUT}")
