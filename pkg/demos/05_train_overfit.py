"""Trains the x4 super-resolution generator to overfit one patch, then
compares the reconstruction to the bicubic baseline.

Runs about 500 iterations (~40 s on a desktop CPU); the acceptance suite
runs the full 2000-iteration version.
"""

import os
import tempfile

import numpy as np

import densemod.degrade as D
import densemod.metrics as M
import densemod.nn as nn
from densemod.config import parse_config
from densemod.pngio import save_image
from densemod.tensor import Tensor
from densemod.train import load_model, run_training

OUT = os.path.join(os.path.dirname(__file__), "output", "05_overfit")
os.makedirs(OUT, exist_ok=True)


def scene(h, w, seed=11):
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


hr = scene(96, 96)
with tempfile.TemporaryDirectory() as tmp:
    data_dir = os.path.join(tmp, "data")
    os.makedirs(data_dir)
    save_image(os.path.join(data_dir, "patch.png"), hr)

    cfg = parse_config(f"""
model.mode=super_resolution
degradation.mode=sr
degradation.jpeg_quality=20
data_dir={data_dir}
out_dir={os.path.join(tmp, 'run')}
batch_size=1
patch_size=96
iterations=500
checkpoint_every=100
schedule.initial_lr=1e-3
schedule.num_halvings=0
""")
    result = run_training(cfg, log=print)
    spec, params = load_model(result["weights"])

degraded, _ = D.make_pair(Tensor(hr), D.DegradationSpec(mode="sr"),
                          np.random.default_rng(0))
recon = nn.sr_generator_forward(degraded, params, spec, train=False)
bicubic = D.bicubic_resize(degraded, 96, 96)

save_image(os.path.join(OUT, "hr.png"), hr)
save_image(os.path.join(OUT, "input_24x24.png"), degraded.data)
save_image(os.path.join(OUT, "bicubic_x4.png"), bicubic.data)
save_image(os.path.join(OUT, "model_x4.png"), recon.data)

print(f"\nbicubic baseline : {M.psnr(bicubic.data, hr):6.2f} dB / "
      f"SSIM {M.ssim(bicubic.data, hr):.4f}")
print(f"trained model    : {M.psnr(recon.data, hr):6.2f} dB / "
      f"SSIM {M.ssim(recon.data, hr):.4f}")
print(f"images written to {OUT}")
