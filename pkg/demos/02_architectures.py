"""Builds both generators and the critic, inspects their budgets, and dumps
the self-extracted feature channels as grayscale images.
"""

import os

import numpy as np

import densemod.nn as nn
from densemod.pngio import save_image
from densemod.tensor import Tensor

OUT = os.path.join(os.path.dirname(__file__), "output", "02_features")
os.makedirs(OUT, exist_ok=True)


def test_card(h, w, seed=0):
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:h, 0:w] / max(h, w)
    img = np.stack([0.5 + 0.4 * np.sin(9 * yy), 0.5 + 0.4 * np.cos(7 * xx),
                    0.5 + 0.3 * np.sin(5 * (xx + yy))])
    img[:, h // 3:h // 2, :] = 0.9
    img += rng.normal(0, 0.02, img.shape)
    return np.clip(img, 0, 1).astype(np.float32)[None]


for mode in ("super_resolution", "detail_enhance"):
    spec = nn.ModelSpec(mode=mode)
    params = nn.build_generator_params(spec)
    print(f"{mode}: {params.total_parameters():,} parameters "
          f"(closed form {nn.expected_param_count(spec):,}, cap 350,000)")

critic = nn.build_critic_params()
print(f"critic: {critic.total_parameters():,} parameters")

# forward shapes
sr_spec = nn.ModelSpec(mode="super_resolution")
sr_params = nn.build_generator_params(sr_spec)
img = Tensor(test_card(32, 32))
sr_out = nn.sr_generator_forward(img, sr_params, sr_spec)
print(f"SR: {tuple(img.shape)} -> {tuple(sr_out.shape)}  (x4 in each spatial dim)")

enh_spec = nn.ModelSpec(mode="detail_enhance")
enh_params = nn.build_generator_params(enh_spec)
img64 = Tensor(test_card(64, 64, seed=1))
enh_out = nn.enh_generator_forward(img64, enh_params, enh_spec)
print(f"enhance: {tuple(img64.shape)} -> {tuple(enh_out.shape)}  (same resolution)")

score = nn.critic_forward(Tensor(test_card(128, 128, seed=2)), critic)
print(f"critic on 128x128 -> patch score map {tuple(score.shape)}")

# the feature map every modulation layer consumes, one PNG per channel
feats = nn.sfe_forward(img, sr_params, sr_spec)
for ch in range(feats.shape[1]):
    fmap = feats.data[0, ch]
    lo, hi = fmap.min(), fmap.max()
    norm = (fmap - lo) / (hi - lo) if hi > lo else np.zeros_like(fmap)
    save_image(os.path.join(OUT, f"ch{ch:02d}.png"), norm[None])
print(f"wrote {feats.shape[1]} self-extracted feature channels to {OUT}")
