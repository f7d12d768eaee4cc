"""Tour of the 4-D autograd engine.

Builds small graphs on [N, C, H, W] tensors, replays the tape backwards,
and cross-checks every gradient against central finite differences.
"""

import numpy as np

import densemod.tensor as dt
from densemod.tensor import Tape, Tensor

rng = np.random.default_rng(0)

# --- forward + backward on a composed graph --------------------------------
x = Tensor(rng.uniform(-1, 1, (1, 4, 6, 6)), requires_grad=True, dtype=np.float64)
w = Tensor(rng.uniform(-1, 1, (4, 4, 3, 3)), requires_grad=True, dtype=np.float64)
b = dt.zeros((1, 4, 1, 1), requires_grad=True, dtype=np.float64)

with Tape() as tape:
    h = dt.conv2d(x, w, b, stride=1, pad=1)
    h = dt.leaky_relu(h, 0.1)
    h = dt.add(h, x)                      # residual
    loss = dt.mean_all(dt.mul(h, h))
print(f"recorded {len(tape)} ops, loss = {loss.item():.6f}")

tape.backward(loss)
print(f"dL/dw has shape {w.grad.shape}, |dL/dw| mean = {np.abs(w.grad).mean():.5f}")

# --- the same gradients, from finite differences ---------------------------
err = dt.finite_difference_check(
    lambda xx, ww, bb: dt.mean_all(
        dt.mul(dt.add(dt.leaky_relu(dt.conv2d(xx, ww, bb, 1, 1), 0.1), xx),
               dt.add(dt.leaky_relu(dt.conv2d(xx, ww, bb, 1, 1), 0.1), xx))),
    [x, w, b])
print(f"max relative error vs central differences: {err:.2e}  (tolerance 1e-4)")

# --- pixel shuffle and its exact inverse ------------------------------------
t = Tensor(np.arange(16.0).reshape(1, 16, 1, 1))
up = dt.pixel_shuffle(t, 4)
print("pixel_shuffle(r=4) of channels 0..15 ->\n", up.data[0, 0])
back = dt.space_to_depth(up, 4)
print("space_to_depth inverts it bit-exactly:", np.array_equal(back.data, t.data))

# --- conv backends: blocked fast path vs direct reference ------------------
xx = Tensor(rng.uniform(-1, 1, (2, 3, 8, 8)).astype(np.float32))
ww = Tensor(rng.uniform(-1, 1, (5, 3, 3, 3)).astype(np.float32))
bb = dt.zeros((1, 5, 1, 1))
fast = dt.conv2d(xx, ww, bb, 1, 1)
dt.set_conv_backend("direct")
ref = dt.conv2d(xx, ww, bb, 1, 1)
dt.set_conv_backend("im2col")
print(f"im2col vs direct reference, max abs delta: "
      f"{np.abs(fast.data - ref.data).max():.2e}")
