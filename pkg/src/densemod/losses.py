"""Training objectives: fidelity, structural similarity, perceptual, and
relativistic-average adversarial losses.

All losses are scalar tensors built from engine ops, so they backpropagate
through the tape like any other graph node.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as dt
from .optim import he_init
from .tensor import ShapeError, Tensor

SSIM_WINDOW_SIZE = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2


@dataclass(frozen=True)
class LossWeights:
    """Non-negative weights of the four objectives."""

    fidelity: float = 1.0
    ssim: float = 0.2
    perceptual: float = 0.0
    adversarial: float = 0.0

    def __post_init__(self):
        for field in ("fidelity", "ssim", "perceptual", "adversarial"):
            if getattr(self, field) < 0:
                raise ValueError(f"loss weight {field} must be >= 0")

    @classmethod
    def sr_defaults(cls):
        return cls(fidelity=1.0, ssim=0.2, perceptual=0.0, adversarial=0.0)

    @classmethod
    def enhance_defaults(cls):
        return cls(fidelity=1.0, ssim=0.2, perceptual=1.0, adversarial=0.005)


def fidelity_loss(pred, target, squared=False):
    """Mean absolute deviation between prediction and target.

    ``squared=True`` switches to a true mean squared error for ablations;
    the absolute form is the training default.
    """
    if pred.shape != target.shape:
        raise ShapeError(
            f"fidelity_loss: shapes {pred.shape} and {target.shape} differ")
    diff = dt.sub(pred, target)
    if squared:
        return dt.mean_all(dt.mul(diff, diff))
    return dt.mean_all(dt.abs_(diff))


def gaussian_window(size=SSIM_WINDOW_SIZE, sigma=SSIM_SIGMA):
    """Normalized 2-D Gaussian window used by the windowed SSIM."""
    half = (size - 1) / 2.0
    coords = np.arange(size, dtype=np.float64) - half
    g = np.exp(-(coords ** 2) / (2.0 * sigma ** 2))
    window = np.outer(g, g)
    return window / window.sum()


def _ssim_map(pred, target, window):
    mu_x = dt.depthwise_filter2d(pred, window)
    mu_y = dt.depthwise_filter2d(target, window)
    xx = dt.depthwise_filter2d(dt.mul(pred, pred), window)
    yy = dt.depthwise_filter2d(dt.mul(target, target), window)
    xy = dt.depthwise_filter2d(dt.mul(pred, target), window)
    mu_xx = dt.mul(mu_x, mu_x)
    mu_yy = dt.mul(mu_y, mu_y)
    mu_xy = dt.mul(mu_x, mu_y)
    var_x = dt.sub(xx, mu_xx)
    var_y = dt.sub(yy, mu_yy)
    cov = dt.sub(xy, mu_xy)
    num = dt.mul(2.0 * mu_xy + SSIM_C1, 2.0 * cov + SSIM_C2)
    den = dt.mul(mu_xx + mu_yy + SSIM_C1, dt.add(var_x, var_y) + SSIM_C2)
    return dt.div(num, den)


def ssim_loss(pred, target):
    """1 - mean windowed SSIM (11x11 Gaussian window, sigma 1.5, L = 1)."""
    if pred.shape != target.shape:
        raise ShapeError(
            f"ssim_loss: shapes {pred.shape} and {target.shape} differ")
    window = gaussian_window()
    return 1.0 - dt.mean_all(_ssim_map(pred, target, window))


def ssim_global_loss(pred, target):
    """Unwindowed SSIM loss from whole-image statistics.

    The windowed form is the training loss; this scalar variant makes the
    constant-image arithmetic easy to verify by hand.
    """
    if pred.shape != target.shape:
        raise ShapeError(
            f"ssim_global_loss: shapes {pred.shape} and {target.shape} differ")
    mu_x = dt.mean_all(pred)
    mu_y = dt.mean_all(target)
    var_x = dt.sub(dt.mean_all(dt.mul(pred, pred)), dt.mul(mu_x, mu_x))
    var_y = dt.sub(dt.mean_all(dt.mul(target, target)), dt.mul(mu_y, mu_y))
    cov = dt.sub(dt.mean_all(dt.mul(pred, target)), dt.mul(mu_x, mu_y))
    num = dt.mul(2.0 * dt.mul(mu_x, mu_y) + SSIM_C1, 2.0 * cov + SSIM_C2)
    den = dt.mul(dt.mul(mu_x, mu_x) + dt.mul(mu_y, mu_y) + SSIM_C1,
                 dt.add(var_x, var_y) + SSIM_C2)
    return 1.0 - dt.div(num, den)


class FeatureExtractor:
    """Frozen convolutional feature stack for the perceptual loss.

    By default a seed-pinned, He-initialized five-layer stack; externally
    trained weights (e.g. a VGG-style pyramid) can be plugged in as a list
    of (weight, bias) arrays with the same layout. Parameters never receive
    gradients; only the input does.
    """

    DEFAULT_CHANNELS = (8, 16, 16, 16, 16)
    DEFAULT_STRIDES = (1, 1, 2, 1, 2)

    def __init__(self, seed=0, weights=None, slope=0.1):
        self.slope = slope
        self.layers = []
        if weights is not None:
            for w, b in weights:
                wt = Tensor(np.asarray(w, dtype=np.float32))
                bt = Tensor(np.asarray(b, dtype=np.float32).reshape(1, -1, 1, 1))
                stride = 1
                self.layers.append((wt, bt, stride))
        else:
            rng = np.random.default_rng(seed)
            cin = 3
            for cout, stride in zip(self.DEFAULT_CHANNELS, self.DEFAULT_STRIDES):
                w = he_init((cout, cin, 3, 3), fan_in=cin * 9, rng=rng)
                self.layers.append(
                    (Tensor(w), dt.zeros((1, cout, 1, 1)), stride))
                cin = cout

    @property
    def num_layers(self):
        return len(self.layers)

    def features(self, x):
        """Feature tensors after every conv + leaky-ReLU stage."""
        feats = []
        h = x
        for w, b, stride in self.layers:
            h = dt.leaky_relu(dt.conv2d(h, w, b, stride=stride, pad=1), self.slope)
            feats.append(h)
        return feats


def perceptual_loss(pred, target, extractor, layers=(2, 4)):
    """Sum over requested layers of the mean feature-space deviation.

    Layer indices are 1-based positions in the extractor stack.
    """
    if pred.shape != target.shape:
        raise ShapeError(
            f"perceptual_loss: shapes {pred.shape} and {target.shape} differ")
    for j in layers:
        if not 1 <= j <= extractor.num_layers:
            raise ValueError(
                f"perceptual_loss: layer {j} outside 1..{extractor.num_layers}")
    feats_pred = extractor.features(pred)
    feats_target = extractor.features(target)
    total = None
    for j in layers:
        term = dt.mean_all(dt.abs_(dt.sub(feats_pred[j - 1], feats_target[j - 1])))
        total = term if total is None else dt.add(total, term)
    return total


def rgan_losses(c_real, c_fake):
    """Relativistic-average GAN losses from raw critic maps.

    The critic difference D is squashed through a logistic sigmoid; with
    -log(sigmoid(d)) = softplus(-d) both losses reduce to softplus terms,
    which keeps them finite for any critic output. At equal critic outputs
    both losses are 2*ln(2).
    """
    if c_real.shape != c_fake.shape:
        raise ShapeError(
            f"rgan_losses: critic maps {c_real.shape} and {c_fake.shape} differ")
    d_real_fake = dt.sub(c_real, dt.mean_all(c_fake))
    d_fake_real = dt.sub(c_fake, dt.mean_all(c_real))
    g_loss = dt.add(dt.mean_all(dt.softplus(d_real_fake)),
                    dt.mean_all(dt.softplus(-d_fake_real)))
    d_loss = dt.add(dt.mean_all(dt.softplus(-d_real_fake)),
                    dt.mean_all(dt.softplus(d_fake_real)))
    return g_loss, d_loss
