"""Shared fixtures: synthetic test imagery and float64 parameter casting."""

import numpy as np
import pytest

from densemod.nn import ParamStore
from densemod.tensor import Tensor


def natural_image(h, w, seed=0):
    """Deterministic test image with smooth shading, edges, and texture."""
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


def params_to_double(params):
    """Copy of a ParamStore with float64 tensors (for gradient checking)."""
    out = ParamStore()
    for name, p in params.items():
        out.add(name, Tensor(p.data.astype(np.float64),
                             requires_grad=p.requires_grad))
    return out


@pytest.fixture
def photo_96():
    return natural_image(96, 96, seed=11)


@pytest.fixture
def photo_64():
    return natural_image(64, 64, seed=5)
