"""8-bit RGB PNG loading and saving.

Pixels map to [0, 1] by dividing by 255 on load and round-to-nearest on
save, so a save/load round trip moves each value by at most 0.5/255.
"""

from __future__ import annotations

import numpy as np
from PIL import Image

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp")


def load_image(path):
    """Image file -> float32 [1, 3, H, W] array in [0, 1]."""
    with Image.open(path) as im:
        rgb = np.asarray(im.convert("RGB"), dtype=np.float32)
    return (rgb / 255.0).transpose(2, 0, 1)[None]


def save_image(path, array):
    """float [1, 3, H, W] or [3, H, W] array in [0, 1] -> 8-bit RGB PNG."""
    arr = np.asarray(array, dtype=np.float64)
    if arr.ndim == 4:
        if arr.shape[0] != 1:
            raise ValueError(f"save_image: batch size must be 1, got {arr.shape[0]}")
        arr = arr[0]
    if arr.ndim != 3 or arr.shape[0] not in (1, 3):
        raise ValueError(f"save_image: expected [3,H,W] or [1,H,W], got {arr.shape}")
    if arr.shape[0] == 1:
        arr = np.repeat(arr, 3, axis=0)
    quantized = np.rint(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(quantized.transpose(1, 2, 0), mode="RGB").save(path, format="PNG")
