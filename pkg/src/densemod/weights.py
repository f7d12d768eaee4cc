"""Binary weight container.

Layout (all integers little-endian u32):

    magic "DMBN" | format version | entry count
    per entry: name length | name bytes (utf-8) | 4 dims | float32 payload
    trailing CRC32 over all payloads, in entry order

Round trips are bit-exact; a corrupted payload fails the CRC on load.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

MAGIC = b"DMBN"
VERSION = 1


class WeightFileError(ValueError):
    """Malformed, truncated, or corrupted weight file."""


def save_weights(path, arrays):
    """Write an ordered mapping of name -> 4-D float32 array."""
    payload_crc = 0
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(arrays)))
        for name, arr in arrays.items():
            arr = np.ascontiguousarray(arr, dtype="<f4")
            if arr.ndim != 4:
                raise WeightFileError(
                    f"entry {name!r} must be 4-D, got shape {arr.shape}")
            raw_name = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw_name)))
            fh.write(raw_name)
            fh.write(struct.pack("<4I", *arr.shape))
            payload = arr.tobytes()
            payload_crc = zlib.crc32(payload, payload_crc)
            fh.write(payload)
        fh.write(struct.pack("<I", payload_crc))


def _read_exact(fh, n, what):
    data = fh.read(n)
    if len(data) != n:
        raise WeightFileError(f"truncated weight file while reading {what}")
    return data


def load_weights(path):
    """Read back an ordered name -> float32 array mapping, verifying the CRC."""
    arrays = {}
    payload_crc = 0
    with open(path, "rb") as fh:
        if _read_exact(fh, 4, "magic") != MAGIC:
            raise WeightFileError(f"{path}: bad magic, not a weight file")
        version, count = struct.unpack("<II", _read_exact(fh, 8, "header"))
        if version != VERSION:
            raise WeightFileError(f"{path}: unsupported format version {version}")
        for i in range(count):
            (name_len,) = struct.unpack("<I", _read_exact(fh, 4, f"entry {i} name length"))
            name = _read_exact(fh, name_len, f"entry {i} name").decode("utf-8")
            dims = struct.unpack("<4I", _read_exact(fh, 16, f"entry {name!r} dims"))
            numel = int(np.prod(dims, dtype=np.int64))
            payload = _read_exact(fh, numel * 4, f"entry {name!r} payload")
            payload_crc = zlib.crc32(payload, payload_crc)
            if name in arrays:
                raise WeightFileError(f"{path}: duplicate entry {name!r}")
            arrays[name] = np.frombuffer(payload, dtype="<f4").reshape(dims).copy()
        (stored_crc,) = struct.unpack("<I", _read_exact(fh, 4, "checksum"))
        if stored_crc != payload_crc:
            raise WeightFileError(
                f"{path}: payload CRC mismatch "
                f"(stored {stored_crc:#010x}, computed {payload_crc:#010x})")
    return arrays
