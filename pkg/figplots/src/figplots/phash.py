"""Small perceptual hash for figure regression checks.

Average hash: downsample to 8x8 grayscale and threshold on the mean, giving
a 64-bit signature that tolerates platform-level antialiasing differences.
An exact byte hash is also provided for pinned-platform CI.
"""

from __future__ import annotations

import hashlib

import numpy as np
from PIL import Image

HASH_SIDE = 8


def average_hash(image_path: str) -> str:
    """64-bit average hash as a 16-hex-digit string."""
    with Image.open(image_path) as img:
        small = img.convert("L").resize((HASH_SIDE, HASH_SIDE), Image.LANCZOS)
    pixels = np.asarray(small, dtype=float)
    bits = (pixels > pixels.mean()).flatten()
    value = 0
    for b in bits:
        value = (value << 1) | int(b)
    return f"{value:016x}"


def hamming(hash_a: str, hash_b: str) -> int:
    return bin(int(hash_a, 16) ^ int(hash_b, 16)).count("1")


def exact_hash(path: str) -> str:
    """sha256 of the file bytes, for exact-match mode on a pinned platform."""
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(65536), b""):
            digest.update(block)
    return digest.hexdigest()
