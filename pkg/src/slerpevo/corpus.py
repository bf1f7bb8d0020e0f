"""Desk-scale training corpus written in MNIST's IDX layout.

scikit-learn bundles the UCI handwritten-digits scans (1,797 images at 8×8).
We upscale one digit class to 28×28 and pad the set out with small random
affine variants, then write standard IDX image/label files so the rest of
the pipeline goes through the same loader as a real MNIST download.
"""

import struct
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from sklearn.datasets import load_digits

from . import rng as rng_mod
from .denoiser import augment_batch
from .errors import ArgumentError

IMAGES_NAME = "train-images-idx3-ubyte"
LABELS_NAME = "train-labels-idx1-ubyte"


def _base_images(label: int, image_size: int) -> torch.Tensor:
    """The bundled scans of one digit, bilinearly upscaled, in [-1, 1]."""
    digits = load_digits()
    raw = digits.images[digits.target == label]
    if raw.shape[0] == 0:
        raise ArgumentError(f"no bundled digits with label {label}")
    x = torch.from_numpy(raw).to(torch.float32).unsqueeze(1) / 16.0
    x = F.interpolate(x, size=(image_size, image_size), mode="bilinear",
                      align_corners=False)
    return x.clamp(0.0, 1.0) * 2.0 - 1.0


def write_idx_pair(images: np.ndarray, label: int, out_dir) -> tuple[Path, Path]:
    """Write (N, H, W) uint8 images and a constant label vector as IDX files."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    n, h, w = images.shape
    images_path = out_dir / IMAGES_NAME
    labels_path = out_dir / LABELS_NAME
    with open(images_path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, n, h, w))
        f.write(images.astype(np.uint8).tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, n))
        f.write(np.full(n, label, dtype=np.uint8).tobytes())
    return images_path, labels_path


def build_digits_corpus(out_dir, label: int = 5, count: int = 1000, seed: int = 0,
                        image_size: int = 28) -> tuple[Path, Path]:
    """Build an IDX corpus of `count` images of one digit class.

    The originals come first; the remainder are augmented copies (mild
    scale/rotation/translation) drawn deterministically from the seed.
    """
    if count < 1:
        raise ArgumentError(f"count must be >= 1, got {count}")
    base = _base_images(label, image_size)
    stream = rng_mod.substream(seed, rng_mod.STREAM_DATA, label)

    batches = [base[:count]]
    have = batches[0].shape[0]
    while have < count:
        take = min(base.shape[0], count - have)
        idx = stream.integers(0, base.shape[0], size=take)
        batches.append(augment_batch(base[idx], stream))
        have += take
    images = torch.cat(batches, dim=0).clamp(-1.0, 1.0)

    as_uint8 = ((images[:, 0] + 1.0) * 127.5).round().to(torch.uint8).numpy()
    return write_idx_pair(as_uint8, label, out_dir)
