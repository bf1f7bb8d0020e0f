"""Dataset ingestion, image export, and binary serialization.

Checkpoints and genotypes share one minimal container: an 8-byte magic, a
length-prefixed JSON manifest, and a contiguous little-endian float32 blob
with a CRC32 recorded in the manifest. The layout is deliberately free of
ecosystem-specific pickle formats so other tooling can read it.
"""

import io
import json
import logging
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .denoiser import ArchConfig, DenoiserModel
from .errors import ArgumentError, FormatError
from .sampler import Genotype
from .schedule import NoiseSchedule, linear_schedule

logger = logging.getLogger(__name__)

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
CONTAINER_MAGIC = b"EVOTENS1"
CONTAINER_VERSION = 1


# ---------------------------------------------------------------------------
# IDX ingestion

@dataclass
class ImageDataset:
    images: torch.Tensor  # (N, C, H, W) float32 in [-1, 1]
    label_filter: int
    source_meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.images.shape[0]


def _read_exact(f, n: int, offset: int, what: str) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise FormatError(f"truncated file while reading {what}", offset=offset)
    return data


def load_idx(images_path, labels_path, keep_label: int, target_size: int = 32) -> ImageDataset:
    """Parse IDX image/label files, keep one class, rescale to [-1, 1].

    Images are zero-padded (centered) up to target_size x target_size in
    pixel space, so the padding maps to the -1 background.
    """
    images_path, labels_path = Path(images_path), Path(labels_path)
    with open(images_path, "rb") as f:
        magic, count, rows, cols = struct.unpack(">IIII", _read_exact(f, 16, 0, "image header"))
        if magic != IDX_IMAGES_MAGIC:
            raise FormatError(f"bad image magic 0x{magic:08x}, expected 0x{IDX_IMAGES_MAGIC:08x}",
                              offset=0)
        raw = _read_exact(f, count * rows * cols, 16, f"{count} images")
    pixels = np.frombuffer(raw, dtype=np.uint8).reshape(count, rows, cols)

    with open(labels_path, "rb") as f:
        magic, label_count = struct.unpack(">II", _read_exact(f, 8, 0, "label header"))
        if magic != IDX_LABELS_MAGIC:
            raise FormatError(f"bad label magic 0x{magic:08x}, expected 0x{IDX_LABELS_MAGIC:08x}",
                              offset=0)
        labels = np.frombuffer(_read_exact(f, label_count, 8, f"{label_count} labels"),
                               dtype=np.uint8)
    if label_count != count:
        raise FormatError(f"label count {label_count} != image count {count}")

    keep = pixels[labels == keep_label]
    if not 0 <= keep_label <= 9:
        logger.warning("keep_label=%s is outside 0-9; dataset will be empty", keep_label)
    if rows > target_size or cols > target_size:
        raise ArgumentError(f"source resolution {rows}x{cols} exceeds target {target_size}")
    pad_top = (target_size - rows) // 2
    pad_left = (target_size - cols) // 2
    padded = np.zeros((len(keep), target_size, target_size), dtype=np.uint8)
    padded[:, pad_top:pad_top + rows, pad_left:pad_left + cols] = keep

    images = torch.from_numpy(padded.astype(np.float32) / 127.5 - 1.0).unsqueeze(1)
    meta = {"total": int(count), "kept": int(len(keep)),
            "original_resolution": [int(rows), int(cols)], "target_size": int(target_size)}
    return ImageDataset(images=images, label_filter=int(keep_label), source_meta=meta)


def split_train_val(dataset: ImageDataset, val_count: int, seed: int):
    """Deterministic seeded shuffle split into (train, val) datasets."""
    n = len(dataset)
    if not 0 <= val_count < n:
        raise ArgumentError(f"val_count={val_count} outside [0, {n})")
    order = np.random.Generator(np.random.Philox(seed)).permutation(n)
    val_idx, train_idx = order[:val_count], order[val_count:]
    mk = lambda idx: ImageDataset(images=dataset.images[torch.from_numpy(np.sort(idx))],
                                  label_filter=dataset.label_filter,
                                  source_meta=dict(dataset.source_meta, split_seed=seed))
    return mk(train_idx), mk(val_idx)


# ---------------------------------------------------------------------------
# container format

def write_container(path, manifest: dict, blob: bytes) -> None:
    manifest = dict(manifest)
    manifest["format_version"] = CONTAINER_VERSION
    manifest["blob_crc32"] = zlib.crc32(blob)
    manifest["blob_length"] = len(blob)
    body = json.dumps(manifest, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CONTAINER_MAGIC)
        f.write(struct.pack("<I", len(body)))
        f.write(body)
        f.write(blob)


def read_container(path):
    with open(path, "rb") as f:
        magic = f.read(8)
        if magic != CONTAINER_MAGIC:
            raise FormatError(f"bad container magic {magic!r}", offset=0)
        (mlen,) = struct.unpack("<I", _read_exact(f, 4, 8, "manifest length"))
        manifest = json.loads(_read_exact(f, mlen, 12, "manifest"))
        blob = f.read()
    if manifest.get("format_version") != CONTAINER_VERSION:
        raise FormatError(f"unsupported format version {manifest.get('format_version')}")
    if len(blob) != manifest["blob_length"]:
        raise FormatError(f"blob length {len(blob)} != declared {manifest['blob_length']}",
                          offset=12 + mlen)
    if zlib.crc32(blob) != manifest["blob_crc32"]:
        raise FormatError("blob CRC32 mismatch", offset=12 + mlen)
    return manifest, blob


def _tensor_directory(named: list[tuple[str, np.ndarray]]):
    directory, parts, offset = {}, [], 0
    for name, arr in named:
        data = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        directory[name] = {"dtype": "f4", "shape": list(arr.shape),
                           "offset": offset, "length": len(data)}
        parts.append(data)
        offset += len(data)
    return directory, b"".join(parts)


def _tensor_from_blob(blob: bytes, entry: dict) -> np.ndarray:
    start, length = entry["offset"], entry["length"]
    if start + length > len(blob):
        raise FormatError(f"tensor range [{start}, {start + length}) exceeds blob", offset=start)
    arr = np.frombuffer(blob[start:start + length], dtype="<f4")
    return arr.reshape(entry["shape"]).copy()


# ---------------------------------------------------------------------------
# checkpoints

def save_checkpoint(model: DenoiserModel, sched: NoiseSchedule, path) -> None:
    named = [(name, p.detach().numpy()) for name, p in model.state_dict().items()]
    directory, blob = _tensor_directory(named)
    manifest = {
        "kind": "checkpoint",
        "arch": model.config.to_dict(),
        "schedule": {"T": sched.T, "beta_start": sched.beta_start, "beta_end": sched.beta_end},
        "tensors": directory,
    }
    write_container(path, manifest, blob)


def load_checkpoint(path):
    manifest, blob = read_container(path)
    if manifest.get("kind") != "checkpoint":
        raise FormatError(f"container kind {manifest.get('kind')!r} is not a checkpoint")
    model = DenoiserModel(ArchConfig.from_dict(manifest["arch"]))
    state = {name: torch.from_numpy(_tensor_from_blob(blob, entry))
             for name, entry in manifest["tensors"].items()}
    model.load_state_dict(state, strict=True)
    model.eval()
    s = manifest["schedule"]
    return model, linear_schedule(int(s["T"]), float(s["beta_start"]), float(s["beta_end"]))


# ---------------------------------------------------------------------------
# genotypes

def save_genotype(genotype: Genotype, path) -> None:
    """Blob layout: x_T, then z_T down to z_1, all little-endian float32."""
    T = genotype.T
    x_T = genotype.x_T.detach().numpy()
    z_desc = genotype.noise.detach().numpy()[::-1]  # z_T first
    blob = (np.ascontiguousarray(x_T, dtype="<f4").tobytes()
            + np.ascontiguousarray(z_desc, dtype="<f4").tobytes())
    manifest = {"kind": "genotype", "T": T, "shape": list(x_T.shape)}
    write_container(path, manifest, blob)


def load_genotype(path) -> Genotype:
    manifest, blob = read_container(path)
    if manifest.get("kind") != "genotype":
        raise FormatError(f"container kind {manifest.get('kind')!r} is not a genotype")
    T, shape = int(manifest["T"]), tuple(manifest["shape"])
    plane = int(np.prod(shape))
    expected = 4 * plane * (T + 1)
    if len(blob) != expected:
        raise FormatError(f"genotype blob has {len(blob)} bytes, expected {expected}")
    flat = np.frombuffer(blob, dtype="<f4")
    x_T = flat[:plane].reshape(shape).copy()
    z_desc = flat[plane:].reshape((T,) + shape)
    return Genotype(x_T=torch.from_numpy(x_T),
                    noise=torch.from_numpy(z_desc[::-1].copy()))


# ---------------------------------------------------------------------------
# image export

def to_uint8(x) -> np.ndarray:
    """[-1, 1] to 8-bit grayscale with round-half-away-from-zero."""
    arr = np.asarray(torch.as_tensor(x).detach().numpy(), dtype=np.float64)
    scaled = (np.clip(arr, -1.0, 1.0) + 1.0) / 2.0 * 255.0
    return np.floor(scaled + 0.5).astype(np.uint8)


def png_bytes(x) -> bytes:
    arr = to_uint8(x)
    if arr.ndim == 3 and arr.shape[0] == 1:
        arr = arr[0]
    elif arr.ndim == 3 and arr.shape[0] == 3:
        arr = arr.transpose(1, 2, 0)
    if arr.ndim == 2:
        img = Image.fromarray(arr, mode="L")
    elif arr.ndim == 3 and arr.shape[2] == 3:
        img = Image.fromarray(arr, mode="RGB")
    else:
        raise ArgumentError(f"cannot export image of shape {arr.shape}")
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def export_png(x, path) -> None:
    Path(path).write_bytes(png_bytes(x))


# ---------------------------------------------------------------------------
# run logs (line-delimited JSON events)

class RunLogWriter:
    def __init__(self, path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._f = open(self.path, "a", encoding="utf-8")

    def write(self, event: dict) -> None:
        self._f.write(json.dumps(event, sort_keys=True) + "\n")
        self._f.flush()

    def close(self) -> None:
        self._f.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_run_log(path) -> list[dict]:
    events = []
    for i, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines()):
        if not line.strip():
            continue
        try:
            events.append(json.loads(line))
        except json.JSONDecodeError as e:
            raise FormatError(f"run log line {i + 1} is not valid JSON: {e}")
    return events
