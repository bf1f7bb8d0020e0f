"""Noise-prediction network and its training loop.

The backbone is a small residual U-Net (no attention): per resolution level a
stack of residual blocks with group normalization, SiLU, and a sinusoidal
time embedding injected into every block; downsampling by strided conv,
upsampling by nearest-neighbor + conv. The output head is zero-initialized so
an untrained model predicts zero noise.
"""

import math
import time
from dataclasses import dataclass, field, asdict
from typing import Callable, Optional

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from . import rng as rng_mod
from .errors import ArgumentError, ConfigurationError, TrainingDivergedError
from .schedule import NoiseSchedule, forward_diffuse_batch


@dataclass(frozen=True)
class ArchConfig:
    image_shape: tuple[int, int, int] = (1, 32, 32)
    base_channels: int = 32
    channel_mult: tuple[int, ...] = (1, 2, 2)
    num_res_blocks: int = 2
    time_embed_dim: int = 128
    groups: int = 8

    def to_dict(self) -> dict:
        d = asdict(self)
        d["image_shape"] = list(self.image_shape)
        d["channel_mult"] = list(self.channel_mult)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ArchConfig":
        return cls(image_shape=tuple(d["image_shape"]),
                   base_channels=int(d["base_channels"]),
                   channel_mult=tuple(d["channel_mult"]),
                   num_res_blocks=int(d["num_res_blocks"]),
                   time_embed_dim=int(d["time_embed_dim"]),
                   groups=int(d["groups"]))


@dataclass
class TrainConfig:
    epochs: int
    batch_size: int
    learning_rate: float
    weight_decay: float = 0.0
    beta1: float = 0.9
    checkpoint_interval: int = 0   # 0 disables periodic checkpoints
    seed: int = 0
    augment: bool = True

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.learning_rate <= 0:
            raise ConfigurationError("epochs >= 0, batch_size >= 1, learning_rate > 0 required")
        if self.weight_decay < 0 or not 0 < self.beta1 < 1:
            raise ConfigurationError("weight_decay >= 0 and beta1 in (0, 1) required")
        if self.epochs > 0 and self.checkpoint_interval > self.epochs:
            raise ConfigurationError("checkpoint_interval must be <= epochs")


def sinusoidal_time_embedding(t: torch.Tensor, dim: int) -> torch.Tensor:
    """Standard sin/cos embedding of integer steps; t is a (B,) tensor."""
    half = dim // 2
    freqs = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=torch.float64) / max(half - 1, 1))
    args = t.to(torch.float64)[:, None] * freqs[None, :]
    emb = torch.cat([torch.sin(args), torch.cos(args)], dim=1)
    if dim % 2 == 1:
        emb = F.pad(emb, (0, 1))
    return emb.to(torch.float32)


def _norm(channels: int, groups: int) -> nn.GroupNorm:
    g = groups if channels % groups == 0 else 1
    return nn.GroupNorm(g, channels)


class ResidualBlock(nn.Module):
    def __init__(self, in_ch: int, out_ch: int, time_dim: int, groups: int):
        super().__init__()
        self.norm1 = _norm(in_ch, groups)
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, padding=1)
        self.time_proj = nn.Linear(time_dim, out_ch)
        self.norm2 = _norm(out_ch, groups)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, padding=1)
        self.skip = nn.Conv2d(in_ch, out_ch, 1) if in_ch != out_ch else nn.Identity()

    def forward(self, x, temb):
        h = self.conv1(F.silu(self.norm1(x)))
        h = h + self.time_proj(F.silu(temb))[:, :, None, None]
        h = self.conv2(F.silu(self.norm2(h)))
        return h + self.skip(x)


class Downsample(nn.Module):
    def __init__(self, ch: int):
        super().__init__()
        self.conv = nn.Conv2d(ch, ch, 3, stride=2, padding=1)

    def forward(self, x):
        return self.conv(x)


class Upsample(nn.Module):
    def __init__(self, ch: int):
        super().__init__()
        self.conv = nn.Conv2d(ch, ch, 3, padding=1)

    def forward(self, x):
        return self.conv(F.interpolate(x, scale_factor=2, mode="nearest"))


class DenoiserModel(nn.Module):
    """Residual U-Net predicting the noise component of x_t."""

    def __init__(self, config: ArchConfig):
        super().__init__()
        self.config = config
        ch = config.base_channels
        tdim = config.time_embed_dim
        in_ch = config.image_shape[0]

        self.time_mlp = nn.Sequential(nn.Linear(tdim, tdim), nn.SiLU(), nn.Linear(tdim, tdim))
        self.in_conv = nn.Conv2d(in_ch, ch, 3, padding=1)

        widths = [ch * m for m in config.channel_mult]
        self.down_blocks = nn.ModuleList()
        self.downsamples = nn.ModuleList()
        skip_chs = [ch]
        cur = ch
        for level, w in enumerate(widths):
            blocks = nn.ModuleList()
            for _ in range(config.num_res_blocks):
                blocks.append(ResidualBlock(cur, w, tdim, config.groups))
                cur = w
                skip_chs.append(cur)
            self.down_blocks.append(blocks)
            if level < len(widths) - 1:
                self.downsamples.append(Downsample(cur))
                skip_chs.append(cur)

        self.mid1 = ResidualBlock(cur, cur, tdim, config.groups)
        self.mid2 = ResidualBlock(cur, cur, tdim, config.groups)

        self.up_blocks = nn.ModuleList()
        self.upsamples = nn.ModuleList()
        for level, w in reversed(list(enumerate(widths))):
            blocks = nn.ModuleList()
            for _ in range(config.num_res_blocks + 1):
                blocks.append(ResidualBlock(cur + skip_chs.pop(), w, tdim, config.groups))
                cur = w
            self.up_blocks.append(blocks)
            if level > 0:
                self.upsamples.append(Upsample(cur))

        self.out_norm = _norm(cur, config.groups)
        self.out_conv = nn.Conv2d(cur, in_ch, 3, padding=1)
        nn.init.zeros_(self.out_conv.weight)
        nn.init.zeros_(self.out_conv.bias)

    def forward(self, x: torch.Tensor, t: torch.Tensor) -> torch.Tensor:
        if tuple(x.shape[1:]) != self.config.image_shape:
            raise ArgumentError(f"input shape {tuple(x.shape[1:])} != model image shape "
                                f"{self.config.image_shape}")
        temb = self.time_mlp(sinusoidal_time_embedding(t, self.config.time_embed_dim).to(x.dtype))
        h = self.in_conv(x)
        skips = [h]
        for level, blocks in enumerate(self.down_blocks):
            for block in blocks:
                h = block(h, temb)
                skips.append(h)
            if level < len(self.down_blocks) - 1:
                h = self.downsamples[level](h)
                skips.append(h)
        h = self.mid1(h, temb)
        h = self.mid2(h, temb)
        for i, blocks in enumerate(self.up_blocks):
            for block in blocks:
                h = block(torch.cat([h, skips.pop()], dim=1), temb)
            if i < len(self.upsamples):
                h = self.upsamples[i](h)
        return self.out_conv(F.silu(self.out_norm(h)))


def predict_noise(model: DenoiserModel, x_t: torch.Tensor, t: int) -> torch.Tensor:
    """Single-image inference: x_t is (C, H, W), t a 1-indexed step."""
    if tuple(x_t.shape) != model.config.image_shape:
        raise ArgumentError(f"x_t shape {tuple(x_t.shape)} != model image shape "
                            f"{model.config.image_shape}")
    if t < 1:
        raise ArgumentError(f"step index t={t} must be >= 1")
    with torch.no_grad():
        return model(x_t.unsqueeze(0), torch.tensor([t], dtype=torch.long))[0]


def _affine_matrices(params: np.ndarray) -> torch.Tensor:
    """Build inverse affine grids (output -> input coords) for grid_sample.

    params rows are (scale, angle_rad, tx_frac, ty_frac): the image content is
    scaled, rotated, then translated by the given fraction of its size.
    """
    scale, ang, tx, ty = params[:, 0], params[:, 1], params[:, 2], params[:, 3]
    cos, sin = np.cos(ang), np.sin(ang)
    theta = np.zeros((len(params), 2, 3), dtype=np.float32)
    theta[:, 0, 0] = cos / scale
    theta[:, 0, 1] = sin / scale
    theta[:, 1, 0] = -sin / scale
    theta[:, 1, 1] = cos / scale
    # Normalized coordinates span [-1, 1], so a shift by a fraction f of the
    # image size is 2f; the grid maps output to input, hence the sign flip.
    theta[:, 0, 2] = -2.0 * tx
    theta[:, 1, 2] = -2.0 * ty
    return torch.from_numpy(theta)


def augment_batch(x: torch.Tensor, rng: np.random.Generator,
                  scale_range=(0.9, 1.1), max_rotate_deg=15.0,
                  max_translate=0.1) -> torch.Tensor:
    """Random per-image scale/rotation/translation, bilinear, zero fill.

    Operates in model space where the zero-pixel background is -1, so the
    batch is shifted to a zero background before resampling and back after.
    """
    B = x.shape[0]
    params = np.stack([
        rng.uniform(scale_range[0], scale_range[1], B),
        rng.uniform(-np.deg2rad(max_rotate_deg), np.deg2rad(max_rotate_deg), B),
        rng.uniform(-max_translate, max_translate, B),
        rng.uniform(-max_translate, max_translate, B),
    ], axis=1)
    grid = F.affine_grid(_affine_matrices(params), list(x.shape), align_corners=False)
    return F.grid_sample(x + 1.0, grid, mode="bilinear", padding_mode="zeros",
                         align_corners=False) - 1.0


def training_loss(model: DenoiserModel, x0: torch.Tensor, t: np.ndarray,
                  eps: torch.Tensor, sched: NoiseSchedule) -> torch.Tensor:
    """Mean squared error between the predicted and the true noise."""
    x_t = forward_diffuse_batch(x0, t, eps, sched)
    t_tensor = torch.as_tensor(t, dtype=torch.long)
    return F.mse_loss(model(x_t, t_tensor), eps)


def train(model: DenoiserModel, dataset, sched: NoiseSchedule, cfg: TrainConfig,
          on_checkpoint: Optional[Callable[[DenoiserModel, int], None]] = None,
          log: Optional[Callable[[str], None]] = None):
    """Optimize the model on images in [-1, 1]; returns (model, loss history).

    Each step draws per-sample steps t ~ U[1, T] and noise eps ~ N(0, I),
    noises the batch in closed form, and minimizes the prediction MSE with
    AdamW (betas=(cfg.beta1, 0.999), eps=1e-8, decoupled weight decay).
    """
    images = dataset.images if hasattr(dataset, "images") else dataset
    if len(images) == 0:
        raise ArgumentError("dataset is empty")
    if tuple(images.shape[1:]) != model.config.image_shape:
        raise ArgumentError(f"dataset image shape {tuple(images.shape[1:])} != model image "
                            f"shape {model.config.image_shape}")

    history: list[float] = []
    if cfg.epochs == 0:
        return model, history

    stream = rng_mod.substream(cfg.seed, rng_mod.STREAM_DATA)
    opt = torch.optim.AdamW(model.parameters(), lr=cfg.learning_rate,
                            betas=(cfg.beta1, 0.999), eps=1e-8,
                            weight_decay=cfg.weight_decay)
    n = len(images)
    model.train()
    for epoch in range(1, cfg.epochs + 1):
        order = stream.permutation(n)
        epoch_losses = []
        t_start = time.time()
        for bi, start in enumerate(range(0, n, cfg.batch_size)):
            batch = images[torch.from_numpy(order[start:start + cfg.batch_size])]
            if cfg.augment:
                batch = augment_batch(batch, stream)
            t = stream.integers(1, sched.T + 1, size=batch.shape[0])
            eps = torch.from_numpy(
                stream.standard_normal(tuple(batch.shape), dtype=np.float32))
            loss = training_loss(model, batch, t, eps, sched)
            if not torch.isfinite(loss):
                norms = {name: float(p.detach().norm()) for name, p in model.named_parameters()}
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, batch {bi}", epoch, bi, norms)
            opt.zero_grad()
            loss.backward()
            opt.step()
            epoch_losses.append(float(loss.detach()))
        history.append(float(np.mean(epoch_losses)))
        if log:
            log(f"epoch {epoch}/{cfg.epochs} mean_loss={history[-1]:.5f} "
                f"({time.time() - t_start:.1f}s)")
        if on_checkpoint and cfg.checkpoint_interval and epoch % cfg.checkpoint_interval == 0:
            on_checkpoint(model, epoch)
    model.eval()
    return model, history
