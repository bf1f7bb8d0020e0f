"""Reverse-diffusion generation with optional injected noise.

The sampler walks t = T..1, denoising with the model mean and adding sigma_t
times either an injected noise tensor (for steps above T - t_interp) or a
fresh draw from the caller's stream. Every noise actually used is recorded,
so (x_T, Z_out) replays to the same image bit-exactly.
"""

from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np
import torch

from .errors import ArgumentError, NumericError
from .schedule import NoiseSchedule


@dataclass
class Genotype:
    """Heritable representation of one generated image.

    noise[t-1] holds z_t, the tensor added after the denoising step at t;
    together with x_T it fully determines the sampler output.
    """

    x_T: torch.Tensor      # (C, H, W)
    noise: torch.Tensor    # (T, C, H, W)

    @property
    def T(self) -> int:
        return self.noise.shape[0]

    def z(self, t: int) -> torch.Tensor:
        if not 1 <= t <= self.T:
            raise ArgumentError(f"step index t={t} outside [1, {self.T}]")
        return self.noise[t - 1]

    def injection(self, t_interp: Optional[int] = None) -> dict[int, torch.Tensor]:
        """Noise mapping covering the top t_interp steps (all T by default)."""
        span = self.T if t_interp is None else min(t_interp, self.T)
        return {t: self.noise[t - 1] for t in range(self.T - span + 1, self.T + 1)}

    def validate(self):
        if not torch.isfinite(self.x_T).all() or not torch.isfinite(self.noise).all():
            raise NumericError("genotype contains non-finite values")
        if self.noise.shape[1:] != self.x_T.shape:
            raise ArgumentError("noise entries must be shaped like x_T")


@dataclass
class Trajectory:
    """Intermediate images saved every `stride` steps, plus the final x_0.

    Snapshot t values are strictly decreasing multiples of the stride;
    tensors stay in working precision (8-bit conversion happens at export).
    """

    stride: int
    snapshots: list[tuple[int, torch.Tensor]]
    final: torch.Tensor


def _model_mean(model, x: torch.Tensor, t: int, sched: NoiseSchedule) -> torch.Tensor:
    alpha_t = sched.alpha_at(t)
    abar_t = sched.alpha_bar_at(t)
    t_batch = torch.full((x.shape[0],), t, dtype=torch.long)
    eps = model(x, t_batch)
    coef = (1.0 - alpha_t) / np.sqrt(1.0 - abar_t)
    return (x - coef * eps) / np.sqrt(alpha_t)


def _check_injected(injected, t_interp: int, T: int, shape) -> None:
    for t in range(T - t_interp + 1, T + 1):
        if t not in injected:
            raise ArgumentError(f"injected sequence missing required step t={t}")
        if tuple(injected[t].shape) not in (tuple(shape), tuple(shape)[-3:]):
            raise ArgumentError(f"injected noise at t={t} has shape "
                                f"{tuple(injected[t].shape)}, expected {tuple(shape)}")


@torch.no_grad()
def generate(model, sched: NoiseSchedule, x_T: torch.Tensor,
             injected: Optional[Mapping[int, torch.Tensor]] = None,
             t_interp: int = 0,
             snapshot_stride: Optional[int] = None,
             rng: Optional[np.random.Generator] = None,
             zero_final_noise: bool = True):
    """Generate one image from initial noise, recording the noise sequence.

    Returns (x_0, z_out, trajectory) where z_out is a (T, C, H, W) tensor with
    z_out[t-1] the noise actually added at step t, and trajectory is None
    unless snapshot_stride is given. Injected noise is used for steps
    t > T - t_interp when `injected` is present; all other steps draw fresh
    noise from `rng`, except t=1 which adds no noise under the default
    convention (the zero tensor is still recorded so the sequence has exactly
    T entries). Set zero_final_noise=False to add noise at t=1 as well.
    """
    T = sched.T
    if not 0 <= t_interp <= T:
        raise ArgumentError(f"t_interp={t_interp} outside [0, {T}]")
    if x_T.ndim != 3:
        raise ArgumentError(f"x_T must be (C, H, W), got shape {tuple(x_T.shape)}")
    if injected is not None:
        _check_injected(injected, t_interp, T, x_T.shape)

    shape = tuple(x_T.shape)
    x = x_T.unsqueeze(0).clone()
    z_out = torch.empty((T,) + shape, dtype=x_T.dtype)
    snaps: list[tuple[int, torch.Tensor]] = []

    for t in range(T, 0, -1):
        if injected is not None and t > T - t_interp:
            z = injected[t].reshape(shape)
        elif t == 1 and zero_final_noise:
            z = torch.zeros(shape, dtype=x_T.dtype)
        else:
            if rng is None:
                raise ArgumentError("rng required when steps are not fully injected")
            z = torch.from_numpy(rng.standard_normal(shape, dtype=np.float32)).to(x_T.dtype)
        z_out[t - 1] = z
        x = _model_mean(model, x, t, sched) + sched.sigma_at(t) * z
        if not torch.isfinite(x).all():
            raise NumericError(f"non-finite intermediate image at step t={t}", step=t)
        if snapshot_stride and t - 1 > 0 and (t - 1) % snapshot_stride == 0:
            snaps.append((t - 1, x[0].clone()))

    x0 = x[0]
    trajectory = Trajectory(snapshot_stride, snaps, x0.clone()) if snapshot_stride else None
    return x0, z_out, trajectory


@torch.no_grad()
def generate_batch(model, sched: NoiseSchedule, x_T: torch.Tensor,
                   injected: Optional[Mapping[int, torch.Tensor]] = None,
                   t_interp: int = 0,
                   snapshot_stride: Optional[int] = None,
                   rng: Optional[np.random.Generator] = None,
                   shared_mutation: bool = False,
                   zero_final_noise: bool = True):
    """Batched variant for the experiment harnesses.

    x_T is (B, C, H, W); injected entries may be (C, H, W) (broadcast over the
    batch) or (B, C, H, W). Fresh-noise steps draw one tensor per batch
    element, or a single shared tensor when shared_mutation is set. Batch
    reduction order differs from the single-image path, so per-individual
    bookkeeping (bit-exact replay) must use `generate`.
    """
    T = sched.T
    if not 0 <= t_interp <= T:
        raise ArgumentError(f"t_interp={t_interp} outside [0, {T}]")
    if x_T.ndim != 4:
        raise ArgumentError(f"x_T must be (B, C, H, W), got shape {tuple(x_T.shape)}")
    if injected is not None:
        _check_injected(injected, t_interp, T, x_T.shape)

    B = x_T.shape[0]
    im_shape = tuple(x_T.shape[1:])
    x = x_T.clone()
    snaps: list[tuple[int, torch.Tensor]] = []

    for t in range(T, 0, -1):
        if injected is not None and t > T - t_interp:
            z = injected[t]
            if z.ndim == 3:
                z = z.unsqueeze(0)
        elif t == 1 and zero_final_noise:
            z = torch.zeros((1,) + im_shape, dtype=x_T.dtype)
        else:
            if rng is None:
                raise ArgumentError("rng required when steps are not fully injected")
            draw_shape = im_shape if shared_mutation else (B,) + im_shape
            z = torch.from_numpy(rng.standard_normal(draw_shape, dtype=np.float32))
            if shared_mutation:
                z = z.unsqueeze(0)
            z = z.to(x_T.dtype)
        x = _model_mean(model, x, t, sched) + sched.sigma_at(t) * z
        if not torch.isfinite(x).all():
            raise NumericError(f"non-finite intermediate image at step t={t}", step=t)
        if snapshot_stride and t - 1 > 0 and (t - 1) % snapshot_stride == 0:
            snaps.append((t - 1, x.clone()))

    trajectory = Trajectory(snapshot_stride, snaps, x.clone()) if snapshot_stride else None
    return x, trajectory
