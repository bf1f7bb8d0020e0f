"""Spherical-interpolation crossover over noise-sequence genotypes.

Offspring inherit the initial noise and the first t_interp reverse-process
noise steps as spherical interpolations of the two parents; the remaining
steps are left to fresh draws at sampling time.
"""

import math
from dataclasses import dataclass

import torch

from .errors import ArgumentError, ConfigurationError

DEFAULT_PARALLEL_EPSILON = 1e-5


@dataclass(frozen=True)
class CrossoverParams:
    lam: float
    t_interp: int
    parallel_epsilon: float = DEFAULT_PARALLEL_EPSILON

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigurationError(f"lambda must lie in [0, 1], got {self.lam}")
        if self.t_interp < 0:
            raise ConfigurationError(f"t_interp must be >= 0, got {self.t_interp}")
        if self.parallel_epsilon <= 0.0:
            raise ConfigurationError("parallel_epsilon must be > 0")


def slerp(a: torch.Tensor, b: torch.Tensor, lam: float,
          parallel_epsilon: float = DEFAULT_PARALLEL_EPSILON) -> torch.Tensor:
    """Constant-angular-velocity interpolation from a (lam=0) to b (lam=1).

    Inputs are flattened row-major for the angle computation and the result is
    reshaped back. Near-parallel and near-antipodal pairs (angle within
    parallel_epsilon of 0 or pi, where the sine denominator degenerates) fall
    back to linear interpolation rescaled to the interpolated norm.
    """
    if a.shape != b.shape:
        raise ArgumentError(f"slerp inputs differ in shape: {tuple(a.shape)} vs {tuple(b.shape)}")
    # Exact endpoint copies, so inheritance at lam in {0, 1} is bit-exact.
    if lam == 0.0:
        return a.clone()
    if lam == 1.0:
        return b.clone()

    af = a.reshape(-1).to(torch.float64)
    bf = b.reshape(-1).to(torch.float64)
    na = float(torch.linalg.vector_norm(af))
    nb = float(torch.linalg.vector_norm(bf))
    if na == 0.0 or nb == 0.0:
        raise ArgumentError("slerp requires nonzero-norm inputs")

    cos_theta = float(torch.dot(af, bf)) / (na * nb)
    theta = math.acos(min(1.0, max(-1.0, cos_theta)))

    if theta < parallel_epsilon or theta > math.pi - parallel_epsilon:
        mixed = (1.0 - lam) * af + lam * bf
        target_norm = (1.0 - lam) * na + lam * nb
        mixed_norm = float(torch.linalg.vector_norm(mixed))
        if mixed_norm == 0.0:
            raise ArgumentError("slerp is undefined for exactly antipodal inputs at this lambda")
        out = mixed * (target_norm / mixed_norm)
    else:
        sin_theta = math.sin(theta)
        c_a = math.sin((1.0 - lam) * theta) / sin_theta
        c_b = math.sin(lam * theta) / sin_theta
        out = c_a * af + c_b * bf
    return out.to(a.dtype).reshape(a.shape)


def crossover(parent_a, parent_b, params: CrossoverParams):
    """Interpolate two genotypes into a child inheritance fragment.

    Returns (child_x_T, injected) where injected maps step t to the
    interpolated noise for every t in [T - t_interp + 1, T] and nothing else.
    A pair of all-zero parent noises (the recorded zero at the final step
    under the zero-final-noise convention) interpolates to zero rather than
    tripping the nonzero-norm requirement.
    """
    if parent_a.x_T.shape != parent_b.x_T.shape or parent_a.T != parent_b.T:
        raise ArgumentError("parents must share image shape and step count")
    T = parent_a.T
    t_interp = min(params.t_interp, T)

    child_x_T = slerp(parent_a.x_T, parent_b.x_T, params.lam, params.parallel_epsilon)
    injected: dict[int, torch.Tensor] = {}
    for t in range(T - t_interp + 1, T + 1):
        za, zb = parent_a.z(t), parent_b.z(t)
        if not za.any() and not zb.any():
            injected[t] = torch.zeros_like(za)
        else:
            injected[t] = slerp(za, zb, params.lam, params.parallel_epsilon)
    return child_x_T, injected
