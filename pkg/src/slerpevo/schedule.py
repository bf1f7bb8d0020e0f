"""Diffusion coefficient tables and the closed-form forward process.

All public interfaces speak 1-indexed step numbers t in [1, T]; arrays are
stored 0-indexed so position t-1 holds the value for step t.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, ConfigurationError

DEFAULT_BETA_START = 1e-4
DEFAULT_BETA_END = 0.02


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step variance tables, precomputed in float64 at construction.

    beta[t-1] is the step-t variance, alpha = 1 - beta, alpha_bar the running
    product of alpha, and sigma = sqrt(beta) the reverse-process noise scale.
    Immutable; safe to share across threads.
    """

    T: int
    beta: np.ndarray
    alpha: np.ndarray = field(init=False)
    alpha_bar: np.ndarray = field(init=False)
    sigma: np.ndarray = field(init=False)
    beta_start: float = field(default=DEFAULT_BETA_START)
    beta_end: float = field(default=DEFAULT_BETA_END)

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=np.float64)
        if beta.shape != (self.T,):
            raise ConfigurationError(f"beta must have shape ({self.T},), got {beta.shape}")
        if not np.all((beta > 0.0) & (beta < 1.0)):
            raise ConfigurationError("every beta_t must lie in (0, 1)")
        alpha = 1.0 - beta
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "alpha_bar", np.cumprod(alpha))
        object.__setattr__(self, "sigma", np.sqrt(beta))

    def beta_at(self, t: int) -> float:
        return float(self.beta[self._index(t)])

    def alpha_at(self, t: int) -> float:
        return float(self.alpha[self._index(t)])

    def alpha_bar_at(self, t: int) -> float:
        return float(self.alpha_bar[self._index(t)])

    def sigma_at(self, t: int) -> float:
        return float(self.sigma[self._index(t)])

    def _index(self, t) -> int:
        t = int(t)
        if not 1 <= t <= self.T:
            raise ArgumentError(f"step index t={t} outside [1, {self.T}]")
        return t - 1


def linear_schedule(T: int,
                    beta_start: float = DEFAULT_BETA_START,
                    beta_end: float = DEFAULT_BETA_END) -> NoiseSchedule:
    """Variance linearly spaced from beta_start (t=1) to beta_end (t=T)."""
    if not isinstance(T, (int, np.integer)) or T < 2:
        raise ConfigurationError(f"T must be an integer >= 2, got {T!r}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ConfigurationError(
            f"need 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})")
    beta = np.linspace(beta_start, beta_end, T, dtype=np.float64)
    return NoiseSchedule(T=int(T), beta=beta, beta_start=float(beta_start),
                         beta_end=float(beta_end))


def forward_diffuse(x0, t: int, eps, sched: NoiseSchedule):
    """Closed-form noising: sqrt(abar_t) * x0 + sqrt(1 - abar_t) * eps.

    Pure function; works on torch tensors and numpy arrays alike since the
    coefficients are scalars.
    """
    if getattr(eps, "shape", None) != getattr(x0, "shape", None):
        raise ArgumentError(f"eps shape {getattr(eps, 'shape', None)} != x0 shape "
                            f"{getattr(x0, 'shape', None)}")
    abar = sched.alpha_bar_at(t)
    return float(np.sqrt(abar)) * x0 + float(np.sqrt(1.0 - abar)) * eps


def forward_diffuse_batch(x0, t, eps, sched: NoiseSchedule):
    """Batched noising for training: t is an integer array of per-sample steps."""
    import torch

    if eps.shape != x0.shape:
        raise ArgumentError(f"eps shape {tuple(eps.shape)} != x0 shape {tuple(x0.shape)}")
    t = np.asarray(t)
    if t.min() < 1 or t.max() > sched.T:
        raise ArgumentError(f"step indices outside [1, {sched.T}]")
    abar = sched.alpha_bar[t - 1]
    shape = (-1,) + (1,) * (x0.ndim - 1)
    c0 = torch.as_tensor(np.sqrt(abar), dtype=x0.dtype).reshape(shape)
    c1 = torch.as_tensor(np.sqrt(1.0 - abar), dtype=x0.dtype).reshape(shape)
    return c0 * x0 + c1 * eps
