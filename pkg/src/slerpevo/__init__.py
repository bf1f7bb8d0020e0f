"""Evolutionary image search in a DDPM's noise-sequence space.

A genotype is the full reverse-process noise sequence (x_T, z_T..z_1);
crossover interpolates two genotypes step-wise on the Gaussian shell
(Slerp), and an interactive loop breeds populations from user-selected
parents while the injected-noise depth t_interp anneals exploration into
exploitation.
"""

from .denoiser import ArchConfig, DenoiserModel, TrainConfig, predict_noise, train
from .errors import (ArgumentError, ConfigurationError, DegenerateInputError,
                     FormatError, NumericError, SelectionError,
                     TrainingDivergedError)
from .evolution import (EvolutionSession, Individual, init_population,
                        replay_run_log, scripted_selector, step_generation)
from .genome import CrossoverParams, crossover, slerp
from .metrics import (CorrelationReport, PROXY_METRIC, PcaTransform, PerceptualMetric,
                      diversity_score, fit_pca, get_metric, pca_fit_project,
                      proxy_distance, register_metric, spearman)
from .sampler import Genotype, Trajectory, generate, generate_batch
from .schedule import NoiseSchedule, forward_diffuse, forward_diffuse_batch, linear_schedule

__version__ = "0.1.0"

__all__ = [
    "ArchConfig", "ArgumentError", "ConfigurationError", "CorrelationReport",
    "CrossoverParams", "DegenerateInputError", "DenoiserModel", "EvolutionSession",
    "FormatError", "Genotype", "Individual", "NoiseSchedule", "NumericError",
    "PROXY_METRIC", "PcaTransform", "PerceptualMetric", "SelectionError",
    "Trajectory", "TrainConfig", "TrainingDivergedError", "crossover",
    "diversity_score", "fit_pca", "forward_diffuse", "forward_diffuse_batch",
    "generate", "generate_batch", "get_metric", "init_population", "linear_schedule",
    "pca_fit_project", "predict_noise", "proxy_distance", "register_metric",
    "replay_run_log", "scripted_selector", "slerp", "spearman", "step_generation",
    "train",
]
