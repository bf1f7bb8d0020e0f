"""Counter-based random streams.

Every stochastic draw in the engine comes from a Philox generator keyed by
(base seed, stream tag, *path), so any offspring's noise can be regenerated
from (session seed, generation, offspring index) without replaying anything
else. Streams never share state; drawing from one cannot perturb another.
"""

from numpy.random import Generator, Philox, SeedSequence

# Stream tags. Keep values stable: run-log replay depends on them.
STREAM_POPULATION = 0  # per-offspring sampling noise (x_T + mutation draws)
STREAM_LAMBDA = 1      # per-generation crossover coefficients
STREAM_DATA = 2        # dataset shuffling, train-step draws, augmentation
STREAM_EXPERIMENT = 3  # experiment harness draws (parents, targets)


def substream(base_seed: int, *path: int) -> Generator:
    """Independent generator for (base_seed, *path)."""
    return Generator(Philox(SeedSequence(base_seed, spawn_key=tuple(path))))


def offspring_stream(base_seed: int, generation: int, index: int) -> Generator:
    """Noise stream for one individual: x_T first, then mutation draws in step order."""
    return substream(base_seed, STREAM_POPULATION, generation, index)


def lambda_stream(base_seed: int, generation: int) -> Generator:
    """Stream for the per-offspring interpolation coefficients of one generation."""
    return substream(base_seed, STREAM_LAMBDA, generation)
