"""Headless experiment harnesses.

Each run is deterministic given (model, schedule, seed): every stochastic
draw comes from a counter-based substream keyed by experiment number and
role, so runs are reproducible and independent of each other. Sweeps share
their mutation noise across sweep points (common random numbers), which
keeps the sweep variable as the only thing changing between rows.
"""

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import torch

from . import rng as rng_mod
from .errors import ArgumentError
from .evolution import EvolutionSession, init_population, scripted_selector, step_generation
from .evolution import generation_stepped_event, session_created_event
from .genome import CrossoverParams, crossover
from .metrics import PROXY_METRIC, CorrelationReport, PcaTransform, PerceptualMetric
from .metrics import diversity_score, fit_pca, spearman
from .sampler import Genotype, generate, generate_batch
from .schedule import NoiseSchedule

_ROLE_SAMPLE = 0
_ROLE_MUTATION = 1


def _sample_stream(seed: int, exp: int, index: int) -> np.random.Generator:
    return rng_mod.substream(seed, rng_mod.STREAM_EXPERIMENT, exp, _ROLE_SAMPLE, index)


def _mutation_stream(seed: int, exp: int, index: int = 0) -> np.random.Generator:
    return rng_mod.substream(seed, rng_mod.STREAM_EXPERIMENT, exp, _ROLE_MUTATION, index)


def sample_standard(model, sched: NoiseSchedule, count: int, seed: int, exp: int,
                    snapshot_stride: Optional[int] = None):
    """Generate `count` ordinary samples one by one, keeping full genotypes.

    Returns (genotypes, images, trajectories); trajectories is None when no
    stride is given. Single-image generation keeps each sample bit-replayable
    from its genotype.
    """
    genotypes, images, trajectories = [], [], []
    for i in range(count):
        stream = _sample_stream(seed, exp, i)
        shape = model.config.image_shape
        x_T = torch.from_numpy(stream.standard_normal(shape, dtype=np.float32))
        x0, z_out, traj = generate(model, sched, x_T, rng=stream,
                                   snapshot_stride=snapshot_stride)
        genotypes.append(Genotype(x_T=x_T, noise=z_out))
        images.append(x0)
        trajectories.append(traj)
    return genotypes, images, (trajectories if snapshot_stride else None)


def sample_images(model, sched: NoiseSchedule, count: int, seed: int,
                  batch_size: int = 32) -> torch.Tensor:
    """Batched plain sampling for statistics; no genotype bookkeeping."""
    shape = model.config.image_shape
    out = []
    done = 0
    batch = 0
    while done < count:
        b = min(batch_size, count - done)
        stream = _sample_stream(seed, 0, batch)
        x_T = torch.from_numpy(stream.standard_normal((b,) + shape, dtype=np.float32))
        x, _ = generate_batch(model, sched, x_T, rng=stream)
        out.append(x)
        done += b
        batch += 1
    return torch.cat(out, dim=0)


def default_lambda_grid(points: int = 9) -> tuple[float, ...]:
    """Evenly spaced λ including both endpoints; 9 points keeps the
    no-correlation test on the exact-permutation path."""
    return tuple(float(v) for v in np.linspace(0.0, 1.0, points))


def interior_lambda_grid() -> tuple[float, ...]:
    """λ from 0.1 to 0.9 in steps of 0.1 (distance sweeps skip the exact
    parent copies at the endpoints)."""
    return tuple(i / 10 for i in range(1, 10))


def default_t_interp_grid(T: int) -> tuple[int, ...]:
    """t_interp at 0.1·T .. 0.9·T in steps of 0.1·T."""
    return tuple(int(round(f * T / 10)) for f in range(1, 10))


# ---------------------------------------------------------------------------
# Experiment 1: trajectory PCA with a λ sweep between two distant parents

@dataclass
class TrajectoryRow:
    kind: str           # "standard" | "interp"
    image_index: int    # standard-sample index, or λ index for interp rows
    lam: Optional[float]
    t: int              # snapshot step; 0 is the final image
    pc1: float
    pc2: float


@dataclass
class Exp1Result:
    seed: int
    t_interp: int
    snapshot_stride: int
    lambdas: tuple[float, ...]
    parent_a_index: int
    parent_b_index: int
    rows: list[TrajectoryRow]
    final_pc1_by_lambda: list[float]
    correlation: CorrelationReport
    transform: PcaTransform = field(repr=False)
    parent_genotypes: tuple[Genotype, Genotype] = field(repr=False)
    interp_finals: list[torch.Tensor] = field(repr=False)


def _trajectory_states(traj) -> list[tuple[int, torch.Tensor]]:
    return list(traj.snapshots) + [(0, traj.final)]


def exp1_run(model, sched: NoiseSchedule, seed: int, num_images: int = 50,
             snapshot_stride: Optional[int] = None, t_interp: Optional[int] = None,
             lambdas: Optional[Sequence[float]] = None) -> Exp1Result:
    """Fit a 2-component PCA on standard-sample trajectories, pick the pair
    of final images farthest apart along PC1 as parents, and project a λ
    sweep of their offspring trajectories through the same transform."""
    if num_images < 2:
        raise ArgumentError(f"need >= 2 standard images, got {num_images}")
    stride = snapshot_stride or max(sched.T // 10, 1)
    t_int = min(sched.T, t_interp if t_interp is not None else int(round(0.6 * sched.T)))
    lams = tuple(lambdas) if lambdas is not None else default_lambda_grid()

    genotypes, _, trajectories = sample_standard(model, sched, num_images, seed,
                                                 exp=1, snapshot_stride=stride)
    states = [_trajectory_states(traj) for traj in trajectories]
    flat = np.stack([x.numpy().ravel() for per_image in states for _, x in per_image])
    transform = fit_pca(flat, k=2)
    coords = transform.project(flat)

    rows: list[TrajectoryRow] = []
    per_image = len(states[0])
    for i, image_states in enumerate(states):
        for j, (t, _) in enumerate(image_states):
            pc1, pc2 = coords[i * per_image + j]
            rows.append(TrajectoryRow("standard", i, None, t, float(pc1), float(pc2)))

    finals = coords[per_image - 1::per_image]
    span = np.abs(finals[:, 0][:, None] - finals[None, :, 0])
    a_idx, b_idx = np.unravel_index(int(np.argmax(span)), span.shape)
    a_idx, b_idx = int(min(a_idx, b_idx)), int(max(a_idx, b_idx))

    final_pc1: list[float] = []
    interp_finals: list[torch.Tensor] = []
    for li, lam in enumerate(lams):
        child_x_T, injected = crossover(genotypes[a_idx], genotypes[b_idx],
                                        CrossoverParams(lam=lam, t_interp=t_int))
        x0, _, traj = generate(model, sched, child_x_T, injected=injected,
                               t_interp=t_int, snapshot_stride=stride,
                               rng=_mutation_stream(seed, exp=1))
        child_states = _trajectory_states(traj)
        child_coords = transform.project(
            np.stack([x.numpy().ravel() for _, x in child_states]))
        for (t, _), (pc1, pc2) in zip(child_states, child_coords):
            rows.append(TrajectoryRow("interp", li, lam, t, float(pc1), float(pc2)))
        final_pc1.append(float(child_coords[-1, 0]))
        interp_finals.append(x0)

    corr = spearman(lams, final_pc1)
    return Exp1Result(seed=seed, t_interp=t_int, snapshot_stride=stride, lambdas=lams,
                      parent_a_index=a_idx, parent_b_index=b_idx, rows=rows,
                      final_pc1_by_lambda=final_pc1, correlation=corr,
                      transform=transform,
                      parent_genotypes=(genotypes[a_idx], genotypes[b_idx]),
                      interp_finals=interp_finals)


# ---------------------------------------------------------------------------
# Experiment 2: proxy distance to each parent across λ

@dataclass
class Exp2Result:
    seed: int
    t_interp: int
    lambdas: tuple[float, ...]
    dist_to_a: list[float]
    dist_to_b: list[float]
    report_a: CorrelationReport
    report_b: CorrelationReport


def exp2_run(model, sched: NoiseSchedule, seed: int, t_interp: Optional[int] = None,
             lambdas: Optional[Sequence[float]] = None,
             metric: PerceptualMetric = PROXY_METRIC,
             swap_parents: bool = False) -> Exp2Result:
    """One parent pair, one λ sweep with shared mutation noise, distances of
    each offspring to both parents, and the two rank correlations."""
    t_int = min(sched.T, t_interp if t_interp is not None else int(round(0.6 * sched.T)))
    lams = tuple(lambdas) if lambdas is not None else interior_lambda_grid()

    genotypes, parent_images, _ = sample_standard(model, sched, 2, seed, exp=2)
    if swap_parents:
        genotypes, parent_images = genotypes[::-1], parent_images[::-1]
    image_a = parent_images[0].clamp(-1.0, 1.0)
    image_b = parent_images[1].clamp(-1.0, 1.0)

    dist_a, dist_b = [], []
    for lam in lams:
        child_x_T, injected = crossover(genotypes[0], genotypes[1],
                                        CrossoverParams(lam=lam, t_interp=t_int))
        x0, _, _ = generate(model, sched, child_x_T, injected=injected,
                            t_interp=t_int, rng=_mutation_stream(seed, exp=2))
        child = x0.clamp(-1.0, 1.0)
        dist_a.append(metric.distance(child, image_a))
        dist_b.append(metric.distance(child, image_b))

    return Exp2Result(seed=seed, t_interp=t_int, lambdas=lams,
                      dist_to_a=dist_a, dist_to_b=dist_b,
                      report_a=spearman(lams, dist_a),
                      report_b=spearman(lams, dist_b))


# ---------------------------------------------------------------------------
# Experiment 3: offspring diversity across t_interp

@dataclass
class Exp3Result:
    seed: int
    lam: float
    offspring: int
    t_interps: tuple[int, ...]
    diversities: list[float]
    report: CorrelationReport


def exp3_run(model, sched: NoiseSchedule, seed: int,
             t_interps: Optional[Sequence[int]] = None, lam: float = 0.5,
             offspring: int = 20,
             metric: PerceptualMetric = PROXY_METRIC) -> Exp3Result:
    """One parent pair; for each t_interp, breed a cohort at fixed λ with
    independent mutation noise and score its mean pairwise distance."""
    if offspring < 2:
        raise ArgumentError(f"need >= 2 offspring per cohort, got {offspring}")
    grid = tuple(int(t) for t in (t_interps if t_interps is not None
                                  else default_t_interp_grid(sched.T)))
    genotypes, _, _ = sample_standard(model, sched, 2, seed, exp=3)

    diversities = []
    for row, t_int in enumerate(grid):
        child_x_T, injected = crossover(genotypes[0], genotypes[1],
                                        CrossoverParams(lam=lam, t_interp=t_int))
        x_T = child_x_T.unsqueeze(0).expand(offspring, *child_x_T.shape).clone()
        x, _ = generate_batch(model, sched, x_T, injected=injected, t_interp=t_int,
                              rng=_mutation_stream(seed, exp=3, index=row))
        images = [x[i].clamp(-1.0, 1.0) for i in range(offspring)]
        diversities.append(diversity_score(images, metric))

    return Exp3Result(seed=seed, lam=lam, offspring=offspring, t_interps=grid,
                      diversities=diversities,
                      report=spearman(grid, diversities))


# ---------------------------------------------------------------------------
# Experiment 4: headless evolution against a target

@dataclass
class Exp4Result:
    seed: int
    generations: int
    best_distance: list[float]   # best-of-population distance per generation
    selected: list[tuple[str, str]]
    session: EvolutionSession = field(repr=False)


def _best_distance(session: EvolutionSession, target: torch.Tensor,
                   metric: PerceptualMetric) -> float:
    return min(metric.distance(ind.image.clamp(-1.0, 1.0), target)
               for ind in session.population)


def evolve_headless(model, sched: NoiseSchedule, seed: int, target_image,
                    N: int = 10, generations: int = 6,
                    t_interp0: int = 100, s: int = 100,
                    metric: PerceptualMetric = PROXY_METRIC,
                    log_writer=None) -> Exp4Result:
    """Drive an evolution session with the scripted selector for a fixed
    number of generations, logging every step for replay."""
    if generations < 1:
        raise ArgumentError(f"need >= 1 generations, got {generations}")
    target = torch.as_tensor(target_image).clamp(-1.0, 1.0)
    session = init_population(model, sched, N=N, seed=seed,
                              t_interp0=t_interp0, s=s)
    if log_writer is not None:
        log_writer.write(session_created_event(session, sched))

    best = [_best_distance(session, target, metric)]
    selected: list[tuple[str, str]] = []
    for _ in range(generations - 1):
        pair = scripted_selector(session, target, metric)
        step_generation(session, pair[0], pair[1], model, sched)
        if log_writer is not None:
            log_writer.write(generation_stepped_event(session.history[-1]))
        selected.append(pair)
        best.append(_best_distance(session, target, metric))
    return Exp4Result(seed=seed, generations=generations, best_distance=best,
                      selected=selected, session=session)
