"""Population engine: initialization, selection intake, offspring generation.

Each generation replaces the whole population with N offspring bred from the
two user-selected parents; the injected-noise depth t_interp grows by s per
generation (clamped to T), shifting the search from exploration toward
exploitation. All randomness flows through counter-based substreams of the
session seed, so any session replays bit-exactly from its run log.
"""

import uuid
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import torch

from . import rng as rng_mod
from .errors import ConfigurationError, SelectionError
from .genome import CrossoverParams, crossover
from .metrics import PROXY_METRIC, PerceptualMetric
from .sampler import Genotype, generate
from .schedule import NoiseSchedule

DEFAULT_T_INTERP0 = 100
DEFAULT_STEP_INCREMENT = 100


@dataclass
class Individual:
    id: str
    image: torch.Tensor
    genotype: Genotype
    generation: int
    parent_ids: Optional[tuple[str, str]] = None
    lambda_used: Optional[float] = None


@dataclass
class GenerationRecord:
    generation: int
    parent_a: str
    parent_b: str
    t_interp_used: int
    lambdas: list[float]
    individual_ids: list[str]
    keep_parents: bool = False


@dataclass
class EvolutionSession:
    session_id: str
    population: list[Individual]
    N: int
    t_interp: int
    s: int
    generation: int
    base_seed: int
    T: int
    t_interp0: int
    zero_final_noise: bool = True
    history: list[GenerationRecord] = field(default_factory=list)

    def individual(self, individual_id: str) -> Individual:
        for ind in self.population:
            if ind.id == individual_id:
                return ind
        raise SelectionError(f"unknown individual id {individual_id!r}")


def _individual_id(generation: int, index: int) -> str:
    return f"g{generation:03d}-i{index:02d}"


def init_population(model, sched: NoiseSchedule, N: int, seed: int,
                    t_interp0: int = DEFAULT_T_INTERP0,
                    s: int = DEFAULT_STEP_INCREMENT,
                    session_id: Optional[str] = None,
                    zero_final_noise: bool = True) -> EvolutionSession:
    """Generate the first population from iid initial noise, no injection."""
    if N < 2:
        raise ConfigurationError(f"population size N must be >= 2, got {N}")
    if s < 1:
        raise ConfigurationError(f"step increment s must be >= 1, got {s}")
    t_interp0 = min(int(t_interp0), sched.T)
    shape = model.config.image_shape
    population = []
    for i in range(N):
        stream = rng_mod.offspring_stream(seed, 1, i)
        x_T = torch.from_numpy(stream.standard_normal(shape, dtype=np.float32))
        x0, z_out, _ = generate(model, sched, x_T, injected=None, t_interp=0,
                                rng=stream, zero_final_noise=zero_final_noise)
        population.append(Individual(id=_individual_id(1, i), image=x0,
                                     genotype=Genotype(x_T=x_T, noise=z_out),
                                     generation=1))
    return EvolutionSession(session_id=session_id or uuid.uuid4().hex,
                            population=population, N=N, t_interp=t_interp0, s=int(s),
                            generation=1, base_seed=int(seed), T=sched.T,
                            t_interp0=t_interp0, zero_final_noise=zero_final_noise)


def step_generation(session: EvolutionSession, parent_a_id: str, parent_b_id: str,
                    model, sched: NoiseSchedule,
                    keep_parents: bool = False) -> EvolutionSession:
    """Breed N offspring from the selected pair and advance the schedule.

    Each offspring draws its own lambda ~ U(0, 1), inherits the Slerp of the
    parents' x_T plus the top t_interp noise steps, and fills the remaining
    steps from its private mutation stream. The population is replaced
    wholesale (no elitism); keep_parents carries the two parents into the new
    population in place of two offspring (a UI convenience, not used by the
    batch experiments).
    """
    if parent_a_id == parent_b_id:
        raise SelectionError("parent ids must be distinct")
    parent_a = session.individual(parent_a_id)
    parent_b = session.individual(parent_b_id)

    g_next = session.generation + 1
    t_interp = session.t_interp
    lam_stream = rng_mod.lambda_stream(session.base_seed, g_next)
    num_offspring = session.N - 2 if keep_parents else session.N
    lambdas = [float(lam_stream.uniform()) for _ in range(num_offspring)]

    offspring = [parent_a, parent_b] if keep_parents else []
    for i, lam in enumerate(lambdas):
        params = CrossoverParams(lam=lam, t_interp=t_interp)
        child_x_T, injected = crossover(parent_a.genotype, parent_b.genotype, params)
        stream = rng_mod.offspring_stream(session.base_seed, g_next, i)
        x0, z_out, _ = generate(model, sched, child_x_T, injected=injected,
                                t_interp=t_interp, rng=stream,
                                zero_final_noise=session.zero_final_noise)
        offspring.append(Individual(id=_individual_id(g_next, i), image=x0,
                                    genotype=Genotype(x_T=child_x_T, noise=z_out),
                                    generation=g_next,
                                    parent_ids=(parent_a_id, parent_b_id),
                                    lambda_used=lam))

    session.population = offspring
    session.generation = g_next
    session.history.append(GenerationRecord(
        generation=g_next, parent_a=parent_a_id, parent_b=parent_b_id,
        t_interp_used=t_interp, lambdas=lambdas,
        individual_ids=[ind.id for ind in offspring],
        keep_parents=keep_parents))
    session.t_interp = min(session.t_interp + session.s, session.T)
    return session


def scripted_selector(session: EvolutionSession, target_image,
                      metric: PerceptualMetric = PROXY_METRIC) -> tuple[str, str]:
    """Headless stand-in for the human: the two individuals closest to the
    target under the metric, ties broken by individual id."""
    if len(session.population) < 2:
        raise SelectionError("need at least 2 individuals to select parents")
    target = torch.as_tensor(target_image).clamp(-1.0, 1.0)
    ranked = sorted(
        ((metric.distance(ind.image.clamp(-1.0, 1.0), target), ind.id)
         for ind in session.population),
        key=lambda pair: (pair[0], pair[1]))
    return ranked[0][1], ranked[1][1]


# ---------------------------------------------------------------------------
# run-log events and replay

def session_created_event(session: EvolutionSession, sched: NoiseSchedule,
                          model_ref: str = "") -> dict:
    return {
        "event": "session_created",
        "session_id": session.session_id,
        "base_seed": session.base_seed,
        "N": session.N,
        "t_interp0": session.t_interp0,
        "s": session.s,
        "zero_final_noise": session.zero_final_noise,
        "schedule": {"T": sched.T, "beta_start": sched.beta_start,
                     "beta_end": sched.beta_end},
        "model_ref": model_ref,
        "individual_ids": [ind.id for ind in session.population],
    }


def generation_stepped_event(record: GenerationRecord) -> dict:
    return {
        "event": "generation_stepped",
        "generation": record.generation,
        "parent_a": record.parent_a,
        "parent_b": record.parent_b,
        "t_interp_used": record.t_interp_used,
        "lambdas": record.lambdas,
        "individual_ids": record.individual_ids,
        "keep_parents": record.keep_parents,
    }


def replay_run_log(events: list[dict], model, sched: NoiseSchedule) -> EvolutionSession:
    """Rebuild a session from its event log; images regenerate bit-exactly."""
    if not events or events[0].get("event") != "session_created":
        raise ConfigurationError("run log must start with a session_created event")
    head = events[0]
    logged = head["schedule"]
    if (logged["T"], logged["beta_start"], logged["beta_end"]) != \
            (sched.T, sched.beta_start, sched.beta_end):
        raise ConfigurationError("schedule does not match the run log")
    session = init_population(model, sched, N=head["N"], seed=head["base_seed"],
                              t_interp0=head["t_interp0"], s=head["s"],
                              session_id=head["session_id"],
                              zero_final_noise=head.get("zero_final_noise", True))
    for event in events[1:]:
        if event.get("event") != "generation_stepped":
            continue
        step_generation(session, event["parent_a"], event["parent_b"], model, sched,
                        keep_parents=event.get("keep_parents", False))
        record = session.history[-1]
        if record.lambdas != event["lambdas"] or record.individual_ids != event["individual_ids"]:
            raise ConfigurationError(
                f"replay diverged from the log at generation {record.generation}")
    return session
