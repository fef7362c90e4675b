"""Generation loop for the two coevolving subpopulations.

Each generation trains current generators against offspring discriminators
and offspring generators against current discriminators (all vs. all), then
selects survivors from parents plus offspring and breeds the next offspring.
Three selection strategies share this loop:

* ``coegan``: speciation baseline, survivors ranked by species-shared fitness;
* ``nslc``: constrained nondominated sorting on (novelty, local competition);
* ``nsgc``: as ``nslc`` with the competition neighbourhood set to everyone.
"""

from __future__ import annotations

import io
import pickle
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import ConfigurationError, FormatError, InfeasiblePhenotypeError
from .genome import (DISCRIMINATOR, GENERATOR, Individual, MutationRates, build_phenotype,
                     mutate, random_genome, transfer_weights)
from .metrics import WORST_FITNESS
from .selection import (Archive, ObjectiveVector, RankedIndividual, archive_update, competition,
                        constrained_nondominated_sort, fitness_tournament, novelty, shared_fitness,
                        speciate, tournament_select)
from .training import evaluate_all_vs_all

CHECKPOINT_MAGIC = b"QDGAN-CHECKPOINT"
CHECKPOINT_VERSION = 1
MAX_REBUILDS = 10


class Counter:
    """Picklable monotonically increasing id source."""

    def __init__(self, start=0):
        self.value = start

    def __iter__(self):
        return self

    def __next__(self):
        self.value += 1
        return self.value - 1


@dataclass
class EngineState:
    generation: int
    generators: list
    generator_offspring: list
    discriminators: list
    discriminator_offspring: list
    generator_archive: Archive
    discriminator_archive: Archive
    rng: np.random.Generator
    gene_ids: Counter = field(default_factory=Counter)
    individual_ids: Counter = field(default_factory=Counter)


@dataclass
class GenerationReport:
    generation: int
    mode: str
    seed: int
    best_fid: float
    mean_fid: float
    best_d_loss: float
    mean_d_loss: float
    mean_novelty_g: float
    mean_novelty_d: float
    archive_size_g: int
    archive_size_d: int
    best_g_trained_samples: int
    best_d_trained_samples: int
    mean_g_trained_samples: float
    mean_d_trained_samples: float
    generator_genomes: list = field(default_factory=list)
    discriminator_genomes: list = field(default_factory=list)
    generator_trained_samples: list = field(default_factory=list)
    discriminator_trained_samples: list = field(default_factory=list)

    def as_dict(self):
        return asdict(self)


def _rates(config):
    return MutationRates(config.add_rate, config.remove_rate, config.change_rate)


def _adam_options(config):
    return {"beta1": config.adam_beta1, "beta2": config.adam_beta2}


def _new_individual(state, genome, network, io_shape):
    return Individual(next(state.individual_ids), genome, network, io_shape)


def _offspring_of(parent, state, config, io_shape):
    """Mutate ``parent`` and build the child with inherited weights.

    A diverged parent passes on its genome only, never its weights.
    """
    adam = _adam_options(config)
    if parent.failed:
        inherit = lambda _parent, genome, shape, rng: build_phenotype(genome, shape, rng, adam)  # noqa: E731
    else:
        inherit = lambda parent, genome, shape, rng: transfer_weights(parent, genome, shape, rng, adam)  # noqa: E731
    for _ in range(MAX_REBUILDS):
        genome = mutate(parent.genome, state.rng, _rates(config), width_range=config.width_range,
                        genome_limit=config.genome_limit, next_uid=state.gene_ids)
        try:
            network = inherit(parent, genome, io_shape, state.rng)
        except InfeasiblePhenotypeError:
            continue
        return _new_individual(state, genome, network, io_shape)
    network = inherit(parent, parent.genome, io_shape, state.rng)
    return _new_individual(state, parent.genome, network, io_shape)


def initialize(config, io_shape, rng):
    """Random one-gene populations plus a first batch of mutated offspring."""
    if min(config.generator_population, config.discriminator_population) < 2:
        raise ConfigurationError("populations need at least 2 individuals")
    if config.genome_limit < 1:
        raise ConfigurationError("genome_limit must be at least 1")
    state = EngineState(0, [], [], [], [], Archive(config.archive_probability),
                        Archive(config.archive_probability), rng)
    for role, size, attr in ((GENERATOR, config.generator_population, "generators"),
                             (DISCRIMINATOR, config.discriminator_population, "discriminators")):
        pop = []
        while len(pop) < size:
            genome = random_genome(role, rng, config.width_range, state.gene_ids)
            try:
                network = build_phenotype(genome, io_shape, rng, _adam_options(config))
            except InfeasiblePhenotypeError:
                continue
            pop.append(_new_individual(state, genome, network, io_shape))
        setattr(state, attr, pop)
    state.generator_offspring = [_offspring_of(p, state, config, io_shape) for p in state.generators]
    state.discriminator_offspring = [_offspring_of(p, state, config, io_shape)
                                     for p in state.discriminators]
    return state


def assign_objectives(combined, archive, config):
    """Novelty and competition of every member of ``combined`` (in place)."""
    n = None if config.mode == "nsgc" else config.neighborhood
    mode = "global" if config.mode == "nsgc" else "local"
    for ind in combined:
        if ind.failed:
            ind.novelty, ind.competition = 0.0, 0
            continue
        ind.novelty = novelty(ind, combined, archive, n)
        ind.competition = competition(ind, combined, archive, n, mode)
    return [ObjectiveVector(ind.novelty, ind.competition) for ind in combined]


def assign_shared_fitness(combined, config, rng):
    labels = speciate(combined, min(config.species, len(combined)), rng)
    shared = shared_fitness([ind.fitness for ind in combined], labels)
    for ind, label, value in zip(combined, labels, shared):
        ind.species, ind.shared_fitness = label, value
    return shared


def select_next_population(combined, size, mode, objectives=None):
    """Elitist survivor selection over parents plus offspring.

    Returns ``(survivors, ranked)`` where ``ranked`` holds
    :class:`RankedIndividual` records for the survivors (front rank 0 for
    the baseline). QD modes fill from the constrained fronts and cut the
    overflowing front by descending novelty; the baseline keeps the lowest
    shared fitness.
    """
    if len(combined) < size:
        raise ConfigurationError("not enough candidates to fill the population")
    if mode == "coegan":
        order = sorted(range(len(combined)), key=lambda i: combined[i].shared_fitness)[:size]
        chosen = [combined[i] for i in order]
        return chosen, [RankedIndividual(ind, ObjectiveVector(ind.novelty, ind.competition))
                        for ind in chosen]
    if objectives is None:
        objectives = [ObjectiveVector(ind.novelty, ind.competition) for ind in combined]
    fitnesses = [ind.fitness for ind in combined]
    picked = []
    for rank, front in enumerate(constrained_nondominated_sort(objectives, fitnesses)):
        room = size - len(picked)
        if room <= 0:
            break
        if len(front) > room:
            front = sorted(front, key=lambda i: -objectives[i].novelty)[:room]
        picked.extend((i, rank) for i in front)
    chosen = [combined[i] for i, _ in picked]
    ranked = [RankedIndividual(combined[i], objectives[i], rank) for i, rank in picked]
    return chosen, ranked


def reproduce(ranked, size, state, config, io_shape):
    """``size`` offspring, each a mutated tournament winner with inherited weights."""
    k = min(config.tournament_k, len(ranked))
    children = []
    for _ in range(size):
        if config.mode == "coegan":
            parent = fitness_tournament([r.individual for r in ranked], k, state.rng)
        else:
            parent = tournament_select(ranked, k, state.rng).individual
        children.append(_offspring_of(parent, state, config, io_shape))
    return children


def _mean(values):
    finite = [v for v in values if np.isfinite(v)]
    if len(finite) < len(values):
        return float("inf")
    return float(np.mean(values))


def run_generation(state, config, data, reference_stats, extractor, io_shape):
    """Evaluate, select, archive and reproduce; returns the new state and a report."""
    gen = state.generation + 1
    evaluate_all_vs_all(state.generators, state.discriminator_offspring, data, config,
                        (config.seed, gen, 0), reference_stats, extractor, config.n_jobs)
    evaluate_all_vs_all(state.generator_offspring, state.discriminators, data, config,
                        (config.seed, gen, 1), reference_stats, extractor, config.n_jobs)

    survivors = {}
    for key, parents, offspring, archive, size in (
            ("g", state.generators, state.generator_offspring, state.generator_archive,
             config.generator_population),
            ("d", state.discriminators, state.discriminator_offspring,
             state.discriminator_archive, config.discriminator_population)):
        combined = parents + offspring
        if config.mode == "coegan":
            assign_shared_fitness(combined, config, state.rng)
            chosen, ranked = select_next_population(combined, size, config.mode)
        else:
            objectives = assign_objectives(combined, archive, config)
            chosen, ranked = select_next_population(combined, size, config.mode, objectives)
            archive_update(archive, chosen, config.archive_probability, state.rng)
        for ind in chosen:
            ind.age += 1
        survivors[key] = (chosen, ranked)

    state.generators, g_ranked = survivors["g"]
    state.discriminators, d_ranked = survivors["d"]
    state.generator_offspring = reproduce(g_ranked, config.generator_population, state, config,
                                          io_shape)
    state.discriminator_offspring = reproduce(d_ranked, config.discriminator_population, state,
                                              config, io_shape)
    state.generation = gen
    return state, make_report(state, config)


def make_report(state, config):
    gens, discs = state.generators, state.discriminators
    best_g = min(gens, key=lambda ind: ind.fitness)
    best_d = min(discs, key=lambda ind: ind.fitness)
    return GenerationReport(
        generation=state.generation,
        mode=config.mode,
        seed=config.seed,
        best_fid=float(best_g.fitness),
        mean_fid=_mean([ind.fitness for ind in gens]),
        best_d_loss=float(best_d.fitness),
        mean_d_loss=_mean([ind.fitness for ind in discs]),
        mean_novelty_g=float(np.mean([ind.novelty for ind in gens])),
        mean_novelty_d=float(np.mean([ind.novelty for ind in discs])),
        archive_size_g=len(state.generator_archive),
        archive_size_d=len(state.discriminator_archive),
        best_g_trained_samples=int(best_g.trained_samples),
        best_d_trained_samples=int(best_d.trained_samples),
        mean_g_trained_samples=float(np.mean([ind.trained_samples for ind in gens])),
        mean_d_trained_samples=float(np.mean([ind.trained_samples for ind in discs])),
        generator_genomes=[ind.genome.to_text() for ind in gens],
        discriminator_genomes=[ind.genome.to_text() for ind in discs],
        generator_trained_samples=[int(ind.trained_samples) for ind in gens],
        discriminator_trained_samples=[int(ind.trained_samples) for ind in discs],
    )


def best_individual(population):
    return min(population, key=lambda ind: ind.fitness)


def save_checkpoint(state, path):
    """Write ``state`` as a versioned header line followed by a pickle payload."""
    for ind in (state.generators + state.generator_offspring + state.discriminators
                + state.discriminator_offspring):
        ind.network.clear_cache()
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC + b" %d\n" % CHECKPOINT_VERSION)
    pickle.dump(state, buf, protocol=pickle.HIGHEST_PROTOCOL)
    Path(path).write_bytes(buf.getvalue())


def load_checkpoint(path):
    raw = Path(path).read_bytes()
    header, _, payload = raw.partition(b"\n")
    magic, _, version = header.partition(b" ")
    if magic != CHECKPOINT_MAGIC:
        raise FormatError("not a qdgan checkpoint", offset=0)
    if int(version or 0) != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version.decode()!r}", offset=len(magic) + 1)
    return pickle.loads(payload)


__all__ = [
    "EngineState", "GenerationReport", "initialize", "run_generation", "select_next_population",
    "reproduce", "assign_objectives", "assign_shared_fitness", "save_checkpoint",
    "load_checkpoint", "best_individual", "WORST_FITNESS",
]
