"""Nondominated sorting, constrained dominance and quality-diversity objectives.

Objective vectors are ``(novelty, competition)``, both maximised. Fitness
values (FID for generators, discriminator loss for discriminators) are
minimised and only enter through the feasibility constraint
``f(other) < 2 * f(self)`` and the competition count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .exceptions import UsageError
from .genome import genome_distance
from .metrics import WORST_FITNESS

FITNESS_FLOOR = 1e-8


class ObjectiveVector(NamedTuple):
    novelty: float
    competition: float


def dominates(a, b):
    """Pareto dominance with every objective maximised."""
    return all(x >= y for x, y in zip(a, b)) and any(x > y for x, y in zip(a, b))


def _brute_force_fronts(n, relation):
    remaining = list(range(n))
    fronts = []
    while remaining:
        front = [i for i in remaining if not any(relation(j, i) for j in remaining if j != i)]
        if not front:
            # a dominance cycle: peel the members dominated least often
            counts = {i: sum(relation(j, i) for j in remaining if j != i) for i in remaining}
            low = min(counts.values())
            front = [i for i in remaining if counts[i] == low]
        fronts.append(front)
        remaining = [i for i in remaining if i not in front]
    return fronts


def fast_nondominated_sort(objs, relation=None):
    """Partition indices of ``objs`` into nondominated fronts.

    ``relation(i, j)`` says whether item ``i`` dominates item ``j``; it
    defaults to plain Pareto dominance on ``objs``. Fronts are lists of
    indices in ascending order. If the relation contains a cycle (possible
    for constrained dominance) the stuck members are peeled by fewest
    remaining dominators, so every index is still assigned exactly once.
    """
    n = len(objs)
    if n == 0:
        raise UsageError("cannot sort an empty population")
    if relation is None:
        relation = lambda i, j: dominates(objs[i], objs[j])  # noqa: E731
    dominated_by = [[] for _ in range(n)]
    counts = [0] * n
    for p in range(n):
        for q in range(n):
            if p == q:
                continue
            if relation(p, q):
                dominated_by[p].append(q)
            elif relation(q, p):
                counts[p] += 1
    fronts = []
    current = [p for p in range(n) if counts[p] == 0]
    assigned = 0
    while current:
        fronts.append(sorted(current))
        assigned += len(current)
        nxt = []
        for p in current:
            for q in dominated_by[p]:
                counts[q] -= 1
                if counts[q] == 0:
                    nxt.append(q)
        current = nxt
    if assigned < n:
        done = {i for f in fronts for i in f}
        rest = [i for i in range(n) if i not in done]
        for front in _brute_force_fronts(len(rest), lambda i, j: relation(rest[i], rest[j])):
            fronts.append(sorted(rest[i] for i in front))
    return fronts


def _clamp_fitness(f):
    f = float(f)
    if not math.isfinite(f) or f >= WORST_FITNESS:
        return math.inf
    return max(f, FITNESS_FLOOR)


def feasible(fitness, reference):
    """Whether a solution with ``fitness`` is feasible against ``reference``.

    Fitness is minimised and floored at ``1e-8``; non-finite fitness and the
    worst-case sentinel are never feasible.
    """
    f, r = _clamp_fitness(fitness), _clamp_fitness(reference)
    if math.isinf(f):
        return False
    return f < 2.0 * r


def constrained_dominates(a, b, fitness_a, fitness_b):
    """``a`` constrained-dominates ``b``.

    True when ``a`` is feasible and ``b`` is not, or both are feasible and
    ``a`` Pareto-dominates ``b``.
    """
    a_ok = feasible(fitness_a, fitness_b)
    b_ok = feasible(fitness_b, fitness_a)
    if a_ok and not b_ok:
        return True
    return a_ok and b_ok and dominates(a, b)


def constrained_nondominated_sort(objs, fitnesses):
    return fast_nondominated_sort(
        objs, lambda i, j: constrained_dominates(objs[i], objs[j], fitnesses[i], fitnesses[j]))


@dataclass
class RankedIndividual:
    individual: object
    objectives: ObjectiveVector
    rank: int = 0

    @property
    def fitness(self):
        return self.individual.fitness


def tournament_select(pop, k, rng):
    """Pick ``k`` distinct members uniformly; the constrained-dominance winner survives.

    Ties (neither side dominates) go to the higher novelty, then to a coin
    flip. Returns the winning :class:`RankedIndividual`.
    """
    if not pop:
        raise UsageError("tournament over an empty population")
    if not 1 <= k <= len(pop):
        raise UsageError(f"tournament size {k} invalid for population of {len(pop)}")
    picks = rng.choice(len(pop), size=k, replace=False)
    winner = pop[picks[0]]
    for idx in picks[1:]:
        challenger = pop[idx]
        if constrained_dominates(challenger.objectives, winner.objectives,
                                 challenger.fitness, winner.fitness):
            winner = challenger
        elif constrained_dominates(winner.objectives, challenger.objectives,
                                   winner.fitness, challenger.fitness):
            continue
        elif challenger.objectives.novelty > winner.objectives.novelty:
            winner = challenger
        elif challenger.objectives.novelty == winner.objectives.novelty and rng.random() < 0.5:
            winner = challenger
    return winner


def fitness_tournament(pop, k, rng, key=lambda ind: ind.shared_fitness):
    """Tournament on a minimised scalar (shared fitness in the speciation baseline)."""
    if not pop:
        raise UsageError("tournament over an empty population")
    picks = rng.choice(len(pop), size=k, replace=False)
    best = min(key(pop[i]) for i in picks)
    tied = [i for i in picks if key(pop[i]) == best]
    return pop[tied[0] if len(tied) == 1 else tied[rng.integers(len(tied))]]


@dataclass(frozen=True)
class ArchiveEntry:
    genome: object
    fitness: float


@dataclass
class Archive:
    """Append-only store of ``(genome, fitness)`` snapshots."""

    probability: float = 0.1
    entries: list = field(default_factory=list)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


def archive_update(archive, population, p, rng):
    """Append each member of ``population`` independently with probability ``p``."""
    if not 0.0 <= p <= 1.0:
        raise UsageError(f"archive probability must be in [0, 1], got {p}")
    for ind in population:
        if rng.random() < p:
            archive.entries.append(ArchiveEntry(ind.genome, float(ind.fitness)))
    return archive


def _reference(ind, population, archive):
    ref = [(o.genome, o.fitness) for o in population if o is not ind]
    if archive is not None:
        ref.extend((e.genome, e.fitness) for e in archive)
    return ref


def neighbourhood(ind, population, archive, n=None):
    """``(distance, fitness)`` of the ``n`` nearest reference members, nearest first.

    The reference set is the population without ``ind`` plus the archive;
    ``n=None`` returns all of it. Equal distances keep reference order.
    """
    ref = _reference(ind, population, archive)
    scored = sorted(((genome_distance(ind.genome, g), f) for g, f in ref), key=lambda t: t[0])
    return scored if n is None else scored[:n]


def mean_nearest(distances, n=None):
    """Mean of the ``n`` smallest distances (all of them if fewer, 0 if none)."""
    d = sorted(distances)
    if n is not None:
        d = d[:n]
    return float(np.mean(d)) if d else 0.0


def novelty(ind, population, archive, n):
    if n is not None and n < 1:
        raise UsageError("neighbourhood size must be at least 1")
    return mean_nearest([d for d, _ in neighbourhood(ind, population, archive)], n)


def competition(ind, population, archive, n, mode="local"):
    """Number of neighbours with strictly worse (greater) fitness.

    ``mode="local"`` counts among the ``n`` nearest, ``"global"`` among the
    whole reference set.
    """
    if mode not in ("local", "global"):
        raise UsageError(f"unknown competition mode {mode!r}")
    neigh = neighbourhood(ind, population, archive, n if mode == "local" else None)
    f = float(ind.fitness)
    return sum(1 for _, other in neigh if float(other) > f)


def speciate(population, n_species, rng, max_iter=20):
    """k-medoids clustering of genomes under :func:`genome_distance`.

    The first medoid is drawn from ``rng``; the others are chosen farthest
    first. Ties go to the lowest index. Returns one species label per member.
    """
    n = len(population)
    if n_species < 1 or n_species > n:
        raise UsageError(f"cannot split {n} individuals into {n_species} species")
    dist = np.array([[genome_distance(a.genome, b.genome) for b in population] for a in population])
    medoids = [int(rng.integers(n))]
    while len(medoids) < n_species:
        nearest = dist[:, medoids].min(axis=1)
        nearest[medoids] = -1.0
        medoids.append(int(np.argmax(nearest)))
    labels = None
    for _ in range(max_iter):
        new_labels = np.argmin(dist[:, medoids], axis=1)
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for c in range(n_species):
            members = np.flatnonzero(labels == c)
            if members.size:
                costs = dist[np.ix_(members, members)].sum(axis=1)
                medoids[c] = int(members[np.argmin(costs)])
    return [int(x) for x in labels]


def shared_fitness(fitnesses, labels):
    """Raw (minimised) fitness multiplied by the size of its species."""
    sizes = np.bincount(labels)
    return [float(f) * int(sizes[s]) for f, s in zip(fitnesses, labels)]
