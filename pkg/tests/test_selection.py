import itertools
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qdgan.exceptions import UsageError
from qdgan.genome import DISCRIMINATOR, Gene, Genome
from qdgan.metrics import WORST_FITNESS
from qdgan.selection import (Archive, ArchiveEntry, ObjectiveVector, RankedIndividual,
                             archive_update, competition, constrained_dominates,
                             constrained_nondominated_sort, dominates, fast_nondominated_sort,
                             feasible, fitness_tournament, mean_nearest, novelty, shared_fitness,
                             speciate, tournament_select)

V = ObjectiveVector


def ind(fitness=1.0, *specs, novelty=0.0):
    specs = specs or (("Linear", "ReLU", 8),)
    g = Genome(DISCRIMINATOR, [Gene(i, *s) for i, s in enumerate(specs)])
    return SimpleNamespace(genome=g, fitness=fitness, novelty=novelty, shared_fitness=fitness)


def test_dominates_examples():
    assert dominates(V(2, 2), V(1, 1))
    assert not dominates(V(2, 1), V(1, 2)) and not dominates(V(1, 2), V(2, 1))
    assert not dominates(V(2, 2), V(2, 2))


def test_sort_examples():
    a, b, c, d = V(2, 2), V(1, 1), V(2, 1), V(1, 2)
    assert fast_nondominated_sort([a, b, c, d]) == [[0], [2, 3], [1]]
    assert fast_nondominated_sort([V(1, 1)] * 4) == [[0, 1, 2, 3]]
    chain = [V(i, i) for i in range(5)]
    assert fast_nondominated_sort(chain) == [[4], [3], [2], [1], [0]]
    with pytest.raises(UsageError):
        fast_nondominated_sort([])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 4)), min_size=1, max_size=20),
       st.integers(1, 7))
def test_sort_invariant_to_positive_scaling(points, k):
    objs = [V(*p) for p in points]
    scaled = [V(p[0] * k, p[1] * k) for p in points]
    assert fast_nondominated_sort(objs) == fast_nondominated_sort(scaled)


def test_constrained_dominance_examples():
    assert constrained_dominates(V(0, 0), V(9, 9), 1.0, 2.5)
    assert constrained_dominates(V(2, 2), V(1, 1), 1.0, 1.5)
    assert not constrained_dominates(V(1, 1), V(1, 1), 1.0, 1.0)


def test_feasibility_boundary_and_sentinels():
    assert not feasible(2.0, 1.0)  # 2.0 < 2 * 1.0 fails
    assert feasible(1.999, 1.0)
    assert not feasible(float("nan"), 1.0)
    assert not feasible(WORST_FITNESS, 1.0)
    assert feasible(1.0, WORST_FITNESS)
    assert feasible(0.0, 0.0)  # both floored at 1e-8


def test_constrained_sort_ranks_infeasible_last():
    objs = [V(5, 5), V(0, 0), V(1, 1)]
    fronts = constrained_nondominated_sort(objs, [10.0, 1.0, 1.2])
    assert fronts[0] == [2]
    assert fronts[-1] == [0]


def test_constrained_sort_handles_dominance_cycles():
    # a beats c on feasibility (3.5 >= 2), c beats b and b beats a on objectives
    objs = [V(0, 0), V(1, 1), V(2, 2)]
    fits = [1.0, 1.9, 3.5]
    rel = lambda i, j: constrained_dominates(objs[i], objs[j], fits[i], fits[j])  # noqa: E731
    assert rel(0, 2) and rel(2, 1) and rel(1, 0)
    fronts = constrained_nondominated_sort(objs, fits)
    assert sorted(i for f in fronts for i in f) == [0, 1, 2]


def ranked(fitness, objectives):
    return RankedIndividual(SimpleNamespace(fitness=fitness), V(*objectives))


def test_tournament_k1_is_uniform():
    pop = [ranked(1.0, (i, 0)) for i in range(4)]
    rng = np.random.default_rng(0)
    counts = np.bincount([pop.index(tournament_select(pop, 1, rng)) for _ in range(4000)])
    assert np.all(np.abs(counts / 4000 - 0.25) < 0.03)


def test_tournament_feasible_beats_unfeasible():
    good, bad = ranked(1.0, (0, 0)), ranked(5.0, (9, 9))
    rng = np.random.default_rng(0)
    assert all(tournament_select([good, bad], 2, rng) is good for _ in range(200))


def test_tournament_identical_candidates_coin_flip():
    a, b = ranked(1.0, (1, 1)), ranked(1.0, (1, 1))
    rng = np.random.default_rng(0)
    wins = sum(tournament_select([a, b], 2, rng) is a for _ in range(10_000))
    assert abs(wins / 10_000 - 0.5) <= 0.02


def test_tournament_novelty_tie_break():
    a, b = ranked(1.0, (0.9, 1)), ranked(1.0, (0.5, 2))  # incomparable
    rng = np.random.default_rng(0)
    assert all(tournament_select([a, b], 2, rng) is a for _ in range(50))


def test_tournament_guards():
    with pytest.raises(UsageError):
        tournament_select([], 1, np.random.default_rng(0))
    with pytest.raises(UsageError):
        tournament_select([ranked(1, (0, 0))], 2, np.random.default_rng(0))


def test_fitness_tournament_prefers_lower():
    pop = [ind(3.0), ind(1.0)]
    rng = np.random.default_rng(0)
    assert all(fitness_tournament(pop, 2, rng) is pop[1] for _ in range(20))


def test_mean_nearest_examples():
    assert mean_nearest([1.0, 2.0, 3.0, 9.0], 3) == 2.0
    assert mean_nearest([0.4, 0.6], 5) == 0.5
    assert mean_nearest([], 3) == 0.0


def test_novelty_of_archived_duplicate_is_zero():
    me = ind(1.0, ("Linear", "ReLU", 8))
    archive = Archive(entries=[ArchiveEntry(me.genome, 1.0)] * 3)
    others = [ind(1.0, ("Conv2d", "Tanh", 8))]
    assert novelty(me, [me] + others, archive, 3) == 0.0


def test_novelty_empty_reference_is_zero():
    me = ind()
    assert novelty(me, [me], Archive(), 3) == 0.0
    assert competition(me, [me], Archive(), 3) == 0


@settings(max_examples=30, deadline=None)
@given(st.permutations(range(6)))
def test_novelty_order_invariant(order):
    kinds = [("Linear", "ReLU", 8), ("Linear", "Tanh", 8), ("Conv2d", "ReLU", 8),
             ("Linear", "ReLU", 16), ("Conv2d", "ELU", 8), ("Linear", "ELU", 8)]
    pop = [ind(1.0, k) for k in kinds]
    me = ind(1.0, ("Linear", "ReLU", 12))
    base = novelty(me, [me] + pop, None, 3)
    assert novelty(me, [me] + [pop[i] for i in order], None, 3) == base


def test_duplicate_of_nearest_never_increases_novelty():
    pop = [ind(1.0, ("Linear", "Tanh", 8)), ind(1.0, ("Conv2d", "ReLU", 8))]
    me = ind(1.0, ("Linear", "ReLU", 8))
    before = novelty(me, [me] + pop, None, 2)
    after = novelty(me, [me] + pop + [ind(1.0, ("Linear", "Tanh", 8))], None, 2)
    assert after <= before


def test_competition_examples():
    me = ind(1.0, ("Linear", "ReLU", 8))
    near = [ind(0.5, ("Linear", "ReLU", 16)), ind(2.0, ("Linear", "Tanh", 8)),
            ind(3.0, ("Linear", "ReLU", 8), ("Linear", "ReLU", 8))]
    far = [ind(9.0, ("Conv2d", "ELU", 8))]
    assert competition(me, [me] + near + far, None, 3, "local") == 2
    assert competition(me, [me] + near + far, None, 3, "global") == 3

    best = ind(0.1)
    nine = [ind(1.0 + i) for i in range(9)]
    assert competition(best, [best] + nine, None, None, "global") == 9
    tied = [ind(0.1) for _ in range(4)]
    assert competition(best, [best] + tied, None, 3, "local") == 0


def test_competition_counts_archive_snapshots():
    me = ind(1.0)
    archive = Archive(entries=[ArchiveEntry(me.genome, 5.0)])
    assert competition(me, [me], archive, 3, "local") == 1


def test_archive_update_probabilities():
    rng = np.random.default_rng(0)
    pop = [ind() for _ in range(10)]
    arch = Archive()
    archive_update(arch, pop, 0.0, rng)
    assert len(arch) == 0
    archive_update(arch, pop, 1.0, rng)
    assert len(arch) == 10
    arch = Archive()
    for _ in range(1000):
        archive_update(arch, pop, 0.1, rng)
    assert abs(len(arch) - 1000) <= 60
    with pytest.raises(UsageError):
        archive_update(arch, pop, 1.5, rng)


def test_archive_entries_are_snapshots():
    member = ind(2.0)
    arch = archive_update(Archive(), [member], 1.0, np.random.default_rng(0))
    member.fitness = 99.0
    assert arch.entries[0].fitness == 2.0


def test_speciate_recovers_separated_clusters():
    a = [ind(1.0, ("Linear", "ReLU", w)) for w in (8, 9, 10)]
    b = [ind(1.0, ("Conv2d", "Tanh", 8), ("Conv2d", "Tanh", w)) for w in (8, 9, 10)]
    labels = speciate(a + b, 2, np.random.default_rng(0))
    assert len(set(labels[:3])) == 1 and len(set(labels[3:])) == 1
    assert labels[0] != labels[3]


def test_speciate_identical_genomes_is_deterministic():
    pop = [ind() for _ in range(5)]
    first = speciate(pop, 3, np.random.default_rng(4))
    assert first == speciate(pop, 3, np.random.default_rng(4))
    with pytest.raises(UsageError):
        speciate(pop, 6, np.random.default_rng(0))


def test_shared_fitness():
    assert shared_fitness([2.0, 3.0, 4.0], [0, 1, 1]) == [2.0, 6.0, 8.0]
    # equal raw fitness, species of sizes 8 and 2: the small species ranks ahead
    shared = shared_fitness([1.0] * 10, [0] * 8 + [1] * 2)
    assert max(shared[8:]) < min(shared[:8])


@given(st.integers(0, 10_000))
def test_constrained_dominance_never_mutual(seed):
    rng = np.random.default_rng(seed)
    a, b = V(*rng.integers(0, 3, 2)), V(*rng.integers(0, 3, 2))
    fa, fb = rng.choice([0.0, 0.5, 1.0, 1.5, 3.0, WORST_FITNESS, float("inf")], 2)
    assert not (constrained_dominates(a, b, fa, fb) and constrained_dominates(b, a, fb, fa))


def test_sort_assigns_every_index_once():
    rng = np.random.default_rng(0)
    for _ in range(50):
        n = int(rng.integers(1, 12))
        objs = [V(*rng.integers(0, 3, 2)) for _ in range(n)]
        fits = list(rng.uniform(0.1, 3.0, n))
        flat = list(itertools.chain(*constrained_nondominated_sort(objs, fits)))
        assert sorted(flat) == list(range(n))
