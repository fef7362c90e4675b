import math
from types import SimpleNamespace

import numpy as np
import pytest

from qdgan.exceptions import UsageError
from qdgan.genome import DISCRIMINATOR, GENERATOR, Gene, Genome, Individual, IOShape, build_phenotype
from qdgan.metrics import WORST_FITNESS, FeatureExtractor, dataset_stats
from qdgan.training import bout_schedule, d_loss, evaluate_all_vs_all, g_loss, train_bout

IO = IOShape((1, 4, 4), 4)


def make(role, uid, seed, width=6):
    kind = "Linear"
    g = Genome(role, [Gene(uid * 10, kind, "LeakyReLU", width)])
    return Individual(uid, g, build_phenotype(g, IO, np.random.default_rng(seed)), IO)


def data(n=40, seed=0):
    return np.sign(np.random.default_rng(seed).normal(size=(n, 1, 4, 4)))


def config(**kw):
    base = dict(batches=2, batch_size=4, latent_dim=4, learning_rate=0.001, fid_samples=16)
    base.update(kw)
    return SimpleNamespace(**base)


def test_d_loss_examples():
    assert d_loss(np.full(5, 1 - 1e-7), np.full(5, 1e-7)) == pytest.approx(2e-7, abs=1e-12)
    assert d_loss(np.full(4, 0.5), np.full(4, 0.5)) == pytest.approx(1.3862944, abs=1e-7)
    a, b = np.full(3, 0.3), np.full(3, 0.3)
    assert d_loss(a, b) == d_loss(b, a)


def test_g_loss_examples():
    assert g_loss(np.full(3, 1 - 1e-7)) == pytest.approx(1e-7, abs=1e-12)
    assert g_loss(np.full(3, 0.5)) == pytest.approx(0.6931472, abs=1e-7)
    assert g_loss(np.full(3, 1e-7)) == pytest.approx(16.118, abs=1e-3)


def test_losses_reject_empty_arrays():
    with pytest.raises(UsageError):
        g_loss([])
    with pytest.raises(UsageError):
        d_loss([], [0.5])


def test_losses_stay_finite_at_extremes():
    assert d_loss([0.0], [1.0]) <= 32.24
    assert g_loss([0.0]) <= 16.12
    assert math.isfinite(d_loss([0.0], [1.0]))


def test_zero_batches_changes_nothing():
    g, d = make(GENERATOR, 1, 0), make(DISCRIMINATOR, 2, 1)
    before = g.network.layers[0].params.weights.copy()
    res = train_bout(g, d, data(), 0, 8, 4, np.random.default_rng(0))
    assert res.samples == 0 and g.trained_samples == 0 and d.trained_samples == 0
    np.testing.assert_array_equal(before, g.network.layers[0].params.weights)


def test_bout_accounting_at_table_scale():
    g, d = make(GENERATOR, 1, 0), make(DISCRIMINATOR, 2, 1)
    res = train_bout(g, d, data(200), 50, 64, 4, np.random.default_rng(0))
    assert res.samples == 3200 and g.trained_samples == 3200 and d.trained_samples == 3200
    assert 0 <= res.d_loss <= 32.24 and 0 <= res.g_loss <= 16.12


def test_bout_is_deterministic():
    out = []
    for _ in range(2):
        g, d = make(GENERATOR, 1, 0), make(DISCRIMINATOR, 2, 1)
        train_bout(g, d, data(), 5, 8, 4, np.random.default_rng(7))
        out.append([l.params.weights.copy() for l in g.network.layers + d.network.layers])
    for a, b in zip(*out):
        np.testing.assert_array_equal(a, b)


def test_divergence_flags_individual_without_aborting():
    g, d = make(GENERATOR, 1, 0), make(DISCRIMINATOR, 2, 1)
    d.network.layers[0].params.weights[:] = np.nan
    res = train_bout(g, d, data(), 3, 4, 4, np.random.default_rng(0))
    assert d.failed and not g.failed
    assert res.samples == 0 and math.isnan(res.d_loss)


def test_schedule_covers_pairs_with_disjoint_rounds():
    rounds = bout_schedule(3, 4)
    pairs = [p for r in rounds for p in r]
    assert sorted(pairs) == [(i, j) for i in range(3) for j in range(4)]
    for r in rounds:
        assert len({i for i, _ in r}) == len(r) == len({j for _, j in r})
    # per-individual opponent order follows row-major order
    for i in range(3):
        assert [j for r in rounds for gi, j in r if gi == i] == [0, 1, 2, 3]


def _evaluate(n_g, n_d, n_jobs=1, **kw):
    gens = [make(GENERATOR, i, i) for i in range(n_g)]
    discs = [make(DISCRIMINATOR, 100 + i, 50 + i) for i in range(n_d)]
    x = data()
    ext = FeatureExtractor().fit(x)
    ev = evaluate_all_vs_all(gens, discs, x, config(**kw), (0, 1, 0), dataset_stats(x, ext), ext,
                             n_jobs)
    return gens, discs, ev


def test_single_pair_runs_one_bout():
    _, _, ev = _evaluate(1, 1)
    assert len(ev.results) == 1


def test_all_vs_all_accounting_and_fitness():
    gens, discs, ev = _evaluate(3, 2)
    assert len(ev.results) == 6
    for g in gens:
        assert g.trained_samples == 2 * 2 * 4
        assert 0 < g.fitness < WORST_FITNESS
    for d in discs:
        assert d.trained_samples == 3 * 2 * 4
        losses = [r.d_loss for r in ev.results if r.discriminator == d.uid]
        assert d.fitness == pytest.approx(np.mean(losses))


def test_mean_aggregation_of_discriminator_losses():
    assert np.mean([1.0, 3.0]) == 2.0  # the aggregation rule used for d fitness


def test_thread_count_does_not_change_results():
    serial = _evaluate(3, 3, n_jobs=1)
    threaded = _evaluate(3, 3, n_jobs=3)
    for a, b in zip(serial[0] + serial[1], threaded[0] + threaded[1]):
        assert a.fitness == b.fitness
        for la, lb in zip(a.network.layers, b.network.layers):
            np.testing.assert_array_equal(la.params.weights, lb.params.weights)


def test_failed_generator_gets_worst_fitness():
    gens = [make(GENERATOR, 0, 0)]
    gens[0].network.layers[-1].params.weights[:] = np.inf
    discs = [make(DISCRIMINATOR, 100, 1)]
    x = data()
    ext = FeatureExtractor().fit(x)
    evaluate_all_vs_all(gens, discs, x, config(), (0, 1, 0), dataset_stats(x, ext), ext)
    assert gens[0].failed and gens[0].fitness == WORST_FITNESS
    assert discs[0].fitness == WORST_FITNESS  # no finite losses recorded


def test_empty_population_is_usage_error():
    with pytest.raises(UsageError):
        evaluate_all_vs_all([], [make(DISCRIMINATOR, 1, 0)], data(), config(), (0,), None, None)
