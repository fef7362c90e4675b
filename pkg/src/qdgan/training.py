"""GAN losses, single generator/discriminator training bouts and all-vs-all evaluation."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .exceptions import TrainingDivergenceError, UsageError
from .metrics import WORST_FITNESS, fid_score

SCORE_EPS = 1e-7
FID_STREAM = 7919


def _clamped(scores):
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    if scores.size == 0:
        raise UsageError("loss needs a non-empty score array")
    return np.clip(scores, SCORE_EPS, 1.0 - SCORE_EPS)


def d_loss(real_scores, fake_scores):
    """Discriminator loss ``-mean(log D(x)) - mean(log(1 - D(G(z))))``."""
    real = _clamped(real_scores)
    fake = _clamped(fake_scores)
    return float(-np.mean(np.log(real)) - np.mean(np.log1p(-fake)))


def g_loss(fake_scores):
    """Non-saturating generator loss ``-mean(log D(G(z)))``."""
    return float(-np.mean(np.log(_clamped(fake_scores))))


@dataclass
class PairingResult:
    generator: int
    discriminator: int
    d_loss: float
    g_loss: float
    samples: int


def _batch_indices(n_data, batches, batch_size, rng):
    order = rng.permutation(n_data)
    idx = np.arange(batches * batch_size) % n_data
    return order[idx].reshape(batches, batch_size)


def train_bout(g, d, data, batches, batch_size, latent_dim, rng, learning_rate=0.001):
    """Alternate one discriminator and one generator Adam step per batch.

    Real batches are consecutive slices of a permutation of ``data`` drawn
    from ``rng``. Both individuals' ``trained_samples`` grow by the number of
    samples actually consumed. A divergent step aborts the bout and flags the
    offending individual as failed.
    """
    d_losses, g_losses = [], []
    consumed = 0
    if batches > 0 and not (g.failed or d.failed):
        index = _batch_indices(len(data), batches, batch_size, rng)
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            for b in range(batches):
                try:
                    dl, gl = _train_step(g, d, data[index[b]], batch_size, latent_dim, rng,
                                         learning_rate)
                except _Diverged as exc:
                    exc.culprit.failed = True
                    break
                d_losses.append(dl)
                g_losses.append(gl)
                consumed += batch_size
    g.network.clear_cache()
    d.network.clear_cache()
    g.trained_samples += consumed
    d.trained_samples += consumed
    return PairingResult(
        generator=g.uid,
        discriminator=d.uid,
        d_loss=float(np.mean(d_losses)) if d_losses else float("nan"),
        g_loss=float(np.mean(g_losses)) if g_losses else float("nan"),
        samples=consumed,
    )


class _Diverged(Exception):
    def __init__(self, culprit):
        super().__init__(culprit.uid)
        self.culprit = culprit


def _train_step(g, d, real, batch_size, latent_dim, rng, learning_rate):
    n = real.shape[0]
    # discriminator step, generator frozen
    fake = g.network.forward(rng.standard_normal((batch_size, latent_dim)))
    if not np.all(np.isfinite(fake)):
        raise _Diverged(g)
    fake = fake.reshape((batch_size,) + real.shape[1:])
    scores = d.network.forward(np.concatenate([real, fake])).reshape(-1)
    if not np.all(np.isfinite(scores)):
        raise _Diverged(d)
    real_s, fake_s = scores[:n], scores[n:]
    loss_d = d_loss(real_s, fake_s)
    grad = np.concatenate([-(1.0 - real_s) / n, fake_s / batch_size]).reshape(-1, 1)
    d.network.backward(grad, from_logits=True)
    try:
        d.network.adam_step(learning_rate)
    except TrainingDivergenceError:
        raise _Diverged(d) from None

    # generator step, discriminator frozen
    fake = g.network.forward(rng.standard_normal((batch_size, latent_dim)))
    if not np.all(np.isfinite(fake)):
        raise _Diverged(g)
    fake_s = d.network.forward(fake.reshape((batch_size,) + real.shape[1:])).reshape(-1)
    if not np.all(np.isfinite(fake_s)):
        raise _Diverged(d)
    loss_g = g_loss(fake_s)
    grad_in = d.network.backward((-(1.0 - fake_s) / batch_size).reshape(-1, 1), from_logits=True)
    g.network.backward(grad_in.reshape(fake.shape))
    try:
        g.network.adam_step(learning_rate)
    except TrainingDivergenceError:
        raise _Diverged(g) from None
    if not (np.isfinite(loss_d) and np.isfinite(loss_g)):
        raise _Diverged(g if not np.isfinite(loss_g) else d)
    return loss_d, loss_g


def bout_schedule(n_generators, n_discriminators):
    """Partition all (g, d) index pairs into rounds of disjoint pairs.

    Each pair is placed one round after the latest round either member
    already plays in, so pairs within a round share no individual and every
    individual meets its opponents in row-major order whatever the number of
    workers.
    """
    last_g = [-1] * n_generators
    last_d = [-1] * n_discriminators
    rounds = []
    for i in range(n_generators):
        for j in range(n_discriminators):
            r = max(last_g[i], last_d[j]) + 1
            if r == len(rounds):
                rounds.append([])
            rounds[r].append((i, j))
            last_g[i] = last_d[j] = r
    return rounds


@dataclass
class Evaluation:
    results: list
    d_fitness: dict
    g_fitness: dict

    def matrix(self, generators, discriminators):
        lookup = {(r.generator, r.discriminator): r for r in self.results}
        return [[lookup[g.uid, d.uid] for d in discriminators] for g in generators]


def evaluate_all_vs_all(generators, discriminators, data, config, seed_key, reference_stats,
                        extractor, n_jobs=1):
    """Train every generator against every discriminator and assign fitness.

    Discriminator fitness is the mean discriminator loss over its bouts.
    Generator fitness is the Fréchet distance of its samples to
    ``reference_stats`` after all its bouts. Each bout and each FID draw
    uses its own RNG seeded from ``seed_key`` and the individuals' uids.
    Failed individuals get :data:`~qdgan.metrics.WORST_FITNESS`.

    ``config`` needs ``batches``, ``batch_size``, ``latent_dim``,
    ``learning_rate`` and ``fid_samples``.
    """
    if not generators or not discriminators:
        raise UsageError("both populations must be non-empty")
    seed_key = [int(s) for s in seed_key]

    def run(pair):
        g, d = generators[pair[0]], discriminators[pair[1]]
        rng = np.random.default_rng(seed_key + [g.uid, d.uid])
        return train_bout(g, d, data, config.batches, config.batch_size, config.latent_dim, rng,
                          config.learning_rate)

    results = []
    schedule = bout_schedule(len(generators), len(discriminators))
    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            for rnd in schedule:
                results.extend(pool.map(run, rnd))
    else:
        for rnd in schedule:
            results.extend(run(pair) for pair in rnd)
    results.sort(key=lambda r: (r.generator, r.discriminator))

    d_fitness = {}
    for d in discriminators:
        losses = [r.d_loss for r in results if r.discriminator == d.uid and np.isfinite(r.d_loss)]
        d_fitness[d.uid] = WORST_FITNESS if d.failed or not losses else float(np.mean(losses))
        d.fitness = d_fitness[d.uid]

    def score(g):
        if g.failed:
            return WORST_FITNESS
        rng = np.random.default_rng(seed_key + [g.uid, FID_STREAM])
        return fid_score(g, reference_stats, config.fid_samples, extractor, rng)

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            scores = list(pool.map(score, generators))
    else:
        scores = [score(g) for g in generators]
    g_fitness = {}
    for g, s in zip(generators, scores):
        g.fitness = g_fitness[g.uid] = s
    return Evaluation(results, d_fitness, g_fitness)
