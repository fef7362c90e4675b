"""scikit-learn style front end for the coevolutionary GAN search."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from . import engine
from .config import RunConfig
from .genome import IOShape
from .metrics import FeatureExtractor, dataset_stats, embed, estimate_stats, frechet_distance


class CoevolutionaryGAN(BaseEstimator):
    """Evolve generator and discriminator architectures on a sample set.

    ``fit`` runs the generation loop on ``X`` (shape ``(n, ...)``, values in
    ``[-1, 1]``); afterwards :meth:`sample` draws from the best generator and
    :meth:`score` returns the negative surrogate FID of that generator
    against ``X``, so higher is better as scikit-learn expects.

    Parameters mirror :class:`~qdgan.config.RunConfig`; defaults are the
    paper-scale settings.

    Attributes
    ----------
    state_ : EngineState
        Final populations, offspring and archives.
    history_ : list of GenerationReport
        One report per generation.
    best_generator_, best_discriminator_ : Individual
        Lowest-fitness members of the final populations.
    extractor_ : FeatureExtractor
        Embedding fitted on ``X``.
    reference_stats_ : GaussianStats
        Gaussian summary of the embedded ``X``.
    """

    def __init__(self, mode="nslc", generations=50, generator_population=10,
                 discriminator_population=10, add_rate=0.3, remove_rate=0.1, change_rate=0.1,
                 width_min=32, width_max=256, tournament_k=2, fid_samples=1024, genome_limit=4,
                 species=3, neighborhood=3, archive_probability=0.1, batch_size=64, batches=50,
                 learning_rate=0.001, adam_beta1=0.5, adam_beta2=0.999, latent_dim=100,
                 extractor="flatten", extractor_dim=64, extractor_seed=0, n_jobs=1,
                 random_state=0):
        self.mode = mode
        self.generations = generations
        self.generator_population = generator_population
        self.discriminator_population = discriminator_population
        self.add_rate = add_rate
        self.remove_rate = remove_rate
        self.change_rate = change_rate
        self.width_min = width_min
        self.width_max = width_max
        self.tournament_k = tournament_k
        self.fid_samples = fid_samples
        self.genome_limit = genome_limit
        self.species = species
        self.neighborhood = neighborhood
        self.archive_probability = archive_probability
        self.batch_size = batch_size
        self.batches = batches
        self.learning_rate = learning_rate
        self.adam_beta1 = adam_beta1
        self.adam_beta2 = adam_beta2
        self.latent_dim = latent_dim
        self.extractor = extractor
        self.extractor_dim = extractor_dim
        self.extractor_seed = extractor_seed
        self.n_jobs = n_jobs
        self.random_state = random_state

    @classmethod
    def from_config(cls, config):
        params = cls().get_params()
        kwargs = {k: getattr(config, k) for k in params if hasattr(config, k)}
        return cls(random_state=config.seed, **kwargs)

    def to_config(self, **extra):
        params = self.get_params()
        seed = params.pop("random_state")
        return RunConfig(seed=int(seed), **params, **extra)

    def fit(self, X, y=None, *, callback=None, state=None):
        """Run the evolution on ``X``.

        ``callback(report, state)`` is called after every generation.
        ``state`` resumes from an :class:`~qdgan.engine.EngineState` (e.g. a
        checkpoint); generations then continue up to ``generations``.
        """
        X = self._validate(X)
        if not isinstance(self.random_state, (int, np.integer)):
            raise ValueError("random_state must be an int so runs are reproducible")
        config = self.to_config()
        io_shape = IOShape(X.shape[1:], config.latent_dim)
        self.extractor_ = FeatureExtractor(self.extractor, self.extractor_dim,
                                           self.extractor_seed).fit(X)
        self.reference_stats_ = dataset_stats(X, self.extractor_)
        if state is None:
            state = engine.initialize(config, io_shape, np.random.default_rng(config.seed))
        self.history_ = []
        while state.generation < config.generations:
            state, report = engine.run_generation(state, config, X, self.reference_stats_,
                                                  self.extractor_, io_shape)
            self.history_.append(report)
            if callback is not None:
                callback(report, state)
        self.state_ = state
        self.io_shape_ = io_shape
        self.n_features_in_ = int(np.prod(X.shape[1:]))
        self.best_generator_ = engine.best_individual(state.generators)
        self.best_discriminator_ = engine.best_individual(state.discriminators)
        return self

    def sample(self, n_samples=1, random_state=None):
        """Draw samples from the best generator."""
        check_is_fitted(self, "best_generator_")
        rng = (random_state if isinstance(random_state, np.random.Generator)
               else np.random.default_rng(random_state))
        return self.best_generator_.sample(n_samples, rng)

    def predict_proba(self, X):
        """Probability that each sample is real, according to the best discriminator."""
        check_is_fitted(self, "best_discriminator_")
        return self.best_discriminator_.score(self._validate(X))

    def score(self, X, y=None):
        """Negative surrogate FID of the best generator against ``X``."""
        check_is_fitted(self, "best_generator_")
        X = self._validate(X)
        samples = self.sample(max(self.fid_samples, 2), random_state=self.random_state)
        fake = estimate_stats(embed(samples, self.extractor_))
        real = estimate_stats(embed(X, self.extractor_))
        return -frechet_distance(fake, real)

    def _validate(self, X):
        X = check_array(X, allow_nd=True, ensure_min_samples=2, dtype=np.float64)
        if X.ndim == 3:
            X = X[:, None]
        return X
