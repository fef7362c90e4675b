"""Fréchet distance between Gaussian summaries of embedded sample sets.

The Inception embedding used for the usual FID is replaced by a cheap fixed
feature map (raw pixels or a seeded Gaussian random projection), so scores
are only comparable within one run configuration.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.random_projection import GaussianRandomProjection
from sklearn.utils.validation import check_is_fitted

from .exceptions import MetricError, UsageError

WORST_FITNESS = sys.float_info.max
COV_REGULARIZER = 1e-6
MAX_FEATURES = 256


@dataclass(frozen=True)
class GaussianStats:
    mean: np.ndarray
    cov: np.ndarray

    @property
    def dim(self):
        return self.mean.shape[0]


class FeatureExtractor(TransformerMixin, BaseEstimator):
    """Fixed embedding of samples into a feature space.

    Parameters
    ----------
    kind : {"flatten", "random-projection"}, default="flatten"
        ``flatten`` uses raw pixels. ``random-projection`` multiplies the
        flattened pixels by a Gaussian matrix with entries of variance
        ``1/dim``.
    dim : int, default=64
        Output dimension for ``random-projection``.
    seed : int, default=0
        Seed of the projection matrix.
    """

    def __init__(self, kind="flatten", dim=64, seed=0):
        self.kind = kind
        self.dim = dim
        self.seed = seed

    def fit(self, X, y=None):
        X = _flatten(X)
        self.n_features_in_ = X.shape[1]
        if self.kind == "flatten":
            self.projection_ = None
        elif self.kind == "random-projection":
            if not 1 <= self.dim <= MAX_FEATURES:
                raise UsageError(f"projection dim must be in [1, {MAX_FEATURES}], got {self.dim}")
            rp = GaussianRandomProjection(n_components=self.dim, random_state=self.seed)
            rp.fit(np.zeros((1, X.shape[1])))
            self.projection_ = rp.components_.T
        else:
            raise UsageError(f"unknown feature extractor {self.kind!r}")
        return self

    def transform(self, X):
        check_is_fitted(self, "n_features_in_")
        X = _flatten(X)
        if X.shape[1] != self.n_features_in_:
            raise UsageError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return X if self.projection_ is None else X @ self.projection_


def _flatten(X):
    X = np.asarray(X, dtype=np.float64)
    return X.reshape(X.shape[0], -1)


def embed(samples, extractor):
    """Embed a batch of samples; at least two are needed for a covariance."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.shape[0] < 2:
        raise UsageError(f"need at least 2 samples to embed, got {samples.shape[0]}")
    if not hasattr(extractor, "n_features_in_"):
        extractor.fit(samples)
    return extractor.transform(samples)


def estimate_stats(features):
    """Sample mean and unbiased covariance, regularised by ``1e-6 * I``."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] < 2:
        raise UsageError("need an (n, k) feature matrix with n >= 2")
    mean = features.mean(axis=0)
    cov = np.atleast_2d(np.cov(features, rowvar=False, ddof=1))
    cov = cov + COV_REGULARIZER * np.eye(features.shape[1])
    return GaussianStats(mean, cov)


def matrix_sqrt(m):
    """Symmetric PSD square root via eigendecomposition.

    The input is symmetrised first; negative eigenvalues (round-off) are
    clamped to zero.
    """
    m = np.asarray(m, dtype=np.float64)
    sym = 0.5 * (m + m.T)
    try:
        eigvals, eigvecs = np.linalg.eigh(sym)
    except np.linalg.LinAlgError as exc:
        raise MetricError(f"eigendecomposition failed: {exc}") from exc
    eigvals = np.clip(eigvals, 0.0, None)
    root = (eigvecs * np.sqrt(eigvals)) @ eigvecs.T
    return 0.5 * (root + root.T)


def frechet_distance(a, b):
    """Squared Fréchet distance between two Gaussians.

    ``(a.cov @ b.cov)^(1/2)`` is evaluated in the symmetric form
    ``sqrt(sqrt(a.cov) @ b.cov @ sqrt(a.cov))``, which has the same trace.
    """
    if a.dim != b.dim:
        raise UsageError(f"dimension mismatch: {a.dim} vs {b.dim}")
    if np.array_equal(a.mean, b.mean) and np.array_equal(a.cov, b.cov):
        return 0.0
    diff = a.mean - b.mean
    root_a = matrix_sqrt(a.cov)
    cross = matrix_sqrt(root_a @ b.cov @ root_a)
    value = float(diff @ diff + np.trace(a.cov) + np.trace(b.cov) - 2.0 * np.trace(cross))
    if not np.isfinite(value):
        raise MetricError("non-finite Fréchet distance")
    return max(value, 0.0)


def dataset_stats(data, extractor):
    return estimate_stats(embed(data, extractor))


def fid_score(generator, reference, n_samples, extractor, rng):
    """Fréchet distance of ``n_samples`` generated samples to ``reference`` stats.

    ``generator`` is anything with a ``sample(n, rng)`` method. A generator
    producing non-finite output, or a failed metric computation, scores
    :data:`WORST_FITNESS`.
    """
    with np.errstate(all="ignore"):
        samples = generator.sample(n_samples, rng)
    if not np.all(np.isfinite(samples)):
        return WORST_FITNESS
    try:
        return frechet_distance(estimate_stats(embed(samples, extractor)), reference)
    except MetricError:
        return WORST_FITNESS
