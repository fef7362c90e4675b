import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from qdgan import CoevolutionaryGAN, RunConfig
from qdgan.data import synthetic_shapes

SMALL = dict(generations=2, generator_population=2, discriminator_population=2, width_min=4,
             width_max=6, batches=2, batch_size=8, fid_samples=32, latent_dim=4, species=2,
             neighborhood=2)


@pytest.fixture(scope="module")
def X():
    return synthetic_shapes(96, np.random.default_rng(0))


@pytest.fixture(scope="module")
def fitted(X):
    return CoevolutionaryGAN(mode="nsgc", **SMALL).fit(X)


def test_params_round_trip_and_clone():
    model = CoevolutionaryGAN(mode="coegan", generations=3)
    assert model.get_params()["mode"] == "coegan"
    twin = clone(model)
    assert twin.get_params() == model.get_params()
    cfg = model.to_config()
    assert isinstance(cfg, RunConfig) and cfg.generations == 3
    assert CoevolutionaryGAN.from_config(cfg.replace(seed=9)).random_state == 9


def test_fit_sets_attributes(fitted):
    assert len(fitted.history_) == 2
    assert fitted.n_features_in_ == 64
    assert fitted.state_.generation == 2
    assert fitted.best_generator_.fitness == fitted.history_[-1].best_fid


def test_sample_predict_score(fitted, X):
    s = fitted.sample(5, random_state=0)
    assert s.shape == (5, 1, 8, 8) and np.all(np.abs(s) <= 1)
    np.testing.assert_array_equal(s, fitted.sample(5, random_state=0))
    proba = fitted.predict_proba(X[:7])
    assert proba.shape == (7,) and np.all((proba > 0) & (proba < 1))
    assert fitted.score(X) <= 0


def test_accepts_channel_less_images(X):
    model = CoevolutionaryGAN(**{**SMALL, "generations": 1}).fit(X[:, 0])
    assert model.io_shape_.sample_shape == (1, 8, 8)


def test_callback_sees_each_generation(X):
    seen = []
    CoevolutionaryGAN(**SMALL).fit(X, callback=lambda rep, state: seen.append(rep.generation))
    assert seen == [1, 2]


def test_unfitted_and_bad_input():
    with pytest.raises(NotFittedError):
        CoevolutionaryGAN().sample(2)
    with pytest.raises(ValueError):
        CoevolutionaryGAN(**SMALL).fit(np.full((4, 2), np.nan))
    with pytest.raises(ValueError):
        CoevolutionaryGAN(**SMALL, random_state=np.random.default_rng(0)).fit(np.zeros((4, 2)))


def test_same_random_state_same_history(X):
    a = CoevolutionaryGAN(**SMALL, random_state=3).fit(X)
    b = CoevolutionaryGAN(**SMALL, random_state=3).fit(X)
    assert [r.as_dict() for r in a.history_] == [r.as_dict() for r in b.history_]
