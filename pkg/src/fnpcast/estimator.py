"""Estimator-style wrapper around training and forecasting."""

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.exceptions import NotFittedError

from .data import load_model, save_model
from .inference import autoregressive_forecast, forecast, interval
from .model import Hyperparams
from .training import train
from .validation import check_seasons, check_sequences


class FNPForecaster(RegressorMixin, BaseEstimator):
    """Probabilistic k-week-ahead forecaster over seasonal incidence curves.

    ``fit`` takes a list of full seasons (1-D arrays or SeasonSeries); every
    prefix of every season becomes a training query and the full seasons
    become the reference set. ``predict`` takes a list of prefixes.

    Parameters mirror :class:`fnpcast.model.Hyperparams`; ``random_state``
    seeds both training and forecasting.
    """

    def __init__(self, horizon=1, min_prefix=1, learning_rate=1e-4, max_epochs=3000,
                 patience=300, validation_fraction=0.05, batch_size=0, gamma_init=1.0,
                 learn_gamma=True, temperature=0.3, n_samples=2000, draws_per_component=10,
                 standardize=False, no_local=False, no_global=False,
                 deterministic_encoder=False, hidden_size=50, random_state=0):
        self.horizon = horizon
        self.min_prefix = min_prefix
        self.learning_rate = learning_rate
        self.max_epochs = max_epochs
        self.patience = patience
        self.validation_fraction = validation_fraction
        self.batch_size = batch_size
        self.gamma_init = gamma_init
        self.learn_gamma = learn_gamma
        self.temperature = temperature
        self.n_samples = n_samples
        self.draws_per_component = draws_per_component
        self.standardize = standardize
        self.no_local = no_local
        self.no_global = no_global
        self.deterministic_encoder = deterministic_encoder
        self.hidden_size = hidden_size
        self.random_state = random_state

    def _hyperparams(self):
        params = self.get_params()
        seed = params.pop("random_state")
        return Hyperparams(seed=0 if seed is None else int(seed), **params)

    def fit(self, X, y=None, callback=None):
        seasons = check_seasons(X, self.horizon, self.min_prefix)
        self.model_, self.training_log_ = train(seasons, self._hyperparams(), callback=callback)
        self.n_references_ = len(self.model_.references)
        return self

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise NotFittedError(f"{type(self).__name__} is not fitted yet; call fit first")

    def _rng(self):
        return np.random.default_rng(self.random_state)

    def predict_distribution(self, X):
        """One :class:`PredictiveDistribution` per prefix in ``X``."""
        self._check_fitted()
        prefixes = check_sequences(X)
        rng = self._rng()
        return [forecast(self.model_, p, rng=rng) for p in prefixes]

    def predict(self, X):
        """Point forecasts (mixture means)."""
        return np.array([d.mean() for d in self.predict_distribution(X)])

    def predict_interval(self, X, confidence=0.95):
        """Equal-tailed intervals, shape ``(n, 2)``."""
        return np.array([interval(d, confidence)[:2] for d in self.predict_distribution(X)])

    def predict_autoregressive(self, X, k, n_candidates=1000):
        """Roll a one-week model forward ``k`` weeks for each prefix."""
        self._check_fitted()
        prefixes = check_sequences(X)
        rng = self._rng()
        return [autoregressive_forecast(self.model_, p, k, n_candidates, rng) for p in prefixes]

    def save(self, path, metadata=None):
        self._check_fitted()
        save_model(path, self.model_, metadata)

    @classmethod
    def load(cls, path):
        model, _ = load_model(path)
        hp = model.hyperparams.to_dict()
        hp["random_state"] = hp.pop("seed")
        est = cls(**hp)
        est.model_ = model
        est.training_log_ = []
        est.n_references_ = len(model.references)
        return est
