"""Scikit-learn style estimator facade over the forecasting pipeline."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .model import ModelConfig, PipelineGraphs, forward
from .training import (
    STD_FLOOR,
    SeriesDataset,
    TrainConfig,
    metrics,
    train,
)
from .validation import check_graph, check_series


class SeriesStandardizer(TransformerMixin, BaseEstimator):
    """Per-feature zero-mean/unit-variance scaling for [N, D, T] series.

    Population statistics; constant features get their deviation floored so
    the inverse transform stays exact.
    """

    def fit(self, X, y=None):
        X = check_series(X)
        self.mean_ = X.mean(axis=(0, 2))
        self.std_ = np.maximum(X.std(axis=(0, 2)), STD_FLOOR)
        return self

    def transform(self, X):
        self._check_fitted()
        X = check_series(X, n_features=len(self.mean_))
        return (X - self.mean_[None, :, None]) / self.std_[None, :, None]

    def inverse_transform(self, X):
        self._check_fitted()
        X = check_series(X, n_features=len(self.mean_))
        return X * self.std_[None, :, None] + self.mean_[None, :, None]

    def _check_fitted(self):
        if not hasattr(self, "mean_"):
            raise NotFittedError("SeriesStandardizer is not fitted yet")


class TraverseForecaster(BaseEstimator):
    """Multi-step forecaster for sensor series on a fixed graph.

    ``fit(series, graph)`` standardizes the series, splits it 6:2:2, trains
    with mini-batch Adam on the MAE loss, and keeps the weights with the best
    validation MAE.  ``predict(series)`` returns raw-unit forecasts for every
    input window of a (new) series on the same graph.
    """

    def __init__(self, n_layers=3, hidden=64, window=12, input_len=12, horizon=12,
                 dropout=0.1, ablation="default", epochs=50, lr=1e-3,
                 weight_decay=1e-5, batch_size=32, split=(0.6, 0.2, 0.2),
                 target_feature=0, seed=0, symmetrize=True, precision=64, slope=0.2):
        self.n_layers = n_layers
        self.hidden = hidden
        self.window = window
        self.input_len = input_len
        self.horizon = horizon
        self.dropout = dropout
        self.ablation = ablation
        self.epochs = epochs
        self.lr = lr
        self.weight_decay = weight_decay
        self.batch_size = batch_size
        self.split = split
        self.target_feature = target_feature
        self.seed = seed
        self.symmetrize = symmetrize
        self.precision = precision
        self.slope = slope

    # -- sklearn-ish API ----------------------------------------------------

    def fit(self, X, graph, progress=None):
        X = check_series(X)
        n_nodes = X.shape[0]
        model_cfg = ModelConfig(
            n_nodes=n_nodes, input_dim=X.shape[1], n_layers=self.n_layers,
            hidden=self.hidden, window=self.window, input_len=self.input_len,
            horizon=self.horizon, dropout=self.dropout, ablation=self.ablation,
            seed=self.seed, slope=self.slope, precision=self.precision)
        train_cfg = TrainConfig(
            epochs=self.epochs, lr=self.lr, weight_decay=self.weight_decay,
            batch_size=self.batch_size, split=tuple(self.split), seed=self.seed,
            target_feature=self.target_feature)
        self.graph_ = check_graph(graph, n_nodes, symmetrize=self.symmetrize)
        dataset = SeriesDataset.build(X, self.input_len, self.horizon,
                                      tuple(self.split), self.target_feature)
        result = train(model_cfg, train_cfg, dataset, self.graph_, progress=progress)
        self.params_ = result.params
        self.result_ = result
        self.history_ = result.history
        self.scaler_mean_ = dataset.mean
        self.scaler_std_ = dataset.std
        self.graphs_ = PipelineGraphs.build(self.graph_, model_cfg)
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X, batch_size=256):
        """Raw-unit forecasts [n_windows, N, horizon] for every input window of X."""
        self._check_fitted()
        X = check_series(X, n_features=self.n_features_in_)
        scaled = (X - self.scaler_mean_[None, :, None]) / self.scaler_std_[None, :, None]
        p = self.input_len
        starts = np.arange(X.shape[2] - p + 1)
        preds = []
        for i in range(0, len(starts), batch_size):
            xs = np.stack([scaled[:, :, s:s + p] for s in starts[i:i + batch_size]])
            pred, _ = forward(self.params_, xs, self.graphs_, mode="eval")
            preds.append(pred.values)
        out = np.concatenate(preds)
        f = self.target_feature
        return out * self.scaler_std_[f] + self.scaler_mean_[f]

    def forecast(self, X):
        """Forecast [N, horizon] from the last input window of X."""
        return self.predict(X)[-1]

    def score(self, X, y=None):
        """Negative MAE of the forecasts against the realized horizon values.

        Only windows whose horizon lies inside X are scored.
        """
        self._check_fitted()
        X = check_series(X, n_features=self.n_features_in_)
        p, q, f = self.input_len, self.horizon, self.target_feature
        starts = np.arange(X.shape[2] - p - q + 1)
        if len(starts) == 0:
            raise ValueError("series too short to score")
        preds = self.predict(X)[: len(starts)]
        target = np.stack([X[:, f, s + p:s + p + q] for s in starts])
        return -metrics(preds, target).mae

    def _check_fitted(self):
        if not hasattr(self, "params_"):
            raise NotFittedError("TraverseForecaster is not fitted yet")
