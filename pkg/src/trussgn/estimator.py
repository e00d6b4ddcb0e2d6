"""scikit-learn compatible front end.

``TrussGraphEncoder`` turns trusses into attributed graphs and
``GraphNetRegressor`` learns a scalar per graph, so the two compose in a
``sklearn.pipeline.Pipeline``::

    pipe = make_pipeline(TrussGraphEncoder(case=2), GraphNetRegressor(preset="desk"))
    pipe.fit(trusses, omegas)
"""
from __future__ import annotations

from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import ValidationError
from .graph import encode_truss, with_temperature
from .graphnet import GnModel, Standardizer, predict
from .presets import resolve_preset
from .training import TrainConfig, fit_linear_temperature, nmse, train
from .validation import check_graphs, check_targets, check_temperatures, check_trusses, infer_case


class TrussGraphEncoder(TransformerMixin, BaseEstimator):
    """Encode trusses as attributed graphs for a given case study."""

    def __init__(self, case: int = 1):
        self.case = case

    def fit(self, X, y=None):
        check_trusses(X)
        if self.case not in (1, 2, 3):
            raise ValidationError(f"case must be 1, 2 or 3, got {self.case}")
        return self

    def transform(self, X):
        return [encode_truss(t, self.case) for t in check_trusses(X)]


class GraphNetRegressor(RegressorMixin, BaseEstimator):
    """Graph-network regressor predicting one scalar per attributed graph.

    Parameters
    ----------
    preset : str
        ``"table1"`` .. ``"table4"``, ``"desk"``, ``"desk:<width>"`` or
        ``"custom:<path>"``.
    aggregation : {"mean", "meanvar"} or None
        Aggregation for every block; ``None`` keeps the preset's own
        (``mean`` for ``desk``).
    learning_rate, batch_size, max_epochs, patience
        Adam step size, mini-batch size, epoch cap and early-stopping
        patience in epochs.
    random_state : int
        Seeds weight initialisation and the per-epoch shuffles.
    max_seconds : float or None
        Wall-clock budget; training stops after the first epoch past it.

    Attributes
    ----------
    model_ : GnModel
    history_ : TrainHistory
    """

    def __init__(self, preset: str = "desk", aggregation: Optional[str] = None, case: Optional[int] = None,
                 learning_rate: float = 1e-3, batch_size: int = 32, max_epochs: int = 200,
                 patience: int = 20, random_state: int = 0, divergence_factor: float = 10.0,
                 max_seconds: Optional[float] = None, eval_batch_size: int = 256):
        self.preset = preset
        self.aggregation = aggregation
        self.case = case
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.random_state = random_state
        self.divergence_factor = divergence_factor
        self.max_seconds = max_seconds
        self.eval_batch_size = eval_batch_size

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate, batch_size=self.batch_size, max_epochs=self.max_epochs,
            patience=self.patience, seed=self.random_state, preset=self.preset,
            aggregation=self.aggregation or "", divergence_factor=self.divergence_factor,
            max_seconds=self.max_seconds, eval_batch_size=self.eval_batch_size)

    def build_model(self, graphs, y) -> GnModel:
        widths = graphs[0].widths
        case = self.case or infer_case(widths)
        blocks = resolve_preset(self.preset, case, self.aggregation)
        std = Standardizer.fit(graphs, y)
        return GnModel.build(blocks, widths, np.random.default_rng(self.random_state), std, case)

    def fit(self, X, y, validation_data=None, test_data=None, callback=None):
        """Train on graphs ``X`` with targets ``y``.

        ``validation_data`` drives early stopping and model selection; when
        omitted the training set stands in for it. ``test_data`` is only
        logged.
        """
        graphs = check_graphs(X)
        y = check_targets(y, len(graphs))
        if validation_data is None:
            validation_data = (graphs, y)
        val = self._checked_pair(validation_data, graphs[0].widths)
        test = self._checked_pair(test_data, graphs[0].widths) if test_data is not None else None
        model = self.build_model(graphs, y)
        self.history_ = train(model, (graphs, y), val, test, self._train_config(), callback=callback)
        self.model_ = model
        self.n_params_ = model.n_params
        return self

    @staticmethod
    def _checked_pair(pair, widths):
        graphs = check_graphs(pair[0], widths)
        return graphs, check_targets(pair[1], len(graphs))

    @classmethod
    def from_model(cls, model: GnModel, **params) -> "GraphNetRegressor":
        """Wrap an already trained model, e.g. one loaded from disk."""
        est = cls(case=model.case, **params)
        est.model_ = model
        est.n_params_ = model.n_params
        return est

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "model_")
        graphs = check_graphs(X, self.model_.input_widths)
        return predict(self.model_, graphs, self.eval_batch_size)

    def nmse_score(self, X, y) -> float:
        """NMSE in percent (lower is better)."""
        return nmse(self.predict(X), y)

    def probe(self, graph, temperatures) -> np.ndarray:
        """Predictions for ``graph`` re-encoded at each of ``temperatures``."""
        check_is_fitted(self, "model_")
        temps = np.atleast_1d(np.asarray(temperatures, dtype=float))
        return predict(self.model_, [with_temperature(graph, t) for t in temps], self.eval_batch_size)


class LinearTemperatureBaseline(RegressorMixin, BaseEstimator):
    """Population-pooled least-squares fit ``omega ~ intercept + slope * T``.

    ``X`` may be temperatures, trusses or temperature-carrying graphs.
    """

    def fit(self, X, y):
        t = check_temperatures(X)
        y = check_targets(y, len(t))
        self.intercept_, self.slope_ = fit_linear_temperature(t, y)
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "slope_")
        return self.intercept_ + self.slope_ * check_temperatures(X)

    def nmse_score(self, X, y) -> float:
        return nmse(self.predict(X), y)
