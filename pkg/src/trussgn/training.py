"""Metrics, the mini-batch training loop, grid search and the linear baseline."""
from __future__ import annotations

import csv
import io
import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .exceptions import DivergenceError, TrussGNError, ValidationError, ZeroVarianceError
from .graphnet import GnModel, GraphBatch, Standardizer, model_backward, model_forward, predict

logger = logging.getLogger(__name__)

HISTORY_HEADER = ("epoch", "train_nmse", "val_nmse", "test_nmse", "seconds")


def nmse(predictions, targets) -> float:
    """Normalised mean-square error in percent.

    100 means no better than predicting the mean of ``targets``.
    """
    p = np.asarray(predictions, dtype=float).reshape(-1)
    t = np.asarray(targets, dtype=float).reshape(-1)
    if p.shape != t.shape or t.size == 0:
        raise ValidationError("predictions and targets must be nonempty and of equal length")
    # sum of squared deviations instead of N * var: the mean predictor then
    # gives the same sum in numerator and denominator, hence exactly 100
    spread = np.sum((t - t.mean()) ** 2)
    if spread == 0:
        raise ZeroVarianceError("targets have zero variance")
    return float(100.0 * (np.sum((p - t) ** 2) / spread))


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 32
    max_epochs: int = 200
    patience: int = 20
    seed: int = 0
    preset: str = "desk"
    aggregation: str = "mean"
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    divergence_factor: float = 10.0
    max_seconds: Optional[float] = None
    eval_batch_size: int = 256

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValidationError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be at least 1")
        if self.patience < 1:
            raise ValidationError("patience must be at least 1")
        if self.max_epochs < 0:
            raise ValidationError("max_epochs must be nonnegative")


@dataclass
class EpochRecord:
    epoch: int
    train_nmse: float
    val_nmse: float
    test_nmse: float
    seconds: float


@dataclass
class TrainHistory:
    records: list = field(default_factory=list)
    best_epoch: int = 0
    best_val_nmse: float = float("inf")
    stopped_early: bool = False

    def append(self, record: EpochRecord) -> None:
        self.records.append(record)
        if record.val_nmse < self.best_val_nmse:
            self.best_val_nmse = record.val_nmse
            self.best_epoch = record.epoch

    @property
    def best(self) -> EpochRecord:
        return next(r for r in self.records if r.epoch == self.best_epoch)

    def to_csv(self, timing: bool = True) -> str:
        """CSV text; with ``timing=False`` the seconds column is written as 0."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(HISTORY_HEADER)
        for r in self.records:
            writer.writerow([r.epoch, repr(r.train_nmse), repr(r.val_nmse), repr(r.test_nmse),
                             repr(r.seconds if timing else 0.0)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "TrainHistory":
        hist = cls()
        rows = list(csv.reader(io.StringIO(text)))
        if tuple(rows[0]) != HISTORY_HEADER:
            raise ValidationError("unexpected history header")
        for row in rows[1:]:
            hist.append(EpochRecord(int(row[0]), float(row[1]), float(row[2]), float(row[3]), float(row[4])))
        return hist


class Adam:
    def __init__(self, params: Sequence[np.ndarray], lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params: Sequence[np.ndarray], grads: Sequence[np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def loss_and_gradient(model: GnModel, batch: GraphBatch, targets: np.ndarray):
    """Mean squared error on standardised targets and its parameter gradients."""
    pred, tape = model_forward(model, batch)
    s = model.standardizer.target_scale
    resid = (pred - targets) / s
    loss = float(np.mean(resid**2))
    dpred = 2.0 * resid / (s * len(targets))
    return loss, model_backward(model, tape, dpred)


def _evaluate(model: GnModel, graphs, targets, batch_size: int) -> float:
    if not len(targets):
        return float("nan")
    return nmse(predict(model, graphs, batch_size), targets)


def train(model: GnModel, train_data, validation_data, test_data=None,
          config: Optional[TrainConfig] = None, callback=None):
    """Fit ``model`` in place; returns its :class:`TrainHistory`.

    Each ``*_data`` is a ``(graphs, targets)`` pair. Epoch 0 records the
    untrained model. Training stops after ``config.patience`` epochs without
    a validation improvement and restores the best-validation parameters.
    Test NMSE is logged but never used for selection.
    """
    config = config or TrainConfig()
    graphs, y = list(train_data[0]), np.asarray(train_data[1], dtype=float)
    if len(graphs) == 0:
        raise ValidationError("training set is empty")
    if len(graphs) != len(y):
        raise ValidationError("training graphs and targets differ in length")
    val_graphs, val_y = list(validation_data[0]), np.asarray(validation_data[1], dtype=float)
    if len(val_graphs) == 0:
        raise ValidationError("validation set is empty")
    test_graphs, test_y = (list(test_data[0]), np.asarray(test_data[1], dtype=float)) if test_data else ([], np.zeros(0))
    for g in graphs[:1] + val_graphs[:1] + test_graphs[:1]:
        model.check_graph(g)

    rng = np.random.default_rng([config.seed, 1])
    params = model.parameters()
    opt = Adam(params, config.learning_rate, config.beta1, config.beta2, config.epsilon)
    history = TrainHistory()
    best_params = model.get_parameters()
    start = time.perf_counter()
    ebs = config.eval_batch_size

    def record(epoch: int) -> bool:
        rec = EpochRecord(epoch, _evaluate(model, graphs, y, ebs), _evaluate(model, val_graphs, val_y, ebs),
                          _evaluate(model, test_graphs, test_y, ebs), time.perf_counter() - start)
        improved = rec.val_nmse < history.best_val_nmse
        history.append(rec)
        if callback is not None:
            callback(rec)
        logger.info("epoch %d train %.3f val %.3f test %.3f (%.1fs)", rec.epoch, rec.train_nmse,
                    rec.val_nmse, rec.test_nmse, rec.seconds)
        return improved

    if record(0):
        best_params = model.get_parameters()
    initial = history.records[0].train_nmse
    n = len(graphs)
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(n)
        for lo in range(0, n, config.batch_size):
            idx = order[lo:lo + config.batch_size]
            batch = GraphBatch.from_graphs([graphs[i] for i in idx])
            _, grads = loss_and_gradient(model, batch, y[idx])
            opt.step(params, grads)
            model.version += 1
        if record(epoch):
            best_params = model.get_parameters()
        last = history.records[-1]
        if not np.isfinite(last.train_nmse) or last.train_nmse > config.divergence_factor * initial:
            model.set_parameters(best_params)
            raise DivergenceError(f"epoch {epoch}: training NMSE {last.train_nmse:.3g} exceeds "
                                  f"{config.divergence_factor}x its initial value {initial:.3g}")
        if epoch - history.best_epoch >= config.patience:
            history.stopped_early = True
            break
        if config.max_seconds is not None and last.seconds > config.max_seconds:
            break
    model.set_parameters(best_params)
    return history


def fit_standardizer(graphs, targets) -> Standardizer:
    return Standardizer.fit(list(graphs), targets)


# --------------------------------------------------------------------------
# grid search

@dataclass
class GridResult:
    index: int
    seed: int
    config: TrainConfig
    history: Optional[TrainHistory]
    n_params: int
    error: Optional[str] = None

    @property
    def best_val_nmse(self) -> float:
        return self.history.best_val_nmse if self.history is not None else float("inf")


def grid_search(grid: Sequence[TrainConfig], build_model, train_data, validation_data,
                test_data=None, seeds: Sequence[int] = (None,)) -> list:
    """Train every candidate (optionally per seed) and rank by best validation NMSE.

    ``build_model(config, seed)`` returns a fresh :class:`GnModel`. Ties go
    to fewer parameters, then the earlier candidate. A failing candidate is
    recorded with its error and ranked last.
    """
    if not grid:
        raise ValidationError("grid is empty")
    results = []
    for index, cfg in enumerate(grid):
        for seed in seeds:
            run_cfg = cfg if seed is None else TrainConfig(**{**asdict(cfg), "seed": seed})
            n_params = 0
            try:
                model = build_model(run_cfg, run_cfg.seed)
                n_params = model.n_params
                history = train(model, train_data, validation_data, test_data, run_cfg)
                results.append(GridResult(index, run_cfg.seed, run_cfg, history, n_params))
            except TrussGNError as exc:
                logger.warning("grid candidate %d (seed %s) failed: %s", index, run_cfg.seed, exc)
                results.append(GridResult(index, run_cfg.seed, run_cfg, None, n_params, str(exc)))
    results.sort(key=lambda r: (r.best_val_nmse, r.n_params, r.index, r.seed))
    return results


def width_sweep(base: TrainConfig, widths=range(20, 601, 20)) -> list:
    """First-block width candidates from 20 to 600 units in steps of 20."""
    return [(w, TrainConfig(**{**asdict(base), "preset": f"desk:{w}"})) for w in widths]


# --------------------------------------------------------------------------
# linear temperature baseline

def fit_linear_temperature(temperatures, targets) -> tuple:
    """Least-squares ``omega ~ a + b T``; returns ``(a, b)``."""
    t = np.asarray(temperatures, dtype=float)
    y = np.asarray(targets, dtype=float)
    if t.size == 0 or t.var() == 0:
        raise ZeroVarianceError("temperature has zero variance")
    design = np.column_stack([np.ones_like(t), t])
    (a, b), *_ = np.linalg.lstsq(design, y, rcond=None)
    return float(a), float(b)


def linear_temp_baseline(train_temperatures, train_targets, heldout_temperatures=None,
                         heldout_targets=None) -> tuple:
    """Population-pooled linear baseline. Returns ``(intercept, slope, heldout NMSE)``.

    Without a held-out split the NMSE is computed on the fitting data.
    """
    a, b = fit_linear_temperature(train_temperatures, train_targets)
    if heldout_temperatures is None:
        heldout_temperatures, heldout_targets = train_temperatures, train_targets
    t = np.asarray(heldout_temperatures, dtype=float)
    return a, b, nmse(a + b * t, heldout_targets)
