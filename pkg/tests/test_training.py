import numpy as np
import pytest

from trussgn.exceptions import DivergenceError, ValidationError, ZeroVarianceError
from trussgn.graph import encode_truss
from trussgn.graphnet import GnModel, GraphBatch, Standardizer, model_backward, model_forward, predict
from trussgn.population import GenerationConfig, generate_dataset
from trussgn.presets import desk_preset
from trussgn.training import (TrainConfig, TrainHistory, grid_search, linear_temp_baseline, loss_and_gradient,
                              nmse, train, width_sweep)


@pytest.fixture(scope="module")
def toy():
    splits = {}
    for split, count in (("train", 50), ("validation", 30), ("test", 30)):
        ds = generate_dataset(GenerationConfig(case=1, node_count_range=(5, 12), seed=2, count=count, split=split))
        splits[split] = (ds.graphs(), ds.targets())
    return splits


def build(data, width=8, seed=0, aggregation="mean"):
    graphs, y = data
    return GnModel.build(desk_preset(1, aggregation, width), graphs[0].widths, seed, Standardizer.fit(graphs, y), 1)


# metric

def test_nmse_identities():
    t = np.random.default_rng(0).normal(5, 2, size=500)
    assert nmse(np.full_like(t, t.mean()), t) == 100.0
    assert nmse(t, t) == 0.0
    assert nmse([1, 2, 4], [1, 2, 3]) == 50.0


def test_nmse_errors():
    with pytest.raises(ZeroVarianceError):
        nmse([1, 2], [3, 3])
    with pytest.raises(ValidationError):
        nmse([1, 2], [1, 2, 3])
    with pytest.raises(ValidationError):
        nmse([], [])


# config and history

@pytest.mark.parametrize("kwargs", [{"learning_rate": 0}, {"batch_size": 0}, {"patience": 0}, {"max_epochs": -1}])
def test_config_validation(kwargs):
    with pytest.raises(ValidationError):
        TrainConfig(**kwargs)


def test_history_csv_round_trip():
    from trussgn.training import EpochRecord
    h = TrainHistory()
    for epoch, val in enumerate([50.0, 20.0, 30.0, 10.0, 15.0]):
        h.append(EpochRecord(epoch, val / 2, val, val + 1, 0.1 * epoch))
    assert h.best_epoch == 3 and h.best_val_nmse == min(r.val_nmse for r in h.records)
    text = h.to_csv()
    assert text.splitlines()[0] == "epoch,train_nmse,val_nmse,test_nmse,seconds"
    back = TrainHistory.from_csv(text)
    assert back.to_csv() == text and back.best_epoch == 3
    assert all(line.endswith(",0.0") for line in h.to_csv(timing=False).splitlines()[1:])


# gradients of the loss

def test_loss_gradient_matches_finite_differences(toy):
    graphs, y = toy["train"][0][:3], toy["train"][1][:3]
    model = build((graphs, y), width=4)
    rng = np.random.default_rng(1)
    model.set_parameters([p + 0.1 * rng.standard_normal(p.shape) for p in model.parameters()])
    batch = GraphBatch.from_graphs(graphs)
    _, grads = loss_and_gradient(model, batch, y)
    h = 1e-5
    for p, g in list(zip(model.parameters(), grads))[::3]:
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for i in range(0, flat.size, max(1, flat.size // 7)):
            old = flat[i]
            flat[i] = old + h
            up = loss_and_gradient(model, batch, y)[0]
            flat[i] = old - h
            down = loss_and_gradient(model, batch, y)[0]
            flat[i] = old
            fd = (up - down) / (2 * h)
            assert abs(fd - gflat[i]) <= 1e-4 * max(abs(fd), abs(gflat[i]), 1e-6)


# training loop

def test_overfits_small_set(toy):
    model = build(toy["train"], width=16)
    history = train(model, toy["train"], toy["train"], None,
                    TrainConfig(learning_rate=3e-3, batch_size=10, max_epochs=500, patience=500))
    assert min(r.train_nmse for r in history.records) < 5.0


def test_records_epoch_zero_and_restores_best(toy):
    model = build(toy["train"])
    history = train(model, toy["train"], toy["validation"], toy["test"], TrainConfig(max_epochs=15, patience=15))
    assert history.records[0].epoch == 0 and len(history.records) == 16
    graphs, y = toy["validation"]
    assert nmse(predict(model, graphs), y) == history.best_val_nmse
    graphs, y = toy["test"]
    assert nmse(predict(model, graphs), y) == history.best.test_nmse


def test_early_stopping(toy, monkeypatch):
    # frozen parameters give an exactly flat validation curve
    monkeypatch.setattr("trussgn.training.Adam.step", lambda self, params, grads: None)
    model = build(toy["train"])
    history = train(model, toy["train"], toy["validation"], None, TrainConfig(max_epochs=200, patience=20))
    assert history.stopped_early and history.best_epoch == 0
    assert history.records[-1].epoch == 20


def test_training_is_deterministic(toy):
    runs = []
    for _ in range(2):
        model = build(toy["train"], seed=3)
        runs.append(train(model, toy["train"], toy["validation"], toy["test"], TrainConfig(max_epochs=4, seed=3)))
    assert runs[0].to_csv(timing=False) == runs[1].to_csv(timing=False)


def test_divergence_guard(toy):
    model = build(toy["train"])
    with pytest.raises(DivergenceError):
        train(model, toy["train"], toy["validation"], None,
              TrainConfig(learning_rate=10.0, max_epochs=20, patience=20, divergence_factor=1.5))


def test_rejects_empty_and_mismatched_sets(toy):
    model = build(toy["train"])
    with pytest.raises(ValidationError):
        train(model, ([], []), toy["validation"])
    with pytest.raises(ValidationError):
        train(model, toy["train"], ([], []))
    other = generate_dataset(GenerationConfig(case=2, node_count_range=(5, 6), seed=1, count=3))
    with pytest.raises(ValidationError):
        train(model, toy["train"], (other.graphs(), other.targets()))


# grid search

def test_grid_search_ranks_and_tolerates_failures(toy):
    grid = [TrainConfig(max_epochs=3, preset="desk:4"), TrainConfig(max_epochs=3, preset="desk:12"),
            TrainConfig(max_epochs=3, preset="table3")]

    def make(cfg, seed):
        from trussgn.presets import resolve_preset
        graphs, y = toy["train"]
        return GnModel.build(resolve_preset(cfg.preset, 1), graphs[0].widths, seed, Standardizer.fit(graphs, y), 1)

    results = grid_search(grid, make, toy["train"], toy["validation"], toy["test"], seeds=(0, 1))
    assert len(results) == 6
    finished = [r for r in results if r.history is not None]
    assert [r.best_val_nmse for r in finished] == sorted(r.best_val_nmse for r in finished)
    assert all(r.index == 2 and r.error for r in results[-2:])


def test_grid_tie_break():
    from trussgn.training import GridResult
    h = TrainHistory(best_val_nmse=5.0)
    rs = [GridResult(1, 0, None, h, 100), GridResult(0, 0, None, h, 200), GridResult(2, 0, None, h, 100)]
    rs.sort(key=lambda r: (r.best_val_nmse, r.n_params, r.index, r.seed))
    assert [r.index for r in rs] == [1, 2, 0]


def test_width_sweep_protocol():
    sweep = width_sweep(TrainConfig())
    assert [w for w, _ in sweep] == list(range(20, 601, 20))
    assert sweep[0][1].preset == "desk:20"


# baseline

def test_baseline_exact_on_affine_data():
    t = np.linspace(20, 40, 30)
    a, b, err = linear_temp_baseline(t, 3 - 0.5 * t)
    assert a == pytest.approx(3) and b == pytest.approx(-0.5) and err == pytest.approx(0, abs=1e-20)


def test_baseline_needs_temperature_spread():
    with pytest.raises(ZeroVarianceError):
        linear_temp_baseline(np.full(10, 20.0), np.arange(10.0))
