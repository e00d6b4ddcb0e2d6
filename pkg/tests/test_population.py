import json

import numpy as np
import pytest

from trussgn.exceptions import ValidationError
from trussgn.fem import check_constrained, first_natural_frequency
from trussgn.graph import encode_truss
from trussgn.population import (GenerationConfig, dumps_dataset, generate_dataset, load_dataset, sample_truss,
                                save_dataset)


@pytest.mark.parametrize("case", [1, 2, 3])
def test_sample_ranges_and_labels(case):
    cfg = GenerationConfig(case=case, seed=1, count=40)
    ds = generate_dataset(cfg)
    assert len(ds) == 40
    for s in ds:
        t = s.truss
        assert 10 <= t.n_nodes <= 40
        assert t.coords.min() >= 0 and t.coords.max() <= 10
        assert s.omega > 0 and check_constrained(t)
        assert s.omega == first_natural_frequency(t)
        if case == 1:
            assert t.temperature == 20 and np.all(t.member_eas() == 1e4)
        else:
            assert 20 <= t.temperature <= 40
        types = set(t.member_types.tolist())
        assert types == {0} if case == 1 else types <= ({1} if case == 2 else {1, 2})


def test_case_three_mixes_types():
    ds = generate_dataset(GenerationConfig(case=3, seed=2, count=5))
    assert all(set(s.truss.member_types) == {1, 2} for s in ds)


def test_sample_is_deterministic():
    cfg = GenerationConfig(case=3, seed=99)
    a, b = sample_truss(cfg, 17), sample_truss(cfg, 17)
    for field in ("coords", "fixed", "members", "member_types"):
        assert np.array_equal(getattr(a, field), getattr(b, field))
    assert a.temperature == b.temperature


def test_splits_and_indices_are_independent_streams():
    train = sample_truss(GenerationConfig(seed=5, split="train"), 0)
    test = sample_truss(GenerationConfig(seed=5, split="test"), 0)
    other = sample_truss(GenerationConfig(seed=5, split="train"), 1)
    assert not np.array_equal(train.coords[:3], test.coords[:3])
    assert not np.array_equal(train.coords[:3], other.coords[:3])


def test_prefix_stability():
    short = generate_dataset(GenerationConfig(seed=8, count=5))
    long = generate_dataset(GenerationConfig(seed=8, count=12))
    assert [s.omega for s in short] == [s.omega for s in long][:5]


def test_empty_dataset():
    assert len(generate_dataset(GenerationConfig(count=0))) == 0


def test_extrapolation_node_range():
    ds = generate_dataset(GenerationConfig(case=3, node_count_range=(41, 60), seed=3, count=5))
    assert all(41 <= s.truss.n_nodes <= 60 for s in ds)


def test_node_count_histogram_covers_range():
    cfg = GenerationConfig(seed=4, node_count_range=(10, 40))
    counts = {sample_truss(cfg, i).n_nodes for i in range(1000)}
    assert counts == set(range(10, 41))


@pytest.mark.parametrize("kwargs", [
    {"case": 4}, {"node_count_range": (2, 5)}, {"node_count_range": (9, 5)}, {"support_probability": 0.0},
    {"support_probability": 1.0}, {"coord_range": (1, 1)}, {"split": "dev"}, {"count": -1},
])
def test_config_validation(kwargs):
    with pytest.raises(ValidationError):
        GenerationConfig(**kwargs)


def test_jsonl_round_trip(tmp_path):
    ds = generate_dataset(GenerationConfig(case=3, seed=6, count=8, split="validation"))
    path = save_dataset(ds, tmp_path / "v.jsonl")
    lines = path.read_text().splitlines()
    header = json.loads(lines[0])
    assert set(header) == {"format_version", "config", "case", "split", "count"}
    assert header["count"] == 8 and header["split"] == "validation" and header["case"] == 3
    first = json.loads(lines[1])
    assert set(first) == {"nodes", "members", "temperature", "omega"}
    assert set(first["nodes"][0]) == {"x", "y", "fx", "fy"}
    assert set(first["members"][0]) == {"i", "j", "type"}
    back = load_dataset(path)
    assert np.array_equal(back.targets(), ds.targets())
    for a, b in zip(back, ds):
        assert np.array_equal(a.truss.coords, b.truss.coords)
        assert a.graph.equals(encode_truss(b.truss, 3)) and b.graph.equals(a.graph)
        assert first_natural_frequency(a.truss) == a.omega
    assert dumps_dataset(back) == path.read_text()


def test_serialization_is_byte_identical():
    cfg = GenerationConfig(case=2, seed=10, count=10)
    assert dumps_dataset(generate_dataset(cfg)) == dumps_dataset(generate_dataset(cfg))


def test_load_rejects_truncated_file(tmp_path):
    ds = generate_dataset(GenerationConfig(seed=6, count=3))
    path = save_dataset(ds, tmp_path / "t.jsonl")
    path.write_text("\n".join(path.read_text().splitlines()[:-1]) + "\n")
    with pytest.raises(ValidationError):
        load_dataset(path)
