"""Random truss populations and their JSON Lines serialisation."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from .delaunay import delaunay_triangulate
from .exceptions import DegenerateError, GenerationFailed, MechanismError, ValidationError
from .fem import CONSTANT_EA, LINEAR_EA, QUADRATIC_EA, Truss, first_natural_frequency
from .graph import AttributedGraph, encode_truss

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
SPLITS = ("train", "validation", "test")
_SPLIT_STREAM = {"train": 0, "validation": 1, "test": 2}
REFERENCE_TEMPERATURE = 20.0


@dataclass(frozen=True)
class GenerationConfig:
    case: int = 1
    node_count_range: tuple = (10, 40)
    coord_range: tuple = (0.0, 10.0)
    temp_range: tuple = (20.0, 40.0)
    support_probability: float = 0.15
    seed: int = 0
    count: int = 100
    split: str = "train"
    mass_per_length: float = 1.0
    max_support_retries: int = 100

    def __post_init__(self):
        object.__setattr__(self, "node_count_range", tuple(int(v) for v in self.node_count_range))
        object.__setattr__(self, "coord_range", tuple(float(v) for v in self.coord_range))
        object.__setattr__(self, "temp_range", tuple(float(v) for v in self.temp_range))
        if self.case not in (1, 2, 3):
            raise ValidationError(f"case must be 1, 2 or 3, got {self.case}")
        lo, hi = self.node_count_range
        if lo < 3 or hi < lo:
            raise ValidationError("node_count_range must satisfy 3 <= min <= max")
        if not self.coord_range[0] < self.coord_range[1]:
            raise ValidationError("coord_range must be a nonempty interval")
        if not self.temp_range[0] <= self.temp_range[1]:
            raise ValidationError("temp_range must be a nonempty interval")
        if not 0.0 < self.support_probability < 1.0:
            raise ValidationError("support_probability must lie in (0, 1)")
        if self.count < 0:
            raise ValidationError("count must be nonnegative")
        if self.split not in _SPLIT_STREAM:
            raise ValidationError(f"split must be one of {SPLITS}")

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("node_count_range", "coord_range", "temp_range"):
            d[key] = list(d[key])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GenerationConfig":
        return cls(**d)


@dataclass(eq=False)
class LabeledSample:
    truss: Truss
    omega: float
    graph: AttributedGraph = None


@dataclass(eq=False)
class Dataset:
    samples: list
    config: GenerationConfig
    split: str = "train"
    format_version: int = FORMAT_VERSION
    failures: int = field(default=0, repr=False)

    def __post_init__(self):
        for s in self.samples:
            if s.graph is None:
                s.graph = encode_truss(s.truss, self.config.case)

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self) -> Iterator[LabeledSample]:
        return iter(self.samples)

    @property
    def case(self) -> int:
        return self.config.case

    def graphs(self) -> list:
        return [s.graph for s in self.samples]

    def targets(self) -> np.ndarray:
        return np.array([s.omega for s in self.samples], dtype=float)

    def temperatures(self) -> np.ndarray:
        return np.array([s.truss.temperature for s in self.samples], dtype=float)

    def trusses(self) -> list:
        return [s.truss for s in self.samples]


def _sample_rng(config: GenerationConfig, sample_index: int) -> np.random.Generator:
    seq = np.random.SeedSequence([config.seed & (2**64 - 1), _SPLIT_STREAM[config.split],
                                  config.case, int(sample_index)])
    return np.random.Generator(np.random.Philox(seq))


def sample_truss(config: GenerationConfig, sample_index: int) -> Truss:
    """Draw one well-constrained random truss, fully determined by ``(config, sample_index)``."""
    return _draw(config, sample_index)[0]


def _draw(config: GenerationConfig, sample_index: int) -> tuple[Truss, float]:
    rng = _sample_rng(config, sample_index)
    lo, hi = config.node_count_range
    n = int(rng.integers(lo, hi + 1))
    c0, c1 = config.coord_range
    coords = rng.uniform(c0, c1, size=(n, 2))
    try:
        members = delaunay_triangulate(coords)
    except (DegenerateError, ValidationError):
        # measure-zero event under uniform sampling: jitter once and retry
        coords = coords + rng.uniform(-1e-9, 1e-9, size=coords.shape) * (c1 - c0)
        try:
            members = delaunay_triangulate(coords)
        except (DegenerateError, ValidationError) as exc:
            raise GenerationFailed(f"sample {sample_index}: {exc}") from exc

    if config.case == 1:
        types = np.full(len(members), CONSTANT_EA)
        temperature = REFERENCE_TEMPERATURE
    elif config.case == 2:
        types = np.full(len(members), LINEAR_EA)
        temperature = float(rng.uniform(*config.temp_range))
    else:
        types = rng.choice([LINEAR_EA, QUADRATIC_EA], size=len(members))
        temperature = float(rng.uniform(*config.temp_range))

    for _ in range(config.max_support_retries):
        fixed = rng.random((n, 2)) < config.support_probability
        truss = Truss(coords, fixed, members, types, temperature, config.mass_per_length)
        try:
            omega = first_natural_frequency(truss)
        except (MechanismError, ValidationError):
            continue
        return truss, omega
    raise GenerationFailed(f"sample {sample_index}: no constrained supports after "
                           f"{config.max_support_retries} draws")


def generate_dataset(config: GenerationConfig) -> Dataset:
    """Generate ``config.count`` labelled samples.

    Failed indices are skipped and replaced by fresh indices past the end,
    so the output depends only on ``config``.
    """
    samples = []
    failures = 0
    index = 0
    budget = max(1, math.ceil(0.01 * config.count))
    while len(samples) < config.count:
        try:
            truss, omega = _draw(config, index)
        except GenerationFailed as exc:
            failures += 1
            logger.warning("skipping sample %d: %s", index, exc)
            if failures > budget:
                raise GenerationFailed(f"{failures} failures exceed 1% of {config.count}") from exc
        else:
            samples.append(LabeledSample(truss, omega))
        index += 1
    return Dataset(samples, config, config.split, failures=failures)


def _truss_record(truss: Truss) -> dict:
    return {
        "nodes": [{"x": float(x), "y": float(y), "fx": bool(fx), "fy": bool(fy)}
                  for (x, y), (fx, fy) in zip(truss.coords, truss.fixed)],
        "members": [{"i": int(i), "j": int(j), "type": int(t)}
                    for (i, j), t in zip(truss.members, truss.member_types)],
        "temperature": float(truss.temperature),
    }


def truss_from_record(record: dict, mass_per_length: float = 1.0) -> Truss:
    nodes = record["nodes"]
    members = record["members"]
    return Truss(
        coords=[[nd["x"], nd["y"]] for nd in nodes],
        fixed=[[bool(nd["fx"]), bool(nd["fy"])] for nd in nodes],
        members=[[mb["i"], mb["j"]] for mb in members],
        member_types=[mb.get("type", 0) for mb in members],
        temperature=record.get("temperature", REFERENCE_TEMPERATURE),
        mass_per_length=record.get("mass_per_length", mass_per_length),
    )


def dumps_dataset(dataset: Dataset) -> str:
    header = {
        "format_version": dataset.format_version,
        "config": dataset.config.to_dict(),
        "case": dataset.case,
        "split": dataset.split,
        "count": len(dataset),
    }
    lines = [json.dumps(header, sort_keys=True)]
    for s in dataset.samples:
        rec = _truss_record(s.truss)
        rec["omega"] = float(s.omega)
        lines.append(json.dumps(rec, sort_keys=True))
    return "\n".join(lines) + "\n"


def save_dataset(dataset: Dataset, path) -> Path:
    path = Path(path)
    path.write_text(dumps_dataset(dataset), encoding="utf-8")
    return path


def load_dataset(path) -> Dataset:
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        if header.get("format_version") != FORMAT_VERSION:
            raise ValidationError(f"{path}: unsupported format_version {header.get('format_version')}")
        config = GenerationConfig.from_dict(header["config"])
        samples = []
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            truss = truss_from_record(rec, config.mass_per_length)
            samples.append(LabeledSample(truss, float(rec["omega"])))
    if len(samples) != header["count"]:
        raise ValidationError(f"{path}: header count {header['count']} != {len(samples)} samples")
    return Dataset(samples, config, header["split"])
