import numpy as np
import pytest
from hypothesis import settings

from trussgn.fem import Truss
from trussgn.population import GenerationConfig, sample_truss

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")


def cantilever(length=2.0, ea_scale=1.0, mass_per_length=1.0):
    """Horizontal bar, node 0 pinned, node 1 on a roller: one free DOF."""
    return Truss(coords=[[0.0, 0.0], [length, 0.0]], fixed=[[True, True], [False, True]],
                 members=[[0, 1]], ea_scale=ea_scale, mass_per_length=mass_per_length)


def random_trusses(count, case=1, seed=0, nodes=(10, 10)):
    cfg = GenerationConfig(case=case, node_count_range=nodes, seed=seed, count=count)
    return [sample_truss(cfg, i) for i in range(count)]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance gate reporting: one line per criterion in the terminal summary
ACCEPTANCE = {}
CRITERIA = {
    1: "FEM oracle exactness",
    2: "invariance suite",
    3: "gradient correctness",
    4: "width bookkeeping",
    5: "NMSE identities",
    6: "desk-scale learning, case 1",
    7: "desk-scale case 3 + extrapolation",
    8: "normalisation probe",
    9: "SDOF gauge suite",
    10: "determinism",
}


@pytest.fixture
def criterion(request):
    """Record the outcome of one acceptance criterion: ``criterion(n, passed, detail)``."""
    def record(number, passed, detail=""):
        ACCEPTANCE[number] = (bool(passed), detail)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not any(item for item in terminalreporter.stats.get("passed", []) + terminalreporter.stats.get("failed", [])
               if "test_acceptance" in item.nodeid):
        return
    terminalreporter.section("acceptance criteria")
    for number, name in CRITERIA.items():
        passed, detail = ACCEPTANCE.get(number, (False, "not run"))
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"criterion {number:2d} [{status}] {name}: {detail}")
