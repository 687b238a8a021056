import numpy as np
import pytest

from mtopinn.netcore import Architecture, init_params
from mtopinn.objective import CollocationBatch, LabeledBatch
from mtopinn.physics import GreenshieldsParams
from mtopinn.trainer import TaskSpec


def make_task(rng, n=12, target="density", v_f=1.3, k_j=0.9, pde=True, name="t"):
    batch = LabeledBatch(rng.uniform(0, 1, n), rng.uniform(0, 1, n), rng.uniform(0.1, 0.8, n))
    return TaskSpec(name, target, batch, GreenshieldsParams(v_f, k_j), pde_enabled=pde)


def make_colloc(rng, n=10):
    return CollocationBatch(rng.uniform(0, 1, n), rng.uniform(0, 1, n))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def small_net():
    return init_params(Architecture(hidden_widths=(6, 5)), seed=3)


# acceptance verdicts, printed as one line per criterion at the end of the session
VERDICTS = {}


def verdict(number, ok, detail):
    VERDICTS[number] = (bool(ok), detail)
    return ok


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(VERDICTS):
        ok, detail = VERDICTS[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
