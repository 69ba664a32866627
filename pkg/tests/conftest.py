import warnings

import numpy as np
import pytest

from wavesrc.config import RunConfig
from wavesrc.excitation import DecayingExcitation
from wavesrc.grid import SpaceTimeGrid, SpatialGrid2D, TimeGrid


@pytest.fixture
def h():
    return DecayingExcitation()


@pytest.fixture
def small_grid():
    return SpaceTimeGrid(SpatialGrid2D(7), TimeGrid(1.0, 9))


@pytest.fixture
def tiny_config(tmp_path):
    """A run small enough to finish in well under a second (coarse, not accurate)."""
    return RunConfig(inverse_n=6, n_t=8, fine_n=31, output_dir=str(tmp_path / "run"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(autouse=True)
def _quiet_cfl():
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message="CFL ratio", category=RuntimeWarning)
        yield


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """Record one ``PASS``/``FAIL`` line per acceptance criterion; repeated in the terminal summary."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def record(name, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
        lines.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
