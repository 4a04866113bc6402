import numpy as np
import pytest
from hypothesis import settings

from oracles import DATA_DIR, have_movielens

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def movielens():
    if not have_movielens():
        pytest.skip(f"MovieLens 100k not found under {DATA_DIR} (run scripts/fetch_movielens.py)")
    return DATA_DIR


def pytest_terminal_summary(terminalreporter):
    from oracles import VERDICTS
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)
