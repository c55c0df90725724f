from pathlib import Path

import numpy as np
import pytest

from mlmatch.phonetics import Phonetics

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def dict_path():
    return DATA / "mini_cmudict.txt"


@pytest.fixture(scope="session")
def phonetics(dict_path):
    return Phonetics.from_file(dict_path)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_RESULTS: list[tuple[str, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
