from pathlib import Path

import numpy as np
import pytest

from bandalloc.config import load_config
from bandalloc.model import SuccessMatrix

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

TWO_BAND_PI = [0.25, 0.875]
TWO_BAND_POUT = [[0.7, 0.85], [0.8, 0.9]]

FOUR_BAND_PI = [0.45, 0.2, 0.6, 0.4]
FOUR_BAND_POUT = [
    [0.6, 0.7, 0.6, 0.7],
    [0.8, 0.6, 0.8, 0.5],
    [0.7, 0.8, 0.7, 0.6],
    [0.85, 0.9, 0.5, 0.95],
]


@pytest.fixture
def two_band_P():
    return SuccessMatrix.from_tables(TWO_BAND_PI, TWO_BAND_POUT)


@pytest.fixture
def four_band_P():
    return SuccessMatrix.from_tables(FOUR_BAND_PI, FOUR_BAND_POUT)


@pytest.fixture
def two_band_config():
    return load_config(CONFIGS / "two_band.json")


@pytest.fixture
def four_band_config():
    return load_config(CONFIGS / "four_band.json")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


_ACCEPTANCE: dict[int, tuple[str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    n = marker.args[0]
    summary = (item.obj.__doc__ or item.name).strip().splitlines()[0]
    if rep.when == "call" or (rep.when == "setup" and rep.failed):
        _ACCEPTANCE[n] = ("PASS" if rep.passed else "FAIL", summary)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        verdict, summary = _ACCEPTANCE[n]
        terminalreporter.write_line(f"[{verdict}] criterion {n}: {summary}")
