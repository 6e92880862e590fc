import numpy as np
import pytest

from fbmc_uplink.fbmc import FbmcConfig

ACCEPTANCE: list[tuple[str, bool, str]] = []


def record(name: str, ok: bool, detail: str) -> None:
    ACCEPTANCE.append((name, bool(ok), detail))
    print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")


@pytest.fixture(scope="session")
def cfg128() -> FbmcConfig:
    return FbmcConfig.phydyas(128, 4)


@pytest.fixture(scope="session")
def cfg16() -> FbmcConfig:
    return FbmcConfig.phydyas(16, 4)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
