import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", max_examples=50, deadline=None, suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def burgers():
    from ralpde.datagen import SystemSpec, generate

    return generate(SystemSpec.make("burgers"))


@pytest.fixture(scope="session")
def transport():
    from ralpde.datagen import SystemSpec, generate

    return generate(SystemSpec.make("transport"))


_ACCEPTANCE: list[str] = []


@pytest.fixture
def report(capsys):
    """Print one acceptance line now and repeat it in the run summary."""

    def emit(number: int, ok: bool, detail: str) -> None:
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} | {detail}"
        _ACCEPTANCE.append(line)
        with capsys.disabled():
            print(f"\n{line}")

    return emit


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
