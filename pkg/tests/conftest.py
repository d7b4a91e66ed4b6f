import numpy as np
import pytest

from halfgeo.surfaces import SurfaceSpec


@pytest.fixture(scope="session")
def sphere():
    return SurfaceSpec.sphere(1.0)


@pytest.fixture(scope="session")
def oblate():
    return SurfaceSpec.oblate(0.8)


@pytest.fixture(scope="session")
def triaxial():
    return SurfaceSpec.triaxial(1.0, 1.05, 1.1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = []


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line for an acceptance criterion."""

    def record(number: int, ok: bool, detail: str):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE.append((number, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)
