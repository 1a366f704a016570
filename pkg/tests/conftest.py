import numpy as np
import pytest
from hypothesis import settings

from coagfrag.grid import build_grid
from coagfrag.kernels import KernelSystem, breakage, coagulation, selection

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture
def smoluchowski_system():
    return KernelSystem(coagulation("smoluchowski", a=3), selection("power", c=1.0, exponent=1.0),
                        breakage("binary-uniform"))


@pytest.fixture
def constant_system():
    return KernelSystem(coagulation("constant"), selection("zero"), breakage("binary-uniform"))


@pytest.fixture
def zero_system():
    return KernelSystem(coagulation("zero"), selection("zero"), breakage("binary-uniform"))


@pytest.fixture
def standard_grid():
    return build_grid(1e-6, 1e3, 180)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# one line per acceptance criterion, printed after the run
ACCEPTANCE: dict = {}


def record(criterion: int, passed: bool, detail: str) -> bool:
    ACCEPTANCE[criterion] = (bool(passed), detail)
    print(f"criterion {criterion}: {'PASS' if passed else 'FAIL'}  {detail}")
    return bool(passed)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
