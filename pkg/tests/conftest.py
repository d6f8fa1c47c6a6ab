import numpy as np
import pytest
from hypothesis import settings

from glauberspec.lattice import build_lattice, constant_disorder, ring, sample_disorder

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


@pytest.fixture
def ring4():
    return ring(4)


@pytest.fixture
def ring6_field():
    return sample_disorder(ring(6), -1.0, 1.0, 11)


@pytest.fixture
def torus_field():
    return sample_disorder(build_lattice(2, (3, 3)), -1.0, 1.0, 5)


@pytest.fixture
def ring4_ferro():
    return constant_disorder(ring(4), 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


CRITERIA: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(CRITERIA):
        ok, detail = CRITERIA[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
