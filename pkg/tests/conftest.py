from importlib import resources

import pytest

from y86sim import asm


def program_text(name: str) -> str:
    return resources.files("y86sim").joinpath("programs", name).read_text()


@pytest.fixture(scope="session")
def simple_assembled():
    return asm.assemble(asm.parse(program_text("simple.ys")))


@pytest.fixture(scope="session")
def popcount_assembled():
    return asm.assemble(asm.parse(program_text("popcount.ys")))


@pytest.fixture(scope="session")
def stress_assembled():
    return asm.assemble(asm.parse(program_text("stress.ys")))
