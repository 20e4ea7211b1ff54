import numpy as np
import pytest

from robinlab.assembly import assemble
from robinlab.asymptotics import MeshEscalator
from robinlab.mesh import DomainSpec, generate_mesh


@pytest.fixture(scope="session")
def square16():
    return generate_mesh(DomainSpec.unit_square(1 / 16))


@pytest.fixture(scope="session")
def square16_forms(square16):
    return assemble(square16)


@pytest.fixture(scope="session")
def disk64():
    return generate_mesh(DomainSpec.disk(segments=64, h=1 / 16))


@pytest.fixture(scope="session")
def disk64_forms(disk64):
    return assemble(disk64)


@pytest.fixture(scope="session")
def disk_escalator():
    """Standard sweep base: refinement levels land alpha*h <= 0.5 cheaply."""
    return MeshEscalator(DomainSpec.disk(segments=22, h=0.25, tag="disk"))


@pytest.fixture(scope="session")
def square_escalator():
    return MeshEscalator(DomainSpec.unit_square(0.25, tag="square"))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
