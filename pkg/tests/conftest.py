import pathlib

import numpy as np
import pytest

from finslerem.expr import parse
from finslerem.geometry import SpaceDef

FIXTURES = pathlib.Path(__file__).parent / "fixtures"

MINKOWSKI_F = "sqrt(y0^2 - y1^2 - y2^2 - y3^2)"
RANDERS_F = "sqrt(y0^2 - y1^2 - y2^2 - y3^2) + 0.1*y1"
PR_F = "sqrt((1 + 0.2*x1^2)*y0^2 - (1 + 0.1*x0^2)*y1^2 - y2^2 - y3^2)"
CURVED_RANDERS_F = "sqrt((1 + 0.2*x1^2)*y0^2 - y1^2 - y2^2 - y3^2) + 0.05*y1"
ANISO_L1 = "0.3*y1^2/sqrt(y0^2 - y1^2 - y2^2 - y3^2)"


@pytest.fixture(scope="session")
def minkowski():
    return SpaceDef(F=parse(MINKOWSKI_F))


@pytest.fixture(scope="session")
def efield():
    return SpaceDef(F=parse(MINKOWSKI_F), L1=parse("0.1*x1*y0"))


@pytest.fixture(scope="session")
def pr_curved():
    return SpaceDef(F=parse(PR_F), L1=parse("0.3*sin(x1)*y0 + 0.1*x0*y2"))


@pytest.fixture(scope="session")
def randers():
    return SpaceDef(F=parse(RANDERS_F))


@pytest.fixture(scope="session")
def randers_aniso():
    return SpaceDef(F=parse(RANDERS_F), L1=parse(ANISO_L1))


@pytest.fixture(scope="session")
def curved_aniso():
    return SpaceDef(
        F=parse(CURVED_RANDERS_F),
        L1=parse("0.1*y1^2/sqrt(y0^2 - y1^2 - y2^2 - y3^2) + 0.3*sin(x1)*y0"),
    )


@pytest.fixture(scope="session")
def aniso_wave():
    return SpaceDef(
        F=parse(MINKOWSKI_F),
        L1=parse("0.2*sin(x0)*y1^2/sqrt(y0^2 - y1^2 - y2^2 - y3^2)"),
    )


@pytest.fixture
def probe_point():
    x = np.array([0.1, 0.3, -0.2, 0.4])
    y = np.array([1.0, 0.2, -0.1, 0.05])
    return x, y
