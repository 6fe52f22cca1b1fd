import numpy as np
import pytest

from chainlab.potentials import ONE_MINUS_COS, ZERO
from chainlab.thermo import ThermoCurve


@pytest.fixture(scope="session")
def curve_harmonic():
    return ThermoCurve.build(ZERO, 1.0, 0.0)


@pytest.fixture(scope="session")
def curve_anh02():
    return ThermoCurve.build(ONE_MINUS_COS, 1.0, 0.2)


@pytest.fixture(scope="session")
def curve_anh01():
    return ThermoCurve.build(ONE_MINUS_COS, 1.0, 0.1)
