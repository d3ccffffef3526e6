import numpy as np
import pytest

import containment as ct


@pytest.fixture(scope="session")
def preset_a():
    return ct.preset("a")


@pytest.fixture(scope="session")
def preset_b():
    return ct.preset("b")


@pytest.fixture(scope="session")
def preset_c():
    return ct.preset("c")


@pytest.fixture(scope="session")
def preset_d():
    return ct.preset("d")


@pytest.fixture(scope="session")
def omega_a(preset_a):
    comps = ct.components(preset_a.default_range, preset_a)
    assert len(comps) == 1
    return ct.build_omega(comps[0], preset_a)


@pytest.fixture(scope="session")
def omegas_c_a1(preset_c):
    return ct.build_all(preset_c, (0.5, 0.95))


@pytest.fixture(scope="session")
def omega_c2(omegas_c_a1):
    (om,) = [o for o in omegas_c_a1 if o.omega_type == 2]
    return om


@pytest.fixture(scope="session")
def omegas_d_ctrl(preset_d):
    return ct.build_all(preset_d, (0.0, 0.38))
