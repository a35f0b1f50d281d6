import numpy as np
import pytest

from pilotwave.dynamics import Geometry
from pilotwave.waves import Metric, build_equal_energy_kg_set, build_schrodinger_set

E2 = np.sqrt(2.0)
T_PERIOD = np.pi * np.sqrt(2.0)   # one winding of exp(-i E t) at E = sqrt(2)
L_PERIOD = 2.0 * np.pi


@pytest.fixture(scope="session")
def metric_1p1():
    return Metric(signature=(-1, 1))


@pytest.fixture(scope="session")
def single_mode(metric_1p1):
    """Rest-frame mode: rho = 1, Q = 0, uniform drift."""
    return build_equal_energy_kg_set(metric_1p1, 1.0, [[0.0]], [1.0])


@pytest.fixture(scope="session")
def moving_mode(metric_1p1):
    return build_equal_energy_kg_set(metric_1p1, E2, [[1.0]], [1.0])


@pytest.fixture(scope="session")
def standing_wave(metric_1p1):
    """Asymmetric standing wave, rho_min = (0.6 - 0.4)^2 = 0.04 > 0."""
    return build_equal_energy_kg_set(metric_1p1, E2, [[1.0], [-1.0]], [0.6, 0.4])


@pytest.fixture(scope="session")
def standing_wave_symmetric(metric_1p1):
    return build_equal_energy_kg_set(metric_1p1, E2, [[1.0], [-1.0]], [0.5, 0.5])


@pytest.fixture(scope="session")
def crossing_modes():
    met = Metric(signature=(-1, 1, 1))
    return build_equal_energy_kg_set(met, E2, [[1.0, 0.0], [0.0, 1.0]], [0.7, 0.5])


@pytest.fixture(scope="session")
def mixed_schrodinger():
    """Two-energy superposition; the non-locality witness scenario."""
    return build_schrodinger_set([[1.0], [2.0]], [0.8, 0.5])


@pytest.fixture(scope="session")
def torus_1p1():
    return Geometry(periods=(T_PERIOD, L_PERIOD))


@pytest.fixture(scope="session")
def box_nr():
    return Geometry(periods=(None, L_PERIOD))


def probe_box(model):
    """Default probe box: one local-time winding by one spatial period."""
    if model.relativistic:
        t_span = 2.0 * np.pi / abs(model.shared_energy)
        return np.zeros(model.dim), np.array([t_span] + [L_PERIOD] * (model.dim - 1))
    return np.zeros(model.dim), np.array([1.0] + [L_PERIOD] * (model.dim - 1))
