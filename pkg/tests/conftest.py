import numpy as np
import pytest

from farfield.fields import GridSpec
from farfield.solver import InitialDataSpec, SolverConfig, make_initial_vorticity, run

SMALL_GRID = GridSpec(128, 16.0)
SMALL_SPEC = InitialDataSpec(amplitude=0.5, width=1.0, asymmetry={(1, 0): 0.4, (0, 2): 0.3, (1, 1): 0.2},
                             quadrupole=(1.0, 0.5))


def small_config(T=4.0, dt=0.05, **kw):
    times = tuple(np.unique(np.round(np.geomspace(T / 16, T, 9) / dt)) * dt)
    return SolverConfig(SMALL_GRID, dt=dt, T_max=T, snapshot_times=times, boundary_floor=1e-6, **kw)


@pytest.fixture(scope="session")
def small_omega0():
    return make_initial_vorticity(SMALL_SPEC, SMALL_GRID)


@pytest.fixture(scope="session")
def small_traj(small_omega0):
    return run(small_omega0, small_config())


@pytest.fixture(scope="session")
def small_coeffs(small_traj):
    from farfield.expansion import ExpansionCoefficients, ExpansionOptions

    return ExpansionCoefficients.from_trajectory(small_traj, ExpansionOptions(unit_n=64))
