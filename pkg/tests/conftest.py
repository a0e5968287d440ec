import time

import numpy as np
import pytest

from vortexlab.scenario import default_config


@pytest.fixture(scope="session")
def cfg():
    return default_config()


@pytest.fixture(scope="session")
def profiles(cfg):
    from vortexlab.asymptotics import build_profiles
    return build_profiles(cfg)


class SweepRun:
    """Results of one eps sweep; unpacks as (results, table)."""

    def __init__(self, results, table, seconds):
        self.results, self.table, self.seconds = results, table, seconds

    def __iter__(self):
        return iter((self.results, self.table))


def _refined_config(cfg, factor):
    return cfg.with_updates(grid={"cells_per_sqrt_eps": 16 * factor, "dx_outer": 0.004 / factor,
                                  "outer_cells_per_sqrt_eps": 4 * factor})


@pytest.fixture(scope="session")
def sweep(cfg, profiles):
    """Default eps sweep on the default grids."""
    from vortexlab.asymptotics import convergence_study
    t0 = time.perf_counter()
    _, results, table = convergence_study(cfg, profiles=profiles)
    return SweepRun(results, table, time.perf_counter() - t0)


@pytest.fixture(scope="session")
def refined_sweep(cfg):
    """The same sweep with every spatial spacing halved."""
    from vortexlab.asymptotics import convergence_study
    fine = _refined_config(cfg, 2)
    t0 = time.perf_counter()
    _, results, table = convergence_study(fine)
    return SweepRun(results, table, time.perf_counter() - t0)


@pytest.fixture(scope="session")
def steady_euler(cfg):
    from vortexlab.euler_front import solve_vortex_sheet_euler
    return solve_vortex_sheet_euler(cfg)


def gaussian(z, width=0.06):
    return np.exp(-(z / width) ** 2)
