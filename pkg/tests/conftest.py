"""Shared fixtures.

The expensive session fixtures (the 10-seed pullback ensemble and the
20-seed energy ensemble on the canonical configuration) are computed once
and shared by the acceptance tests; unit tests use small grids instead.
"""

import numpy as np
import pytest

from fhnrds.config import default_config
from fhnrds.fields import Grid, ScalarField, bump_field
from fhnrds.model import FhnState, solve
from fhnrds.noise import WienerPath
from fhnrds import diagnostics as dg


@pytest.fixture(scope="session")
def cfg():
    return default_config()


@pytest.fixture(scope="session")
def spec(cfg):
    return cfg.model_spec()


@pytest.fixture(scope="session")
def solver(cfg):
    return cfg.solver_spec()


@pytest.fixture(scope="session")
def fam(cfg, spec):
    return cfg.family_spec(spec.delta)


@pytest.fixture(scope="session")
def small_cfg():
    return default_config(**{"grid.n": 64, "grid.half_width": 8.0})


@pytest.fixture(scope="session")
def small_spec(small_cfg):
    return small_cfg.model_spec()


@pytest.fixture(scope="session")
def small_solver(small_cfg):
    return small_cfg.solver_spec()


def standard_init(spec):
    u0 = bump_field(spec.grid, amplitude=1.0, width=6.0)
    v0 = bump_field(spec.grid, center=4.0, amplitude=1.0, width=6.0)
    return FhnState(0.0, u0, v0)


@pytest.fixture(scope="session")
def energy_trajs(cfg, spec, solver):
    """20-seed forward ensemble on [0, 4] from an O(1) initial state."""
    seeds = range(cfg.seed, cfg.seed + cfg["experiment.energy_seed_count"])
    out = []
    for seed in seeds:
        path = WienerPath(seed=seed, dt=solver.dt)
        out.append(solve(spec, solver, path, 0.0, 4.0, standard_init(spec)))
    return out


@pytest.fixture(scope="session")
def pullback_ensembles(cfg, spec, solver, fam):
    """(seed, path, runs) for the 10-seed canonical pullback schedule."""
    tau = cfg["experiment.tau"]
    out = []
    for seed in range(cfg.seed, cfg.seed + cfg["experiment.seed_count"]):
        path = WienerPath(seed=seed, dt=solver.dt)
        runs = dg.run_pullback_ensemble(
            tau, path, fam, spec, solver, cfg.t_schedule(),
            snapshot_stride=cfg["solver.snapshot_stride"],
        )
        out.append((seed, path, runs))
    return out


@pytest.fixture(scope="session")
def c_cal(cfg, spec, pullback_ensembles):
    trajs = [r.traj for _, _, runs in pullback_ensembles for r in runs]
    c, degenerate = dg.calibrate_constant(trajs, spec, cfg["experiment.tau"])
    assert not degenerate
    return c
