import numpy as np
import pytest
from scipy.linalg import expm

from fhnrds.config import default_config
from fhnrds.fields import Grid, ScalarField, bump_field, l2_sq
from fhnrds.model import (
    BlowUpError,
    FhnState,
    Forcing,
    ModelSpec,
    Nonlinearity,
    SolverSpec,
    StructureViolation,
    from_tilde,
    solve,
    step,
    to_tilde,
    validate_forcing,
    validate_structure,
    young_shift_constant,
)
from fhnrds.noise import WienerPath


def linear_spec(grid, lam=1.0, alpha=1.0, beta=1.0, sigma=1.0):
    zero = ScalarField.zeros(grid)
    return ModelSpec(
        lam, alpha, beta, sigma, 4.0, 1e-6, 1.0, 1.0,
        Nonlinearity(4.0, sign=0.0), zero, zero,
        Forcing.zero(grid), Forcing.zero(grid), zero, zero, zero, grid,
    )


def test_young_shift_constant_tight():
    for p in (3.0, 4.0, 6.0):
        c = young_shift_constant(p)
        s = np.linspace(-3, 3, 20001)
        lhs = s  # unit shift phi = 1
        bound = 0.5 * np.abs(s) ** p + c
        assert np.all(lhs <= bound + 1e-12)
        assert np.min(bound - lhs) < 1e-6  # the constant is not slack


def test_nonlinearity_power_fast_path():
    f = Nonlinearity(4.0)
    s = np.linspace(-2, 2, 101)
    np.testing.assert_allclose(f(s), -np.abs(s) ** 2 * s, rtol=1e-13)
    g = Nonlinearity(3.5, eps=0.1, sign=-1.0)
    np.testing.assert_allclose(g(s), -np.abs(s) ** 1.5 * s + 0.1 * s, rtol=1e-13)
    with pytest.raises(ValueError):
        Nonlinearity(2.0)


def test_forcing_kinds():
    grid = Grid(n=16, half_width=2.0)
    prof = ScalarField(grid, np.ones(16))
    assert Forcing(prof, "constant", c=2.0).factor(5.0) == 2.0
    assert Forcing(prof, "exp", a=0.5).factor(2.0) == pytest.approx(np.e)
    assert Forcing(prof, "sin", a=1.0, c=0.5).factor(np.pi / 2) == pytest.approx(1.5)
    z = Forcing.zero(grid)
    assert z.l2sq_at(3.0) == 0.0
    with pytest.raises(ValueError):
        Forcing(prof, "sawtooth")


def test_model_spec_validation():
    grid = Grid(n=16, half_width=2.0)
    with pytest.raises(ValueError):
        linear_spec(grid, lam=-1.0)


def test_validate_structure_canonical_passes():
    cfg = default_config(**{"grid.n": 64, "grid.half_width": 8.0})
    validate_structure(cfg.model_spec())


def test_validate_structure_rejects_wrong_sign():
    cfg = default_config(**{"grid.n": 64, "grid.half_width": 8.0})
    spec = cfg.model_spec()
    bad = ModelSpec(
        spec.lam, spec.alpha, spec.beta, spec.sigma, spec.p,
        spec.alpha1, spec.alpha2, spec.alpha3,
        Nonlinearity(spec.p, sign=+1.0), spec.h1, spec.h2,
        spec.g, spec.h, spec.psi1, spec.psi2, spec.psi3, spec.grid,
    )
    with pytest.raises(StructureViolation) as exc:
        validate_structure(bad)
    assert exc.value.witness is not None


def test_validate_forcing_convergence_flag():
    cfg = default_config(**{"grid.n": 64, "grid.half_width": 8.0})
    total, converged = validate_forcing(cfg.model_spec(), 0.0, 40.0)
    assert converged and total > 0.0
    # forcing that keeps growing backward in time has no convergent history
    grid = Grid(n=64, half_width=8.0)
    spec = cfg.model_spec()
    grow = Forcing(bump_field(grid, amplitude=0.25, width=8.0), "exp", a=-2.0)
    bad = ModelSpec(
        spec.lam, spec.alpha, spec.beta, spec.sigma, spec.p,
        spec.alpha1, spec.alpha2, spec.alpha3, spec.nonlin,
        spec.h1, spec.h2, grow, spec.h,
        spec.psi1, spec.psi2, spec.psi3, grid,
    )
    total, converged = validate_forcing(bad, 0.0, 40.0)
    assert not converged


def test_step_advances_time_one_dt():
    grid = Grid(n=16, half_width=2.0)
    spec = linear_spec(grid)
    solver = SolverSpec(dt=1e-2, grid=grid)
    st = FhnState(0.5, ScalarField.zeros(grid), ScalarField.zeros(grid))
    st2 = step(st, spec, solver, 0.0, 0.0, 0.5)
    assert st2.t == pytest.approx(0.51)


def test_linear_decay_matches_matrix_exponential():
    grid = Grid(dim=1, half_width=1.0, n=4, boundary="periodic")
    spec = linear_spec(grid)
    A = np.array([[-1.0, -1.0], [1.0, -1.0]])
    exact = expm(A) @ np.array([0.7, -0.3])
    solver = SolverSpec(dt=1e-4, grid=grid)
    init = FhnState(
        0.0, ScalarField(grid, np.full(4, 0.7)), ScalarField(grid, np.full(4, -0.3))
    )
    traj = solve(spec, solver, WienerPath(seed=0, dt=1e-4), 0.0, 1.0, init)
    got = np.array([traj.final.u.values[0], traj.final.v.values[0]])
    np.testing.assert_allclose(got, exact, atol=5e-5)


def test_nonlinear_decay_monotone_without_noise():
    cfg = default_config(
        **{"grid.n": 64, "grid.half_width": 8.0, "noise.enabled": "false",
           "forcing.g.amplitude": 0.0, "forcing.h.amplitude": 0.0}
    )
    spec = cfg.model_spec()
    solver = cfg.solver_spec()
    init = FhnState(
        0.0, bump_field(spec.grid, amplitude=2.0, width=4.0),
        bump_field(spec.grid, amplitude=1.0, width=4.0),
    )
    traj = solve(spec, solver, WienerPath(seed=0, dt=solver.dt), 0.0, 4.0, init)
    assert np.all(np.diff(traj.energy) <= 1e-12)
    assert traj.energy[-1] < 1e-3 * traj.energy[0]


def test_run_splitting_bitwise():
    cfg = default_config(**{"grid.n": 64, "grid.half_width": 8.0})
    spec = cfg.model_spec()
    solver = cfg.solver_spec()
    path = WienerPath(seed=17, dt=solver.dt)
    init = FhnState(0.0, bump_field(spec.grid, amplitude=1.0), ScalarField.zeros(spec.grid))
    whole = solve(spec, solver, path, 0.0, 2.0, init)
    first = solve(spec, solver, path, 0.0, 1.0, init)
    second = solve(spec, solver, path.shift(1.0), 1.0, 2.0, first.final)
    np.testing.assert_array_equal(whole.final.u.values, second.final.u.values)
    np.testing.assert_array_equal(whole.final.v.values, second.final.v.values)


def test_tilde_roundtrip():
    cfg = default_config(**{"grid.n": 64, "grid.half_width": 8.0})
    spec = cfg.model_spec()
    u = bump_field(spec.grid, amplitude=1.0)
    v = bump_field(spec.grid, center=1.0, amplitude=0.5)
    st = from_tilde(u, v, spec, 0.37, -0.81, t=0.0)
    u2, v2 = to_tilde(st, spec, 0.37, -0.81)
    np.testing.assert_allclose(u2.values, u.values, atol=1e-14)
    np.testing.assert_allclose(v2.values, v.values, atol=1e-14)


def test_blow_up_detected():
    # a coarse step makes the explicit cubic term violently unstable
    cfg = default_config(**{"grid.n": 64, "grid.half_width": 8.0, "solver.dt": 0.1})
    spec = cfg.model_spec()
    solver = cfg.solver_spec()
    init = FhnState(
        0.0, bump_field(spec.grid, amplitude=10.0, width=4.0), ScalarField.zeros(spec.grid)
    )
    with pytest.raises(BlowUpError) as exc:
        solve(spec, solver, WienerPath(seed=0, dt=solver.dt), 0.0, 8.0, init)
    assert exc.value.t > 0.0


def test_trajectory_records_transformed_norms():
    cfg = default_config(**{"grid.n": 64, "grid.half_width": 8.0})
    spec = cfg.model_spec()
    solver = cfg.solver_spec()
    path = WienerPath(seed=3, dt=solver.dt)
    init = FhnState(0.0, bump_field(spec.grid, amplitude=1.0), ScalarField.zeros(spec.grid))
    traj = solve(spec, solver, path, 0.0, 0.5, init, snapshot_stride=100)
    assert traj.t[0] == 0.0 and traj.t[-1] == 0.5
    assert traj.u_l2sq[0] == pytest.approx(l2_sq(init.u.values, spec.grid))
    # energy = alpha |v|^2 + beta |u|^2
    np.testing.assert_allclose(
        traj.energy, spec.alpha * traj.v_l2sq + spec.beta * traj.u_l2sq, rtol=1e-13
    )
    assert len(traj.snapshots) == 6
    with pytest.raises(ValueError):
        solve(spec, solver, path, 0.0, 0.5, init, record_stride=10, snapshot_stride=15)
