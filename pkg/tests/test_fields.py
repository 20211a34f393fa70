import numpy as np
import pytest

from fhnrds.fields import (
    Grid,
    ScalarField,
    bump,
    bump_field,
    inner,
    l2_sq,
    laplacian,
    lp_p,
    norm_p,
    read_snapshot,
    superlevel_measure,
    tail_integral,
    truncate_plus,
    write_snapshot,
)


def test_grid_validation():
    with pytest.raises(ValueError):
        Grid(dim=3)
    with pytest.raises(ValueError):
        Grid(n=2)
    with pytest.raises(ValueError):
        Grid(half_width=0.0)
    with pytest.raises(ValueError):
        Grid(boundary="absorbing")


def test_grid_geometry():
    g = Grid(dim=1, half_width=2.0, n=8)
    assert g.spacing == 0.5
    assert g.cell_measure == 0.5
    x = g.axis_coords()
    assert x[0] == -1.75 and x[-1] == 1.75
    g2 = Grid(dim=2, half_width=2.0, n=8)
    assert g2.cell_measure == 0.25
    assert g2.coords().shape == (8, 8, 2)


def test_scalar_field_validation():
    g = Grid(n=8, half_width=1.0)
    with pytest.raises(ValueError):
        ScalarField(g, np.zeros(7))
    with pytest.raises(ValueError):
        ScalarField(g, np.full(8, np.nan))


def test_laplacian_periodic_eigenfunction():
    g = Grid(dim=1, half_width=np.pi, n=256, boundary="periodic")
    k = 3
    f = ScalarField.from_function(g, lambda x: np.sin(k * x))
    lap = laplacian(f)
    np.testing.assert_allclose(lap.values, -(k**2) * f.values, atol=2e-2)


def test_laplacian_constant_field():
    for bc in ("periodic", "neumann0"):
        g = Grid(n=16, half_width=1.0, boundary=bc)
        lap = laplacian(ScalarField(g, np.ones(16)))
        np.testing.assert_array_equal(lap.values, np.zeros(16))
    g = Grid(n=16, half_width=1.0, boundary="dirichlet0")
    lap = laplacian(ScalarField(g, np.ones(16)))
    assert lap.values[0] != 0.0 and np.all(lap.values[1:-1] == 0.0)


def test_laplacian_2d_additivity():
    g = Grid(dim=2, half_width=1.0, n=16, boundary="periodic")
    rng = np.random.default_rng(0)
    v = rng.standard_normal((16, 16))
    lap = laplacian(ScalarField(g, v)).values
    g1 = Grid(dim=1, half_width=1.0, n=16, boundary="periodic")
    rows = np.stack([laplacian(ScalarField(g1, v[i])).values for i in range(16)])
    cols = np.stack([laplacian(ScalarField(g1, v[:, j])).values for j in range(16)], axis=1)
    np.testing.assert_allclose(lap, rows + cols, rtol=1e-12)


def test_norms_consistent():
    g = Grid(n=64, half_width=4.0)
    rng = np.random.default_rng(1)
    v = rng.standard_normal(64)
    f = ScalarField(g, v)
    assert norm_p(f, 2) == pytest.approx(np.sqrt(l2_sq(v, g)), rel=1e-14)
    assert lp_p(v, g, 4) == pytest.approx(np.sum(v**4) * g.cell_measure, rel=1e-12)
    assert norm_p(f, 4) == pytest.approx(lp_p(v, g, 4) ** 0.25, rel=1e-12)
    with pytest.raises(ValueError):
        norm_p(f, 0.5)


def test_superlevel_and_tails():
    g = Grid(n=8, half_width=4.0)  # unit cells
    f = ScalarField(g, np.array([0.0, 0.5, -1.0, 2.0, -3.0, 0.1, 1.0, 0.0]))
    assert superlevel_measure(f, 1.0) == 4.0
    assert superlevel_measure(f, 2.5) == 1.0
    with pytest.raises(ValueError):
        superlevel_measure(f, 0.0)
    assert tail_integral(f, 2.5, 2) == 9.0
    assert tail_integral(f, 0.0, 2) == pytest.approx(np.sum(f.values**2))
    # monotone non-increasing in M
    tails = [tail_integral(f, M, 4) for M in (0.5, 1.0, 2.0, 3.0, 4.0)]
    assert all(a >= b for a, b in zip(tails, tails[1:]))


def test_truncate_plus():
    g = Grid(n=4, half_width=2.0)
    f = ScalarField(g, np.array([-1.0, 0.5, 1.5, 3.0]))
    np.testing.assert_array_equal(truncate_plus(f, 1.0).values, [0.0, 0.0, 0.5, 2.0])
    with pytest.raises(ValueError):
        truncate_plus(f, -1.0)


def test_inner_product():
    g = Grid(n=4, half_width=2.0)
    a = ScalarField(g, np.array([1.0, 2.0, 3.0, 4.0]))
    b = ScalarField(g, np.array([1.0, 0.0, -1.0, 0.5]))
    assert inner(a, b) == pytest.approx((1 - 3 + 2) * g.cell_measure)


def test_snapshot_roundtrip_exact(tmp_path):
    g = Grid(n=32, half_width=8.0)
    rng = np.random.default_rng(5)
    f = ScalarField(g, rng.standard_normal(32))
    p = tmp_path / "snap.txt"
    write_snapshot(f, p, time=1.25)
    f2, t = read_snapshot(p)
    assert t == 1.25
    np.testing.assert_array_equal(f.values, f2.values)
    assert f2.grid == g


def test_snapshot_rejects_garbage(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("not a snapshot\n")
    with pytest.raises(ValueError):
        read_snapshot(p)


def test_bump_profile():
    x = np.linspace(-3, 3, 601)
    b = bump(x, center=0.0, width=1.0)
    assert b.max() == pytest.approx(1.0, abs=1e-12)
    assert np.all(b[np.abs(x) >= 1.0] == 0.0)
    assert np.all(b >= 0.0)


def test_bump_field_compact_support():
    g = Grid(n=128, half_width=16.0)
    f = bump_field(g, center=2.0, width=4.0, amplitude=3.0)
    x = g.coords()
    assert np.all(f.values[np.abs(x - 2.0) >= 4.0] == 0.0)
    assert f.values.max() == pytest.approx(3.0, rel=1e-2)
