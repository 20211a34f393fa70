import numpy as np
import pytest

from fhnrds.noise import (
    GridAlignmentError,
    NoiseSeed,
    OuProcess,
    WienerPath,
    get_ou,
    ou_recursion,
    stationary_variance,
    step_index,
    temperedness_probe,
    wiener_increment,
)


def test_step_index_snaps_grid_times():
    assert step_index(0.5, 1e-3) == 500
    assert step_index(-2.0, 1e-3) == -2000
    assert step_index(0.1 + 0.2, 1e-3) == 300  # float noise below tolerance


def test_step_index_rejects_offgrid():
    with pytest.raises(GridAlignmentError):
        step_index(0.0005, 1e-3)


def test_noise_seed_component_validation():
    with pytest.raises(ValueError):
        NoiseSeed(0, 3)


def test_wiener_increment_deterministic_and_pure():
    s = NoiseSeed(7, 1)
    a = wiener_increment(s, 12, 1e-3)
    b = wiener_increment(s, 12, 1e-3)
    assert a == b
    assert wiener_increment(s, np.array([12]), 1e-3)[0] == a


def test_wiener_increment_streams_independent():
    s1, s2 = NoiseSeed(7, 1), NoiseSeed(7, 2)
    ks = np.arange(1000)
    x = wiener_increment(s1, ks, 1.0)
    y = wiener_increment(s2, ks, 1.0)
    assert abs(np.corrcoef(x, y)[0, 1]) < 0.1


def test_wiener_increment_moments():
    s = NoiseSeed(3, 1)
    dt = 0.25
    x = wiener_increment(s, np.arange(200_000), dt)
    assert abs(x.mean()) < 5e-3
    assert abs(x.var() / dt - 1.0) < 2e-2


def test_wiener_increment_negative_steps():
    s = NoiseSeed(3, 2)
    x = wiener_increment(s, np.arange(-100, 0), 1e-3)
    assert np.all(np.isfinite(x))
    # backward extension never perturbs already-generated forward values
    fwd = wiener_increment(s, np.arange(100), 1e-3)
    assert np.array_equal(fwd, wiener_increment(s, np.arange(100), 1e-3))


def test_path_value_anchored_at_zero():
    path = WienerPath(seed=1, dt=1e-3)
    assert path.value(1, 0.0) == 0.0


def test_path_shift_group_law_exact():
    path = WienerPath(seed=5, dt=1e-3)
    for s, t in [(0.25, 0.5), (-1.0, 0.75), (2.0, -0.5)]:
        shifted = path.shift(s)
        # the shifted path reads the exact same increment stream, bitwise
        k = step_index(t, path.dt)
        lo, hi = min(0, k), max(0, k)
        assert np.array_equal(
            shifted.increments(1, lo, hi),
            path.increments(1, step_index(s, path.dt) + lo, step_index(s, path.dt) + hi),
        )
        # omega(s+t) - omega(s) agrees up to summation rounding
        assert shifted.value(1, t) == pytest.approx(
            path.value(1, s + t) - path.value(1, s), abs=1e-10
        )
    # composition of shifts is exact offset arithmetic
    assert path.shift(0.5).shift(0.25) == path.shift(0.75)


def test_path_values_match_pointwise_value():
    path = WienerPath(seed=9, dt=0.01)
    ts, vals = path.values(2, -0.05, 0.05)
    for t, v in zip(ts, vals):
        assert v == pytest.approx(path.value(2, round(t, 10)), abs=1e-12)


def test_ou_recursion_closed_form():
    rate, dt = 1.5, 0.01
    xi = np.array([0.3, -0.2, 0.1])
    z = ou_recursion(2.0, rate, dt, xi)
    a = np.exp(-rate * dt)
    expected = [2.0 * a + 0.3]
    expected.append(expected[0] * a - 0.2)
    expected.append(expected[1] * a + 0.1)
    np.testing.assert_allclose(z, expected, rtol=1e-13)


def test_stationary_variance():
    assert stationary_variance(2.0) == 0.25


def test_ou_values_pure_across_instances():
    a = OuProcess(seed=11, component=1, rate=1.0, dt=1e-3)
    b = OuProcess(seed=11, component=1, rate=1.0, dt=1e-3)
    va = a.values(-5000, 5000)
    vb = b.values(-5000, 5000)
    assert np.array_equal(va, vb)
    # overlapping queries agree bitwise with earlier ones
    assert np.array_equal(a.values(-100, 100), va[4900:5101])


def test_ou_within_block_recursion():
    proc = OuProcess(seed=4, component=2, rate=1.0, dt=1e-3)
    j0 = proc.B + 1  # strictly inside the second block
    z = proc.values(j0, j0 + 10)
    a = np.exp(-proc.rate * proc.dt)
    xi = proc._damp * wiener_increment(proc.seed, np.arange(j0, j0 + 10), proc.dt)
    np.testing.assert_allclose(z[1:], a * z[:-1] + xi, rtol=0, atol=1e-14)


def test_ou_stationary_variance_empirical():
    proc = OuProcess(seed=21, component=1, rate=1.0, dt=0.05)
    z = proc.values(0, 200_000)
    assert abs(z.var() / 0.5 - 1.0) < 0.05


def test_ou_evaluate_alignment():
    proc = OuProcess(seed=2, component=1, rate=1.0, dt=1e-3)
    assert proc.evaluate(0.5) == proc.at_step(500)
    with pytest.raises(GridAlignmentError):
        proc.evaluate(0.0005)


def test_get_ou_caches():
    assert get_ou(1, 1, 1.0, 1e-3) is get_ou(1, 1, 1.0, 1e-3)
    assert get_ou(1, 1, 1.0, 1e-3) is not get_ou(1, 2, 1.0, 1e-3)


def test_temperedness_probe_decays():
    proc = get_ou(33, 1, 1.0, 1e-2)
    ts, series, passed = temperedness_probe(proc, 1.0, 4.0, 50.0)
    assert passed
    assert series.shape == ts.shape
    assert np.max(series[ts >= 45.0]) < series[0]


def test_temperedness_probe_validation():
    proc = get_ou(33, 1, 1.0, 1e-2)
    with pytest.raises(ValueError):
        temperedness_probe(proc, -1.0, 2.0, 10.0)
