import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from quad2bsde import (ConfigurationError, DomainError, Lattice, build_lattice, expectation,
                       forward_marginals, kernel_for, make_problem, terminal_distribution)
from quad2bsde.io import write_distribution
from quad2bsde.lattice import discrete_z, policy_array, reachable_mask


def lat_with(dt, dx, a_low=0.25, a_high=1.0, J=20):
    return Lattice(n_steps=round(1 / dt), T=1.0, dx=dx, half_width=J, x0=0.0,
                   a_low=a_low, a_high=a_high)


def test_build_lattice_examples():
    lat = build_lattice(make_problem(), 100)
    assert lat.dt == pytest.approx(0.01, abs=1e-15)
    assert lat.dx == pytest.approx(0.1, abs=1e-15)
    assert lat.cfl_ratio == pytest.approx(1.0, abs=1e-12)
    assert lat.half_width == 40
    lat = build_lattice(make_problem(a_low=0.1, a_high=0.25), 100)
    assert lat.dx == pytest.approx(0.05, abs=1e-15)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 400), st.floats(0.05, 4.0), st.floats(0.1, 3.0), st.floats(2.0, 6.0))
def test_build_lattice_invariants(N, T, a_high, sm):
    p = make_problem(T=T, a_low=a_high / 4, a_high=a_high)
    lat = build_lattice(p, N, sm)
    assert lat.cfl_ratio <= 1 + 1e-12
    assert lat.half_width * lat.dx >= sm * np.sqrt(a_high * T) * (1 - 1e-9)


def test_build_lattice_rejects_bad_steps():
    with pytest.raises(ConfigurationError):
        build_lattice(make_problem(), 0)
    with pytest.raises(ConfigurationError):
        build_lattice(make_problem(), 2.5)


def test_lattice_rejects_cfl_violation():
    with pytest.raises(ConfigurationError, match="CFL"):
        lat_with(0.01, 0.05)


def test_kernel_examples():
    k = kernel_for(lat_with(0.01, 0.2), 1.0)
    assert (k.p_plus, k.p_zero, k.p_minus) == pytest.approx((0.125, 0.75, 0.125), abs=1e-15)
    k = kernel_for(lat_with(0.01, 0.1, a_low=0.25), 0.5)
    assert (k.p_plus, k.p_zero, k.p_minus) == pytest.approx((0.25, 0.5, 0.25), abs=1e-15)
    with pytest.raises(DomainError):
        kernel_for(lat_with(0.01, 0.1), 0.0)
    with pytest.raises(DomainError):
        kernel_for(lat_with(0.01, 0.1), 1.5)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.25, 1.0))
def test_kernel_moments(a):
    lat = build_lattice(make_problem(), 50)
    k = kernel_for(lat, a)
    assert k.p_plus * lat.dx - k.p_minus * lat.dx == 0.0
    assert (k.p_plus + k.p_minus) * lat.dx ** 2 == pytest.approx(a * lat.dt, rel=1e-14)
    assert k.p_plus + k.p_zero + k.p_minus == pytest.approx(1.0, abs=1e-15)
    assert min(k.p_plus, k.p_zero, k.p_minus) >= 0


def test_one_step_law():
    p = make_problem()
    lat = build_lattice(p, 1)
    law = terminal_distribution(lat, 0.25)
    k = kernel_for(lat, 0.25)
    c = lat.center
    assert law[c - 1:c + 2] == pytest.approx([k.p_minus, k.p_zero, k.p_plus], abs=1e-15)
    assert law.sum() == pytest.approx(1.0, abs=1e-15)


def test_two_step_alternating_law():
    lat = build_lattice(make_problem(), 2)
    # step 0 at a_low: q = 0.125; step 1 at a_high: q = 0.5, no mass stays
    law = terminal_distribution(lat, lambda n, x: 0.25 if n == 0 else 1.0)
    c = lat.center
    assert law[c - 2:c + 3] == pytest.approx([0.0625, 0.375, 0.125, 0.375, 0.0625], abs=1e-15)
    assert law.sum() == pytest.approx(1.0, abs=1e-15)


def _variance(law, x):
    return law @ x ** 2 - (law @ x) ** 2


def test_terminal_variance_interior_regime():
    lat = build_lattice(make_problem(), 100, stddev_mult=8)
    law = terminal_distribution(lat, 1.0)
    assert abs(_variance(law, lat.nodes) - 1.0) <= 1e-9
    assert law[[0, -1]].sum() < 1e-10


def test_terminal_variance_four_sigma_folding():
    # 40 nodes from the centre is a 4 sd tail of the 100-step walk
    lat = build_lattice(make_problem(), 100)
    assert lat.half_width == 40
    law = terminal_distribution(lat, 1.0)
    deficit = 1.0 - _variance(law, lat.nodes)
    assert 0 < deficit < 2e-4


def test_boundary_reflection_preserves_mass():
    lat = Lattice(n_steps=50, T=1.0, dx=np.sqrt(0.02), half_width=2, x0=0.0, a_low=0.25,
                  a_high=1.0)
    marg = forward_marginals(lat, 1.0)
    assert np.allclose(marg.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(marg >= 0)


def test_symmetric_policy_gives_symmetric_law():
    lat = build_lattice(make_problem(), 30)
    law = terminal_distribution(lat, lambda n, x: 0.25 + 0.75 * (np.abs(x) < 0.3 * (1 + n % 3)))
    assert np.max(np.abs(law - law[::-1])) <= 1e-15


def test_expectation_is_martingale_in_interior():
    lat = build_lattice(make_problem(), 40)
    x = lat.nodes
    for a in (0.25, 0.6, 1.0):
        e = expectation(lat, x, a)
        assert np.max(np.abs(e[1:-1] - x[1:-1])) <= 1e-14
        e2 = expectation(lat, x ** 2, a)
        assert np.max(np.abs(e2[1:-1] - x[1:-1] ** 2 - a * lat.dt)) <= 1e-13


def test_discrete_z():
    lat = build_lattice(make_problem(), 40)
    x = lat.nodes
    z = discrete_z(lat, 3 * x + 1)
    assert np.allclose(z, 3.0, atol=1e-12)
    # one-sided at the folded boundary: E[v dB]/(a dt) with the outward move folded
    v = x ** 2
    z = discrete_z(lat, v)
    assert z[0] == pytest.approx((v[1] - v[0]) / lat.dx, rel=1e-14)


def test_policy_array_forms():
    lat = build_lattice(make_problem(), 5)
    assert policy_array(lat, 0.5).shape == (5, lat.n_nodes)
    assert np.all(policy_array(lat, lambda n, x: 0.25 + 0.1 * n)[3] == pytest.approx(0.55))
    with pytest.raises(ConfigurationError):
        policy_array(lat, np.ones((4, 3)))
    with pytest.raises(DomainError):
        forward_marginals(lat, 2.0)


def test_reachable_mask():
    lat = build_lattice(make_problem(), 3)
    m = reachable_mask(lat)
    assert m[0].sum() == 1 and m[3].sum() == 7


def test_distribution_csv(tmp_path):
    lat = build_lattice(make_problem(), 2)
    law = terminal_distribution(lat, 1.0)
    path = write_distribution(tmp_path / "distribution.csv", lat, law)
    lines = path.read_text().splitlines()
    assert lines[0] == "node,x,probability"
    assert len(lines) == lat.n_nodes + 1
