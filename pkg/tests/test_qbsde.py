import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from quad2bsde import (ConfigurationError, ConvergenceError, EvaluationError, GeneratorSpec,
                       RangeError, build_lattice, bsde_step, make_generator, make_problem,
                       solve_bsde, solve_purely_quadratic)
from quad2bsde.benchmarks import benchmark
from quad2bsde.io import write_bsde_solution


@pytest.fixture
def lat():
    return build_lattice(make_problem(), 100)


def test_step_identity_profile(lat):
    zero = make_generator("zero", make_problem().controls)
    y, z = bsde_step(lat.nodes, lat, zero, 0.6, 0.0)
    assert np.allclose(y[1:-1], lat.nodes[1:-1], atol=1e-14)
    assert np.allclose(z[1:-1], 1.0, atol=1e-12)


def test_step_constant_profile(lat):
    zero = make_generator("zero", make_problem().controls)
    y, z = bsde_step(np.full(lat.n_nodes, 0.3), lat, zero, 1.0, 0.0)
    assert np.all(y == 0.3) and np.all(z == 0.0)


def test_step_purely_quadratic(lat):
    g = make_generator("purely_quadratic", make_problem().controls, gamma=2.0)
    y, z = bsde_step(lat.nodes, lat, g, 1.0, 0.0)
    assert np.allclose(y[1:-1], lat.nodes[1:-1] + 0.01, atol=1e-14)
    assert np.allclose(z[1:-1], 1.0, atol=1e-12)


def test_step_reports_non_contraction(lat):
    gen = GeneratorSpec(lambda t, x, y, z, a: -300.0 * y, beta=300.0, lip_y=300.0,
                        depends_on_y=True)
    with pytest.raises(ConvergenceError) as err:
        bsde_step(np.ones(lat.n_nodes), lat, gen, 1.0, 0.0, kmax=50, step=7)
    assert err.value.step == 7 and err.value.kmax == 50 and err.value.residual > 0
    assert "n=7" in str(err.value)


def test_step_reports_non_finite(lat):
    gen = GeneratorSpec(lambda t, x, y, z, a: np.where(x > 1.0, np.inf, 0.0))
    with pytest.raises(EvaluationError, match="step 3"):
        bsde_step(np.zeros(lat.n_nodes), lat, gen, 1.0, 0.0, step=3)


def test_step_rejects_bad_tol(lat):
    with pytest.raises(ConfigurationError):
        bsde_step(np.zeros(lat.n_nodes), lat, make_generator("zero", make_problem().controls),
                  1.0, 0.0, tol=0.0)


@pytest.mark.parametrize("a", [0.25, 0.5, 1.0])
def test_martingale_value(a):
    p = make_problem("zero", "linear", x0=0.3)
    sol = solve_bsde(p, build_lattice(p, 50), a)
    assert sol.value == pytest.approx(0.3, abs=1e-13)
    assert np.array_equal(sol.y[-1], p.terminal(sol.lattice.nodes))


def test_purely_quadratic_gaussian_mgf(pq_linear):
    sol = solve_bsde(pq_linear, build_lattice(pq_linear, 200), 1.0)
    assert abs(sol.value - 1.0) <= 0.02


def test_linear_in_y_decay():
    p = make_problem("linear_z", "constant", generator_params={"r": 0.5},
                     terminal_params={"c": 1.0})
    errs = [abs(solve_bsde(p, build_lattice(p, N), 0.5).value - math.exp(-0.5))
            for N in (50, 100, 200)]
    assert errs[2] < 1e-3
    assert errs[0] / errs[1] == pytest.approx(2.0, rel=0.05)
    assert errs[1] / errs[2] == pytest.approx(2.0, rel=0.05)


def test_exponential_transform_constant():
    p = make_problem("purely_quadratic", "constant", generator_params={"gamma": 2.0},
                     terminal_params={"c": 0.7})
    assert solve_purely_quadratic(p, build_lattice(p, 50)).value == pytest.approx(0.7, abs=1e-15)


def test_exponential_transform_mgf(pq_linear):
    assert abs(solve_purely_quadratic(pq_linear, build_lattice(pq_linear, 200)).value - 1) <= 0.02


def test_exponential_transform_vs_picard_is_first_order(pq_linear):
    # the two recursions differ by cosh-versus-exp terms of order dt^2 per step
    diffs = []
    for N in (50, 100, 200):
        lat = build_lattice(pq_linear, N)
        a = solve_bsde(pq_linear, lat, 1.0).y
        b = solve_purely_quadratic(pq_linear, lat, 1.0).y
        diffs.append(float(np.abs(a - b).max()))
    assert diffs[2] < 5e-3
    assert diffs[0] / diffs[1] == pytest.approx(2.0, rel=0.15)
    assert diffs[1] / diffs[2] == pytest.approx(2.0, rel=0.15)


def test_exponential_transform_overflow():
    p = make_problem("purely_quadratic", "constant", generator_params={"gamma": 200.0},
                     terminal_params={"c": 4.0})
    with pytest.raises(RangeError, match="rescale"):
        solve_purely_quadratic(p, build_lattice(p, 10))
    with pytest.raises(ConfigurationError):
        solve_purely_quadratic(make_problem(), build_lattice(make_problem(), 10))


def test_convergence_order_tanh():
    p = make_problem("purely_quadratic", "tanh", generator_params={"gamma": 1.0})
    ref = solve_bsde(p, build_lattice(p, 1600), 1.0).value
    errs = [abs(solve_bsde(p, build_lattice(p, N), 1.0).value - ref) for N in (50, 100, 200)]
    assert errs[0] > errs[1] > errs[2]
    assert 1.5 < errs[1] / errs[2] < 3.0


TERMINALS = [("linear", {}), ("square", {"scale": 0.3}), ("tanh", {}), ("call", {"strike": 0.2}),
             ("cubic", {"scale": 0.05})]
GENERATORS = [("zero", {}), ("linear_z", {"b": 0.3, "r": 0.4}), ("purely_quadratic", {"gamma": 1.0}),
              ("quadratic_plus_linear", {"gamma": 0.5, "b": -0.2, "r": 0.2, "c": 0.1})]


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(GENERATORS), st.sampled_from(TERMINALS), st.floats(0.0, 1.0),
       st.floats(0.25, 1.0), st.integers(0, 2 ** 31))
def test_comparison(gen, term, shift, a_const, seed):
    p1 = make_problem(gen[0], term[0], generator_params=gen[1], terminal_params=term[1])
    p2 = p1.with_terminal(p1.terminal.shifted(-shift))
    lat = build_lattice(p1, 20)
    rng = np.random.default_rng(seed)
    pol = rng.uniform(0.25, 1.0, size=(lat.n_steps, lat.n_nodes))
    for policy in (a_const, pol):
        y1 = solve_bsde(p1, lat, policy).y
        y2 = solve_bsde(p2, lat, policy).y
        assert np.all(y1 >= y2)


@settings(max_examples=30, deadline=None)
@given(st.sampled_from([g for g in GENERATORS if "r" not in g[1]]), st.sampled_from(TERMINALS),
       st.floats(-1.0, 1.0))
def test_translation_y_free(gen, term, m):
    p = make_problem(gen[0], term[0], generator_params=gen[1], terminal_params=term[1])
    lat = build_lattice(p, 20)
    y = solve_bsde(p, lat, 0.5).y
    ym = solve_bsde(p.with_terminal(p.terminal.shifted(m)), lat, 0.5).y
    assert np.max(np.abs(ym - y - m)) <= 1e-12


def test_node_dependent_policy_uses_per_node_kernels():
    p, _ = benchmark("square")
    lat = build_lattice(p, 40)
    mixed = solve_bsde(p, lat, lambda n, x: np.where(x > 0, 1.0, 0.25))
    hi = solve_bsde(p, lat, 1.0).value
    lo = solve_bsde(p, lat, 0.25).value
    assert lo < mixed.value < hi
    assert np.array_equal(mixed.policy[0], np.where(lat.nodes > 0, 1.0, 0.25))


def test_solution_csv(tmp_path):
    p = make_problem("zero", "linear")
    sol = solve_bsde(p, build_lattice(p, 3))
    text = write_bsde_solution(tmp_path / "s.csv", sol).read_text().splitlines()
    assert text[0] == "n,j,t,x,y,z"
    assert len(text) == 1 + 4 * sol.lattice.n_nodes
