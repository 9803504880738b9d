import math

import numpy as np
import pytest

from quad2bsde import (GeneratorSpec, apriori_check, bmo_norm, bmo_report, build_lattice,
                       diagnostic_rows, doleans_moment_probe, energy_inequality_check,
                       make_problem, solve_2bsde, solve_bsde, z_bmo_bound_check)
from quad2bsde.benchmarks import catalog_problems
from quad2bsde.diagnostics import apriori_bound, z_bmo_bound


@pytest.fixture
def linear_sol():
    p = make_problem("zero", "linear")
    lat = build_lattice(p, 200)
    return p, lat, solve_bsde(p, lat, 1.0)


def test_bmo_constant(constant_problem):
    lat = build_lattice(constant_problem, 20)
    sol = solve_2bsde(constant_problem, lat)
    assert bmo_norm(sol, constant_problem, lat) == 0.0
    lhs, rhs, ok = energy_inequality_check(sol, constant_problem, lat, p_exp=3)
    assert (lhs, rhs, ok) == (0.0, 0.0, True)


def test_bmo_linear_terminal(linear_sol):
    p, lat, sol = linear_sol
    assert bmo_norm(sol, p, lat) == pytest.approx(1.0, rel=0.05)


def test_bmo_scales_quadratically(linear_sol):
    p, lat, sol = linear_sol
    p2 = p.with_terminal(p.terminal.scaled(2.0))
    ratio = bmo_norm(solve_bsde(p2, lat, 1.0), p2, lat) / bmo_norm(sol, p, lat)
    assert ratio == pytest.approx(4.0, rel=0.10)


def test_energy_inequalities(linear_sol):
    p, lat, sol = linear_sol
    bmo = bmo_norm(sol, p, lat)
    lhs1, rhs1, ok1 = energy_inequality_check(sol, p, lat, p_exp=1)
    assert lhs1 == pytest.approx(1.0, rel=0.05) and rhs1 == pytest.approx(8 * bmo) and ok1
    lhs2, rhs2, ok2 = energy_inequality_check(sol, p, lat, p_exp=2)
    assert rhs2 == pytest.approx(4 * 16 * bmo ** 2) and ok2
    assert lhs2 >= lhs1 ** 2 - 1e-12  # Jensen
    with pytest.raises(ValueError):
        energy_inequality_check(sol, p, lat, p_exp=1.5)


def test_apriori_examples(constant_problem):
    lat = build_lattice(constant_problem, 10)
    assert apriori_check(solve_2bsde(constant_problem, lat), constant_problem) == (0.7, 0.7, True)
    p = make_problem("purely_quadratic", "tanh", generator_params={"gamma": 2.0})
    b, m, ok = apriori_check(solve_2bsde(p, build_lattice(p, 50)), p)
    assert b == 1.0 and ok
    gen = GeneratorSpec(lambda t, x, y, z, a: 0.5 - y + 0 * z, alpha=0.5, beta=1.0, lip_y=1.0,
                        depends_on_y=True)
    p = make_problem(gen, "tanh")
    assert apriori_bound(p) == pytest.approx(0.5 * (math.e - 1) + math.e, abs=1e-12)
    assert apriori_check(solve_2bsde(p, build_lattice(p, 50)), p)[2]


def test_z_bmo_bound_examples(constant_problem):
    lat = build_lattice(constant_problem, 10)
    b, m, ok = z_bmo_bound_check(solve_2bsde(constant_problem, lat), constant_problem, lat)
    assert m == 0.0 and ok
    p = make_problem("purely_quadratic", "linear", generator_params={"gamma": 2.0},
                     terminal_params={"clip": 1.0})
    # alpha = beta = 0 here, so the bracket is 1
    assert z_bmo_bound(p, 1.0) == pytest.approx(0.5 * math.exp(8), rel=1e-12)
    lat = build_lattice(p, 100)
    b, m, ok = z_bmo_bound_check(solve_2bsde(p, lat), p, lat)
    assert ok and m < 1.1
    p = make_problem("purely_quadratic", "tanh", generator_params={"gamma": 0.1})
    assert z_bmo_bound(p, 1.0) == pytest.approx(10 * math.exp(0.4), rel=1e-12)
    assert z_bmo_bound(make_problem("purely_quadratic", generator_params={"gamma": 100.0}), 5.0) \
        == math.inf


def test_doleans_probe():
    p = make_problem("zero", "linear")
    assert doleans_moment_probe(0.0, p, build_lattice(p, 50), 1.0, 2.0) == 1.0
    lat = build_lattice(p, 200)
    assert doleans_moment_probe(1.0, p, lat, 1.0, 2.0) == pytest.approx(math.e, rel=0.03)
    # the r = 3 moment lives in the far tail; the 4 sd lattice under-resolves it
    wide = build_lattice(make_problem("zero", "linear", stddev_mult=8), 200, 8)
    assert doleans_moment_probe(1.0, p, wide, 1.0, 3.0) == pytest.approx(math.exp(3), rel=0.05)
    assert doleans_moment_probe(1.0, p, lat, 1.0, 3.0) < 0.95 * math.exp(3)
    with pytest.raises(ValueError):
        doleans_moment_probe(1.0, p, lat, 1.0, 1.0)


def test_bmo_report_and_rows(linear_sol):
    p, lat, sol = linear_sol
    rep = bmo_report(sol, p, lat)
    assert rep.bmo_norm_sq >= 0
    assert all(ok for _, _, _, ok in rep.energy_checks)
    assert [r for r, _ in rep.doleans_moments] == [1.5, 2.0, 3.0]
    rows = diagnostic_rows(sol, p, lat)
    assert {r[0] for r in rows} >= {"apriori", "z_bmo_bound", "bmo_norm", "energy_inequality",
                                    "doleans_moment"}
    assert all(len(r) == 5 for r in rows)


def test_checks_do_not_mutate(linear_sol):
    p, lat, sol = linear_sol
    y = sol.y.copy()
    diagnostic_rows(sol, p, lat)
    assert np.array_equal(y, sol.y)


@pytest.mark.parametrize("label,p", list(catalog_problems()))
def test_catalog_diagnostics_pass(label, p):
    lat = build_lattice(p, 40)
    sol = solve_2bsde(p, lat)
    assert apriori_check(sol, p)[2], label
    assert z_bmo_bound_check(sol, p, lat)[2], label
    for pe in (1, 2):
        assert energy_inequality_check(sol, p, lat, p_exp=pe)[2], label
