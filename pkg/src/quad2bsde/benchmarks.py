"""Reference problems with known values, and the catalog sweep used by the checks."""

from __future__ import annotations

import itertools

from .model import ProblemSpec, make_problem

__all__ = ["benchmark", "BENCHMARKS", "catalog_problems"]

# name -> (generator, generator_params, terminal, terminal_params, exact value at (0, 0)
# for T=1 and the band [0.25, 1])
BENCHMARKS = {
    "constant": ("zero", {}, "constant", {"c": 0.7}, 0.7),
    "square": ("zero", {}, "square", {}, 1.0),
    "neg_square": ("zero", {}, "square", {"scale": -1.0}, -0.25),
    "pq_linear": ("purely_quadratic", {"gamma": 2.0}, "linear", {}, 1.0),
}


def benchmark(name: str, n_grid: int = 2, stddev_mult: float = 4.0) -> tuple[ProblemSpec, float]:
    gen, gp, term, tp, exact = BENCHMARKS[name]
    p = make_problem(gen, term, T=1.0, x0=0.0, a_low=0.25, a_high=1.0, n_grid=n_grid,
                     generator_params=gp, terminal_params=tp, stddev_mult=stddev_mult)
    return p, exact


_GENERATORS = [
    ("zero", {}),
    ("linear_z", {"b": 0.3}),
    ("linear_z", {"b": -0.2, "r": 0.5, "c": 0.1}),
    ("purely_quadratic", {"gamma": 2.0}),
    ("purely_quadratic", {"gamma": 0.5}),
    ("quadratic_plus_linear", {"gamma": 1.0, "b": 0.2, "r": 0.3, "c": -0.1}),
    ("risk_sensitive_inner", {"theta": 1.0, "drift": [-0.3, 0.3], "cost": [0.1, 0.0]}),
]

_TERMINALS = [
    ("constant", {"c": 0.7}),
    ("linear", {"clip": 2.0}),
    ("square", {"clip": 2.0, "scale": 0.5}),
    ("square", {"clip": 2.0, "scale": -0.5}),
    ("tanh", {"scale": 1.0}),
    ("call", {"clip": 2.0, "strike": 0.2}),
]


def catalog_problems(n_grid: int = 3):
    """Every catalog generator against a set of bounded terminals."""
    for (g, gp), (t, tp) in itertools.product(_GENERATORS, _TERMINALS):
        label = f"{g}{gp}|{t}{tp}"
        yield label, make_problem(g, t, T=1.0, x0=0.0, a_low=0.25, a_high=1.0, n_grid=n_grid,
                                  generator_params=gp, terminal_params=tp)
