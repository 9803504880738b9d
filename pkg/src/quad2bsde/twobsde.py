"""Second-order BSDE by dynamic programming over the volatility grid.

At every node the one-step BSDE value is computed for each grid control
and the maximum is kept.  The shortfall of each control with respect to the
maximum is the one-step increment of its non-decreasing process ``K``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .lattice import (Lattice, build_lattice, discrete_z, expectation, forward_marginals,
                      policy_array, reachable_mask)
from .model import GeneratorSpec, ProblemSpec, truncate_generator
from .qbsde import (DEFAULT_KMAX, DEFAULT_TOL, _step, check_exponent, purely_quadratic_gamma,
                    solve_bsde)

__all__ = [
    "TwoBsdeSolution",
    "TOL_K",
    "solve_2bsde",
    "solve_2bsde_exponential",
    "representation_check",
    "min_condition_gap",
    "expected_k",
    "stationarity_experiment",
]

TOL_K = 1e-9


@dataclass
class TwoBsdeSolution:
    """Value field ``v``, argmax controls and per-control ``K``-increments.

    ``per_control_k[i, n, j]`` is ``v[n, j] - y_j(a_i)`` for grid control
    ``a_i``; ``astar`` holds the maximising control values and ``astar_index``
    their grid indices.
    """

    v: np.ndarray
    z: np.ndarray
    astar: np.ndarray
    astar_index: np.ndarray
    per_control_k: np.ndarray
    grid: np.ndarray
    lattice: Lattice
    picard_iterations: np.ndarray
    max_residual: float
    min_gap: float = float("nan")
    extras: dict = field(default_factory=dict)

    @property
    def value(self) -> float:
        return float(self.v[0, self.lattice.center])

    def y_for_control(self, i: int) -> np.ndarray:
        """One-step BSDE values of grid control ``i`` (rows 0..N-1)."""
        return self.v[:-1] - self.per_control_k[i]


def solve_2bsde(p: ProblemSpec, lattice: Lattice | None = None, tol: float = DEFAULT_TOL,
                kmax: int = DEFAULT_KMAX, N: int = 200,
                generator: GeneratorSpec | None = None, step_generator=None) -> TwoBsdeSolution:
    """Backward DP ``v(n, j) = max_a y_j(a)`` over the control grid.

    ``step_generator(n)`` may supply a different generator at each step
    (used for feedback-controlled drivers); otherwise ``generator`` or the
    problem's own generator is used throughout.
    """
    lat = lattice if lattice is not None else build_lattice(p, N)
    gen = generator if generator is not None else p.generator
    grid = p.controls.array
    lat.check_band(grid)
    Nst, nn = lat.n_steps, lat.n_nodes
    v = np.empty((Nst + 1, nn))
    z = np.empty((Nst, nn))
    idx = np.zeros((Nst, nn), dtype=int)
    dk = np.empty((grid.size, Nst, nn))
    iters = np.zeros(Nst, dtype=int)
    v[Nst] = p.terminal(lat.nodes)
    times = lat.times
    max_res = 0.0
    ys = np.empty((grid.size, nn))
    for n in range(Nst - 1, -1, -1):
        zn = None
        gen_n = gen if step_generator is None else step_generator(n)
        for i, a in enumerate(grid):
            ys[i], zi, k, res = _step(v[n + 1], lat, gen_n, a, times[n], tol, kmax, n)
            iters[n] = max(iters[n], k)
            max_res = max(max_res, res)
            zn = zi
        # argmax returns the first (smallest-index) maximiser
        best = np.argmax(ys, axis=0)
        idx[n] = best
        v[n] = ys[best, np.arange(nn)]
        dk[:, n, :] = v[n] - ys
        # z does not depend on the control (covariation identity), so the
        # argmax z is the common one
        z[n] = zn
    sol = TwoBsdeSolution(v=v, z=z, astar=grid[idx], astar_index=idx, per_control_k=dk,
                          grid=grid, lattice=lat, picard_iterations=iters, max_residual=max_res)
    sol.min_gap = min_condition_gap(sol, p, lat)
    return sol


def solve_2bsde_exponential(p: ProblemSpec, lattice: Lattice | None = None, sign: int = 1,
                            N: int = 200) -> TwoBsdeSolution:
    """Purely quadratic 2BSDE through ``ybar = max_a E_a[ybar_next]`` and ``log``."""
    gamma = purely_quadratic_gamma(p.generator)
    check_exponent(gamma, p.terminal.bound)
    lat = lattice if lattice is not None else build_lattice(p, N)
    grid = p.controls.array
    Nst, nn = lat.n_steps, lat.n_nodes
    v = np.empty((Nst + 1, nn))
    z = np.empty((Nst, nn))
    idx = np.zeros((Nst, nn), dtype=int)
    dk = np.empty((grid.size, Nst, nn))
    ybar = np.exp(gamma * sign * p.terminal(lat.nodes))
    v[Nst] = np.log(ybar) / gamma
    for n in range(Nst - 1, -1, -1):
        cand = np.stack([expectation(lat, ybar, a) for a in grid])
        best = np.argmax(cand, axis=0)
        ybar = cand[best, np.arange(nn)]
        idx[n] = best
        v[n] = np.log(ybar) / gamma
        dk[:, n, :] = v[n] - np.log(cand) / gamma
        z[n] = discrete_z(lat, v[n + 1])
    sol = TwoBsdeSolution(v=v, z=z, astar=grid[idx], astar_index=idx, per_control_k=dk,
                          grid=grid, lattice=lat, picard_iterations=np.zeros(Nst, dtype=int),
                          max_residual=0.0)
    sol.min_gap = min_condition_gap(sol, p, lat)
    return sol


def representation_check(sol: TwoBsdeSolution, p: ProblemSpec, lat: Lattice | None = None,
                         tol: float = 1e-9, generator: GeneratorSpec | None = None) -> dict:
    """Compare ``v(0, x0)`` with every constant-control BSDE value.

    ``constant_values`` maps each grid control to ``y^a(0, x0)``; ``gap`` is
    ``max_a y^a - v`` and must be ``<= tol``.  When the argmax field is
    constant on reachable nodes the best constant must attain ``v``.
    """
    lat = lat or sol.lattice
    v0 = sol.value
    values = {}
    for a in sol.grid:
        values[float(a)] = solve_bsde(p, lat, float(a), generator=generator).value
    best_a = max(values, key=values.get)
    gap = values[best_a] - v0
    reach = reachable_mask(lat)[:-1]
    astar_vals = sol.astar[reach]
    constant = bool(np.all(astar_vals == astar_vals[0]))
    dominated = all(y <= v0 + tol for y in values.values())
    attained = abs(gap) <= tol if constant else None
    return {
        "value": v0,
        "constant_values": values,
        "best_constant": best_a,
        "gap": gap,
        "dominated": dominated,
        "astar_constant": constant,
        "attained": attained,
        "passed": dominated and (attained is None or attained),
    }


def min_condition_gap(sol: TwoBsdeSolution, p: ProblemSpec | None = None,
                      lat: Lattice | None = None) -> float:
    """``W(0, x0)`` for ``W(n) = min_a {dK(n; a) + E_a[W(n+1)]}``, ``W(N) = 0``.

    Approximates the infimum, over Markov measures, of ``E[K_T]``.
    """
    lat = lat or sol.lattice
    w = np.zeros(lat.n_nodes)
    for n in range(lat.n_steps - 1, -1, -1):
        cand = np.stack([sol.per_control_k[i, n] + expectation(lat, w, a)
                         for i, a in enumerate(sol.grid)])
        w = cand.min(axis=0)
    return float(w[lat.center])


def expected_k(sol: TwoBsdeSolution, p: ProblemSpec | None = None, lat: Lattice | None = None,
               policy=None) -> float:
    """``E[sum_n dK(n, X_n; policy)]`` under the chain driven by ``policy``.

    ``policy`` values must lie on the control grid; defaults to ``astar``.
    """
    lat = lat or sol.lattice
    pol = sol.astar if policy is None else policy_array(lat, policy)
    grid_idx = _grid_index(sol.grid, pol)
    marg = forward_marginals(lat, pol)
    cols = np.arange(lat.n_nodes)
    total = 0.0
    for n in range(lat.n_steps):
        inc = sol.per_control_k[grid_idx[n], n, cols]
        total += float(marg[n] @ inc)
    return total


def _grid_index(grid, pol):
    pos = np.searchsorted(grid, pol)
    pos = np.clip(pos, 0, grid.size - 1)
    left = np.clip(pos - 1, 0, grid.size - 1)
    pick = np.where(np.abs(grid[left] - pol) < np.abs(grid[pos] - pol), left, pos)
    if not np.allclose(grid[pick], pol, rtol=0, atol=1e-12):
        raise ValueError("policy values must lie on the control grid")
    return pick


def stationarity_experiment(p: ProblemSpec, lat: Lattice, n_list, tol: float = DEFAULT_TOL,
                            kmax: int = DEFAULT_KMAX, stable_tol: float = 1e-14) -> dict:
    """Solve with the generator truncated at each level of ``n_list``.

    Reports the values, the measured ``sup|z|`` of the untruncated run, the
    first level ``n_star`` from which all values agree with the untruncated
    one within ``stable_tol``, and whether every level ``>= sup|z|`` does so.
    """
    n_list = [float(n) for n in n_list]
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValueError("n_list must be strictly increasing")
    base = solve_2bsde(p, lat, tol, kmax)
    sup_z = float(np.abs(base.z).max())
    values = []
    for n in n_list:
        sol = solve_2bsde(p, lat, tol, kmax, generator=truncate_generator(p.generator, n))
        values.append(sol.value)
    base_v = base.value
    stable = [abs(v - base_v) <= stable_tol for v in values]
    n_star = None
    for k in range(len(n_list)):
        if all(stable[k:]):
            n_star = n_list[k]
            break
    above = [s for n, s in zip(n_list, stable) if n >= sup_z]
    below = [(n, not s) for n, s in zip(n_list, stable) if n < sup_z]
    return {
        "n_list": n_list,
        "values": values,
        "untruncated": base_v,
        "sup_z": sup_z,
        "n_star": n_star,
        "stable_above_sup_z": all(above),
        "differs_below_sup_z": below,
    }
