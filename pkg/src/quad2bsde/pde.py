"""Explicit finite differences for the fully nonlinear PDE ``v_t + H(t, x, v, Dv, D2v) = 0``.

``H`` is :func:`~quad2bsde.model.pde_hamiltonian`, maximised over the same
control grid as the lattice.  The grid here is independent of the lattice:
different steps, a different boundary and a pointwise Hamiltonian instead
of per-control kernel expectations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .lattice import Lattice
from .model import ProblemSpec, pde_hamiltonian

__all__ = ["PdeSolution", "solve_fnpde", "feynman_kac_residual", "cross_validate",
           "default_pde_steps"]


@dataclass
class PdeSolution:
    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    argmax: np.ndarray
    scheme_report: dict

    def value_at(self, x: float, time_index: int = 0) -> float:
        return float(np.interp(x, self.x, self.v[time_index]))


def _derivatives(v, dx):
    d1 = np.empty_like(v)
    d2 = np.empty_like(v)
    d1[1:-1] = (v[2:] - v[:-2]) / (2 * dx)
    d1[0] = (v[1] - v[0]) / dx
    d1[-1] = (v[-1] - v[-2]) / dx
    d2[1:-1] = (v[2:] - 2 * v[1:-1] + v[:-2]) / dx ** 2
    # mirrored ghost node keeps the boundary stencil monotone
    d2[0] = 2 * (v[1] - v[0]) / dx ** 2
    d2[-1] = 2 * (v[-2] - v[-1]) / dx ** 2
    return d1, d2


def default_pde_steps(p: ProblemSpec, n_steps: int):
    """``(dt_p, dx_p)`` with twice the lattice's time steps and CFL ratio 0.8."""
    dt_p = p.T / (2 * n_steps)
    return dt_p, math.sqrt(p.controls.a_high * dt_p / 0.8)


def solve_fnpde(p: ProblemSpec, dt_p: float, dx_p: float, half_range: float | None = None,
                stddev_mult: float = 4.0) -> PdeSolution:
    """March backwards from ``v(T) = g`` with ``v <- v + dt_p * H``.

    Raises :class:`ConfigurationError` before any work if
    ``a_high*dt_p/dx_p**2 > 1``.
    """
    a_high = p.controls.a_high
    if not (dt_p > 0 and dx_p > 0):
        raise ConfigurationError("dt_p and dx_p must be > 0")
    ratio = a_high * dt_p / dx_p ** 2
    if ratio > 1 + 1e-12:
        raise ConfigurationError(
            f"explicit scheme not monotone: a_high*dt_p/dx_p^2 = {ratio:.4g} > 1")
    n_t = max(1, int(round(p.T / dt_p)))
    dt_p = p.T / n_t
    ratio = a_high * dt_p / dx_p ** 2
    if ratio > 1 + 1e-12:
        raise ConfigurationError(
            f"explicit scheme not monotone after rounding n_t: ratio {ratio:.4g} > 1")
    if half_range is None:
        half_range = stddev_mult * math.sqrt(a_high * p.T)
    M = max(1, math.ceil(half_range / dx_p - 1e-9))
    x = p.x0 + dx_p * np.arange(-M, M + 1)
    t = np.arange(n_t + 1) * dt_p
    v = np.empty((n_t + 1, x.size))
    arg = np.empty((n_t, x.size))
    v[n_t] = p.terminal(x)
    switches = []
    for n in range(n_t - 1, -1, -1):
        d1, d2 = _derivatives(v[n + 1], dx_p)
        ham, arg[n] = pde_hamiltonian(p.generator, p.controls, t[n], x, v[n + 1], d1, d2)
        v[n] = v[n + 1] + dt_p * ham
        if n + 1 < n_t:
            switches.append(int(np.count_nonzero(arg[n] != arg[n + 1])))
    report = {
        "cfl_ratio": ratio,
        "monotone": ratio <= 1 + 1e-12,
        "max_argmax_switches": max(switches, default=0),
        "n_t": n_t,
        "n_x": x.size,
        "dt_p": dt_p,
        "dx_p": dx_p,
        "non_affine_in_a": not p.generator.affine_in_a,
    }
    return PdeSolution(t, x, v, arg, report)


def feynman_kac_residual(p: ProblemSpec, v_candidate, t_samples, x_samples,
                         h_t: float = 1e-3, h_x: float = 1e-2, tol: float = 1e-8) -> dict:
    """PDE residual and ``K``-density of a classical candidate solution.

    For every sample ``(t, x)`` and grid control ``a``::

        k(a) = H(t, x, v, Dv, D2v) - a*D2v/2 - f(t, x, v, Dv, a)

    which is the density of ``K`` for the plug-in solution
    ``(v, Dv)(t, B_t)``.  Derivatives are central differences with steps
    ``h_t`` and ``h_x``.  Nothing is raised; ``passed`` reports ``min k >= -tol``.
    """
    tt, xx = np.meshgrid(np.asarray(t_samples, float), np.asarray(x_samples, float),
                         indexing="ij")
    tt, xx = tt.ravel(), xx.ravel()
    v0 = v_candidate(tt, xx)
    d1 = (v_candidate(tt, xx + h_x) - v_candidate(tt, xx - h_x)) / (2 * h_x)
    d2 = (v_candidate(tt, xx + h_x) - 2 * v0 + v_candidate(tt, xx - h_x)) / h_x ** 2
    dt_ = (v_candidate(tt + h_t, xx) - v_candidate(tt - h_t, xx)) / (2 * h_t)
    gen = p.generator
    ham, _ = pde_hamiltonian(gen, p.controls, tt, xx, v0, d1, d2)
    residual = dt_ + ham
    k_by_a = {}
    k_min = math.inf
    for a in p.controls.grid:
        k = ham - 0.5 * a * d2 - np.asarray(gen(tt, xx, v0, d1, a), dtype=float)
        k_by_a[float(a)] = {"min": float(k.min()), "max": float(k.max())}
        k_min = min(k_min, float(k.min()))
    xs = np.asarray(x_samples, float)
    terminal_res = float(np.max(np.abs(v_candidate(np.full_like(xs, p.T), xs) - p.terminal(xs))))
    return {
        "max_abs_residual": float(np.max(np.abs(residual))),
        "max_residual": float(np.max(residual)),
        "min_residual": float(np.min(residual)),
        "min_k": k_min,
        "k_by_a": k_by_a,
        "max_abs_terminal_residual": terminal_res,
        "passed": k_min >= -tol,
        "n_samples": int(tt.size),
    }


def cross_validate(p: ProblemSpec, lat: Lattice, pde_dt: float | None = None,
                   pde_dx: float | None = None, tol_xv: float | None = None,
                   lattice_solution=None) -> dict:
    """Lattice 2BSDE against the finite-difference PDE at ``(0, x0)``.

    ``tol_xv`` defaults to ``0.02 * (1 + terminal.bound)``.  The nodewise
    difference is reported over lattice nodes within two standard
    deviations (top volatility) of ``x0``, away from either boundary.
    """
    from .twobsde import solve_2bsde

    if pde_dt is None or pde_dx is None:
        d_dt, d_dx = default_pde_steps(p, lat.n_steps)
        pde_dt = pde_dt or d_dt
        pde_dx = pde_dx or d_dx
    if tol_xv is None:
        tol_xv = 0.02 * (1 + p.terminal.bound)
    sol = lattice_solution if lattice_solution is not None else solve_2bsde(p, lat)
    fd = solve_fnpde(p, pde_dt, pde_dx, half_range=lat.half_width * lat.dx)
    v_lat = sol.value
    v_pde = fd.value_at(p.x0)
    nodes = lat.nodes
    core = np.abs(nodes - p.x0) <= 2 * math.sqrt(p.controls.a_high * p.T)
    diff_nodes = np.abs(sol.v[0, core] - np.interp(nodes[core], fd.x, fd.v[0]))
    diff = abs(v_lat - v_pde)
    return {
        "lattice_value": v_lat,
        "pde_value": v_pde,
        "difference": diff,
        "max_node_difference": float(diff_nodes.max()),
        "tol_xv": tol_xv,
        "passed": diff <= tol_xv,
        "pde_report": fd.scheme_report,
        "pde_solution": fd,
        "lattice_solution": sol,
    }
