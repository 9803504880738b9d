"""Single-measure quadratic BSDE on the lattice.

Each backward step freezes ``z`` from the next-step values (discrete
covariation with the increment of the chain) and solves the implicit
``y = E[v] + dt * f(t, x, y, z, a)`` by Picard iteration.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ConvergenceError, EvaluationError, RangeError
from .lattice import Lattice, build_lattice, discrete_z, expectation, policy_array
from .model import GeneratorSpec, ProblemSpec

__all__ = ["BsdeSolution", "bsde_step", "solve_bsde", "solve_purely_quadratic",
           "purely_quadratic_gamma", "DEFAULT_TOL", "DEFAULT_KMAX"]

DEFAULT_TOL = 1e-12
DEFAULT_KMAX = 200
_EXP_LIMIT = 700.0


@dataclass
class BsdeSolution:
    """Node fields of a single-measure solution.

    ``y`` has shape ``(N+1, n_nodes)``, ``z`` and ``policy`` ``(N, n_nodes)``.
    """

    y: np.ndarray
    z: np.ndarray
    picard_iterations: np.ndarray
    max_residual: float
    policy: np.ndarray
    lattice: Lattice

    @property
    def value(self) -> float:
        return float(self.y[0, self.lattice.center])


def _evaluate(gen, t, x, y, z, a, step):
    with np.errstate(all="ignore"):
        fv = np.asarray(gen(t, x, y, z, a), dtype=float)
    if not np.all(np.isfinite(fv)):
        bad = int(np.flatnonzero(~np.isfinite(np.broadcast_to(fv, np.shape(x))))[0])
        a_bad = np.broadcast_to(a, np.shape(x))[bad]
        raise EvaluationError(
            f"non-finite generator value at step {step}: t={t}, x={x[bad]}, a={a_bad}")
    return fv


def _picard(lat, gen, m1, z, a, t, tol, kmax, step):
    x = lat.nodes
    dt = lat.dt
    y = m1
    residual = 0.0
    for k in range(1, kmax + 1):
        y_new = m1 + dt * _evaluate(gen, t, x, y, z, a, step)
        diff = np.abs(y_new - y)
        residual = float(diff.max())
        y = y_new
        # floor at a few ulps so rounding noise cannot stall the loop
        if residual < max(tol, 8 * np.finfo(float).eps * float(np.abs(y).max())):
            return y, k, residual
    raise ConvergenceError(step, int(np.argmax(diff)) - lat.center, residual, kmax)


def bsde_step(values_next, lat: Lattice, gen: GeneratorSpec, a, t: float,
              tol: float = DEFAULT_TOL, kmax: int = DEFAULT_KMAX, step=None):
    """One backward step under control ``a`` (scalar or per-node).

    Returns ``(y, z)`` node vectors.  Raises :class:`ConvergenceError` if the
    Picard loop does not contract within ``kmax`` iterations.
    """
    y, z, _, _ = _step(values_next, lat, gen, a, t, tol, kmax, step)
    return y, z


def _step(values_next, lat, gen, a, t, tol, kmax, step):
    if not tol > 0:
        raise ConfigurationError("tol must be > 0")
    v = np.asarray(values_next, dtype=float)
    m1 = expectation(lat, v, a)
    z = discrete_z(lat, v)
    y, iters, residual = _picard(lat, gen, m1, z, a, t, tol, kmax, step)
    return y, z, iters, residual


def solve_bsde(p: ProblemSpec, lattice: Lattice | None = None, policy=None,
               tol: float = DEFAULT_TOL, kmax: int = DEFAULT_KMAX, N: int = 200,
               generator: GeneratorSpec | None = None) -> BsdeSolution:
    """Backward induction under a fixed (possibly node-dependent) control field.

    ``policy`` defaults to the top of the band.
    """
    lat = lattice if lattice is not None else build_lattice(p, N)
    gen = generator if generator is not None else p.generator
    pol = policy_array(lat, p.controls.a_high if policy is None else policy)
    lat.check_band(pol)
    Nst = lat.n_steps
    y = np.empty((Nst + 1, lat.n_nodes))
    z = np.empty((Nst, lat.n_nodes))
    iters = np.zeros(Nst, dtype=int)
    y[Nst] = p.terminal(lat.nodes)
    max_res = 0.0
    times = lat.times
    for n in range(Nst - 1, -1, -1):
        y[n], z[n], iters[n], res = _step(y[n + 1], lat, gen, pol[n], times[n], tol, kmax, n)
        max_res = max(max_res, res)
    return BsdeSolution(y, z, iters, max_res, pol, lat)


def purely_quadratic_gamma(gen: GeneratorSpec) -> float:
    if gen.name != "purely_quadratic" or "gamma" not in gen.params:
        raise ConfigurationError(
            "exponential transform needs the catalog generator 'purely_quadratic'")
    return float(gen.params["gamma"])


def check_exponent(gamma: float, bound: float):
    if gamma * bound > _EXP_LIMIT:
        raise RangeError(
            f"gamma*bound = {gamma * bound:.4g} exceeds {_EXP_LIMIT:g}: exp() would overflow; "
            "rescale the terminal condition or reduce gamma")


def solve_purely_quadratic(p: ProblemSpec, lattice: Lattice | None = None, policy=None,
                           sign: int = 1, N: int = 200) -> BsdeSolution:
    """Value of the purely quadratic BSDE through ``Y = log(E[exp(gamma*sign*g)])/gamma``.

    ``sign=-1`` gives the ``-xi`` terminal convention of the entropic risk measure.
    """
    if sign not in (1, -1):
        raise ConfigurationError("sign must be +1 or -1")
    gamma = purely_quadratic_gamma(p.generator)
    check_exponent(gamma, p.terminal.bound)
    lat = lattice if lattice is not None else build_lattice(p, N)
    pol = policy_array(lat, p.controls.a_high if policy is None else policy)
    lat.check_band(pol)
    Nst = lat.n_steps
    ybar = np.exp(gamma * sign * p.terminal(lat.nodes))
    y = np.empty((Nst + 1, lat.n_nodes))
    z = np.empty((Nst, lat.n_nodes))
    y[Nst] = np.log(ybar) / gamma
    for n in range(Nst - 1, -1, -1):
        ybar = expectation(lat, ybar, pol[n])
        y[n] = np.log(ybar) / gamma
        z[n] = discrete_z(lat, y[n + 1])
    return BsdeSolution(y, z, np.zeros(Nst, dtype=int), 0.0, pol, lat)
