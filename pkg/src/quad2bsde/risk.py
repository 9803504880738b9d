"""Quasi-sure entropic risk and robust risk-sensitive control on the lattice."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError, DomainError
from .lattice import Lattice, _move_prob, _shift, build_lattice, discrete_z, policy_array
from .model import CheckResult, GeneratorSpec, ProblemSpec, TerminalSpec, ValidationReport
from .qbsde import DEFAULT_KMAX, DEFAULT_TOL, _picard, check_exponent
from .twobsde import TwoBsdeSolution, min_condition_gap, solve_2bsde, solve_2bsde_exponential

__all__ = [
    "RiskSensitiveSpec",
    "RiskSensitiveSolution",
    "entropic_risk",
    "evaluate_fixed_control",
    "solve_risk_sensitive",
    "control_generator",
]


@dataclass(frozen=True)
class RiskSensitiveSpec:
    """Controller data: ``g_drift(t, x, u)`` and ``h_cost(t, x, u)`` act on node vectors."""

    theta: float
    controls_u: Sequence[float]
    g_drift: Callable
    h_cost: Callable
    psi: TerminalSpec
    g_bound: float
    h_bound: float

    def __post_init__(self):
        if not self.theta > 0:
            raise ConfigurationError("theta must be > 0")
        if len(self.controls_u) == 0:
            raise ConfigurationError("controls_u must be non-empty")
        object.__setattr__(self, "controls_u", tuple(float(u) for u in self.controls_u))

    @classmethod
    def from_constants(cls, theta, controls_u, drift, cost, psi):
        """Drift and cost constant in ``(t, x)``, one value per control."""
        if len(controls_u) == 0:
            raise ConfigurationError("controls_u must be non-empty")
        drift = dict(zip(map(float, controls_u), map(float, drift)))
        cost = dict(zip(map(float, controls_u), map(float, cost)))
        if len(drift) != len(controls_u) or len(cost) != len(controls_u):
            raise ConfigurationError("need one drift and one cost value per control")
        return cls(theta, controls_u,
                   lambda t, x, u: np.full(np.shape(x), drift[float(u)]),
                   lambda t, x, u: np.full(np.shape(x), cost[float(u)]),
                   psi, max(map(abs, drift.values())), max(map(abs, cost.values())))

    def audit(self, T: float, x_range: tuple, n_samples=2000, seed=0) -> ValidationReport:
        rng = np.random.default_rng(seed)
        t = rng.uniform(0, T, n_samples)
        x = rng.uniform(*x_range, n_samples)
        checks = []
        for name, fn, bound in (("g_drift", self.g_drift, self.g_bound),
                                ("h_cost", self.h_cost, self.h_bound)):
            worst = max(float(np.max(np.abs(fn(t, x, u)))) for u in self.controls_u)
            checks.append(CheckResult(f"{name}_bound", worst <= bound * (1 + 1e-12) + 1e-12,
                                      None, f"sampled sup {worst:.6g}, declared {bound:.6g}"))
        return ValidationReport(checks)


@dataclass
class RiskSensitiveSolution:
    ystar: TwoBsdeSolution
    ustar: np.ndarray
    J: float

    @property
    def value(self) -> float:
        return self.ystar.value


def entropic_risk(p: ProblemSpec, xi_terminal: TerminalSpec, lattice: Lattice | None = None,
                  N: int = 200) -> float:
    """``log(max over Markov volatility policies of E[exp(-gamma*xi)]) / gamma``.

    ``p.generator`` must be the catalog ``purely_quadratic`` generator; its
    ``gamma`` is the risk tolerance.
    """
    q = p.with_terminal(xi_terminal)
    if p.generator.name != "purely_quadratic":
        raise ConfigurationError("entropic_risk needs the 'purely_quadratic' generator")
    check_exponent(float(p.generator.params["gamma"]), xi_terminal.bound)
    lat = lattice if lattice is not None else build_lattice(q, N)
    return solve_2bsde_exponential(q, lat, sign=-1).value


def control_generator(rs: RiskSensitiveSpec, controls, u_nodes=None) -> GeneratorSpec:
    """Driver ``z*g(u) + h(u) + theta/2*a*z**2``.

    With ``u_nodes`` (per-node control values) the control is fixed; without
    it the inner maximum over ``U`` is taken.
    """
    theta = rs.theta
    a_low = controls.a_low
    consts = dict(alpha=rs.h_bound + rs.g_bound ** 2 / (2 * a_low), gamma_q=theta + 1.0,
                  mu=0.5 * theta, phi_bound=rs.g_bound / math.sqrt(a_low))
    if u_nodes is not None:
        u_nodes = np.asarray(u_nodes, dtype=float)

        def f(t, x, y, z, a):
            g = _by_control(rs.g_drift, t, x, u_nodes, rs.controls_u)
            h = _by_control(rs.h_cost, t, x, u_nodes, rs.controls_u)
            return z * g + h + 0.5 * theta * a * z * z

        return GeneratorSpec(f, name="risk_sensitive_fixed", **consts)

    def fstar(t, x, y, z, a):
        inner, _ = _inner_max(rs, t, x, z)
        return inner + 0.5 * theta * a * z * z

    return GeneratorSpec(fstar, name="risk_sensitive_inner", **consts)


def _by_control(fn, t, x, u_nodes, controls_u):
    out = np.empty(np.shape(x))
    for u in controls_u:
        mask = u_nodes == u
        if mask.any():
            out[mask] = np.broadcast_to(fn(t, x, u), np.shape(x))[mask]
    return out


def _inner_max(rs, t, x, z):
    """``max_u {z*g + h}`` and the first maximiser, per node."""
    best = None
    arg = None
    for u in rs.controls_u:
        cand = z * rs.g_drift(t, x, u) + rs.h_cost(t, x, u)
        if best is None:
            best = np.array(cand, dtype=float)
            arg = np.full(best.shape, u)
        else:
            upd = cand > best
            best = np.where(upd, cand, best)
            arg = np.where(upd, u, arg)
    return best, arg


def _u_field(rs, lat, u_policy):
    pol = policy_array(lat, u_policy)
    allowed = np.asarray(rs.controls_u)
    if not np.all(np.isin(pol, allowed)):
        raise DomainError("u_policy takes values outside controls_u")
    return pol


def evaluate_fixed_control(rs: RiskSensitiveSpec, u_policy, p: ProblemSpec,
                           lat: Lattice | None = None, method: str = "generator",
                           tol: float = DEFAULT_TOL, kmax: int = DEFAULT_KMAX):
    """Robust value of a fixed feedback control ``u(n, j)``.

    ``method="generator"`` folds the drift into the driver through ``z*g``;
    ``method="tilted"`` instead tilts the transition probabilities so the
    one-step mean increment is ``g*dt``.  Returns ``(y0, J)`` with
    ``J = exp(theta*y0)``.
    """
    q = p.with_terminal(rs.psi)
    lat = lat if lat is not None else build_lattice(q, 200)
    upol = _u_field(rs, lat, u_policy)
    if method == "generator":
        sol = solve_2bsde(q, lat, tol, kmax,
                          step_generator=lambda n: control_generator(rs, q.controls, upol[n]))
    elif method == "tilted":
        sol = _solve_tilted(rs, q, lat, upol, tol, kmax)
    else:
        raise ConfigurationError(f"unknown method {method!r}")
    y0 = sol.value
    return y0, math.exp(rs.theta * y0)


def _tilted_expectation(lat, v, a, drift):
    """``E[v]`` under the kernel whose mean increment is ``drift*dt``."""
    q, stay = _move_prob(lat, a)
    q = np.broadcast_to(q, v.shape)
    tilt = drift * lat.dt / (2.0 * lat.dx)
    pu = q + tilt
    pd = q - tilt
    # the folded boundary keeps a single move; it carries the whole shift
    pd = pd.copy()
    pu = pu.copy()
    pu[0], pd[0] = q[0] + 2 * tilt[0], q[0]
    pu[-1], pd[-1] = q[-1], q[-1] - 2 * tilt[-1]
    if np.any(pu < -1e-15) or np.any(pd < -1e-15):
        raise ConfigurationError(
            "drift too large for the tilted kernel: need |g|*dt/(2*dx) <= a*dt/(2*dx^2)")
    ps = 1.0 - pu - pd
    up, dn = _shift(v)
    return pu * up + ps * v + pd * dn


def _solve_tilted(rs, q, lat, upol, tol, kmax):
    grid = q.controls.array
    nn = lat.n_nodes
    Nst = lat.n_steps
    v = np.empty((Nst + 1, nn))
    z = np.empty((Nst, nn))
    idx = np.zeros((Nst, nn), dtype=int)
    dk = np.empty((grid.size, Nst, nn))
    x = lat.nodes
    v[Nst] = q.terminal(x)
    theta = rs.theta
    for n in range(Nst - 1, -1, -1):
        t = n * lat.dt
        g = _by_control(rs.g_drift, t, x, upol[n], rs.controls_u)
        gen = GeneratorSpec(
            lambda t_, x_, y_, z_, a_, u=upol[n]: _by_control(rs.h_cost, t_, x_, u, rs.controls_u)
            + 0.5 * theta * a_ * z_ * z_, name="risk_sensitive_tilted")
        zn = discrete_z(lat, v[n + 1])
        ys = np.stack([_picard(lat, gen, _tilted_expectation(lat, v[n + 1], a, g), zn, a, t,
                               tol, kmax, n)[0] for a in grid])
        best = np.argmax(ys, axis=0)
        idx[n] = best
        v[n] = ys[best, np.arange(nn)]
        dk[:, n, :] = v[n] - ys
        z[n] = zn
    sol = TwoBsdeSolution(v=v, z=z, astar=grid[idx], astar_index=idx, per_control_k=dk,
                          grid=grid, lattice=lat, picard_iterations=np.ones(Nst, dtype=int),
                          max_residual=0.0)
    sol.min_gap = min_condition_gap(sol, q, lat)
    return sol


def solve_risk_sensitive(rs: RiskSensitiveSpec, p: ProblemSpec, lat: Lattice | None = None,
                         tol: float = DEFAULT_TOL, kmax: int = DEFAULT_KMAX) -> RiskSensitiveSolution:
    """Inner max over ``U`` inside the driver, outer max over the volatility grid.

    ``ustar[n, j]`` is the first maximiser of ``z*g + h`` at the node's
    ``z``, which is the same for every volatility control.
    """
    q = p.with_terminal(rs.psi)
    lat = lat if lat is not None else build_lattice(q, 200)
    sol = solve_2bsde(q, lat, tol, kmax, generator=control_generator(rs, q.controls))
    x = lat.nodes
    ustar = np.empty((lat.n_steps, lat.n_nodes))
    for n in range(lat.n_steps):
        _, ustar[n] = _inner_max(rs, n * lat.dt, x, sol.z[n])
    return RiskSensitiveSolution(sol, ustar, math.exp(rs.theta * sol.value))
