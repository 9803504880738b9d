"""Controlled trinomial approximation of the canonical process.

Nodes are ``x_j = x0 + j*dx`` for ``j = -J..J`` (stored at array index
``j + J``).  From node ``j`` the chain moves to ``j +- 1`` with probability
``a*dt/(2*dx**2)`` each and stays with the remaining mass.  At ``j = +-J`` the
outward move is folded back onto the boundary node.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DomainError
from .model import ProblemSpec

__all__ = [
    "Lattice",
    "TransitionKernel",
    "build_lattice",
    "kernel_for",
    "policy_array",
    "expectation",
    "discrete_z",
    "terminal_distribution",
    "forward_marginals",
    "reachable_mask",
]

_CFL_SLACK = 1e-12


@dataclass(frozen=True)
class Lattice:
    n_steps: int
    T: float
    dx: float
    half_width: int
    x0: float
    a_low: float
    a_high: float

    def __post_init__(self):
        if self.n_steps < 1 or self.half_width < 1 or not self.dx > 0 or not self.T > 0:
            raise ConfigurationError("lattice needs n_steps >= 1, half_width >= 1, dx > 0, T > 0")
        if self.cfl_ratio > 1 + _CFL_SLACK:
            raise ConfigurationError(
                f"CFL violated: a_high*dt/dx^2 = {self.cfl_ratio:.6g} > 1; refine dx or coarsen dt")

    @property
    def dt(self) -> float:
        return self.T / self.n_steps

    @property
    def n_nodes(self) -> int:
        return 2 * self.half_width + 1

    @property
    def center(self) -> int:
        return self.half_width

    @property
    def nodes(self) -> np.ndarray:
        j = np.arange(-self.half_width, self.half_width + 1)
        return self.x0 + j * self.dx

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    @property
    def cfl_ratio(self) -> float:
        return self.a_high * self.dt / self.dx ** 2

    def check_band(self, a):
        a = np.asarray(a, dtype=float)
        slack = _CFL_SLACK * max(1.0, self.a_high)
        if np.any(a < self.a_low - slack) or np.any(a > self.a_high + slack):
            raise DomainError(
                f"control value(s) outside the band [{self.a_low}, {self.a_high}]: "
                f"min={a.min()}, max={a.max()}")


@dataclass(frozen=True)
class TransitionKernel:
    a: float
    p_plus: float
    p_zero: float
    p_minus: float


def build_lattice(p: ProblemSpec, N: int, stddev_mult: float = 4.0) -> Lattice:
    """Lattice with ``dt = T/N`` and ``dx = sqrt(a_high*dt)`` (CFL ratio 1)."""
    if int(N) != N or N < 1:
        raise ConfigurationError(f"number of steps must be an integer >= 1, got {N}")
    N = int(N)
    a_high = p.controls.a_high
    dt = p.T / N
    # c = 1 already satisfies a_high*dt <= dx^2; the smallest admissible c.
    dx = math.sqrt(a_high * dt)
    if not dx > 0 or not math.isfinite(dx) or dx < 1e-150:
        raise ConfigurationError(f"N={N} makes dx underflow; use fewer steps")
    if a_high * dt > dx * dx * (1 + _CFL_SLACK):
        dx = math.nextafter(dx, math.inf)
    span = stddev_mult * math.sqrt(a_high * p.T) / dx
    J = max(1, math.ceil(span - 1e-9))
    return Lattice(n_steps=N, T=p.T, dx=dx, half_width=J, x0=p.x0,
                   a_low=p.controls.a_low, a_high=a_high)


def _move_prob(lat: Lattice, a):
    """Probability of each of the two moves, and of staying."""
    q = np.minimum(np.asarray(a, dtype=float) * lat.dt / (2.0 * lat.dx ** 2), 0.5)
    stay = 1.0 - 2.0 * q
    return q, stay


def kernel_for(lat: Lattice, a: float) -> TransitionKernel:
    lat.check_band(a)
    q, stay = _move_prob(lat, float(a))
    return TransitionKernel(float(a), float(q), float(stay), float(q))


def policy_array(lat: Lattice, policy, n_steps=None) -> np.ndarray:
    """Normalise a control field to an array of shape ``(N, n_nodes)``.

    Accepts a scalar, an array broadcastable to ``(N, n_nodes)``, or a
    callable ``policy(n, x_nodes) -> values``.
    """
    N = lat.n_steps if n_steps is None else n_steps
    shape = (N, lat.n_nodes)
    if callable(policy):
        x = lat.nodes
        arr = np.stack([np.broadcast_to(np.asarray(policy(n, x), dtype=float), x.shape)
                        for n in range(N)])
    else:
        raw = np.asarray(policy, dtype=float)
        try:
            arr = np.broadcast_to(raw, shape).copy()
        except ValueError:
            raise ConfigurationError(f"policy has shape {raw.shape}, expected {shape}") from None
    if arr.shape != shape:
        raise ConfigurationError(f"policy has shape {arr.shape}, expected {shape}")
    return arr


def _shift(v):
    """Neighbour values with the boundary move folded back: (up, down)."""
    up = np.empty_like(v)
    dn = np.empty_like(v)
    up[..., :-1] = v[..., 1:]
    up[..., -1] = v[..., -1]
    dn[..., 1:] = v[..., :-1]
    dn[..., 0] = v[..., 0]
    return up, dn


def expectation(lat: Lattice, v_next: np.ndarray, a) -> np.ndarray:
    """One-step conditional expectation ``E_a[v_next](j)`` for every node.

    ``a`` is a scalar or a per-node vector.
    """
    q, stay = _move_prob(lat, a)
    up, dn = _shift(v_next)
    return q * up + stay * v_next + q * dn


def discrete_z(lat: Lattice, v_next: np.ndarray) -> np.ndarray:
    """``E[v_next * dB] / (a*dt)`` with the folded boundary.

    In the interior this is the central difference and does not depend on
    ``a``; at the two boundary nodes the folded kernel gives the one-sided
    difference towards the interior.
    """
    z = np.empty_like(v_next)
    z[..., 1:-1] = (v_next[..., 2:] - v_next[..., :-2]) / (2.0 * lat.dx)
    z[..., 0] = (v_next[..., 1] - v_next[..., 0]) / lat.dx
    z[..., -1] = (v_next[..., -1] - v_next[..., -2]) / lat.dx
    return z


def _push(lat: Lattice, mass: np.ndarray, a) -> np.ndarray:
    q, stay = _move_prob(lat, a)
    q = np.broadcast_to(q, mass.shape)
    out = stay * mass
    out[1:] += (q * mass)[:-1]
    out[:-1] += (q * mass)[1:]
    out[-1] += q[-1] * mass[-1]
    out[0] += q[0] * mass[0]
    return out


def forward_marginals(lat: Lattice, policy) -> np.ndarray:
    """Marginal laws of the chain at every step, shape ``(N+1, n_nodes)``."""
    pol = policy_array(lat, policy)
    lat.check_band(pol)
    out = np.zeros((lat.n_steps + 1, lat.n_nodes))
    out[0, lat.center] = 1.0
    for n in range(lat.n_steps):
        out[n + 1] = _push(lat, out[n], pol[n])
    return out


def terminal_distribution(lat: Lattice, policy) -> np.ndarray:
    """Law of the chain at step ``N`` started from ``x0``."""
    return forward_marginals(lat, policy)[-1]


def reachable_mask(lat: Lattice) -> np.ndarray:
    """Nodes ``(n, j)`` that the chain from ``x0`` can visit for some band control."""
    n = np.arange(lat.n_steps + 1)[:, None]
    j = np.abs(np.arange(lat.n_nodes) - lat.center)[None, :]
    return j <= n
