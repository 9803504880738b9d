"""Post-hoc checks of computed solutions against the quantitative estimates.

BMO norms are conditional remaining energies ``E[sum a*z^2*dt | X_n = x_j]``
maximised over deterministic times and reachable nodes, a lower bound of
the supremum over all stopping times.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .lattice import Lattice, expectation, forward_marginals, policy_array
from .model import ProblemSpec

__all__ = [
    "BmoReport",
    "bmo_norm",
    "energy_inequality_check",
    "apriori_bound",
    "apriori_check",
    "z_bmo_bound",
    "z_bmo_bound_check",
    "doleans_moment_probe",
    "bmo_report",
    "diagnostic_rows",
]


@dataclass
class BmoReport:
    bmo_norm_sq: float
    per_measure: dict = field(default_factory=dict)
    energy_checks: list = field(default_factory=list)
    doleans_moments: list = field(default_factory=list)


def _fields(sol):
    y = getattr(sol, "v", None)
    if y is None:
        y = sol.y
    return y, sol.z


def _policy(sol, lat, policy):
    if policy is not None:
        return policy_array(lat, policy)
    return sol.astar if hasattr(sol, "astar") else sol.policy


def _energy_density(sol, lat, pol):
    return pol * sol.z ** 2 * lat.dt


def bmo_norm(sol, p: ProblemSpec | None = None, lat: Lattice | None = None, policy=None) -> float:
    lat = lat or sol.lattice
    pol = _policy(sol, lat, policy)
    dens = _energy_density(sol, lat, pol)
    marg = forward_marginals(lat, pol)
    c = np.zeros(lat.n_nodes)
    best = 0.0
    for n in range(lat.n_steps - 1, -1, -1):
        c = dens[n] + expectation(lat, c, pol[n])
        live = marg[n] > 0
        best = max(best, float(c[live].max()))
    return best


def _energy_moments(sol, lat, pol, p_exp):
    """``E[(sum a z^2 dt)^k]`` from ``x0`` for ``k = 0..p_exp``."""
    dens = _energy_density(sol, lat, pol)
    m = [np.ones(lat.n_nodes)] + [np.zeros(lat.n_nodes) for _ in range(p_exp)]
    for n in range(lat.n_steps - 1, -1, -1):
        cond = [expectation(lat, mk, pol[n]) for mk in m]
        q = dens[n]
        m = [sum(math.comb(k, i) * q ** (k - i) * cond[i] for i in range(k + 1))
             for k in range(p_exp + 1)]
    return [float(mk[lat.center]) for mk in m]


def energy_inequality_check(sol, p: ProblemSpec | None = None, lat: Lattice | None = None,
                            policy=None, p_exp: int = 1, bmo: float | None = None):
    """``(lhs, rhs, passed)`` for ``E[(int a z^2)^p] <= 2 p! (4 ||Z||^2_BMO)^p``.

    ``||Z||^2_BMO`` is the conditional remaining energy returned by
    :func:`bmo_norm` under the same policy.
    """
    if int(p_exp) != p_exp or p_exp < 1:
        raise ValueError("p_exp must be an integer >= 1")
    p_exp = int(p_exp)
    lat = lat or sol.lattice
    pol = _policy(sol, lat, policy)
    if bmo is None:
        bmo = bmo_norm(sol, p, lat, pol)
    lhs = _energy_moments(sol, lat, pol, p_exp)[p_exp]
    rhs = 2.0 * math.factorial(p_exp) * (4.0 * bmo) ** p_exp
    return lhs, rhs, lhs <= rhs * (1 + 1e-12)


def apriori_bound(p: ProblemSpec) -> float:
    gen, T = p.generator, p.T
    xi = p.terminal.bound
    if gen.beta == 0:
        return gen.alpha * T + xi
    e = math.exp(gen.beta * T)
    return gen.alpha * (e - 1) / gen.beta + e * xi


def apriori_check(sol, p: ProblemSpec):
    """``(bound, max_abs_y, passed)`` for ``sup|Y| <= alpha (e^{beta T}-1)/beta + e^{beta T} |xi|``."""
    y, _ = _fields(sol)
    bound = apriori_bound(p)
    m = float(np.abs(y).max())
    return bound, m, m <= bound + 1e-9


def z_bmo_bound(p: ProblemSpec, y_sup: float) -> float:
    gen = p.generator
    g = gen.gamma_q
    expo = 4 * g * y_sup
    if expo > 700:
        return math.inf
    return math.exp(expo) / g * (1 + 2 * g * p.T * (gen.alpha + gen.beta * y_sup))


def z_bmo_bound_check(sol, p: ProblemSpec, lat: Lattice | None = None):
    """``(bound, measured, passed)``; ``measured`` is the max BMO norm over the
    argmax measure and every constant grid control."""
    lat = lat or sol.lattice
    y, _ = _fields(sol)
    y_sup = float(np.abs(y).max())
    measured = max(bmo_norm(sol, p, lat, pol) for pol in _measures(sol, p).values())
    bound = z_bmo_bound(p, y_sup)
    return bound, measured, measured <= bound


def _measures(sol, p):
    out = {}
    if hasattr(sol, "astar"):
        out["astar"] = sol.astar
    else:
        out["policy"] = sol.policy
    for a in p.controls.grid:
        out[f"a={a:g}"] = float(a)
    return out


def doleans_moment_probe(z_field, p: ProblemSpec, lat: Lattice, policy, r: float) -> float:
    """``E[exp(r*sum z dB - r/2*sum a z^2 dt)]`` along the chain from ``x0``."""
    if not r > 1:
        raise ValueError("r must be > 1")
    pol = policy_array(lat, policy)
    z = np.broadcast_to(np.asarray(z_field, dtype=float), pol.shape)
    dt, dx = lat.dt, lat.dx
    qv = np.minimum(pol * dt / (2 * dx * dx), 0.5)
    m = np.ones(lat.n_nodes)
    for n in range(lat.n_steps - 1, -1, -1):
        q, zn = qv[n], z[n]
        eu = np.exp(r * zn * dx)
        ed = np.exp(-r * zn * dx)
        # the folded move does not displace the chain
        eu[-1] = 1.0
        ed[0] = 1.0
        mu = np.append(m[1:], m[-1])
        md = np.insert(m[:-1], 0, m[0])
        m = np.exp(-0.5 * r * zn * zn * pol[n] * dt) * (
            q * eu * mu + (1 - 2 * q) * m + q * ed * md)
    return float(m[lat.center])


def bmo_report(sol, p: ProblemSpec, lat: Lattice | None = None, p_list=(1, 2),
               r_list=(1.5, 2.0, 3.0)) -> BmoReport:
    lat = lat or sol.lattice
    per = {label: bmo_norm(sol, p, lat, pol) for label, pol in _measures(sol, p).items()}
    rep = BmoReport(bmo_norm_sq=max(per.values()), per_measure=per)
    main = next(iter(per))
    pol = _measures(sol, p)[main]
    for pe in p_list:
        lhs, rhs, ok = energy_inequality_check(sol, p, lat, pol, pe, bmo=per[main])
        rep.energy_checks.append((pe, lhs, rhs, ok))
    for r in r_list:
        rep.doleans_moments.append((r, doleans_moment_probe(sol.z, p, lat, pol, r)))
    return rep


def diagnostic_rows(sol, p: ProblemSpec, lat: Lattice | None = None) -> list:
    """Rows ``(check, parameters, lhs, rhs, pass)`` for the diagnostics CSV."""
    lat = lat or sol.lattice
    rows = []
    bound, m, ok = apriori_check(sol, p)
    rows.append(("apriori", "", m, bound, ok))
    zb, zm, ok = z_bmo_bound_check(sol, p, lat)
    rows.append(("z_bmo_bound", f"gamma_q={p.generator.gamma_q:g}", zm, zb, ok))
    rep = bmo_report(sol, p, lat)
    for label, val in rep.per_measure.items():
        rows.append(("bmo_norm", label, val, "", ""))
    for pe, lhs, rhs, ok in rep.energy_checks:
        rows.append(("energy_inequality", f"p={pe}", lhs, rhs, ok))
    for r, mom in rep.doleans_moments:
        rows.append(("doleans_moment", f"r={r:g}", mom, "", ""))
    if hasattr(sol, "min_gap"):
        rows.append(("min_condition_gap", "", sol.min_gap, 1e-9 * lat.n_steps,
                     sol.min_gap <= 1e-9 * lat.n_steps))
        kmin = float(sol.per_control_k.min())
        rows.append(("k_nonnegative", "", kmin, -1e-9, kmin >= -1e-9))
    return rows
