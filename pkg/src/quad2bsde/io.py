"""CSV writers.  Floats are written with 17 significant digits so reruns diff bit-exactly.

Column layouts:

=================  ==========================================
file               columns
=================  ==========================================
solution.csv       n, j, t, x, y, z
v.csv              n, j, t, x, v
z.csv              n, j, t, x, z, astar
dk.csv             a, n, j, dk
risk.csv           n, j, t, x, ystar, ustar, astar
pde.csv            t, x, v
distribution.csv   node, x, probability
diagnostics.csv    check, parameters, lhs, rhs, pass
convergence.csv    N, value, error
stationarity.csv   n, value, diff_from_untruncated
=================  ==========================================

``j`` is the signed node offset from ``x0``; ``z``/``astar`` rows stop at ``n = N-1``.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

__all__ = ["fmt", "write_rows", "write_node_field", "write_bsde_solution",
           "write_2bsde_solution", "write_per_control_k", "write_pde_solution",
           "write_distribution", "write_risk_solution"]


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_rows(path, header, rows):
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def _node_rows(lat, *fields, n_rows=None):
    n_rows = fields[0].shape[0] if n_rows is None else n_rows
    x = lat.nodes
    t = lat.times
    offsets = np.arange(lat.n_nodes) - lat.center
    for n in range(n_rows):
        for k in range(lat.n_nodes):
            yield (n, int(offsets[k]), t[n], x[k]) + tuple(f[n, k] for f in fields)


def write_node_field(path, lat, names, *fields):
    return write_rows(path, ["n", "j", "t", "x", *names], _node_rows(lat, *fields))


def write_bsde_solution(path, sol):
    lat = sol.lattice
    z = np.vstack([sol.z, np.full((1, lat.n_nodes), np.nan)])
    return write_node_field(path, lat, ["y", "z"], sol.y, z)


def write_2bsde_solution(out_dir, sol):
    out_dir = Path(out_dir)
    lat = sol.lattice
    write_node_field(out_dir / "v.csv", lat, ["v"], sol.v)
    write_node_field(out_dir / "z.csv", lat, ["z", "astar"], sol.z, sol.astar)
    return out_dir / "v.csv", out_dir / "z.csv"


def write_per_control_k(path, sol):
    lat = sol.lattice
    offsets = np.arange(lat.n_nodes) - lat.center

    def rows():
        for i, a in enumerate(sol.grid):
            for n in range(lat.n_steps):
                for k in range(lat.n_nodes):
                    yield (a, n, int(offsets[k]), sol.per_control_k[i, n, k])

    return write_rows(path, ["a", "n", "j", "dk"], rows())


def write_risk_solution(path, rsol):
    sol = rsol.ystar
    lat = sol.lattice
    return write_rows(path, ["n", "j", "t", "x", "ystar", "ustar", "astar"],
                      _node_rows(lat, sol.v, rsol.ustar, sol.astar, n_rows=lat.n_steps))


def write_pde_solution(path, pde):
    def rows():
        for n, t in enumerate(pde.t):
            for k, x in enumerate(pde.x):
                yield (t, x, pde.v[n, k])

    return write_rows(path, ["t", "x", "v"], rows())


def write_distribution(path, lat, probs):
    offsets = np.arange(lat.n_nodes) - lat.center
    return write_rows(path, ["node", "x", "probability"],
                      zip(offsets.tolist(), lat.nodes, probs))
