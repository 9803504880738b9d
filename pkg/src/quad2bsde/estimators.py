"""scikit-learn style wrappers.

There is no training data: ``fit`` solves the configured problem, and
``predict``/``transform`` evaluate the solved fields at query points
``X = [[t, x], ...]``.  Hyper-parameters follow the ``BaseEstimator``
convention, so ``get_params``/``set_params``/``clone`` work as usual.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .lattice import build_lattice
from .model import make_problem
from .pde import solve_fnpde
from .qbsde import DEFAULT_KMAX, DEFAULT_TOL, solve_bsde
from .risk import RiskSensitiveSpec, solve_risk_sensitive
from .twobsde import solve_2bsde

__all__ = ["BSDESolver", "TwoBSDESolver", "PDESolver", "RiskSensitiveController"]


class _ProblemMixin:
    def _problem(self):
        return make_problem(self.generator, self.terminal, T=self.T, x0=self.x0,
                            a_low=self.a_low, a_high=self.a_high, n_grid=self.n_grid,
                            generator_params=self.generator_params,
                            terminal_params=self.terminal_params, stddev_mult=self.stddev_mult)

    def _check_points(self, X):
        X = check_array(X, ensure_2d=True, dtype=float)
        if X.shape[1] != 2:
            raise ValueError(f"X must have columns (t, x); got {X.shape[1]} columns")
        T = self.problem_.T
        if np.any(X[:, 0] < 0) or np.any(X[:, 0] > T):
            raise ValueError(f"query times must lie in [0, {T}]")
        return X

    def _time_index(self, t, dt, last):
        # the field at step n covers [t_n, t_{n+1})
        return np.minimum(np.floor(t / dt + 1e-9).astype(int), last)

    def _interp(self, field, t, x, dt, xs):
        idx = self._time_index(t, dt, field.shape[0] - 1)
        return np.array([np.interp(xi, xs, field[i]) for i, xi in zip(idx, x)])


class _LatticeEstimator(_ProblemMixin, TransformerMixin, BaseEstimator):
    def __init__(self, generator="zero", terminal="square", *, T=1.0, x0=0.0, a_low=0.25,
                 a_high=1.0, n_grid=2, generator_params=None, terminal_params=None,
                 stddev_mult=4.0, N=200, tol=DEFAULT_TOL, kmax=DEFAULT_KMAX):
        self.generator = generator
        self.terminal = terminal
        self.T = T
        self.x0 = x0
        self.a_low = a_low
        self.a_high = a_high
        self.n_grid = n_grid
        self.generator_params = generator_params
        self.terminal_params = terminal_params
        self.stddev_mult = stddev_mult
        self.N = N
        self.tol = tol
        self.kmax = kmax

    def _values(self):
        return self.solution_.v

    def _setup(self):
        self.problem_ = self._problem()
        self.lattice_ = build_lattice(self.problem_, self.N, self.stddev_mult)

    def predict(self, X):
        """Value ``Y`` at each query ``(t, x)``, linear in ``x`` on the solved lattice."""
        check_is_fitted(self, "solution_")
        X = self._check_points(X)
        lat = self.lattice_
        return self._interp(self._values(), X[:, 0], X[:, 1], lat.dt, lat.nodes)

    def transform(self, X):
        """Columns ``[y, z, a*]`` at each query point."""
        check_is_fitted(self, "solution_")
        X = self._check_points(X)
        lat = self.lattice_
        t, x = X[:, 0], X[:, 1]
        cols = [self._interp(self._values(), t, x, lat.dt, lat.nodes),
                self._interp(self.solution_.z, t, x, lat.dt, lat.nodes),
                self._interp(self._policy_field(), t, x, lat.dt, lat.nodes)]
        return np.column_stack(cols)


class TwoBSDESolver(_LatticeEstimator):
    """Lattice 2BSDE over the volatility grid; ``value_`` is ``v(0, x0)``."""

    def fit(self, X=None, y=None):
        self._setup()
        self.solution_ = solve_2bsde(self.problem_, self.lattice_, self.tol, self.kmax)
        self.value_ = self.solution_.value
        return self

    def _policy_field(self):
        return self.solution_.astar


class BSDESolver(_LatticeEstimator):
    """Single-measure BSDE under a fixed volatility ``policy`` (default ``a_high``)."""

    def __init__(self, generator="zero", terminal="square", *, policy=None, T=1.0, x0=0.0,
                 a_low=0.25, a_high=1.0, n_grid=2, generator_params=None, terminal_params=None,
                 stddev_mult=4.0, N=200, tol=DEFAULT_TOL, kmax=DEFAULT_KMAX):
        super().__init__(generator, terminal, T=T, x0=x0, a_low=a_low, a_high=a_high,
                         n_grid=n_grid, generator_params=generator_params,
                         terminal_params=terminal_params, stddev_mult=stddev_mult, N=N,
                         tol=tol, kmax=kmax)
        self.policy = policy

    def fit(self, X=None, y=None):
        self._setup()
        pol = self.a_high if self.policy is None else self.policy
        self.solution_ = solve_bsde(self.problem_, self.lattice_, pol, self.tol, self.kmax)
        self.value_ = self.solution_.value
        return self

    def _values(self):
        return self.solution_.y

    def _policy_field(self):
        return self.solution_.policy


class RiskSensitiveController(_LatticeEstimator):
    """Robust risk-sensitive control with constant drifts and costs per control.

    ``transform`` returns ``[y*, z, u*]``; ``J_`` is the optimal criterion.
    """

    def __init__(self, terminal="linear", *, theta=1.0, controls_u=(0.0, 1.0),
                 drift=(0.0, 0.0), cost=(0.0, 0.0), T=1.0, x0=0.0, a_low=0.25, a_high=1.0,
                 n_grid=2, terminal_params=None, stddev_mult=4.0, N=200, tol=DEFAULT_TOL,
                 kmax=DEFAULT_KMAX):
        self.terminal = terminal
        self.T = T
        self.x0 = x0
        self.a_low = a_low
        self.a_high = a_high
        self.n_grid = n_grid
        self.terminal_params = terminal_params
        self.stddev_mult = stddev_mult
        self.N = N
        self.tol = tol
        self.kmax = kmax
        self.theta = theta
        self.controls_u = controls_u
        self.drift = drift
        self.cost = cost

    def _problem(self):
        # the driver is built from the controls, not from the catalog
        return make_problem("zero", self.terminal, T=self.T, x0=self.x0, a_low=self.a_low,
                            a_high=self.a_high, n_grid=self.n_grid,
                            terminal_params=self.terminal_params, stddev_mult=self.stddev_mult)

    def fit(self, X=None, y=None):
        self._setup()
        rs = RiskSensitiveSpec.from_constants(self.theta, list(self.controls_u), list(self.drift),
                                              list(self.cost), self.problem_.terminal)
        self.result_ = solve_risk_sensitive(rs, self.problem_, self.lattice_, self.tol, self.kmax)
        self.solution_ = self.result_.ystar
        self.value_ = self.result_.value
        self.J_ = self.result_.J
        return self

    def _policy_field(self):
        return self.result_.ustar


class PDESolver(_ProblemMixin, BaseEstimator):
    """Explicit finite-difference solver; ``dt_p``/``dx_p`` default to twice the
    lattice resolution in time at CFL ratio 0.8."""

    def __init__(self, generator="zero", terminal="square", *, T=1.0, x0=0.0, a_low=0.25,
                 a_high=1.0, n_grid=2, generator_params=None, terminal_params=None,
                 stddev_mult=4.0, dt_p=None, dx_p=None):
        self.generator = generator
        self.terminal = terminal
        self.T = T
        self.x0 = x0
        self.a_low = a_low
        self.a_high = a_high
        self.n_grid = n_grid
        self.generator_params = generator_params
        self.terminal_params = terminal_params
        self.stddev_mult = stddev_mult
        self.dt_p = dt_p
        self.dx_p = dx_p

    def fit(self, X=None, y=None):
        self.problem_ = self._problem()
        dt_p = self.dt_p if self.dt_p is not None else self.T / 400
        dx_p = self.dx_p if self.dx_p is not None else np.sqrt(self.a_high * dt_p / 0.8)
        self.solution_ = solve_fnpde(self.problem_, dt_p, dx_p, stddev_mult=self.stddev_mult)
        self.value_ = self.solution_.value_at(self.x0)
        return self

    def predict(self, X):
        check_is_fitted(self, "solution_")
        X = self._check_points(X)
        sol = self.solution_
        return self._interp(sol.v, X[:, 0], X[:, 1], sol.t[1] - sol.t[0], sol.x)
