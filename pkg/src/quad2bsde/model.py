"""Problem descriptions: generators, terminal conditions and volatility bands.

Generators are vectorised callables ``f(t, x, y, z, a)`` acting on numpy
arrays (or scalars) that broadcast together.  The value equation they drive is

    Y_t = g(B_T) + int_t^T f(s, B_s, Y_s, Z_s, a_s) ds - int_t^T Z_s dB_s + K_T - K_t

with ``a_s`` the density of the quadratic variation of ``B``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .errors import ConfigurationError, EvaluationError

__all__ = [
    "GeneratorSpec",
    "ControlSet",
    "TerminalSpec",
    "ProblemSpec",
    "CheckResult",
    "ValidationReport",
    "GENERATOR_CATALOG",
    "TERMINAL_CATALOG",
    "make_generator",
    "make_terminal",
    "make_problem",
    "validate_problem",
    "conjugate_hamiltonian",
    "pde_hamiltonian",
    "truncate_generator",
]

GeneratorFn = Callable[..., "np.ndarray | float"]


@dataclass(frozen=True)
class GeneratorSpec:
    """A generator together with its declared growth and regularity constants.

    ``|f| <= alpha + beta*|y| + gamma_q/2 * a * z**2`` and
    ``|f(y) - f(y')| <= lip_y * |y - y'|`` are the audited inequalities;
    ``mu`` and ``phi_bound`` bound the local Lipschitz behaviour in ``z``.
    """

    f: GeneratorFn
    alpha: float = 0.0
    beta: float = 0.0
    gamma_q: float = 1.0
    lip_y: float = 0.0
    mu: float = 0.0
    phi_bound: float = 0.0
    depends_on_y: bool = False
    depends_on_x: bool = False
    affine_in_a: bool = True
    name: str = "custom"
    params: dict = field(default_factory=dict, compare=False)
    lip_z: float | None = None

    def __post_init__(self):
        for attr in ("alpha", "beta", "lip_y", "mu", "phi_bound"):
            if not getattr(self, attr) >= 0:
                raise ConfigurationError(f"generator constant {attr} must be >= 0")
        if not self.gamma_q > 0:
            raise ConfigurationError("generator constant gamma_q must be > 0")

    def __call__(self, t, x, y, z, a):
        return self.f(t, x, y, z, a)

    def negated(self) -> "GeneratorSpec":
        """Generator with ``f -> -f``; same constants."""
        f = self.f
        return replace(self, f=lambda t, x, y, z, a: -f(t, x, y, z, a),
                       name=f"neg({self.name})")


@dataclass(frozen=True)
class ControlSet:
    """Volatility band ``[a_low, a_high]`` and the finite grid used for sups."""

    a_low: float
    a_high: float
    grid: tuple = ()

    def __post_init__(self):
        if not self.a_low > 0:
            raise ConfigurationError("a_low must be > 0")
        if not self.a_high >= self.a_low:
            raise ConfigurationError("a_high must be >= a_low")
        grid = tuple(float(a) for a in (self.grid or (self.a_low, self.a_high)))
        if self.a_high == self.a_low:
            grid = (float(self.a_low),)
        object.__setattr__(self, "grid", grid)
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigurationError("control grid must be strictly increasing")
        if grid[0] != self.a_low or grid[-1] != self.a_high:
            raise ConfigurationError("control grid must contain both band endpoints")

    @classmethod
    def from_band(cls, a_low, a_high, n_points=2):
        if n_points < 2 or a_low == a_high:
            return cls(a_low, a_high)
        grid = np.linspace(a_low, a_high, int(n_points))
        grid[0], grid[-1] = a_low, a_high
        return cls(a_low, a_high, tuple(grid))

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.grid, dtype=float)

    def contains(self, a, rtol=1e-12) -> bool:
        a = np.asarray(a, dtype=float)
        slack = rtol * max(1.0, self.a_high)
        return bool(np.all((a >= self.a_low - slack) & (a <= self.a_high + slack)))

    def superset(self, extra) -> "ControlSet":
        grid = sorted(set(self.grid) | {float(a) for a in extra})
        return ControlSet(grid[0], grid[-1], tuple(grid))


@dataclass(frozen=True)
class TerminalSpec:
    g: Callable
    bound: float
    name: str = "custom"
    params: dict = field(default_factory=dict, compare=False)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.asarray(self.g(x), dtype=float), x.shape).copy()

    def shifted(self, m: float) -> "TerminalSpec":
        g = self.g
        return TerminalSpec(lambda x: g(x) + m, self.bound + abs(m), f"{self.name}+{m}", dict(self.params))

    def scaled(self, lam: float) -> "TerminalSpec":
        g = self.g
        return TerminalSpec(lambda x: lam * g(x), abs(lam) * self.bound, f"{lam}*{self.name}", dict(self.params))


@dataclass(frozen=True)
class ProblemSpec:
    T: float
    x0: float
    generator: GeneratorSpec
    terminal: TerminalSpec
    controls: ControlSet

    def __post_init__(self):
        if not self.T > 0:
            raise ConfigurationError("horizon T must be > 0")

    def with_generator(self, gen: GeneratorSpec) -> "ProblemSpec":
        return replace(self, generator=gen)

    def with_terminal(self, term: TerminalSpec) -> "ProblemSpec":
        return replace(self, terminal=term)

    def with_controls(self, controls: ControlSet) -> "ProblemSpec":
        return replace(self, controls=controls)


# --------------------------------------------------------------------------
# catalogs


def _zero(gamma=1.0, **_):
    return GeneratorSpec(lambda t, x, y, z, a: 0.0 * (z * a), gamma_q=gamma,
                         name="zero", params={"gamma": gamma})


def _linear_z(controls, b=0.0, r=0.0, c=0.0, gamma=1.0):
    # |b z| <= gamma/2 a z^2 + b^2 / (2 gamma a_low)
    return GeneratorSpec(
        lambda t, x, y, z, a: b * z - r * y + c + 0.0 * a,
        alpha=abs(c) + b * b / (2.0 * gamma * controls.a_low),
        beta=abs(r), gamma_q=gamma, lip_y=abs(r),
        phi_bound=abs(b) / math.sqrt(controls.a_low),
        depends_on_y=r != 0, name="linear_z",
        params={"b": b, "r": r, "c": c, "gamma": gamma},
        lip_z=abs(b),
    )


def _purely_quadratic(gamma=1.0, **_):
    return GeneratorSpec(
        lambda t, x, y, z, a: 0.5 * gamma * a * z * z,
        gamma_q=gamma, mu=0.5 * gamma, name="purely_quadratic",
        params={"gamma": gamma},
    )


def _quadratic_plus_linear(controls, gamma=1.0, b=0.0, r=0.0, c=0.0):
    return GeneratorSpec(
        lambda t, x, y, z, a: 0.5 * gamma * a * z * z + b * z - r * y + c,
        alpha=abs(c) + b * b / (2.0 * controls.a_low),
        beta=abs(r), gamma_q=gamma + 1.0, lip_y=abs(r), mu=0.5 * gamma,
        phi_bound=abs(b) / math.sqrt(controls.a_low),
        depends_on_y=r != 0, name="quadratic_plus_linear",
        params={"gamma": gamma, "b": b, "r": r, "c": c},
    )


def _risk_sensitive_inner(controls, theta=1.0, drift=(0.0,), cost=(0.0,)):
    drift = np.asarray(drift, dtype=float)
    cost = np.asarray(cost, dtype=float)
    if drift.shape != cost.shape or drift.size == 0:
        raise ConfigurationError("drift and cost need one entry per control in U")
    g_max = float(np.max(np.abs(drift)))
    h_max = float(np.max(np.abs(cost)))

    def f(t, x, y, z, a):
        z = np.asarray(z, dtype=float)
        inner = np.max(z[..., None] * drift + cost, axis=-1)
        return inner + 0.5 * theta * a * z * z

    return GeneratorSpec(
        f, alpha=h_max + g_max ** 2 / (2.0 * controls.a_low), gamma_q=theta + 1.0,
        mu=0.5 * theta, phi_bound=g_max / math.sqrt(controls.a_low),
        name="risk_sensitive_inner",
        params={"theta": theta, "drift": drift.tolist(), "cost": cost.tolist()},
    )


GENERATOR_CATALOG = {
    "zero": _zero,
    "linear_z": _linear_z,
    "purely_quadratic": _purely_quadratic,
    "quadratic_plus_linear": _quadratic_plus_linear,
    "risk_sensitive_inner": _risk_sensitive_inner,
}


def make_generator(name: str, controls: ControlSet, **params) -> GeneratorSpec:
    """Build a catalog generator; constants are derived from ``params`` and the band."""
    try:
        factory = GENERATOR_CATALOG[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown generator {name!r}; choose one of {sorted(GENERATOR_CATALOG)}"
        ) from None
    try:
        return factory(controls=controls, **params)
    except TypeError as exc:
        raise ConfigurationError(f"bad parameters for generator {name!r}: {exc}") from None


def _terminal_constant(c=0.0, **_):
    return TerminalSpec(lambda x: np.full_like(x, c, dtype=float), abs(c), "constant", {"c": c})


def _window(clip, center):
    lo, hi = center - clip, center + clip
    return lo, hi, max(abs(lo), abs(hi))


def _terminal_linear(clip, center=0.0, slope=1.0, shift=0.0):
    lo, hi, r = _window(clip, center)
    return TerminalSpec(lambda x: slope * np.clip(x, lo, hi) + shift,
                        abs(slope) * r + abs(shift), "linear",
                        {"slope": slope, "clip": clip, "shift": shift})


def _terminal_square(clip, center=0.0, scale=1.0, shift=0.0):
    lo, hi, r = _window(clip, center)
    return TerminalSpec(lambda x: scale * np.clip(x, lo, hi) ** 2 + shift,
                        abs(scale) * r ** 2 + abs(shift), "square",
                        {"scale": scale, "clip": clip, "shift": shift})


def _terminal_cubic(clip, center=0.0, scale=1.0, shift=0.0):
    lo, hi, r = _window(clip, center)
    return TerminalSpec(lambda x: scale * np.clip(x, lo, hi) ** 3 + shift,
                        abs(scale) * r ** 3 + abs(shift), "cubic",
                        {"scale": scale, "clip": clip, "shift": shift})


def _terminal_tanh(scale=1.0, width=1.0, shift=0.0, **_):
    return TerminalSpec(lambda x: scale * np.tanh(x / width) + shift, abs(scale) + abs(shift),
                        "tanh", {"scale": scale, "width": width, "shift": shift})


def _terminal_call(clip, center=0.0, strike=0.0, scale=1.0):
    lo, hi, r = _window(clip, center)
    return TerminalSpec(lambda x: scale * np.maximum(np.clip(x, lo, hi) - strike, 0.0),
                        abs(scale) * (r + abs(strike)), "call",
                        {"strike": strike, "scale": scale, "clip": clip})


TERMINAL_CATALOG = {
    "constant": _terminal_constant,
    "linear": _terminal_linear,
    "square": _terminal_square,
    "cubic": _terminal_cubic,
    "tanh": _terminal_tanh,
    "call": _terminal_call,
}


def make_terminal(name: str, clip: float | None = None, *, T=1.0, controls=None,
                  stddev_mult=4.0, center=0.0, **params) -> TerminalSpec:
    """Build a catalog terminal condition.

    Unbounded shapes are clipped to ``[center - clip, center + clip]``; ``clip``
    defaults to ``stddev_mult * sqrt(a_high * T)``, the half-range the lattice
    around ``center`` is guaranteed to cover.
    """
    try:
        factory = TERMINAL_CATALOG[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown terminal {name!r}; choose one of {sorted(TERMINAL_CATALOG)}"
        ) from None
    if clip is None:
        a_high = controls.a_high if controls is not None else 1.0
        clip = stddev_mult * math.sqrt(a_high * T)
    try:
        return factory(clip=float(clip), center=float(center), **params)
    except TypeError as exc:
        raise ConfigurationError(f"bad parameters for terminal {name!r}: {exc}") from None


def make_problem(generator="zero", terminal="constant", *, T=1.0, x0=0.0, a_low=0.25,
                 a_high=1.0, n_grid=2, generator_params=None, terminal_params=None,
                 stddev_mult=4.0) -> ProblemSpec:
    """Convenience constructor from catalog names."""
    controls = ControlSet.from_band(a_low, a_high, n_grid)
    gen = generator if isinstance(generator, GeneratorSpec) else make_generator(
        generator, controls, **(generator_params or {}))
    term = terminal if isinstance(terminal, TerminalSpec) else make_terminal(
        terminal, T=T, controls=controls, stddev_mult=stddev_mult, center=x0,
        **(terminal_params or {}))
    return ProblemSpec(T=T, x0=x0, generator=gen, terminal=term, controls=controls)


# --------------------------------------------------------------------------
# audit


@dataclass
class CheckResult:
    name: str
    passed: bool
    witness: dict | None = None
    detail: str = ""


@dataclass
class ValidationReport:
    checks: list

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def failures(self):
        return [c for c in self.checks if not c.passed]


def _first_violation(mask, **arrays):
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        return None
    i = idx[0]
    return {k: float(np.broadcast_to(v, mask.shape)[i]) for k, v in arrays.items()}


def validate_problem(p: ProblemSpec, n_samples=10_000, seed=0, z_max=10.0, y_max=None,
                     lattice=None) -> ValidationReport:
    """Randomised audit of the declared generator/terminal constants.

    Failures are reported with the first witnessing sample, never raised.
    """
    rng = np.random.default_rng(seed)
    gen, ctl = p.generator, p.controls
    checks = []

    checks.append(CheckResult("horizon", p.T > 0))
    grid = ctl.array
    checks.append(CheckResult(
        "controls", bool(grid.size and np.all(np.diff(grid) > 0)
                         and grid[0] == ctl.a_low and grid[-1] == ctl.a_high)))

    spread = 5.0 * math.sqrt(ctl.a_high * p.T)
    if y_max is None:
        y_max = 2.0 * (p.terminal.bound + gen.alpha * p.T) + 1.0
    t = rng.uniform(0.0, p.T, n_samples)
    x = p.x0 + rng.uniform(-spread, spread, n_samples)
    y = rng.uniform(-y_max, y_max, n_samples)
    y2 = rng.uniform(-y_max, y_max, n_samples)
    z = rng.uniform(-z_max, z_max, n_samples)
    z2 = rng.uniform(-z_max, z_max, n_samples)
    a = rng.uniform(ctl.a_low, ctl.a_high, n_samples)

    with np.errstate(all="ignore"):
        fv = np.broadcast_to(np.asarray(gen(t, x, y, z, a), dtype=float), t.shape)
        fy2 = np.broadcast_to(np.asarray(gen(t, x, y2, z, a), dtype=float), t.shape)
        fz2 = np.broadcast_to(np.asarray(gen(t, x, y, z2, a), dtype=float), t.shape)
    finite = np.isfinite(fv) & np.isfinite(fy2) & np.isfinite(fz2)
    checks.append(CheckResult("finite", bool(finite.all()),
                              _first_violation(~finite, t=t, x=x, y=y, z=z, a=a)))

    slack = 1e-9
    growth_rhs = gen.alpha + gen.beta * np.abs(y) + 0.5 * gen.gamma_q * a * z * z
    bad = ~(np.abs(fv) <= growth_rhs * (1 + slack) + slack)
    checks.append(CheckResult("growth", not bad.any(),
                              _first_violation(bad, t=t, x=x, y=y, z=z, a=a)))

    bad = ~(np.abs(fv - fy2) <= gen.lip_y * np.abs(y - y2) * (1 + slack) + slack)
    checks.append(CheckResult("lipschitz_y", not bad.any(),
                              _first_violation(bad, t=t, x=x, y=y, y2=y2, z=z, a=a)))

    sa = np.sqrt(a)
    loc_rhs = (gen.phi_bound + gen.mu * (sa * np.abs(z) + sa * np.abs(z2))) * sa * np.abs(z - z2)
    bad = ~(np.abs(fv - fz2) <= loc_rhs * (1 + slack) + slack)
    checks.append(CheckResult("local_lipschitz_z", not bad.any(),
                              _first_violation(bad, t=t, x=x, y=y, z=z, z2=z2, a=a)))

    xs = x if lattice is None else np.concatenate([x, lattice.nodes])
    gv = p.terminal(xs)
    bad = ~(np.abs(gv) <= p.terminal.bound * (1 + slack) + slack)
    checks.append(CheckResult("terminal_bound", not bad.any(), _first_violation(bad, x=xs)))

    if lattice is not None:
        ratio = ctl.a_high * lattice.dt / lattice.dx ** 2
        checks.append(CheckResult("cfl", ratio <= 1 + 1e-12, None if ratio <= 1 + 1e-12
                                  else {"ratio": ratio}))
    return ValidationReport(checks)


# --------------------------------------------------------------------------
# conjugation


def conjugate_hamiltonian(gen: GeneratorSpec, controls: ControlSet, t, x, y, p, M):
    """``max_a {a*M/2 - f(t, x, y, p, a)}`` over the control grid.

    Arguments broadcast; returns ``(value, argmax_a)`` with ties resolved to
    the smallest grid point.
    """
    grid = controls.array
    x, y, p, M = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (x, y, p, M)))
    best = None
    arg = None
    for a in grid:
        with np.errstate(all="ignore"):
            fv = np.asarray(gen(t, x, y, p, a), dtype=float)
        if not np.all(np.isfinite(fv)):
            bad = np.flatnonzero(~np.isfinite(np.broadcast_to(fv, x.shape)))[0]
            raise EvaluationError(
                f"non-finite generator value at t={t}, x={x.flat[bad]}, a={a}")
        cand = 0.5 * a * M - fv
        if best is None:
            best = np.array(cand, dtype=float, copy=True)
            arg = np.full(best.shape, a)
        else:
            upd = cand > best
            best = np.where(upd, cand, best)
            arg = np.where(upd, a, arg)
    if best.ndim == 0:
        return float(best), float(arg)
    return best, arg


def pde_hamiltonian(gen: GeneratorSpec, controls: ControlSet, t, x, y, p, M):
    """Hamiltonian of the PDE attached to ``Y = g + int f ds``.

    This is the conjugate of the driver ``-f``: ``max_a {a*M/2 + f}``.
    """
    return conjugate_hamiltonian(gen.negated(), controls, t, x, y, p, M)


def truncate_generator(gen: GeneratorSpec, n: float) -> GeneratorSpec:
    """Generator evaluated at ``z`` clipped to ``[-n, n]``."""
    if not n > 0:
        raise ConfigurationError("truncation level n must be > 0")
    f = gen.f

    def fn(t, x, y, z, a):
        return f(t, x, y, np.clip(z, -n, n), a)

    # |f(z) - f(z')| <= sqrt(a) (phi + 2 mu sqrt(a) n) |z - z'| once |z|, |z'| <= n;
    # lip_z records the modulus at a = 1
    lip = gen.phi_bound + gen.mu * 2.0 * n
    return replace(gen, f=fn, name=f"{gen.name}|n={n}",
                   params={**gen.params, "truncation": n}, lip_z=lip)
