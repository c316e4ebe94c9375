"""Boundary-layer base flow: the heat equation with a Robin wall condition.

    dU/dt = nu d^2U/dY^2,   1/2 dU/dY(0) = A U(0),   dU/dY(Ymax) = 0.

The wall condition is folded into the first row through a ghost node,
``U_{-1} = U_1 - 4 h A U_0``, and the far-field Neumann condition through
``U_N = U_{N-2}``.  Crank-Nicolson in time.

With trapezoid weights ``W`` the matrix ``W L`` is symmetric, so the scheme
satisfies the exact discrete energy identity

    |U^{n+1}|_W^2 - |U^n|_W^2 = -2 dt nu (sum (dUbar)^2 / h + 2 A Ubar_0^2)

for ``Ubar = (U^n + U^{n+1}) / 2``.
"""

import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from .errors import WindowTooLong
from .profiles import GridSpec, ShearProfile
from .tridiag import TridiagonalFactor, tridiag_matvec

DEFAULT_YMAX = 50.0
MAX_STEPS = 1_000_000


def robin_laplacian(n, h, A):
    """``(lower, diag, upper)`` of the second-difference matrix with both closures."""
    lower = np.full(n - 1, 1.0 / h ** 2)
    upper = np.full(n - 1, 1.0 / h ** 2)
    diag = np.full(n, -2.0 / h ** 2)
    upper[0] = 2.0 / h ** 2
    diag[0] = -(2.0 + 4.0 * h * A) / h ** 2
    lower[-1] = 2.0 / h ** 2
    return lower, diag, upper


def trapezoid_weights(n, h):
    w = np.full(n, h)
    w[0] = w[-1] = h / 2
    return w


@lru_cache(maxsize=64)
def _cn_factor(n, h, A, nu_dt):
    lo, d, up = robin_laplacian(n, h, A)
    s = 0.5 * nu_dt
    fac = TridiagonalFactor(-s * lo, 1.0 - s * d, -s * up)
    return fac, (s * lo, 1.0 + s * d, s * up)


@dataclass(frozen=True, eq=False)
class BaseFlowState:
    t: float
    grid: GridSpec
    ubar: np.ndarray
    robin_coef: float
    nu: float = 1.0

    @property
    def Y(self):
        return self.grid.y

    def energy(self):
        return float(np.sum(trapezoid_weights(self.grid.n, self.grid.h) * self.ubar ** 2))

    def to_csv(self, path):
        np.savetxt(path, np.column_stack([self.Y, self.ubar]), delimiter=",",
                   header="Y,ubar", comments="", fmt="%.17e")


def initial_state(profile: ShearProfile, robin_coef, grid=None, nu=1.0):
    """Base-flow state sampled from ``profile`` on ``grid`` (default: ``[0, 50]``)."""
    if grid is None:
        grid = GridSpec(DEFAULT_YMAX, profile.n)
    return BaseFlowState(0.0, grid, profile.evaluate(grid.y, 0).astype(float), robin_coef, nu)


def step_crank_nicolson(state: BaseFlowState, dt: float) -> BaseFlowState:
    """One Crank-Nicolson step of the Robin/Neumann heat problem."""
    if not dt > 0:
        raise ValueError("dt must be > 0")
    g = state.grid
    fac, (el, ed, eu) = _cn_factor(g.n, g.h, float(state.robin_coef), float(state.nu * dt))
    rhs = tridiag_matvec(el, ed, eu, state.ubar)
    return replace(state, t=state.t + dt, ubar=fac.solve(rhs))


def evolve(state: BaseFlowState, t_end: float, dt: float, callback=None):
    nsteps = int(math.ceil((t_end - state.t) / dt - 1e-9))
    if nsteps > MAX_STEPS:
        raise WindowTooLong(f"{nsteps} steps exceed the budget of {MAX_STEPS}")
    for _ in range(nsteps):
        state = step_crank_nicolson(state, dt)
        if callback is not None:
            callback(state)
    return state


def dissipation(u_old, u_new, grid, robin_coef, nu, dt):
    """Energy removed by one step according to the discrete identity."""
    ub = 0.5 * (u_old + u_new)
    return float(2 * dt * nu * (np.sum(np.diff(ub) ** 2) / grid.h + 2 * robin_coef * ub[0] ** 2))


def robin_residual(state: BaseFlowState):
    """``|1/2 U'(0) - A U(0)|`` with a one-sided second-order derivative."""
    u, h = state.ubar, state.grid.h
    du0 = (-3 * u[0] + 4 * u[1] - u[2]) / (2 * h)
    return abs(0.5 * du0 - state.robin_coef * u[0])


def h1_norm(f, grid):
    df = np.gradient(f, grid.h, edge_order=2)
    return float(np.sqrt(np.trapezoid(f * f, dx=grid.h) + np.trapezoid(df * df, dx=grid.h)))


def l2_norm(f, grid):
    return float(np.sqrt(np.trapezoid(f * f, dx=grid.h)))


@dataclass
class DriftSeries:
    eps: float
    t: np.ndarray
    drift_h1: np.ndarray
    drift_l2: np.ndarray

    @property
    def max_drift(self):
        return float(np.max(self.drift_h1))

    def to_csv(self, path):
        np.savetxt(path, np.column_stack([self.t, self.drift_h1, self.drift_l2]),
                   delimiter=",", header="t,drift_h1,drift_l2", comments="", fmt="%.17e")


def baseflow_drift(profile: ShearProfile, eps: float, robin_coef: float, t_max=None,
                   grid=None, n_steps=400, max_steps=MAX_STEPS) -> DriftSeries:
    """``eps**(-1/8) (U(sqrt(eps) t) - u_s)`` over ``t`` in ``[0, t_max]``.

    ``t_max`` defaults to ``eps**(-1/32)``.  ``U`` solves the unit-diffusivity
    problem started from the profile.
    """
    if t_max is None:
        t_max = eps ** (-1.0 / 32.0)
    if n_steps > max_steps:
        raise WindowTooLong(f"{n_steps} steps exceed the budget of {max_steps}")
    state = initial_state(profile, robin_coef, grid)
    us = state.ubar.copy()
    tau_end = math.sqrt(eps) * t_max
    dt = tau_end / n_steps
    scale = eps ** (-1.0 / 8.0)
    ts, dh1, dl2 = [0.0], [0.0], [0.0]
    for i in range(1, n_steps + 1):
        state = step_crank_nicolson(state, dt)
        d = scale * (state.ubar - us)
        ts.append(i * dt / math.sqrt(eps))
        dh1.append(h1_norm(d, state.grid))
        dl2.append(l2_norm(d, state.grid))
    return DriftSeries(eps, np.array(ts), np.array(dh1), np.array(dl2))
