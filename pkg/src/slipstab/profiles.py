"""Shear profiles on the half-line, Navier-slip matching and admissibility.

The explicit family used throughout is ``u(y) = tanh(y - delta) + zeta``.
Its only inflection point is ``y0 = delta`` with value ``u0 = zeta``.
"""

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import DomainTooSmall, NonRemovableSingularity, ZeroSlip

DEFAULT_N = 4001
DEFAULT_TAIL = 25.0
MIN_TAIL = 10.0
SINGULAR_TOL = 1e-8


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid of ``n`` nodes on ``[0, ymax]``."""

    ymax: float
    n: int = DEFAULT_N

    def __post_init__(self):
        if self.ymax <= 0:
            raise ValueError(f"ymax must be positive, got {self.ymax}")
        if self.n < 5:
            raise ValueError(f"need at least 5 nodes, got {self.n}")

    @property
    def y(self):
        return np.linspace(0.0, self.ymax, self.n)

    @property
    def h(self):
        return self.ymax / (self.n - 1)

    def refined(self):
        """Grid with half the spacing on the same interval."""
        return GridSpec(self.ymax, 2 * self.n - 1)


@dataclass(frozen=True)
class TanhProfileParams:
    delta: float
    zeta: float = 0.0

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError(f"delta must be > 0, got {self.delta}")


@dataclass(frozen=True)
class NavierParams:
    """Wall law ``1/2 du1/dy = a * eps**(-beta_exp) * u1`` with viscosity ``eps``."""

    a: float
    beta_exp: float = 0.5
    eps: float = 1.0

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError(f"eps must be > 0, got {self.eps}")
        if self.beta_exp < 0:
            raise ValueError(f"beta_exp must be >= 0, got {self.beta_exp}")

    @property
    def wall_coef(self):
        return self.a * self.eps ** (-self.beta_exp)


@dataclass(frozen=True, eq=False)
class ShearProfile:
    """Sampled base flow together with its first two derivatives.

    ``funcs`` optionally holds callables ``(u, u', u'')`` for evaluating the
    profile off the grid; without them a cubic spline of the samples is used.
    """

    y: np.ndarray
    u: np.ndarray
    u1: np.ndarray
    u2: np.ndarray
    y0: Optional[float] = None
    u0: Optional[float] = None
    params: Optional[TanhProfileParams] = None
    funcs: Optional[tuple] = field(default=None, repr=False)

    @property
    def ymax(self):
        return float(self.y[-1])

    @property
    def n(self):
        return len(self.y)

    @property
    def grid(self):
        return GridSpec(self.ymax, self.n)

    @property
    def is_tanh(self):
        return self.params is not None

    def evaluate(self, y, order=0):
        """Evaluate ``u``, ``u'`` or ``u''`` (``order`` 0, 1, 2) at arbitrary ``y``."""
        if self.funcs is not None:
            return self.funcs[order](np.asarray(y, dtype=float))
        spline = self.__dict__.get("_spline")
        if spline is None:
            spline = (CubicSpline(self.y, self.u), CubicSpline(self.y, self.u1),
                      CubicSpline(self.y, self.u2))
            object.__setattr__(self, "_spline", spline)
        return spline[order](y)

    def on_grid(self, grid):
        """Resample on another grid (analytic when possible)."""
        y = grid.y
        return ShearProfile(y, self.evaluate(y, 0), self.evaluate(y, 1), self.evaluate(y, 2),
                            self.y0, self.u0, self.params, self.funcs)

    def to_csv(self, path):
        data = np.column_stack([self.y, self.u, self.u1, self.u2])
        np.savetxt(path, data, delimiter=",", header="y,u,u1,u2", comments="", fmt="%.17e")

    def header(self):
        out = {"y0": self.y0, "u0": self.u0, "Ymax": self.ymax, "N": self.n}
        if self.params is not None:
            out.update(delta=self.params.delta, zeta=self.params.zeta)
        return out

    def header_json(self):
        return json.dumps(self.header(), sort_keys=True, indent=2)


def _sech2(x):
    return 1.0 / np.cosh(x) ** 2


def tanh_functions(params):
    d, z = params.delta, params.zeta

    def u(y):
        return np.tanh(y - d) + z

    def du(y):
        return _sech2(y - d)

    def d2u(y):
        return -2.0 * _sech2(y - d) * np.tanh(y - d)

    return u, du, d2u


def default_grid(params, n=DEFAULT_N):
    return GridSpec(params.delta + DEFAULT_TAIL, n)


def build_tanh_profile(params: TanhProfileParams, grid: Optional[GridSpec] = None) -> ShearProfile:
    """Sample ``tanh(y - delta) + zeta`` and its exact derivatives on ``grid``."""
    if grid is None:
        grid = default_grid(params)
    if grid.ymax < params.delta + MIN_TAIL:
        raise DomainTooSmall(
            f"Ymax={grid.ymax} < delta + {MIN_TAIL} = {params.delta + MIN_TAIL}; "
            "the decay of u'' is not resolved")
    fu, fdu, fd2u = tanh_functions(params)
    y = grid.y
    return ShearProfile(y, fu(y), fdu(y), fd2u(y), y0=params.delta, u0=params.zeta,
                        params=params, funcs=(fu, fdu, fd2u))


def profile_from_functions(u: Callable, du: Callable, d2u: Callable, grid: GridSpec,
                           y0=None) -> ShearProfile:
    """Generic profile from callables; ``y0`` defaults to the first inflection found."""
    y = grid.y
    prof = ShearProfile(y, u(y), du(y), d2u(y), funcs=(u, du, d2u))
    if y0 is None:
        report = check_rayleigh_criterion(prof)
        if report.count:
            y0 = report.locations[0]
    u0 = None if y0 is None else float(u(np.asarray(y0)))
    return ShearProfile(y, prof.u, prof.u1, prof.u2, y0, u0, None, prof.funcs)


@dataclass(frozen=True)
class NavierMatch:
    a: float
    params: TanhProfileParams
    x0: float
    floor_a: int
    integer_case: bool
    negative_noninteger: bool

    @property
    def residual(self):
        """``|1/2 u'(0) - a u(0)|`` evaluated in closed form."""
        return navier_residual(self.params, self.a)


def match_navier_condition(a: float) -> NavierMatch:
    """Choose ``(delta, zeta)`` so that ``1/2 u'(0) = a u(0)``.

    With ``X = tanh(delta)`` the wall law is the quadratic
    ``X**2 / 2 - a X + a zeta - 1/2 = 0`` with discriminant ``a**2 - 2 a zeta + 1``.
    ``zeta`` is picked so the discriminant is a perfect square giving a root
    ``X0`` in (0, 1): ``X0 = a - floor(a)`` for non-integer ``a`` and
    ``X0 = 1/2`` for integer ``a``.  ``floor`` is also used for negative ``a``.
    """
    if a == 0:
        raise ZeroSlip("a = 0: the tanh family cannot match a Neumann wall and no instability "
                       "is expected")
    a = float(a)
    fl = math.floor(a)
    integer_case = float(fl) == a
    if integer_case:
        x0 = 0.5
        zeta = 0.5 + 3.0 / (8.0 * a)
    else:
        x0 = a - fl
        zeta = a / 2.0 - (fl * fl - 1.0) / (2.0 * a)
    params = TanhProfileParams(delta=math.atanh(x0), zeta=zeta)
    return NavierMatch(a, params, x0, fl, integer_case, (a < 0) and not integer_case)


def navier_residual(params: TanhProfileParams, a: float) -> float:
    u, du, _ = tanh_functions(params)
    return abs(0.5 * du(0.0) - a * u(0.0))


def curvature_function(profile: ShearProfile, tol: float = SINGULAR_TOL) -> np.ndarray:
    """``K(y) = -u''(y) / (u(y) - u0)`` with the removable singularity at ``y0`` filled."""
    if profile.u0 is None:
        raise ValueError("profile has no inflection data")
    if profile.is_tanh:
        return 2.0 * _sech2(profile.y - profile.params.delta)
    diff = profile.u - profile.u0
    near = np.abs(diff) < tol
    bad = near & (np.abs(profile.u2) > tol)
    if np.any(bad):
        raise NonRemovableSingularity(
            f"u - u0 vanishes where u'' does not, at y = {profile.y[bad][:5]}")
    K = np.empty_like(profile.u)
    K[~near] = -profile.u2[~near] / diff[~near]
    if np.any(near):
        K[near] = _lhopital_limit(profile)
    return K


def _lhopital_limit(profile):
    # K(y0) = -u'''(y0) / u'(y0); u''' from a 4th-order central difference of u''
    y0 = profile.y0
    h = profile.y[1] - profile.y[0]
    pts = y0 + h * np.array([-2.0, -1.0, 1.0, 2.0])
    pts = np.clip(pts, 0.0, profile.ymax)
    f = profile.evaluate(pts, 2)
    d3 = (f[0] - 8 * f[1] + 8 * f[2] - f[3]) / (12 * h)
    return -d3 / profile.evaluate(np.asarray(y0), 1)


@dataclass(frozen=True)
class InflectionReport:
    locations: tuple
    count: int
    admissible: bool
    flags: tuple = ()


def check_rayleigh_criterion(profile: ShearProfile, rel_tol: float = 1e-12) -> InflectionReport:
    """Locate sign changes of ``u''`` on (0, Ymax); admissible iff exactly one."""
    u2 = profile.u2
    scale = np.max(np.abs(u2))
    if scale == 0:
        return InflectionReport((), 0, False, ("u'' identically zero",))
    idx = np.nonzero(np.abs(u2) > rel_tol * scale)[0]
    s = np.sign(u2[idx])
    changes = np.nonzero(s[:-1] * s[1:] < 0)[0]
    locs = []
    for c in changes:
        i, j = idx[c], idx[c + 1]
        ya, yb = profile.y[i], profile.y[j]
        fa, fb = u2[i], u2[j]
        if profile.funcs is not None:
            from scipy.optimize import brentq
            locs.append(float(brentq(lambda t: profile.evaluate(t, 2), ya, yb, xtol=1e-14)))
        else:
            locs.append(float(ya - fa * (yb - ya) / (fb - fa)))
    return InflectionReport(tuple(locs), len(locs), len(locs) == 1)


def fit_decay_rate(profile: ShearProfile, start=None, floor=1e-250):
    """Least-squares fit of ``log|u''| ~ log C - eta * y`` beyond ``start``.

    Returns ``(C, eta)``.
    """
    if start is None:
        start = (profile.y0 or 0.0) + 2.0
    mask = (profile.y >= start) & (np.abs(profile.u2) > floor)
    slope, intercept = np.polyfit(profile.y[mask], np.log(np.abs(profile.u2[mask])), 1)
    return float(np.exp(intercept)), float(-slope)
