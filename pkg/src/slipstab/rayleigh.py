"""Inviscid (Rayleigh) stability of a shear profile.

Modes are sought as ``psi(y) exp(ik(x - ct))`` solving

    (u - c)(psi'' - k^2 psi) - u'' psi = 0,   psi(0) = 0,  psi decaying,

which is shot from ``Ymax`` down to the wall.  Newton's method on the wall
value uses the derivative of the shot with respect to ``c`` from the
variational equation.
"""

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline
from scipy.special import erf

from .errors import (BandViolation, CFLViolation, ContinuationBroken, LeftHalfPlane,
                     NoConvergence, RayleighError)
from .profiles import GridSpec, ShearProfile
from .tridiag import TridiagonalFactor

NEWTON_TOL = 1e-10
MAX_NEWTON = 50
IM_FLOOR = 1e-8
CRITICAL_TOL = 1e-6
RK4_LIMIT = 2.8


@dataclass
class RayleighMode:
    k: float
    c: complex
    psi: np.ndarray
    y: np.ndarray
    residual: float
    iterations: int = 0

    @property
    def sigma(self):
        return self.k * self.c.imag

    @property
    def lambda_c(self):
        return -1j * self.k * self.c

    def velocity_norm(self):
        """L2 norm of ``(psi', -ik psi)`` over the strip (per unit x-length)."""
        dpsi = np.gradient(self.psi, self.y, edge_order=2)
        dens = np.abs(dpsi) ** 2 + self.k ** 2 * np.abs(self.psi) ** 2
        return float(np.sqrt(np.trapezoid(dens, self.y)))

    def to_csv(self, path):
        data = np.column_stack([self.y, self.psi.real, self.psi.imag])
        np.savetxt(path, data, delimiter=",", header="y,re_psi,im_psi", comments="",
                   fmt="%.17e")


@dataclass
class DispersionCurve:
    ks: np.ndarray
    cs: np.ndarray
    mode_norms: np.ndarray
    k0: float
    sigma0: float
    beta_curv: float
    mu_pred: Optional[float] = None

    @property
    def sigmas(self):
        return self.ks * self.cs.imag

    def sigma_spline(self):
        return CubicSpline(self.ks, self.sigmas)

    def summary(self):
        return {"k0": self.k0, "sigma0": self.sigma0, "beta_curv": self.beta_curv,
                "mu_pred": self.mu_pred}

    def to_json(self):
        return json.dumps(self.summary(), sort_keys=True, indent=2)

    def to_csv(self, path):
        data = np.column_stack([self.ks, self.cs.real, self.cs.imag, self.sigmas])
        np.savetxt(path, data, delimiter=",", header="k,re_c,im_c,sigma", comments="",
                   fmt="%.17e")


# ---------------------------------------------------------------- shooting

def _shoot(profile, k, c, y_eval=None, deriv=True, rtol=1e-10):
    fu = lambda y: profile.evaluate(y, 0)
    fu2 = lambda y: profile.evaluate(y, 2)
    k2 = k * k

    def rhs(y, z):
        w = fu(y) - c
        q = fu2(y) / w
        out = [z[1], (k2 + q) * z[0]]
        if deriv:
            out += [z[3], (k2 + q) * z[2] + q / w * z[0]]
        return out

    z0 = [1.0 + 0j, -k + 0j] + ([0j, 0j] if deriv else [])
    sol = solve_ivp(rhs, (profile.ymax, 0.0), z0, method="RK45", rtol=rtol,
                    atol=1e-14, t_eval=y_eval)
    if not sol.success:
        raise NoConvergence(f"integration failed: {sol.message}")
    return sol


def _min_distance(profile, c):
    return float(np.min(np.abs(profile.u - c)))


def solve_mode(profile: ShearProfile, k: float, c_guess: complex, tol=NEWTON_TOL,
               max_iter=MAX_NEWTON) -> RayleighMode:
    """Unstable Rayleigh mode at wavenumber ``k`` by Newton shooting from ``c_guess``."""
    if not k > 0:
        raise ValueError("k must be > 0")
    c = complex(c_guess)
    if not c.imag > 0:
        raise ValueError("c_guess must lie in the upper half plane")
    for it in range(1, max_iter + 1):
        sol = _shoot(profile, k, c)
        psi0, phi0 = sol.y[0, -1], sol.y[2, -1]
        scale = np.max(np.abs(sol.y[0]))
        if abs(psi0) / scale < tol:
            return _finish(profile, k, c, it)
        step = -psi0 / phi0
        c_new = c + step
        for _ in range(30):
            if _min_distance(profile, c_new) >= CRITICAL_TOL:
                break
            step *= 0.5
            c_new = c + step
        if c_new.imag <= IM_FLOOR:
            raise LeftHalfPlane(f"k={k}: Newton iterate left the upper half plane "
                                f"(c={c_new:.6g})")
        c = c_new
    raise NoConvergence(f"k={k}: no convergence after {max_iter} Newton steps (c={c:.6g})")


def _finish(profile, k, c, iterations):
    y = profile.y
    sol = _shoot(profile, k, c, y_eval=y[::-1], deriv=False)
    psi = sol.y[0][::-1].copy()
    imax = int(np.argmax(np.abs(psi)))
    psi /= psi[imax]
    residual = abs(psi[0])
    psi[0] = 0.0
    return RayleighMode(k, c, psi, y.copy(), float(residual), iterations)


def seed_guess(profile: ShearProfile, k, mu, scale=0.1):
    return complex(profile.u0, scale * (mu - k) / mu)


def collocation_residual(mode: RayleighMode, profile: ShearProfile):
    """Max of the 3-point discretised Rayleigh operator applied to the mode."""
    y = mode.y
    h = y[1] - y[0]
    u = profile.evaluate(y, 0)
    u2 = profile.evaluate(y, 2)
    p = mode.psi
    d2 = (p[2:] - 2 * p[1:-1] + p[:-2]) / h ** 2
    r = (u[1:-1] - mode.c) * (d2 - mode.k ** 2 * p[1:-1]) - u2[1:-1] * p[1:-1]
    return float(np.max(np.abs(r)))


# ------------------------------------------------------ matrix cross-check

def _pencil(profile, k, grid, shift):
    """Tridiagonal ``A - shift B`` with ``A = U(D2 - k^2) - U''`` and ``B = D2 - k^2``."""
    y = grid.y[1:]
    h = grid.h
    U = profile.evaluate(y, 0)
    U2 = profile.evaluate(y, 2)
    m = len(y)
    lower = np.full(m - 1, 1.0 / h ** 2)
    upper = np.full(m - 1, 1.0 / h ** 2)
    diag = np.full(m, -2.0 / h ** 2 - k * k)
    # decay row psi' + k psi = 0 through a ghost node
    lower[-1] = 2.0 / h ** 2
    diag[-1] = -(2.0 + 2.0 * h * k) / h ** 2 - k * k
    B = (lower.copy(), diag.copy(), upper.copy())
    w = (U - shift).astype(complex)
    A_lower = w[1:] * lower
    A_upper = w[:-1] * upper
    A_diag = w * diag - U2
    return (A_lower, A_diag, A_upper), B


def matrix_eigenvalue(profile: ShearProfile, k, target: complex, grid: GridSpec, iters=60):
    """Eigenvalue of the finite-difference pencil nearest ``target`` (shift-invert)."""
    from .tridiag import tridiag_matvec
    (al, ad, au), (bl, bd, bu) = _pencil(profile, k, grid, target)
    fac = TridiagonalFactor(al, ad, au)
    x = np.ones(len(ad), dtype=complex)
    c = target
    for _ in range(iters):
        x = fac.solve(tridiag_matvec(bl, bd, bu, x))
        x /= np.linalg.norm(x)
        Bx = tridiag_matvec(bl, bd, bu, x)
        # (A - target B) x = nu B x  with nu = c - target
        Ax = tridiag_matvec(al, ad, au, x)
        c_new = target + np.vdot(Bx, Ax) / np.vdot(Bx, Bx)
        if abs(c_new - c) < 1e-14:
            c = c_new
            break
        c = c_new
    return complex(c)


def matrix_eigenvalue_extrapolated(profile, k, target, n=4001):
    """Richardson extrapolation of the pencil eigenvalue from ``n`` and ``2n - 1`` nodes."""
    g1 = GridSpec(profile.ymax, n)
    c1 = matrix_eigenvalue(profile, k, target, g1)
    c2 = matrix_eigenvalue(profile, k, target, g1.refined())
    return (4 * c2 - c1) / 3, c1, c2


# ------------------------------------------------------------- dispersion

def _parabola(x, y):
    a, b, c0 = np.polyfit(x, y, 2)
    xv = -b / (2 * a)
    return float(xv), float(c0 - b * b / (4 * a)), float(-2 * a)


def trace_dispersion(profile: ShearProfile, k_range, n_samples: int, mu: float,
                     refine=True) -> DispersionCurve:
    """Continuation of the unstable mode over ``k_range`` from a seed at ``mu / 2``.

    Returns samples sorted in ``k`` together with ``(k0, sigma0, beta_curv)``
    refined by a 3-point parabola on a final band of width ``0.02 mu``.
    """
    k_lo, k_hi = k_range
    if not 0 < k_lo < k_hi < mu:
        raise BandViolation(f"k_range {k_range} is not inside (0, mu={mu})")
    ks = np.linspace(k_lo, k_hi, n_samples)
    k_seed = 0.5 * mu
    seed = solve_mode(profile, k_seed, seed_guess(profile, k_seed, mu))
    i0 = int(np.searchsorted(ks, k_seed))
    modes = {}
    for order in (range(i0, n_samples), range(i0 - 1, -1, -1)):
        c_prev = seed.c
        fails = 0
        for i in order:
            try:
                m = solve_mode(profile, ks[i], c_prev)
            except RayleighError:
                fails += 1
                if fails >= 3:
                    raise ContinuationBroken(
                        f"three consecutive failures ending at k={ks[i]:.6g}",
                        partial=_assemble(ks, modes, mu, refine=False, profile=profile))
                continue
            fails = 0
            modes[i] = m
            c_prev = m.c
    return _assemble(ks, modes, mu, refine, profile)


def _assemble(ks, modes, mu, refine, profile):
    idx = sorted(modes)
    kk = np.array([ks[i] for i in idx])
    cs = np.array([modes[i].c for i in idx])
    norms = np.array([modes[i].velocity_norm() for i in idx])
    if len(kk) < 3:
        return DispersionCurve(kk, cs, norms, np.nan, np.nan, np.nan, mu)
    sig = kk * cs.imag
    j = int(np.clip(np.argmax(sig), 1, len(kk) - 2))
    k0, s0, beta = _parabola(kk[j - 1:j + 2], sig[j - 1:j + 2])
    if refine:
        half = 0.01 * mu
        kf = np.array([k0 - half, k0, k0 + half])
        c_near = cs[int(np.argmin(np.abs(kk - k0)))]
        sf = []
        for kv in kf:
            sf.append(solve_mode(profile, kv, c_near).sigma)
        k0, s0, beta = _parabola(kf, np.array(sf))
    return DispersionCurve(kk, cs, norms, k0, s0, beta, mu)


# ------------------------------------------------------ linearised Euler

@dataclass
class Forcing:
    """Source ``w = C_w exp(lam t) / (1 + t)**alpha`` times a fixed stream-function shape."""

    amplitude: float = 0.0
    rate: float = 0.0
    alpha: float = 0.0
    shape: Optional[Callable] = None

    def envelope(self, t):
        return self.amplitude * math.exp(self.rate * t) / (1.0 + t) ** self.alpha


@dataclass
class LinEulerRun:
    k: float
    forcing: Forcing
    t: np.ndarray
    norms: dict
    fitted_rate: float
    final_psi: np.ndarray = field(repr=False, default=None)


class _BkOperator:
    """``B_k = k^2 - d^2/dy^2`` on nodes 1..N-1 with psi(0) = 0 and a decay row at Ymax."""

    def __init__(self, k, grid):
        h = grid.h
        m = grid.n - 1
        self.lower = np.full(m - 1, -1.0 / h ** 2)
        self.upper = np.full(m - 1, -1.0 / h ** 2)
        self.diag = np.full(m, 2.0 / h ** 2 + k * k)
        self.lower[-1] = -2.0 / h ** 2
        self.diag[-1] = (2.0 + 2.0 * h * k) / h ** 2 + k * k
        self.fac = TridiagonalFactor(self.lower, self.diag, self.upper)

    def apply(self, psi):
        from .tridiag import tridiag_matvec
        return tridiag_matvec(self.lower, self.diag, self.upper, psi)

    def solve(self, theta):
        return self.fac.solve(theta)


def sobolev_norms(psi, k, y, levels=(0, 1, 2)):
    """``||u||_l = sqrt(|u|_{H^l}^2 + |rot u|_{H^l}^2)`` for the mode ``psi e^{ikx}``."""

    def dy(f):
        return np.gradient(f, y, edge_order=2)

    d1 = dy(psi)
    d2 = dy(d1)
    comps = [d1, -1j * k * psi]
    vort = d2 - k * k * psi
    lmax = max(levels)
    # derivatives in y up to lmax for each field
    fields = []
    for f in comps + [vort]:
        ders = [f]
        for _ in range(lmax):
            ders.append(dy(ders[-1]))
        fields.append(ders)
    out = {}
    for l in levels:
        total = 0.0
        for ders in fields:
            for a in range(l + 1):
                for b in range(l + 1 - a):
                    total += k ** (2 * a) * np.trapezoid(np.abs(ders[b]) ** 2, y)
        out[l] = float(np.sqrt(total))
    return out


def evolve_linearized_euler(profile: ShearProfile, k: float, forcing: Forcing, psi0, T: float,
                            dt: float, levels=(0, 1, 2), n_out=200, fit_fraction=0.3):
    """RK4 integration of the linearised vorticity equation at wavenumber ``k``.

    ``psi0`` is the initial stream function on the profile grid.  The last
    ``fit_fraction`` of the run is used for the growth-rate fit of the
    ``l = 0`` norm.
    """
    umax = float(np.max(np.abs(profile.u)))
    if dt * k * umax > RK4_LIMIT:
        raise CFLViolation(f"dt*k*max|u| = {dt * k * umax:.3g} > {RK4_LIMIT}")
    grid = profile.grid
    y = grid.y
    u = profile.u[1:]
    u2 = profile.u2[1:]
    op = _BkOperator(k, grid)
    src = None
    if forcing.shape is not None and forcing.amplitude != 0:
        src = op.apply(np.asarray(forcing.shape(y[1:]), dtype=complex))

    def rhs(t, theta):
        psi = op.solve(theta)
        out = -1j * k * (u * theta + u2 * psi)
        if src is not None:
            out = out + forcing.envelope(t) * src
        return out

    theta = op.apply(np.asarray(psi0, dtype=complex)[1:])
    nsteps = int(round(T / dt))
    every = max(1, nsteps // n_out)
    ts, recs = [], {l: [] for l in levels}

    def record(t, theta):
        psi = np.concatenate([[0.0], op.solve(theta)])
        ts.append(t)
        for l, v in sobolev_norms(psi, k, y, levels).items():
            recs[l].append(v)

    t = 0.0
    record(t, theta)
    for n in range(1, nsteps + 1):
        k1 = rhs(t, theta)
        k2 = rhs(t + dt / 2, theta + dt / 2 * k1)
        k3 = rhs(t + dt / 2, theta + dt / 2 * k2)
        k4 = rhs(t + dt, theta + dt * k3)
        theta = theta + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t = n * dt
        if n % every == 0 or n == nsteps:
            record(t, theta)
    ts = np.array(ts)
    norms = {l: np.array(v) for l, v in recs.items()}
    rate = fit_growth_rate(ts, norms[levels[0]], fit_fraction)
    psi_end = np.concatenate([[0.0], op.solve(theta)])
    return LinEulerRun(k, forcing, ts, norms, rate, psi_end)


def fit_growth_rate(t, values, fraction=0.3):
    """Slope of ``log(values)`` over the final ``fraction`` of the samples."""
    t = np.asarray(t)
    values = np.asarray(values)
    mask = t >= t[-1] - fraction * (t[-1] - t[0])
    mask &= values > 0
    if mask.sum() < 2:
        return float("nan")
    return float(np.polyfit(t[mask], np.log(values[mask]), 1)[0])


# ------------------------------------------------------------ wave packet

def flat_top_envelope(k_left, k_right, ramp=0.25):
    """Smooth envelope equal to 1 in the middle of ``[k_left, k_right]``."""
    width = k_right - k_left

    def phi(k):
        s = np.minimum(np.asarray(k) - k_left, k_right - np.asarray(k)) / (ramp * width)
        s = np.clip(s, 0.0, 1.0)
        return s ** 3 * (10 - 15 * s + 6 * s * s)

    return phi


def wavepacket_norm(curve: DispersionCurve, envelope: Callable, support: Sequence[float],
                    t: float, n_quad=4001, band=None):
    """Quadrature of ``int phi^2 |v(k)|^2 exp(2 sigma(k) t) dk`` and its Laplace prediction.

    ``sigma`` and ``|v(k)|`` are spline interpolants of the curve samples.
    The prediction is ``phi(k0)^2 |v(k0)|^2 sqrt(pi / (beta t)) exp(2 sigma0 t)``
    (``None`` at ``t = 0``).
    """
    k1, k2 = support
    lo, hi = band if band is not None else (0.0, curve.mu_pred or curve.ks[-1])
    if k1 < max(lo, curve.ks[0]) or k2 > min(hi, curve.ks[-1]) or not k1 < curve.k0 < k2:
        raise BandViolation(f"support {support} must lie in the sampled band and contain k0")
    if envelope(curve.k0) == 0:
        raise BandViolation("envelope vanishes at k0")
    kq = np.linspace(k1, k2, n_quad)
    sig = curve.sigma_spline()(kq)
    nv = CubicSpline(curve.ks, curve.mode_norms)
    weight = envelope(kq) ** 2 * nv(kq) ** 2
    quad = float(np.trapezoid(weight * np.exp(2 * sig * t), kq))
    if t <= 0:
        return quad, None
    pred = float(envelope(curve.k0) ** 2 * nv(curve.k0) ** 2
                 * math.sqrt(math.pi / (curve.beta_curv * t)) * math.exp(2 * curve.sigma0 * t))
    return quad, pred


def taylor_bound(sigma0, k0, beta, weight_max, support, t, n_quad=20001):
    """Numerical and closed-form ``int weight_max exp(2 (sigma0 - beta (k - k0)^2) t) dk``."""
    k1, k2 = support
    kq = np.linspace(k1, k2, n_quad)
    quad = float(np.trapezoid(weight_max * np.exp(2 * (sigma0 - beta * (kq - k0) ** 2) * t), kq))
    r = math.sqrt(2 * beta * t)
    closed = (weight_max * math.exp(2 * sigma0 * t) * math.sqrt(math.pi) / (2 * r)
              * (erf(r * (k2 - k0)) - erf(r * (k1 - k0))))
    return quad, float(closed)
