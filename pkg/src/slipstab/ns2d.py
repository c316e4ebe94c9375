"""2D incompressible Navier-Stokes on the strip ``[0, Lx) x [0, Ymax]``.

Periodic in ``x`` (Fourier modes ``m = 0..M``, the negative modes being the
complex conjugates), uniform finite differences in ``y``.  Conventions:

* ``u1 = dpsi/dy``, ``u2 = -dpsi/dx``, ``omega = du1/dy - du2/dx = lap psi``;
* the wall law ``1/2 du1/dy = A u1`` with ``u2 = 0`` gives ``omega = 2 A u1`` at ``y = 0``.

Modes ``m >= 1`` are advanced in vorticity form.  The x-averaged flow ``U(y)``
(mode 0) is advanced in velocity form, ``dU/dt = -d<u1 u2>/dy + eps U''``, with
exactly the Crank-Nicolson/Robin discretisation of :mod:`heat_robin`, so a
pure shear flow evolves identically under both modules.

Time stepping: AB2 for the advective term (Heun for the first step),
Crank-Nicolson for diffusion.  The wall vorticity of each mode at the new time
level is fixed by an influence (capacitance) relation, so the Navier law holds
exactly at every stored state.
"""

import math
import struct
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from scipy import fft as sfft

from .errors import BlowupDetected, CFLViolation
from .heat_robin import _cn_factor
from .profiles import GridSpec, NavierParams
from .tridiag import TridiagonalFactor, tridiag_matvec

HEADER = struct.Struct("<qqddd")


@dataclass(frozen=True)
class SolverConfig:
    eps: float
    navier: NavierParams
    Lx: float = 2 * math.pi
    M: int = 32
    Ny: int = 512
    Ymax: float = 30.0
    dt: float = 1e-2
    cfl_max: float = 1.0
    blowup_guard: float = 1e8
    forcing: Optional[Callable] = None

    @property
    def grid(self):
        return GridSpec(self.Ymax, self.Ny)

    @property
    def wall_coef(self):
        return self.navier.wall_coef

    @property
    def ks(self):
        return 2 * np.pi * np.arange(self.M + 1) / self.Lx

    @property
    def nx(self):
        # 3/2 rule: products of modes |m| <= M are alias-free on >= 3M + 1 points
        return 3 * (self.M + 1)

    @property
    def inviscid(self):
        return self.eps == 0


def dy(f, h):
    """Second-order first derivative along the last axis (one-sided at the ends)."""
    out = np.empty_like(f)
    out[..., 1:-1] = (f[..., 2:] - f[..., :-2]) / (2 * h)
    out[..., 0] = (-3 * f[..., 0] + 4 * f[..., 1] - f[..., 2]) / (2 * h)
    out[..., -1] = (3 * f[..., -1] - 4 * f[..., -2] + f[..., -3]) / (2 * h)
    return out


def wall_slope(psi, h):
    """One-sided ``dpsi/dy`` at ``y = 0`` assuming ``psi(0) = 0``."""
    return (4 * psi[..., 1] - psi[..., 2]) / (2 * h)


def _cumtrapz(U, h):
    out = np.zeros_like(U)
    out[1:] = np.cumsum(0.5 * (U[1:] + U[:-1])) * h
    return out


@dataclass(frozen=True, eq=False)
class Field2D:
    """Half-spectrum state: rows ``m = 0..M`` of ``omega`` and ``psi``, plus ``U``.

    Row 0 of ``omega``/``psi`` is derived from ``U`` (``dU/dy`` and its
    antiderivative from the wall).
    """

    t: float
    omega: np.ndarray
    psi: np.ndarray
    U: np.ndarray
    Lx: float
    Ymax: float
    nl_prev: Optional[tuple] = field(default=None, repr=False)

    @property
    def M(self):
        return self.omega.shape[0] - 1

    @property
    def Ny(self):
        return self.omega.shape[1]

    @property
    def grid(self):
        return GridSpec(self.Ymax, self.Ny)

    @property
    def ks(self):
        return 2 * np.pi * np.arange(self.M + 1) / self.Lx

    def full_spectrum(self, which="omega"):
        """Coefficients for ``m = -M..M`` (row index ``m + M``)."""
        half = getattr(self, which)
        return np.concatenate([np.conj(half[:0:-1]), half], axis=0)

    def velocity_modes(self):
        h = self.grid.h
        u1 = dy(self.psi, h)
        u1[0] = self.U
        u2 = -1j * self.ks[:, None] * self.psi
        return u1, u2

    def physical(self, nx=None):
        """``(x, u1, u2, omega)`` on an ``nx``-point periodic grid."""
        nx = nx or 3 * (self.M + 1)
        u1, u2 = self.velocity_modes()
        x = np.arange(nx) * self.Lx / nx
        return (x, to_physical(u1, nx), to_physical(u2, nx), to_physical(self.omega, nx))

    def copy_with(self, **kw):
        return replace(self, **kw)

    def write_binary(self, path):
        """Little-endian header ``(M, Ny, Ymax, Lx, t)`` then ``omega``, ``psi``
        as row-major complex128 ``(2M+1, Ny)`` blocks and ``U`` as float64."""
        with open(path, "wb") as fh:
            fh.write(HEADER.pack(self.M, self.Ny, self.Ymax, self.Lx, self.t))
            fh.write(self.full_spectrum("omega").astype("<c16").tobytes())
            fh.write(self.full_spectrum("psi").astype("<c16").tobytes())
            fh.write(self.U.astype("<f8").tobytes())

    @classmethod
    def read_binary(cls, path):
        with open(path, "rb") as fh:
            M, Ny, Ymax, Lx, t = HEADER.unpack(fh.read(HEADER.size))
            n = (2 * M + 1) * Ny
            om = np.frombuffer(fh.read(16 * n), dtype="<c16").reshape(2 * M + 1, Ny)
            ps = np.frombuffer(fh.read(16 * n), dtype="<c16").reshape(2 * M + 1, Ny)
            U = np.frombuffer(fh.read(8 * Ny), dtype="<f8")
        return cls(t, om[M:].copy(), ps[M:].copy(), U.copy(), Lx, Ymax)

    def to_csv(self, path, nx=None):
        x, u1, u2, om = self.physical(nx)
        y = self.grid.y
        X, Y = np.meshgrid(x, y, indexing="ij")
        data = np.column_stack([X.ravel(), Y.ravel(), u1.ravel(), u2.ravel(), om.ravel()])
        np.savetxt(path, data, delimiter=",", header="x,y,u1,u2,omega", comments="",
                   fmt="%.17e")


def to_physical(half, nx):
    """Real field on ``nx`` points from half-spectrum rows ``m = 0..M``."""
    M = half.shape[0] - 1
    pad = np.zeros((nx // 2 + 1, half.shape[1]), dtype=complex)
    pad[:M + 1] = half
    return sfft.irfft(pad, n=nx, axis=0) * nx


def to_spectral(phys, M):
    nx = phys.shape[0]
    return sfft.rfft(phys, axis=0)[:M + 1] / nx


# -------------------------------------------------------------- operators

class _Operators:
    """Factorised per-mode operators for one configuration."""

    def __init__(self, cfg: SolverConfig):
        g = cfg.grid
        h = g.h
        self.h = h
        self.cfg = cfg
        ks = cfg.ks[1:]
        self.ks = ks
        ny = cfg.Ny
        self.A = cfg.wall_coef
        # Poisson (D2 - k^2) psi = omega on nodes 1..Ny-1, psi(0) = 0, decay row on top
        m = ny - 1
        lo = np.full((len(ks), m - 1), 1.0 / h ** 2)
        up = np.full((len(ks), m - 1), 1.0 / h ** 2)
        dg = -2.0 / h ** 2 - ks[:, None] ** 2 + np.zeros((len(ks), m))
        lo[:, -1] = 2.0 / h ** 2
        dg[:, -1] = -(2.0 + 2.0 * h * ks) / h ** 2 - ks ** 2
        self.poisson = TridiagonalFactor(lo, dg, up) if len(ks) else None
        if cfg.inviscid or not len(ks):
            return
        # CN for vorticity on nodes 1..Ny-2 (Dirichlet at both ends)
        s = 0.5 * cfg.eps * cfg.dt
        n = ny - 2
        off = np.full((len(ks), n - 1), -s / h ** 2)
        dg = 1.0 + s * (2.0 / h ** 2 + ks[:, None] ** 2) + np.zeros((len(ks), n))
        self.cn = TridiagonalFactor(off, dg, off)
        self.s = s
        # response to a unit wall vorticity at the new level
        rhs = np.zeros((len(ks), n))
        rhs[:, 0] = s / h ** 2
        wh = np.zeros((len(ks), ny))
        wh[:, 0] = 1.0
        wh[:, 1:-1] = self.cn.solve(rhs)
        self.omega_h = wh
        self.psi_h = self.solve_poisson(wh)
        self.denom = 1.0 - 2.0 * self.A * wall_slope(self.psi_h, h)

    def solve_poisson(self, omega):
        psi = np.zeros(omega.shape, dtype=np.result_type(omega, float))
        psi[:, 1:] = self.poisson.solve(omega[:, 1:])
        return psi

    def lap_y(self, f):
        """``(D2 - k^2) f`` at interior nodes, using both end values."""
        h = self.h
        return ((f[:, 2:] - 2 * f[:, 1:-1] + f[:, :-2]) / h ** 2
                - self.ks[:, None] ** 2 * f[:, 1:-1])


@lru_cache(maxsize=16)
def _operators(cfg: SolverConfig):
    return _Operators(cfg)


# -------------------------------------------------------- state helpers

def make_field(cfg: SolverConfig, U, psi_modes=None, t=0.0):
    """Field from a mean flow ``U(y)`` and optional stream-function rows ``m = 1..M``.

    The vorticity of each mode is the discrete Laplacian of its stream
    function; in viscous runs the wall value is then set by the Navier law.
    """
    g = cfg.grid
    h = g.h
    U = np.asarray(U, dtype=float).copy()
    psi = np.zeros((cfg.M + 1, cfg.Ny), dtype=complex)
    if psi_modes is not None:
        psi[1:] = psi_modes
    psi[1:, 0] = 0.0
    omega = np.zeros_like(psi)
    if cfg.M:
        ks = cfg.ks[1:, None]
        omega[1:, 1:-1] = ((psi[1:, 2:] - 2 * psi[1:, 1:-1] + psi[1:, :-2]) / h ** 2
                           - ks ** 2 * psi[1:, 1:-1])
        omega[1:, -1] = 0.0
        if cfg.inviscid:
            # one-sided psi'' at the wall (psi_0 = 0)
            omega[1:, 0] = (-5 * psi[1:, 1] + 4 * psi[1:, 2] - psi[1:, 3]) / h ** 2
        else:
            omega[1:, 0] = 2 * cfg.wall_coef * wall_slope(psi[1:], h)
        # make psi exactly consistent with the stored interior vorticity
        psi[1:] = _operators(cfg).solve_poisson(omega[1:])
        if not cfg.inviscid:
            omega[1:, 0] = 2 * cfg.wall_coef * wall_slope(psi[1:], h)
    _set_mean_rows(omega, psi, U, h)
    return Field2D(t, omega, psi, U, cfg.Lx, cfg.Ymax)


def _set_mean_rows(omega, psi, U, h):
    omega[0] = dy(U, h)
    psi[0] = _cumtrapz(U, h)


def shear_field(cfg: SolverConfig, U):
    return make_field(cfg, U)


# ------------------------------------------------------------ dynamics

def nonlinear_terms(fld: Field2D, cfg: SolverConfig):
    """``(N, F)``: advection ``u . grad omega`` for modes 1..M and ``-d<u1 u2>/dy``."""
    h = cfg.grid.h
    nx = cfg.nx
    ks = cfg.ks[:, None]
    u1, u2 = fld.velocity_modes()
    wx = 1j * ks * fld.omega
    wy = dy(fld.omega, h)
    U1 = to_physical(u1, nx)
    U2 = to_physical(u2, nx)
    prod = U1 * to_physical(wx, nx) + U2 * to_physical(wy, nx)
    N = to_spectral(prod, cfg.M)
    uv = np.mean(U1 * U2, axis=0)
    F = -dy(uv, h)
    return N, F, (U1, U2)


def check_cfl(U1, U2, cfg: SolverConfig):
    kmax = 2 * np.pi * cfg.M / cfg.Lx
    c = cfg.dt * (np.max(np.abs(U1)) * max(kmax, 2 * np.pi / cfg.Lx)
                  + np.max(np.abs(U2)) / cfg.grid.h)
    if c > cfg.cfl_max:
        raise CFLViolation(f"advective CFL number {c:.3g} exceeds {cfg.cfl_max}")
    return c


def _forcing(cfg, t):
    if cfg.forcing is None:
        return 0.0, 0.0
    return cfg.forcing(t)


def _advance(fld: Field2D, cfg: SolverConfig, N_ex, F_ex, t_new):
    """Advance with explicit tendencies ``N_ex`` (vorticity) and ``F_ex`` (mean)."""
    ops = _operators(cfg)
    h = cfg.grid.h
    dt = cfg.dt
    fo0, fu0 = _forcing(cfg, fld.t)
    fo1, fu1 = _forcing(cfg, t_new)
    fo = 0.5 * (np.asarray(fo0) + np.asarray(fo1))
    fu = 0.5 * (np.asarray(fu0) + np.asarray(fu1))
    omega = np.zeros_like(fld.omega)
    psi = np.zeros_like(fld.psi)
    # mean flow
    if cfg.inviscid:
        U = fld.U + dt * (F_ex + fu)
    else:
        fac, (el, ed, eu) = _cn_factor(cfg.Ny, h, float(cfg.wall_coef), float(cfg.eps * dt))
        U = fac.solve(tridiag_matvec(el, ed, eu, fld.U) + dt * (F_ex + fu))
    if cfg.M:
        w = fld.omega[1:]
        src = -N_ex[1:] + (fo[1:] if np.ndim(fo) else fo)
        if cfg.inviscid:
            wn = w + dt * src
            omega[1:] = wn
            psi[1:] = ops.solve_poisson(wn)
        else:
            rhs = w[:, 1:-1] + ops.s * ops.lap_y(w) + dt * src[:, 1:-1]
            wp = np.zeros_like(w)
            wp[:, 1:-1] = ops.cn.solve(rhs)
            pp = ops.solve_poisson(wp)
            sw = 2 * ops.A * wall_slope(pp, h) / ops.denom
            omega[1:] = wp + sw[:, None] * ops.omega_h
            psi[1:] = pp + sw[:, None] * ops.psi_h
    _set_mean_rows(omega, psi, U, h)
    return Field2D(t_new, omega, psi, U, fld.Lx, fld.Ymax)


def step(fld: Field2D, cfg: SolverConfig) -> Field2D:
    """One time step (AB2; Heun when no previous tendency is stored)."""
    N0, F0, (U1, U2) = nonlinear_terms(fld, cfg)
    check_cfl(U1, U2, cfg)
    t_new = fld.t + cfg.dt
    if fld.nl_prev is None:
        pred = _advance(fld, cfg, N0, F0, t_new)
        N1, F1, _ = nonlinear_terms(pred, cfg)
        new = _advance(fld, cfg, 0.5 * (N0 + N1), 0.5 * (F0 + F1), t_new)
    else:
        Np, Fp = fld.nl_prev
        new = _advance(fld, cfg, 1.5 * N0 - 0.5 * Np, 1.5 * F0 - 0.5 * Fp, t_new)
    peak = float(np.max(np.abs(new.omega)))
    if not np.isfinite(peak) or peak > cfg.blowup_guard:
        raise BlowupDetected(f"sup|omega| modes = {peak:.3g} at t = {t_new:.6g}")
    return replace(new, nl_prev=(N0, F0))


# ----------------------------------------------------------- diagnostics

def _parseval(coef, Lx):
    """``int_0^Lx |f|^2 dx`` per y-node from half-spectrum rows."""
    w = np.full(coef.shape[0], 2.0)
    w[0] = 1.0
    return Lx * np.einsum("m,m...->...", w, np.abs(coef) ** 2)


def kinetic_energy(fld: Field2D):
    u1, u2 = fld.velocity_modes()
    dens = _parseval(u1, fld.Lx) + _parseval(u2, fld.Lx)
    return float(np.trapezoid(dens, dx=fld.grid.h))


def strain_integral(fld: Field2D):
    """``int |S u|^2`` with ``S`` the symmetric velocity gradient."""
    h = fld.grid.h
    ks = fld.ks[:, None]
    u1, u2 = fld.velocity_modes()
    a11 = 1j * ks * u1
    a22 = dy(u2, h)
    a12 = 0.5 * (dy(u1, h) + 1j * ks * u2)
    dens = (_parseval(a11, fld.Lx) + _parseval(a22, fld.Lx) + 2 * _parseval(a12, fld.Lx))
    return float(np.trapezoid(dens, dx=h))


def wall_integral(fld: Field2D):
    u1, _ = fld.velocity_modes()
    return float(_parseval(u1[:, 0], fld.Lx))


def divergence(fld: Field2D):
    """``max |du1/dx + du2/dy|`` over modes and nodes (discrete identity)."""
    h = fld.grid.h
    u1, u2 = fld.velocity_modes()
    div = 1j * fld.ks[:, None] * u1 + dy(u2, h)
    return float(np.max(np.abs(div)))


def wall_closure_residual(fld: Field2D, cfg: SolverConfig):
    if cfg.M == 0:
        return 0.0
    r = fld.omega[1:, 0] - 2 * cfg.wall_coef * wall_slope(fld.psi[1:], fld.grid.h)
    return float(np.max(np.abs(r)))


@dataclass
class Trajectory:
    t: list = field(default_factory=list)
    ke: list = field(default_factory=list)
    wall: list = field(default_factory=list)
    strain: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    final: Optional[Field2D] = None


def run(fld: Field2D, cfg: SolverConfig, T: float, diag_every=1, snap_times=None,
        callback=None) -> Trajectory:
    """Integrate to ``T`` recording energy diagnostics every ``diag_every`` steps.

    ``snap_times`` (sorted) selects states to keep; the nearest step at or
    after each time is stored.
    """
    nsteps = int(round((T - fld.t) / cfg.dt))
    traj = Trajectory()
    snaps = list(snap_times or [])

    def record(f):
        traj.t.append(f.t)
        traj.ke.append(kinetic_energy(f))
        traj.wall.append(wall_integral(f))
        traj.strain.append(strain_integral(f))

    def maybe_snap(f):
        while snaps and f.t >= snaps[0] - 1e-9 * max(1.0, abs(snaps[0])):
            traj.snapshots.append(replace(f, nl_prev=None))
            snaps.pop(0)

    if diag_every:
        record(fld)
    maybe_snap(fld)
    for n in range(1, nsteps + 1):
        fld = step(fld, cfg)
        if diag_every and (n % diag_every == 0 or n == nsteps):
            record(fld)
        maybe_snap(fld)
        if callback is not None:
            callback(n, fld)
    traj.final = fld
    return traj


def solve_euler_reference(fld0: Field2D, T: float, cfg: SolverConfig, **kw) -> Trajectory:
    """Same scheme with zero viscosity and no wall closure."""
    cfg_e = replace(cfg, eps=0.0)
    fld = make_field(cfg_e, fld0.U, fld0.psi[1:], fld0.t) if cfg.eps != 0 else fld0
    return run(fld, cfg_e, T, **kw)


@dataclass
class EnergyLedger:
    t: np.ndarray
    ke: np.ndarray
    wall: np.ndarray
    strain: np.ndarray
    tolerance: float
    flags: list

    @property
    def ok(self):
        return not self.flags

    @property
    def budget(self):
        return self.ke + self.wall + self.strain

    def to_csv(self, path):
        data = np.column_stack([self.t, self.ke, self.wall, self.strain, self.budget])
        np.savetxt(path, data, delimiter=",", header="t,ke,wall,strain,budget", comments="",
                   fmt="%.17e")


def energy_ledger(traj: Trajectory, cfg: SolverConfig, tolerance=1e-3) -> EnergyLedger:
    """Cumulative wall and strain dissipation by the trapezoidal rule in time.

    Flags every sample where ``KE + wall + strain > KE(0) (1 + tolerance)``.
    The wall term carries the sign of ``a``.
    """
    t = np.asarray(traj.t)
    ke = np.asarray(traj.ke)
    wall_rate = 4 * cfg.wall_coef * cfg.eps * np.asarray(traj.wall)
    strain_rate = 4 * cfg.eps * np.asarray(traj.strain)

    def cum(r):
        out = np.zeros_like(r)
        out[1:] = np.cumsum(0.5 * (r[1:] + r[:-1]) * np.diff(t))
        return out

    wall = cum(wall_rate)
    strain = cum(strain_rate)
    excess = ke + wall + strain - ke[0] * (1 + tolerance)
    flags = [int(i) for i in np.flatnonzero(excess > 0)]
    return EnergyLedger(t, ke, wall, strain, tolerance, flags)
