"""Negative spectrum of ``S = -d^2/dy^2 - K`` on (0, Ymax) with Dirichlet ends.

The operator is discretised with the 3-point Laplacian on the interior nodes
of a uniform grid.  Eigenvalues are bracketed by Sturm-sequence bisection and
polished by inverse iteration; the eigenvalue estimate is the Rayleigh quotient
of the converged vector.

For ``K = 2 sech^2(y - delta)`` the half-line problem is solvable in closed
form: ``psi = exp(-kappa y) (kappa + tanh(y - delta))`` with
``kappa = tanh(delta)``, so the lowest eigenvalue is ``-tanh(delta)**2``.
"""

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import BoundaryViolation, PotentialNotDecayed
from .profiles import GridSpec
from .tridiag import TridiagonalFactor

TOL_EDGE = 1e-6
DECAY_TOL = 1e-6


@dataclass
class SturmLiouvilleResult:
    eigenvalues: np.ndarray
    eigenfunctions: list
    grid: GridSpec
    mu: Optional[float] = None
    meta: dict = field(default_factory=dict)

    @property
    def count(self):
        return len(self.eigenvalues)

    def to_json(self):
        return json.dumps({"eigenvalues": [float(v) for v in self.eigenvalues],
                           "mu": self.mu, "Ymax": self.grid.ymax, "N": self.grid.n,
                           **self.meta}, sort_keys=True, indent=2)

    def eigenfunctions_to_csv(self, path):
        cols = [self.grid.y] + list(self.eigenfunctions)
        header = ",".join(["y"] + [f"phi{i}" for i in range(len(self.eigenfunctions))])
        np.savetxt(path, np.column_stack(cols), delimiter=",", header=header, comments="",
                   fmt="%.17e")


class DirichletOperator:
    """Tridiagonal matrix of ``-D2 - K`` acting on interior nodes."""

    def __init__(self, K, grid: GridSpec, check_decay=True):
        K = np.asarray(K, dtype=float)
        if K.shape != (grid.n,):
            raise ValueError(f"K has shape {K.shape}, grid has {grid.n} nodes")
        if check_decay and abs(K[-1]) > DECAY_TOL:
            raise PotentialNotDecayed(
                f"K(Ymax) = {K[-1]:.3e} > {DECAY_TOL}; enlarge the domain")
        self.grid = grid
        self.K = K
        h2 = grid.h ** 2
        self.diag = 2.0 / h2 - K[1:-1]
        self.off = -1.0 / h2
        self.m = grid.n - 2

    def matvec(self, x):
        y = self.diag * x
        y[1:] += self.off * x[:-1]
        y[:-1] += self.off * x[1:]
        return y

    def count_below(self, s):
        """Number of eigenvalues strictly below ``s`` (Sturm count of LDL^T pivots)."""
        off2 = self.off * self.off
        q = self.diag[0] - s
        neg = int(q < 0)
        tiny = 1e-300
        for d in (self.diag[1:] - s).tolist():
            if q == 0.0:
                q = tiny
            q = d - off2 / q
            neg += int(q < 0)
        return int(neg)

    def gershgorin_lower(self):
        return float(np.min(self.diag) - 2.0 * abs(self.off))

    def bisect(self, index, lo, hi, tol=1e-10):
        """Eigenvalue number ``index`` (0-based) inside ``[lo, hi]``."""
        while hi - lo > tol * max(1.0, abs(lo), abs(hi)):
            mid = 0.5 * (lo + hi)
            if self.count_below(mid) > index:
                hi = mid
            else:
                lo = mid
        return 0.5 * (lo + hi)

    def inverse_iteration(self, shift, maxiter=50, rtol=1e-14):
        m = self.m
        x = np.ones(m) / np.sqrt(m)
        fac = TridiagonalFactor(np.full(m - 1, self.off), self.diag - shift,
                                np.full(m - 1, self.off))
        lam = shift
        for _ in range(maxiter):
            x_new = fac.solve(x)
            x_new /= np.linalg.norm(x_new)
            lam_new = float(x_new @ self.matvec(x_new))
            done = abs(lam_new - lam) <= rtol * max(1.0, abs(lam_new))
            x, lam = x_new, lam_new
            if done:
                break
        return lam, x

    def full_vector(self, x):
        out = np.zeros(self.grid.n)
        out[1:-1] = x
        return out


def _normalise(vec, h):
    vec = vec / np.sqrt(np.trapezoid(vec * vec, dx=h))
    nz = np.flatnonzero(np.abs(vec) > 1e-14 * np.max(np.abs(vec)))
    if nz.size and vec[nz[0]] < 0:
        vec = -vec
    return vec


def lowest_eigenvalue(K, grid: GridSpec):
    """Lowest eigenvalue and eigenfunction, or ``(None, None)`` if it is not negative."""
    op = DirichletOperator(K, grid)
    if op.count_below(0.0) == 0:
        return None, None
    lo = op.gershgorin_lower()
    guess = op.bisect(0, lo, 0.0, tol=1e-9)
    lam, x = op.inverse_iteration(guess)
    return lam, _normalise(op.full_vector(x), grid.h)


def negative_spectrum(K, grid: GridSpec, tol_edge: float = TOL_EDGE) -> SturmLiouvilleResult:
    """Every discrete eigenvalue below ``-tol_edge``, with normalised eigenfunctions."""
    op = DirichletOperator(K, grid)
    count = op.count_below(-tol_edge)
    eigs, funcs = [], []
    lo = op.gershgorin_lower()
    for i in range(count):
        guess = op.bisect(i, lo, -tol_edge, tol=1e-12)
        lam, x = op.inverse_iteration(guess)
        eigs.append(lam)
        funcs.append(_normalise(op.full_vector(x), grid.h))
        lo = guess
    eigs = np.array(eigs)
    mu = float(np.sqrt(-eigs[0])) if count else None
    return SturmLiouvilleResult(eigs, funcs, grid, mu, {"tol_edge": tol_edge})


def instability_cutoff(K_fn, ymax, n=4001, max_doublings=4, shift_tol=1e-6):
    """``mu`` from the lowest eigenvalue, doubling Ymax until it stops moving.

    ``K_fn`` is a callable potential; returns ``(mu, lam, grid)``.
    """
    grid = GridSpec(ymax, n)
    lam, _ = lowest_eigenvalue(K_fn(grid.y), grid)
    for _ in range(max_doublings):
        if lam is None:
            return None, None, grid
        # bound states decay like exp(-mu y); make that negligible at Ymax
        mu = np.sqrt(-lam)
        if np.exp(-mu * grid.ymax) < 1e-8:
            big = GridSpec(2 * grid.ymax, 2 * grid.n - 1)
            lam2, _ = lowest_eigenvalue(K_fn(big.y), big)
            if lam2 is not None and abs(lam2 - lam) <= shift_tol:
                return float(np.sqrt(-lam)), lam, grid
        grid = GridSpec(2 * grid.ymax, 2 * grid.n - 1)
        lam, _ = lowest_eigenvalue(K_fn(grid.y), grid)
    return (None if lam is None else float(np.sqrt(-lam))), lam, grid


def quadratic_form(u, K, grid: GridSpec, atol=1e-12):
    """``Q(u) = int |u'|^2 - K |u|^2``.

    ``u'`` is the centred difference at cell midpoints (integrated with the
    midpoint rule) and ``K u^2`` uses the trapezoidal rule.  With ``u`` zero at
    both ends this equals ``h * u^T A u`` for the discrete operator ``A``.
    """
    u = np.asarray(u, dtype=float)
    if abs(u[0]) > atol:
        raise BoundaryViolation(f"u(0) = {u[0]:.3e}, expected 0")
    h = grid.h
    du = np.diff(u) / h
    return float(np.sum(du * du) * h - np.trapezoid(K * u * u, dx=h))


def l2_norm_sq(u, grid: GridSpec):
    return float(np.trapezoid(u * u, dx=grid.h))


def chi_cutoff(s):
    """C^2 cutoff: 1 on (-inf, 1], 0 on [2, inf), quintic smoothstep between."""
    s = np.asarray(s, dtype=float)
    t = np.clip(s - 1.0, 0.0, 1.0)
    return 1.0 - t ** 3 * (10.0 - 15.0 * t + 6.0 * t * t)


def test_function_w(eta, n, delta, grid: GridSpec, chi=chi_cutoff):
    """Two-branch trial function built from ``v_eta = tanh(y - eta)``.

    Below ``delta`` it is the constant ``v_eta(delta)`` switched off by
    ``chi(n (1 - y/delta))``; above it is ``v_eta(y) chi(y / n)``.
    """
    if not eta > 0:
        raise ValueError("eta must be > 0")
    if n < 2:
        # chi == 1 on [0, 1] so the lower branch only reaches 0 at y = 0 when n >= 2
        raise ValueError("n must be >= 2 for the trial function to vanish at 0")
    y = grid.y
    if grid.ymax < 2 * n:
        raise ValueError(f"grid must cover the cutoff support [0, {2 * n}]")
    lower = np.tanh(delta - eta) * chi(n * (1.0 - y / delta))
    upper = np.tanh(y - eta) * chi(y / n)
    return np.where(y <= delta, lower, upper)


def q_eta_limit(eta, delta, ymax=60.0, n=200001):
    """``Q(eta) = int_delta^inf |v_eta'|^2 - K_delta v_eta^2`` by fine quadrature."""
    y = np.linspace(delta, delta + ymax, n)
    v = np.tanh(y - eta)
    dv = 1.0 / np.cosh(y - eta) ** 2
    K = 2.0 / np.cosh(y - delta) ** 2
    return float(np.trapezoid(dv * dv - K * v * v, y))


def dq_eta(eta, delta, ymax=60.0, n=200001):
    """``dQ/deta = int_delta^inf 2 v v' (K_eta + K_delta)``."""
    y = np.linspace(delta, delta + ymax, n)
    v = np.tanh(y - eta)
    dv = 1.0 / np.cosh(y - eta) ** 2
    s = 2.0 / np.cosh(y - eta) ** 2 + 2.0 / np.cosh(y - delta) ** 2
    return float(np.trapezoid(2 * v * dv * s, y))


def locate_eta0(delta, n, grid: GridSpec, K, etas=None):
    """Scan ``eta < delta`` and return the etas where ``Q(w^n_eta) < 0``."""
    if etas is None:
        etas = np.linspace(0.5 * delta, delta, 51)[:-1]
    vals = np.array([quadratic_form(test_function_w(e, n, delta, grid), K, grid) for e in etas])
    neg = etas[vals < 0]
    return (float(neg.min()) if neg.size else None), etas, vals


def discrete_phi(K, grid: GridSpec, phi0, phi1):
    """Solve ``-D2 phi - K phi = 0`` exactly on the grid from two starting values."""
    h2 = grid.h ** 2
    phi = np.empty(grid.n)
    phi[0], phi[1] = phi0, phi1
    for i in range(1, grid.n - 1):
        phi[i + 1] = (2.0 - h2 * K[i]) * phi[i] - phi[i - 1]
    return phi


def factorization_residual(u, K, grid: GridSpec, phi, zero_tol=1e-10):
    """``|Q(u) - int phi^2 |(u/phi)'|^2|`` for ``u`` vanishing at 0 and where phi does.

    ``phi^2`` at a midpoint is taken as ``phi_i phi_{i+1}``; at nodes where
    ``phi`` vanishes the quotient is replaced by its one-sided limits, obtained
    by quadratic extrapolation from each side.
    """
    u = np.asarray(u, dtype=float)
    phi = np.asarray(phi, dtype=float)
    q = quadratic_form(u, K, grid)
    h = grid.h
    zero = np.abs(phi) < zero_tol
    v = np.zeros_like(u)
    v[~zero] = u[~zero] / phi[~zero]
    vl = v.copy()
    vr = v.copy()
    for i in np.flatnonzero(zero):
        if i == 0:
            vl[i] = vr[i] = 3 * v[1] - 3 * v[2] + v[3]
            continue
        if i >= 3:
            vl[i] = 3 * v[i - 1] - 3 * v[i - 2] + v[i - 3]
        if i + 3 < len(v):
            vr[i] = 3 * v[i + 1] - 3 * v[i + 2] + v[i + 3]
    # interval (i, i+1): left end seen from the right, right end seen from the left
    dv = (vl[1:] - vr[:-1]) / h
    weights = phi[:-1] * phi[1:]
    fact = float(np.sum(weights * dv * dv) * h)
    return abs(q - fact), q, fact
