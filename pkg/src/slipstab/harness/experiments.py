"""Experiment drivers: inviscid-limit convergence, nonlinear growth, envelope check."""

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import quad, solve_ivp
from scipy.optimize import brentq

from ..errors import NoGrowthDetected, ParameterViolation, SlipStabError
from ..heat_robin import BaseFlowState, step_crank_nicolson
from ..ns2d import (Field2D, SolverConfig, _parseval, dy, make_field, run,
                    solve_euler_reference, step, to_physical)
from ..profiles import (NavierParams, build_tanh_profile, curvature_function,
                        match_navier_condition)
from ..rayleigh import seed_guess, solve_mode, trace_dispersion
from ..spectral1d import lowest_eigenvalue


# ------------------------------------------------------------ convergence

def classify_range(a, beta_exp):
    """Whether ``(a, beta)`` lies in a range where L2 convergence is established."""
    if a > 0:
        ok = beta_exp < 1
    elif a == 0:
        return "stable for any beta"
    else:
        ok = beta_exp <= 0.5
    return "inside proven range" if ok else "outside proven range"


@dataclass(frozen=True)
class V0Spec:
    """Smooth divergence-free initial data tangent to the wall.

    ``psi = amp * y * exp(-(y / ell)**2) * (cos(2 pi x / Lx) + 0.5 sin(4 pi x / Lx))``.
    """

    amp: float = 1.0
    ell: float = 1.0
    Lx: float = 2 * math.pi

    def psi_modes(self, cfg: SolverConfig):
        y = cfg.grid.y
        shape = self.amp * y * np.exp(-(y / self.ell) ** 2)
        modes = np.zeros((cfg.M, cfg.Ny), dtype=complex)
        modes[0] = 0.5 * shape
        if cfg.M >= 2:
            modes[1] = -0.25j * shape
        return modes

    def field(self, cfg: SolverConfig):
        return make_field(cfg, np.zeros(cfg.Ny), self.psi_modes(cfg))


def l2_difference(f: Field2D, g: Field2D):
    """``|u_f - u_g|_{L2}`` over the strip."""
    u1f, u2f = f.velocity_modes()
    u1g, u2g = g.velocity_modes()
    dens = _parseval(u1f - u1g, f.Lx) + _parseval(u2f - u2g, f.Lx)
    return float(np.sqrt(np.trapezoid(dens, dx=f.grid.h)))


@dataclass
class ConvergenceReport:
    a: float
    beta_exp: float
    T: float
    eps: list
    errors: list
    rate: float
    classification: str
    failures: dict = field(default_factory=dict)
    series: dict = field(default_factory=dict)

    @property
    def strictly_decreasing(self):
        e = [x for x in self.errors if x is not None]
        return len(e) == len(self.errors) and all(b < a for a, b in zip(e, e[1:]))

    def summary(self):
        return {"a": self.a, "beta_exp": self.beta_exp, "T": self.T, "eps": self.eps,
                "errors": self.errors, "rate": self.rate, "classification": self.classification,
                "strictly_decreasing": self.strictly_decreasing,
                "failures": {str(k): v for k, v in self.failures.items()}}

    def tables(self):
        return {"convergence": (["eps", "sup_l2_error"],
                                [self.eps, [np.nan if e is None else e for e in self.errors]])}


def fit_loglog(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def run_convergence(a, beta_exp, eps_list, v0: V0Spec = V0Spec(), T=1.0, M=16, Ny=1201,
                    Ymax=6.0, dt=2e-3, n_out=20) -> ConvergenceReport:
    """Sup-in-time L2 distance between Navier-Stokes and Euler for each ``eps``."""
    eps_list = [float(e) for e in eps_list]
    if any(b >= a_ for a_, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps_list must be strictly decreasing")
    out_times = list(np.linspace(0.0, T, n_out + 1))
    base = SolverConfig(eps_list[0], NavierParams(a, beta_exp, eps_list[0]), Lx=v0.Lx, M=M,
                        Ny=Ny, Ymax=Ymax, dt=dt)
    cfg_e = replace(base, eps=0.0)
    ref = solve_euler_reference(v0.field(cfg_e), T, cfg_e, diag_every=0, snap_times=out_times)
    errors, failures, series = [], {}, {}
    for eps in eps_list:
        cfg = replace(base, eps=eps, navier=NavierParams(a, beta_exp, eps))
        try:
            traj = run(v0.field(cfg), cfg, T, diag_every=0, snap_times=out_times)
            diffs = [l2_difference(f, g) for f, g in zip(traj.snapshots, ref.snapshots)]
            series[eps] = diffs
            errors.append(max(diffs))
        except SlipStabError as exc:
            failures[eps] = f"{type(exc).__name__}: {exc}"
            errors.append(None)
    good = [(e, r) for e, r in zip(eps_list, errors) if r is not None and r > 0]
    rate = fit_loglog(*zip(*good)) if len(good) >= 2 else float("nan")
    return ConvergenceReport(a, beta_exp, T, eps_list, errors, rate,
                             classify_range(a, beta_exp), failures, series)


# ----------------------------------------------------------------- growth

@dataclass
class GrowthReport:
    a: float
    eps: float
    n: int
    seed_amplitude: float
    base_amplitude: float
    sigma0: float
    k0: float
    t: np.ndarray
    linf: np.ndarray
    l2: np.ndarray
    hdot: dict
    window_l2: np.ndarray
    window_A: float
    phase_speed: float
    fitted_rate: float
    crossings: dict
    predicted_T0: float
    hdot_at_crossing: dict

    @property
    def crossing_time(self):
        return self.crossings.get(0.1)

    def hdot_original(self, s):
        """Perturbation ``H^s`` seminorm at crossing in the unscaled variables."""
        v = self.hdot_at_crossing.get(s)
        return None if v is None else v * self.eps ** ((1 - s) / 2)

    def summary(self):
        return {"a": self.a, "eps": self.eps, "n": self.n, "seed_amplitude": self.seed_amplitude,
                "base_amplitude": self.base_amplitude, "sigma0": self.sigma0, "k0": self.k0,
                "fitted_rate": self.fitted_rate,
                "crossings": {str(k): v for k, v in sorted(self.crossings.items())},
                "predicted_T0": self.predicted_T0, "window_A": self.window_A,
                "phase_speed": self.phase_speed,
                "hdot2_at_crossing_rescaled": self.hdot_at_crossing.get(2),
                "hdot2_at_crossing_original": self.hdot_original(2)}

    def tables(self):
        cols = [self.t, self.linf, self.l2] + [self.hdot[s] for s in sorted(self.hdot)]
        names = ["t", "linf", "l2"] + [f"hdot{s}" for s in sorted(self.hdot)]
        return {"growth": (names + ["window_l2"], cols + [self.window_l2])}


def predicted_crossing_time(eps, n, sigma0):
    """``T`` with ``eps**n exp(sigma0 T) / sqrt(1 + T) = 1``."""
    f = lambda T: n * math.log(eps) + sigma0 * T - 0.5 * math.log1p(T)
    hi = 10.0
    while f(hi) < 0:
        hi *= 2
    return brentq(f, 0.0, hi)


def _pert_modes(fld: Field2D, Ubase):
    u1, u2 = fld.velocity_modes()
    u1 = u1.copy()
    u1[0] = u1[0] - Ubase
    return u1, u2


def _linf(u1, u2, nx):
    p1 = to_physical(u1, nx)
    p2 = to_physical(u2, nx)
    return float(np.sqrt(np.max(p1 * p1 + p2 * p2))), p1, p2


def hdot_norm(u1, u2, ks, h, Lx, s):
    """Homogeneous ``H^s`` seminorm with weights ``binom(s, a) k^{2a}`` for ``d_y^{s-a}``."""
    total = 0.0
    for comp in (u1, u2):
        ders = [comp]
        for _ in range(s):
            ders.append(dy(ders[-1], h))
        for a in range(s + 1):
            w = math.comb(s, a) * ks[:, None] ** (2 * a)
            total += np.trapezoid(_parseval(np.sqrt(w) * ders[s - a], Lx), dx=h)
    return float(np.sqrt(total))


def _window_mass(p1, p2, x, y, Lx, center, half_width, A):
    dx = (x - center + 0.5 * Lx) % Lx - 0.5 * Lx
    mx = np.abs(dx) <= half_width
    my = y <= A
    dens = p1 * p1 + p2 * p2
    h = y[1] - y[0]
    full = np.trapezoid(dens.sum(axis=0) * (Lx / len(x)), dx=h)
    sub = dens[np.ix_(mx, my)].sum(axis=0) * (Lx / len(x))
    part = np.trapezoid(sub, dx=h) if sub.size > 1 else 0.0
    return float(part), float(full)


@dataclass
class GrowthSetup:
    """Dispersion data for a matched profile (computed once and shared)."""

    a: float
    k0: float
    sigma0: float
    mu: float


def growth_setup(a, n_samples=17):
    match = match_navier_condition(a)
    prof = build_tanh_profile(match.params)
    lam, _ = lowest_eigenvalue(curvature_function(prof), prof.grid)
    mu = math.sqrt(-lam)
    curve = trace_dispersion(prof, (0.1 * mu, 0.9 * mu), n_samples, mu)
    return GrowthSetup(a, curve.k0, curve.sigma0, mu)


def run_growth(setup: GrowthSetup, eps, n, T_budget, M=16, Ny=512, Ymax=30.0, dt=0.05,
               thresholds=(0.05, 0.1, 0.2), sample_every=1.0, stop_factor=1.5,
               seed_amplitude=None, A=None) -> GrowthReport:
    """Seeded unstable mode on the diffusing base flow, in the rescaled frame.

    Viscosity is ``sqrt(eps)`` and the wall law ``1/2 du1/dy = a u1``.  The
    perturbation is the field minus the base flow evolved by
    :func:`heat_robin.step_crank_nicolson` on the same grid and time step.
    """
    a = setup.a
    match = match_navier_condition(a)
    nu = math.sqrt(eps)
    Lx = 2 * math.pi / setup.k0
    cfg = SolverConfig(nu, NavierParams(a, 0.0, nu), Lx=Lx, M=M, Ny=Ny, Ymax=Ymax, dt=dt)
    grid = cfg.grid
    prof = build_tanh_profile(match.params, grid)
    base_amp = float(np.max(np.abs(prof.u)))
    amp = eps ** n if seed_amplitude is None else seed_amplitude
    us = prof.u.copy()
    nx = cfg.nx
    mode = solve_mode(prof, setup.k0, seed_guess(prof, setup.k0, setup.mu))
    psi_modes = np.zeros((M, Ny), dtype=complex)
    psi_modes[0] = 0.5 * mode.psi
    unit = make_field(cfg, us, psi_modes)
    l_unit, _, _ = _linf(*_pert_modes(unit, us), nx)
    fld = make_field(cfg, us, psi_modes * (amp / l_unit))
    base = BaseFlowState(0.0, grid, us.copy(), cfg.wall_coef, nu)
    ks = cfg.ks
    h = grid.h
    x = np.arange(nx) * Lx / nx
    y = grid.y

    ts, linf, l2s, win, xmax = [], [], [], [], []
    hd = {0: [], 1: [], 2: []}
    fields_2d = []

    def sample(f, ub):
        u1, u2 = _pert_modes(f, ub)
        li, p1, p2 = _linf(u1, u2, nx)
        ts.append(f.t)
        linf.append(li)
        for s in hd:
            hd[s].append(hdot_norm(u1, u2, ks, h, Lx, s))
        l2s.append(hd[0][-1])
        dens = (p1 * p1 + p2 * p2).max(axis=1)
        xmax.append(x[int(np.argmax(dens))])
        fields_2d.append((p1, p2))

    sample(fld, base.ubar)
    every = max(1, int(round(sample_every / dt)))
    nsteps = int(round(T_budget / dt))
    stop_level = stop_factor * max(thresholds) * base_amp
    check_step = int(0.2 * nsteps)
    for i in range(1, nsteps + 1):
        fld = step(fld, cfg)
        base = step_crank_nicolson(base, dt)
        if i % every == 0 or i == nsteps:
            sample(fld, base.ubar)
            if linf[-1] >= stop_level:
                break
        if i == check_step and amp > 0:
            if linf[-1] < linf[0]:
                raise NoGrowthDetected(
                    f"perturbation decayed over the first 20% of the budget "
                    f"({linf[0]:.3e} -> {linf[-1]:.3e})")
    ts = np.array(ts)
    linf = np.array(linf)
    # packet phase speed from the drift of the x-location of the maximum
    xm = np.unwrap(np.array(xmax) * 2 * np.pi / Lx) * Lx / (2 * np.pi)
    c_fit = float(np.polyfit(ts, xm, 1)[0]) if len(ts) > 1 else 0.0
    alpha = -c_fit
    x0 = xmax[0]
    if A is None:
        A = _window_size(fields_2d[0], x, y, Lx, x0)
    for (p1, p2), t in zip(fields_2d, ts):
        part, _ = _window_mass(p1, p2, x, y, Lx, x0 - alpha * t, A * math.sqrt(1 + t), A)
        win.append(math.sqrt(part))
    crossings = {}
    for th in thresholds:
        idx = np.flatnonzero(linf >= th * base_amp)
        if idx.size:
            j = idx[0]
            if j == 0:
                crossings[th] = float(ts[0])
            else:
                # log-linear interpolation between samples
                l0, l1 = math.log(linf[j - 1]), math.log(linf[j])
                w = (math.log(th * base_amp) - l0) / (l1 - l0)
                crossings[th] = float(ts[j - 1] + w * (ts[j] - ts[j - 1]))
        else:
            crossings[th] = None
    hd_cross = {}
    if crossings.get(0.1) is not None:
        tc = crossings[0.1]
        for s in hd:
            hd_cross[s] = float(np.interp(tc, ts, hd[s]))
    rate = _linear_phase_rate(ts, linf, 0.01 * base_amp)
    t0 = predicted_crossing_time(eps, n, setup.sigma0) if amp > 0 else float("inf")
    return GrowthReport(a, eps, n, amp, base_amp, setup.sigma0, setup.k0, ts, linf,
                        np.array(l2s), {s: np.array(v) for s, v in hd.items()}, np.array(win),
                        float(A), alpha, rate, crossings, t0, hd_cross)


def _window_size(fields, x, y, Lx, x0, target=0.9):
    p1, p2 = fields
    for A in np.linspace(0.5, max(Lx, y[-1]), 200):
        part, full = _window_mass(p1, p2, x, y, Lx, x0, A, A)
        if full == 0 or part >= target * full:
            return float(A)
    return float(max(Lx, y[-1]))


def _linear_phase_rate(t, linf, level, skip=0.25):
    """Slope of ``log linf`` over the linear phase, dropping its first ``skip`` part."""
    mask = (linf > 0) & (linf < level)
    if mask.sum() < 4:
        return float("nan")
    tl = t[mask]
    keep = tl >= tl[0] + skip * (tl[-1] - tl[0])
    return float(np.polyfit(tl[keep], np.log(linf[mask][keep]), 1)[0])


def fit_crossing_law(eps, ns, times):
    """Affine fit ``T = p n ln(1/eps) + q``; returns ``(p, q, R^2)``."""
    xs = np.array(ns, dtype=float) * math.log(1 / eps)
    ys = np.array(times, dtype=float)
    p, q = np.polyfit(xs, ys, 1)
    pred = p * xs + q
    ss_res = float(np.sum((ys - pred) ** 2))
    ss_tot = float(np.sum((ys - ys.mean()) ** 2))
    return float(p), float(q), (1.0 - ss_res / ss_tot) if ss_tot > 0 else float("nan")


# ----------------------------------------------------------------- Gronwall

@dataclass
class EnvelopeCheck:
    lam: float
    mu: float
    alpha: float
    C: float
    phi0: float
    C_prime: float
    t: np.ndarray
    phi: np.ndarray
    bound: np.ndarray

    @property
    def holds(self):
        return bool(np.all(self.phi <= self.bound * (1 + 1e-9)))

    def summary(self):
        return {"lambda": self.lam, "mu": self.mu, "alpha": self.alpha, "C": self.C,
                "phi0": self.phi0, "C_prime": self.C_prime, "holds": self.holds,
                "max_ratio": float(np.max(self.phi / self.bound))}

    def tables(self):
        return {"envelope": (["t", "phi", "bound"], [self.t, self.phi, self.bound])}


def _sup_weight(alpha, rate):
    """``sup_{t >= 0} (1 + t)**alpha exp(-rate t)``."""
    t_star = max(alpha / rate - 1.0, 0.0)
    return (1 + t_star) ** alpha * math.exp(-rate * t_star)


def envelope_constant(phi0, lam, mu, alpha, C):
    d = mu - lam
    s1 = _sup_weight(alpha, d)
    s2 = _sup_weight(alpha, d / 2)
    return phi0 * s1 + C * (2 ** alpha / d + s2 / (alpha - 1))


def gronwall_envelope(lam, mu, alpha, C, phi0=0.0, t_max=20.0, n=401) -> EnvelopeCheck:
    """Integrate ``phi' = lam phi + C e^{mu t} / (1 + t)^alpha`` and compare to the envelope."""
    if not mu > lam:
        raise ParameterViolation(f"need mu > lambda, got mu={mu}, lambda={lam}")
    if not alpha > 1:
        raise ParameterViolation(f"need alpha > 1, got {alpha}")
    if lam < 0:
        raise ParameterViolation("need lambda >= 0")
    ts = np.linspace(0.0, t_max, n)
    sol = solve_ivp(lambda t, p: lam * p + C * math.exp(mu * t) / (1 + t) ** alpha,
                    (0.0, t_max), [phi0], t_eval=ts, rtol=1e-10, atol=1e-12)
    cp = envelope_constant(phi0, lam, mu, alpha, C)
    bound = cp * np.exp(mu * ts) / (1 + ts) ** alpha
    return EnvelopeCheck(lam, mu, alpha, C, phi0, cp, ts, sol.y[0], bound)


def gronwall_exact(t, lam, mu, alpha, C, phi0):
    """Closed-form solution by quadrature of the Duhamel integral."""
    integral = quad(lambda s: math.exp((mu - lam) * s) / (1 + s) ** alpha, 0, t)[0]
    return math.exp(lam * t) * (phi0 + C * integral)
