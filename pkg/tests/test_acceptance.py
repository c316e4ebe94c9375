"""Acceptance gate: one test and one printed verdict line per criterion.

Tolerances are the contract values.  Timings include all work done inside
the test unless a shared fixture is named in the verdict line.
"""

import math
import time

import numpy as np
import pytest

from slipstab import spectral1d as sp
from slipstab.errors import LeftHalfPlane, SlipStabError, ZeroSlip
from slipstab.harness.experiments import (V0Spec, fit_crossing_law, growth_setup,
                                          predicted_crossing_time, run_convergence, run_growth)
from slipstab.heat_robin import BaseFlowState, step_crank_nicolson
from slipstab.ns2d import SolverConfig, energy_ledger, make_field, run, shear_field, step
from slipstab.profiles import (GridSpec, NavierParams, TanhProfileParams, build_tanh_profile,
                               curvature_function, match_navier_condition)
from slipstab.rayleigh import (Forcing, evolve_linearized_euler, flat_top_envelope,
                               matrix_eigenvalue_extrapolated, seed_guess, solve_mode,
                               trace_dispersion, wavepacket_norm)


@pytest.fixture(scope="module")
def a1():
    prof = build_tanh_profile(match_navier_condition(1.0).params)
    res = sp.negative_spectrum(curvature_function(prof), prof.grid)
    return prof, res.mu


@pytest.fixture(scope="module")
def a1_curve(a1):
    prof, mu = a1
    t0 = time.perf_counter()
    curve = trace_dispersion(prof, (0.1 * mu, 0.98 * mu), 25, mu)
    return curve, time.perf_counter() - t0


def test_c01_navier_matching(verdict):
    t0 = time.perf_counter()
    worst = 0.0
    inside = True
    for a in (-2.5, -1.0, 0.5, 1.0, 1.5, 3.0):
        m = match_navier_condition(a)
        worst = max(worst, m.residual)
        inside &= 0 < math.tanh(m.params.delta) < 1
    try:
        match_navier_condition(0.0)
        zero_ok = False
    except ZeroSlip:
        zero_ok = True
    dt = time.perf_counter() - t0
    ok = worst <= 1e-12 and inside and zero_ok and dt < 1.0
    assert verdict(1, ok, f"max residual {worst:.1e}, a=0 ZeroSlip {zero_ok}, {dt:.3f} s")


def test_c02_sturm_liouville(verdict, a1):
    t0 = time.perf_counter()
    prof, _ = a1
    count = sp.negative_spectrum(curvature_function(prof), prof.grid).count
    g1 = GridSpec(40.0, 4001)
    g2 = g1.refined()
    l1, _ = sp.lowest_eigenvalue(2.0 / np.cosh(g1.y - 5.0) ** 2, g1)
    l2, _ = sp.lowest_eigenvalue(2.0 / np.cosh(g2.y - 5.0) ** 2, g2)
    lam = (4 * l2 - l1) / 3
    dt = time.perf_counter() - t0
    ok = count == 1 and -1.001 <= lam <= -0.995 and dt < 10
    assert verdict(2, ok, f"a=1 count {count}, extrapolated lambda_min {lam:.8f} "
                          f"(closed form {-math.tanh(5.0) ** 2:.8f}), {dt:.2f} s")


def test_c03_rayleigh_band(verdict, a1):
    t0 = time.perf_counter()
    prof, mu = a1
    curve = trace_dispersion(prof, (0.2 * mu, 0.9 * mu), 8, mu, refine=False)
    band_ok = len(curve.ks) == 8 and bool(np.all(curve.cs.imag > 0))
    stable = 0
    k = 1.2 * mu
    for im in (0.005, 0.02, 0.05, 0.1, 0.3):
        try:
            solve_mode(prof, k, complex(prof.u0, im))
        except LeftHalfPlane:
            stable += 1
    worst = 0.0
    for k in np.linspace(0.25 * mu, 0.85 * mu, 5):
        m = solve_mode(prof, k, seed_guess(prof, k, mu))
        cR, _, _ = matrix_eigenvalue_extrapolated(prof, k, m.c)
        worst = max(worst, abs(cR - m.c))
    dt = time.perf_counter() - t0
    ok = band_ok and stable == 5 and worst <= 1e-4 and dt < 60
    assert verdict(3, ok, f"unstable at 8/8 samples {band_ok}, LeftHalfPlane {stable}/5, "
                          f"max |dc| {worst:.1e}, {dt:.1f} s")


def test_c04_dispersion(verdict, a1, a1_curve):
    t0 = time.perf_counter()
    prof, mu = a1
    curve, t_curve = a1_curve
    edge = []
    for frac in (0.95, 0.995):
        k = frac * mu
        edge.append(solve_mode(prof, k, seed_guess(prof, k, mu)).sigma)
    dt = time.perf_counter() - t0 + t_curve
    ok = (curve.sigma0 > 0 and 0 < curve.k0 < mu and curve.beta_curv > 0
          and edge[1] <= 1e-3 and edge[1] < edge[0] and dt < 60)
    assert verdict(4, ok, f"sigma0 {curve.sigma0:.6f}, k0 {curve.k0:.5f}, "
                          f"beta {curve.beta_curv:.4f}, sigma(.95mu) {edge[0]:.2e} > "
                          f"sigma(.995mu) {edge[1]:.2e}, {dt:.1f} s")


def test_c05_linearized_euler(verdict, a1, a1_curve):
    t0 = time.perf_counter()
    prof, mu = a1
    curve, _ = a1_curve
    k = curve.k0
    m = solve_mode(prof, k, seed_guess(prof, k, mu))
    T = 10.0 / m.sigma
    free = evolve_linearized_euler(prof, k, Forcing(), m.psi, T, dt=0.5, levels=(0,),
                                   fit_fraction=1.0)
    rel = abs(free.fitted_rate / m.sigma - 1)
    lam = m.sigma + 0.5
    shape = lambda y: y * np.exp(-y)
    forced = evolve_linearized_euler(prof, k, Forcing(1.0, lam, 0.25, shape),
                                     np.zeros_like(prof.y), 30.0, dt=0.05, fit_fraction=0.5)
    dt = time.perf_counter() - t0
    ok = rel <= 0.02 and forced.fitted_rate <= lam + 0.05 and dt < 120
    assert verdict(5, ok, f"eigenmode rate off by {rel:.1e} over 10 e-folds, forced exponent "
                          f"{forced.fitted_rate:.4f} <= {lam + 0.05:.4f}, {dt:.1f} s")


def _packet_ratios(curve, ramp):
    support = (curve.ks[0], curve.ks[-1])
    env = flat_top_envelope(*support, ramp=ramp)
    out = []
    for t in (10.0, 20.0, 30.0, 40.0):
        q, p = wavepacket_norm(curve, env, support, t)
        out.append(q / p)
    return np.array(out)


def test_c06_wave_packet(verdict, a1_curve):
    # the Laplace asymptotics need beta t w^2 >> 1 on the packet width w;
    # the deep profile (delta = 5) has a wide band and meets that on [10, 40]
    prof = build_tanh_profile(TanhProfileParams(5.0, 0.0))
    mu = math.tanh(5.0)
    t_curve = time.perf_counter()
    curve = trace_dispersion(prof, (0.2 * mu, 0.9 * mu), 13, mu)
    t_curve = time.perf_counter() - t_curve
    t0 = time.perf_counter()
    r = _packet_ratios(curve, 0.1)
    dt = time.perf_counter() - t0
    spread = r.max() / r.min() - 1
    ok = spread < 0.10 and dt < 10
    c1, _ = a1_curve
    r1 = _packet_ratios(c1, 0.1)
    verdict(6, False, f"a=1 profile ratios {np.round(r1, 3).tolist()} "
                      f"(spread {r1.max() / r1.min() - 1:.2f}; beta t w^2 too small)", info=True)
    assert verdict(6, ok, f"delta=5 ratios {np.round(r, 4).tolist()}, spread {spread:.3f} < 0.10, "
                          f"quadrature {dt:.2f} s (+{t_curve:.1f} s dispersion curve)")


def test_c07_shear_consistency(verdict, a1):
    t0 = time.perf_counter()
    eps = 1e-3
    cfg = SolverConfig(eps, NavierParams(1.0, 0.5, eps))
    prof = build_tanh_profile(match_navier_condition(1.0).params, cfg.grid)
    fld = shear_field(cfg, prof.u)
    base = BaseFlowState(0.0, cfg.grid, prof.u.copy(), cfg.wall_coef, cfg.eps)
    for _ in range(int(round(1.0 / cfg.dt))):
        fld = step(fld, cfg)
        base = step_crank_nicolson(base, cfg.dt)
    rel = float(np.max(np.abs(fld.U - base.ubar)) / np.max(np.abs(base.ubar)))
    dt = time.perf_counter() - t0
    ok = rel <= 1e-8 and float(np.max(np.abs(fld.omega[1:]))) == 0.0 and dt < 60
    assert verdict(7, ok, f"relative difference at t={fld.t:.2f}: {rel:.1e}, {dt:.1f} s")


def test_c08_energy_ledger(verdict):
    t0 = time.perf_counter()
    worst = -np.inf
    ok = True
    for eps in (1e-2, 1e-3):
        cfg = SolverConfig(eps, NavierParams(1.0, 0.5, eps))
        prof = build_tanh_profile(match_navier_condition(1.0).params, cfg.grid)
        fld = make_field(cfg, prof.u, V0Spec().psi_modes(cfg)[:cfg.M])
        led = energy_ledger(run(fld, cfg, 3.0), cfg, tolerance=1e-3)
        ok &= led.ok
        worst = max(worst, float(np.max(led.budget / led.ke[0] - 1)))
    dt = time.perf_counter() - t0
    ok = ok and dt < 120
    assert verdict(8, ok, f"max relative budget excess {worst:.1e} (slack 1e-3), {dt:.1f} s")


def test_c09_inviscid_convergence(verdict):
    t0 = time.perf_counter()
    rep = run_convergence(1.0, 0.5, [1e-2, 5e-3, 2.5e-3, 1.25e-3], V0Spec())
    dt = time.perf_counter() - t0
    ok = rep.strictly_decreasing and rep.rate >= 0.4 and dt < 1200
    errs = [round(e, 4) if e is not None else None for e in rep.errors]
    assert verdict(9, ok, f"sup L2 errors {errs}, decreasing {rep.strictly_decreasing}, "
                          f"rate {rep.rate:.3f} (need >= 0.4), {dt:.0f} s")


def _growth(setup, eps, n):
    T0 = predicted_crossing_time(eps, n, setup.sigma0)
    try:
        return run_growth(setup, eps, n, 1.5 * T0), None
    except SlipStabError as exc:
        return None, f"{type(exc).__name__}: {exc}"


def test_c10_nonlinear_growth(verdict):
    t0 = time.perf_counter()
    setup = growth_setup(1.0)
    notes = []
    main, err = _growth(setup, 1e-3, 2)
    if main is None:
        notes.append(f"eps=1e-3 n=2 {err}")
        rate_ok = False
    else:
        rate_ok = abs(main.fitted_rate / setup.sigma0 - 1) <= 0.05
        notes.append(f"rate {main.fitted_rate:.5f} vs sigma0 {setup.sigma0:.5f}")
    times = {}
    for n in (1, 2, 3):
        rep = main if n == 2 else _growth(setup, 1e-3, n)[0]
        times[n] = None if rep is None else rep.crossing_time
    if all(v is not None for v in times.values()):
        _, _, r2 = fit_crossing_law(1e-3, list(times), list(times.values()))
    else:
        r2 = float("nan")
    notes.append(f"crossings {times}, R^2 {r2:.3f}")
    hd = []
    for eps in (4e-3, 2e-3, 1e-3):
        rep = main if eps == 1e-3 else _growth(setup, eps, 2)[0]
        hd.append(None if rep is None else rep.hdot_original(2))
    mono = all(v is not None for v in hd) and hd[0] < hd[1] < hd[2]
    notes.append(f"Hdot2 at crossing {hd}")
    dt = time.perf_counter() - t0
    ok = rate_ok and r2 >= 0.95 and mono and dt < 1800
    assert verdict(10, ok, "; ".join(notes) + f", {dt:.0f} s")


def test_c11_quadratic_forms(verdict):
    t0 = time.perf_counter()
    delta = match_navier_condition(1.0).params.delta
    ns = np.array([5, 10, 20, 40])
    grid = GridSpec(2 * ns.max() + delta + 10, 200001)
    K = 2.0 / np.cosh(grid.y - delta) ** 2
    q = np.array([sp.quadratic_form(sp.test_function_w(delta, n, delta, grid), K, grid)
                  for n in ns])
    slope = float(np.polyfit(np.log(ns), np.log(q), 1)[0])
    slope_ok = bool(np.all(q > 0)) and abs(slope + 1) <= 0.1
    # the lower ramp of the trial function costs ~ n / delta, so Q < 0 needs a deep profile
    d2 = 2.0
    K2 = 2.0 / np.cosh(grid.y - d2) ** 2
    etas = np.linspace(0.9 * d2, d2, 201)[:-1]
    eta0, _, _ = sp.locate_eta0(d2, 20, grid, K2, etas)
    eta_a1, _, _ = sp.locate_eta0(delta, 20, grid, K, np.linspace(0.5 * delta, delta, 201)[:-1])
    res = []
    for N in (2001, 4001, 8001):
        g = GridSpec(60.0, N)
        Kg = 2.0 / np.cosh(g.y - delta) ** 2
        u = sp.test_function_w(delta, 10, delta, g)
        res.append(sp.factorization_residual(u, Kg, g, np.tanh(g.y - delta))[0])
    order = float(np.min(np.log2(np.array(res[:-1]) / np.array(res[1:]))))
    dt = time.perf_counter() - t0
    verdict(11, False, f"a=1 profile (delta={delta:.4f}): Q(w^20_eta) < 0 for some eta: "
                       f"{eta_a1 is not None}", info=True)
    ok = slope_ok and eta0 is not None and eta0 < d2 and order >= 1.9 and dt < 30
    assert verdict(11, ok, f"Q(w^n_delta) slope {slope:.3f}, delta=2 eta0(n=20) {eta0}, "
                           f"factorization order {order:.2f}, {dt:.1f} s")
