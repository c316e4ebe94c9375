"""Command-line entry point.

Every subcommand accepts ``--config FILE`` (INI sections named after the
subcommand, ``key = value``), ``--out DIR`` and ``--seed``.  Flags given on
the command line override the file, which overrides the built-in defaults.

Exit status: 0 when every asserted check passed, 2 when a check failed,
1 on a runtime error.
"""

import argparse
import configparser
import logging
import math
import sys
from pathlib import Path

import numpy as np

from ..errors import SlipStabError
from ..heat_robin import baseflow_drift
from ..profiles import (TanhProfileParams, build_tanh_profile, check_rayleigh_criterion,
                        curvature_function, match_navier_condition)
from ..rayleigh import trace_dispersion
from ..spectral1d import negative_spectrum, quadratic_form, l2_norm_sq
from .experiments import (V0Spec, gronwall_envelope, growth_setup, run_convergence,
                          run_growth)
from .report import emit_report

log = logging.getLogger("slipstab")

EXIT_OK, EXIT_ERROR, EXIT_FAIL = 0, 1, 2

DEFAULTS = {
    "profile": {"a": 1.0},
    "sturm": {"a": 1.0, "delta": None, "n": 4001, "random_checks": 100},
    "dispersion": {"a": 1.0, "samples": 21},
    "baseflow": {"a": 1.0, "eps": 1e-2, "steps": 400},
    "converge": {"a": 1.0, "beta": 0.5, "eps": "1e-2,5e-3,2.5e-3,1.25e-3", "T": 1.0,
                 "M": 16, "Ny": 1201, "Ymax": 6.0, "dt": 2e-3},
    "grow": {"a": 1.0, "eps": 1e-3, "n": 2, "budget": 4000.0, "M": 16, "Ny": 512,
             "dt": 0.05},
    "envelope": {"lam": 0.0, "mu": 1.0, "alpha": 2.0, "C": 1.0, "phi0": 0.0, "tmax": 20.0},
}

TYPES = {"a": float, "delta": float, "n": int, "random_checks": int, "samples": int,
         "eps": str, "steps": int, "beta": float, "T": float, "M": int, "Ny": int,
         "Ymax": float, "dt": float, "budget": float, "lam": float, "mu": float,
         "alpha": float, "C": float, "phi0": float, "tmax": float}


class _Summary:
    def __init__(self, summary, tables=None):
        self._s = summary
        self._t = tables or {}

    def summary(self):
        return self._s

    def tables(self):
        return self._t


def _check(ok, what):
    log.info("%s: %s", "PASS" if ok else "FAIL", what)
    return bool(ok)


def cmd_profile(o):
    match = match_navier_condition(o.a)
    prof = build_tanh_profile(match.params)
    rep = check_rayleigh_criterion(prof)
    summary = {"a": o.a, "delta": match.params.delta, "zeta": match.params.zeta,
               "x0": match.x0, "residual": match.residual, "inflections": list(rep.locations),
               "admissible": rep.admissible, "negative_noninteger": match.negative_noninteger}
    prof.to_csv(Path(o.out) / "profile.csv")
    emit_report(_Summary(summary), o.out, "profile", ("json",))
    ok = _check(match.residual <= 1e-12, "Navier residual <= 1e-12")
    ok &= _check(0 < match.x0 < 1, "0 < tanh(delta) < 1")
    ok &= _check(rep.admissible, "exactly one inflection point")
    return ok


def _tanh_params(o):
    if o.delta is not None:
        return TanhProfileParams(float(o.delta), 0.0)
    return match_navier_condition(o.a).params


def cmd_sturm(o):
    params = _tanh_params(o)
    prof = build_tanh_profile(params)
    grid = prof.grid
    if o.n != grid.n:
        grid = type(grid)(grid.ymax, o.n)
        prof = prof.on_grid(grid)
    K = curvature_function(prof)
    res = negative_spectrum(K, grid)
    (Path(o.out)).mkdir(parents=True, exist_ok=True)
    res.eigenfunctions_to_csv(Path(o.out) / "eigenfunctions.csv")
    rng = np.random.default_rng(o.seed)
    worst = math.inf
    lam = res.eigenvalues[0] if res.count else 0.0
    for _ in range(o.random_checks):
        coeffs = rng.normal(size=8)
        u = sum(c * np.sin((j + 1) * np.pi * grid.y / grid.ymax) for j, c in enumerate(coeffs))
        gap = quadratic_form(u, K, grid) - lam * l2_norm_sq(u, grid)
        worst = min(worst, gap)
    summary = {"delta": params.delta, "eigenvalues": list(res.eigenvalues), "mu": res.mu,
               "Ymax": grid.ymax, "N": grid.n, "min_form_gap": worst}
    emit_report(_Summary(summary), o.out, "sturm", ("json",))
    ok = _check(res.count == 1, "exactly one negative eigenvalue")
    ok &= _check(worst >= -1e-8, "Q(u) >= lambda_min |u|^2 on random trial functions")
    return ok


def cmd_dispersion(o):
    params = match_navier_condition(o.a).params
    prof = build_tanh_profile(params)
    res = negative_spectrum(curvature_function(prof), prof.grid)
    mu = res.mu
    curve = trace_dispersion(prof, (0.05 * mu, 0.98 * mu), o.samples, mu)
    Path(o.out).mkdir(parents=True, exist_ok=True)
    curve.to_csv(Path(o.out) / "dispersion.csv")
    emit_report(_Summary(curve.summary()), o.out, "dispersion", ("json",))
    ok = _check(curve.sigma0 > 0, "sigma0 > 0")
    ok &= _check(0 < curve.k0 < mu, "0 < k0 < mu")
    ok &= _check(curve.beta_curv > 0, "nondegenerate maximum")
    return ok


def cmd_baseflow(o):
    params = match_navier_condition(o.a).params
    prof = build_tanh_profile(params)
    series = baseflow_drift(prof, o.eps, o.a, n_steps=o.steps)
    Path(o.out).mkdir(parents=True, exist_ok=True)
    series.to_csv(Path(o.out) / "drift.csv")
    emit_report(_Summary({"eps": o.eps, "a": o.a, "max_drift_h1": series.max_drift}),
                o.out, "baseflow", ("json",))
    ok = _check(series.drift_h1[0] == 0.0, "zero drift at t = 0")
    ok &= _check(np.all(np.isfinite(series.drift_h1)), "finite drift over the window")
    return ok


def cmd_converge(o):
    eps = [float(v) for v in str(o.eps).split(",")]
    rep = run_convergence(o.a, o.beta, eps, V0Spec(), o.T, o.M, o.Ny, o.Ymax, o.dt)
    emit_report(rep, o.out, "converge", ("csv", "json", "dat"))
    log.info("classification: %s, rate %.4f", rep.classification, rep.rate)
    if rep.classification == "outside proven range":
        return True
    ok = _check(rep.strictly_decreasing, "errors strictly decreasing in eps")
    ok &= _check(rep.rate >= 0.4, f"fitted rate {rep.rate:.3f} >= 0.4")
    return ok


def cmd_grow(o):
    setup = growth_setup(o.a)
    rep = run_growth(setup, float(o.eps), o.n, o.budget, M=o.M, Ny=o.Ny, dt=o.dt)
    emit_report(rep, o.out, "grow", ("csv", "json", "dat"))
    rel = abs(rep.fitted_rate / setup.sigma0 - 1)
    return _check(rel <= 0.05, f"linear-phase rate within 5% of sigma0 (off by {rel:.1%})")


def cmd_envelope(o):
    chk = gronwall_envelope(o.lam, o.mu, o.alpha, o.C, o.phi0, o.tmax)
    emit_report(chk, o.out, "envelope", ("csv", "json"))
    return _check(chk.holds, "solution stays below the envelope")


COMMANDS = {"profile": cmd_profile, "sturm": cmd_sturm, "dispersion": cmd_dispersion,
            "baseflow": cmd_baseflow, "converge": cmd_converge, "grow": cmd_grow,
            "envelope": cmd_envelope}


def build_parser():
    p = argparse.ArgumentParser(prog="slipstab", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name, opts in DEFAULTS.items():
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=Path, help="INI file with a [%s] section" % name)
        sp.add_argument("--out", default=None, help="directory for artifacts (default: out)")
        sp.add_argument("--seed", type=int, default=None)
        for key in opts:
            sp.add_argument(f"--{key}", type=TYPES[key], default=None)
    return p


def resolve_options(args):
    """Merge defaults, config file and explicit flags (in increasing priority)."""
    merged = dict(DEFAULTS[args.command])
    if args.config is not None:
        cp = configparser.ConfigParser()
        cp.optionxform = str
        if not cp.read(args.config):
            raise FileNotFoundError(f"config file not found: {args.config}")
        section = cp[args.command] if cp.has_section(args.command) else cp.defaults()
        for key, raw in section.items():
            if key == "seed":
                if args.seed is None:
                    args.seed = int(raw)
            elif key == "out":
                if args.out is None:
                    args.out = raw
            elif key in merged:
                merged[key] = TYPES[key](raw)
            elif key not in cp.defaults():
                raise ValueError(f"unknown key '{key}' in [{args.command}]")
    for key in DEFAULTS[args.command]:
        val = getattr(args, key)
        if val is not None:
            merged[key] = val
    return argparse.Namespace(**merged, out=args.out or "out",
                              seed=args.seed if args.seed is not None else 0)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s")
    try:
        opts = resolve_options(args)
        Path(opts.out).mkdir(parents=True, exist_ok=True)
        ok = COMMANDS[args.command](opts)
    except (SlipStabError, OSError, ValueError) as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_ERROR
    return EXIT_OK if ok else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
