import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from slipstab.errors import ParameterViolation
from slipstab.harness import cli
from slipstab.harness.experiments import (V0Spec, classify_range, envelope_constant,
                                          fit_crossing_law, fit_loglog, gronwall_envelope,
                                          gronwall_exact, hdot_norm, predicted_crossing_time,
                                          run_convergence)
from slipstab.harness.report import emit_report


@pytest.mark.parametrize("a, beta, label", [
    (1.0, 0.5, "inside proven range"),
    (1.0, 1.0, "outside proven range"),
    (-1.0, 0.5, "inside proven range"),
    (-1.0, 0.75, "outside proven range"),
    (0.0, 3.0, "stable for any beta"),
])
def test_classify_range(a, beta, label):
    assert classify_range(a, beta) == label


@settings(max_examples=50, deadline=None)
@given(st.floats(-3, 3), st.floats(0.1, 10))
def test_fit_loglog_power_law(p, c):
    x = np.array([1e-2, 5e-3, 2.5e-3, 1.25e-3])
    assert fit_loglog(x, c * x ** p) == pytest.approx(p, abs=1e-9)


def test_crossing_law_exact_affine():
    ns = [1, 2, 3]
    eps = 1e-3
    times = [40.0 * n * math.log(1 / eps) + 7.0 for n in ns]
    p, q, r2 = fit_crossing_law(eps, ns, times)
    assert p == pytest.approx(40.0) and q == pytest.approx(7.0) and r2 == pytest.approx(1.0)


@settings(max_examples=30, deadline=None)
@given(st.floats(1e-6, 1e-2), st.integers(1, 3), st.floats(0.01, 1.0))
def test_predicted_crossing_time_root(eps, n, sigma):
    T = predicted_crossing_time(eps, n, sigma)
    assert eps ** n * math.exp(sigma * T) / math.sqrt(1 + T) == pytest.approx(1.0, rel=1e-8)


def test_hdot_norm_single_mode():
    # u1 = cos(x) exp(-y), u2 = 0 on [0, 2 pi) x [0, 30]
    y = np.linspace(0, 30, 30001)
    h = y[1] - y[0]
    ks = np.array([0.0, 1.0])
    u1 = np.zeros((2, y.size), dtype=complex)
    u1[1] = 0.5 * np.exp(-y)
    u2 = np.zeros_like(u1)
    # int |u1|^2 = pi * 1/2; |d_y u1|^2 and |k u1|^2 add the same again each
    assert hdot_norm(u1, u2, ks, h, 2 * math.pi, 0) == pytest.approx(math.sqrt(math.pi / 2),
                                                                     rel=1e-6)
    assert hdot_norm(u1, u2, ks, h, 2 * math.pi, 1) == pytest.approx(math.sqrt(math.pi), rel=1e-6)


@settings(max_examples=40, deadline=None)
@given(st.floats(0, 2), st.floats(0.1, 3), st.floats(1.1, 4), st.floats(0.1, 5),
       st.floats(0, 2))
def test_envelope_holds(lam, gap, alpha, C, phi0):
    chk = gronwall_envelope(lam, lam + gap, alpha, C, phi0, t_max=10.0, n=101)
    assert chk.holds


def test_envelope_solver_matches_duhamel():
    chk = gronwall_envelope(0.3, 1.0, 2.0, 1.5, 0.2, t_max=5.0, n=11)
    exact = [gronwall_exact(t, 0.3, 1.0, 2.0, 1.5, 0.2) for t in chk.t]
    assert np.allclose(chk.phi, exact, rtol=1e-8)
    assert chk.C_prime == envelope_constant(0.2, 0.3, 1.0, 2.0, 1.5)


@pytest.mark.parametrize("lam, mu, alpha", [(1.0, 0.5, 2.0), (0.0, 1.0, 1.0), (-0.5, 1.0, 2.0)])
def test_envelope_parameter_violation(lam, mu, alpha):
    with pytest.raises(ParameterViolation):
        gronwall_envelope(lam, mu, alpha, 1.0)


def test_convergence_smoke():
    rep = run_convergence(1.0, 0.5, [1e-2, 5e-3], V0Spec(), T=0.05, M=4, Ny=201, Ymax=6.0,
                          dt=5e-3, n_out=2)
    assert len(rep.errors) == 2 and all(e > 0 for e in rep.errors)
    assert rep.classification == "inside proven range"
    with pytest.raises(ValueError):
        run_convergence(1.0, 0.5, [1e-3, 1e-2])


class _Rep:
    def summary(self):
        return {"b": np.float64(0.1), "a": [np.int64(1), np.nan]}

    def tables(self):
        return {"t": (["x", "y"], [np.array([1.0, 2.0]), np.array([0.5, np.nan])])}


def test_emit_report_deterministic(tmp_path):
    p1 = emit_report(_Rep(), tmp_path / "one", formats=("csv", "json", "dat"))
    p2 = emit_report(_Rep(), tmp_path / "two", formats=("csv", "json", "dat"))
    for a, b in zip(p1, p2):
        assert a.read_bytes() == b.read_bytes()
    data = json.loads((tmp_path / "one" / "report_summary.json").read_text())
    assert data == {"a": [1, None], "b": 0.1}
    lines = (tmp_path / "one" / "report_t.csv").read_text().splitlines()
    assert lines == ["x,y", "1.000000000000e+00,5.000000000000e-01", "2.000000000000e+00,nan"]


def test_emit_report_unwritable(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(OSError, match="file"):
        emit_report(_Rep(), blocker / "sub")


def test_cli_profile_pass(tmp_path):
    assert cli.main(["profile", "--a", "1.5", "--out", str(tmp_path)]) == 0
    data = json.loads((tmp_path / "profile_summary.json").read_text())
    assert data["residual"] <= 1e-12


def test_cli_runtime_error_exit(tmp_path):
    assert cli.main(["profile", "--a", "0", "--out", str(tmp_path)]) == 1


def test_cli_config_and_override(tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text("[DEFAULT]\nseed = 5\n[envelope]\nlam = 2.0\nmu = 1.0\n")
    # config alone violates mu > lambda
    assert cli.main(["envelope", "--config", str(ini), "--out", str(tmp_path)]) == 1
    # the flag wins over the file
    assert cli.main(["envelope", "--config", str(ini), "--lam", "0.5",
                     "--out", str(tmp_path)]) == 0


def test_cli_unknown_config_key(tmp_path):
    ini = tmp_path / "bad.ini"
    ini.write_text("[envelope]\nwhatever = 1\n")
    assert cli.main(["envelope", "--config", str(ini), "--out", str(tmp_path)]) == 1


def test_cli_sturm_seeded(tmp_path):
    args = ["sturm", "--n", "1001", "--random_checks", "5", "--seed", "3"]
    assert cli.main(args + ["--out", str(tmp_path / "a")]) == 0
    assert cli.main(args + ["--out", str(tmp_path / "b")]) == 0
    assert ((tmp_path / "a" / "sturm_summary.json").read_bytes()
            == (tmp_path / "b" / "sturm_summary.json").read_bytes())


def test_cli_assertion_failure_exit(tmp_path, monkeypatch):
    # an envelope that does not hold must map to exit status 2
    monkeypatch.setattr(cli, "gronwall_envelope", _failing_envelope)
    assert cli.main(["envelope", "--out", str(tmp_path)]) == 2


def _failing_envelope(*args, **kw):
    chk = gronwall_envelope(0.0, 1.0, 2.0, 1.0)
    chk.phi[-1] = 2 * chk.bound[-1]
    return chk
