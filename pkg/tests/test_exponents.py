import csv
import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eulerlike.exponents import (DegenerateForcingError, SweepRow, epsilon_sweep, fk_average,
                                 gaussian_fisher_check, moment_lyapunov, top_exponent)
from eulerlike.estimates import ExponentEstimate
from eulerlike.models import build_l96, build_linear, build_ou
from eulerlike.projective import qr_spectrum, tangent_run
from eulerlike.sde import IntegratorConfig, stationary_samples

OU = build_ou([1, 2], [1, 1], epsilon=Fraction(1, 10))
L96 = build_l96(7, [1, 1], epsilon=Fraction(1, 5))
OU_CFG = IntegratorConfig(dt=1e-2, T=200, burn_in=100, seed=1)


def test_estimate_invariants():
    with pytest.raises(ValueError):
        ExponentEstimate(float("nan"), 0.1, 1, 0.1, 1)
    with pytest.raises(ValueError):
        ExponentEstimate(0.1, -1, 1, 0.1, 1)


# ------------------------------------------------------------------ top exponent


def test_top_exponent_ou():
    est = top_exponent(OU, OU_CFG, n_seeds=3)
    assert est.value == pytest.approx(-0.1, abs=1e-3)
    assert est.n_seeds == 3 and est.excluded == 0 and est.stderr >= 0
    assert est.fingerprint == OU.fingerprint


def test_skew_damping_is_rejected():
    with pytest.raises(ValueError):
        build_linear([[0, 1], [-1, 0]], [[1, 0], [0, 1]])


def test_top_exponent_errors():
    with pytest.raises(ValueError):
        top_exponent(OU, OU_CFG, n_seeds=0)


@pytest.mark.slow
def test_l96_ten_sites_positive_exponent():
    m = build_l96(10, [1, 1], epsilon=Fraction(1, 10))
    est = top_exponent(m, IntegratorConfig(dt=0.01, T=1e5, seed=1, scheme="heun"))
    assert est.value - 3 * est.stderr > 0


def test_top_exponent_stable_under_T_dt_and_seed():
    def run(dt=0.01, T=2000, seed=100):
        return top_exponent(L96, IntegratorConfig(dt=dt, T=T, seed=seed, scheme="heun"),
                            n_seeds=8, jobs=4)
    ref = run()
    for v in (run(T=4000), run(dt=0.005), run(seed=200)):
        assert abs(v.value - ref.value) <= 2 * np.hypot(v.stderr, ref.stderr)


# ------------------------------------------------------------------ sweeps


def test_ou_sweep_ratio_is_constant(tmp_path):
    res = epsilon_sweep(OU, [0.4, 0.2, 0.1], OU_CFG)
    for row in res.rows:
        assert row.ratio == pytest.approx(-1.0, abs=1e-2)
        assert row.ratio == row.lambda1.value / row.epsilon
        assert row.lambda_sum_check <= 0.05
    assert abs(res.trend) <= 1e-2
    res.write_csv(tmp_path / "s.csv")
    with open(tmp_path / "s.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["epsilon", "lambda1", "stderr", "ratio", "lambda_sum", "minus_eps_trA"]
    assert len(rows) == 4 and float(rows[1][0]) == 0.4
    res.write_json(tmp_path / "s.json", model="ou")
    d = json.loads((tmp_path / "s.json").read_text())
    assert d["model"] == "ou" and len(d["rows"]) == 3 and "trend" in d


def test_sweep_without_full_spectrum():
    res = epsilon_sweep(OU, [0.2], OU_CFG, full_spectrum=False)
    assert res.rows[0].lambda_sum is None and res.rows[0].lambda_sum_check is None


def test_sweep_errors():
    for eps in ([], [0.1, 0.2], [0.2, 0.2], [0.1, -0.1]):
        with pytest.raises(ValueError):
            epsilon_sweep(OU, eps, OU_CFG)


def test_sweep_row_ratio():
    e = ExponentEstimate(0.02, 0.004, 10, 0.1, 2)
    row = SweepRow(0.1, e, None, -0.7)
    assert row.ratio == pytest.approx(0.2) and row.ratio_stderr == pytest.approx(0.04)


def test_l96_sweep_sum_rule():
    cfg = IntegratorConfig(dt=0.01, T=300, seed=3, scheme="heun")
    res = epsilon_sweep(L96, [0.5, 0.2], cfg, n_seeds=2)
    for row in res.rows:
        assert row.lambda_sum_check <= 0.05


# ------------------------------------------------------------------ moment exponents


MOM_CFG = IntegratorConfig(dt=0.01, T=30, burn_in=20, seed=10)


def test_moment_zero_and_ou_linear():
    out = moment_lyapunov(OU, MOM_CFG, [0, 0.5, 1, 2], ensemble=100, v0=[1, 1])
    assert out["Lambda"][0] == 0.0
    np.testing.assert_allclose(out["Lambda"], -0.1 * out["p"], atol=2e-3)
    np.testing.assert_allclose(out["stderr"], 0, atol=1e-10)


def test_moment_small_p_slope_is_top_exponent():
    cfg = IntegratorConfig(dt=0.01, T=100, burn_in=20, seed=50, scheme="heun")
    out = moment_lyapunov(L96, cfg, [-0.05, 0.05], ensemble=100)
    slope = (out["Lambda"][1] - out["Lambda"][0]) / 0.1
    slope_err = np.hypot(*out["stderr"]) / 0.1
    lam = top_exponent(L96, IntegratorConfig(dt=0.01, T=2000, seed=500, scheme="heun"), n_seeds=4)
    assert abs(slope - lam.value) <= 3 * np.hypot(slope_err, lam.stderr)


def test_moment_convexity():
    cfg = IntegratorConfig(dt=0.01, T=40, burn_in=10, seed=70, scheme="heun")
    out = moment_lyapunov(L96, cfg, np.linspace(-2, 2, 9), ensemble=100)
    lam, err = out["Lambda"], out["stderr"]
    second = lam[2:] - 2 * lam[1:-1] + lam[:-2]
    sig = np.sqrt(err[2:] ** 2 + 4 * err[1:-1] ** 2 + err[:-2] ** 2)
    assert np.all(second >= -2 * sig)


def test_moment_errors():
    with pytest.raises(ValueError):
        moment_lyapunov(OU, MOM_CFG, [1], ensemble=50)
    with pytest.raises(ValueError):
        moment_lyapunov(OU, MOM_CFG, [np.inf])
    with pytest.raises(OverflowError):
        moment_lyapunov(L96, MOM_CFG, [1e308])


# ------------------------------------------------------------------ Fisher identity


def test_fisher_examples():
    out = gaussian_fisher_check([1, 2], [1, 1], 0.1)
    assert out["FI_rho"] == pytest.approx(0.3, abs=1e-15)
    np.testing.assert_allclose(out["covariance"], np.diag([0.5, 0.25]))
    for n in (1, 3, 6):
        assert gaussian_fisher_check(np.eye(n), np.ones(n), 0.25)["FI_rho"] == pytest.approx(0.25 * n)
    with pytest.raises(DegenerateForcingError):
        gaussian_fisher_check([1, 2], [1, 0], 0.1)
    with pytest.raises(ValueError):
        gaussian_fisher_check([[1, 1], [0, 1]], [1, 1], 0.1)
    with pytest.raises(ValueError):
        gaussian_fisher_check([1, 2], [1, 1, 1], 0.1)


@settings(max_examples=100)
@given(st.lists(st.floats(0.05, 20), min_size=1, max_size=8),
       st.floats(0.1, 5), st.floats(1e-3, 2))
def test_fisher_identity_property(a, qscale, eps):
    n = len(a)
    q = qscale * (1 + np.arange(n) / n)
    out = gaussian_fisher_check(a, q, eps)
    assert out["residual"] <= 1e-12 * max(1.0, out["minus_lambda_sum"])


def test_fisher_identity_non_diagonal():
    r = np.random.default_rng(1)
    for _ in range(20):
        G = r.standard_normal((4, 4))
        A = G @ G.T + 0.5 * np.eye(4)
        out = gaussian_fisher_check(A, r.uniform(0.5, 2, 4), 0.3)
        assert out["residual"] <= 1e-12 * out["minus_lambda_sum"]


# ------------------------------------------------------------------ FK averages


def test_fk_average_examples():
    xs = np.random.default_rng(2).standard_normal((50, 7))
    assert fk_average(L96, xs)["lambda_sum_estimate"] == pytest.approx(-0.2 * 7, rel=1e-12)
    assert fk_average(OU, np.ones((3, 2)))["lambda_sum_estimate"] == pytest.approx(-0.3)
    with pytest.raises(ValueError):
        fk_average(OU, np.empty((0, 2)))


def test_fk_average_matches_qr_sum():
    cfg = IntegratorConfig(dt=0.01, T=300, seed=9, scheme="heun")
    spec = qr_spectrum(L96, np.zeros(7), cfg, 7, n_seeds=3)
    fk = fk_average(L96, stationary_samples(L96, np.zeros(7), cfg, stride=100))
    assert abs(fk["lambda_sum_estimate"] - spec.lambda_sum.value) <= \
        3 * spec.lambda_sum.stderr + 1e-4 * abs(spec.minus_eps_trA)


def test_fk_lambda1_on_ou():
    out = tangent_run(OU, np.zeros(2), OU_CFG, 1, record_every=0)
    v = out["V"][:, 0]
    fk = fk_average(OU, np.zeros((5, 2)), np.tile(v, (5, 1)))
    assert fk["lambda1_estimate"] == pytest.approx(-0.1, abs=1e-6)
