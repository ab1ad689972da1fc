import json
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from eulerlike.lattice import coeff, half_lattice, in_lattice, lattice, norm2, spiral_order
from eulerlike.models import (BilinearForm, GNSEConfig, Scaling, build_gnse, build_l96, build_linear,
                              build_ou, eval_drift, eval_drift_jacobian, exponent_from_rescaled,
                              l96_form, model_from_dict, model_to_dict, rescale_fd)

RNG = np.random.default_rng(20240611)


def gnse(N=2, r=1, forcing=None):
    forcing = forcing or {(1, 0): (1, 1), (0, 1): (1, 1), (1, 1): (1, 1)}
    return build_gnse(GNSEConfig(N, r, forcing))


def exact_B(form, x):
    """B(x, x) with Fraction arithmetic straight from the monomial map."""
    out = [Fraction(0)] * form.n
    for (l, (j, k)), c in form.coeffs.items():
        out[l] += Fraction(c) * x[j] * x[k]
    return out


# ------------------------------------------------------------------ Lorenz-96


def test_l96_hand_value():
    m = build_l96(7, {1: 1, 2: 1}, epsilon=0)
    x = np.zeros(7)
    x[0] = x[1] = 1
    np.testing.assert_array_equal(m.B(x), -np.eye(7)[2])
    np.testing.assert_array_equal(eval_drift(m, x), -np.eye(7)[2])


@pytest.mark.parametrize("n", range(4, 12))
def test_l96_unit_vectors_are_nulls(n):
    form = l96_form(n)
    for k in range(n):
        assert not np.any(form(np.eye(n)[k]))


def test_l96_conserves_energy():
    m = build_l96(7, [1, 1])
    for _ in range(20):
        x = RNG.standard_normal(7)
        assert abs(x @ m.B(x)) <= 1e-12 * (x @ x) ** 1.5


def test_l96_exact_conservation():
    form = l96_form(9)
    x = [Fraction(int(v), 7) for v in RNG.integers(-20, 20, 9)]
    assert sum(a * b for a, b in zip(x, exact_B(form, x))) == 0


def test_l96_three_sites_degenerate():
    assert not l96_form(3).coeffs
    with pytest.raises(ValueError):
        build_l96(3, [1])


def test_l96_errors():
    with pytest.raises(ValueError):
        build_l96(7, [0, 0, 0])
    with pytest.raises(ValueError):
        build_l96(7, {9: 1})


def test_l96_forcing_count():
    m = build_l96(10, {1: 1, 2: Fraction(1, 2)})
    assert m.n_forcing == 2
    np.testing.assert_array_equal(m.forcing[1], 0.5 * np.eye(10)[1])
    np.testing.assert_array_equal(m.A, np.eye(10))


# ------------------------------------------------------------------ Galerkin NSE


def test_gnse_coefficient_examples():
    assert coeff((1, 0), (1, 1), Fraction(1)) == Fraction(1, 2)
    assert coeff((1, 0), (0, 1), Fraction(1)) == 0
    assert coeff((1, 0), (2, 0), Fraction(1)) == 0


def test_gnse_coefficient_symmetric_and_odd():
    r = Fraction(3, 2)
    for j in lattice(3):
        for l in lattice(3):
            assert coeff(j, l, r) == coeff(l, j, r)
            assert coeff(j, (-l[0], -l[1]), r) == -coeff(j, l, r)


@pytest.mark.parametrize("N", [2, 3])
def test_gnse_shape(N):
    m = gnse(N, Fraction(1, 2))
    assert m.n == (2 * N + 1) ** 2 - 1
    assert m.n_forcing == 6
    diag = sorted(np.diag(m.A))
    expect = sorted(float(norm2(k, Fraction(1, 2))) for k in half_lattice(N) for _ in range(2))
    np.testing.assert_allclose(diag, expect)
    assert m.B.exact


def test_gnse_exact_enstrophy_conservation():
    m = gnse(3, Fraction(2))
    x = [Fraction(int(v), 5) for v in RNG.integers(-9, 9, m.n)]
    assert sum(a * b for a, b in zip(x, exact_B(m.B, x))) == 0


def test_gnse_errors():
    with pytest.raises(ValueError):
        GNSEConfig(2, 0, {(1, 0): (1, 1)})
    with pytest.raises(ValueError):
        build_gnse(GNSEConfig(1, 1, {(1, 0): (1, 1)}))
    with pytest.raises(ValueError):
        GNSEConfig(2, 1, {(1, 0): (1, 0)})
    with pytest.raises(ValueError):
        GNSEConfig(2, 1, {(1, 0): (1, 1), (-1, 0): (2, 2)})
    with pytest.raises(ValueError):
        build_gnse(GNSEConfig(2, 1, {}))


def test_gnse_forcing_closed_under_negation():
    cfg = GNSEConfig(2, 1, {(-1, 0): (1, 2), (0, 1): (1, 1)})
    assert cfg.modes == frozenset({(1, 0), (-1, 0), (0, 1), (0, -1)})


def test_lattice_helpers():
    assert len(lattice(2)) == 24 and (0, 0) not in lattice(2)
    assert len(half_lattice(3)) == 24
    assert not in_lattice((0, 0), 3) and not in_lattice((4, 0), 3)
    order = spiral_order(2)
    assert sorted(order) == sorted(lattice(2))
    assert [k[0] ** 2 + k[1] ** 2 for k in order] == sorted(k[0] ** 2 + k[1] ** 2 for k in order)


# ------------------------------------------------------------------ drift and Jacobian


def test_drift_examples():
    ou = build_ou([1, 2], [1, 1], epsilon=Fraction(1, 10))
    np.testing.assert_allclose(eval_drift(ou, [1, 1]), [-0.1, -0.2])
    np.testing.assert_array_equal(eval_drift(gnse(), np.zeros(24)), 0)
    with pytest.raises(ValueError):
        eval_drift(ou, [1, 2, 3])
    with pytest.raises(ValueError):
        eval_drift_jacobian(ou, [1])


def test_jacobian_at_origin():
    m = build_l96(7, [1, 1], epsilon=Fraction(1, 5))
    np.testing.assert_allclose(eval_drift_jacobian(m, np.zeros(7)), -0.2 * np.eye(7))


MODELS = [
    build_l96(7, [1, 1]),
    build_l96(12, {1: 1, 5: 2}, epsilon=Fraction(1, 3)),
    gnse(2, 1),
    gnse(2, Fraction(3, 2)),
    build_ou([1, 2], [1, 1]),
]


@pytest.mark.parametrize("m", MODELS, ids=lambda m: f"{m.kind}-{m.n}")
def test_jacobian_matches_central_differences(m):
    h = 1e-5
    for _ in range(5):
        x = RNG.uniform(-1, 1, m.n)
        x *= RNG.uniform(0.1, 10) / np.linalg.norm(x)
        J = eval_drift_jacobian(m, x)
        fd = np.column_stack([(eval_drift(m, x + h * e) - eval_drift(m, x - h * e)) / (2 * h)
                              for e in np.eye(m.n)])
        assert np.linalg.norm(fd - J) <= 1e-8 * max(1.0, np.linalg.norm(J))


@pytest.mark.parametrize("m", MODELS, ids=lambda m: f"{m.kind}-{m.n}")
def test_structural_invariants(m):
    nB = m.B.norm()
    for _ in range(100):
        x = RNG.standard_normal(m.n) * RNG.uniform(0.1, 10)
        nx = np.linalg.norm(x)
        assert abs(x @ m.B(x)) <= 1e-10 * nx ** 2 * max(nB, 1.0) * max(nx, 1.0)
        assert abs(np.trace(m.B.jacobian(x))) <= 1e-10 * max(nB, 1.0) * nx
        a = RNG.uniform(-3, 3)
        np.testing.assert_allclose(m.B(a * x), a * a * m.B(x), rtol=1e-12, atol=1e-12 * nx ** 2)
        np.testing.assert_allclose(m.B.jacobian(a * x), a * m.B.jacobian(x), rtol=1e-12,
                                   atol=1e-12 * nx)


def test_damping_must_be_spd():
    with pytest.raises(ValueError):
        build_linear([[0, 1], [-1, 0]], [[1, 0], [0, 1]])
    with pytest.raises(ValueError):
        build_linear([[1, 0], [0, -1]], [[1, 0]])


def test_bilinear_form_rejects_bad_index():
    with pytest.raises(ValueError):
        BilinearForm(2, {(0, (0, 5)): 1})


# ------------------------------------------------------------------ rescaling


def test_rescale_examples():
    m = build_l96(7, [1, 1], epsilon=Fraction(1, 4), scaling=Scaling.UNSCALED)
    mh = rescale_fd(m)
    assert mh.epsilon == Fraction(1, 8)
    assert mh.scaling is Scaling.FLUCTUATION_DISSIPATION
    assert mh.rescaled_from == 0.25
    assert rescale_fd(m.with_epsilon(1)).epsilon == 1
    assert math.isclose(rescale_fd(m.with_epsilon(0.2)).eps, 0.2 ** 1.5)
    with pytest.raises(ValueError):
        rescale_fd(mh)
    # lambda_hat / eps_hat == lambda / eps  <=>  lambda = lambda_hat / sqrt(eps)
    assert math.isclose(exponent_from_rescaled(0.5, mh), 1.0)


def test_unscaled_noise_has_unit_scale():
    m = build_l96(7, [1, 1], epsilon=Fraction(1, 4), scaling=Scaling.UNSCALED)
    assert m.noise_scale == 1.0
    assert rescale_fd(m).noise_scale == math.sqrt(1 / 8)


# ------------------------------------------------------------------ config round trip


@pytest.mark.parametrize("m", MODELS + [rescale_fd(build_l96(7, [1, 1], Fraction(1, 4), Scaling.UNSCALED))],
                         ids=lambda m: f"{m.kind}-{m.n}")
def test_config_round_trip(m):
    d = json.loads(json.dumps(model_to_dict(m)))
    back = model_from_dict(d)
    assert model_to_dict(back) == model_to_dict(m)
    assert back.fingerprint == m.fingerprint
    np.testing.assert_array_equal(back.A, m.A)
    np.testing.assert_array_equal(back.forcing, m.forcing)
    assert back.B.coeffs == m.B.coeffs


@given(st.integers(4, 12), st.lists(st.fractions(min_value=-3, max_value=3, max_denominator=9),
                                    min_size=1, max_size=4),
       st.fractions(min_value=Fraction(1, 50), max_value=2, max_denominator=50))
def test_l96_round_trip_property(n, q, eps):
    if not any(q):
        q = q + [Fraction(1)]
    m = build_l96(n, q[:n], epsilon=eps)
    d = model_to_dict(m)
    assert d["epsilon"] == (str(eps) if eps.denominator != 1 else str(eps.numerator))
    assert model_from_dict(json.loads(json.dumps(d))).fingerprint == m.fingerprint


def test_unknown_kind():
    with pytest.raises(ValueError):
        model_from_dict({"kind": "shell"})


def test_models_are_read_only():
    m = build_l96(7, [1, 1])
    with pytest.raises(ValueError):
        m.A[0, 0] = 2.0
