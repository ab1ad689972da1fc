import itertools
import json
import random
from fractions import Fraction

import networkx as nx
import numpy as np
import pytest

from eulerlike import _accel, spanning
from eulerlike.lattice import add, coeff, in_lattice, lattice, neg, spiral_order
from eulerlike.models import GNSEConfig, build_gnse, build_l96, l96_form
from eulerlike.spanning import (DistinctnessReport, DkMismatchError, build_Dk, build_Hk,
                                check_distinctness, dk_closed_form, gnse_Hk, recheck_quadruple,
                                saturating_polynomial, scan_distinctness, verify_sl_generation,
                                zn_propagation)

R_VALUES = [Fraction(1), Fraction(2), Fraction(1, 2), Fraction(3, 2)]


def gnse_model(N=2, r=1):
    return build_gnse(GNSEConfig(N, r, {(1, 0): (1, 1), (0, 1): (1, 1), (1, 1): (1, 1)}))


# ------------------------------------------------------------------ H^k


def test_gnse_hk_hand_entry():
    fam = build_Hk(gnse_model())
    H = fam[(1, 1)]
    idx = {k: a for a, k in enumerate(fam.labels)}
    assert H[idx[(2, 1)], idx[(1, 0)]] == Fraction(1, 2)
    assert fam.n == 24 and fam.kind == "gnse"


@pytest.mark.parametrize("N", [2, 3])
@pytest.mark.parametrize("r", R_VALUES)
def test_gnse_hk_band_and_trace(N, r):
    fam = gnse_Hk(N, r)
    labels = fam.labels
    for k in labels:
        H = fam[k]
        assert H.trace() == 0
        for (l, j) in H.entries:
            assert labels[l] == add(labels[j], k)


def complex_B(N, r, w):
    """``B_l(w) = 1/2 sum_{j + k = l} c_{j,k} w_j w_k`` over the truncated lattice."""
    out = {l: Fraction(0) for l in lattice(N)}
    for j in lattice(N):
        for k in lattice(N):
            l = add(j, k)
            if in_lattice(l, N) and w.get(j) and w.get(k):
                out[l] += Fraction(1, 2) * coeff(j, k, r) * w[j] * w[k]
    return out


@pytest.mark.parametrize("r", [Fraction(1), Fraction(3, 2)])
def test_gnse_hk_matches_polarised_form(r):
    """``(H^k)_{l,j} = 2 B(e_k, e_j)_l`` by polarisation of the quadratic form."""
    N = 2
    fam = gnse_Hk(N, r)
    idx = {k: a for a, k in enumerate(fam.labels)}
    for k in [(1, 0), (1, 1), (-2, 1)]:
        for j in fam.labels:
            if j == k:
                continue
            both = complex_B(N, r, {j: 1, k: 1})
            bj, bk = complex_B(N, r, {j: 1}), complex_B(N, r, {k: 1})
            for l in fam.labels:
                assert fam[k][idx[l], idx[j]] == both[l] - bj[l] - bk[l]


@pytest.mark.parametrize("n", [4, 7, 10])
def test_l96_hk_is_jacobian_at_unit_vector(n):
    m = build_l96(n, [1, 1])
    fam = build_Hk(m)
    assert fam.labels == tuple(range(1, n + 1))
    for k in range(n):
        np.testing.assert_array_equal(fam[k + 1].to_float(), m.B.jacobian(np.eye(n)[k]))
        assert fam[k + 1].trace() == 0


def test_hk_needs_exact_coefficients():
    from eulerlike.models import BilinearForm
    with pytest.raises(TypeError):
        build_Hk(BilinearForm(2, {(0, (0, 1)): 0.5}))


# ------------------------------------------------------------------ D^k


def test_dk_hand_values():
    fam = gnse_Hk(2, 1)
    idx = {k: a for a, k in enumerate(fam.labels)}
    D = build_Dk(fam)
    assert D[(1, 0)][idx[(1, 1)]] == Fraction(2, 5)
    assert D[(1, 0)][idx[(0, 1)]] == 0


@pytest.mark.parametrize("N", [1, 2, 3, 4])
@pytest.mark.parametrize("r", R_VALUES)
def test_dk_closed_form_equals_commutator(N, r):
    fam = gnse_Hk(N, r)
    D = build_Dk(fam)  # raises DkMismatchError on any disagreement
    idx = {k: a for a, k in enumerate(fam.labels)}
    for k, diag in D.items():
        for i in fam.labels:
            assert diag[idx[neg(i)]] == -diag[idx[i]]


def test_dk_mismatch_is_a_hard_failure(monkeypatch):
    fam = gnse_Hk(2, 1)
    real = spanning.dk_closed_form
    monkeypatch.setattr(spanning, "dk_closed_form",
                        lambda N, r, k: [v * 2 for v in real(N, r, k)])
    with pytest.raises(DkMismatchError):
        build_Dk(fam)


def test_dk_needs_lattice_family():
    with pytest.raises(ValueError):
        build_Dk(build_Hk(build_l96(7, [1, 1])))


# ------------------------------------------------------------------ distinctness


def test_saturating_polynomial_zero_set():
    i, l = (1, 2), (3, -1)
    assert saturating_polynomial(i, neg(i), l, neg(l), 1) == 0
    assert saturating_polynomial((1, 0), (0, 1), (-2, 0), (1, -1), 1) != 0


def brute_tallies(N, r):
    """Pure-Python enumeration with exact D^k sums."""
    labels = lattice(N)
    idx = {k: a for a, k in enumerate(labels)}
    D = {k: dk_closed_form(N, r, k) for k in labels}
    korder = spiral_order(N)
    examined = excluded = satisfied = 0
    for i, j, l in itertools.product(labels, repeat=3):
        m = neg(add(add(i, j), l))
        if not in_lattice(m, N):
            continue
        examined += 1
        if saturating_polynomial(i, j, l, m, r) == 0:
            excluded += 1
            continue
        if any(sum(D[k][idx[q]] for q in (i, j, l, m)) for k in korder):
            satisfied += 1
    return examined, excluded, satisfied


@pytest.mark.parametrize("N,r", [(1, Fraction(1)), (2, Fraction(1)), (2, Fraction(3, 2))])
def test_scan_matches_brute_force(N, r, backend):
    rep = scan_distinctness(N, r)
    assert (rep.examined, rep.excluded, rep.satisfied) == brute_tallies(N, r)
    assert rep.examined == rep.excluded + rep.satisfied + len(rep.violations)


def test_scan_backends_agree():
    if not _accel.HAVE_NUMBA:
        pytest.skip("numba not installed")
    out = []
    for be in ("numba", "numpy"):
        prev = _accel.set_backend(be)
        try:
            out.append(scan_distinctness(3, Fraction(1, 2)).to_dict())
        finally:
            _accel.set_backend(prev)
    for d in out:
        d.pop("seconds")
    assert out[0] == out[1]


def test_zero_residues_are_settled_exactly(monkeypatch):
    """With every residue forced to zero all candidates go through the exact recheck."""
    ref = scan_distinctness(2, 1)
    monkeypatch.setattr(spanning, "_mod_table",
                        lambda N, r: np.zeros((len(lattice(N)),) * 2, dtype=np.int64))
    rep = scan_distinctness(2, 1)
    assert (rep.examined, rep.excluded, rep.satisfied) == (ref.examined, ref.excluded, ref.satisfied)
    assert not rep.violations
    assert sum(rep.witness_histogram.values()) == rep.satisfied


def test_paired_quadruple_is_excluded():
    i, l = (2, 1), (-1, 3)
    assert saturating_polynomial(i, neg(i), l, neg(l), 1) == 0


def test_witness_is_permutation_invariant():
    N, r = 3, Fraction(1)
    quad = ((1, 0), (0, 2), (-2, -1), (1, -1))
    k, s = recheck_quadruple(N, r, quad)
    for perm in itertools.permutations(quad):
        assert recheck_quadruple(N, r, perm) == (k, s)
    # the witness sum agrees with the commutator-built D^k
    fam = gnse_Hk(N, r)
    idx = {q: a for a, q in enumerate(fam.labels)}
    comm = spanning.bracket(fam[k], fam[neg(k)])
    assert sum(comm[idx[q], idx[q]] for q in quad) == s != 0


def test_distinctness_precondition():
    with pytest.raises(ValueError):
        check_distinctness(7, 1)


def test_report_tally_invariant():
    with pytest.raises(AssertionError):
        DistinctnessReport(2, Fraction(1), 10, 3, 3, [])


def test_report_json_and_progress():
    msgs = []
    rep = scan_distinctness(2, 1, chunk=8, progress=msgs.append)
    assert len(msgs) == 3 and msgs[-1].startswith("distinctness N=2 r=1: i 24/24")
    d = json.loads(rep.to_json())
    assert d["verdict"] == "holds" and d["model"] == "gnse" and d["r"] == "1"
    assert sum(c for _, c in d["witness_map"]["histogram"]) == d["satisfied"]


@pytest.mark.slow
def test_distinctness_holds_at_eight():
    rep = check_distinctness(8, 1)
    assert rep.verdict == "holds"
    assert rep.examined == rep.excluded + rep.satisfied
    assert rep.examined == 10578336 and rep.excluded == 247968


# ------------------------------------------------------------------ forcing propagation


def test_zn_axis_modes_stall():
    out = zn_propagation(GNSEConfig(3, 1, {(1, 0): (1, 1), (0, 1): (1, 1)}))
    assert not out["full"] and len(out["sets"]) == 1


def test_zn_diagonal_mode_spreads():
    out = zn_propagation(GNSEConfig(4, 1, {(1, 0): (1, 1), (0, 1): (1, 1), (1, 1): (1, 1)}))
    assert (2, 1) in out["sets"][1]
    assert out["full"]
    for a, b in zip(out["sets"], out["sets"][1:]):
        assert set(a) < set(b)


def bfs_oracle(N, r, modes):
    g = nx.DiGraph()
    labels = lattice(N)
    g.add_nodes_from(labels)
    for k in labels:
        for j in modes:
            l = add(j, k)
            if in_lattice(l, N) and coeff(j, k, r) != 0:
                g.add_edge(k, l)
    reach = set(modes)
    for s in modes:
        reach |= nx.descendants(g, s)
    return reach


def test_zn_matches_bfs_oracle():
    rnd = random.Random(5)
    for trial in range(20):
        N = rnd.choice([2, 3, 4])
        r = rnd.choice(R_VALUES)
        half = [k for k in lattice(N) if k > (0, 0)]
        chosen = rnd.sample(half, rnd.randint(1, 4))
        cfg = GNSEConfig(N, r, {k: (1, 1) for k in chosen})
        out = zn_propagation(cfg)
        assert set(out["sets"][-1]) == bfs_oracle(N, r, cfg.modes)
        assert out["full"] == (len(out["sets"][-1]) == len(lattice(N)))


# ------------------------------------------------------------------ sl(n) generation


def test_l96_seven_sites_generate_sl():
    res = verify_sl_generation(build_Hk(build_l96(7, [1, 1])))
    assert res.dim == 48 and res.saturated


def test_l96_three_sites_reported():
    fam = build_Hk(l96_form(3))
    res = verify_sl_generation(fam)
    assert res.dim == 0 and not res.saturated


def test_gnse_two_reported():
    res = verify_sl_generation(gnse_Hk(2, 1))
    assert res.dim == len(res.basis) <= 24 * 24 - 1
    assert all(b.trace() == 0 for b in res.basis)
    assert res.to_dict()["n"] == 24


def test_sl_verdict_order_independent():
    fam = build_Hk(build_l96(5, [1, 1]))
    gens = fam.generators()
    ref = verify_sl_generation(fam).dim
    rnd = random.Random(1)
    for _ in range(5):
        rnd.shuffle(gens)
        assert spanning.lie_closure(list(gens)).dim == ref
