"""Spanning checks: the H^k family, the diagonal family D^k, forcing propagation,
sl(n) generation and the distinctness condition on the Galerkin lattice."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np

from . import kernels
from .lattice import add, as_rational, coeff, format_rational, in_lattice, lattice, neg, norm2, spiral_order, sub
from .models import BilinearForm
from .liealg import RationalMatrix, bracket, lie_closure

log = logging.getLogger(__name__)

PRIME = (1 << 61) - 1


class DkMismatchError(AssertionError):
    """Closed-form D^k disagrees with the commutator [H^k, H^-k]."""


@dataclass(frozen=True, eq=False)
class HkFamily:
    """``H^k = grad [d/dx_k, B]`` for every coordinate ``k``.

    ``labels`` lists the coordinates in matrix order: ``1..n`` for real-chart
    models, lattice wavevectors for the Galerkin model.
    """

    fingerprint: str
    kind: str
    labels: tuple
    matrices: dict
    N: int | None = None
    r: Fraction | None = None

    @property
    def n(self):
        return len(self.labels)

    def generators(self):
        return [self.matrices[k] for k in self.labels]

    def __getitem__(self, k):
        return self.matrices[k]


def build_Hk(m):
    """``(H^k)_{l,j} = d_j d_k B_l`` read off the exact coefficient map.

    Galerkin models use the complex-lattice chart, where the entries are
    ``c_{j,k}`` on the band ``l = j + k``.  A bare ``BilinearForm`` is also
    accepted (e.g. the degenerate three-site Lorenz-96 form).
    """
    if isinstance(m, BilinearForm):
        form, fp, kind = m, "", "bilinear"
    elif m.kind == "gnse":
        g = m.gnse
        fam = gnse_Hk(g.N, g.r)
        return HkFamily(m.fingerprint, "gnse", fam.labels, fam.matrices, g.N, fam.r)
    else:
        form, fp, kind = m.B, m.fingerprint, m.kind
    if not form.exact:
        raise TypeError("H^k needs exact bilinear coefficients; this model was built from floats")
    n = form.n
    entries = {k: {} for k in range(n)}
    for (l, (j, k)), c in form.coeffs.items():
        c = Fraction(c)
        if j == k:
            entries[k][(l, k)] = entries[k].get((l, k), 0) + 2 * c
        else:
            entries[k][(l, j)] = entries[k].get((l, j), 0) + c
            entries[j][(l, k)] = entries[j].get((l, k), 0) + c
    labels = tuple(range(1, n + 1))
    mats = {k + 1: RationalMatrix(n, entries[k], labels) for k in range(n)}
    return HkFamily(fp, kind, labels, mats)


def gnse_Hk(N, r):
    """Galerkin ``H^k`` on the complex lattice ``Z^2_{0,N}`` (lexicographic order)."""
    r = as_rational(r)
    if isinstance(r, float) or r <= 0:
        raise ValueError("r must be a positive rational")
    if N < 1:
        raise ValueError("N must be >= 1")
    labels = lattice(N)
    idx = {k: i for i, k in enumerate(labels)}
    mats = {}
    for k in labels:
        ent = {}
        for j in labels:
            l = add(j, k)
            if in_lattice(l, N):
                c = coeff(j, k, r)
                if c:
                    ent[(idx[l], idx[j])] = c
        mats[k] = RationalMatrix(len(labels), ent, labels)
    return HkFamily(f"gnse-N{N}-r{format_rational(r)}", "gnse", labels, mats, N, r)


def dk_closed_form(N, r, k):
    """Diagonal of ``D^k``: ``c_{i,k} c_{i+k,k} 1(i+k) - c_{i,k} c_{i-k,k} 1(i-k)`` for each lattice ``i``."""
    r = as_rational(r)
    out = []
    for i in lattice(N):
        cik = coeff(i, k, r)
        v = Fraction(0)
        if cik:
            ip, im = add(i, k), sub(i, k)
            if in_lattice(ip, N):
                v += cik * coeff(ip, k, r)
            if in_lattice(im, N):
                v -= cik * coeff(im, k, r)
        out.append(v)
    return out


def build_Dk(fam, check=True):
    """``{k: diagonal of D^k}`` by the closed form, each checked against ``[H^k, H^-k]``."""
    if fam.kind != "gnse":
        raise ValueError("D^k is defined for the Galerkin lattice family")
    out = {}
    for k in fam.labels:
        if neg(k) not in fam.matrices:
            raise ValueError(f"family lacks -k for k={k}")
        diag = dk_closed_form(fam.N, fam.r, k)
        if check:
            comm = bracket(fam.matrices[k], fam.matrices[neg(k)])
            expect = RationalMatrix.diagonal(diag)
            if comm.entries != expect.entries:
                raise DkMismatchError(f"closed-form D^k differs from [H^k, H^-k] at k={k}")
        out[k] = diag
    return out


def saturating_polynomial(i, j, l, m, r):
    """``g = r^2 |i|^2|j|^2|l|^2|m|^2 (|i+j|^2+|l+m|^2)(|i+l|^2+|j+m|^2)(|i+m|^2+|j+l|^2)`` (``r``-norms).

    Nonzero exactly when all four vectors and the three pair sums are nonzero.
    """
    r = as_rational(r)
    n = lambda a: norm2(a, r)  # noqa: E731
    return (r * r * n(i) * n(j) * n(l) * n(m)
            * (n(add(i, j)) + n(add(l, m))) * (n(add(i, l)) + n(add(j, m)))
            * (n(add(i, m)) + n(add(j, l))))


@lru_cache(maxsize=8)
def _mod_table(N, r, p=PRIME):
    """``D^k_i mod p`` as an int64 array indexed ``[k, i]`` in lattice order (cached, read-only)."""
    labels = lattice(N)
    D = np.zeros((len(labels), len(labels)), dtype=np.int64)
    for a, k in enumerate(labels):
        for b, v in enumerate(dk_closed_form(N, r, k)):
            if v:
                if v.denominator % p == 0:
                    raise ArithmeticError("denominator divisible by the modulus")
                D[a, b] = v.numerator % p * pow(v.denominator, -1, p) % p
    D.flags.writeable = False
    return D


def recheck_quadruple(N, r, quad, korder=None):
    """Exact search for a witness ``k`` with ``D^k_i + D^k_j + D^k_l + D^k_m != 0``.

    Returns ``(k, value)`` for the first witness in spiral order, or None.
    """
    r = as_rational(r)
    idx = {k: a for a, k in enumerate(lattice(N))}
    for k in (korder or spiral_order(N)):
        diag = dk_closed_form(N, r, k)
        s = sum(diag[idx[q]] for q in quad)
        if s:
            return k, s
    return None


@dataclass
class DistinctnessReport:
    N: int
    r: Fraction
    examined: int
    excluded: int
    satisfied: int
    violations: list
    witness_histogram: dict = field(default_factory=dict)
    witness_samples: list = field(default_factory=list)
    seconds: float = 0.0

    def __post_init__(self):
        if self.examined != self.excluded + self.satisfied + len(self.violations):
            raise AssertionError("distinctness tallies do not add up")

    @property
    def verdict(self):
        return "holds" if not self.violations else "violated"

    def to_dict(self):
        return {
            "model": "gnse",
            "N": self.N,
            "r": format_rational(self.r),
            "verdict": self.verdict,
            "examined": self.examined,
            "excluded": self.excluded,
            "satisfied": self.satisfied,
            "violations": [[list(q) for q in v] for v in self.violations],
            "witness_map": {
                "histogram": [[list(k), c] for k, c in self.witness_histogram.items()],
                "samples": [{"quadruple": [list(q) for q in quad], "k": list(k)}
                            for quad, k in self.witness_samples],
            },
            "seconds": self.seconds,
        }

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


def cost_estimate(N):
    """Number of ordered triples ``(i, j, l)`` the pruned enumeration visits."""
    L = (2 * N + 1) ** 2 - 1
    return L ** 3


def scan_distinctness(N, r, chunk=16, progress=None):
    """Exhaustive distinctness scan for any ``N >= 1``.

    Quadruples are enumerated as ordered ``(i, j, l)`` with ``m = -i-j-l``
    in the lattice.  Witness sums are tested modulo a 61-bit prime (a
    nonzero residue certifies a nonzero rational); quadruples with no
    residue witness are re-examined exactly before being reported.
    """
    r = as_rational(r)
    if isinstance(r, float) or r <= 0:
        raise ValueError("r must be a positive rational")
    labels = lattice(N)
    L = len(labels)
    P = np.array(labels, dtype=np.int64)
    grid = np.full((2 * N + 1, 2 * N + 1), -1, dtype=np.int64)
    for a, k in enumerate(labels):
        grid[k[0] + N, k[1] + N] = a
    idx = {k: a for a, k in enumerate(labels)}
    korder_t = spiral_order(N)
    korder = np.array([idx[k] for k in korder_t], dtype=np.int64)
    D = _mod_table(N, r)
    counts = np.zeros(4, dtype=np.int64)
    hist = np.zeros(L, dtype=np.int64)
    samples = np.full((L, 5), -1, dtype=np.int64)
    viol = []
    t0 = time.perf_counter()
    for i0 in range(0, L, chunk):
        i1 = min(L, i0 + chunk)
        buf = np.empty(((i1 - i0) * L * L, 4), dtype=np.int64)
        nv = kernels.distinct_scan(i0, i1, P, grid, N, D, korder, PRIME, counts, hist, buf, samples)
        viol.extend(tuple(int(v) for v in row) for row in buf[:nv])
        msg = (f"distinctness N={N} r={format_rational(r)}: i {i1}/{L}, examined {int(counts[0])}, "
               f"candidate violations {len(viol)}")
        log.info(msg)
        if progress is not None:
            progress(msg)
    examined, excluded, satisfied, _ = (int(c) for c in counts)
    # residues can vanish by accident; settle those exactly
    violations = []
    hist_map = {labels[a]: int(c) for a, c in enumerate(hist) if c}
    for q in viol:
        quad = tuple(labels[a] for a in q)
        w = recheck_quadruple(N, r, quad, korder_t)
        if w is None:
            violations.append(quad)
        else:
            satisfied += 1
            hist_map[w[0]] = hist_map.get(w[0], 0) + 1
    hist_map = {k: hist_map[k] for k in korder_t if k in hist_map}
    wsamples = [(tuple(labels[a] for a in row[:4]), labels[row[4]])
                for row in samples if row[0] >= 0]
    return DistinctnessReport(N, r, examined, excluded, satisfied, violations, hist_map,
                              wsamples, time.perf_counter() - t0)


def check_distinctness(N, r, **kw):
    """Distinctness over ``Z^2_{0,N}``, for the range ``N >= 8`` where it is claimed."""
    if N < 8:
        raise ValueError("distinctness is stated for N >= 8; use scan_distinctness for smaller N")
    log.info("distinctness N=%d: %d ordered triples before pruning", N, cost_estimate(N))
    return scan_distinctness(N, r, **kw)


def zn_propagation(cfg):
    """Grow ``Z^0`` (forced modes) by ``Z^{n+1} = Z^n + {j + k : j in Z^0, k in Z^n, c_{j,k} != 0}``.

    Returns ``{"sets": [Z^0, Z^1, ...], "full": bool}`` with each set sorted.
    """
    N = cfg.N
    r = as_rational(cfg.r)
    z0 = sorted(cfg.modes)
    cur = set(z0)
    sets = [sorted(cur)]
    while True:
        nxt = set(cur)
        for k in cur:
            for j in z0:
                l = add(j, k)
                if in_lattice(l, N) and coeff(j, k, r) != 0:
                    nxt.add(l)
        if nxt == cur:
            break
        cur = nxt
        sets.append(sorted(cur))
    return {"sets": sets, "full": len(cur) == len(lattice(N))}


def verify_sl_generation(fam, max_depth=None):
    """Exact closure of ``{H^k}``; ``saturated`` means the algebra is all of ``sl(n)``."""
    return lie_closure(fam.generators(), max_depth)


__all__ = [
    "DistinctnessReport", "DkMismatchError", "HkFamily", "build_Dk", "build_Hk",
    "check_distinctness", "cost_estimate", "dk_closed_form", "gnse_Hk", "recheck_quadruple",
    "saturating_polynomial", "scan_distinctness", "verify_sl_generation", "zn_propagation",
]
