"""Exact rational matrix Lie algebras: brackets, span ranks and bracket closure.

Matrices are stored sparsely as ``{(row, col): Fraction}``.  The closure works
on integer content-normalised copies of the generators (scaling does not
change a span), keeping an incrementally reduced echelon basis.
"""

from __future__ import annotations

import json
import math
import warnings
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce

from .lattice import as_rational, format_rational


class RationalMatrix:
    """Sparse ``n x n`` matrix of exact rationals.

    ``labels`` optionally names the coordinates (e.g. lattice wavevectors);
    position ``i`` corresponds to ``labels[i]``.
    """

    __slots__ = ("n", "entries", "labels")

    def __init__(self, n, entries=None, labels=None):
        self.n = int(n)
        clean = {}
        for (i, j), v in (entries or {}).items():
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise ValueError(f"entry {(i, j)} out of range for n={self.n}")
            v = as_rational(v)
            if isinstance(v, float):
                raise TypeError("RationalMatrix entries must be exact")
            if v:
                clean[(int(i), int(j))] = v
        self.entries = clean
        if labels is not None and len(labels) != self.n:
            raise ValueError("labels must have one entry per coordinate")
        self.labels = None if labels is None else tuple(labels)

    @classmethod
    def _raw(cls, n, entries, labels=None):
        out = cls.__new__(cls)
        out.n, out.entries, out.labels = n, entries, labels
        return out

    # construction helpers
    @classmethod
    def elementary(cls, n, i, j, labels=None):
        return cls(n, {(i, j): 1}, labels)

    @classmethod
    def diagonal(cls, values, labels=None):
        return cls(len(values), {(i, i): v for i, v in enumerate(values)}, labels)

    @classmethod
    def from_dense(cls, rows, labels=None):
        n = len(rows)
        if any(len(r) != n for r in rows):
            raise ValueError("matrix must be square")
        return cls(n, {(i, j): rows[i][j] for i in range(n) for j in range(n)}, labels)

    def to_dense(self):
        out = [[Fraction(0)] * self.n for _ in range(self.n)]
        for (i, j), v in self.entries.items():
            out[i][j] = v
        return out

    def to_float(self):
        import numpy as np
        a = np.zeros((self.n, self.n))
        for (i, j), v in self.entries.items():
            a[i, j] = float(v)
        return a

    # arithmetic
    def _check(self, other):
        if not isinstance(other, RationalMatrix):
            raise TypeError("expected a RationalMatrix")
        if other.n != self.n:
            raise ValueError(f"size mismatch: {self.n} vs {other.n}")

    def __add__(self, other):
        self._check(other)
        out = dict(self.entries)
        for k, v in other.entries.items():
            s = out.get(k, 0) + v
            if s:
                out[k] = s
            else:
                out.pop(k, None)
        return RationalMatrix._raw(self.n, out, self.labels)

    def __neg__(self):
        return RationalMatrix._raw(self.n, {k: -v for k, v in self.entries.items()}, self.labels)

    def __sub__(self, other):
        return self + (-other)

    def scale(self, c):
        c = as_rational(c)
        if not c:
            return RationalMatrix._raw(self.n, {}, self.labels)
        return RationalMatrix._raw(self.n, {k: c * v for k, v in self.entries.items()}, self.labels)

    def __matmul__(self, other):
        self._check(other)
        return RationalMatrix._raw(self.n, _matmul(self.entries, other.entries), self.labels)

    def __eq__(self, other):
        return isinstance(other, RationalMatrix) and self.n == other.n and self.entries == other.entries

    __hash__ = None

    def __getitem__(self, ij):
        return self.entries.get(ij, Fraction(0))

    def trace(self):
        return sum((v for (i, j), v in self.entries.items() if i == j), Fraction(0))

    def is_zero(self):
        return not self.entries

    def is_diagonal(self):
        return all(i == j for i, j in self.entries)

    def __repr__(self):
        return f"RationalMatrix(n={self.n}, nnz={len(self.entries)})"

    # I/O
    def to_dict(self):
        d = {"n": self.n,
             "entries": [[i, j, format_rational(v)] for (i, j), v in sorted(self.entries.items())]}
        if self.labels is not None:
            d["labels"] = [list(l) if isinstance(l, tuple) else l for l in self.labels]
        return d

    @classmethod
    def from_dict(cls, d):
        labels = d.get("labels")
        if labels is not None:
            labels = [tuple(l) if isinstance(l, list) else l for l in labels]
        return cls(d["n"], {(int(i), int(j)): Fraction(v) for i, j, v in d["entries"]}, labels)

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def _matmul(a, b):
    brows = {}
    for (k, j), v in b.items():
        brows.setdefault(k, []).append((j, v))
    out = {}
    for (i, k), av in a.items():
        for j, bv in brows.get(k, ()):
            key = (i, j)
            out[key] = out.get(key, 0) + av * bv
    return {k: v for k, v in out.items() if v}


def _commutator(a, b):
    ab = _matmul(a, b)
    for k, v in _matmul(b, a).items():
        s = ab.get(k, 0) - v
        if s:
            ab[k] = s
        else:
            ab.pop(k, None)
    return ab


def bracket(a, b):
    """``[A, B] = AB - BA`` in exact arithmetic."""
    a._check(b)
    return RationalMatrix._raw(a.n, _commutator(a.entries, b.entries), a.labels)


# ------------------------------------------------------------------ rank


def _integer_rows(mats):
    """Vectorise and clear denominators row by row (rank is unchanged)."""
    cols = sorted({k for m in mats for k in m.entries})
    index = {k: c for c, k in enumerate(cols)}
    rows = []
    for m in mats:
        if not m.entries:
            continue
        den = reduce(math.lcm, (v.denominator for v in m.entries.values()), 1)
        row = [0] * len(cols)
        for k, v in m.entries.items():
            row[index[k]] = v.numerator * (den // v.denominator)
        rows.append(row)
    return rows, len(cols)


def bareiss_rank(rows, ncols):
    """Rank of an integer matrix by fraction-free (Bareiss) elimination."""
    a = [list(r) for r in rows]
    m = len(a)
    rank = 0
    prev = 1
    for c in range(ncols):
        piv = next((r for r in range(rank, m) if a[r][c] != 0), None)
        if piv is None:
            continue
        a[rank], a[piv] = a[piv], a[rank]
        p = a[rank][c]
        for r in range(rank + 1, m):
            arc = a[r][c]
            row_r, row_p = a[r], a[rank]
            for cc in range(c + 1, ncols):
                row_r[cc] = (p * row_r[cc] - arc * row_p[cc]) // prev
            row_r[c] = 0
        prev = p
        rank += 1
        if rank == m:
            break
    return rank


def span_rank(mats):
    """Exact dimension of the span of ``mats`` inside the matrix space."""
    mats = list(mats)
    if not mats:
        return 0
    n = mats[0].n
    if any(m.n != n for m in mats):
        raise ValueError("all matrices must have the same size")
    rows, ncols = _integer_rows(mats)
    return bareiss_rank(rows, ncols)


# ------------------------------------------------------------------ echelon


def _primitive(vec):
    """Integer dict vector divided by its content, leading entry made positive."""
    g = reduce(math.gcd, vec.values(), 0)
    lead = vec[min(vec)]
    if lead < 0:
        g = -g
    return {k: v // g for k, v in vec.items()}


def _to_integer(entries):
    den = reduce(math.lcm, (v.denominator for v in entries.values()), 1)
    return _primitive({k: int(v * den) for k, v in entries.items()})


class Echelon:
    """Fully reduced integer echelon basis of a subspace of sparse vectors."""

    def __init__(self):
        self.rows = {}  # pivot key -> primitive integer row

    def __len__(self):
        return len(self.rows)

    def reduce(self, vec):
        v = dict(vec)
        for p in [k for k in v if k in self.rows]:
            c = v.get(p)
            if not c:
                continue
            row = self.rows[p]
            a = row[p]
            g = math.gcd(a, c)
            sa, sc = a // g, c // g
            if sa != 1:
                for k in v:
                    v[k] *= sa
            for k, w in row.items():
                s = v.get(k, 0) - sc * w
                if s:
                    v[k] = s
                else:
                    v.pop(k, None)
        return _primitive(v) if v else v

    def insert(self, vec):
        """Add ``vec`` if it is independent; returns True when the rank grew."""
        v = self.reduce(vec)
        if not v:
            return False
        p = min(v)
        a = v[p]
        for q, row in self.rows.items():
            c = row.get(p)
            if not c:
                continue
            g = math.gcd(a, c)
            sa, sc = a // g, c // g
            new = {k: w * sa for k, w in row.items()} if sa != 1 else dict(row)
            for k, w in v.items():
                s = new.get(k, 0) - sc * w
                if s:
                    new[k] = s
                else:
                    new.pop(k, None)
            self.rows[q] = _primitive(new)
        self.rows[p] = v
        return True

    def contains(self, vec):
        return not self.reduce(vec)


# ------------------------------------------------------------------ closure


@dataclass
class ClosureResult:
    """Independent spanning set of the generated Lie algebra.

    ``generations[i]`` is the bracket depth at which ``basis[i]`` appeared
    (0 for generators).  Basis elements are brackets of the content-normalised
    generators, so they lie in the algebra but need not equal the raw input.
    """

    basis: list
    dim: int
    saturated: bool
    generations: list
    n: int
    traceless: bool = True
    depth_reached: int = 0
    _echelon: Echelon = field(default=None, repr=False, compare=False)

    @property
    def target(self):
        return self.n * self.n - 1 if self.traceless else self.n * self.n

    def histogram(self):
        return dict(sorted(Counter(self.generations).items()))

    def contains(self, mat):
        if mat.n != self.n:
            raise ValueError("size mismatch")
        if not mat.entries:
            return True
        return self._echelon.contains(_to_integer(mat.entries))

    def to_dict(self):
        return {
            "n": self.n,
            "dim": self.dim,
            "target": self.target,
            "saturated": self.saturated,
            "depth_reached": self.depth_reached,
            "generation_histogram": {str(k): v for k, v in self.histogram().items()},
        }

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


def lie_closure(generators, max_depth=None):
    """Span of all iterated brackets of ``generators``, computed breadth first.

    Each generation brackets the previous generation's new basis elements
    with every generator; only rank-increasing brackets are kept.  Stops when
    a generation adds nothing, the dimension reaches ``n^2 - 1`` (``n^2`` if
    some generator has nonzero trace), or ``max_depth`` generations were done.
    """
    generators = list(generators)
    if not generators:
        raise ValueError("need at least one generator")
    n = generators[0].n
    if any(g.n != n for g in generators):
        raise ValueError("all generators must have the same size")
    if max_depth is None:
        max_depth = n * n
    if max_depth < 1:
        raise ValueError("max_depth must be >= 1")
    traceless = all(g.trace() == 0 for g in generators)
    if not traceless:
        warnings.warn("generators are not traceless; closure measured against gl(n)", stacklevel=2)
    target = n * n - 1 if traceless else n * n
    labels = generators[0].labels

    ech = Echelon()
    basis, gens_of, frontier = [], [], []
    gint = []
    for g in generators:
        if not g.entries:
            continue
        v = _to_integer(g.entries)
        gint.append(v)
        if ech.insert(v):
            basis.append(v)
            gens_of.append(0)
            frontier.append(v)
    depth = 0
    while frontier and len(ech) < target and depth < max_depth:
        depth += 1
        new = []
        for b in frontier:
            for g in gint:
                c = _commutator(g, b)
                if c and ech.insert(c):
                    basis.append(c)
                    gens_of.append(depth)
                    new.append(c)
                    if len(ech) == target:
                        break
            if len(ech) == target:
                break
        frontier = new
    mats = [RationalMatrix._raw(n, {k: Fraction(v) for k, v in b.items()}, labels) for b in basis]
    return ClosureResult(mats, len(ech), len(ech) == n * n - 1, gens_of, n, traceless, depth, ech)


__all__ = [
    "ClosureResult", "Echelon", "RationalMatrix", "bareiss_rank", "bracket", "lie_closure",
    "span_rank",
]
