"""Euler-like bilinear models: ``dx = (B(x,x) - eps A x) dt + s(eps) sum_k X_k dW^k``.

``s(eps)`` is 1 in the unscaled form and ``sqrt(eps)`` in the
fluctuation-dissipation form.  Two concrete nonlinearities are provided
(Lorenz-96 and the 2D Galerkin Navier-Stokes truncation) plus a purely
linear Ornstein-Uhlenbeck benchmark with ``B = 0``.

Models are immutable; every numeric view handed to the kernels is a
read-only array.
"""

from __future__ import annotations

import enum
import hashlib
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Mapping

import numpy as np

from . import kernels
from .lattice import (as_rational, coeff, format_rational, half_lattice, in_lattice,
                      lattice, neg, norm2, sub)


class Scaling(str, enum.Enum):
    UNSCALED = "unscaled"
    FLUCTUATION_DISSIPATION = "fd"


def _readonly(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class BilinearForm:
    """Symmetric bilinear map stored as monomial coefficients.

    ``coeffs[(l, (j, k))]`` with ``j <= k`` (0-based) is the coefficient of
    ``x_j x_k`` in ``B_l(x, x)``; the polarised form is
    ``B_l(x, y) = sum c (x_j y_k + x_k y_j) / 2``.
    """

    n: int
    coeffs: Mapping

    def __post_init__(self):
        clean = {}
        for (l, (j, k)), c in self.coeffs.items():
            if not (0 <= l < self.n and 0 <= j < self.n and 0 <= k < self.n):
                raise ValueError(f"coefficient index {(l, (j, k))} out of range for n={self.n}")
            key = (l, (min(j, k), max(j, k)))
            clean[key] = clean.get(key, 0) + c
        object.__setattr__(self, "coeffs", {key: c for key, c in sorted(clean.items()) if c != 0})

    @property
    def exact(self):
        return all(isinstance(c, (int, Fraction)) for c in self.coeffs.values())

    @cached_property
    def arrays(self):
        m = len(self.coeffs)
        bl = np.empty(m, dtype=np.int64)
        bj = np.empty(m, dtype=np.int64)
        bk = np.empty(m, dtype=np.int64)
        bc = np.empty(m, dtype=float)
        for t, ((l, (j, k)), c) in enumerate(self.coeffs.items()):
            bl[t], bj[t], bk[t], bc[t] = l, j, k, float(c)
        for a in (bl, bj, bk, bc):
            a.setflags(write=False)
        return bl, bj, bk, bc

    def norm(self):
        """Euclidean norm of the coefficient vector."""
        return math.sqrt(sum(float(c) ** 2 for c in self.coeffs.values()))

    def __call__(self, x, y=None):
        x = np.asarray(x, dtype=float)
        y = x if y is None else np.asarray(y, dtype=float)
        bl, bj, bk, bc = self.arrays
        w = 0.5 * bc * (x[bj] * y[bk] + x[bk] * y[bj])
        return np.bincount(bl, weights=w, minlength=self.n).astype(float)

    def jacobian(self, x):
        """Matrix of ``v -> 2 B(x, v)``, the derivative of ``x -> B(x, x)``."""
        x = np.asarray(x, dtype=float)
        return kernels._np_jac_B(x, *self.arrays)


@dataclass(frozen=True)
class GNSEConfig:
    """Galerkin truncation ``N``, aspect ratio ``r`` and forced modes.

    ``forcing`` maps a wavevector to its amplitude pair ``(alpha, beta)``.
    Either member of a ``+-k`` pair may be given; the set is closed under
    negation on construction.
    """

    N: int
    r: Fraction | float = Fraction(1)
    forcing: Mapping = field(default_factory=dict)

    def __post_init__(self):
        r = as_rational(self.r)
        if r <= 0:
            raise ValueError("aspect ratio r must be positive")
        object.__setattr__(self, "r", r)
        if int(self.N) != self.N or self.N < 1:
            raise ValueError("truncation N must be a positive integer")
        half = {}
        for k, amp in self.forcing.items():
            k = (int(k[0]), int(k[1]))
            if not in_lattice(k, self.N):
                raise ValueError(f"forced mode {k} is outside Z^2_(0,{self.N})")
            alpha, beta = (as_rational(a) for a in amp)
            if (alpha == 0) != (beta == 0):
                raise ValueError(f"mode {k}: alpha_k = 0 must hold iff beta_k = 0")
            if alpha == 0:
                continue
            rep = k if k in half_lattice(self.N) else neg(k)
            if rep in half and half[rep] != (alpha, beta):
                raise ValueError(f"modes {k} and {neg(k)} carry different amplitudes")
            half[rep] = (alpha, beta)
        object.__setattr__(self, "forcing", dict(sorted(half.items())))

    @property
    def modes(self):
        """The forced set Z^0, closed under negation."""
        out = set(self.forcing)
        out |= {neg(k) for k in self.forcing}
        return frozenset(out)

    @property
    def dimension(self):
        return (2 * self.N + 1) ** 2 - 1


@dataclass(frozen=True, eq=False)
class BilinearModel:
    B: BilinearForm
    A: np.ndarray
    forcing: np.ndarray
    epsilon: Fraction | float
    scaling: Scaling = Scaling.FLUCTUATION_DISSIPATION
    kind: str = "bilinear"
    params: Mapping = field(default_factory=dict)
    gnse: GNSEConfig | None = None
    rescaled_from: float | None = None

    def __post_init__(self):
        n = self.B.n
        A = _readonly(self.A)
        if A.shape != (n, n):
            raise ValueError(f"damping matrix must be {n}x{n}, got {A.shape}")
        if not np.allclose(A, A.T, rtol=0, atol=1e-14 * max(1.0, np.abs(A).max())):
            raise ValueError("damping matrix must be symmetric")
        if np.linalg.eigvalsh(A).min() <= 0:
            raise ValueError("damping matrix must be positive definite")
        F = _readonly(np.reshape(self.forcing, (-1, n)) if np.size(self.forcing) else np.zeros((0, n)))
        if F.shape[0] and np.any(np.all(F == 0, axis=1)):
            raise ValueError("forcing vectors must be nonzero")
        eps = self.epsilon if isinstance(self.epsilon, (Fraction, float)) else as_rational(self.epsilon)
        if eps < 0:
            raise ValueError("epsilon must be non-negative")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "forcing", F)
        object.__setattr__(self, "epsilon", eps)
        object.__setattr__(self, "scaling", Scaling(self.scaling))

    @property
    def n(self):
        return self.B.n

    @property
    def eps(self):
        return float(self.epsilon)

    @property
    def n_forcing(self):
        return self.forcing.shape[0]

    @property
    def noise_scale(self):
        return math.sqrt(self.eps) if self.scaling is Scaling.FLUCTUATION_DISSIPATION else 1.0

    @cached_property
    def _diag(self):
        d = np.diag(self.A).copy()
        d.setflags(write=False)
        return d, bool(np.all(self.A == np.diag(d)))

    @property
    def kernel_args(self):
        """Arguments ``(bl, bj, bk, bc, adiag, A, diag_only, eps)`` for :mod:`kernels`."""
        d, diag_only = self._diag
        return (*self.B.arrays, d, self.A, diag_only, self.eps)

    def trace_A(self):
        return float(np.trace(self.A))

    def drift(self, x):
        return eval_drift(self, x)

    def jacobian(self, x):
        return eval_drift_jacobian(self, x)

    def with_epsilon(self, epsilon):
        return BilinearModel(self.B, self.A, self.forcing, epsilon, self.scaling, self.kind,
                             self.params, self.gnse, self.rescaled_from)

    def to_dict(self):
        return model_to_dict(self)

    @cached_property
    def fingerprint(self):
        blob = json.dumps(model_to_dict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _check_dim(m, x):
    x = np.asarray(x, dtype=float)
    if x.shape != (m.n,):
        raise ValueError(f"state has shape {x.shape}, model dimension is {m.n}")
    return x


def eval_drift(m, x):
    """``B(x, x) - eps A x``."""
    x = _check_dim(m, x)
    return kernels.drift(x, *m.kernel_args)


def eval_drift_jacobian(m, x):
    """Matrix of ``v -> 2 B(x, v) - eps A v``."""
    x = _check_dim(m, x)
    return kernels.jacobian(x, *m.kernel_args)


# ---------------------------------------------------------------- Lorenz-96

def l96_form(n):
    """``B_l(x,x) = x_{l+1} x_{l-1} - x_{l-2} x_{l-1}`` with cyclic 1-based indices.

    For ``n = 3`` the two products coincide and the form vanishes identically.
    """
    if n < 3:
        raise ValueError("Lorenz-96 needs n >= 3")
    c = {}

    def idx(i):  # 1-based cyclic -> 0-based
        return (i - 1) % n

    for l in range(1, n + 1):
        key = (idx(l), tuple(sorted((idx(l + 1), idx(l - 1)))))
        c[key] = c.get(key, 0) + Fraction(1)
        key = (idx(l), tuple(sorted((idx(l - 2), idx(l - 1)))))
        c[key] = c.get(key, 0) - Fraction(1)
    return BilinearForm(n, c)


def build_l96(n, q, epsilon=Fraction(1, 10), scaling=Scaling.FLUCTUATION_DISSIPATION):
    """Lorenz-96 with ``A = I`` and forcing ``X_k = q_k e_k``.

    ``q`` is either a mapping from 1-based coordinate to amplitude or a
    sequence whose first entry drives coordinate 1.  Zero amplitudes are
    dropped.
    """
    if n < 4:
        raise ValueError("Lorenz-96 needs n >= 4 (cyclic indices collide below that)")
    items = q.items() if isinstance(q, Mapping) else enumerate(q, start=1)
    amps = {}
    for k, a in items:
        k = int(k)
        if not 1 <= k <= n:
            raise ValueError(f"forcing coordinate {k} outside 1..{n}")
        a = as_rational(a)
        if a != 0:
            amps[k] = a
    if not amps:
        raise ValueError("at least one forcing amplitude must be nonzero")
    F = np.zeros((len(amps), n))
    for row, (k, a) in enumerate(sorted(amps.items())):
        F[row, k - 1] = float(a)
    params = {"n": n, "forcing": {str(k): format_rational(a) for k, a in sorted(amps.items())}}
    return BilinearModel(l96_form(n), np.eye(n), F, as_rational(epsilon), scaling, "l96", params)


# ------------------------------------------------------- Galerkin 2D Navier-Stokes

def gnse_real_index(N):
    """Map half-lattice mode -> (index of Re w_k, index of Im w_k)."""
    return {k: (2 * p, 2 * p + 1) for p, k in enumerate(half_lattice(N))}


def gnse_form(N, r):
    """Real-coordinate form of ``B_k(w,w) = 1/2 sum_{j+l=k} c_{j,l} w_j w_l``.

    Coordinates are ``(Re w_k, Im w_k)`` over the half lattice, with
    ``w_{-k} = conj(w_k)``.
    """
    r = as_rational(r)
    index = gnse_real_index(N)

    def expand(j):
        # w_j as a combination of real coordinates with coefficients in {1, +-i}
        if j in index:
            a, b = index[j]
            return ((a, (1, 0)), (b, (0, 1)))
        a, b = index[neg(j)]
        return ((a, (1, 0)), (b, (0, -1)))

    half = Fraction(1, 2) if isinstance(r, Fraction) else 0.5
    out = {}
    L = lattice(N)
    for k, (ia, ib) in index.items():
        for j in L:
            l = sub(k, j)
            if not in_lattice(l, N):
                continue
            c = coeff(j, l, r)
            if c == 0:
                continue
            for p, (u1, v1) in expand(j):
                for q, (u2, v2) in expand(l):
                    re = u1 * u2 - v1 * v2
                    im = u1 * v2 + v1 * u2
                    mono = (min(p, q), max(p, q))
                    if re:
                        out[(ia, mono)] = out.get((ia, mono), 0) + half * c * re
                    if im:
                        out[(ib, mono)] = out.get((ib, mono), 0) + half * c * im
    return BilinearForm(2 * len(index), out)


def build_gnse(cfg, epsilon=Fraction(1, 10), scaling=Scaling.FLUCTUATION_DISSIPATION):
    """Galerkin-truncated 2D stochastic Navier-Stokes in real coordinates.

    ``A`` is diagonal with ``|k|_r^2`` on both coordinates of mode ``k``; each
    forced mode contributes two forcing vectors ``alpha_k e_Re`` and
    ``beta_k e_Im``.
    """
    if cfg.N < 2:
        raise ValueError("Galerkin truncation needs N >= 2")
    if not cfg.forcing:
        raise ValueError("at least one forced mode is required")
    index = gnse_real_index(cfg.N)
    n = 2 * len(index)
    diag = np.zeros(n)
    for k, (a, b) in index.items():
        diag[a] = diag[b] = float(norm2(k, cfg.r))
    rows = []
    for k, (alpha, beta) in cfg.forcing.items():
        a, b = index[k]
        for i, amp in ((a, alpha), (b, beta)):
            v = np.zeros(n)
            v[i] = float(amp)
            rows.append(v)
    params = {
        "N": cfg.N,
        "r": format_rational(cfg.r),
        "forcing": [{"k": list(k), "alpha": format_rational(a), "beta": format_rational(b)}
                    for k, (a, b) in cfg.forcing.items()],
    }
    return BilinearModel(gnse_form(cfg.N, cfg.r), np.diag(diag), np.array(rows),
                         as_rational(epsilon), scaling, "gnse", params, gnse=cfg)


# ------------------------------------------------------------ linear benchmark

def build_linear(A, forcing, epsilon=Fraction(1, 10), scaling=Scaling.FLUCTUATION_DISSIPATION):
    """Ornstein-Uhlenbeck model: ``B = 0``, damping ``A``, forcing rows ``forcing``."""
    A_exact = [[as_rational(v) for v in row] for row in A]
    F_exact = [[as_rational(v) for v in row] for row in forcing]
    n = len(A_exact)
    F_exact = [row for row in F_exact if any(v != 0 for v in row)]
    params = {
        "A": [[format_rational(v) for v in row] for row in A_exact],
        "forcing": [[format_rational(v) for v in row] for row in F_exact],
    }
    A_num = np.array([[float(v) for v in row] for row in A_exact])
    F_num = np.array([[float(v) for v in row] for row in F_exact]).reshape(-1, n)
    return BilinearModel(BilinearForm(n, {}), A_num, F_num, as_rational(epsilon), scaling,
                         "linear", params)


def build_ou(a_diag, q, epsilon=Fraction(1, 10), scaling=Scaling.FLUCTUATION_DISSIPATION):
    """Diagonal OU benchmark with forcing ``q_k e_k`` (zero entries dropped)."""
    n = len(a_diag)
    A = [[a_diag[i] if i == j else 0 for j in range(n)] for i in range(n)]
    F = [[q[i] if i == j else 0 for j in range(n)] for i in range(n)]
    return build_linear(A, F, epsilon, scaling)


# ---------------------------------------------------------------- rescaling

def rescale_fd(m):
    """Unscaled model with parameter eps -> equivalent FD-form model with ``eps^(3/2)``.

    The map ``y_t = sqrt(eps) x_{sqrt(eps) t}`` relates the two, so exponents
    satisfy ``lambda_hat = sqrt(eps) lambda`` and ``lambda_hat / eps_hat ==
    lambda / eps``.  The original parameter is kept in ``rescaled_from``.
    """
    if m.scaling is Scaling.FLUCTUATION_DISSIPATION:
        raise ValueError("model is already in fluctuation-dissipation form")
    eps = m.epsilon
    eps_hat = float(eps) ** 1.5
    if isinstance(eps, Fraction):
        rn, rd = math.isqrt(eps.numerator), math.isqrt(eps.denominator)
        if rn * rn == eps.numerator and rd * rd == eps.denominator:
            eps_hat = eps * Fraction(rn, rd)
    return BilinearModel(m.B, m.A, m.forcing, eps_hat, Scaling.FLUCTUATION_DISSIPATION, m.kind,
                         m.params, m.gnse, rescaled_from=float(eps))


def exponent_from_rescaled(lam_hat, m_hat):
    """Convert an exponent of a rescaled model back to the unscaled time units."""
    if m_hat.rescaled_from is None:
        raise ValueError("model was not produced by rescale_fd")
    return lam_hat / math.sqrt(m_hat.rescaled_from)


# ------------------------------------------------------------ serialisation

def model_to_dict(m):
    d = {"kind": m.kind, **m.params, "epsilon": format_rational(m.epsilon),
         "scaling": m.scaling.value}
    if m.rescaled_from is not None:
        d["rescaled_from"] = m.rescaled_from
    if m.kind == "bilinear":
        d["n"] = m.n
        d["coeffs"] = [[l, j, k, format_rational(c)] for (l, (j, k)), c in m.B.coeffs.items()]
        d["A"] = m.A.tolist()
        d["forcing"] = m.forcing.tolist()
    return d


def model_from_dict(d):
    """Inverse of :func:`model_to_dict`; raises ``KeyError``/``ValueError`` on bad input."""
    kind = d["kind"]
    eps = as_rational(d.get("epsilon", "1/10"))
    scaling = Scaling(d.get("scaling", "fd"))
    if kind == "l96":
        m = build_l96(int(d["n"]), d["forcing"], eps, scaling)
    elif kind == "gnse":
        forcing = {}
        for entry in d["forcing"]:
            forcing[tuple(entry["k"])] = (entry["alpha"], entry.get("beta", entry["alpha"]))
        m = build_gnse(GNSEConfig(int(d["N"]), d.get("r", "1"), forcing), eps, scaling)
    elif kind == "linear":
        if "A" in d:
            m = build_linear(d["A"], d["forcing"], eps, scaling)
        else:
            m = build_ou(d["A_diag"], d["forcing"], eps, scaling)
    elif kind == "bilinear":
        n = int(d["n"])
        B = BilinearForm(n, {(l, (j, k)): as_rational(c) for l, j, k, c in d["coeffs"]})
        m = BilinearModel(B, np.array(d["A"], dtype=float), np.array(d["forcing"], dtype=float),
                          eps, scaling)
    else:
        raise ValueError(f"unknown model kind {kind!r}")
    if d.get("rescaled_from") is not None:
        object.__setattr__(m, "rescaled_from", float(d["rescaled_from"]))
        m.__dict__.pop("fingerprint", None)
    return m
