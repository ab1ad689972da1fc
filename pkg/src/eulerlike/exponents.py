"""Top-level estimators: top exponent, epsilon sweeps, moment exponents, Fisher and FK checks."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_continuous_lyapunov
from scipy.special import logsumexp

from .estimates import ExponentEstimate, batch_estimate
from .projective import _unit, fk_integrands, initial_frame, qr_spectrum, tangent_run
from .sde import BlowUpError, map_jobs


class DegenerateForcingError(ValueError):
    """The forcing does not span R^n, so the stationary law has no density."""


def _x0(m, x0):
    return np.zeros(m.n) if x0 is None else np.asarray(x0, dtype=float)


def _top_task(args):
    m, x0, cfg = args
    try:
        return tangent_run(m, x0, cfg, 1, 1)
    except BlowUpError as err:
        return err


def top_exponent(m, cfg, n_seeds=1, x0=None, jobs=1):
    """Mean of ``log|D phi v| / T`` over seeds ``cfg.seed .. cfg.seed + n_seeds - 1``.

    Runs that blow up are dropped and counted in ``excluded``; if all of them
    fail the first error is raised.
    """
    if n_seeds < 1:
        raise ValueError("n_seeds must be >= 1")
    x0 = _x0(m, x0)
    runs = map_jobs(_top_task, [(m, x0, cfg.with_seed(cfg.seed + s)) for s in range(n_seeds)], jobs)
    good = [r for r in runs if not isinstance(r, BlowUpError)]
    if not good:
        raise runs[0]
    per_seed = [r["exponents"][0] for r in good]
    return batch_estimate(per_seed, good[0]["blocks"][:, 0], good[0]["T"], cfg.dt,
                          m.fingerprint, len(runs) - len(good))


@dataclass(frozen=True)
class SweepRow:
    epsilon: float
    lambda1: ExponentEstimate
    lambda_sum: ExponentEstimate | None
    minus_eps_trA: float

    @property
    def ratio(self):
        return self.lambda1.value / self.epsilon

    @property
    def ratio_stderr(self):
        return self.lambda1.stderr / self.epsilon

    @property
    def lambda_sum_check(self):
        """Relative mismatch of the measured sum exponent against ``-eps tr A``."""
        if self.lambda_sum is None:
            return None
        return abs(self.lambda_sum.value - self.minus_eps_trA) / abs(self.minus_eps_trA)


@dataclass(frozen=True)
class SweepResult:
    rows: list

    @property
    def trend(self):
        """Ratio at the smallest epsilon minus ratio at the largest."""
        return self.rows[-1].ratio - self.rows[0].ratio

    @property
    def trend_stderr(self):
        return math.hypot(self.rows[-1].ratio_stderr, self.rows[0].ratio_stderr)

    def to_dict(self):
        return {
            "rows": [{
                "epsilon": r.epsilon,
                "lambda1": r.lambda1.value,
                "stderr": r.lambda1.stderr,
                "ratio": r.ratio,
                "ratio_stderr": r.ratio_stderr,
                "lambda_sum": None if r.lambda_sum is None else r.lambda_sum.value,
                "minus_eps_trA": r.minus_eps_trA,
                "lambda_sum_check": r.lambda_sum_check,
                "n_seeds": r.lambda1.n_seeds,
                "T": r.lambda1.T,
                "dt": r.lambda1.dt,
                "fingerprint": r.lambda1.fingerprint,
            } for r in self.rows],
            "trend": self.trend,
            "trend_stderr": self.trend_stderr,
        }

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epsilon", "lambda1", "stderr", "ratio", "lambda_sum", "minus_eps_trA"])
            for r in self.rows:
                w.writerow([r.epsilon, r.lambda1.value, r.lambda1.stderr, r.ratio,
                            "" if r.lambda_sum is None else r.lambda_sum.value, r.minus_eps_trA])

    def write_json(self, path, **meta):
        with open(path, "w") as fh:
            json.dump({**meta, **self.to_dict()}, fh, indent=2)


def epsilon_sweep(template, eps_list, cfg, n_seeds=1, x0=None, full_spectrum=True, jobs=1):
    """One row per epsilon (given in descending order).

    With ``full_spectrum`` the whole QR spectrum is computed so each row also
    carries the measured sum exponent; ``lambda1`` is its leading entry.
    """
    eps_list = [float(e) for e in eps_list]
    if not eps_list or any(e <= 0 for e in eps_list):
        raise ValueError("epsilon values must be positive")
    if any(a <= b for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("epsilon values must be strictly descending")
    x0 = _x0(template, x0)
    rows = []
    for eps in eps_list:
        m = template.with_epsilon(eps)
        if full_spectrum:
            sp = qr_spectrum(m, x0, cfg, m.n, n_seeds, jobs=jobs)
            lam1, lam_sum = sp.exponents[0], sp.lambda_sum
        else:
            lam1, lam_sum = top_exponent(m, cfg, n_seeds, x0, jobs), None
        rows.append(SweepRow(eps, lam1, lam_sum, -eps * m.trace_A()))
    return SweepResult(rows)


def moment_lyapunov(m, cfg, p_list, ensemble=100, x0=None, v0=None, jobs=1):
    """``Lambda(p) ~ (1/T) log mean |D phi^T v|^p`` over an ensemble of independent paths.

    Member ``s`` uses seed ``cfg.seed + s``.  Returns a dict with ``p``,
    ``Lambda``, jackknife ``stderr`` and the per-member log growths.
    """
    if ensemble < 100:
        raise ValueError("moment exponents need an ensemble of at least 100 paths")
    p = np.asarray(p_list, dtype=float)
    if not np.all(np.isfinite(p)):
        raise ValueError("p values must be finite")
    x0 = _x0(m, x0)
    V0 = None if v0 is None else _unit(v0)[:, None]
    tasks = [(m, x0, cfg.with_seed(cfg.seed + s), V0) for s in range(ensemble)]
    runs = map_jobs(_moment_task, tasks, jobs)
    T = runs[0][1]
    logs = np.array([r[0] for r in runs])
    K = logs.size
    with np.errstate(over="ignore", invalid="ignore"):
        lam = _moment_from_logs(logs, p, T)
        # jackknife over ensemble members
        loo = np.array([_moment_from_logs(np.delete(logs, i), p, T) for i in range(K)])
        stderr = np.sqrt((K - 1) / K * ((loo - loo.mean(axis=0)) ** 2).sum(axis=0))
    if not (np.all(np.isfinite(lam)) and np.all(np.isfinite(stderr))):
        raise OverflowError("moment estimate overflowed; shrink T or |p|")
    return {"p": p, "Lambda": lam, "stderr": stderr, "log_growth": logs, "T": T}


def _moment_task(args):
    m, x0, cfg, V0 = args
    out = tangent_run(m, x0, cfg, 1, 1, V0=V0)
    return float(out["exponents"][0] * out["T"]), out["T"]


def _moment_from_logs(logs, p, T):
    return np.array([0.0 if pk == 0 else (logsumexp(pk * logs) - math.log(logs.size)) / T
                     for pk in p])


def gaussian_fisher_check(A, q, epsilon):
    """Closed-form ``FI(rho)`` for the linear model versus ``eps tr A``.

    ``rho`` is the Gaussian stationary law with covariance solving
    ``A S + S A = diag(q^2)``; ``FI(rho) = (eps/2) sum_k q_k^2 (S^-1)_kk``.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        A = np.diag(A)
    q = np.asarray(q, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n) or q.shape != (n,):
        raise ValueError("A must be n x n and q must have n entries")
    if not np.allclose(A, A.T) or np.linalg.eigvalsh(A).min() <= 0:
        raise ValueError("A must be symmetric positive definite")
    if np.any(q == 0):
        raise DegenerateForcingError("forcing does not span R^n; the stationary law has no density")
    S = solve_continuous_lyapunov(A, np.diag(q ** 2))
    S_inv = np.linalg.inv(S)
    fi = 0.5 * epsilon * float(np.sum(q ** 2 * np.diag(S_inv)))
    target = epsilon * float(np.trace(A))
    return {"FI_rho": fi, "minus_lambda_sum": target, "residual": abs(fi - target), "covariance": S}


def fk_average(m, samples, v_samples=None):
    """Stationary averages of the FK integrands.

    ``lambda_sum_estimate`` is the mean of ``Q``.  When paired unit vectors
    ``v_samples`` are given, ``lambda1_estimate = (2 lambda_sum - mean Qtilde) / n``
    is returned as well.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2 or samples.shape[0] == 0:
        raise ValueError("fk_average needs a non-empty (count, n) sample array")
    if v_samples is None:
        Q = [fk_integrands(m, x, _unit(np.ones(m.n)))["Q"] for x in samples]
        return {"lambda_sum_estimate": float(np.mean(Q)), "count": len(Q)}
    vals = [fk_integrands(m, x, v) for x, v in zip(samples, v_samples)]
    lam_sum = float(np.mean([d["Q"] for d in vals]))
    qt = float(np.mean([d["Qtilde"] for d in vals]))
    return {"lambda_sum_estimate": lam_sum, "lambda1_estimate": (2 * lam_sum - qt) / m.n,
            "count": len(vals)}


__all__ = [
    "DegenerateForcingError", "ExponentEstimate", "SweepResult", "SweepRow", "epsilon_sweep",
    "fk_average", "gaussian_fisher_check", "initial_frame", "moment_lyapunov", "top_exponent",
]
