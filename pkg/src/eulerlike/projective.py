"""Projective (sphere-bundle) lift, tangent-frame integration and Lyapunov spectra.

The tangent flow is driven by the base path only (additive noise), so every
frame is advanced with the frozen Jacobian ``J(x_n)`` by the second-order
step ``V <- V + dt J V + dt^2/2 J^2 V`` on the base grid.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .estimates import ExponentEstimate, batch_estimate
from .models import eval_drift, eval_drift_jacobian
from .sde import BlowUpError, NoiseStream, Scheme, map_jobs, noise_increments

COND_LIMIT = 1e6


@dataclass(frozen=True, eq=False)
class ProjectiveState:
    x: np.ndarray
    v: np.ndarray
    log_growth: float = 0.0
    t: float = 0.0


@dataclass(frozen=True, eq=False)
class SpectrumState:
    x: np.ndarray
    Q: np.ndarray
    log_diag: np.ndarray
    t: float = 0.0


def _unit(v):
    v = np.asarray(v, dtype=float)
    nrm = np.linalg.norm(v)
    if not nrm > 0:
        raise ValueError("tangent vector must be nonzero")
    return v / nrm


def lift_field(m, x, v):
    """Lift of the drift to the sphere bundle: ``(X0(x), (I - v v^T) M v)`` with ``M = grad X0(x)``."""
    v = np.asarray(v, dtype=float)
    if not np.linalg.norm(v) > 0:
        raise ValueError("tangent vector must be nonzero")
    Mv = eval_drift_jacobian(m, x) @ v
    return eval_drift(m, x), Mv - v * (v @ Mv)


def lift_forcing(m, k):
    """Constant forcing fields lift to ``(X_k, 0)``."""
    return m.forcing[k].copy(), np.zeros(m.n)


def sphere_divergence(M, v):
    """Divergence on ``S^{n-1}`` of ``v -> (I - v v^T) M v``: ``tr M - n <v, M v>``."""
    M = np.asarray(M, dtype=float)
    v = np.asarray(v, dtype=float)
    return float(np.trace(M) - M.shape[0] * (v @ M @ v))


def fk_integrands(m, x, v):
    """Furstenberg-Khasminskii integrands at ``(x, v)``.

    ``Q = div X0 = tr M``.  The forcing terms of both integrands vanish for
    constant fields, so ``Qtilde = Q + tr M - n <v, M v>``.
    """
    M = eval_drift_jacobian(m, x)
    Q = float(np.trace(M))
    sdiv = sphere_divergence(M, v)
    return {"Q": Q, "Qtilde": Q + sdiv, "sphere_div": sdiv}


def step_projective(m, state, dt, dW, scheme=Scheme.EULER_MARUYAMA):
    """One step of the lifted process.

    ``dW`` holds one Brownian increment (variance ``dt``) per forcing vector.
    """
    dW = np.asarray(dW, dtype=float)
    if dW.shape != (m.n_forcing,):
        raise ValueError(f"expected {m.n_forcing} noise increments, got {dW.shape}")
    x = np.array(state.x, dtype=float)
    V = _unit(state.v)[:, None].copy()
    noise = (m.noise_scale * (dW @ m.forcing))[None, :] if m.n_forcing else np.zeros((1, m.n))
    logs = np.zeros(1)
    status, _ = kernels._np_tangent_chunk(x, V, noise, *m.kernel_args, dt,
                                          Scheme(scheme) is Scheme.DRIFT_HEUN, 0, 1,
                                          COND_LIMIT, logs, 0, np.empty((0, 1)))
    if status != kernels.OK:
        raise BlowUpError(state.t + dt)
    return ProjectiveState(x, V[:, 0].copy(), state.log_growth + float(logs[0]), state.t + dt)


def _frame_rng(seed):
    return np.random.default_rng([int(seed) & (2 ** 63 - 1), 0x7A6E])


def initial_frame(n, m_vectors, seed):
    """Random orthonormal ``n x m`` frame derived from the run seed."""
    g = _frame_rng(seed).standard_normal((n, m_vectors))
    q, _ = np.linalg.qr(g)
    return q


def _run_frame(m, x, V, dt, scheme, stream, step0, nsteps, qr_every, logs, rec_every):
    heun = Scheme(scheme) is Scheme.DRIFT_HEUN
    done = 0
    recs = []
    while done < nsteps:
        count = min(1 << 14, nsteps - done)
        noise = noise_increments(m, stream, step0 + done, count, dt)
        rec = np.empty((count // rec_every + 1 if rec_every > 0 else 0, V.shape[1]))
        status, nrec = kernels.tangent_chunk(x, V, noise, *m.kernel_args, dt, heun, done,
                                             qr_every, COND_LIMIT, logs, rec_every, rec)
        if status != kernels.OK:
            raise BlowUpError((step0 + done + status + 1) * dt,
                              "non-finite state or degenerate tangent frame")
        if nrec:
            recs.append(rec[:nrec])
        done += count
    return np.concatenate(recs) if recs else np.empty((0, V.shape[1]))


def tangent_run(m, x0, cfg, m_vectors=1, qr_every=1, record_every=0, V0=None):
    """Run base point and an ``m_vectors`` frame; exponents are averaged after the burn-in.

    Returns a dict with ``exponents`` (per frame vector), ``blocks`` (ten
    time-block estimates), ``times``/``series`` (running exponents every
    ``record_every`` steps, or at the block boundaries), and the final ``x``/``V``.
    """
    x = np.array(x0, dtype=float)
    if x.shape != (m.n,):
        raise ValueError(f"x0 has shape {x.shape}, model dimension is {m.n}")
    if not 1 <= m_vectors <= m.n:
        raise ValueError(f"m_vectors must lie in 1..{m.n}")
    V = initial_frame(m.n, m_vectors, cfg.seed) if V0 is None else np.array(V0, dtype=float).reshape(m.n, -1)
    V = np.ascontiguousarray(np.linalg.qr(V)[0])
    stream = NoiseStream(cfg.seed, m.n_forcing)
    burn = cfg.burn_steps
    main = cfg.n_steps - burn
    if main < 10:
        raise ValueError("horizon too short after burn-in")
    logs = np.zeros(m_vectors)
    _run_frame(m, x, V, cfg.dt, cfg.scheme, stream, 0, burn, qr_every, logs, 0)
    V[:] = np.linalg.qr(V)[0]
    logs[:] = 0.0
    rec_every = record_every if record_every > 0 else max(1, main // 10)
    series = _run_frame(m, x, V, cfg.dt, cfg.scheme, stream, burn, main, qr_every, logs, rec_every)
    q, r = np.linalg.qr(V)
    logs += np.log(np.abs(np.diag(r)))
    V = q
    T_eff = main * cfg.dt
    times = cfg.dt * rec_every * np.arange(1, series.shape[0] + 1)
    inner, tin = series, times
    if times.size and times[-1] >= T_eff * (1 - 1e-12):
        inner, tin = series[:-1], times[:-1]
    cum = np.vstack([np.zeros((1, m_vectors)), inner, logs[None, :]])
    tcum = np.concatenate([[0.0], tin, [T_eff]])
    edges = np.unique(np.round(np.linspace(0, cum.shape[0] - 1, 11)).astype(int))
    blocks = np.diff(cum[edges], axis=0) / np.diff(tcum[edges])[:, None]
    return {
        "exponents": logs / T_eff,
        "blocks": blocks,
        "times": times,
        "series": series / np.maximum(times, 1e-300)[:, None] if times.size else series,
        "x": x,
        "V": V,
        "T": T_eff,
    }


def run_projective(m, x0, v0, cfg, renorm_every=1, record_every=0):
    """Top-exponent run of a single tangent vector: ``(log_growth / T, final ProjectiveState, run dict)``."""
    out = tangent_run(m, x0, cfg, 1, renorm_every, record_every, V0=_unit(v0)[:, None])
    lam = float(out["exponents"][0])
    state = ProjectiveState(out["x"], out["V"][:, 0], lam * out["T"], cfg.T)
    return lam, state, out


@dataclass(frozen=True)
class Spectrum:
    exponents: list
    lambda_sum: ExponentEstimate | None
    minus_eps_trA: float
    fingerprint: str = ""
    series: dict = field(default_factory=dict, compare=False)

    def values(self):
        return np.array([e.value for e in self.exponents])

    def to_dict(self):
        return {
            "exponents": [e.value for e in self.exponents],
            "stderr": [e.stderr for e in self.exponents],
            "lambda_sum": None if self.lambda_sum is None else self.lambda_sum.value,
            "lambda_sum_stderr": None if self.lambda_sum is None else self.lambda_sum.stderr,
            "minus_eps_trA": self.minus_eps_trA,
            "n_seeds": self.exponents[0].n_seeds if self.exponents else 0,
            "fingerprint": self.fingerprint,
        }

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


def _spectrum_task(args):
    m, x0, cfg, m_vectors, qr_every, record_every = args
    try:
        return tangent_run(m, x0, cfg, m_vectors, qr_every, record_every)
    except BlowUpError as err:
        return err


def qr_spectrum(m, x0, cfg, m_vectors, n_seeds=1, qr_every=10, record_every=0, jobs=1):
    """Leading ``m_vectors`` exponents by periodic QR re-orthonormalisation.

    Seeds ``cfg.seed, cfg.seed + 1, ...`` are run independently; runs that
    blow up are excluded and counted.  With ``m_vectors == n`` the sum
    exponent ``lambda_Sigma`` is reported as well.
    """
    if not 1 <= m_vectors <= m.n:
        raise ValueError(f"m_vectors must lie in 1..{m.n}")
    if n_seeds < 1:
        raise ValueError("n_seeds must be >= 1")
    tasks = [(m, x0, cfg.with_seed(cfg.seed + s), m_vectors, qr_every, record_every)
             for s in range(n_seeds)]
    runs = map_jobs(_spectrum_task, tasks, jobs)
    good = [r for r in runs if not isinstance(r, BlowUpError)]
    failed = len(runs) - len(good)
    if not good:
        raise runs[0]
    ex = np.array([r["exponents"] for r in good])
    T_eff = good[0]["T"]
    estimates = []
    for c in range(m_vectors):
        estimates.append(batch_estimate(ex[:, c], good[0]["blocks"][:, c], T_eff, cfg.dt,
                                        m.fingerprint, failed))
    lam_sum = None
    if m_vectors == m.n:
        lam_sum = batch_estimate(ex.sum(axis=1), good[0]["blocks"].sum(axis=1), T_eff, cfg.dt,
                                 m.fingerprint, failed)
    series = {"times": good[0]["times"], "series": good[0]["series"]}
    return Spectrum(estimates, lam_sum, -m.eps * m.trace_A(), m.fingerprint, series)


def flow_with_jacobian(m, x0, T, dt, n_samples):
    """RK4 for the deterministic flow and its full Jacobian; returns ``(times, X, Y)`` at ``n_samples`` points."""
    nsteps = int(round(T / dt))
    stride = max(1, nsteps // n_samples)
    x = np.array(x0, dtype=float)
    Y = np.eye(m.n)
    nout_max = nsteps // stride
    out_x = np.empty((nout_max, m.n))
    out_Y = np.empty((nout_max, m.n, m.n))
    nout = kernels.rk4_variational(x, Y, dt, nsteps, stride, *m.kernel_args, out_x, out_Y)
    times = dt * stride * np.arange(1, nout + 1)
    return times, out_x[:nout], out_Y[:nout]


def shear_bound_check(m, x0, T, dt=1e-4, n_samples=50):
    """Shear growth of the conservative ``eps = 0`` flow.

    At each sample time checks ``||D Phi^t|| >= t |B(Phi^t x, Phi^t x)| / |x|``
    and the scaling identity ``D Phi^t x = Phi^t x + t B(Phi^t x, Phi^t x)``.
    """
    if m.eps != 0:
        raise ValueError("shear_bound_check needs the conservative eps = 0 flow")
    x0 = np.asarray(x0, dtype=float)
    nx = float(np.linalg.norm(x0))
    if nx == 0:
        raise ValueError("x0 must be nonzero")
    times, X, Y = flow_with_jacobian(m, x0, T, dt, n_samples)
    lhs = np.array([np.linalg.norm(Yt, 2) for Yt in Y])
    Bs = np.array([m.B(xt) for xt in X])
    rhs = times * np.linalg.norm(Bs, axis=1) / nx
    decomp = np.einsum("tij,j->ti", Y, x0) - (X + times[:, None] * Bs)
    resid = np.linalg.norm(decomp, axis=1)
    return {
        "times": times,
        "lhs": lhs,
        "rhs": rhs,
        "satisfied": lhs >= rhs,
        "decomposition_residual": resid,
        "max_residual": float(resid.max()) if resid.size else 0.0,
        "norm_drift": float(np.abs(np.linalg.norm(X, axis=1) - nx).max()) if X.size else 0.0,
    }
