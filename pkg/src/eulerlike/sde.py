"""Additive-noise time stepping, reproducible noise, stationary diagnostics and trajectory I/O."""

from __future__ import annotations

import csv
import enum
import math
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from . import kernels
from .models import Scaling

CHUNK = 1 << 15
_TWO53 = float(2 ** 53)


class Scheme(str, enum.Enum):
    EULER_MARUYAMA = "em"
    DRIFT_HEUN = "heun"


class BlowUpError(RuntimeError):
    """A state became non-finite; ``time`` is when it was detected."""

    def __init__(self, time, message=None):
        self.time = time
        self.partial = None
        self.trajectory = None
        super().__init__(message or f"non-finite state at t = {time:.6g}")


class NoiseStream:
    """Standard normals keyed by ``(seed, forcing index, step)``.

    Stream ``k`` is a Philox counter generator keyed by ``(seed, k)``; the
    normal used at step ``s`` is the inverse-CDF transform of raw draw ``s``,
    so any window of steps can be regenerated without replaying the prefix.
    """

    def __init__(self, seed, r):
        self.seed = int(seed) & (2 ** 64 - 1)
        self.r = int(r)

    def _raw(self, k, start, count):
        bg = np.random.Philox(key=[self.seed, k])
        bg.advance(start // 4)
        skip = start % 4
        return bg.random_raw(count + skip)[skip:]

    def normals(self, start, count):
        out = np.empty((count, self.r))
        for k in range(self.r):
            u = ((self._raw(k, start, count) >> np.uint64(11)).astype(float) + 0.5) / _TWO53
            out[:, k] = ndtri(u)
        return out


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float
    T: float
    burn_in: float | None = None
    seed: int = 0
    scheme: Scheme = Scheme.EULER_MARUYAMA

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.T > 0:
            raise ValueError("horizon T must be positive")
        if self.burn_in is None:
            object.__setattr__(self, "burn_in", 0.1 * self.T)
        if not 0 <= self.burn_in < self.T:
            raise ValueError("burn_in must lie in [0, T)")
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        object.__setattr__(self, "seed", int(self.seed))

    @property
    def n_steps(self):
        return int(round(self.T / self.dt))

    @property
    def burn_steps(self):
        return int(round(self.burn_in / self.dt))

    def with_seed(self, seed):
        return IntegratorConfig(self.dt, self.T, self.burn_in, seed, self.scheme)


def default_dt(m, x_scale=None):
    """``min(1e-3, 0.1 / (||A|| eps), 0.01 / x_scale)``.

    ``x_scale`` defaults to the root of the stationary energy estimate
    ``s^2 sum |X_k|^2 / (2 eps lambda_min(A))``.
    """
    eps = m.eps
    normA = float(np.linalg.norm(m.A, 2))
    if x_scale is None:
        if eps > 0 and m.n_forcing:
            lam_min = float(np.linalg.eigvalsh(m.A).min())
            x_scale = math.sqrt(m.noise_scale ** 2 * float((m.forcing ** 2).sum()) / (2 * eps * lam_min))
        x_scale = max(1.0, x_scale or 1.0)
    dt = min(1e-3, 0.01 / x_scale)
    if eps > 0:
        dt = min(dt, 0.1 / (normA * eps))
    return dt


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    fingerprint: str
    seed: int
    dt: float
    stride: int = 1

    @property
    def n(self):
        return self.states.shape[1]

    def __len__(self):
        return self.times.shape[0]


def noise_increments(m, stream, start, count, dt):
    """Additive increments ``s(eps) sqrt(dt) sum_k xi_k X_k`` for steps ``start..start+count``."""
    if m.n_forcing == 0:
        return np.zeros((count, m.n))
    xi = stream.normals(start, count)
    return (m.noise_scale * math.sqrt(dt)) * (xi @ m.forcing)


def _advance(m, x, dt, scheme, stream, step0, nsteps, stride):
    """Advance ``x`` in place for ``nsteps`` steps; return states recorded every ``stride``."""
    heun = Scheme(scheme) is Scheme.DRIFT_HEUN
    rec = []
    done = 0
    while done < nsteps:
        count = min(CHUNK, nsteps - done)
        noise = noise_increments(m, stream, step0 + done, count, dt)
        out = np.empty((count // stride + 1 if stride > 0 else 0, m.n))
        status, nout = kernels.base_chunk(x, noise, *m.kernel_args, dt, heun, step0 + done,
                                          stride, out)
        if status != kernels.OK:
            err = BlowUpError((step0 + done + status + 1) * dt)
            if nout:
                rec.append(out[:nout])
            err.partial = np.concatenate(rec) if rec else np.empty((0, m.n))
            raise err
        if nout:
            rec.append(out[:nout])
        done += count
    return np.concatenate(rec) if rec else np.empty((0, m.n))


def integrate(m, x0, cfg, stride=1):
    """Simulate from ``x0`` over ``[0, T]``, recording every ``stride`` steps (``t = 0`` included).

    Identical ``(m, x0, cfg)`` give bit-identical output on a given backend.
    """
    x = np.array(x0, dtype=float)
    if x.shape != (m.n,):
        raise ValueError(f"x0 has shape {x.shape}, model dimension is {m.n}")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    stream = NoiseStream(cfg.seed, m.n_forcing)

    def wrap(states):
        states = np.vstack([x[None, :], states])
        times = cfg.dt * stride * np.arange(states.shape[0])
        return Trajectory(times, states, m.fingerprint, cfg.seed, cfg.dt * stride, stride)

    try:
        states = _advance(m, x.copy(), cfg.dt, cfg.scheme, stream, 0, cfg.n_steps, stride)
    except BlowUpError as err:
        err.trajectory = wrap(err.partial)  # finite prefix, for partial output
        raise
    return wrap(states)


def integrate_increments(m, x0, dt, increments, scheme=Scheme.EULER_MARUYAMA):
    """Run the scheme on caller-supplied additive increments (one row per step); returns the final state."""
    x = np.array(x0, dtype=float)
    increments = np.ascontiguousarray(increments, dtype=float)
    out = np.empty((0, m.n))
    status, _ = kernels.base_chunk(x, increments, *m.kernel_args, dt,
                                   Scheme(scheme) is Scheme.DRIFT_HEUN, 0, 0, out)
    if status != kernels.OK:
        raise BlowUpError((status + 1) * dt)
    return x


def stationary_samples(m, x0, cfg, stride=1):
    """States after the burn-in, one every ``stride`` steps."""
    if stride < 1:
        raise ValueError("stride must be >= 1")
    x = np.array(x0, dtype=float)
    if x.shape != (m.n,):
        raise ValueError(f"x0 has shape {x.shape}, model dimension is {m.n}")
    stream = NoiseStream(cfg.seed, m.n_forcing)
    burn = cfg.burn_steps
    _advance(m, x, cfg.dt, cfg.scheme, stream, 0, burn, 0)
    out = _advance(m, x, cfg.dt, cfg.scheme, stream, burn, cfg.n_steps - burn, stride)
    return out


def energy_balance(m, samples):
    """Itô energy budget ``eps E<x, A x> = (s^2 / 2) sum |X_k|^2`` on stationary samples.

    Returns the sample means of ``|x|^2 / 2`` and ``<x, A x>``, the predicted
    value of the latter, and their relative mismatch (absolute when nothing
    is forced).
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2 or samples.shape[0] == 0:
        raise ValueError("energy_balance needs a non-empty (count, n) sample array")
    xAx = np.einsum("ti,ij,tj->t", samples, m.A, samples)
    diss = float(xAx.mean())
    total = float((m.forcing ** 2).sum())
    if m.scaling is Scaling.FLUCTUATION_DISSIPATION:
        target = 0.5 * total
    else:
        target = 0.5 * total / m.eps if total else 0.0
    residual = (diss - target) / target if target else diss
    return {
        "mean_energy": float(0.5 * np.einsum("ti,ti->t", samples, samples).mean()),
        "mean_dissipation": diss,
        "forcing_input": target,
        "residual": residual,
    }


def map_jobs(fn, items, jobs=1):
    """``[fn(i) for i in items]``, optionally across ``jobs`` worker processes (order kept)."""
    items = list(items)
    if jobs is None or jobs <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


# ------------------------------------------------------------------ export

_MAGIC = b"ELTRAJ\x00\x01"
_VERSION = 1
_HEADER = struct.Struct("<8sIIddQ")  # magic, version, n, dt, t0, count


def write_csv(traj, path, comment=None):
    """``t, x1..xn`` rows after ``#`` header lines (``comment`` first, if given)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if comment:
            fh.write(f"# {comment}\n")
        fh.write(f"# fingerprint={traj.fingerprint} seed={traj.seed}\n")
        w.writerow(["t"] + [f"x{i + 1}" for i in range(traj.n)])
        for t, row in zip(traj.times, traj.states):
            w.writerow([repr(float(t))] + [repr(float(v)) for v in row])


def read_csv(path):
    times, rows = [], []
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    for rec in list(csv.reader(lines))[1:]:
        times.append(float(rec[0]))
        rows.append([float(v) for v in rec[1:]])
    return np.array(times), np.array(rows)


def write_binary(traj, path):
    """Header ``<8s magic, u32 version, u32 n, f64 dt, f64 t0, u64 count>`` then little-endian f64 frames."""
    states = np.ascontiguousarray(traj.states, dtype="<f8")
    t0 = float(traj.times[0]) if len(traj) else 0.0
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, _VERSION, traj.n, traj.dt, t0, states.shape[0]))
        fh.write(states.tobytes())


def read_binary(path):
    with open(path, "rb") as fh:
        magic, version, n, dt, t0, count = _HEADER.unpack(fh.read(_HEADER.size))
        if magic != _MAGIC:
            raise ValueError("not a trajectory frame file")
        if version != _VERSION:
            raise ValueError(f"unsupported frame version {version}")
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != n * count:
        raise ValueError("truncated frame file")
    return t0 + dt * np.arange(count), data.reshape(count, n).copy(), dt
