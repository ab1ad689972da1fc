"""Hot inner loops, each in a numba flavour and a pure-numpy flavour.

The bilinear drift is passed around in coordinate form: four parallel arrays
``(bl, bj, bk, bc)`` such that ``B_l(x, x) = sum bc * x[bj] * x[bk]`` over the
entries with ``bl == l``.  The public wrappers at the bottom dispatch on
:func:`eulerlike._accel.backend`.

Status convention for the time-stepping kernels: ``-1`` means the chunk ran to
completion, any other value is the chunk-local index of the first step whose
result was not finite.
"""

import numpy as np

from . import _accel
from ._accel import njit

OK = -1


# --------------------------------------------------------------------------
# numba kernels
# --------------------------------------------------------------------------

@njit
def _nb_drift(x, bl, bj, bk, bc, adiag, A, diag_only, eps, out):
    n = x.shape[0]
    for i in range(n):
        out[i] = 0.0
    for t in range(bl.shape[0]):
        out[bl[t]] += bc[t] * x[bj[t]] * x[bk[t]]
    if diag_only:
        for i in range(n):
            out[i] -= eps * adiag[i] * x[i]
    else:
        for i in range(n):
            s = 0.0
            for j in range(n):
                s += A[i, j] * x[j]
            out[i] -= eps * s


@njit
def _nb_jac_apply(x, V, bl, bj, bk, bc, adiag, A, diag_only, eps, out):
    # out[:, c] = 2 B(x, V[:, c]) - eps A V[:, c]
    n, m = V.shape
    for i in range(n):
        for c in range(m):
            out[i, c] = 0.0
    for t in range(bl.shape[0]):
        l, j, k, w = bl[t], bj[t], bk[t], bc[t]
        xj, xk = x[j], x[k]
        for c in range(m):
            out[l, c] += w * (xj * V[k, c] + xk * V[j, c])
    if diag_only:
        for i in range(n):
            a = eps * adiag[i]
            for c in range(m):
                out[i, c] -= a * V[i, c]
    else:
        for i in range(n):
            for c in range(m):
                s = 0.0
                for j in range(n):
                    s += A[i, j] * V[j, c]
                out[i, c] -= eps * s


@njit
def _nb_base_step(x, dw, f0, f1, xp, bl, bj, bk, bc, adiag, A, diag_only, eps, dt, heun):
    n = x.shape[0]
    _nb_drift(x, bl, bj, bk, bc, adiag, A, diag_only, eps, f0)
    if heun:
        for i in range(n):
            xp[i] = x[i] + dt * f0[i] + dw[i]
        _nb_drift(xp, bl, bj, bk, bc, adiag, A, diag_only, eps, f1)
        for i in range(n):
            x[i] = x[i] + 0.5 * dt * (f0[i] + f1[i]) + dw[i]
    else:
        for i in range(n):
            x[i] = x[i] + dt * f0[i] + dw[i]
    ok = True
    for i in range(n):
        if not np.isfinite(x[i]):
            ok = False
    return ok


@njit
def _nb_base_chunk(x, noise, bl, bj, bk, bc, adiag, A, diag_only, eps, dt, heun,
                   step0, stride, out):
    n = x.shape[0]
    f0 = np.empty(n)
    f1 = np.empty(n)
    xp = np.empty(n)
    nout = 0
    for s in range(noise.shape[0]):
        if not _nb_base_step(x, noise[s], f0, f1, xp, bl, bj, bk, bc, adiag, A,
                             diag_only, eps, dt, heun):
            return s, nout
        if stride > 0 and (step0 + s + 1) % stride == 0:
            out[nout, :] = x
            nout += 1
    return OK, nout


@njit
def _nb_orthonormalize(V, logs):
    q, r = np.linalg.qr(V)
    m = V.shape[1]
    for c in range(m):
        d = abs(r[c, c])
        if not (d > 0.0) or not np.isfinite(d):
            return False
        logs[c] += np.log(d)
    V[:, :] = q
    return True


@njit
def _nb_tangent_chunk(x, V, noise, bl, bj, bk, bc, adiag, A, diag_only, eps, dt, heun,
                      step0, qr_every, cond_limit, logs, rec_every, rec):
    n = x.shape[0]
    m = V.shape[1]
    f0 = np.empty(n)
    f1 = np.empty(n)
    xp = np.empty(n)
    k1 = np.empty((n, m))
    k2 = np.empty((n, m))
    nrec = 0
    h2 = 0.5 * dt * dt
    for s in range(noise.shape[0]):
        # frozen-coefficient second-order step for the tangent frame at x_n
        _nb_jac_apply(x, V, bl, bj, bk, bc, adiag, A, diag_only, eps, k1)
        _nb_jac_apply(x, k1, bl, bj, bk, bc, adiag, A, diag_only, eps, k2)
        for i in range(n):
            for c in range(m):
                V[i, c] += dt * k1[i, c] + h2 * k2[i, c]
        if not _nb_base_step(x, noise[s], f0, f1, xp, bl, bj, bk, bc, adiag, A,
                             diag_only, eps, dt, heun):
            return s, nrec
        step = step0 + s + 1
        due = step % qr_every == 0
        if not due and m > 1:
            lo = np.inf
            hi = 0.0
            for c in range(m):
                nrm = 0.0
                for i in range(n):
                    nrm += V[i, c] * V[i, c]
                lo = min(lo, nrm)
                hi = max(hi, nrm)
            due = hi > cond_limit * cond_limit * lo
        if due:
            if not _nb_orthonormalize(V, logs):
                return s, nrec
        if rec_every > 0 and step % rec_every == 0:
            rec[nrec, :] = logs
            nrec += 1
    return OK, nrec


@njit
def _nb_rk4_variational(x, Y, dt, nsteps, stride, bl, bj, bk, bc, adiag, A, diag_only,
                        eps, out_x, out_Y):
    n = x.shape[0]
    m = Y.shape[1]
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    xs = np.empty(n)
    K1 = np.empty((n, m))
    K2 = np.empty((n, m))
    K3 = np.empty((n, m))
    K4 = np.empty((n, m))
    Ys = np.empty((n, m))
    nout = 0
    for s in range(nsteps):
        _nb_drift(x, bl, bj, bk, bc, adiag, A, diag_only, eps, k1)
        _nb_jac_apply(x, Y, bl, bj, bk, bc, adiag, A, diag_only, eps, K1)
        for i in range(n):
            xs[i] = x[i] + 0.5 * dt * k1[i]
        Ys[:, :] = Y + 0.5 * dt * K1
        _nb_drift(xs, bl, bj, bk, bc, adiag, A, diag_only, eps, k2)
        _nb_jac_apply(xs, Ys, bl, bj, bk, bc, adiag, A, diag_only, eps, K2)
        for i in range(n):
            xs[i] = x[i] + 0.5 * dt * k2[i]
        Ys[:, :] = Y + 0.5 * dt * K2
        _nb_drift(xs, bl, bj, bk, bc, adiag, A, diag_only, eps, k3)
        _nb_jac_apply(xs, Ys, bl, bj, bk, bc, adiag, A, diag_only, eps, K3)
        for i in range(n):
            xs[i] = x[i] + dt * k3[i]
        Ys[:, :] = Y + dt * K3
        _nb_drift(xs, bl, bj, bk, bc, adiag, A, diag_only, eps, k4)
        _nb_jac_apply(xs, Ys, bl, bj, bk, bc, adiag, A, diag_only, eps, K4)
        for i in range(n):
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
        Y += dt / 6.0 * (K1 + 2.0 * K2 + 2.0 * K3 + K4)
        if (s + 1) % stride == 0:
            out_x[nout, :] = x
            out_Y[nout, :, :] = Y
            nout += 1
    return nout


@njit
def _nb_distinct_scan(i0, i1, P, grid, N, D, korder, p,
                      counts, hist, viol, samples):
    # counts = [examined, excluded, satisfied, violations]
    L = P.shape[0]
    K = korder.shape[0]
    nv = 0
    for ii in range(i0, i1):
        a1, a2 = P[ii, 0], P[ii, 1]
        sampled = False
        for jj in range(L):
            b1, b2 = P[jj, 0], P[jj, 1]
            for ll in range(L):
                c1, c2 = P[ll, 0], P[ll, 1]
                m1 = -(a1 + b1 + c1)
                m2 = -(a2 + b2 + c2)
                if m1 > N or m1 < -N or m2 > N or m2 < -N:
                    continue
                if m1 == 0 and m2 == 0:
                    continue
                mm = grid[m1 + N, m2 + N]
                counts[0] += 1
                if ((a1 + b1 == 0 and a2 + b2 == 0) or (a1 + c1 == 0 and a2 + c2 == 0)
                        or (a1 + m1 == 0 and a2 + m2 == 0)):
                    counts[1] += 1
                    continue
                found = -1
                for t in range(K):
                    kk = korder[t]
                    s = (D[kk, ii] + D[kk, jj]) % p + (D[kk, ll] + D[kk, mm]) % p
                    if s % p != 0:
                        found = kk
                        break
                if found >= 0:
                    counts[2] += 1
                    hist[found] += 1
                    if not sampled:
                        samples[ii, 0] = ii
                        samples[ii, 1] = jj
                        samples[ii, 2] = ll
                        samples[ii, 3] = mm
                        samples[ii, 4] = found
                        sampled = True
                else:
                    counts[3] += 1
                    viol[nv, 0] = ii
                    viol[nv, 1] = jj
                    viol[nv, 2] = ll
                    viol[nv, 3] = mm
                    nv += 1
    return nv


# --------------------------------------------------------------------------
# numpy kernels
# --------------------------------------------------------------------------

def _np_jac_B(x, bl, bj, bk, bc):
    """Dense matrix of v -> 2 B(x, v)."""
    n = x.shape[0]
    idx = np.concatenate((bl * n + bk, bl * n + bj))
    w = np.concatenate((bc * x[bj], bc * x[bk]))
    return np.bincount(idx, weights=w, minlength=n * n).astype(float).reshape(n, n)


def _np_drift(x, bl, bj, bk, bc, adiag, A, diag_only, eps):
    # bincount of an empty index array is integer-typed
    b = np.bincount(bl, weights=bc * x[bj] * x[bk], minlength=x.shape[0]).astype(float)
    if diag_only:
        return b - eps * adiag * x
    return b - eps * (A @ x)


def _np_jacobian(x, bl, bj, bk, bc, adiag, A, diag_only, eps):
    J = _np_jac_B(x, bl, bj, bk, bc)
    if diag_only:
        J[np.diag_indices_from(J)] -= eps * adiag
        return J
    return J - eps * A


def _np_base_step(x, dw, args, dt, heun):
    f0 = _np_drift(x, *args)
    if heun:
        f1 = _np_drift(x + dt * f0 + dw, *args)
        x = x + 0.5 * dt * (f0 + f1) + dw
    else:
        x = x + dt * f0 + dw
    return x


def _np_base_chunk(x, noise, bl, bj, bk, bc, adiag, A, diag_only, eps, dt, heun,
                   step0, stride, out):
    args = (bl, bj, bk, bc, adiag, A, diag_only, eps)
    nout = 0
    for s in range(noise.shape[0]):
        with np.errstate(over="ignore", invalid="ignore"):  # caught by the finiteness check
            x[:] = _np_base_step(x, noise[s], args, dt, heun)
        if not np.all(np.isfinite(x)):
            return s, nout
        if stride > 0 and (step0 + s + 1) % stride == 0:
            out[nout] = x
            nout += 1
    return OK, nout


def _np_tangent_chunk(x, V, noise, bl, bj, bk, bc, adiag, A, diag_only, eps, dt, heun,
                      step0, qr_every, cond_limit, logs, rec_every, rec):
    args = (bl, bj, bk, bc, adiag, A, diag_only, eps)
    m = V.shape[1]
    nrec = 0
    for s in range(noise.shape[0]):
        with np.errstate(over="ignore", invalid="ignore"):
            J = _np_jacobian(x, *args)
            JV = J @ V
            V += dt * JV + 0.5 * dt * dt * (J @ JV)
            x[:] = _np_base_step(x, noise[s], args, dt, heun)
        if not np.all(np.isfinite(x)):
            return s, nrec
        step = step0 + s + 1
        due = step % qr_every == 0
        if not due and m > 1:
            nrm = np.einsum("ij,ij->j", V, V)
            due = nrm.max() > cond_limit * cond_limit * nrm.min()
        if due:
            q, r = np.linalg.qr(V)
            d = np.abs(np.diag(r))
            if not np.all(np.isfinite(d)) or np.any(d == 0):
                return s, nrec
            logs += np.log(d)
            V[:] = q
        if rec_every > 0 and step % rec_every == 0:
            rec[nrec] = logs
            nrec += 1
    return OK, nrec


def _np_rk4_variational(x, Y, dt, nsteps, stride, bl, bj, bk, bc, adiag, A, diag_only,
                        eps, out_x, out_Y):
    args = (bl, bj, bk, bc, adiag, A, diag_only, eps)

    def rhs(x, Y):
        return _np_drift(x, *args), _np_jacobian(x, *args) @ Y

    nout = 0
    for s in range(nsteps):
        k1, K1 = rhs(x, Y)
        k2, K2 = rhs(x + 0.5 * dt * k1, Y + 0.5 * dt * K1)
        k3, K3 = rhs(x + 0.5 * dt * k2, Y + 0.5 * dt * K2)
        k4, K4 = rhs(x + dt * k3, Y + dt * K3)
        x += dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        Y += dt / 6.0 * (K1 + 2 * K2 + 2 * K3 + K4)
        if (s + 1) % stride == 0:
            out_x[nout] = x
            out_Y[nout] = Y
            nout += 1
    return nout


def _np_distinct_scan(i0, i1, P, grid, N, D, korder, p, counts, hist, viol, samples):
    L = P.shape[0]
    jj, ll = np.meshgrid(np.arange(L), np.arange(L), indexing="ij")
    jj = jj.ravel()
    ll = ll.ravel()
    nv = 0
    for ii in range(i0, i1):
        a = P[ii]
        mvec = -(a[None, :] + P[jj] + P[ll])
        inside = (np.abs(mvec) <= N).all(axis=1) & (mvec != 0).any(axis=1)
        j_, l_, m_ = jj[inside], ll[inside], mvec[inside]
        mm = grid[m_[:, 0] + N, m_[:, 1] + N]
        counts[0] += j_.size
        excl = (((a + P[j_]) == 0).all(axis=1) | ((a + P[l_]) == 0).all(axis=1)
                | ((a + m_) == 0).all(axis=1))
        counts[1] += int(excl.sum())
        j_, l_, mm = j_[~excl], l_[~excl], mm[~excl]
        found = np.full(j_.size, -1, dtype=np.int64)
        open_ = np.arange(j_.size)
        for kk in korder:
            if open_.size == 0:
                break
            row = D[kk]
            s = ((row[ii] + row[j_[open_]]) % p + (row[l_[open_]] + row[mm[open_]]) % p) % p
            hit = s != 0
            found[open_[hit]] = kk
            open_ = open_[~hit]
        ok = found >= 0
        counts[2] += int(ok.sum())
        np.add.at(hist, found[ok], 1)
        if ok.any():
            first = int(np.argmax(ok))
            samples[ii] = (ii, j_[first], l_[first], mm[first], found[first])
        bad = np.flatnonzero(~ok)
        counts[3] += bad.size
        viol[nv:nv + bad.size, 0] = ii
        viol[nv:nv + bad.size, 1] = j_[bad]
        viol[nv:nv + bad.size, 2] = l_[bad]
        viol[nv:nv + bad.size, 3] = mm[bad]
        nv += bad.size
    return nv


# --------------------------------------------------------------------------
# dispatch
# --------------------------------------------------------------------------

def _pick(nb, py):
    return nb if _accel.backend() == "numba" else py


def drift(x, bl, bj, bk, bc, adiag, A, diag_only, eps):
    return _np_drift(x, bl, bj, bk, bc, adiag, A, diag_only, eps)


def jacobian(x, bl, bj, bk, bc, adiag, A, diag_only, eps):
    return _np_jacobian(x, bl, bj, bk, bc, adiag, A, diag_only, eps)


def base_chunk(*args):
    return _pick(_nb_base_chunk, _np_base_chunk)(*args)


def tangent_chunk(*args):
    return _pick(_nb_tangent_chunk, _np_tangent_chunk)(*args)


def rk4_variational(*args):
    return _pick(_nb_rk4_variational, _np_rk4_variational)(*args)


def distinct_scan(*args):
    return _pick(_nb_distinct_scan, _np_distinct_scan)(*args)
