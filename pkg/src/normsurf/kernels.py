"""Batched numeric kernels with a numba path and a pure numpy path.

Each kernel exists twice: ``<name>_loop`` (explicit loops, compiled with
numba when available) and ``<name>_np`` (vectorised numpy).  The public
name is bound to whichever path ``_accel`` selects.  Both are exported so
the benchmark and the parity tests can call them side by side.
"""
import numpy as np

from ._accel import HAVE_NUMBA, jit


# --- quadratic forms -------------------------------------------------------

@jit
def quadform_loop(A, V):
    m, n = V.shape
    out = np.empty(m)
    for k in range(m):
        s = 0.0
        for i in range(n):
            vi = V[k, i]
            for j in range(n):
                s += vi * A[i, j] * V[k, j]
        out[k] = s
    return out


def quadform_np(A, V):
    return np.einsum("ki,ij,kj->k", V, A, V)


# --- homogeneous polynomial jets --------------------------------------------

@jit
def monomial_jets_loop(E, c, V):
    """Value, gradient and Hessian of sum_k c_k prod_i v_i**E[k, i]."""
    m, n = V.shape
    nt = E.shape[0]
    val = np.zeros(m)
    grad = np.zeros((m, n))
    hess = np.zeros((m, n, n))
    for p in range(m):
        for t in range(nt):
            ct = c[t]
            mono = ct
            for i in range(n):
                mono *= V[p, i] ** E[t, i]
            val[p] += mono
            for a in range(n):
                ea = E[t, a]
                if ea == 0:
                    continue
                ga = ct * ea
                for i in range(n):
                    e = E[t, i] - 1 if i == a else E[t, i]
                    ga *= V[p, i] ** e
                grad[p, a] += ga
                for b in range(n):
                    eb = E[t, b] - 1 if b == a else E[t, b]
                    if eb <= 0:
                        continue
                    hab = ct * ea * eb
                    for i in range(n):
                        e = E[t, i]
                        if i == a:
                            e -= 1
                        if i == b:
                            e -= 1
                        hab *= V[p, i] ** e
                    hess[p, a, b] += hab
    return val, grad, hess


def _powers(V, E):
    # V (m, n), E (nt, n) -> (m, nt, n) powers with negative exponents masked to zero
    Vb = V[:, None, :]
    safe = np.where(E >= 0, E, 0)
    out = Vb ** safe
    return np.where(E >= 0, out, 0.0)


def monomial_jets_np(E, c, V):
    m, n = V.shape
    eye = np.eye(n, dtype=E.dtype)
    val = (c * _powers(V, E).prod(axis=2)).sum(axis=1)
    grad = np.empty((m, n))
    hess = np.empty((m, n, n))
    for a in range(n):
        Ea = E - eye[a]
        grad[:, a] = (c * E[:, a] * _powers(V, Ea).prod(axis=2)).sum(axis=1)
        for b in range(n):
            Eab = Ea - eye[b]
            coef = c * E[:, a] * Ea[:, b]
            hess[:, a, b] = (coef * _powers(V, Eab).prod(axis=2)).sum(axis=1)
    return val, grad, hess


# --- trigonometric series of a planar gauge ------------------------------------

@jit
def fourier_series_loop(a, b, theta):
    """g, g', g'' of g(t) = a0 + sum_k a_k cos(k t) + b_k sin(k t)."""
    m = theta.shape[0]
    K = a.shape[0]
    g = np.empty(m)
    g1 = np.empty(m)
    g2 = np.empty(m)
    for p in range(m):
        t = theta[p]
        s0 = a[0]
        s1 = 0.0
        s2 = 0.0
        for k in range(1, K):
            ck = np.cos(k * t)
            sk = np.sin(k * t)
            s0 += a[k] * ck + b[k] * sk
            s1 += k * (-a[k] * sk + b[k] * ck)
            s2 += -k * k * (a[k] * ck + b[k] * sk)
        g[p] = s0
        g1[p] = s1
        g2[p] = s2
    return g, g1, g2


def fourier_series_np(a, b, theta):
    k = np.arange(a.shape[0])
    kt = np.outer(theta, k)
    ck, sk = np.cos(kt), np.sin(kt)
    g = ck @ a + sk @ b
    g1 = (-sk * k) @ a + (ck * k) @ b
    g2 = -(ck * k**2) @ a - (sk * k**2) @ b
    return g, g1, g2


# --- brute-force sweep of a pencil of 2x2 forms --------------------------------

@jit
def pencil_sweep_loop(A, B, n_angles):
    """min and max over psi of det(cos(psi) A + sin(psi) B) for stacks of forms."""
    m = A.shape[0]
    lo = np.empty(m)
    hi = np.empty(m)
    for p in range(m):
        mn = np.inf
        mx = -np.inf
        for q in range(n_angles):
            psi = 2.0 * np.pi * q / n_angles
            ca = np.cos(psi)
            sa = np.sin(psi)
            m11 = ca * A[p, 0, 0] + sa * B[p, 0, 0]
            m12 = ca * A[p, 0, 1] + sa * B[p, 0, 1]
            m22 = ca * A[p, 1, 1] + sa * B[p, 1, 1]
            d = m11 * m22 - m12 * m12
            if d < mn:
                mn = d
            if d > mx:
                mx = d
        lo[p] = mn
        hi[p] = mx
    return lo, hi


def pencil_sweep_np(A, B, n_angles):
    psi = 2.0 * np.pi * np.arange(n_angles) / n_angles
    ca, sa = np.cos(psi)[None, :], np.sin(psi)[None, :]
    m11 = ca * A[:, None, 0, 0] + sa * B[:, None, 0, 0]
    m12 = ca * A[:, None, 0, 1] + sa * B[:, None, 0, 1]
    m22 = ca * A[:, None, 1, 1] + sa * B[:, None, 1, 1]
    d = m11 * m22 - m12 * m12
    return d.min(axis=1), d.max(axis=1)


if HAVE_NUMBA:
    quadform = quadform_loop
    monomial_jets = monomial_jets_loop
    fourier_series = fourier_series_loop
    pencil_sweep = pencil_sweep_loop
else:
    quadform = quadform_np
    monomial_jets = monomial_jets_np
    fourier_series = fourier_series_np
    pencil_sweep = pencil_sweep_np
