"""Builtin parameterisations with analytic jets.

A jets function takes parameter points ``X`` of shape (m, 2) and returns
``(S, dS, d2S)`` with shapes (m, n), (m, n, 2), (m, n, 2, 2).
"""
import numpy as np


def _split(X):
    X = np.asarray(X, dtype=float)
    return X[:, 0], X[:, 1], X.shape[0]


def affine(p, a, b):
    p, a, b = (np.asarray(t, float) for t in (p, a, b))
    n = p.size

    def jets(X):
        x, y, m = _split(X)
        S = p + np.outer(x, a) + np.outer(y, b)
        dS = np.broadcast_to(np.column_stack([a, b]), (m, n, 2)).copy()
        return S, dS, np.zeros((m, n, 2, 2))

    return jets


def plane(n=3):
    e = np.eye(n)
    return affine(np.zeros(n), e[0], e[1])


def quadratic_graph(a, b, c):
    """(x, y, a x^2 + 2 b x y + c y^2)."""

    def jets(X):
        x, y, m = _split(X)
        S = np.column_stack([x, y, a * x * x + 2 * b * x * y + c * y * y])
        dS = np.zeros((m, 3, 2))
        dS[:, 0, 0] = 1.0
        dS[:, 1, 1] = 1.0
        dS[:, 2, 0] = 2 * a * x + 2 * b * y
        dS[:, 2, 1] = 2 * b * x + 2 * c * y
        d2S = np.zeros((m, 3, 2, 2))
        d2S[:, 2] = [[2 * a, 2 * b], [2 * b, 2 * c]]
        return S, dS, d2S

    return jets


def cylinder(radius=1.0):
    """(R cos x, R sin x, y)."""

    def jets(X):
        x, y, m = _split(X)
        c, s = np.cos(x), np.sin(x)
        S = np.column_stack([radius * c, radius * s, y])
        dS = np.zeros((m, 3, 2))
        dS[:, 0, 0] = -radius * s
        dS[:, 1, 0] = radius * c
        dS[:, 2, 1] = 1.0
        d2S = np.zeros((m, 3, 2, 2))
        d2S[:, 0, 0, 0] = -radius * c
        d2S[:, 1, 0, 0] = -radius * s
        return S, dS, d2S

    return jets


def sphere(radius=1.0):
    """Longitude x, latitude y: R (cos y cos x, cos y sin x, sin y)."""

    def jets(X):
        x, y, m = _split(X)
        cx, sx, cy, sy = np.cos(x), np.sin(x), np.cos(y), np.sin(y)
        S = radius * np.column_stack([cy * cx, cy * sx, sy])
        dS = np.zeros((m, 3, 2))
        dS[:, :, 0] = radius * np.column_stack([-cy * sx, cy * cx, 0 * x])
        dS[:, :, 1] = radius * np.column_stack([-sy * cx, -sy * sx, cy])
        d2S = np.zeros((m, 3, 2, 2))
        d2S[:, :, 0, 0] = radius * np.column_stack([-cy * cx, -cy * sx, 0 * x])
        d2S[:, :, 0, 1] = radius * np.column_stack([sy * sx, -sy * cx, 0 * x])
        d2S[:, :, 1, 0] = d2S[:, :, 0, 1]
        d2S[:, :, 1, 1] = radius * np.column_stack([-cy * cx, -cy * sx, -sy])
        return S, dS, d2S

    return jets


def capped_cone(slope=1.0, cap=1.0):
    """Graph of ``slope * sqrt(cap^2 + x^2 + y^2)``: a cone smoothed at the apex."""

    def jets(X):
        x, y, m = _split(X)
        w = np.sqrt(cap * cap + x * x + y * y)
        S = np.column_stack([x, y, slope * w])
        dS = np.zeros((m, 3, 2))
        dS[:, 0, 0] = 1.0
        dS[:, 1, 1] = 1.0
        dS[:, 2, 0] = slope * x / w
        dS[:, 2, 1] = slope * y / w
        d2S = np.zeros((m, 3, 2, 2))
        w3 = w**3
        d2S[:, 2, 0, 0] = slope * (cap * cap + y * y) / w3
        d2S[:, 2, 1, 1] = slope * (cap * cap + x * x) / w3
        d2S[:, 2, 0, 1] = d2S[:, 2, 1, 0] = -slope * x * y / w3
        return S, dS, d2S

    return jets


def fsigma_jets(sigma, X):
    """F(x, y) = (f(x, y), x^2 - y^2, x y) with f = (1 - s^2 x^2 - s^2 y^2)(x - s x^3, y - s y^3)."""
    x, y, m = _split(X)
    s = sigma
    q = 1.0 - s * s * (x * x + y * y)
    qx, qy, qq = -2 * s * s * x, -2 * s * s * y, -2 * s * s
    px, py = x - s * x**3, y - s * y**3
    px1, py1 = 1 - 3 * s * x * x, 1 - 3 * s * y * y
    px2, py2 = -6 * s * x, -6 * s * y
    S = np.column_stack([q * px, q * py, x * x - y * y, x * y])
    dS = np.zeros((m, 4, 2))
    dS[:, 0, 0] = qx * px + q * px1
    dS[:, 0, 1] = qy * px
    dS[:, 1, 0] = qx * py
    dS[:, 1, 1] = qy * py + q * py1
    dS[:, 2, 0] = 2 * x
    dS[:, 2, 1] = -2 * y
    dS[:, 3, 0] = y
    dS[:, 3, 1] = x
    d2S = np.zeros((m, 4, 2, 2))
    d2S[:, 0, 0, 0] = qq * px + 2 * qx * px1 + q * px2
    d2S[:, 0, 0, 1] = d2S[:, 0, 1, 0] = qy * px1
    d2S[:, 0, 1, 1] = qq * px
    d2S[:, 1, 0, 0] = qq * py
    d2S[:, 1, 0, 1] = d2S[:, 1, 1, 0] = qx * py1
    d2S[:, 1, 1, 1] = qq * py + 2 * qy * py1 + q * py2
    d2S[:, 2, 0, 0] = 2.0
    d2S[:, 2, 1, 1] = -2.0
    d2S[:, 3, 0, 1] = d2S[:, 3, 1, 0] = 1.0
    return S, dS, d2S


def fsigma(sigma):
    return lambda X: fsigma_jets(sigma, X)


def rescaled_fsigma(sigma, eps, T):
    """x -> eps * F_sigma(T x / eps), the blown-down embedding in source coordinates."""
    T = np.asarray(T, float)

    def jets(X):
        Y = (np.asarray(X, float) @ T.T) / eps
        S, dS, d2S = fsigma_jets(sigma, Y)
        dS = dS @ T
        d2S = np.einsum("mkab,ai,bj->mkij", d2S, T, T) / eps
        return eps * S, dS, d2S

    return jets


def norm_sphere(norm):
    """Unit sphere of a 3D norm over the longitude/latitude chart: u / Phi(u)."""
    base = sphere(1.0)

    def jets(X):
        u, du, d2u = base(X)
        e, L, H = norm.jets(u)
        N = np.sqrt(2 * e)
        g = L / N[:, None]  # gradient of Phi
        hess_phi = (H - np.einsum("ki,kj->kij", g, g)) / N[:, None, None]
        Ni = np.einsum("kn,kni->ki", g, du)
        Nij = np.einsum("kni,knm,kmj->kij", du, hess_phi, du) + np.einsum("kn,knij->kij", g, d2u)
        S = u / N[:, None]
        dS = du / N[:, None, None] - np.einsum("kn,ki->kni", u, Ni) / (N**2)[:, None, None]
        cross = np.einsum("kni,kj->knij", du, Ni)
        d2S = (
            d2u / N[:, None, None, None]
            - (cross + cross.transpose(0, 1, 3, 2)) / (N**2)[:, None, None, None]
            - np.einsum("kn,kij->knij", u, Nij) / (N**2)[:, None, None, None]
            + 2 * np.einsum("kn,ki,kj->knij", u, Ni, Ni) / (N**3)[:, None, None, None]
        )
        return S, dS, d2S

    return jets


def finite_difference(fmap, h=1e-4):
    """Jets of an arbitrary map R^2 -> R^n by central differences (O(h^2))."""

    def jets(X):
        X = np.asarray(X, float)
        S = fmap(X)
        m, n = S.shape
        E = np.eye(2) * h
        dS = np.empty((m, n, 2))
        d2S = np.empty((m, n, 2, 2))
        for i in range(2):
            fp, fm = fmap(X + E[i]), fmap(X - E[i])
            dS[:, :, i] = (fp - fm) / (2 * h)
            d2S[:, :, i, i] = (fp - 2 * S + fm) / h**2
        fpp = fmap(X + E[0] + E[1])
        fpm = fmap(X + E[0] - E[1])
        fmp = fmap(X - E[0] + E[1])
        fmm = fmap(X - E[0] - E[1])
        d2S[:, :, 0, 1] = d2S[:, :, 1, 0] = (fpp - fpm - fmp + fmm) / (4 * h * h)
        return S, dS, d2S

    return jets


BUILTIN = {
    "plane": plane,
    "affine": affine,
    "quadratic_graph": quadratic_graph,
    "saddle": lambda: quadratic_graph(1.0, 0.0, -1.0),
    "paraboloid": lambda: quadratic_graph(1.0, 0.0, 1.0),
    "cylinder": cylinder,
    "sphere": sphere,
    "capped_cone": capped_cone,
    "fsigma": fsigma,
}
