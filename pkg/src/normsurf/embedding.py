"""Isometric saddle embeddings of planar Finsler metrics into a 4D normed space.

Pipeline for a metric ``phi`` on a neighbourhood of 0 in R^2:

1. normalise the unit ball of ``phi0 = phi(0, .)`` so that it is inscribed
   in ``[-1, 1]^2`` touching the side midpoints;
2. pick ``sigma`` and a radius ``U`` for the chart ``F_sigma`` and verify
   that the unit-vector image ``G(U x S) = dF_sigma(U x S)`` is pre-convex;
3. for a non-constant metric, blow it up (``y -> phi(eps y, .)``) until the
   same check passes;
4. glue the patch norm ``Psi(dF(y) v) = phi_eps(y, v)`` to an ellipsoidal
   norm with a smooth convex max, giving a quadratically convex norm on R^4;
5. certify: convexity sweep, isometry of ``x -> eps F_sigma(T x / eps)``,
   strict saddle verdicts in the synthesised norm.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from . import charts
from .errors import ConfigurationError, ExtensionError
from .norms import FAMILIES, MinkowskiNorm, PullbackNorm, norm_from_dict
from .surfaces import STRICT, ImmersedSurface, classify_region

# --- source metrics ---------------------------------------------------------------


class ConstantMetric:
    """``phi(x, v) = norm(v)``."""

    kind = "constant"

    def __init__(self, norm):
        if norm.dim != 2:
            raise ConfigurationError("source metric must live on R^2")
        self.norm = norm

    def value(self, X, V):
        return self.norm.value(np.atleast_2d(V))

    def grad(self, X, V):
        V = np.atleast_2d(V)
        e, L, _ = self.norm.jets(V)
        return np.zeros_like(V), L / np.sqrt(2 * e)[:, None]

    def at_origin(self):
        return self.norm

    def to_dict(self):
        return {"type": "constant", "norm": self.norm.to_dict()}


class SphereGraphMetric:
    """Round sphere of radius ``R`` over its tangent plane: ``g = I + x x^T / (R^2 - |x|^2)``."""

    kind = "sphere_graph"

    def __init__(self, radius=1.0):
        self.R = float(radius)

    def _g(self, X):
        X = np.atleast_2d(X)
        w = self.R**2 - (X * X).sum(axis=1)
        if np.any(w <= 0):
            raise ConfigurationError("point outside the sphere graph chart")
        return X, w

    def value(self, X, V):
        X, w = self._g(X)
        V = np.atleast_2d(V)
        xv = (X * V).sum(axis=1)
        return np.sqrt((V * V).sum(axis=1) + xv * xv / w)

    def grad(self, X, V):
        X, w = self._g(X)
        V = np.atleast_2d(V)
        xv = (X * V).sum(axis=1)
        phi = np.sqrt((V * V).sum(axis=1) + xv * xv / w)
        dv = (V + (xv / w)[:, None] * X) / phi[:, None]
        dx = ((xv / w)[:, None] * V + (xv * xv / w**2)[:, None] * X) / phi[:, None]
        return dx, dv

    def at_origin(self):
        from .norms import euclidean

        return euclidean(2)

    def to_dict(self):
        return {"type": "sphere_graph", "radius": self.R}


def metric_from_dict(doc):
    kind = doc.get("type") if isinstance(doc, dict) else None
    if kind == "constant":
        return ConstantMetric(norm_from_dict(doc["norm"]))
    if kind == "sphere_graph":
        return SphereGraphMetric(doc.get("radius", 1.0))
    raise ConfigurationError(f"unknown metric type {kind!r}")


class ScaledMetric:
    """``m(y, v) = phi(eps T^-1 y, T^-1 v)``: the metric in normalised, blown-up coordinates."""

    def __init__(self, metric, T, eps=1.0):
        self.metric = metric
        self.T = np.asarray(T, float)
        self.Ti = np.linalg.inv(self.T)
        self.eps = float(eps)

    def value(self, Y, V):
        return self.metric.value(self.eps * np.atleast_2d(Y) @ self.Ti.T, np.atleast_2d(V) @ self.Ti.T)

    def grad(self, Y, V):
        dx, dv = self.metric.grad(self.eps * np.atleast_2d(Y) @ self.Ti.T, np.atleast_2d(V) @ self.Ti.T)
        return self.eps * dx @ self.Ti, dv @ self.Ti

    def unit_vectors(self, Y, theta):
        """``u(theta) / m(y, u(theta))`` for matching stacks of points and angles."""
        U = np.column_stack([np.cos(theta), np.sin(theta)])
        return U / self.value(Y, U)[:, None]

    def unit_vectors_dtheta(self, Y, theta):
        U = np.column_stack([np.cos(theta), np.sin(theta)])
        dU = np.column_stack([-np.sin(theta), np.cos(theta)])
        m = self.value(Y, U)
        _, dv = self.grad(Y, U)
        dm = (dv * dU).sum(axis=1)
        return dU / m[:, None] - U * (dm / m**2)[:, None]


# --- the map G = dF_sigma --------------------------------------------------------


def g_map(sigma, Y, V):
    """``G(y, v) = dF_sigma(y) v``."""
    _, dS, _ = charts.fsigma_jets(sigma, np.atleast_2d(Y))
    return np.einsum("kni,ki->kn", dS, np.atleast_2d(V))


def g_jacobian(sigma, Y, V):
    """4x4 Jacobian of G with columns ``d/dy1, d/dy2, d/dv1, d/dv2``."""
    _, dS, d2S = charts.fsigma_jets(sigma, np.atleast_2d(Y))
    return np.concatenate([np.einsum("knij,kj->kni", d2S, np.atleast_2d(V)), dS], axis=2)


def g_det_flat(xi, eta):
    """``det dG`` for ``sigma = 0``: ``2 (xi^2 + eta^2)`` (fourth chart component ``x y``)."""
    return 2.0 * (np.asarray(xi) ** 2 + np.asarray(eta) ** 2)


def g_inverse(sigma, W, tol=1e-15, max_iter=30):
    """Solve ``G(y, v) = w`` by Newton from the ``sigma = 0`` solution.

    Returns ``(Y, V, ok)``; ``ok`` is False where the iteration failed or the
    seed is degenerate (``w12 = 0``).
    """
    W = np.atleast_2d(np.asarray(W, float))
    V = W[:, :2].copy()
    xi, eta = V[:, 0], V[:, 1]
    det = 2.0 * (xi * xi + eta * eta)
    ok = det > 1e-300
    safe = np.where(ok, det, 1.0)
    Y = np.column_stack([(xi * W[:, 2] + 2 * eta * W[:, 3]) / safe, (-eta * W[:, 2] + 2 * xi * W[:, 3]) / safe])
    scale = np.abs(W).max(axis=1)
    for _ in range(max_iter):
        R = g_map(sigma, Y, V) - W
        res = np.abs(R).max(axis=1)
        if np.all((res <= tol * scale) | ~ok):
            break
        J = g_jacobian(sigma, Y, V)
        good = ok & np.isfinite(J).all(axis=(1, 2)) & (np.abs(np.linalg.det(J)) > 1e-300)
        step = np.zeros_like(W)
        if good.any():
            step[good] = np.linalg.solve(J[good], R[good][..., None])[..., 0]
        ok = good
        Y = Y - step[:, :2]
        V = V - step[:, 2:]
    R = g_map(sigma, Y, V) - W
    ok &= np.abs(R).max(axis=1) <= 1e-12 * scale
    return Y, V, ok


def a_coefficients(sigma, x, y):
    """(A11, A12, A21, A22) with ``df_sigma = [[1 - A11, -A12], [-A21, 1 - A22]]``."""
    s = sigma
    A11 = 3 * s * x**2 + s**2 * x**2 * (3 - 5 * s * x**2) + s**2 * y**2 * (1 - 3 * s * x**2)
    A12 = 2 * s**2 * x * y * (1 - s * x**2)
    A21 = 2 * s**2 * x * y * (1 - s * y**2)
    A22 = 3 * s * y**2 + s**2 * y**2 * (3 - 5 * s * y**2) + s**2 * x**2 * (1 - 3 * s * y**2)
    return A11, A12, A21, A22


# --- normalisation and constants ------------------------------------------------


@dataclass
class Parallelogram:
    T: np.ndarray
    u1: np.ndarray
    u2: np.ndarray
    area: float
    angle: float
    midpoint_residual: float


def parallelogram_normalize(norm2, resolution_deg=1.0, area_rtol=1e-9):
    """Linear map sending a minimum-area circumscribed parallelogram of the unit ball to ``[-1, 1]^2``.

    For a unit vector ``u1`` the side through ``u1`` is the supporting line
    ``L1 = 1`` with ``L1 = legendre(u1)``; ``u2`` is the unit vector in
    ``ker L1``.  Conjugate pairs are the roots of ``legendre(u2)(u1)``; among
    them the one with least area ``4 / |det[L1; L2]|`` wins, ties going to the
    smallest angle.
    """
    if norm2.dim != 2:
        raise ConfigurationError("parallelogram normalisation needs a planar norm")
    D = np.array([[np.cos(t), np.sin(t)] for t in np.linspace(0, 2 * np.pi, 721)])
    r = 1.0 / norm2.value(D)
    P = D * r[:, None]
    cross = P[:-1, 0] * P[1:, 1] - P[:-1, 1] * P[1:, 0]
    if np.any(cross <= 0):
        raise ConfigurationError("unit ball samples are not star-shaped and convex")
    a, b = P[1:-1] - P[:-2], P[2:] - P[1:-1]
    e2 = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
    if np.any(e2 < -1e-12):
        raise ConfigurationError("unit ball samples are not convex")

    def pair(theta):
        u1 = norm2.unit([np.cos(theta), np.sin(theta)])
        L1 = norm2.legendre(u1)
        u2 = norm2.unit([-L1[1], L1[0]])
        L2 = norm2.legendre(u2)
        return u1, u2, L1, L2

    def resid(theta):
        u1, u2, L1, L2 = pair(theta)
        return float(L2 @ u1)

    grid = np.deg2rad(np.arange(0.0, 180.0, resolution_deg))
    vals = np.array([resid(t) for t in grid])
    roots = [float(t) for t, v in zip(grid, vals) if abs(v) < 1e-12]
    nxt = np.append(vals[1:], -vals[0])  # residual flips sign after a half turn
    ends = np.append(grid[1:], np.pi)
    for t0, t1, v0, v1 in zip(grid, ends, vals, nxt):
        if abs(v0) >= 1e-12 and abs(v1) >= 1e-12 and v0 * v1 < 0:
            roots.append(brentq(resid, t0, t1, xtol=1e-14))
    if not roots:
        raise ConfigurationError("no conjugate direction pair found")
    best = None
    for t in sorted(roots):
        u1, u2, L1, L2 = pair(t)
        area = 4.0 / abs(L1[0] * L2[1] - L1[1] * L2[0])
        if best is None or area < best[0] * (1 - area_rtol):
            best = (area, t, u1, u2)
    area, t, u1, u2 = best
    T = np.linalg.inv(np.column_stack([u1, u2]))
    hat = PullbackNorm(norm2, np.linalg.inv(T))
    mid = max(abs(hat.value(e) - 1.0) for e in np.eye(2))
    return Parallelogram(T, u1, u2, area, t, mid)


def support_constants(norm_hat, n=3600):
    """Sampled ``a0`` (support coefficient floor) and ``c0`` (planar convexity modulus).

    ``a0``: min over v0 on the unit sphere of ``|L0(e_k)|`` with ``k`` the
    dominant coordinate of v0.  ``c0``: min of ``(1 - L0(v)) / |v - v0|^2``
    over pairs of unit vectors.
    """
    th = 2 * np.pi * np.arange(n) / n
    S = norm_hat.unit(np.column_stack([np.cos(th), np.sin(th)]))
    L = norm_hat.legendre(S)
    k = np.argmax(np.abs(S), axis=1)
    a0 = float(np.abs(L[np.arange(n), k]).min())
    step = max(1, n // 360)
    c0 = np.inf
    for i in range(0, n, step):
        d = ((S - S[i]) ** 2).sum(axis=1)
        m = d > 1e-12
        c0 = min(c0, float(((1 - S[m] @ L[i]) / d[m]).min()))
    return a0, c0


def scale_constants(a0, c0):
    c1, c2 = a0 / 18.0, a0 / 3.0
    return {"a0": a0, "c0": c0, "c1": c1, "c2": c2, "c3": c0 * c1 * c1 / 100.0}


# --- pre-convexity ------------------------------------------------------------


@dataclass
class PreconvexityReport:
    sigma: float
    U_radius: float
    c_est: float
    max_violation: float
    n_points: int

    @property
    def passed(self):
        return self.max_violation <= 1e-12 and self.c_est > 0


def _conormal(sigma, metric, theta0):
    """Normalised linear functional vanishing on the patch tangent space over y = 0."""
    Y0 = np.zeros((len(theta0), 2))
    v0 = metric.unit_vectors(Y0, theta0)
    U = np.column_stack([np.cos(theta0), np.sin(theta0)])
    m = metric.value(Y0, U)
    dy, _ = metric.grad(Y0, U)
    J = g_jacobian(sigma, Y0, v0)
    dvdy = -np.einsum("ki,kj->kij", U, dy) / (m**2)[:, None, None]
    t_y = J[:, :, :2] + np.einsum("kna,kaj->knj", J[:, :, 2:], dvdy)
    t_th = np.einsum("kna,ka->kn", J[:, :, 2:], metric.unit_vectors_dtheta(Y0, theta0))
    Tan = np.concatenate([t_y, t_th[:, :, None]], axis=2)
    _, _, Vt = np.linalg.svd(np.transpose(Tan, (0, 2, 1)))
    L = Vt[:, -1, :]
    p = g_map(sigma, Y0, v0)
    L = L / np.einsum("kn,kn->k", L, p)[:, None]
    return L, p, v0


def preconvexity_verify(sigma, U_radius, metric, n_fiber=72, n_radii=6, n_angles=12, n_theta=180,
                        transform=None):
    """Check ``L(q) <= 1 - c (|y|^2 + |v - v0|^2)`` for fiber points over y = 0.

    ``transform`` optionally maps the sample grid of (y, theta) before use;
    it lets callers confirm the verdict is invariant under the chart's
    symmetries.
    """
    r = U_radius * np.arange(1, n_radii + 1) / n_radii
    a = 2 * np.pi * np.arange(n_angles) / n_angles
    Yg = np.vstack([np.zeros((1, 2)), (r[:, None, None] * np.stack([np.cos(a), np.sin(a)], -1)[None]).reshape(-1, 2)])
    th = 2 * np.pi * np.arange(n_theta) / n_theta
    Yq = np.repeat(Yg, n_theta, axis=0)
    Tq = np.tile(th, len(Yg))
    if transform is not None:
        Yq, Tq = transform(Yq, Tq)
    Vq = metric.unit_vectors(Yq, Tq)
    # q - p = (dF(y) - dF(0)) v + (v - v0, 0, 0), assembled without cancellation:
    # at tiny |y| the gap c |y|^2 sits below the roundoff of G(y, v) - G(0, v0)
    A11, A12, A21, A22 = a_coefficients(sigma, Yq[:, 0], Yq[:, 1])
    _, dS, _ = charts.fsigma_jets(sigma, Yq)
    D = np.column_stack([-(A11 * Vq[:, 0] + A12 * Vq[:, 1]), -(A21 * Vq[:, 0] + A22 * Vq[:, 1]),
                         np.einsum("kni,ki->kn", dS[:, 2:], Vq)])
    th0 = 2 * np.pi * np.arange(n_fiber) / n_fiber
    L, P, v0 = _conormal(sigma, metric, th0)
    c_est, worst = np.inf, -np.inf
    for i in range(n_fiber):
        Di = D.copy()
        Di[:, :2] += Vq - v0[i]
        gap = -(Di @ L[i])
        dist2 = (Yq * Yq).sum(axis=1) + ((Vq - v0[i]) ** 2).sum(axis=1)
        worst = max(worst, float((-gap).max()))
        m = dist2 > 1e-18
        c_est = min(c_est, float((gap[m] / dist2[m]).min()))
    return PreconvexityReport(sigma, U_radius, c_est, worst, len(Yq))


def sigma_search(norm_hat, metric=None, max_halvings=12, sigma_min=1e-6, **kw):
    """Shrink ``sigma`` from its seeded value until the pre-convexity check passes.

    ``U_radius = 0.9 sqrt(c3 sigma / 10)`` throughout, strictly inside the
    admissible radius ``sqrt(c3 sigma / 10)``.
    """
    metric = ScaledMetric(ConstantMetric(norm_hat), np.eye(2)) if metric is None else metric
    a0, c0 = support_constants(norm_hat)
    const = scale_constants(a0, c0)
    sigma = min(const["c2"] ** -2, 0.1) / 2.0
    history = []
    for _ in range(max_halvings + 1):
        U = 0.9 * np.sqrt(const["c3"] * sigma / 10.0)
        rep = preconvexity_verify(sigma, U, metric, **kw)
        history.append(rep)
        if rep.passed:
            return sigma, U, rep, const, history
        sigma *= 0.5
        if sigma < sigma_min:
            break
    raise ExtensionError(f"no sigma >= {sigma_min} passed the pre-convexity check")


# --- blow-up -------------------------------------------------------------------


@dataclass
class BlowupResult:
    eps: float
    distances: list
    ratios: list
    preconvexity: PreconvexityReport


def patch_distance(sigma, U_radius, metric_a, metric_b, n_radii=4, n_angles=8, n_theta=72):
    """Paired sup distance between the unit-vector patches of two metrics over the same (y, theta)."""
    r = U_radius * np.arange(0, n_radii + 1) / n_radii
    a = 2 * np.pi * np.arange(n_angles) / n_angles
    Y = (r[:, None, None] * np.stack([np.cos(a), np.sin(a)], -1)[None]).reshape(-1, 2)
    th = 2 * np.pi * np.arange(n_theta) / n_theta
    Yq, Tq = np.repeat(Y, n_theta, axis=0), np.tile(th, len(Y))
    A = g_map(sigma, Yq, metric_a.unit_vectors(Yq, Tq))
    B = g_map(sigma, Yq, metric_b.unit_vectors(Yq, Tq))
    return float(np.linalg.norm(A - B, axis=1).max())


def blowup_reduce(metric, T, sigma, U_radius, eps0=1.0, max_halvings=6, ratio_max=0.6):
    """Smallest-effort ``eps`` with a pre-convex blown-up patch and an observed convergence ratio.

    For a constant metric the blow-up is the identity and ``eps0`` is returned.
    """
    flat = ScaledMetric(ConstantMetric(metric.at_origin()), T)
    if isinstance(metric, ConstantMetric):
        rep = preconvexity_verify(sigma, U_radius, flat)
        return BlowupResult(eps0, [0.0], [], rep)
    eps, dists, ratios = eps0, [], []
    for k in range(max_halvings + 1):
        scaled = ScaledMetric(metric, T, eps)
        dists.append(patch_distance(sigma, U_radius, scaled, flat))
        if k:
            ratios.append(dists[-1] / dists[-2] if dists[-2] > 0 else 0.0)
        rep = preconvexity_verify(sigma, U_radius, scaled)
        if rep.passed and ratios and ratios[-1] <= ratio_max:
            return BlowupResult(eps, dists, ratios, rep)
        eps *= 0.5
    raise ExtensionError("blow-up did not produce a pre-convex patch with an observed convergence ratio")


# --- the glued norm ---------------------------------------------------------------


def smooth_clamp(z, width):
    """Convex ``M`` with ``M = 1`` for ``z <= 1 - width`` and ``M = z`` for ``z >= 1 + width``.

    Returns ``(M, M', M'')``; ``M''`` is a normalised ``(1 - tau^2)^3`` bump.
    """
    tau = np.clip((np.asarray(z, float) - 1.0) / width, -1.0, 1.0)
    t2 = tau * tau
    b = 35.0 / 32.0 * (1 - t2) ** 3
    B = 35.0 / 32.0 * (tau - tau**3 + 0.6 * tau**5 - tau**7 / 7.0) + 0.5
    mu = 35.0 / 32.0 * (t2 / 2 - t2**2 / 4 + t2**3 / 10 - t2**4 / 56) + tau / 2 + 35.0 / 256.0
    z = np.asarray(z, float)
    above = z >= 1 + width
    M = np.where(above, z, 1.0 + width * mu)
    return M, np.where(above, 1.0, B), np.where(above, 0.0, b / width)


class GluedNorm(MinkowskiNorm):
    """Smooth convex max of the patch norm ``Psi`` and an ellipsoidal norm ``E``.

    ``Psi(G(y, v)) = m(y, v)`` for ``|y| <= r_cut``;
    ``E(w) = (1 - delta) sqrt(phi0(w12)^2 + kappa |w34|^2)``;
    ``Phi = E M(Psi / E)``, and ``Phi = E`` wherever ``Psi`` is undefined.
    """

    family = "glued"

    def __init__(self, sigma, metric, phi0, kappa, delta, width, r_cut, fd_step=1e-7):
        self.dim = 4
        self.sigma = float(sigma)
        self.metric = metric
        self.phi0 = phi0
        self.kappa = float(kappa)
        self.delta = float(delta)
        self.width = float(width)
        self.r_cut = float(r_cut)
        self.fd_step = fd_step

    # ellipsoidal part
    def _E(self, W):
        e0, g0, h0 = self.phi0._jets(W[:, :2])
        z = W[:, 2:]
        s = (1 - self.delta) ** 2
        q = s * (2 * e0 + self.kappa * (z * z).sum(axis=1))  # E^2
        E = np.sqrt(q)
        gq = np.concatenate([2 * s * g0, 2 * s * self.kappa * z], axis=1)  # grad E^2
        Hq = np.zeros((len(W), 4, 4))
        Hq[:, :2, :2] = 2 * s * h0
        Hq[:, 2, 2] = Hq[:, 3, 3] = 2 * s * self.kappa
        gE = gq / (2 * E)[:, None]
        HE = (Hq - 2 * np.einsum("ki,kj->kij", gE, gE)) / (2 * E)[:, None, None]
        return E, gE, HE

    def patch_value(self, W):
        """``(Psi, grad Psi, inside)``; ``inside`` marks where the patch norm is defined."""
        W = np.atleast_2d(np.asarray(W, float))
        Y, V, ok = g_inverse(self.sigma, W)
        ok &= (Y * Y).sum(axis=1) <= self.r_cut**2
        psi = np.full(len(W), np.nan)
        grad = np.full((len(W), 4), np.nan)
        if ok.any():
            Yo, Vo = Y[ok], V[ok]
            psi[ok] = self.metric.value(Yo, Vo)
            dy, dv = self.metric.grad(Yo, Vo)
            J = g_jacobian(self.sigma, Yo, Vo)
            row = np.concatenate([dy, dv], axis=1)
            grad[ok] = np.linalg.solve(np.transpose(J, (0, 2, 1)), row[..., None])[..., 0]
        return psi, grad, ok

    def _energy(self, W):
        W = np.asarray(W, float)
        nrm = np.linalg.norm(W, axis=1)
        U = W / nrm[:, None]
        E = self._E(U)[0]
        psi, _, ok = self.patch_value(U)
        z = np.where(ok, psi / E, 0.0)
        Phi = E * smooth_clamp(z, self.width)[0]
        return 0.5 * (Phi * nrm) ** 2

    def _jets(self, W):
        W = np.asarray(W, float)
        nrm = np.linalg.norm(W, axis=1)
        U = W / nrm[:, None]
        E, gE, HE = self._E(U)
        psi, gP, ok = self.patch_value(U)
        Phi, gPhi, HPhi = E.copy(), gE.copy(), HE.copy()
        z = np.where(ok, psi / E, 0.0)
        act = ok & (z > 1 - self.width)
        if act.any():
            idx = np.nonzero(act)[0]
            M, M1, M2 = smooth_clamp(z[idx], self.width)
            HP = self._psi_hessian(U[idx], gP[idx])
            Ei, gEi = E[idx], gE[idx]
            d = gP[idx] - z[idx, None] * gEi
            Phi[idx] = Ei * M
            gPhi[idx] = M1[:, None] * gP[idx] + (M - z[idx] * M1)[:, None] * gEi
            HPhi[idx] = (
                M1[:, None, None] * HP
                + (M - z[idx] * M1)[:, None, None] * HE[idx]
                + (M2 / Ei)[:, None, None] * np.einsum("ki,kj->kij", d, d)
            )
        # back to the original scale: Phi is 1-homogeneous
        Phi = Phi * nrm
        HPhi = HPhi / nrm[:, None, None]
        e = 0.5 * Phi**2
        g = Phi[:, None] * gPhi
        H = np.einsum("ki,kj->kij", gPhi, gPhi) + Phi[:, None, None] * HPhi
        return e, g, H

    def _psi_hessian(self, U, gP):
        """Central differences of the analytic gradient of Psi."""
        h = self.fd_step
        H = np.empty((len(U), 4, 4))
        for j in range(4):
            e = np.zeros(4)
            e[j] = h
            _, gp, okp = self.patch_value(U + e)
            _, gm, okm = self.patch_value(U - e)
            if not (okp.all() and okm.all()):
                gp = np.where(okp[:, None], gp, gP)
                gm = np.where(okm[:, None], gm, gP)
                scale = np.where(okp & okm, 2 * h, h)[:, None]
            else:
                scale = 2 * h
            H[:, :, j] = (gp - gm) / scale
        return 0.5 * (H + np.transpose(H, (0, 2, 1)))

    def _params(self):
        return {
            "sigma": self.sigma,
            "metric": self.metric.metric.to_dict(),
            "T": self.metric.T.tolist(),
            "eps": self.metric.eps,
            "phi0": self.phi0.to_dict(),
            "kappa": self.kappa,
            "delta": self.delta,
            "width": self.width,
            "r_cut": self.r_cut,
        }

    @classmethod
    def from_params(cls, p):
        metric = ScaledMetric(metric_from_dict(p["metric"]), p["T"], p["eps"])
        return cls(p["sigma"], metric, norm_from_dict(p["phi0"]), p["kappa"], p["delta"], p["width"], p["r_cut"])


CORE, OUTER = 0.25, 0.75


def _disk_samples(r0, r1, n_r, n_a, n_theta):
    r = np.linspace(r0, r1, n_r)
    a = 2 * np.pi * np.arange(n_a) / n_a
    Y = (r[:, None, None] * np.stack([np.cos(a), np.sin(a)], -1)[None]).reshape(-1, 2)
    th = 2 * np.pi * np.arange(n_theta) / n_theta
    return np.repeat(Y, n_theta, axis=0), np.tile(th, len(Y))


def synthesize(sigma, metric, phi0_hat, U_radius, kappa0=None, max_doublings=40):
    """Glued 4D norm whose unit sphere contains the patch over ``|y| <= U_radius / 4``.

    ``kappa`` doubles until the ratio ``E0 / Psi`` separates the core disk
    (``|y| <= U/4``) from the outer annulus (``3U/4 <= |y| <= U``); ``delta``
    and the clamp width are then set from the two sampled extremes.  The
    radii ratio must exceed 2, the singular value ratio of ``y -> dF_0(y) v``
    in the normal block.
    """
    r_c, r_o, r_cut = CORE * U_radius, OUTER * U_radius, U_radius
    Yc, Tc = _disk_samples(0.0, r_c, 5, 16, 72)
    Yo, To = _disk_samples(r_o, r_cut, 5, 16, 72)
    Wc = g_map(sigma, Yc, metric.unit_vectors(Yc, Tc))
    Wo = g_map(sigma, Yo, metric.unit_vectors(Yo, To))
    kappa = sigma if kappa0 is None else kappa0

    def e0(W):
        return np.sqrt(phi0_hat.value(W[:, :2]) ** 2 + kappa * (W[:, 2:] ** 2).sum(axis=1))

    for _ in range(max_doublings):
        e_c, e_o = float(e0(Wc).max()), float(e0(Wo).min())
        if e_o > e_c:
            break
        kappa *= 2
    else:
        raise ExtensionError("ellipsoid stiffness could not separate core and outer patch rings")
    g = np.sqrt(e_o / e_c)
    delta = 1.0 - 1.0 / np.sqrt(e_c * e_o)
    width = 0.5 * (1.0 - 1.0 / g)
    return GluedNorm(sigma, metric, phi0_hat, kappa, delta, width, r_cut)


@dataclass
class ConvexityReport:
    min_eigenvalue: float
    worst_direction: list
    n_directions: int
    n_patch: int
    radial_table: list = field(repr=False, default_factory=list)

    @property
    def passed(self):
        return self.min_eigenvalue > 0


def convexity_sweep(norm, U_radius, n=10_000, seed=0):
    """Smallest half-Hessian eigenvalue over random, core and transition directions."""
    rng = np.random.default_rng(seed)
    k = n // 3
    D1 = rng.standard_normal((n - 2 * k, 4))
    r = CORE * U_radius * np.sqrt(rng.uniform(0, 1, k))
    a = rng.uniform(0, 2 * np.pi, k)
    Y = np.column_stack([r * np.cos(a), r * np.sin(a)])
    D2 = g_map(norm.sigma, Y, norm.metric.unit_vectors(Y, rng.uniform(0, 2 * np.pi, k)))
    r = U_radius * rng.uniform(CORE, 1.05, k)
    a = rng.uniform(0, 2 * np.pi, k)
    Y = np.column_stack([r * np.cos(a), r * np.sin(a)])
    D3 = g_map(norm.sigma, Y, norm.metric.unit_vectors(Y, rng.uniform(0, 2 * np.pi, k)))
    D = np.vstack([D1, D2, D3])
    D /= np.linalg.norm(D, axis=1, keepdims=True)
    ev = []
    vals = []
    for chunk in np.array_split(np.arange(len(D)), max(1, len(D) // 500)):
        e, _, H = norm._jets(D[chunk])
        ev.append(np.linalg.eigvalsh(H)[:, 0])
        vals.append(np.sqrt(2 * e))
    ev = np.concatenate(ev)
    vals = np.concatenate(vals)
    i = int(np.argmin(ev))
    n_patch = int(norm.patch_value(D)[2].sum())
    table = [[d.tolist(), float(1.0 / v)] for d, v in zip(D[:: max(1, len(D) // 200)], vals[:: max(1, len(D) // 200)])]
    return ConvexityReport(float(ev[i]), D[i].tolist(), len(D), n_patch, table)


# --- certification ------------------------------------------------------------------


@dataclass
class EmbeddingArtifact:
    metric: object
    T: np.ndarray
    sigma: float
    U_radius: float
    eps: float
    constants: dict
    preconvexity: PreconvexityReport
    blowup: BlowupResult
    norm: GluedNorm
    convexity: ConvexityReport = None
    isometry_error: float = float("nan")
    induced_error: float = float("nan")
    saddle_counts: dict = field(default_factory=dict)

    @property
    def core_radius(self):
        """Radius of the certified source-coordinate disk is ``eps * core_radius / |T|``."""
        return CORE * self.U_radius

    def surface(self):
        """The certified chart ``x -> eps F_sigma(T x / eps)`` in the synthesised norm."""
        R = self.eps * self.core_radius / np.linalg.norm(self.T, 2)
        return ImmersedSurface(self.norm, charts.rescaled_fsigma(self.sigma, self.eps, self.T),
                               [[-R, R], [-R, R]], name="embedding")

    @property
    def certified(self):
        return (
            self.preconvexity.passed
            and self.convexity is not None
            and self.convexity.passed
            and self.isometry_error < 1e-6
            and self.induced_error < 1e-6
            and set(self.saddle_counts) == {STRICT}
        )

    def to_dict(self):
        return {
            "metric": self.metric.to_dict(),
            "parallelogram_transform": np.asarray(self.T).tolist(),
            "sigma": self.sigma,
            "U_radius": self.U_radius,
            "epsilon": self.eps,
            "constants": self.constants,
            "preconvexity": {"c_est": self.preconvexity.c_est, "max_violation": self.preconvexity.max_violation},
            "blowup": {"distances": self.blowup.distances, "ratios": self.blowup.ratios},
            "norm": self.norm.to_dict(),
            "convexity": None if self.convexity is None else {
                "min_eigenvalue": self.convexity.min_eigenvalue,
                "worst_direction": self.convexity.worst_direction,
                "n_directions": self.convexity.n_directions,
                "n_patch_directions": self.convexity.n_patch,
                "radial_table": self.convexity.radial_table,
            },
            "isometry_error": self.isometry_error,
            "induced_metric_error": self.induced_error,
            "saddle_counts": self.saddle_counts,
            "certified": bool(self.certified),
        }


def isometry_certify(art, n_grid=5, n_dirs=24, n_random=1000, seed=0):
    """Isometry and saddle checks of the final chart in the synthesised norm.

    Returns ``(grid deviation, induced-metric relative error, saddle counts)``.
    """
    surf = art.surface()
    R = surf.domain[0, 1]
    xs = np.linspace(-0.9 * R, 0.9 * R, n_grid)
    X = np.array([[a, b] for a in xs for b in xs])
    X = X[(X * X).sum(axis=1) <= (0.9 * R) ** 2]
    th = 2 * np.pi * np.arange(n_dirs) / n_dirs
    U = np.column_stack([np.cos(th), np.sin(th)])
    Xq, Uq = np.repeat(X, n_dirs, axis=0), np.tile(U, (len(X), 1))
    V = Uq / art.metric.value(Xq, Uq)[:, None]
    dev = float(np.abs(surf.metric_value(Xq, V) - 1.0).max())

    rng = np.random.default_rng(seed)
    r = 0.9 * R * np.sqrt(rng.uniform(0, 1, n_random))
    a = rng.uniform(0, 2 * np.pi, n_random)
    Xr = np.column_stack([r * np.cos(a), r * np.sin(a)])
    Vr = rng.standard_normal((n_random, 2))
    rel = 0.0
    for x, v in zip(Xr, Vr):
        ind = surf.induced_metric(x)
        rel = max(rel, abs(ind.value(v) / art.metric.value(x, v)[0] - 1.0))
    grid = classify_region(surf, xs, xs, q_direction=(1.0, 0.0))
    return dev, float(rel), grid.counts


def embed(metric, n_sweep=10_000, seed=0, certify=True):
    """Run the whole pipeline for a source metric and return the artifact."""
    phi0 = metric.at_origin()
    par = parallelogram_normalize(phi0)
    phi0_hat = PullbackNorm(phi0, np.linalg.inv(par.T))
    sigma, U, rep, const, _ = sigma_search(phi0_hat)
    blow = blowup_reduce(metric, par.T, sigma, U)
    scaled = ScaledMetric(metric, par.T, blow.eps)
    norm = synthesize(sigma, scaled, phi0_hat, U)
    art = EmbeddingArtifact(metric, par.T, sigma, U, blow.eps, const, blow.preconvexity, blow, norm)
    if certify:
        art.convexity = convexity_sweep(norm, U, n_sweep, seed)
        art.isometry_error, art.induced_error, art.saddle_counts = isometry_certify(art, seed=seed)
    return art


FAMILIES["glued"] = GluedNorm.from_params
