"""The implicit calibrator of a geodesic, its (t, s) coordinates and the checks built on them.

For a unit-speed geodesic ``gamma`` on a surface ``S``, ``h(x)`` is the
parameter ``t`` solving ``<L(gamma'(t)), S(x) - gamma(t)> = 0`` near the
foot point.  Its t-derivative is ``<K, S(x) - gamma(t)> - 1`` with ``K`` the
curvature co-vector, which is ``-1`` on the curve itself.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import BPoly, RegularGridInterpolator
from shapely.geometry import LineString

from . import geodesics
from .errors import ConvergenceError, DomainError, OutOfTubeError


def induced_dual(surface, X, ell, tol=1e-14, max_iter=60):
    """Batched inverse Legendre transform of the induced metrics.

    Returns ``(V, phi_star)`` with ``dh(V) = phi_star**2`` and ``phi(V) = phi_star``.
    Damped Newton on ``e(dS v) - <ell, v>`` per point.
    """
    X = np.atleast_2d(X)
    ell = np.atleast_2d(np.asarray(ell, float))
    _, dS, _ = surface.jets(X)
    amb = surface.ambient
    V = np.linalg.solve(np.einsum("kni,knj->kij", dS, dS), ell[..., None])[..., 0]
    scale = np.maximum(np.abs(ell).max(axis=1), 1e-300)

    def energy(V):
        return amb._jets(np.einsum("kni,ki->kn", dS, V))

    for _ in range(max_iter):
        e, g, H = energy(V)
        r = np.einsum("kn,kni->ki", g, dS) - ell
        if np.all(np.abs(r).max(axis=1) <= tol * scale):
            break
        M = np.einsum("kni,knm,kmj->kij", dS, H, dS)
        step = np.linalg.solve(M, r[..., None])[..., 0]
        f0 = e - np.einsum("ki,ki->k", ell, V)
        lam = np.ones(len(V))
        for _ in range(40):
            W = V - lam[:, None] * step
            f1 = energy(W)[0] - np.einsum("ki,ki->k", ell, W)
            bad = f1 > f0 + 1e-15 * np.abs(f0)
            if not bad.any():
                break
            lam[bad] *= 0.5
        V = V - lam[:, None] * step
    e, g, _ = energy(V)
    res = np.abs(np.einsum("kn,kni->ki", g, dS) - ell).max(axis=1)
    if np.any(res > 1e-10 * scale):
        raise ConvergenceError("induced inverse Legendre transform did not converge", float(res.max()))
    return V, np.sqrt(2.0 * e)


class _Track:
    """Quintic Hermite interpolant of a geodesic and its ambient frame."""

    def __init__(self, path):
        acc = np.array([geodesics.acceleration(path.surface, c, cd) for c, cd in zip(path.c, path.cd)])
        self.poly = [
            BPoly.from_derivatives(path.t, np.stack([path.c[:, i], path.cd[:, i], acc[:, i]], axis=1))
            for i in range(2)
        ]
        self.surface = path.surface

    def chart(self, t):
        t = np.atleast_1d(np.asarray(t, float))
        c = np.column_stack([p(t) for p in self.poly])
        cd = np.column_stack([p(t, 1) for p in self.poly])
        cdd = np.column_stack([p(t, 2) for p in self.poly])
        return c, cd, cdd

    def ambient(self, t):
        """(gamma, gamma', gamma'', L, K, Q) in the ambient space."""
        c, cd, cdd = self.chart(t)
        S, dS, d2S = self.surface.jets(c)
        G1 = np.einsum("kni,ki->kn", dS, cd)
        G2 = np.einsum("kni,ki->kn", dS, cdd) + np.einsum("knij,ki,kj->kn", d2S, cd, cd)
        _, L, Q = self.surface.ambient.jets(G1)
        K = np.einsum("knm,km->kn", Q, G2)
        return S, G1, G2, L, K, Q


@dataclass
class SpecialCoordinates:
    """``r[i, j]`` is the chart point with coordinates ``(t[i], s[j])``."""

    t: np.ndarray
    s: np.ndarray
    r: np.ndarray
    h_residual: float
    rho: np.ndarray

    def interpolator(self):
        return RegularGridInterpolator((self.t, self.s), self.r)


class CalibratorField:
    """Implicit calibrator ``h`` of ``path`` on the main interval ``[a, b]``.

    The path must extend beyond ``[a, b]``; queries whose foot point leaves
    the sampled span raise :class:`OutOfTubeError`.
    """

    def __init__(self, surface, path, a=None, b=None, check_embedded=True):
        if check_embedded and not LineString(path.c).is_simple:
            raise DomainError("base geodesic self-intersects in the chart")
        self.surface = surface
        self.path = path
        self.a = path.t0 if a is None else float(a)
        self.b = path.t1 if b is None else float(b)
        self.track = _Track(path)
        self._S_samples = surface.jets(path.c)[0]

    @property
    def length(self):
        return self.b - self.a

    # h and dh ---------------------------------------------------------------

    def _solve(self, X, tol=1e-13, max_iter=40):
        X = np.atleast_2d(np.asarray(X, float))
        SX = self.surface.jets(X)[0]
        d = ((SX[:, None, :] - self._S_samples[None]) ** 2).sum(axis=2)
        t = self.path.t[np.argmin(d, axis=1)].astype(float)
        for _ in range(max_iter):
            G, G1, _, L, K, _ = self.track.ambient(t)
            D = SX - G
            F = np.einsum("kn,kn->k", L, D)
            dF = np.einsum("kn,kn->k", K, D) - np.einsum("kn,kn->k", L, G1)
            if np.all(np.abs(F) < tol):
                break
            t = t - F / dF
            if np.any((t < self.path.t0) | (t > self.path.t1)):
                raise OutOfTubeError("foot point left the sampled span of the geodesic")
        G, G1, _, L, K, _ = self.track.ambient(t)
        D = SX - G
        F = np.einsum("kn,kn->k", L, D)
        if np.any(np.abs(F) >= 1e-11):
            raise ConvergenceError("implicit relation for h not solved", float(np.abs(F).max()))
        return t, X, SX, G, G1, L, K

    def h(self, X):
        """Calibrator value(s)."""
        single = np.ndim(X) == 1
        t = self._solve(X)[0]
        return float(t[0]) if single else t

    def dh(self, X):
        """Differential of h by implicit differentiation of the defining relation."""
        single = np.ndim(X) == 1
        t, X, SX, G, G1, L, K = self._solve(X)
        _, dS, _ = self.surface.jets(X)
        denom = np.einsum("kn,kn->k", L, G1) - np.einsum("kn,kn->k", K, SX - G)
        out = np.einsum("kn,kni->ki", L, dS) / denom[:, None]
        return out[0] if single else out

    def phi_star_dh(self, X):
        return induced_dual(self.surface, X, self.dh(X))[1]

    def gradient_field(self, X):
        """Field ``W`` along the maximal growth of h with ``dh(W) = 1``."""
        X = np.atleast_2d(X)
        V, ps = induced_dual(self.surface, X, self.dh(X))
        return V / (ps**2)[:, None]

    def level_direction(self, X):
        """Unit (induced metric) vector in ker dh, oriented continuously."""
        X = np.atleast_2d(X)
        p = self.dh(X)
        k = np.column_stack([-p[:, 1], p[:, 0]])
        return k / self.surface.metric_value(X, k)[:, None]

    def project(self, X, t, iters=4):
        """Move points along W onto the level set ``h = t``."""
        X = np.atleast_2d(np.asarray(X, float)).copy()
        for _ in range(iters):
            X = X + (t - self.h(X))[:, None] * self.gradient_field(X)
        return X

    # special coordinates -------------------------------------------------------

    def _level_curve(self, t_ref, s_nodes, ds_max):
        """Points at arclength ``s_nodes`` along the level set ``h = t_ref`` through gamma(t_ref)."""
        x0 = self.track.chart(t_ref)[0][0]
        out = np.empty((len(s_nodes), 2))
        for sign in (1.0, -1.0):
            nodes = [(j, s) for j, s in enumerate(s_nodes) if (s > 0 if sign > 0 else s < 0)]
            nodes.sort(key=lambda js: abs(js[1]))
            x, s_cur = x0.copy(), 0.0
            for j, s in nodes:
                n = max(1, int(np.ceil(abs(s - s_cur) / ds_max - 1e-9)))
                h = (s - s_cur) / n
                for _ in range(n):
                    x = _rk4_field(self.level_direction, x, h)
                x = self.project(x, t_ref, iters=2)[0]
                out[j] = x
                s_cur = s
        for j, s in enumerate(s_nodes):
            if s == 0:
                out[j] = x0
        return out

    def special_coordinates(self, s_max=None, n_t=21, n_s=11, t_nodes=None, s_nodes=None,
                            t_ref=None, dt_flow=None):
        """Grid ``r(t, s)``: s-lines are arclength level curves of h, t-lines follow ``W``."""
        s_max = 0.05 * self.length if s_max is None else s_max
        t_nodes = np.linspace(self.a, self.b, n_t) if t_nodes is None else np.asarray(t_nodes, float)
        s_nodes = np.linspace(-s_max, s_max, n_s) if s_nodes is None else np.asarray(s_nodes, float)
        t_ref = 0.5 * (self.a + self.b) if t_ref is None else t_ref
        dt_flow = self.length / 200.0 if dt_flow is None else dt_flow
        R0 = self._level_curve(t_ref, s_nodes, s_max / 50.0)
        r = np.empty((len(t_nodes), len(s_nodes), 2))
        for direction in (1.0, -1.0):
            idx = [i for i, t in enumerate(t_nodes) if (t >= t_ref if direction > 0 else t < t_ref)]
            idx.sort(key=lambda i: abs(t_nodes[i] - t_ref))
            X, t_cur = R0.copy(), t_ref
            for i in idx:
                n = max(1, int(np.ceil(abs(t_nodes[i] - t_cur) / dt_flow - 1e-9))) if t_nodes[i] != t_cur else 0
                if n:
                    h = (t_nodes[i] - t_cur) / n
                    for _ in range(n):
                        X = _rk4_field(self.gradient_field, X, h)
                r[i] = X
                t_cur = t_nodes[i]
        flat = r.reshape(-1, 2)
        hres = float(np.abs(self.h(flat) - np.repeat(t_nodes, len(s_nodes))).max())
        W = self.gradient_field(flat)
        rho = (self.surface.metric_value(flat, W) ** 2).reshape(len(t_nodes), len(s_nodes))
        return SpecialCoordinates(t_nodes, s_nodes, r, hres, rho)

    # second-variation and calibration checks ----------------------------------------

    def verify_rho(self, s_max=None, n_t=21, t_nodes=None):
        """Finite-difference ``rho'_s(t, 0)`` and ``rho''_ss(t, 0)`` with the identity cross-checks.

        First derivatives use step ``s_max/50``; second derivatives use
        ``s_max/10`` with one Richardson step.
        """
        s_max = 0.05 * self.length if s_max is None else s_max
        h1, h2 = s_max / 50.0, s_max / 10.0
        s_nodes = np.array([-h2, -h2 / 2, -h1, 0.0, h1, h2 / 2, h2])
        if t_nodes is None:
            t_nodes = np.linspace(self.a, self.b, n_t + 2)[1:-1]
        co = self.special_coordinates(s_max=s_max, t_nodes=t_nodes, s_nodes=s_nodes)
        rho = co.rho
        rho_s = (rho[:, 4] - rho[:, 2]) / (2 * h1)
        rho_ss = _second(rho[:, 0], rho[:, 1], rho[:, 3], rho[:, 5], rho[:, 6], h2)

        flat = co.r.reshape(-1, 2)
        S, dS, _ = self.surface.jets(flat)
        R = S.reshape(len(t_nodes), 7, -1)
        v = np.einsum("kni,ki->kn", dS, self.gradient_field(flat)).reshape(R.shape)
        _, G1, G2, L, K, Q = self.track.ambient(t_nodes)
        _, dS0, _ = self.surface.jets(co.r[:, 3])
        v_s = _first(v[:, 0], v[:, 1], v[:, 5], v[:, 6], h2)
        v_ss = _second(v[:, 0], v[:, 1], v[:, 3], v[:, 5], v[:, 6], h2)
        R_ss = _second(R[:, 0], R[:, 1], R[:, 3], R[:, 5], R[:, 6], h2)
        Qvv = np.einsum("ki,kij,kj->k", v_s, Q, v_s)
        gnorm = np.sqrt(np.einsum("ki,kij,kj->k", G2, Q, G2))
        n = G2 / np.where(gnorm > 0, gnorm, 1.0)[:, None]
        normal_term = np.einsum("ki,kij,kj->k", G2, Q, n) * np.einsum("ki,kij,kj->k", R_ss, Q, n)
        return RhoReport(
            t=np.asarray(t_nodes),
            rho_s=rho_s,
            rho_ss=rho_ss,
            rho_at_zero=rho[:, 3],
            h_residual=co.h_residual,
            identity_form=Qvv - normal_term,
            identity_route=Qvv + np.einsum("ki,ki->k", L, v_ss),
            L_dot_vs=np.einsum("ki,ki->k", L, v_s),
            K_tangency=np.abs(np.einsum("kn,kni->ki", K, dS0)).max(axis=1),
        )

    def calibrate_correct(self, coords=None, sigmas=None, tol=1e-9):
        """Sweep ``sigma`` for ``g = (1 - sigma s^2) h`` and report the largest ``phi*(dg)`` per value."""
        co = self.special_coordinates(n_t=21, n_s=21) if coords is None else coords
        sigmas = np.logspace(-4, 0, 25) if sigmas is None else np.asarray(sigmas, float)
        nt, ns = len(co.t), len(co.s)
        flat = co.r.reshape(-1, 2)
        r_s = np.gradient(co.r, co.s, axis=1, edge_order=2).reshape(-1, 2)
        r_t = self.gradient_field(flat)
        J = np.stack([r_t, r_s], axis=2)
        ds = np.linalg.inv(J)[:, 1, :]
        h = self.h(flat)
        dh = self.dh(flat)
        s = np.tile(co.s, nt)
        worst = []
        for sig in sigmas:
            dg = (1 - sig * s * s)[:, None] * dh - (2 * sig * s * h)[:, None] * ds
            worst.append(float(induced_dual(self.surface, flat, dg)[1].max()))
        worst = np.array(worst)
        ok = np.nonzero(worst <= 1 + tol)[0]
        witness = float(sigmas[ok[0]]) if len(ok) else None
        return CalibrationReport(sigmas, worst, witness, float(np.abs(self.phi_star_dh(co.r[:, ns // 2]) - 1).max()))

    def calibration_inequality(self, coords, n_curves=200, seed=0, n_nodes=21, fraction=0.9):
        """Lengths of random tube polylines with the geodesic's endpoints, from the (t, s) grid."""
        interp = coords.interpolator()
        rng = np.random.default_rng(seed)
        t = np.linspace(coords.t[0], coords.t[-1], n_nodes)
        u = (t - t[0]) / (t[-1] - t[0])
        smax = fraction * min(abs(coords.s[0]), abs(coords.s[-1]))
        out = []
        for _ in range(n_curves):
            bump = sum(rng.uniform(-1, 1) * np.sin(k * np.pi * u) / k for k in range(1, 6))
            bump *= smax * rng.uniform(0, 1) / max(np.abs(bump).max(), 1e-300)
            P = interp(np.column_stack([t, bump]))
            out.append(geodesics.length(self.surface, P))
        return np.array(out)


@dataclass
class RhoReport:
    t: np.ndarray
    rho_s: np.ndarray
    rho_ss: np.ndarray
    rho_at_zero: np.ndarray
    h_residual: float
    identity_form: np.ndarray
    identity_route: np.ndarray
    L_dot_vs: np.ndarray
    K_tangency: np.ndarray

    @property
    def rho_s_max(self):
        return float(np.abs(self.rho_s).max())

    @property
    def rho_ss_min(self):
        return float(self.rho_ss.min())

    def passed(self, fd_tol=1e-4):
        return self.rho_s_max < fd_tol and self.rho_ss_min > -fd_tol


@dataclass
class CalibrationReport:
    sigmas: np.ndarray
    phi_star_dg_max: np.ndarray
    sigma_witness: float | None
    phi_star_dh_on_curve: float

    @property
    def certified(self):
        return self.sigma_witness is not None

    @property
    def best(self):
        return float(self.phi_star_dg_max.min())


def _rk4_field(field, X, h):
    k1 = field(X)
    k2 = field(X + 0.5 * h * k1)
    k3 = field(X + 0.5 * h * k2)
    k4 = field(X + h * k3)
    out = X + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return out[0] if np.ndim(X) == 1 else out


def _first(fm2, fm1, fp1, fp2, h):
    """Fourth-order central first derivative from f(-h), f(-h/2), f(h/2), f(h)."""
    return (fm2 - 8 * fm1 + 8 * fp1 - fp2) / (6 * h)


def _second(fm2, fm1, f0, fp1, fp2, h):
    """Richardson-extrapolated second derivative from steps h and h/2."""
    Dh = (fm2 - 2 * f0 + fp2) / h**2
    Dh2 = (fm1 - 2 * f0 + fp1) / (h / 2) ** 2
    return (4 * Dh2 - Dh) / 3


def calibrator_for(surface, x0, v0, length, extend=0.2, dt=1e-3):
    """Calibrator of the geodesic from ``x0`` (unit ``v0``) of the given length.

    The base path is extended by ``extend * length`` at both ends so that
    foot points of the tube stay inside the sampled span.
    """
    eps = extend * length
    path = geodesics.shoot_span(surface, x0, v0, -eps, length + eps, dt)
    if path.truncated:
        raise DomainError("extended geodesic leaves the chart domain")
    return CalibratorField(surface, path, 0.0, length)
