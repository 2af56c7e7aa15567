"""Unit-speed geodesics on immersed surfaces, two-point connection, lengths and competitor search.

A curve ``gamma = S(c(t))`` is a geodesic iff the derivative of the Legendre
transform of its velocity annihilates the tangent plane.  In chart
coordinates this is the 2x2 system

    M c'' = b,   M = dS^T Q dS,   b = -dS^T Q d2S(c', c'),

with ``Q`` the half Hessian of the ambient norm at ``dS c'``.  Because
``Q gamma' = L(gamma')``, the system also preserves the speed.
"""
from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .errors import ConnectionNotFound, ConvergenceError, DomainError

COND_LIMIT = 1e8
_GL3 = np.polynomial.legendre.leggauss(3)


def acceleration(surface, c, cd):
    """Chart acceleration c'' of the geodesic through ``(c, c')``."""
    _, dS, d2S = surface.jets(c)
    _, _, Q = surface.ambient._jets((dS @ cd)[None])
    Q = Q[0]
    QdS = Q @ dS
    M = dS.T @ QdS
    rhs = -QdS.T @ (d2S @ cd @ cd)
    half_tr = 0.5 * (M[0, 0] + M[1, 1])
    rad = np.hypot(0.5 * (M[0, 0] - M[1, 1]), M[0, 1])
    if half_tr - rad <= (half_tr + rad) / COND_LIMIT:
        raise ConvergenceError("geodesic mass matrix is ill-conditioned", float((half_tr + rad) / max(half_tr - rad, 1e-300)))
    det = M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
    return np.array([M[1, 1] * rhs[0] - M[0, 1] * rhs[1], M[0, 0] * rhs[1] - M[1, 0] * rhs[0]]) / det


def _rk4(surface, y, h):
    def f(y):
        return np.concatenate([y[2:], acceleration(surface, y[:2], y[2:])])

    k1 = f(y)
    k2 = f(y + 0.5 * h * k1)
    k3 = f(y + 0.5 * h * k2)
    k4 = f(y + h * k3)
    return y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


@dataclass(frozen=True)
class GeodesicPath:
    """Samples of a unit-speed geodesic on a uniform arclength grid."""

    surface: object = field(repr=False)
    t: np.ndarray
    c: np.ndarray
    cd: np.ndarray
    step: float
    truncated: bool = False

    def __post_init__(self):
        for a in (self.t, self.c, self.cd):
            a.setflags(write=False)

    @property
    def t0(self):
        return float(self.t[0])

    @property
    def t1(self):
        return float(self.t[-1])

    @property
    def length(self):
        return self.t1 - self.t0

    @property
    def start(self):
        return self.c[0]

    @property
    def end(self):
        return self.c[-1]

    def state_at(self, t):
        """(c, c') at arclength ``t`` by a partial RK4 step from the nearest sample."""
        if not (self.t0 - 1e-12 <= t <= self.t1 + 1e-12):
            raise DomainError(f"t={t} outside [{self.t0}, {self.t1}]")
        k = int(np.clip(np.rint((t - self.t0) / self.step), 0, len(self.t) - 1))
        h = t - self.t[k]
        y = np.concatenate([self.c[k], self.cd[k]])
        if h != 0.0:
            y = _rk4(self.surface, y, h)
        return y[:2], y[2:]

    def frame(self, t):
        """(c, c', c'') at ``t``."""
        c, cd = self.state_at(t)
        return c, cd, acceleration(self.surface, c, cd)

    def residuals(self):
        """Per-sample ``|Phi(dS c') - 1|`` and ``max_i |<K, dS e_i>|`` with K by central differences."""
        S, dS, _ = self.surface.jets(self.c)
        vel = np.einsum("kni,ki->kn", dS, self.cd)
        speed = np.abs(self.surface.ambient.value(vel) - 1.0)
        L = self.surface.ambient.legendre(vel)
        K = np.gradient(L, self.step, axis=0, edge_order=2)
        tang = np.abs(np.einsum("kn,kni->ki", K, dS)).max(axis=1)
        return speed, tang

    def reversed(self):
        return GeodesicPath(self.surface, (self.t1 + self.t0 - self.t[::-1]).copy(), self.c[::-1].copy(),
                            -self.cd[::-1].copy(), self.step, self.truncated)

    def polyline(self, n_nodes):
        ts = np.linspace(self.t0, self.t1, n_nodes)
        return np.array([self.state_at(t)[0] for t in ts])

    def to_csv(self):
        speed, tang = self.residuals()
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "x", "y", "xdot", "ydot", "speed_residual", "tangency_residual"])
        for row in zip(self.t, self.c[:, 0], self.c[:, 1], self.cd[:, 0], self.cd[:, 1], speed, tang):
            w.writerow([repr(float(v)) for v in row])
        return buf.getvalue()


def unit_direction(surface, x, v):
    """Rescale a parameter vector to unit length in the induced metric."""
    v = np.asarray(v, float)
    return v / float(surface.metric_value(x, v)[0])


def shoot(surface, x0, v0, T, dt=1e-3, normalize=False):
    """Integrate the geodesic from ``x0`` with unit initial velocity ``v0`` over arclength ``T``.

    The step is ``T / ceil(T / dt)`` so the last sample sits exactly at ``T``.
    Leaving the chart domain ends the integration with ``truncated=True``.
    """
    x0 = np.asarray(x0, float)
    v0 = unit_direction(surface, x0, v0) if normalize else np.asarray(v0, float)
    if T <= 0:
        raise DomainError("geodesic length must be positive")
    n = max(1, int(np.ceil(T / dt - 1e-9)))
    h = T / n
    y = np.concatenate([x0, v0])
    Y = [y]
    truncated = False
    for _ in range(n):
        y = _rk4(surface, y, h)
        if not surface.contains(y[:2]):
            truncated = True
            break
        Y.append(y)
    Y = np.array(Y)
    t = h * np.arange(len(Y))
    return GeodesicPath(surface, t, Y[:, :2].copy(), Y[:, 2:].copy(), h, truncated)


def shoot_span(surface, x0, v0, a, b, dt=1e-3):
    """Geodesic through ``x0`` at t=0, sampled uniformly on ``[a, b]`` with ``a <= 0 <= b``."""
    v0 = np.asarray(v0, float)
    if a >= 0:
        return shoot(surface, x0, v0, b, dt)
    back = shoot(surface, x0, -v0, -a, dt)
    if back.truncated:
        raise DomainError("backward extension leaves the chart domain")
    p = shoot(surface, back.end, -back.cd[-1], b - a, dt)
    return GeodesicPath(surface, (p.t + a).copy(), p.c.copy(), p.cd.copy(), p.step, p.truncated)


# --- two-point problem ----------------------------------------------------------


@dataclass
class ConnectResult:
    path: GeodesicPath
    length: float
    solutions: list
    multiple: bool
    restarts: int


def _wrap(d, period):
    if period is not None:
        d = d.copy()
        d[0] = (d[0] + 0.5 * period) % period - 0.5 * period
    return d


def _newton_connect(surface, x0, x1, theta, T, dt, bvp_tol, period, max_iter, T_max):
    def endpoint(th, T):
        v = unit_direction(surface, x0, [np.cos(th), np.sin(th)])
        p = shoot(surface, x0, v, T, dt)
        if p.truncated:
            return None, None
        return _wrap(p.end - x1, period), p

    r, path = endpoint(theta, T)
    if r is None:
        return None
    for _ in range(max_iter):
        nr = float(np.linalg.norm(r))
        if nr < bvp_tol:
            return theta, T, path
        hth = 1e-7
        rp, _ = endpoint(theta + hth, T)
        if rp is None:
            return None
        J = np.column_stack([(rp - r) / hth, path.cd[-1]])
        try:
            step = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError:
            return None
        lam = 1.0
        while lam > 1e-4:
            th_n, T_n = theta + lam * step[0], T + lam * step[1]
            if 0 < T_n <= T_max:
                r_n, p_n = endpoint(th_n, T_n)
                if r_n is not None and np.linalg.norm(r_n) < nr:
                    theta, T, r, path = th_n, T_n, r_n, p_n
                    break
            lam *= 0.5
        else:
            return None
    return (theta, T, path) if np.linalg.norm(r) < bvp_tol else None


def connect(surface, x0, x1, dt=5e-3, bvp_tol=1e-8, max_restarts=20, seed=0, period=None,
            max_iter=40, T_max=None, stop_early=False):
    """Geodesic from ``x0`` to ``x1`` by Newton shooting in (direction angle, length).

    Restart 0 starts from the chart straight line; further restarts draw
    seeded random directions and lengths.  All converged restarts are kept
    and compared, so ``multiple`` reports genuinely different solutions.
    ``period`` identifies chart points modulo a period in the first coordinate.
    """
    x0, x1 = np.asarray(x0, float), np.asarray(x1, float)
    d = _wrap(x1 - x0, period)
    theta0 = float(np.arctan2(d[1], d[0]))
    T0 = float(surface.metric_value(x0, d)[0])
    if T0 == 0.0:
        raise DomainError("endpoints coincide")
    T_max = 4.0 * T0 + 1.0 if T_max is None else T_max
    rng = np.random.default_rng(seed)
    sols = []
    for k in range(max_restarts):
        if k == 0:
            th, T = theta0, T0
        elif k % 2:
            th, T = theta0 + rng.normal(0.0, 0.5), T0 * np.exp(rng.normal(0.0, 0.2))
        else:
            th, T = rng.uniform(0, 2 * np.pi), T0 * rng.uniform(0.8, 1.6)
        out = _newton_connect(surface, x0, x1, th, min(T, T_max), dt, bvp_tol, period, max_iter, T_max)
        if out is not None:
            sols.append(out)
            if stop_early:
                break
    if not sols:
        raise ConnectionNotFound(f"no geodesic found from {x0.tolist()} to {x1.tolist()} in {max_restarts} restarts")
    distinct = []
    for th, T, p in sols:
        th = float(np.mod(th, 2 * np.pi))
        if not any(abs(T - T2) < 1e-6 and abs(np.angle(np.exp(1j * (th - th2)))) < 1e-6 for th2, T2, _ in distinct):
            distinct.append((th, float(T), p))
    distinct.sort(key=lambda s: s[1])
    best = distinct[0]
    return ConnectResult(best[2], best[1], [(s[0], s[1]) for s in distinct], len(distinct) > 1, max_restarts)


# --- lengths ----------------------------------------------------------------------


def _segment_points(P, m, nodes, weights):
    """Quadrature points/weights for every segment of ``P`` split into ``m`` pieces."""
    A, D = P[:-1], np.diff(P, axis=0)
    s = (np.arange(m)[:, None] + 0.5 * (nodes[None, :] + 1.0)) / m  # (m, q)
    s = s.ravel()
    X = A[:, None, :] + s[None, :, None] * D[:, None, :]
    V = np.broadcast_to(D[:, None, :], X.shape)
    w = np.tile(weights / (2.0 * m), m)
    return X.reshape(-1, 2), V.reshape(-1, 2), w, len(s)


def length(surface, polyline, rtol=1e-9, order=8, max_refine=14):
    """Length of a parameter-space polyline in the induced metric.

    Each segment is integrated with composite Gauss-Legendre; the number of
    pieces doubles until the relative change drops below ``rtol``.
    """
    P = np.asarray(polyline, float)
    if len(P) < 2:
        return 0.0
    nodes, weights = np.polynomial.legendre.leggauss(order)
    prev = None
    m = 1
    for _ in range(max_refine):
        X, V, w, q = _segment_points(P, m, nodes, weights)
        vals = surface.metric_value(X, V).reshape(len(P) - 1, q)
        cur = float((vals * w).sum())
        if prev is not None and abs(cur - prev) <= rtol * abs(cur):
            return cur
        prev, m = cur, 2 * m
    return cur


# --- competitor search ------------------------------------------------------------


def _polyline_length_and_grad(surface, P):
    """GL3 length of a polyline and its gradient with respect to every node."""
    nodes, weights = _GL3
    s = 0.5 * (nodes + 1.0)
    w = 0.5 * weights
    A, D = P[:-1], np.diff(P, axis=0)
    X = (A[:, None, :] + s[None, :, None] * D[:, None, :]).reshape(-1, 2)
    V = np.repeat(D, len(s), axis=0)
    _, dS, d2S = surface.jets(X)
    U = np.einsum("kni,ki->kn", dS, V)
    e, L, _ = surface.ambient.jets(U)
    phi = np.sqrt(2.0 * e)
    g = L / phi[:, None]
    W = np.tile(w, len(D))
    total = float((W * phi).sum())
    dx = np.einsum("kn,knij,kj->ki", g, d2S, V)  # d phi / d x
    dv = np.einsum("kn,kni->ki", g, dS)  # d phi / d v
    S = np.tile(s, len(D))[:, None]
    ga = (W[:, None] * ((1 - S) * dx - dv)).reshape(len(D), len(s), 2).sum(axis=1)
    gb = (W[:, None] * (S * dx + dv)).reshape(len(D), len(s), 2).sum(axis=1)
    grad = np.zeros_like(P)
    grad[:-1] += ga
    grad[1:] += gb
    return total, grad


@dataclass
class CompetitorResult:
    best_length: float
    best_polyline: np.ndarray
    geodesic_length: float
    start_lengths: list

    @property
    def gap(self):
        """Geodesic length minus the best competitor length (positive means beaten)."""
        return self.geodesic_length - self.best_length


def competitor_search(surface, path, tube_radius, n_nodes=33, n_starts=64, seed=0, jobs=1,
                      max_iter=400):
    """Shortest polyline with the path's endpoints inside a parameter tube around the path.

    Interior nodes move in boxes of half-width ``tube_radius / sqrt(2)``
    around the path nodes (so they stay in the tube).  Each start is a
    seeded smooth random bump; start 0 is the path itself.  Minimisation is
    L-BFGS-B on the analytic length gradient.  The best polyline's length is
    re-measured with the refined quadrature of :func:`length`.
    """
    base = path.polyline(n_nodes)
    hw = tube_radius / np.sqrt(2.0)
    lo = np.maximum(base[1:-1] - hw, surface.domain[:, 0])
    hi = np.minimum(base[1:-1] + hw, surface.domain[:, 1])
    bounds = list(zip(lo.ravel(), hi.ravel()))
    s = np.linspace(0, 1, n_nodes)[1:-1]
    seeds = np.random.SeedSequence(seed).spawn(n_starts)

    def objective(z):
        P = base.copy()
        P[1:-1] = z.reshape(-1, 2)
        f, g = _polyline_length_and_grad(surface, P)
        return f, g[1:-1].ravel()

    def run(k):
        rng = np.random.default_rng(seeds[k])
        off = np.zeros_like(base[1:-1])
        if k:
            for j in range(1, 5):
                off += np.outer(np.sin(j * np.pi * s), rng.uniform(-hw, hw, 2)) / j
        z0 = np.clip(base[1:-1] + off, lo, hi).ravel()
        res = minimize(objective, z0, jac=True, method="L-BFGS-B", bounds=bounds,
                       options={"maxiter": max_iter, "ftol": 1e-15, "gtol": 1e-11})
        return float(res.fun), res.x

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(run, range(n_starts)))
    else:
        results = [run(k) for k in range(n_starts)]
    k = int(np.argmin([r[0] for r in results]))
    P = base.copy()
    P[1:-1] = results[k][1].reshape(-1, 2)
    return CompetitorResult(length(surface, P), P, path.length, [r[0] for r in results])
