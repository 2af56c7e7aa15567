"""Normed perimeters of planar convex sets, shortcuts on sharp cones, and the
search for shorter competitors to long geodesics on convex surfaces."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.spatial import ConvexHull
from shapely.geometry import Polygon

from . import charts
from .errors import ConfigurationError, ConvergenceError, DomainError
from .geodesics import shoot_span, unit_direction
from .surfaces import ImmersedSurface

# --- planar perimeters ------------------------------------------------------------


def polygon_perimeter(points, norm2):
    """Normed length of the closed polygon through ``points``."""
    P = np.asarray(points, float)
    if P.ndim != 2 or P.shape[0] < 3:
        raise ConfigurationError("a polygon needs at least three vertices")
    return float(np.sum(norm2.value(np.roll(P, -1, axis=0) - P)))


def convex_polygon(points):
    """Vertices of the convex hull in counter-clockwise order."""
    P = np.asarray(points, float)
    return P[ConvexHull(P).vertices]


def clip_halfplane(P, a, n, tol=1e-14):
    """Part of the convex polygon ``P`` with ``<n, x - a> <= 0``."""
    s = (P - a) @ n
    scale = tol * max(1.0, float(np.abs(P).max()))
    out = []
    m = len(P)
    for i in range(m):
        j = (i + 1) % m
        if s[i] <= scale:
            out.append(P[i])
        if (s[i] < -scale and s[j] > scale) or (s[i] > scale and s[j] < -scale):
            lam = s[i] / (s[i] - s[j])
            out.append(P[i] + lam * (P[j] - P[i]))
    return np.array(out)


@dataclass
class MonotonicityVerdict:
    inner_length: float
    outer_length: float
    cut_lengths: list
    max_increase: float
    holds: bool


def perimeter_monotonicity_check(inner, outer, norm2, tol=1e-10):
    """Compare the perimeters of nested convex polygons and replay the cutting argument.

    ``outer`` is cut along the line of every edge of ``inner``; each cut keeps
    the side containing ``inner``.  ``max_increase`` is the largest increase
    of the perimeter over one cut (it should be <= 0) and the last polygon of
    the sequence is ``inner`` itself.
    """
    inner = convex_polygon(inner)
    outer = convex_polygon(outer)
    pin, pout = Polygon(inner), Polygon(outer)
    slack = tol * max(1.0, float(np.abs(outer).max()))
    if not pout.buffer(slack).contains(pin):
        raise DomainError("inner polygon is not contained in the outer polygon")
    lengths = [polygon_perimeter(outer, norm2)]
    cur = outer
    for i in range(len(inner)):
        a, b = inner[i], inner[(i + 1) % len(inner)]
        e = b - a
        n = np.array([e[1], -e[0]])  # outward for counter-clockwise order
        cur = clip_halfplane(cur, a, n)
        lengths.append(polygon_perimeter(cur, norm2))
    inc = float(np.max(np.diff(lengths))) if len(lengths) > 1 else 0.0
    lin = polygon_perimeter(inner, norm2)
    holds = lin <= lengths[0] + tol * lengths[0] and inc <= tol * lengths[0]
    return MonotonicityVerdict(lin, lengths[0], lengths, inc, bool(holds))


def random_nested_pair(rng, n_outer=12, n_inner=8):
    """A random convex polygon and a random convex polygon inside it."""
    th = np.sort(rng.uniform(0, 2 * np.pi, n_outer))
    r = rng.uniform(0.5, 1.5, n_outer)
    outer = convex_polygon(np.column_stack([r * np.cos(th), r * np.sin(th)]) + rng.normal(0, 0.3, 2))
    w = rng.dirichlet(np.ones(len(outer)), size=n_inner)
    inner = w @ outer
    if len(np.unique(np.round(inner, 12), axis=0)) < 3:
        inner = 0.5 * outer + 0.5 * outer.mean(axis=0)
    try:
        inner = convex_polygon(inner)
    except Exception:  # degenerate hull of the random combination
        inner = 0.5 * outer + 0.5 * outer.mean(axis=0)
    return inner, outer


def strict_triangle_check(norm, n=1000, seed=0):
    """Smallest relative gap ``(|u| + |w| - |u + w|) / (|u| + |w|)`` over random pairs.

    Nearly proportional pairs (angle below 1e-3) are skipped.
    """
    rng = np.random.default_rng(seed)
    U = rng.standard_normal((n, norm.dim))
    W = rng.standard_normal((n, norm.dim))
    cos = np.abs(np.sum(U * W, axis=1)) / (np.linalg.norm(U, axis=1) * np.linalg.norm(W, axis=1))
    keep = cos < np.cos(1e-3)
    U, W = U[keep], W[keep]
    a, b, c = norm.value(U), norm.value(W), norm.value(U + W)
    return float(np.min((a + b - c) / (a + b)))


# --- sharp cone shortcut --------------------------------------------------------


@dataclass
class ShortcutResult:
    path: np.ndarray
    length: float
    margin: float
    branch: str
    t: float
    f_slope: float
    limit_rhs: float = float("nan")
    fd_limit: float = float("nan")

    @property
    def planarity(self):
        """Distance of the vertices from the best-fit plane through the origin-free hull, relative."""
        P = self.path
        if len(P) <= 3:
            return 0.0
        C = P - P.mean(axis=0)
        s = np.linalg.svd(C, compute_uv=False)
        return float(s[-1] / max(s[0], 1e-300))


class TrihedralCone:
    """``K' = {x : <n_i, x> <= 0, i = 1, 2, 3}`` with linearly independent outward normals."""

    def __init__(self, normals):
        N = np.asarray(normals, float)
        if N.shape != (3, 3) or abs(np.linalg.det(N)) < 1e-12 * np.prod(np.linalg.norm(N, axis=1)):
            raise ConfigurationError("a trihedral cone needs three independent normals")
        self.N = N / np.linalg.norm(N, axis=1)[:, None]
        # edge rays: <n_i, r_j> = -delta_ij
        self.edges = -np.linalg.inv(self.N)

    def contains(self, x, tol=1e-12):
        return bool(np.all(self.N @ x <= tol * max(1.0, np.linalg.norm(x))))

    def face_point(self, i, weights):
        """Point on face ``i`` (the plane of the i-th normal) as a positive combination of its two edges."""
        j, k = [m for m in range(3) if m != i]
        return weights[0] * self.edges[:, j] + weights[1] * self.edges[:, k]

    @classmethod
    def random(cls, rng, min_angle=0.2):
        """A random sharp trihedral cone with well separated faces."""
        while True:
            N = rng.standard_normal((3, 3))
            N /= np.linalg.norm(N, axis=1)[:, None]
            G = np.abs(N @ N.T - np.eye(3))
            if np.max(G) < np.cos(min_angle) and abs(np.linalg.det(N)) > 0.2:
                return cls(N)


def _edge_hits(p, q, v, n3, t):
    """Intersections of the segments [p, v t], [q, v t] with the plane <n3, x> = 0."""
    sp = (n3 @ p) / (n3 @ p - t * (n3 @ v))
    sq = (n3 @ q) / (n3 @ q - t * (n3 @ v))
    return p + sp * (v * t - p), q + sq * (v * t - q)


def cone_shortcut(norm3, cone, p, q, t_max=None, tol=1e-12):
    """A planar path on the boundary of ``cone`` from ``p`` to ``q``, shorter than ``[p, 0, q]``.

    ``p`` must lie on face 0 and ``q`` on face 1.  Returns a
    :class:`ShortcutResult`; raises :class:`ConvergenceError` if no path with
    margin above ``tol`` is found.
    """
    p, q = np.asarray(p, float), np.asarray(q, float)
    N = cone.N
    scale = max(norm3.value(p), norm3.value(q))
    if np.allclose(p, q, atol=1e-14 * scale):
        return ShortcutResult(np.array([p, q]), 0.0, 2 * norm3.value(p), "coincident", 0.0, 0.0)
    if abs(N[0] @ p) > 1e-9 * scale or abs(N[1] @ q) > 1e-9 * scale:
        raise ConfigurationError("p must lie on the first face and q on the second")
    v = np.cross(N[0], N[1])
    if N[2] @ v < 0:
        v = -v
    v = v / norm3.value(v)
    f0 = norm3.value(p) + norm3.value(q)
    slope = -float(norm3.legendre(p) @ v / norm3.value(p) + norm3.legendre(q) @ v / norm3.value(q))
    t_max = scale if t_max is None else t_max

    def f(t):
        return norm3.value(p - v * t) + norm3.value(q - v * t)

    def g(t):
        a, b = _edge_hits(p, q, v, N[2], t)
        return norm3.value(p - a) + norm3.value(a - b) + norm3.value(b - q), a, b

    e3 = N[2] @ v
    v1 = v - (e3 / (N[2] @ p)) * p
    v2 = v - (e3 / (N[2] @ q)) * q
    rhs = norm3.value(v - v1) + norm3.value(v - v2) - norm3.value(v1 - v2)
    # a(t), b(t) bend on the scale of the distance of p, q to the third plane
    h = 1e-3 * min(scale, abs(N[2] @ p) / e3, abs(N[2] @ q) / e3)
    d1 = (f(h) - g(h)[0]) / h
    d2 = (f(h / 2) - g(h / 2)[0]) / (h / 2)
    fd = 2 * d2 - d1

    if slope > 0:
        res = minimize_scalar(lambda s: f(-s), bounds=(0.0, t_max), method="bounded",
                              options={"xatol": 1e-14 * scale})
        t = float(res.x)
        path = np.array([p, -v * t, q])
        length = f(-t)
        branch = "apex_pushed"
    else:
        ts = t_max * 2.0 ** -np.arange(0, 60)
        vals = np.array([g(t)[0] for t in ts])
        good = np.nonzero(vals < f0 - tol)[0]
        if len(good) == 0:
            raise ConvergenceError("no shortcut found on the trihedral cone", f0 - vals.min())
        k = good[np.argmin(vals[good])]
        lo, hi = ts[min(k + 1, len(ts) - 1)], ts[max(k - 1, 0)]
        res = minimize_scalar(lambda s: g(s)[0], bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-14 * scale})
        t = float(res.x) if res.fun < vals[k] else float(ts[k])
        length, a, b = g(t)
        path = np.array([p, a, b, q])
        branch = "edge_cut"
    margin = f0 - length
    if margin <= tol:
        raise ConvergenceError("shortcut margin is not positive", margin)
    return ShortcutResult(path, float(length), float(margin), branch, t, slope, float(rhs), float(fd))


def f_second_differences(norm3, p, q, v, t_max, n=41):
    """Second differences of ``t -> |p - v t| + |q - v t|`` on a symmetric grid."""
    ts = np.linspace(-t_max, t_max, n)
    fv = norm3.value(p[None] - ts[:, None] * v) + norm3.value(q[None] - ts[:, None] * v)
    return fv[:-2] - 2 * fv[1:-1] + fv[2:]


# --- convex bodies ----------------------------------------------------------------


class GraphBody:
    """Epigraph ``{z >= h(x, y)}`` of a convex function, with a chart of its boundary."""

    contains_line = False

    def __init__(self, h, jets, center, name, params):
        self.h = h
        self.jets = jets
        self.center = np.asarray(center, float)
        self.name = name
        self.params = params

    def psi(self, X):
        X = np.atleast_2d(X)
        return self.h(X[:, 0], X[:, 1]) - X[:, 2]

    def recession_height(self, U, s=1e8):
        """Asymptotic slope ``lim h(s u)/s`` over planar directions; ``inf`` where it diverges."""
        U = np.atleast_2d(U)
        a = self.h(s * U[:, 0], s * U[:, 1]) / s
        b = self.h(2 * s * U[:, 0], 2 * s * U[:, 1]) / (2 * s)
        return np.where(np.abs(a - b) <= 1e-6 * (1 + np.abs(b)), b, np.inf)

    def surface(self, norm3, half_width):
        dom = [[-half_width, half_width], [-half_width, half_width]]
        return ImmersedSurface(norm3, self.jets, dom, name=self.name)


class CylinderBody:
    """Solid round cylinder around the z axis; contains lines, so refutation does not apply."""

    contains_line = True

    def __init__(self, radius=1.0):
        self.radius = radius
        self.center = np.zeros(3)
        self.name = "cylinder"
        self.params = {"radius": radius}
        self.jets = charts.cylinder(radius)

    def psi(self, X):
        X = np.atleast_2d(X)
        return np.hypot(X[:, 0], X[:, 1]) - self.radius

    def surface(self, norm3, half_width):
        dom = [[-np.pi * 50, np.pi * 50], [-half_width, half_width]]
        return ImmersedSurface(norm3, self.jets, dom, name="cylinder")


def body_from_dict(doc):
    kind = doc.get("type")
    if kind == "capped_cone":
        s, c = float(doc.get("slope", 1.0)), float(doc.get("cap", 1.0))
        return GraphBody(lambda x, y: s * np.sqrt(c * c + x * x + y * y), charts.capped_cone(s, c),
                         [0.0, 0.0, s * c + 1.0], "capped_cone", {"slope": s, "cap": c})
    if kind == "paraboloid":
        a = float(doc.get("curvature", 1.0))
        return GraphBody(lambda x, y: a * (x * x + y * y), charts.quadratic_graph(a, 0.0, a),
                         [0.0, 0.0, 1.0], "paraboloid", {"curvature": a})
    if kind == "cylinder":
        return CylinderBody(float(doc.get("radius", 1.0)))
    raise ConfigurationError(f"unknown body type {kind!r}")


# --- asymptotic cone of a graph body ---------------------------------------------


class GraphCone:
    """``{z >= k(x, y)}`` with ``k`` the (1-homogeneous) asymptotic slope of a graph body."""

    def __init__(self, body):
        self.body = body

    def k(self, U):
        return self.body.recession_height(U)

    def has_interior(self, n=64):
        th = 2 * np.pi * np.arange(n) / n
        return bool(np.all(np.isfinite(self.k(np.column_stack([np.cos(th), np.sin(th)])))))

    def project(self, X):
        """Vertical projection to the cone boundary."""
        X = np.asarray(X, float)
        return np.array([X[0], X[1], float(self.k(X[:2])[0])])

    def support_normal(self, X, h=1e-6):
        """Outward normal of the supporting plane at a boundary point away from the apex."""
        r = np.hypot(X[0], X[1])
        if r < 1e-9:
            raise DomainError("supporting plane requested at the apex")
        d = h * r
        gx = (self.k(X[:2] + [d, 0])[0] - self.k(X[:2] - [d, 0])[0]) / (2 * d)
        gy = (self.k(X[:2] + [0, d])[0] - self.k(X[:2] - [0, d])[0]) / (2 * d)
        n = np.array([gx, gy, -1.0])
        return n / np.linalg.norm(n)

    def generators(self, n=720):
        th = 2 * np.pi * np.arange(n) / n
        U = np.column_stack([np.cos(th), np.sin(th)])
        return np.column_stack([U, self.k(U)])


def _norm_distance_to_line(norm3, X, d):
    out = np.empty(len(X))
    for i, x in enumerate(X):
        s0 = (x @ d) / (d @ d)
        r = minimize_scalar(lambda s: norm3.value(x - s * d), bracket=(s0 - 1, s0 + 1))
        out[i] = r.fun
    return out


def supporting_trihedron(norm3, cone, p, q, rng=None):
    """Supporting planes at ``p``, ``q`` and a third one transverse to their intersection line."""
    n1, n2 = cone.support_normal(p), cone.support_normal(q)
    d = np.cross(n1, n2)
    if np.linalg.norm(d) < 1e-9:
        raise DomainError("p and q share a supporting plane")
    d /= np.linalg.norm(d)
    G = cone.generators()
    G = G / norm3.value(G)[:, None]
    order = np.argsort(-_norm_distance_to_line(norm3, G, d))
    candidates = list(order[:8])
    rng = rng or np.random.default_rng(0)
    candidates += list(rng.permutation(len(G))[:32])
    for i in candidates:
        try:
            n3 = cone.support_normal(G[i])
        except DomainError:
            continue
        if abs(n3 @ d) > 1e-6:
            try:
                return TrihedralCone([n1, n2, n3])
            except ConfigurationError:
                continue
    raise DomainError("no third supporting plane transverse to the edge line")


# --- refutation of geodesic lines ---------------------------------------------------


@dataclass
class RefutationStep:
    lam: float
    p: list
    q: list
    shortcut_margin: float
    competitor_length: float
    length_error: float
    surface_residual: float
    refuted: bool
    note: str = ""


@dataclass
class RefutationReport:
    status: str
    refuting_lambda: float | None
    steps: list = field(default_factory=list)
    reason: str = ""
    competitor: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self):
        return {
            "status": self.status,
            "refuting_lambda": self.refuting_lambda,
            "reason": self.reason,
            "steps": [s.__dict__ for s in self.steps],
        }

    def competitor_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "y", "z"])
        if self.competitor is not None:
            for row in self.competitor:
                w.writerow([repr(float(c)) for c in row])
        return buf.getvalue()


def _section_boundary(psi_lam, o, U, r_max, iters=200):
    """Exit radius of rays ``o + r u`` from the scaled body; ``inf`` if a ray stays inside."""
    lo = np.zeros(len(U))
    hi = np.full(len(U), r_max)
    out = psi_lam(o + hi[:, None] * U) > 0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        inside = psi_lam(o + mid[:, None] * U) <= 0
        lo = np.where(inside, mid, lo)
        hi = np.where(inside, hi, mid)
        if np.all(hi - lo <= 1e-15 * r_max):
            break
    r = 0.5 * (lo + hi)
    r[~out] = np.inf
    return r


def section_arc(norm3, psi_lam, o, p, q, side, r_max, n0=256, rtol=1e-10, n_max=2**16):
    """Boundary arc of the planar section through ``o``, ``p``, ``q`` on the given side.

    ``side`` is +1 or -1 (the rotation sense from ``p`` to ``q`` around ``o``).
    Returns ``(polyline, length, error_estimate)``; ``length`` is ``inf`` when
    the arc is unbounded.  The error estimate assumes second-order
    convergence of inscribed polygons.
    """
    e1 = p - o
    e1 /= np.linalg.norm(e1)
    w = q - o
    e2 = w - (w @ e1) * e1
    if np.linalg.norm(e2) < 1e-12 * np.linalg.norm(w):
        raise DomainError("section plane is degenerate")
    e2 /= np.linalg.norm(e2)
    phi_q = np.arctan2(w @ e2, w @ e1)  # in (0, pi)
    span = phi_q if side > 0 else phi_q - 2 * np.pi
    prev, n = None, n0
    while True:
        ang = np.linspace(0.0, span, n + 1)
        U = np.outer(np.cos(ang), e1) + np.outer(np.sin(ang), e2)
        r = _section_boundary(psi_lam, o, U, r_max)
        if not np.all(np.isfinite(r)):
            return None, np.inf, 0.0
        P = o + r[:, None] * U
        P[0], P[-1] = p, q
        L = float(np.sum(norm3.value(np.diff(P, axis=0))))
        if prev is not None and (abs(L - prev) <= rtol * L or n >= n_max):
            return P, L, abs(L - prev) / 3.0
        prev, n = L, 2 * n


def geodesic_line_refute(norm3, body, x0, v0, lambdas=tuple(2.0**k for k in range(1, 9)), dt=0.02,
                         geodesic=None, tol=1e-9):
    """Look for shorter competitors to rescaled arcs of a long geodesic through ``x0``.

    For each ``lam``, the geodesic arc of length ``2 lam`` centred at ``x0`` is
    scaled by ``1/lam`` about the body's interior point.  Its endpoints are
    projected to the asymptotic cone, a sharp-cone shortcut fixes a section
    plane, and the boundary arc of the scaled body in the plane through a
    fixed interior point and the two endpoints is measured.  A step refutes
    when that arc, inflated by its discretisation error, is shorter than 2.
    """
    if body.contains_line:
        return RefutationReport("inconclusive", None, reason="body contains a straight line")
    cone = GraphCone(body)
    if not cone.has_interior():
        return RefutationReport("inconclusive", None, reason="asymptotic cone has empty interior")
    lam_max = max(lambdas)
    surf = body.surface(norm3, 1.2 * lam_max + 10.0)
    c0 = body.center
    report = RefutationReport("inconclusive", None, reason="no refutation up to the largest scale")
    for lam in sorted(lambdas):
        if geodesic is None or geodesic.t1 < lam or geodesic.t0 > -lam:
            # shot per scale so an early refutation never pays for the longest arc
            geodesic = shoot_span(surf, x0, unit_direction(surf, x0, v0), -lam, lam, dt)
        S_p = body.jets(geodesic.state_at(-lam)[0][None])[0][0]
        S_q = body.jets(geodesic.state_at(lam)[0][None])[0][0]
        p, q = (S_p - c0) / lam, (S_q - c0) / lam

        def psi_lam(X, lam=lam):
            return body.psi(c0 + lam * np.atleast_2d(X))

        try:
            ph, qh = cone.project(p), cone.project(q)
            tri = supporting_trihedron(norm3, cone, ph, qh)
            sc = cone_shortcut(norm3, tri, ph, qh)
        except (DomainError, ConvergenceError, ConfigurationError) as exc:
            report.steps.append(RefutationStep(lam, p.tolist(), q.tolist(), float("nan"), float("inf"),
                                               0.0, float("nan"), False, str(exc)))
            continue
        o = 0.5 * (ph + qh)
        n_alpha = np.cross(sc.path[1] - ph, qh - ph) if len(sc.path) > 2 else np.cross(ph, qh)
        up = np.array([0.0, 0.0, 1.0])
        if np.linalg.norm(n_alpha) > 0:
            n_alpha /= np.linalg.norm(n_alpha)
            up = up - (up @ n_alpha) * n_alpha
        o = o + 0.05 * np.linalg.norm(ph - qh) * up / max(np.linalg.norm(up), 1e-300)
        if psi_lam(o)[0] >= 0 or o[2] <= cone.k(o[:2])[0]:
            report.steps.append(RefutationStep(lam, p.tolist(), q.tolist(), sc.margin, float("inf"),
                                               0.0, float("nan"), False, "interior point left the body"))
            continue
        r_max = 10.0 * max(np.linalg.norm(p - o), np.linalg.norm(q - o))
        best = (np.inf, 0.0, None)
        for side in (1, -1):
            P, L, err = section_arc(norm3, psi_lam, o, p, q, side, r_max)
            if L + err < best[0] + best[1]:
                best = (L, err, P)
        L, err, P = best
        resid = float("nan")
        if P is not None:
            resid = float(np.max(np.abs(psi_lam(P[1:-1]))) / lam) if len(P) > 2 else 0.0
        refuted = bool(np.isfinite(L) and L + 2 * err < 2.0 - tol)
        report.steps.append(RefutationStep(lam, p.tolist(), q.tolist(), sc.margin, L, err, resid, refuted))
        if refuted:
            report.status, report.refuting_lambda, report.reason = "refuted", lam, ""
            report.competitor = c0 + lam * P
            break
    return report
