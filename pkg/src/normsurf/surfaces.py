"""Immersed surfaces in a normed space, induced metrics and the saddle test."""
from __future__ import annotations

import csv
import io
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from . import charts, kernels
from .errors import ConfigurationError, ImmersionError
from .norms import MinkowskiNorm, PullbackNorm, norm_from_dict

STRICT, SADDLE, NOT_SADDLE = "strictly_saddle", "saddle", "not_saddle"


class ImmersedSurface:
    """A chart ``S: U -> R^n`` with its first two derivatives.

    Parameters
    ----------
    ambient : MinkowskiNorm
        Norm of the ambient space.
    jets : callable
        ``X (m, 2) -> (S, dS, d2S)``, see :mod:`normsurf.charts`.
    domain : ((xmin, xmax), (ymin, ymax))
    """

    def __init__(self, ambient: MinkowskiNorm, jets, domain, name="custom", source=None,
                 immersion_tol=1e-8):
        self.ambient = ambient
        self._jets = jets
        self.domain = np.asarray(domain, dtype=float)
        self.name = name
        self.source = source
        self.immersion_tol = immersion_tol
        self.dim = ambient.dim

    # jets ----------------------------------------------------------------

    def jets(self, x):
        X = np.asarray(x, dtype=float)
        single = X.ndim == 1
        S, dS, d2S = self._jets(X.reshape(-1, 2))
        if single:
            return S[0], dS[0], d2S[0]
        return S, dS, d2S

    def point(self, x):
        return self.jets(x)[0]

    def contains(self, x, margin=0.0):
        X = np.atleast_2d(x)
        lo = self.domain[:, 0] + margin
        hi = self.domain[:, 1] - margin
        return bool(np.all((X >= lo) & (X <= hi)))

    def check_immersion(self, dS):
        sv = np.linalg.svd(dS, compute_uv=False)[..., -1]
        if np.any(sv <= self.immersion_tol):
            raise ImmersionError(f"chart differential is rank deficient (sigma_min={np.min(sv):.2e})")

    def induced_metric(self, x):
        """The pulled back norm ``v -> Phi(dS(x) v)`` on the parameter plane."""
        _, dS, _ = self.jets(x)
        self.check_immersion(dS)
        return PullbackNorm(self.ambient, dS, immersion_tol=self.immersion_tol)

    def metric_value(self, X, V):
        """phi_x(v) for stacks of points and parameter vectors."""
        _, dS, _ = self.jets(np.atleast_2d(X))
        return self.ambient.value(np.einsum("kni,ki->kn", dS, np.atleast_2d(V)))

    def reparameterized(self, M, x0):
        """The same surface through the affine change ``x = x0 + M z``."""
        M = np.asarray(M, float)
        x0 = np.asarray(x0, float)
        base = self._jets

        def jets(Z):
            S, dS, d2S = base(np.asarray(Z, float) @ M.T + x0)
            return S, dS @ M, np.einsum("knab,ai,bj->knij", d2S, M, M)

        corners = np.array([[a, b] for a in self.domain[0] for b in self.domain[1]])
        Z = np.linalg.solve(M, (corners - x0).T).T
        dom = np.column_stack([Z.min(axis=0), Z.max(axis=0)])
        return ImmersedSurface(self.ambient, jets, dom, name=f"{self.name}/affine")

    def with_ambient(self, ambient):
        return ImmersedSurface(ambient, self._jets, self.domain, self.name, self.source, self.immersion_tol)

    def __repr__(self):
        return f"ImmersedSurface({self.name!r}, n={self.dim})"


def surface_from_dict(doc, ambient=None):
    """Build a builtin chart from ``{"chart": name, "params": {...}, "ambient": ..., "domain": ...}``."""
    try:
        name = doc["chart"]
        params = dict(doc.get("params", {}))
        domain = doc["domain"]
    except (TypeError, KeyError) as exc:
        raise ConfigurationError(f"malformed chart description: missing {exc}") from None
    if ambient is None:
        ambient = norm_from_dict(doc["ambient"])
    if name == "norm_sphere":
        jets = charts.norm_sphere(ambient)
    elif name in charts.BUILTIN:
        try:
            jets = charts.BUILTIN[name](**params)
        except TypeError as exc:
            raise ConfigurationError(f"bad parameters for chart {name!r}: {exc}") from None
    else:
        raise ConfigurationError(f"unknown chart {name!r}")
    return ImmersedSurface(ambient, jets, domain, name=name, source=doc)


# --- second fundamental form ---------------------------------------------------


def q_normal_basis(Q, T, tol=1e-10):
    """Q-orthonormal basis of the Q-orthogonal complement of span(T).

    Gram-Schmidt on the tangent columns, then on the ambient basis vectors
    taken greedily by largest residual (ties by index), so the output is
    deterministic.
    """
    n = Q.shape[0]
    basis = []
    for v in T.T:
        w = v - sum((b @ Q @ v) * b for b in basis)
        basis.append(w / np.sqrt(w @ Q @ w))
    k = len(basis)
    remaining = list(range(n))
    normals = []
    while len(normals) < n - k:
        best, best_w, best_nrm = None, None, -1.0
        for i in remaining:
            v = np.eye(n)[i]
            w = v - sum((b @ Q @ v) * b for b in basis + normals)
            nrm = np.sqrt(max(w @ Q @ w, 0.0))
            if nrm > best_nrm + tol:
                best, best_w, best_nrm = i, w, nrm
        if best_nrm <= tol:
            raise ImmersionError("degenerate normal space")
        remaining.remove(best)
        normals.append(best_w / best_nrm)
    return np.array(normals)


def second_fundamental_pencil(surface, x, q_direction=(1.0, 0.0)):
    """Second fundamental forms ``II_k(u, w) = Q(d2S(u, w), n_k)`` for a Q-orthonormal normal basis.

    ``Q`` is the half Hessian of the ambient norm at ``dS(x) q_direction``.
    Returns an array of shape (n - 2, 2, 2).
    """
    _, dS, d2S = surface.jets(x)
    surface.check_immersion(dS)
    Q = surface.ambient.half_hessian(dS @ np.asarray(q_direction, float))
    normals = q_normal_basis(Q, dS)
    return np.einsum("nij,nm,km->kij", d2S, Q, normals)


@dataclass
class SaddleVerdict:
    point: tuple
    cls: str
    pencil_coefficients: tuple
    sweep_min: float = float("nan")
    sweep_max: float = float("nan")
    flagged: bool = False


def _det2(F):
    return F[..., 0, 0] * F[..., 1, 1] - F[..., 0, 1] ** 2


def pencil_class(forms, tol):
    """Closed-form class of a one- or two-form pencil; returns (class, coefficients)."""
    if len(forms) == 1:
        d = float(_det2(forms[0]))
        cls = STRICT if d < -tol else (SADDLE if d <= tol else NOT_SADDLE)
        return cls, (d,)
    A, B = forms[0], forms[1]
    dA, dB = float(_det2(A)), float(_det2(B))
    mixed = float(A[0, 0] * B[1, 1] + A[1, 1] * B[0, 0] - 2 * A[0, 1] * B[0, 1])
    disc = dA * dB - 0.25 * mixed * mixed
    if dA < -tol and disc > tol * tol:
        cls = STRICT
    elif dA <= tol and dB <= tol and disc >= -tol * tol:
        cls = SADDLE
    else:
        cls = NOT_SADDLE
    return cls, (dA, dB, mixed)


def sweep_class(forms, n_angles=720, tol=0.0):
    A = forms[0][None]
    B = (forms[1] if len(forms) > 1 else np.zeros((2, 2)))[None]
    lo, hi = kernels.pencil_sweep(np.ascontiguousarray(A), np.ascontiguousarray(B), n_angles)
    hi = float(hi[0])
    cls = STRICT if hi < -tol else (SADDLE if hi <= tol else NOT_SADDLE)
    return cls, float(lo[0]), hi


def saddle_classify(surface, x, q_direction=(1.0, 0.0), det_tol=1e-12, n_angles=720):
    """Classify a point as strictly_saddle / saddle / not_saddle.

    ``det_tol`` is relative to the squared size of the forms.  The closed
    form is cross-checked by a sweep over ``n_angles`` unit normals; a
    disagreement sets ``flagged``.
    """
    forms = second_fundamental_pencil(surface, x, q_direction)
    if forms.shape[0] > 2:
        raise ConfigurationError("saddle classification is implemented for ambient dimension 3 or 4")
    scale = max(float(np.abs(forms).max()), 1e-300)
    tol = det_tol * scale * scale
    cls, coef = pencil_class(forms, tol)
    scls, lo, hi = sweep_class(forms, n_angles, tol)
    return SaddleVerdict(tuple(np.asarray(x, float).tolist()), cls, coef, lo, hi, scls != cls)


@dataclass
class RegionVerdict:
    verdicts: list
    counts: dict = field(default_factory=dict)

    def all(self, cls):
        return all(v.cls == cls for v in self.verdicts)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "y", "class", "detA", "detB", "m"])
        for v in self.verdicts:
            c = list(v.pencil_coefficients) + [""] * (3 - len(v.pencil_coefficients))
            w.writerow([repr(v.point[0]), repr(v.point[1]), v.cls] + [repr(t) if t != "" else "" for t in c])
        return buf.getvalue()


def classify_region(surface, xs, ys, q_direction=(1.0, 0.0), **kw):
    """Classify every node of the grid ``xs x ys``.

    ``q_direction`` may be a fixed vector or a callable of the node.
    """
    verdicts = []
    for x in np.asarray(xs, float):
        for y in np.asarray(ys, float):
            p = np.array([x, y])
            qd = q_direction(p) if callable(q_direction) else q_direction
            verdicts.append(saddle_classify(surface, p, qd, **kw))
    return RegionVerdict(verdicts, dict(Counter(v.cls for v in verdicts)))


def grid_axes(surface, n=11, half_width=None, center=(0.0, 0.0)):
    """Convenience: an ``n x n`` grid inside the domain (or a centred box)."""
    if half_width is None:
        (x0, x1), (y0, y1) = surface.domain
    else:
        x0, x1 = center[0] - half_width, center[0] + half_width
        y0, y1 = center[1] - half_width, center[1] + half_width
    return np.linspace(x0, x1, n), np.linspace(y0, y1, n)
