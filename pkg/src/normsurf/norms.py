"""Minkowski norms with exact first and second derivatives.

Every norm stores its energy ``e(v) = Phi(v)**2 / 2``.  The Legendre
transform is the gradient of ``e`` and the half Hessian is its Hessian, so
each family only has to provide the batched jets of ``e``.  All public
methods accept a single vector of shape ``(n,)`` or a stack ``(m, n)``.

Families
--------
quadratic
    ``Phi^2 = v^T A v``.
quartic_perturbed
    ``Phi^2 = v^T A v + lam * P(v) / (v^T A v)`` with ``P`` a homogeneous
    quartic given as monomials.
radial_sampled
    Planar norm whose gauge ``g(theta) = Phi(cos theta, sin theta)`` is a
    trigonometric fit of a table of ``(direction, radius)`` pairs.
pullback
    ``v -> base(M v)`` for an injective matrix ``M``; used for induced
    metrics and linear coordinate changes.
"""
from __future__ import annotations

import numpy as np

from . import kernels
from .errors import ConfigurationError, ConvergenceError, DomainError

__all__ = [
    "MinkowskiNorm",
    "QuadraticNorm",
    "QuarticPerturbedNorm",
    "RadialSampledNorm",
    "PullbackNorm",
    "norm_eval",
    "legendre",
    "half_hessian",
    "dual_eval",
    "legendre_inverse",
    "hessian_sweep",
    "sweep_directions",
    "max_valid_lambda",
    "norm_from_dict",
]


def _as_batch(v):
    v = np.asarray(v, dtype=float)
    return v.reshape(1, -1) if v.ndim == 1 else v, v.ndim == 1


def sweep_directions(dim, n=None, seed=0):
    """Deterministic unit directions: an angle grid in 2D, Gaussian samples otherwise."""
    if dim == 2:
        n = 360 if n is None else n
        t = 2.0 * np.pi * np.arange(n) / n
        return np.column_stack([np.cos(t), np.sin(t)])
    n = 2000 if n is None else n
    d = np.random.default_rng(seed).standard_normal((n, dim))
    d = np.vstack([np.eye(dim), d])
    return d / np.linalg.norm(d, axis=1, keepdims=True)


class MinkowskiNorm:
    """Base class.  Subclasses implement ``_jets(V) -> (e, grad, hess)``."""

    family = "abstract"
    dim: int

    # subclasses override
    def _jets(self, V):
        raise NotImplementedError

    def _energy(self, V):
        return self._jets(V)[0]

    def value(self, v):
        V, single = _as_batch(v)
        out = np.zeros(V.shape[0])
        nz = np.any(V != 0.0, axis=1)
        if np.any(nz):
            # 1-homogeneity: Phi^2 of tiny or huge rows would under/overflow
            W = V[nz]
            sc = np.abs(W).max(axis=1)
            out[nz] = sc * np.sqrt(np.maximum(2.0 * self._energy(W / sc[:, None]), 0.0))
        return float(out[0]) if single else out

    __call__ = value

    def _nonzero(self, V):
        if np.any(np.all(V == 0.0, axis=1)):
            raise DomainError("derivatives of the norm are undefined at the zero vector")

    def _scaled_jets(self, V):
        """Jets of nonzero rows evaluated at unit max-abs; energy, gradient and Hessian are 2-, 1- and 0-homogeneous."""
        self._nonzero(V)
        sc = np.abs(V).max(axis=1)
        e, g, h = self._jets(V / sc[:, None])
        with np.errstate(over="ignore", under="ignore"):  # Phi^2 itself may leave the float range
            e = e * sc**2
        return e, g * sc[:, None], h

    def legendre(self, v):
        """Half the differential of Phi^2."""
        V, single = _as_batch(v)
        g = self._scaled_jets(V)[1]
        return g[0] if single else g

    def half_hessian(self, v):
        V, single = _as_batch(v)
        h = self._scaled_jets(V)[2]
        return h[0] if single else h

    def jets(self, v):
        """(Phi^2/2, Legendre transform, half Hessian) in one call."""
        V, single = _as_batch(v)
        e, g, h = self._scaled_jets(V)
        return (e[0], g[0], h[0]) if single else (e, g, h)

    def unit(self, v):
        """Rescale to norm one."""
        V, single = _as_batch(v)
        out = V / self.value(V)[:, None]
        return out[0] if single else out

    # dual side ---------------------------------------------------------------

    def legendre_inverse(self, L, tol=1e-10, max_iter=100):
        """Vector v with legendre(v) = L, by damped Newton on e(v) - <L, v>.

        The objective is convex with positive definite Hessian, so a
        backtracking Newton iteration converges globally.
        """
        L = np.asarray(L, dtype=float)
        if L.ndim == 2:
            return np.array([self.legendre_inverse(row, tol, max_iter) for row in L])
        if not np.any(L):
            raise DomainError("inverse Legendre transform is undefined at the zero covector")
        # the inverse is 1-homogeneous; solve at unit scale
        s_L = float(np.abs(L).max())
        if not np.isfinite(s_L):
            raise DomainError("inverse Legendre transform needs a finite covector")
        if s_L != 1.0:
            return s_L * self.legendre_inverse(L / s_L, tol, max_iter)
        scale = 1.0
        v = np.linalg.solve(self.half_hessian(L), L)
        e, g, _ = self._jets(v[None])
        v = v * (L @ v) / (2.0 * e[0])
        res = np.inf
        for _ in range(max_iter):
            e, g, H = self._jets(v[None])
            r = g[0] - L
            res = float(np.abs(r).max())
            if res <= 1e-15 * scale:
                break
            step = np.linalg.solve(H[0], r)
            f0 = e[0] - L @ v
            t = 1.0
            w = v - step
            # near the solution energy decrements drown in roundoff; the residual does not
            if np.any(w) and np.abs(self._jets(w[None])[1][0] - L).max() < 0.5 * res:
                v = w
                continue
            while t > 1e-12:
                w = v - t * step
                if np.any(w) and self._energy(w[None])[0] - L @ w <= f0 + 1e-16 * scale:
                    break
                t *= 0.5
            v_new = v - t * step
            if np.array_equal(v_new, v):
                break
            v = v_new
        e, g, _ = self._jets(v[None])
        res = float(np.abs(g[0] - L).max())
        if res > tol * scale:
            raise ConvergenceError("inverse Legendre Newton iteration stalled", res)
        return v

    def dual_value(self, L, **kw):
        """Dual norm sup{<L, v> : Phi(v) = 1}, attained at legendre_inverse(L)."""
        L = np.asarray(L, dtype=float)
        if L.ndim == 2:
            return np.array([self.dual_value(row, **kw) for row in L])
        if not np.any(L):
            return 0.0
        return self.value(self.legendre_inverse(L, **kw))

    def gradient_direction(self, L):
        """Unit vector at which <L, .> is maximal on the unit sphere."""
        return self.unit(self.legendre_inverse(L))

    # serialisation ----------------------------------------------------------

    def to_dict(self):
        return {"family": self.family, "dim": self.dim, "params": self._params()}

    def _params(self):
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}(dim={self.dim})"


class QuadraticNorm(MinkowskiNorm):
    family = "quadratic"

    def __init__(self, A):
        A = np.array(A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 2:
            raise ConfigurationError(f"A must be a square matrix of size >= 2, got {A.shape}")
        A = 0.5 * (A + A.T)
        lo = np.linalg.eigvalsh(A)[0]
        if not lo > 0:
            raise ConfigurationError(f"A is not positive definite (smallest eigenvalue {lo:.3e})")
        self.A = A
        self.dim = A.shape[0]

    def _jets(self, V):
        e = 0.5 * kernels.quadform(self.A, V)
        g = V @ self.A
        h = np.broadcast_to(self.A, (V.shape[0], self.dim, self.dim)).copy()
        return e, g, h

    def dual_closed_form(self, L):
        """sqrt(L A^-1 L); kept as an independent check of dual_value."""
        L = np.atleast_2d(L)
        return np.sqrt(np.einsum("ki,ki->k", L, np.linalg.solve(self.A, L.T).T))

    def _params(self):
        return {"A": self.A.tolist()}


def euclidean(dim):
    return QuadraticNorm(np.eye(dim))


class QuarticPerturbedNorm(MinkowskiNorm):
    """``Phi^2 = q + lam * P / q`` with ``q = v^T A v``.

    ``P`` is given by ``exponents`` (k, n) and ``coefs`` (k,), every row of
    exponents summing to four.  Construction fails if the half Hessian is
    not positive definite on the direction sweep.
    """

    family = "quartic_perturbed"

    def __init__(self, A, exponents, coefs, lam, check=True):
        A = np.array(A, dtype=float)
        self.A = 0.5 * (A + A.T)
        self.dim = self.A.shape[0]
        self.exponents = np.atleast_2d(np.asarray(exponents, dtype=np.int64))
        self.coefs = np.asarray(coefs, dtype=float).reshape(-1)
        self.lam = float(lam)
        if self.exponents.shape != (self.coefs.size, self.dim):
            raise ConfigurationError("exponents must have shape (len(coefs), dim)")
        if np.any(self.exponents.sum(axis=1) != 4) or np.any(self.exponents < 0):
            raise ConfigurationError("every monomial of P must have degree four")
        if self.lam < 0:
            raise ConfigurationError("lam must be non-negative")
        if np.linalg.eigvalsh(self.A)[0] <= 0:
            raise ConfigurationError("A is not positive definite")
        if check:
            lo, worst = hessian_sweep(self)
            if not lo > 0:
                raise ConfigurationError(
                    f"quartic perturbation lam={self.lam} breaks quadratic convexity: "
                    f"smallest half-Hessian eigenvalue {lo:.3e} at direction {np.round(worst, 6).tolist()}"
                )
            self.min_eigenvalue = lo

    @classmethod
    def diagonal(cls, dim, lam, weights=None, A=None, **kw):
        """P(v) = sum_i w_i v_i^4."""
        w = np.ones(dim) if weights is None else np.asarray(weights, float)
        return cls(np.eye(dim) if A is None else A, 4 * np.eye(dim, dtype=np.int64), w, lam, **kw)

    def _jets(self, V):
        A = self.A
        if self.lam == 0.0:
            h = np.broadcast_to(A, (V.shape[0], self.dim, self.dim)).copy()
            return 0.5 * kernels.quadform(A, V), V @ A, h
        # homogeneity: evaluate on rows rescaled to unit max-abs so q and P cannot underflow
        sc = np.abs(V).max(axis=1)
        sc = np.where(sc > 0, sc, 1.0)
        V = V / sc[:, None]
        q = kernels.quadform(A, V)
        Av = V @ A
        P, dP, d2P = kernels.monomial_jets(self.exponents, self.coefs, V)
        lam = self.lam
        qi = 1.0 / q
        e = 0.5 * (q + lam * P * qi)
        g = Av + 0.5 * lam * (dP * qi[:, None] - 2.0 * (P * qi**2)[:, None] * Av)
        outer_pa = np.einsum("ki,kj->kij", dP, Av)
        h = A[None] + 0.5 * lam * (
            d2P * qi[:, None, None]
            - 2.0 * (outer_pa + outer_pa.transpose(0, 2, 1)) * (qi**2)[:, None, None]
            - 2.0 * (P * qi**2)[:, None, None] * A[None]
            + 8.0 * (P * qi**3)[:, None, None] * np.einsum("ki,kj->kij", Av, Av)
        )
        return e * sc**2, g * sc[:, None], h

    def _params(self):
        return {
            "A": self.A.tolist(),
            "exponents": self.exponents.tolist(),
            "coefs": self.coefs.tolist(),
            "lam": self.lam,
        }


class RadialSampledNorm(MinkowskiNorm):
    """Planar norm interpolated from a radial table.

    The gauge ``g(theta) = 1 / r(theta)`` is fitted by an even trigonometric
    series (central symmetry kills odd harmonics).  The number of harmonics
    grows until the error on held-out rays is below ``tol``.
    """

    family = "radial_sampled"

    def __init__(self, directions, radii, tol=1e-6, max_harmonic=None, check=True):
        D = np.asarray(directions, dtype=float)
        r = np.asarray(radii, dtype=float)
        if D.ndim != 2 or D.shape[1] != 2:
            raise ConfigurationError("radial_sampled norms are planar: directions must be (m, 2)")
        if np.any(r <= 0):
            raise ConfigurationError("radii must be positive")
        theta = np.arctan2(D[:, 1], D[:, 0])
        gauge = np.linalg.norm(D, axis=1) / r
        self.dim = 2
        self.table = (D / np.linalg.norm(D, axis=1, keepdims=True), r)
        self.tol = tol
        held = np.zeros(theta.size, bool)
        held[::5] = True
        kmax = max_harmonic or max(2, theta.size // 3)
        for K in range(2, kmax + 1, 2):
            a, b = self._fit(theta[~held], gauge[~held], K)
            err = np.abs(kernels.fourier_series(a, b, theta[held])[0] - gauge[held]).max()
            if err < tol:
                break
        self.a, self.b = self._fit(theta, gauge, K)
        self.heldout_error = float(err)
        if err >= tol:
            raise ConfigurationError(
                f"radial table could not be interpolated to {tol:g} (held-out error {err:.2e})"
            )
        if check:
            lo, worst = hessian_sweep(self, n=720)
            if not lo > 0:
                raise ConfigurationError(
                    f"interpolated radial table is not quadratically convex near {np.round(worst, 6).tolist()}"
                )

    @staticmethod
    def _fit(theta, gauge, K):
        ks = np.arange(0, K + 1, 2)
        M = np.column_stack([np.cos(np.outer(theta, ks)), np.sin(np.outer(theta, ks[1:]))])
        coef = np.linalg.lstsq(M, gauge, rcond=None)[0]
        a = np.zeros(K + 1)
        b = np.zeros(K + 1)
        a[ks] = coef[: ks.size]
        b[ks[1:]] = coef[ks.size:]
        return a, b

    @classmethod
    def from_norm(cls, norm, n=720, **kw):
        t = 2.0 * np.pi * np.arange(n) / n
        D = np.column_stack([np.cos(t), np.sin(t)])
        return cls(D, 1.0 / norm.value(D), **kw)

    def _jets(self, V):
        rho2 = np.einsum("ki,ki->k", V, V)
        rho = np.sqrt(rho2)
        theta = np.arctan2(V[:, 1], V[:, 0])
        g, g1, g2 = kernels.fourier_series(self.a, self.b, theta)
        G = g * g
        G1 = 2.0 * g * g1
        G2 = 2.0 * (g1 * g1 + g * g2)
        c, s = np.cos(theta), np.sin(theta)
        er = np.column_stack([c, s])
        et = np.column_stack([-s, c])
        e = 0.5 * rho2 * G
        grad = (rho * G)[:, None] * er + (0.5 * rho * G1)[:, None] * et
        rr = np.einsum("ki,kj->kij", er, er)
        tt = np.einsum("ki,kj->kij", et, et)
        rt = np.einsum("ki,kj->kij", er, et)
        h = G[:, None, None] * rr + (0.5 * G1)[:, None, None] * (rt + rt.transpose(0, 2, 1)) \
            + (G + 0.5 * G2)[:, None, None] * tt
        return e, grad, h

    def _params(self):
        D, r = self.table
        return {"table": [[d.tolist(), float(x)] for d, x in zip(D, r)], "tol": self.tol}


class PullbackNorm(MinkowskiNorm):
    """``v -> base(M v)`` for an injective ``M`` of shape (N, n)."""

    family = "pullback"

    def __init__(self, base, M, immersion_tol=1e-8):
        M = np.asarray(M, dtype=float)
        if M.shape[0] != base.dim:
            raise ConfigurationError("M must map into the base norm's space")
        sv = np.linalg.svd(M, compute_uv=False)
        if sv[-1] <= immersion_tol:
            raise ConfigurationError(f"pullback matrix is rank deficient (sigma_min={sv[-1]:.2e})")
        self.base = base
        self.M = M
        self.dim = M.shape[1]

    def _jets(self, V):
        e, g, h = self.base._jets(V @ self.M.T)
        return e, g @ self.M, np.einsum("ai,kab,bj->kij", self.M, h, self.M)

    def _params(self):
        return {"base": self.base.to_dict(), "M": self.M.tolist()}


# --- functional surface -----------------------------------------------------


def norm_eval(norm, v):
    return norm.value(v)


def legendre(norm, v):
    return norm.legendre(v)


def half_hessian(norm, v):
    return norm.half_hessian(v)


def dual_eval(norm, L, **kw):
    return norm.dual_value(L, **kw)


def legendre_inverse(norm, L, **kw):
    return norm.legendre_inverse(L, **kw)


def hessian_sweep(norm, n=None, directions=None):
    """Smallest half-Hessian eigenvalue over a direction sweep and where it occurs."""
    D = sweep_directions(norm.dim, n) if directions is None else np.asarray(directions, float)
    ev = np.linalg.eigvalsh(norm._jets(D)[2])[:, 0]
    k = int(np.argmin(ev))
    return float(ev[k]), D[k]


def max_valid_lambda(A, exponents, coefs, hi=10.0, iters=40):
    """Largest lam (to bisection accuracy) keeping the quartic family quadratically convex."""
    def ok(lam):
        norm = QuarticPerturbedNorm(A, exponents, coefs, lam, check=False)
        return hessian_sweep(norm)[0] > 0

    lo = 0.0
    if ok(hi):
        return hi
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if ok(mid) else (lo, mid)
    return lo


# constructors for families defined outside this module, keyed by family name
FAMILIES = {}


def norm_from_dict(doc):
    """Inverse of ``MinkowskiNorm.to_dict``."""
    try:
        family = doc["family"]
        params = doc.get("params", {})
        dim = doc.get("dim")
    except (TypeError, KeyError) as exc:
        raise ConfigurationError(f"malformed norm description: {exc}") from None
    if family == "quadratic":
        norm = QuadraticNorm(params["A"])
    elif family == "quartic_perturbed":
        if "exponents" in params:
            norm = QuarticPerturbedNorm(params["A"], params["exponents"], params["coefs"], params["lam"])
        else:
            d = len(params["A"])
            norm = QuarticPerturbedNorm.diagonal(d, params["lam"], params.get("weights"), A=params["A"])
    elif family == "radial_sampled":
        table = params["table"]
        D = np.array([row[0] for row in table], float)
        r = np.array([row[1] for row in table], float)
        norm = RadialSampledNorm(D, r, tol=params.get("tol", 1e-6))
    elif family == "pullback":
        norm = PullbackNorm(norm_from_dict(params["base"]), params["M"])
    elif family in FAMILIES:
        norm = FAMILIES[family](params)
    else:
        raise ConfigurationError(f"unknown norm family {family!r}")
    if dim is not None and norm.dim != dim:
        raise ConfigurationError(f"declared dim {dim} does not match parameters ({norm.dim})")
    return norm
