import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize, minimize_scalar

from normsurf import convexgeom as cg, geodesics, norms
from normsurf.errors import ConfigurationError, DomainError

E2, E3 = norms.euclidean(2), norms.euclidean(3)
Q3 = norms.QuarticPerturbedNorm.diagonal(3, 0.1)
SQUARE = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], float)


# perimeters ----------------------------------------------------------------------


def test_unit_square_perimeter():
    assert cg.polygon_perimeter(SQUARE, E2) == pytest.approx(4.0, abs=1e-15)
    assert cg.polygon_perimeter(SQUARE[::-1], E2) == pytest.approx(4.0, abs=1e-15)


def test_unit_square_perimeter_between_norm_bounds():
    q = norms.QuarticPerturbedNorm.diagonal(2, 0.9)
    # norm equivalence constants of the quartic family, sampled on the Euclidean circle
    th = np.linspace(0, 2 * np.pi, 3600, endpoint=False)
    vals = q.value(np.column_stack([np.cos(th), np.sin(th)]))
    per = cg.polygon_perimeter(SQUARE, q)
    assert 4 * vals.min() - 1e-12 <= per <= 4 * vals.max() + 1e-12
    assert 4 <= per <= 8
    assert cg.polygon_perimeter(SQUARE[::-1], q) == pytest.approx(per, rel=1e-15)


def test_degenerate_polygon_rejected():
    with pytest.raises(ConfigurationError):
        cg.polygon_perimeter(SQUARE[:2], E2)


def test_square_in_doubled_square():
    v = cg.perimeter_monotonicity_check(SQUARE, 2 * SQUARE - 0.5, E2)
    assert v.holds and v.inner_length == pytest.approx(4) and v.outer_length == pytest.approx(8)
    assert np.all(np.diff(v.cut_lengths) <= 1e-12)
    assert v.cut_lengths[-1] == pytest.approx(4)


def test_containment_violation_rejected():
    with pytest.raises(DomainError):
        cg.perimeter_monotonicity_check(SQUARE + 0.5, SQUARE, E2)


@pytest.mark.parametrize("norm", [E2, norms.QuarticPerturbedNorm.diagonal(2, 0.3),
                                  norms.QuadraticNorm([[2.0, 0.5], [0.5, 1.0]])])
def test_random_nested_pairs(norm):
    rng = np.random.default_rng(0)
    for _ in range(100):
        inner, outer = cg.random_nested_pair(rng)
        v = cg.perimeter_monotonicity_check(inner, outer, norm)
        assert v.holds and v.max_increase <= 1e-10 * v.outer_length


def test_scaled_sandwich_perimeters():
    rng = np.random.default_rng(1)
    q = norms.QuarticPerturbedNorm.diagonal(2, 0.3)
    _, B = cg.random_nested_pair(rng)
    c = B.mean(axis=0)
    base = cg.polygon_perimeter(B, q)
    for eps in (0.1, 0.01, 0.001):
        inner = c + (1 - eps) * (B - c)
        outer = c + (1 + eps) * (B - c)
        extra = rng.dirichlet(np.ones(len(B)), 30) @ outer
        Bi = cg.convex_polygon(np.vstack([inner, extra]))
        li = cg.polygon_perimeter(Bi, q)
        assert (1 - eps) * base - 1e-12 <= li <= (1 + eps) * base + 1e-12


def test_strict_triangle_inequality(shipped_norms):
    for name in ("euclid2", "quad3", "quartic2", "quartic3", "quartic4", "radial2"):
        assert cg.strict_triangle_check(shipped_norms[name], n=1000) > 0


# cone shortcut ------------------------------------------------------------------


def _face_points(cone, rng, near_third_face=False):
    if near_third_face:
        # points close to the edges shared with face 2 favour the edge-cut branch
        return (cone.face_point(0, [1.0, rng.uniform(0.01, 0.1)]),
                cone.face_point(1, [1.0, rng.uniform(0.01, 0.1)]))
    return cone.face_point(0, rng.uniform(0.2, 1.0, 2)), cone.face_point(1, rng.uniform(0.2, 1.0, 2))


@pytest.mark.parametrize("norm", [E3, Q3])
def test_random_cone_shortcuts(norm):
    rng = np.random.default_rng(2)
    branches = set()
    for k in range(20):
        cone = cg.TrihedralCone.random(rng)
        p, q = _face_points(cone, rng, near_third_face=k % 2 == 1)
        r = cg.cone_shortcut(norm, cone, p, q)
        branches.add(r.branch)
        assert r.margin > 1e-12
        assert r.planarity < 1e-10
        assert all(cone.contains(x, 1e-10) for x in r.path)
        assert r.limit_rhs > 0
        assert abs(r.fd_limit - r.limit_rhs) <= 1e-4 * max(1.0, r.limit_rhs)
        v = np.cross(cone.N[0], cone.N[1])
        d2 = cg.f_second_differences(norm, p, q, v / np.linalg.norm(v), 0.5)
        assert np.all(d2 > 0)
    assert branches == {"apex_pushed", "edge_cut"}


def test_coincident_endpoints_give_trivial_path():
    cone = cg.TrihedralCone.random(np.random.default_rng(3))
    p = cone.face_point(0, [0.5, 0.5])
    r = cg.cone_shortcut(E3, cone, p, p.copy())
    assert r.branch == "coincident" and r.length == 0.0 and len(r.path) == 2


def test_endpoints_off_faces_rejected():
    cone = cg.TrihedralCone.random(np.random.default_rng(4))
    with pytest.raises(ConfigurationError):
        cg.cone_shortcut(E3, cone, [1.0, 2.0, 3.0], cone.face_point(1, [0.5, 0.5]))


def _circular_trihedron(half_angle):
    """Three planes tangent to the circular cone of the given half angle around -z."""
    a = 2 * np.pi * np.arange(3) / 3
    s, c = np.sin(half_angle), np.cos(half_angle)
    # outward normals of a cone opening downwards
    return cg.TrihedralCone(np.column_stack([c * np.cos(a), c * np.sin(a), np.full(3, s)]))


def _intrinsic_distance(cone, p, q):
    """Brute-force shortest path on the boundary from face 0 to face 1 (Euclidean)."""
    E = cone.edges
    e01, e02, e12 = E[:, 2], E[:, 1], E[:, 0]
    via01 = minimize_scalar(lambda s: np.linalg.norm(p - s * e01) + np.linalg.norm(q - s * e01),
                            bounds=(0, 10), method="bounded", options={"xatol": 1e-12}).fun
    best = np.inf
    for s0 in ([0.5, 0.5], [2.0, 2.0], [0.1, 3.0]):
        res = minimize(lambda s: np.linalg.norm(p - abs(s[0]) * e02) + np.linalg.norm(abs(s[0]) * e02 - abs(s[1]) * e12)
                       + np.linalg.norm(abs(s[1]) * e12 - q), s0, method="Nelder-Mead",
                       options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 4000})
        best = min(best, res.fun)
    return min(via01, best)


def test_circular_cone_shortcut_against_brute_force():
    cone = _circular_trihedron(0.6)
    p = cone.face_point(0, [0.3, 1.0])
    q = cone.face_point(1, [1.0, 0.3])  # mirror image of p
    assert np.linalg.norm(p) == pytest.approx(np.linalg.norm(q))
    r = cg.cone_shortcut(E3, cone, p, q)
    d = _intrinsic_distance(cone, p, q)
    f0 = np.linalg.norm(p) + np.linalg.norm(q)
    assert r.margin > 0 and d < f0
    assert r.length >= d - 1e-9


@settings(max_examples=30)
@given(st.integers(0, 10**6))
def test_property_shortcut_is_planar_and_shorter(seed):
    rng = np.random.default_rng(seed)
    cone = cg.TrihedralCone.random(rng)
    p, q = _face_points(cone, rng, near_third_face=seed % 2 == 1)
    r = cg.cone_shortcut(Q3, cone, p, q)
    assert r.planarity < 1e-10 and r.length < Q3.value(p) + Q3.value(q)


def test_dependent_normals_rejected():
    with pytest.raises(ConfigurationError):
        cg.TrihedralCone([[1, 0, 0], [0, 1, 0], [1, 1, 0]])


# refutation of geodesic lines ----------------------------------------------------


@pytest.fixture(scope="module")
def capped_refutation():
    body = cg.body_from_dict({"type": "capped_cone", "slope": 1.0, "cap": 1.0})
    return body, cg.geodesic_line_refute(Q3, body, [0.0, 0.5], [1.0, 0.0])


def test_capped_cone_geodesic_is_refuted(capped_refutation):
    body, rep = capped_refutation
    assert rep.status == "refuted" and rep.refuting_lambda <= 256
    last = rep.steps[-1]
    assert last.refuted and last.competitor_length + 2 * last.length_error < 2
    assert last.surface_residual < 1e-8


def test_competitor_lies_on_the_surface(capped_refutation):
    body, rep = capped_refutation
    P = rep.competitor
    assert np.abs(body.psi(P)).max() < 1e-8 * rep.refuting_lambda
    assert rep.competitor_csv().splitlines()[0] == "x,y,z"


def test_competitor_intrinsic_length_is_shorter(capped_refutation):
    body, rep = capped_refutation
    lam = rep.refuting_lambda
    surf = body.surface(Q3, 2 * lam + 10)
    L = geodesics.length(surf, rep.competitor[:, :2], rtol=1e-8)
    assert L < 2 * lam


def test_cylinder_is_inconclusive():
    rep = cg.geodesic_line_refute(E3, cg.body_from_dict({"type": "cylinder"}), [0.0, 0.0], [0.0, 1.0])
    assert rep.status == "inconclusive" and "straight line" in rep.reason


def test_paraboloid_without_cone_interior_is_inconclusive():
    rep = cg.geodesic_line_refute(E3, cg.body_from_dict({"type": "paraboloid"}), [0.0, 0.5], [1.0, 0.0])
    assert rep.status == "inconclusive" and "empty interior" in rep.reason


def test_unknown_body_rejected():
    with pytest.raises(ConfigurationError):
        cg.body_from_dict({"type": "torus"})
