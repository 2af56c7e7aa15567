import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from normsurf import charts, geodesics, norms, surfaces
from normsurf.errors import DomainError

E3 = norms.euclidean(3)
TAU = 2 * np.pi


def sphere(R=1.0):
    return surfaces.ImmersedSurface(E3, charts.sphere(R), [[-10, 10], [-1.5, 1.5]])


def plane():
    return surfaces.ImmersedSurface(E3, charts.plane(), [[-5, 5], [-5, 5]])


def great_circle_error(a, T, dt):
    s = sphere()
    p = geodesics.shoot(s, [0, 0], [np.cos(a), np.sin(a)], T, dt)
    u = np.array([0, np.cos(a), np.sin(a)])
    exact = np.outer(np.cos(p.t), [1, 0, 0]) + np.outer(np.sin(p.t), u)
    return np.abs(s.jets(p.c)[0] - exact).max(), p


def test_great_circle():
    err, p = great_circle_error(0.6, np.pi, 1e-3)
    assert err < 1e-6 and not p.truncated
    assert p.length == pytest.approx(np.pi)


def test_rk4_order():
    e1, _ = great_circle_error(0.6, 2.0, 0.04)
    e2, _ = great_circle_error(0.6, 2.0, 0.02)
    assert e1 / e2 >= 8


def test_speed_drift_and_tangency():
    amb = norms.QuarticPerturbedNorm.diagonal(4, 0.1)
    s = surfaces.ImmersedSurface(amb, charts.fsigma(0.05), [[-1, 1], [-1, 1]])
    v = geodesics.unit_direction(s, [-0.1, 0.0], [1.0, 0.3])
    p = geodesics.shoot(s, [-0.1, 0.0], v, 0.2, 1e-3)
    speed, tang = p.residuals()
    assert speed.max() < 1e-7
    assert tang[2:-2].max() < 1e-5


def test_reversibility():
    s = sphere()
    p = geodesics.shoot(s, [0.1, 0.2], geodesics.unit_direction(s, [0.1, 0.2], [1, 1]), 1.5, 1e-3)
    back = geodesics.shoot(s, p.end, -p.cd[-1], 1.5, 1e-3)
    assert np.abs(back.end - p.start).max() < 1e-9
    r = p.reversed()
    assert np.allclose(r.c, p.c[::-1]) and np.allclose(r.t, p.t)


def test_plane_geodesic_is_straight():
    p = geodesics.shoot(plane(), [0.5, -1], [0.6, 0.8], 2.0, 0.01)
    assert np.abs(p.end - [1.7, 0.6]).max() < 1e-14


def test_leaving_domain_truncates():
    p = geodesics.shoot(plane(), [4.9, 0], [1, 0], 1.0, 0.01)
    assert p.truncated and p.end[0] <= 5


def test_nonpositive_length_rejected():
    with pytest.raises(DomainError):
        geodesics.shoot(plane(), [0, 0], [1, 0], 0.0)


def test_csv_columns():
    text = geodesics.shoot(plane(), [0, 0], [1, 0], 0.1, 0.05).to_csv()
    assert text.splitlines()[0] == "t,x,y,xdot,ydot,speed_residual,tangency_residual"


def test_connect_detects_two_sphere_geodesics():
    s = sphere()
    x1 = [np.pi - 0.2, 0.05]
    res = geodesics.connect(s, [0, 0], x1, max_restarts=8, period=TAU)
    assert res.multiple
    Ls = sorted(L for _, L in res.solutions)
    d = np.arccos(np.cos(x1[0]) * np.cos(x1[1]))
    assert Ls[0] == pytest.approx(d, abs=1e-6)
    assert any(abs(L - (TAU - d)) < 1e-6 for L in Ls)


def test_connect_nearby_pair_is_unique():
    amb = norms.QuarticPerturbedNorm.diagonal(4, 0.1)
    s = surfaces.ImmersedSurface(amb, charts.fsigma(0.01), [[-1, 1], [-1, 1]])
    res = geodesics.connect(s, [0, 0], [0.02, 0.01], max_restarts=20, T_max=0.1)
    assert not res.multiple
    assert np.abs(res.path.end - [0.02, 0.01]).max() < 1e-8


def test_connect_beyond_half_period_finds_shorter_arc():
    s = sphere()
    shot = geodesics.shoot(s, [0, 0], [1, 0], 4.0, 1e-3)
    res = geodesics.connect(s, [0, 0], shot.end, period=TAU, max_restarts=2)
    assert res.length == pytest.approx(TAU - 4.0, abs=1e-6) and res.length < shot.length


def test_length_examples():
    s = sphere()
    assert geodesics.length(s, [[0, 0], [np.pi / 2, 0]]) == pytest.approx(np.pi / 2, rel=1e-12)
    lat = [[0, 0.5], [np.pi / 2, 0.5]]
    assert geodesics.length(s, lat) == pytest.approx(np.cos(0.5) * np.pi / 2, rel=1e-10)
    assert geodesics.length(s, lat[::-1]) == pytest.approx(geodesics.length(s, lat), rel=1e-14)
    assert geodesics.length(s, [[0, 0]]) == 0.0


@settings(max_examples=10)
@given(st.floats(-0.5, 0.5), st.floats(0.3, 1.5))
def test_property_shot_geodesic_length_matches_arclength(y0, T):
    s = sphere()
    p = geodesics.shoot(s, [0.0, y0], geodesics.unit_direction(s, [0.0, y0], [1.0, 0.5]), T, 0.02)
    assert geodesics.length(s, p.c, rtol=1e-7) == pytest.approx(T, rel=1e-4)


def test_competitor_cannot_beat_plane_segment():
    p = geodesics.shoot(plane(), [0, 0], [1, 0], 1.0, 0.01)
    cr = geodesics.competitor_search(plane(), p, 0.1, n_nodes=9, n_starts=4)
    assert abs(cr.gap) < 1e-9


def test_competitor_beats_long_paraboloid_geodesic():
    s = surfaces.ImmersedSurface(E3, charts.quadratic_graph(1.0, 0.0, 1.0), [[-4, 4], [-4, 4]])
    p = geodesics.shoot(s, [-1.5, 0], geodesics.unit_direction(s, [-1.5, 0], [1, 0]), 5.6, 5e-3)
    cr = geodesics.competitor_search(s, p, 0.4 * 5.6, n_nodes=33, n_starts=2)
    assert cr.gap > 0.1
