import numpy as np
import pytest

from normsurf import calibrator, charts, geodesics, norms, surfaces
from normsurf.errors import DomainError, OutOfTubeError

E3 = norms.euclidean(3)


@pytest.fixture(scope="module")
def plane_field():
    s = surfaces.ImmersedSurface(E3, charts.plane(), [[-5, 5], [-5, 5]])
    return calibrator.calibrator_for(s, [0.0, 0.0], [0.6, 0.8], 1.0, dt=1e-2)


@pytest.fixture(scope="module")
def fsigma_field():
    amb = norms.QuarticPerturbedNorm.diagonal(4, 0.1)
    s = surfaces.ImmersedSurface(amb, charts.fsigma(0.05), [[-1, 1], [-1, 1]])
    x0 = np.array([-0.05, 0.0])
    return calibrator.calibrator_for(s, x0, geodesics.unit_direction(s, x0, [1, 0.2]), 0.1, dt=1e-4)


@pytest.fixture(scope="module")
def fsigma_rho(fsigma_field):
    return fsigma_field.verify_rho(0.005, n_t=20)


def test_plane_h_is_foot_of_perpendicular(plane_field):
    X = np.random.default_rng(0).uniform(-0.2, 0.2, (20, 2)) + [0.3, 0.4]
    assert np.allclose(plane_field.h(X), X @ [0.6, 0.8], atol=1e-12)


def test_plane_dh_is_constant(plane_field):
    X = np.random.default_rng(1).uniform(-0.1, 0.1, (10, 2)) + [0.3, 0.4]
    assert np.allclose(plane_field.dh(X), [0.6, 0.8], atol=1e-12)


def test_plane_special_coordinates_are_orthogonal(plane_field):
    co = plane_field.special_coordinates(0.05, n_t=5, n_s=5)
    exact = co.t[:, None, None] * [0.6, 0.8] + co.s[None, :, None] * np.array([-0.8, 0.6])
    # level direction orientation is a convention; accept either sign of n
    flipped = co.t[:, None, None] * [0.6, 0.8] - co.s[None, :, None] * np.array([-0.8, 0.6])
    assert min(np.abs(co.r - exact).max(), np.abs(co.r - flipped).max()) < 1e-10
    assert np.allclose(co.rho, 1.0, atol=1e-12)


def test_plane_rho_report_and_calibration(plane_field):
    rep = plane_field.verify_rho(0.05, n_t=5)
    assert rep.rho_s_max < 1e-9 and abs(rep.rho_ss_min) < 1e-6
    cal = plane_field.calibrate_correct(plane_field.special_coordinates(0.05, n_t=5, n_s=5))
    assert cal.certified and cal.sigma_witness == pytest.approx(1e-4)


def test_h_on_the_curve(fsigma_field):
    x = fsigma_field.path.state_at(0.03)[0]
    assert fsigma_field.h(x) == pytest.approx(0.03, abs=1e-9)
    ts = fsigma_field.path.t[::50]
    assert np.abs(fsigma_field.h(fsigma_field.path.c[::50]) - ts).max() < 1e-9


def test_level_direction_displacement(fsigma_field):
    x = fsigma_field.path.state_at(0.05)[0]
    y = x + 1e-3 * fsigma_field.level_direction(x)[0]
    assert abs(fsigma_field.h(y) - 0.05) < 1e-6


def test_dual_norm_of_dh_is_one_on_curve(fsigma_field):
    X = fsigma_field.path.c[(fsigma_field.path.t >= 0) & (fsigma_field.path.t <= 0.1)][::40]
    assert np.abs(fsigma_field.phi_star_dh(X) - 1).max() < 1e-7


def test_dh_matches_finite_differences(fsigma_field):
    rng = np.random.default_rng(2)
    base = fsigma_field.path.c[rng.integers(300, 1100, 100)]
    X = base + rng.uniform(-0.003, 0.003, base.shape)
    h = 1e-6
    fd = np.column_stack([(fsigma_field.h(X + h * e) - fsigma_field.h(X - h * e)) / (2 * h) for e in np.eye(2)])
    assert np.abs(fd - fsigma_field.dh(X)).max() < 1e-6


def test_out_of_tube_query_rejected(fsigma_field):
    with pytest.raises(OutOfTubeError):
        fsigma_field.h([0.5, 0.0])


def test_self_intersecting_path_rejected():
    s = surfaces.ImmersedSurface(E3, charts.sphere(1.0), [[-10, 10], [-1.5, 1.5]])
    p = geodesics.shoot(s, [0, 0], [1, 0], 7.0, 0.05)
    with pytest.raises(DomainError):
        calibrator.CalibratorField(s, geodesics.GeodesicPath(s, p.t, np.mod(p.c, [2 * np.pi, 9]), p.cd, p.step))


def test_fsigma_rho_report(fsigma_rho):
    assert fsigma_rho.passed(1e-4)
    assert np.abs(fsigma_rho.rho_at_zero - 1).max() < 1e-7
    assert fsigma_rho.h_residual < 1e-7


def test_fsigma_rho_identity_three_ways(fsigma_rho):
    half = fsigma_rho.rho_ss / 2
    assert np.allclose(fsigma_rho.identity_form, half, rtol=1e-3)
    assert np.allclose(fsigma_rho.identity_route, half, rtol=1e-3)


def test_legendre_covector_orthogonality_and_k_tangency(fsigma_rho):
    assert len(fsigma_rho.t) == 20
    assert np.abs(fsigma_rho.L_dot_vs).max() < 1e-6
    assert fsigma_rho.K_tangency.max() < 1e-5


def test_fsigma_calibration_and_inequality(fsigma_field):
    co = fsigma_field.special_coordinates(0.005, n_t=21, n_s=21)
    assert co.h_residual < 1e-7
    cal = fsigma_field.calibrate_correct(co)
    assert cal.certified and cal.phi_star_dh_on_curve < 1e-7
    assert 1e-4 <= cal.sigma_witness <= 1
    lengths = fsigma_field.calibration_inequality(co, n_curves=200)
    assert lengths.min() >= fsigma_field.length - 1e-6


def test_paraboloid_rho_is_concave():
    s = surfaces.ImmersedSurface(E3, charts.quadratic_graph(1.0, 0.0, 1.0), [[-4, 4], [-4, 4]])
    x0 = np.array([-1.5, 0.0])
    f = calibrator.calibrator_for(s, x0, geodesics.unit_direction(s, x0, [1, 0]), 0.1, dt=1e-4)
    rep = f.verify_rho(0.005, n_t=10)
    assert rep.rho_ss_min < -1e-4
    assert rep.rho_s_max < 1e-4
