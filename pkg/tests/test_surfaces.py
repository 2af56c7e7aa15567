import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from normsurf import charts, norms, surfaces
from normsurf.errors import ImmersionError
from normsurf.surfaces import NOT_SADDLE, SADDLE, STRICT

E3, E4 = norms.euclidean(3), norms.euclidean(4)
BOX = [[-2, 2], [-2, 2]]


def surf(jets, ambient=E3, domain=BOX):
    return surfaces.ImmersedSurface(ambient, jets, domain)


def test_plane_induces_euclidean_metric():
    s = surf(charts.plane())
    phi = s.induced_metric([0.3, -0.2])
    V = np.random.default_rng(0).standard_normal((10, 2))
    assert np.allclose(phi.value(V), np.linalg.norm(V, axis=1), atol=1e-15)


def test_linear_stretch():
    s = surf(charts.affine([0, 0, 0], [2, 0, 0], [0, 1, 0]))
    assert s.induced_metric([0, 0]).value([1.0, 0.0]) == pytest.approx(2.0)


def test_fzero_induced_metric_at_origin_is_restriction():
    amb = norms.QuarticPerturbedNorm.diagonal(4, 0.2)
    s = surf(charts.fsigma(0.0), amb)
    V = np.random.default_rng(1).standard_normal((10, 2))
    W = np.column_stack([V, np.zeros((10, 2))])
    assert np.allclose(s.induced_metric([0, 0]).value(V), amb.value(W), rtol=1e-14)


def test_rank_deficient_chart_rejected():
    s = surf(charts.affine([0, 0, 0], [1, 0, 0], [2, 0, 0]))
    with pytest.raises(ImmersionError):
        s.induced_metric([0, 0])


@pytest.mark.parametrize("name,jets,amb", [
    ("saddle", charts.quadratic_graph(1.0, 0.0, -1.0), E3),
    ("cylinder", charts.cylinder(1.3), E3),
    ("sphere", charts.sphere(0.7), E3),
    ("capped_cone", charts.capped_cone(1.2, 0.5), E3),
    ("fsigma", charts.fsigma(0.3), E4),
])
def test_analytic_jets_match_finite_differences(name, jets, amb):
    fmap = lambda X: jets(X)[0]  # noqa: E731
    X = np.random.default_rng(2).uniform(-0.8, 0.8, (6, 2))
    _, dS, d2S = jets(X)
    errs = []
    for h in (1e-3, 5e-4):
        _, dF, d2F = charts.finite_difference(fmap, h)(X)
        assert np.abs(dF - dS).max() < 1e-5
        errs.append(np.abs(d2F - d2S).max())
    assert errs[0] < 1e-4
    assert errs[1] < errs[0] / 3 or errs[1] < 1e-8


def test_fzero_value():
    S = charts.fsigma_jets(0.0, np.array([[1.0, 1.0]]))[0][0]
    assert np.allclose(S, [1, 1, 0, 1])


def test_saddle_graph_form():
    forms = surfaces.second_fundamental_pencil(surf(charts.quadratic_graph(1.0, 0.0, -1.0)), [0, 0])
    assert np.allclose(forms[0], np.diag([2.0, -2.0]), atol=1e-14)


def test_fzero_pencil_and_class():
    s = surf(charts.fsigma(0.0), E4)
    forms = surfaces.second_fundamental_pencil(s, [0, 0])
    assert np.allclose(forms[0], np.diag([2.0, -2.0]), atol=1e-14)
    assert np.allclose(forms[1], [[0, 1], [1, 0]], atol=1e-14)
    v = surfaces.saddle_classify(s, [0, 0])
    assert v.cls == STRICT and not v.flagged
    dA, dB, m = v.pencil_coefficients
    assert (dA, dB, m) == pytest.approx((-4.0, -1.0, 0.0), abs=1e-13)


def test_affine_chart_forms_vanish_and_class_is_saddle():
    s = surf(charts.affine([1, 2, 3], [1, 0, 1], [0, 1, -1]))
    assert np.abs(surfaces.second_fundamental_pencil(s, [0.1, 0.2])).max() == 0.0
    assert surfaces.saddle_classify(s, [0.1, 0.2]).cls == SADDLE


def test_paraboloid_is_not_saddle():
    s = surf(charts.quadratic_graph(1.0, 0.0, 1.0))
    v = surfaces.saddle_classify(s, [0, 0])
    assert v.cls == NOT_SADDLE and v.pencil_coefficients[0] == pytest.approx(4.0)


def test_region_examples():
    s = surf(charts.fsigma(0.01), E4, [[-0.05, 0.05], [-0.05, 0.05]])
    reg = surfaces.classify_region(s, *surfaces.grid_axes(s, 11))
    assert reg.all(STRICT) and reg.counts == {STRICT: 121}
    s = surf(charts.quadratic_graph(1.0, 0.0, 1.0))
    assert surfaces.classify_region(s, *surfaces.grid_axes(s, 5, 1.0)).all(NOT_SADDLE)
    s = surf(charts.cylinder(1.0))
    reg = surfaces.classify_region(s, *surfaces.grid_axes(s, 5, 1.0))
    assert reg.all(SADDLE) and not any(v.flagged for v in reg.verdicts)


def test_region_csv_columns():
    s = surf(charts.fsigma(0.01), E4, [[-0.05, 0.05], [-0.05, 0.05]])
    text = surfaces.classify_region(s, *surfaces.grid_axes(s, 3)).to_csv()
    lines = text.strip().splitlines()
    assert lines[0] == "x,y,class,detA,detB,m" and len(lines) == 10


def test_pencil_agrees_with_sweep_on_random_forms():
    rng = np.random.default_rng(3)
    checked = 0
    for _ in range(300):
        A, B = rng.standard_normal((2, 2, 2))
        forms = np.array([A + A.T, B + B.T])
        cls, coef = surfaces.pencil_class(forms, 0.0)
        if min(abs(coef[0]), abs(coef[1])) > 1e-9:
            scls, _, hi = surfaces.sweep_class(forms, 720, 0.0)
            if abs(hi) > 1e-6:  # the sweep resolves the sign only away from tangency
                assert cls == scls
                checked += 1
    assert checked > 200


def _random_affine(rng):
    while True:
        M = rng.standard_normal((2, 2))
        if abs(np.linalg.det(M)) > 0.3:
            return M


@given(st.integers(0, 10**6))
def test_property_class_affine_and_q_invariant(seed):
    rng = np.random.default_rng(seed)
    amb = norms.QuarticPerturbedNorm.diagonal(4, 0.1)
    s = surf(charts.fsigma(0.2), amb, [[-3, 3], [-3, 3]])
    x0 = rng.uniform(-0.3, 0.3, 2)
    base = surfaces.saddle_classify(s, x0).cls
    M = _random_affine(rng)
    t = surfaces.saddle_classify(s.reparameterized(M, x0), [0.0, 0.0], q_direction=rng.standard_normal(2))
    assert t.cls == base


def test_class_invariant_for_graph_surfaces_under_affine_changes():
    rng = np.random.default_rng(4)
    for jets, expect in ((charts.quadratic_graph(1.0, 0.3, -0.5), STRICT),
                         (charts.quadratic_graph(1.0, 0.2, 0.8), NOT_SADDLE)):
        s = surf(jets, norms.QuarticPerturbedNorm.diagonal(3, 0.2))
        for _ in range(20):
            r = s.reparameterized(_random_affine(rng), rng.uniform(-0.5, 0.5, 2))
            assert surfaces.saddle_classify(r, [0, 0], q_direction=rng.standard_normal(2)).cls == expect


def test_q_normal_basis_is_orthonormal():
    rng = np.random.default_rng(5)
    B = rng.standard_normal((4, 4))
    Q = B @ B.T + np.eye(4)
    T = rng.standard_normal((4, 2))
    N = surfaces.q_normal_basis(Q, T)
    assert np.allclose(N @ Q @ N.T, np.eye(2), atol=1e-12)
    assert np.allclose(N @ Q @ T, 0.0, atol=1e-12)


def test_surface_from_dict_builds_charts():
    doc = {"chart": "fsigma", "params": {"sigma": 0.1}, "domain": BOX,
           "ambient": {"family": "quadratic", "dim": 4, "params": {"A": np.eye(4).tolist()}}}
    s = surfaces.surface_from_dict(doc)
    assert s.dim == 4 and np.allclose(s.point([0, 0]), 0.0)
