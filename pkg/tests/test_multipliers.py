import numpy as np
import pytest

from blsmo.errors import (
    AsymmetricM,
    AsymmetricR,
    ConfigInvalid,
    DimensionMismatch,
    EmptyVertexList,
    NonPositiveConstant,
)
from blsmo.multipliers import (
    check_iqc,
    imm_cone_constraints,
    imm_fixed,
    imm_lipschitz,
    imm_polytope_constraints,
    imm_positively_real,
    imm_quasi_lipschitz,
    imm_sector,
    multiplier_from_dict,
)

E11 = np.array([[1.0, 0.0], [0.0, 0.0]])
E22 = np.array([[0.0, 0.0], [0.0, 1.0]])


def quad_form(M, dq, df):
    z = np.r_[np.atleast_1d(dq), np.atleast_1d(df)]
    return float(z @ M @ z)


def test_lipschitz_patterns():
    np.testing.assert_array_equal(imm_lipschitz(1.0).instantiate(), [[1, 0], [0, -1]])
    np.testing.assert_array_equal(imm_lipschitz(2.0).instantiate(), [[4, 0], [0, -1]])
    M = imm_lipschitz(1.5, n_q=2, n_f=3).instantiate()
    np.testing.assert_array_equal(M, np.diag([2.25, 2.25, -1, -1, -1]))
    with pytest.raises(NonPositiveConstant):
        imm_lipschitz(0.0)


def test_lipschitz_hand_evaluation():
    # q1 = 0, q2 = pi with f = cos
    assert quad_form(imm_lipschitz(1.0).instantiate(), -np.pi, 2.0) == pytest.approx(np.pi**2 - 4)


def test_scaling_property():
    spec = imm_quasi_lipschitz(0.3, [[-1.0]], [[2.0]])
    np.testing.assert_allclose(spec.instantiate(7.5), 7.5 * spec.instantiate(1.0), rtol=0, atol=0)
    with pytest.raises(NonPositiveConstant):
        spec.instantiate(-1.0)


def test_quasi_lipschitz():
    M = imm_quasi_lipschitz(0.0, [[-1.0]], [[5.0]]).instantiate()
    np.testing.assert_array_equal(M, [[0, 1], [1, 0]])
    # q1 = 1, q2 = -1 for q|q|
    assert quad_form(M, 2.0, 2.0) == 8.0
    with pytest.raises(AsymmetricR):
        imm_quasi_lipschitz(1.0, np.zeros((2, 1)), [[1, 2], [0, 1]])


def test_sector_substitutions():
    I = np.eye(1)
    Z = np.zeros((1, 1))
    np.testing.assert_allclose(imm_sector(I, Z, I, Z, I).instantiate(), [[2, 0], [0, 0]])
    L = 1.7
    got = imm_sector(L * I, I, L * I, -I, 0.5 * I).instantiate()
    np.testing.assert_allclose(got, imm_lipschitz(L).instantiate(), atol=1e-14)
    with pytest.raises(DimensionMismatch):
        imm_sector(I, Z, I, Z, np.eye(2))


def test_sector_nonsymmetric_X_is_symmetric_and_matches_form():
    rng = np.random.default_rng(3)
    M11, M12, M21, M22 = (rng.normal(size=(2, 2)) for _ in range(4))
    X = rng.normal(size=(2, 2))
    M = imm_sector(M11, M12, M21, M22, X).instantiate()
    np.testing.assert_allclose(M, M.T, atol=1e-12)
    for _ in range(20):
        dq, df = rng.normal(size=2), rng.normal(size=2)
        a = M11 @ dq + M12 @ df
        b = M21 @ dq + M22 @ df
        # the sector form is a^T X b + b^T X^T a
        assert quad_form(M, dq, df) == pytest.approx(2 * a @ X @ b, rel=1e-10, abs=1e-10)


def test_positively_real():
    np.testing.assert_array_equal(imm_positively_real(1.0).instantiate(), [[0, 1], [1, 0]])
    M = imm_positively_real(2 * np.eye(2), kappa=3).instantiate()
    np.testing.assert_array_equal(M, np.block([[np.zeros((2, 2)), 6 * np.eye(2)],
                                               [6 * np.eye(2), np.zeros((2, 2))]]))
    with pytest.raises(NonPositiveConstant):
        imm_positively_real(1.0, kappa=0)


def test_fixed_requires_symmetry():
    with pytest.raises(AsymmetricM):
        imm_fixed([[1, 2], [0, 1]], n_q=1)


def test_polytope_single_zero_vertex():
    spec = imm_polytope_constraints([np.zeros((1, 1))])
    rep = {name: (sense, v) for name, sense, v in spec.constraint_report([[2.0]], [[5.0]], [[-1.0]])}
    assert rep["M22_nsd"] == ("nsd", -1.0)
    assert rep["vertex_1"] == ("psd", 2.0)  # reduces to M11 >= 0


def test_polytope_axis_vertices_and_witness():
    spec = imm_polytope_constraints([E11, -E11, E22, -E22])
    assert len(spec.constraints) == 5
    report = spec.constraint_report(np.eye(2), np.zeros((2, 2)), -0.25 * np.eye(2))
    for name, sense, v in report:
        assert (v <= 0) if sense == "nsd" else (v >= 0), name


def test_cone_constraints():
    spec = imm_cone_constraints([np.eye(1)])
    rep = spec.constraint_report([[0.0]], [[1.0]], [[0.0]])
    assert [r[1] for r in rep] == ["zero", "psd"]
    spec = imm_cone_constraints([E11, np.eye(2)])
    assert sum(c.sense == "zero" for c in spec.constraints) == 2
    assert sum(c.sense == "psd" for c in spec.constraints) == 2
    for name, sense, v in spec.constraint_report(np.zeros((2, 2)), np.eye(2), np.zeros((2, 2))):
        assert v == 0.0 if sense == "zero" else v >= 0, name


def test_empty_vertex_lists():
    with pytest.raises(EmptyVertexList):
        imm_polytope_constraints([])
    with pytest.raises(EmptyVertexList):
        imm_cone_constraints([])


def test_from_dict():
    assert multiplier_from_dict({"kind": "lipschitz", "L_f": 2.0}).instantiate()[0, 0] == 4.0
    assert multiplier_from_dict({"kind": "positively_real", "X": 1.0}).kind == "positively_real"
    with pytest.raises(ConfigInvalid):
        multiplier_from_dict({"kind": "nope"})


# -- sampled IQC checks -------------------------------------------------------

def test_iqc_cos_lipschitz():
    assert check_iqc([[1, 0], [0, -1]], np.cos).min_form_value >= -1e-9


def test_iqc_q_abs_q_offdiagonal():
    assert check_iqc([[0, 1], [1, 0]], lambda q: q * np.abs(q)).passed


def test_iqc_detects_wrong_class():
    rep = check_iqc([[1, 0], [0, -1]], lambda q: q**2)
    assert not rep.passed
    q1, q2 = rep.violating_pair
    # |q1 + q2| > 1 is exactly where the Lipschitz-1 bound fails for q^2
    assert abs(q1[0] + q2[0]) > 1


def test_iqc_monotone_piecewise_linear():
    rng = np.random.default_rng(11)
    knots = np.sort(rng.uniform(-10, 10, 8))
    vals = np.cumsum(rng.uniform(0, 3, 8))
    f = lambda q: np.interp(q, knots, vals)
    M = imm_quasi_lipschitz(0.0, [[-1.0]], [[1.0]]).instantiate()
    assert check_iqc(M, f, n_samples=1000).passed


def test_iqc_cubic_positively_real():
    assert check_iqc(imm_positively_real(1.0).instantiate(), lambda q: q**3, n_samples=1000).passed


def test_iqc_rejects_asymmetric():
    with pytest.raises(AsymmetricM):
        check_iqc([[1, 1], [0, 1]], np.cos)


def test_iqc_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        check_iqc(np.eye(3), np.cos)


def test_iqc_deterministic():
    a = check_iqc([[1, 0], [0, -1]], lambda q: q**2, seed=5)
    b = check_iqc([[1, 0], [0, -1]], lambda q: q**2, seed=5)
    assert a.min_form_value == b.min_form_value
