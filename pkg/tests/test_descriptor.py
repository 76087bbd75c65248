import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from blsmo.descriptor import (
    build_descriptor,
    compute_T,
    numerical_rank,
    plant_from_dict,
    plant_to_dict,
    verify_structure_identity,
)
from blsmo.errors import (
    DimensionMismatch,
    RankDeficient,
    SingularNormalEquations,
    TooFewOutputs,
    UnknownNonlinearity,
)

from conftest import random_plant, scalar_plant

REFERENCE_L1_EX1 = np.array([
    [1.58, -0.43, -0.21],
    [29.81, -75.99, -37.99],
    [5.33, -14.25, -7.12],
    [-20.95, 62.13, 31.06],
    [-9.29, 27.93, 13.97],
])


def test_example1_block_shapes(ex1_plant):
    d = build_descriptor(ex1_plant)
    assert d.Ebar.shape == (4, 5) and d.Abar.shape == (4, 5) and d.Cbar.shape == (3, 5)
    np.testing.assert_array_equal(d.Cbar, np.hstack([ex1_plant.C, ex1_plant.D]))
    np.testing.assert_array_equal(d.Ebar, np.hstack([np.eye(4), np.zeros((4, 1))]))
    np.testing.assert_array_equal(d.Abar[:, :4], ex1_plant.A)
    assert not d.Abar[:, 4:].any()


def test_scalar_blocks_and_T():
    d = build_descriptor(scalar_plant(A=[[1.0]]))
    np.testing.assert_array_equal(d.Ebar, [[1, 0]])
    np.testing.assert_array_equal(d.Abar, [[1, 0]])
    np.testing.assert_array_equal(d.Cbar, [[1, 1]])
    # V = [[1, 0], [-1, -1]] is its own inverse
    np.testing.assert_allclose(d.T1, [[1], [-1]], atol=1e-14)
    np.testing.assert_allclose(d.T2, [[0], [-1]], atol=1e-14)
    np.testing.assert_allclose(d.T1 @ d.Ebar - d.T2 @ d.Cbar, np.eye(2), atol=1e-14)


@pytest.mark.parametrize("name", ["ex1_plant", "ex2_plant"])
def test_T_against_independent_pinv(name, request):
    plant = request.getfixturevalue(name)
    d = build_descriptor(plant)
    V = np.vstack([d.Ebar, -d.Cbar])
    # full column rank, so the pseudoinverse is the normal-equations solution
    T = np.linalg.solve(V.T @ V, V.T)
    np.testing.assert_allclose(d.T1, T[:, :4], atol=1e-12)
    np.testing.assert_allclose(d.T2, T[:, 4:], atol=1e-12)
    assert d.T1.shape == (5, 4) and d.T2.shape == (5, 3)
    assert d.identity_residual() <= 1e-10
    assert numerical_rank(d.T1 @ plant.G) == plant.m_x


def test_zero_D_column_is_rank_deficient():
    with pytest.raises(RankDeficient):
        scalar_plant(D=[[0.0]])


def test_rank_deficient_G():
    with pytest.raises(RankDeficient):
        scalar_plant(A=np.eye(2), Bf=np.zeros((2, 1)), Bg=np.zeros((2, 1)),
                     G=[[1, 2], [2, 4]], C=np.eye(2), D=[[1], [0]], Cq=[[1, 0]])


def test_too_few_outputs():
    with pytest.raises(TooFewOutputs):
        scalar_plant(D=[[1.0, 2.0]])


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        scalar_plant(C=[[1.0, 0.0]])
    with pytest.raises(DimensionMismatch):
        scalar_plant(A=[[1.0, 0.0]])


def test_compute_T_singular():
    with pytest.raises(SingularNormalEquations):
        compute_T(np.array([[1.0, 0.0]]), np.array([[1.0, 0.0]]))


def test_compute_T_custom_left_inverse():
    E, C = np.array([[1.0, 0.0]]), np.array([[1.0, 1.0]])
    T1, T2, _ = compute_T(E, C, left_inverse=[[1, 0], [-1, -1]])
    np.testing.assert_allclose(T1.ravel(), [1, -1])
    with pytest.raises(SingularNormalEquations):
        compute_T(E, C, left_inverse=np.eye(2))
    with pytest.raises(DimensionMismatch):
        compute_T(E, C, left_inverse=np.eye(3))


def test_structure_identity_scalar_zero_gain():
    d = build_descriptor(scalar_plant(A=[[1.0]]))
    assert verify_structure_identity(d.T1, d.T2, d.Abar, d.Cbar, np.zeros((2, 1))) == 0.0


def test_structure_identity_reference_gain(ex1_plant):
    d = build_descriptor(ex1_plant)
    assert verify_structure_identity(d.T1, d.T2, d.Abar, d.Cbar, REFERENCE_L1_EX1) <= 1e-9


def test_structure_identity_shape_errors(ex1_plant):
    d = build_descriptor(ex1_plant)
    with pytest.raises(DimensionMismatch):
        verify_structure_identity(d.T1, d.T2, d.Abar, d.Cbar, np.zeros((4, 3)))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_identities_on_random_systems(seed):
    rng = np.random.default_rng(seed)
    d = build_descriptor(random_plant(rng))
    assert d.identity_residual() <= 1e-10
    L1 = rng.normal(scale=10, size=(d.n, d.Cbar.shape[0]))
    assert verify_structure_identity(d.T1, d.T2, d.Abar, d.Cbar, L1) <= 1e-9


def test_deterministic(ex2_plant):
    a, b = build_descriptor(ex2_plant), build_descriptor(ex2_plant)
    for k in ("Ebar", "Abar", "Cbar", "T1", "T2"):
        assert getattr(a, k).tobytes() == getattr(b, k).tobytes()


def test_matrices_are_read_only(ex1_plant):
    with pytest.raises(ValueError):
        ex1_plant.A[0, 0] = 1.0


def test_json_round_trip(ex1_config):
    plant = plant_from_dict(ex1_config["plant"])
    doc = json.loads(json.dumps(plant_to_dict(plant)))
    again = plant_from_dict(doc)
    for k in ("A", "Bf", "Bg", "G", "C", "D", "Cq"):
        np.testing.assert_array_equal(getattr(plant, k), getattr(again, k))
    assert again.rho_x == plant.rho_x
    np.testing.assert_allclose(again.f_of_q([0.3]), np.cos(0.3))
    np.testing.assert_allclose(again.w_x.sample([0.0, 1.0]), plant.w_x.sample([0.0, 1.0]))


def test_unknown_nonlinearity(ex1_config):
    doc = dict(ex1_config["plant"], f={"name": "tanh_of_q"})
    with pytest.raises(UnknownNonlinearity):
        plant_from_dict(doc)
