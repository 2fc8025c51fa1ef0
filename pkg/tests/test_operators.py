import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from overparam.operators import (InvalidArgument, build_planar_parameterization,
                                 build_poly_parameterization, dense_measurement, dif_operator,
                                 gaussian_measurement, heaviside_dictionary,
                                 identity_measurement)


def test_poly_parameterization_examples():
    assert_array_equal(build_poly_parameterization(3, 1).weights, [[1, 1, 1], [1, 2, 3]])
    assert_array_equal(build_poly_parameterization(4, 0).weights, [[1, 1, 1, 1]])
    assert_allclose(build_poly_parameterization(3, 2, "normalized").weights,
                    [[1, 1, 1], [1 / 3, 2 / 3, 1], [1 / 9, 4 / 9, 1]], rtol=1e-15)


@pytest.mark.parametrize("d,n", [(1, 1), (5, -1)])
def test_poly_parameterization_rejects(d, n):
    with pytest.raises(InvalidArgument):
        build_poly_parameterization(d, n)


def test_planar_parameterization_examples():
    assert_array_equal(build_planar_parameterization(2, 3).weights,
                       [[1] * 6, [1, 2, 3, 1, 2, 3], [1, 1, 1, 2, 2, 2]])
    assert_array_equal(build_planar_parameterization(2, 2).weights[1], [1, 2, 1, 2])
    assert_array_equal(build_planar_parameterization(3, 2).weights[2], [1, 1, 2, 2, 3, 3])
    with pytest.raises(InvalidArgument):
        build_planar_parameterization(1, 4)


def test_normalized_parameterization_rescales_coefficients():
    P = build_poly_parameterization(7, 2)
    Pn, s = P.normalized()
    b = np.random.default_rng(0).standard_normal((3, 7))
    assert_allclose(P.synthesize(b), Pn.synthesize(b * s[:, None]), rtol=1e-12)


def test_dif_examples():
    op = dif_operator("1D", 4)
    assert op.shape == (3, 4)
    assert_array_equal(op.apply(np.ones(4)), np.zeros(3))
    assert_array_equal(op.apply([0, 0, 1, 1]), [0, -1, 0])
    op2 = dif_operator("2D-hv", (2, 2))
    assert op2.rows == 4
    assert_array_equal(op2.apply(np.full(4, 3.0)), np.zeros(4))


@pytest.mark.parametrize("h,w", [(2, 2), (3, 5), (6, 4)])
def test_dif_2d_row_counts(h, w):
    assert dif_operator("2D-hv", (h, w)).rows == h * (w - 1) + (h - 1) * w
    assert dif_operator("2D-hv-diag", (h, w)).rows == h * (w - 1) + (h - 1) * w + 2 * (h - 1) * (w - 1)


def test_dif_2d_row_layout():
    # horizontal rows first, then vertical, on a 2 x 3 image
    img = np.array([[0, 1, 3], [10, 20, 40]], dtype=float)
    out = dif_operator("2D-hv", (2, 3)).apply(img.ravel())
    assert_array_equal(out, [-1, -2, -10, -20, -10, -19, -37])


def test_dif_diagonal_rows():
    img = np.array([[1, 2], [4, 8]], dtype=float)
    out = dif_operator("2D-hv-diag", (2, 2)).apply(img.ravel())
    assert_array_equal(out[-2:], [1 - 8, 2 - 4])


@pytest.mark.parametrize("geometry,dims", [("1D", 9), ("2D-hv", (4, 5)), ("2D-hv-diag", (5, 3))])
def test_dif_rows_are_signed_pairs(geometry, dims):
    op = dif_operator(geometry, dims)
    A = op.matrix.toarray()
    assert np.all((A != 0).sum(axis=1) == 2)
    assert_array_equal(np.sort(A, axis=1)[:, [0, -1]], np.tile([-1, 1], (op.rows, 1)))


def test_gaussian_measurement_examples():
    M = gaussian_measurement(10, 20, 7)
    assert_allclose(np.linalg.norm(M.matrix, axis=0), 1.0, atol=1e-12)
    assert_array_equal(M.matrix, gaussian_measurement(10, 20, 7).matrix)
    assert M.metadata()["prng"] == "numpy.random.PCG64/v1"
    v = np.arange(5.0)
    assert_array_equal(identity_measurement(5).apply(v), v)
    with pytest.raises(InvalidArgument):
        gaussian_measurement(0, 3, 1)


@pytest.mark.parametrize("d", [3, 16, 512])
def test_heaviside_identity(d):
    D = heaviside_dictionary(d, drop_dc=True)
    assert_array_equal(dif_operator("1D", d).matrix @ D, np.eye(d - 1))


def test_heaviside_layout():
    assert_array_equal(heaviside_dictionary(3), [[1, 1, 1], [0, 1, 1], [0, 0, 1]])


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 12), st.integers(1, 12), st.integers(0, 2**32 - 1))
def test_adjoint_consistency(m, d, seed):
    rng = np.random.default_rng(seed)
    u, v = rng.standard_normal(d), rng.standard_normal(m)
    for M in (gaussian_measurement(m, d, seed), dense_measurement(rng.standard_normal((m, d)))):
        lhs, rhs = M.apply(u) @ v, u @ M.adjoint(v)
        assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs))
    I = identity_measurement(d)
    w = rng.standard_normal(d)
    assert abs(I.apply(u) @ w - u @ I.adjoint(w)) <= 1e-12 * max(1.0, abs(u @ w))


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 6), st.integers(2, 6), st.integers(0, 2**32 - 1))
def test_operator_adjoint_consistency(h, w, seed):
    rng = np.random.default_rng(seed)
    op = dif_operator("2D-hv-diag", (h, w))
    u, v = rng.standard_normal(h * w), rng.standard_normal(op.rows)
    assert abs(op.apply(u) @ v - u @ op.adjoint(v)) <= 1e-10 * (1 + np.abs(u).sum() * np.abs(v).sum())


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 7), st.integers(2, 7), st.floats(-50, 50), st.floats(-5, 5), st.floats(-5, 5))
def test_planar_weights_have_zero_second_differences(h, w, a, b, c):
    P = build_planar_parameterization(h, w)
    img = (a * P.weights[0] + b * P.weights[1] + c * P.weights[2]).reshape(h, w)
    assert_allclose(np.diff(img, 2, axis=1), 0, atol=1e-9)
    assert_allclose(np.diff(img, 2, axis=0), 0, atol=1e-9)
    for geo in ("2D-hv", "2D-hv-diag"):
        assert_allclose(dif_operator(geo, (h, w)).apply(np.full(h * w, a)), 0, atol=0)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(-3, 3), min_size=2, max_size=40))
def test_piecewise_constant_jump_count(levels):
    v = np.array(levels, dtype=float)
    jumps = int(np.count_nonzero(v[1:] != v[:-1]))
    assert np.count_nonzero(dif_operator("1D", v.size).apply(v)) == jumps
