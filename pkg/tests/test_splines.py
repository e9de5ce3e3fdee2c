import math

import numpy as np
import pytest

from cgfpca.splines import (
    BasisSpec,
    OrthonormalBasis,
    SplineError,
    design_matrix,
    eval_raw_basis,
    gram_matrix,
    make_knots,
    orthonormalize,
    penalty_matrix,
)


def bernstein_gram():
    # closed form: int_0^1 b_{3,i} b_{3,j} = C(3,i) C(3,j) / (C(6,i+j) * 7)
    G = np.empty((4, 4))
    for i in range(4):
        for j in range(4):
            G[i, j] = math.comb(3, i) * math.comb(3, j) / (math.comb(6, i + j) * 7)
    return G


def test_make_knots_no_interior():
    np.testing.assert_allclose(make_knots((0, 1), 4, 0), [0, 0, 0, 0, 1, 1, 1, 1])


def test_make_knots_midpoint():
    np.testing.assert_allclose(make_knots((0, 1), 4, 1), [0, 0, 0, 0, 0.5, 1, 1, 1, 1])


def test_make_knots_equal_spacing():
    np.testing.assert_allclose(make_knots((0, 2), 2, 3), [0, 0, 0.5, 1.0, 1.5, 2, 2])


def test_make_knots_rejects_degenerate_domain():
    with pytest.raises(SplineError):
        make_knots((1, 1), 4, 0)
    with pytest.raises(SplineError):
        make_knots((2, 1), 4, 0)


def test_eval_raw_basis_boundary_interpolation():
    spec = BasisSpec((0, 1), 4, 0)
    np.testing.assert_allclose(eval_raw_basis(spec, 0.0), [1, 0, 0, 0], atol=1e-15)
    np.testing.assert_allclose(eval_raw_basis(spec, 1.0), [0, 0, 0, 1], atol=1e-15)


def test_eval_raw_basis_bernstein_midpoint():
    # cubic Bernstein values at 1/2: C(3,k) / 8
    spec = BasisSpec((0, 1), 4, 0)
    np.testing.assert_allclose(eval_raw_basis(spec, 0.5), [0.125, 0.375, 0.375, 0.125], atol=1e-15)


def test_eval_raw_basis_rejects_outside_domain():
    spec = BasisSpec((0, 1), 4, 2)
    with pytest.raises(SplineError):
        eval_raw_basis(spec, 1.5)


def test_partition_of_unity():
    rng = np.random.default_rng(0)
    for order, m in [(2, 5), (4, 0), (4, 7), (6, 3)]:
        spec = BasisSpec((0, 1), order, m)
        u = rng.uniform(0, 1, size=1000)
        vals = eval_raw_basis(spec, u)
        assert np.all(vals >= -1e-15)
        assert np.max(np.abs(vals.sum(axis=1) - 1)) < 1e-12
        assert np.all((vals > 0).sum(axis=1) <= order)


def test_gram_matrix_hat_functions():
    spec = BasisSpec((0, 1), 2, 0)
    np.testing.assert_allclose(gram_matrix(spec), [[1 / 3, 1 / 6], [1 / 6, 1 / 3]], atol=1e-14)


def test_gram_matrix_bernstein():
    spec = BasisSpec((0, 1), 4, 0)
    np.testing.assert_allclose(gram_matrix(spec), bernstein_gram(), atol=1e-12)


def test_gram_matrix_spd():
    for order, m in [(2, 0), (3, 4), (4, 10), (5, 2)]:
        G = gram_matrix(BasisSpec((0, 1), order, m))
        np.testing.assert_allclose(G, G.T, atol=1e-14)
        assert np.linalg.eigvalsh(G).min() > 0


def test_orthonormalize_identity_on_all_specs():
    for order in range(2, 7):
        for m in [0, 1, 5, 20]:
            spec = BasisSpec((0, 1), order, m)
            basis = orthonormalize(spec)
            G = gram_matrix(spec)
            TGT = basis.transform @ G @ basis.transform.T
            assert np.max(np.abs(TGT - np.eye(spec.dof))) < 1e-10


def test_orthonormalize_matches_analytic_hat_gram():
    spec = BasisSpec((0, 1), 2, 0)
    basis = orthonormalize(spec)
    L = np.linalg.cholesky(np.array([[1 / 3, 1 / 6], [1 / 6, 1 / 3]]))
    np.testing.assert_allclose(basis.transform, np.linalg.inv(L), atol=1e-12)


def test_penalty_matrix_bernstein_symbolic_oracle():
    # symbolic integration of second-derivative products of cubic Bernstein
    sympy = pytest.importorskip("sympy")
    u = sympy.symbols("u")
    polys = [sympy.binomial(3, k) * u**k * (1 - u) ** (3 - k) for k in range(4)]
    d2 = [sympy.diff(p, u, 2) for p in polys]
    expected = np.array(
        [[float(sympy.integrate(d2[i] * d2[j], (u, 0, 1))) for j in range(4)] for i in range(4)]
    )
    np.testing.assert_allclose(gram_matrix(BasisSpec((0, 1), 4, 0), deriv=2), expected, atol=1e-10)


def test_penalty_annihilates_affine_functions():
    for m in [0, 3, 8]:
        spec = BasisSpec((0, 1), 4, m)
        basis = orthonormalize(spec)
        pen = penalty_matrix(basis, d=2)
        # raw coefficients of 1 and u: ones / Greville abscissae
        knots, order, K = spec.knots, spec.order, spec.dof
        greville = np.array([knots[k + 1 : k + order].mean() for k in range(K)])
        Tinv = np.linalg.inv(basis.transform)
        for coef_raw in (np.ones(K), greville):
            coef = Tinv.T @ coef_raw
            assert abs(coef @ pen.gamma @ coef) < 1e-10


def test_penalty_matrix_psd_and_range_checks():
    basis = orthonormalize(BasisSpec((0, 1), 4, 5))
    for d in (1, 2, 3):
        pen = penalty_matrix(basis, d)
        np.testing.assert_allclose(pen.gamma, pen.gamma.T, atol=1e-12 * max(1, np.abs(pen.gamma).max()))
        # absolute bound at the default scale; relative for the huge d=3 entries
        assert np.linalg.eigvalsh(pen.gamma).min() > -1e-10 * max(1.0, np.linalg.norm(pen.gamma, 2))
    with pytest.raises(SplineError):
        penalty_matrix(basis, 0)
    with pytest.raises(SplineError):
        penalty_matrix(basis, 4)


def test_design_matrix_empty_and_pointwise():
    basis = orthonormalize(BasisSpec((0, 1), 4, 6))
    assert design_matrix(basis, []).shape == (0, basis.dof)
    rng = np.random.default_rng(1)
    times = rng.uniform(0, 1, size=40)
    B = design_matrix(basis, times)
    for j, u in enumerate(times):
        row = basis.transform @ eval_raw_basis(basis.spec, u)
        np.testing.assert_allclose(B[j], row, atol=1e-12)


def test_design_matrix_rejects_out_of_domain():
    basis = orthonormalize(BasisSpec((0, 1), 4, 2))
    with pytest.raises(SplineError):
        design_matrix(basis, [0.2, 1.2])


def test_serialization_round_trip_bit_identical():
    basis = orthonormalize(BasisSpec((0, 1), 4, 9))
    clone = OrthonormalBasis.from_json(basis.to_json())
    times = np.linspace(0, 1, 57)
    assert np.array_equal(design_matrix(basis, times), design_matrix(clone, times))
