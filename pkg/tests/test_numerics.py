import numpy as np
import pytest

from src.numerics.linalg import (
    as_square,
    inf_norm,
    is_symmetric,
    lyapunov_residual,
    solve_continuous_lyapunov,
    solve_linear,
    spectral_radius,
    sym_eig_extremes,
)
from src.utils.errors import NonConvergence, NonFinite, ShapeMismatch, SingularMatrix


def test_inf_norm_vector_and_matrix():
    assert inf_norm(np.array([1.0, -3.0, 2.0])) == 3.0
    assert inf_norm(np.array([[1.0, -2.0], [0.5, 0.5]])) == 3.0


def test_as_square_rejects_bad_input():
    with pytest.raises(ShapeMismatch):
        as_square(np.ones((2, 3)))
    with pytest.raises(NonFinite):
        as_square(np.array([[1.0, np.nan], [0.0, 1.0]]))
    assert as_square(2.0).shape == (1, 1)


def test_solve_linear_small_system():
    x = solve_linear([[2.0, 1.0], [1.0, 3.0]], [3.0, 5.0])
    np.testing.assert_allclose(x, [0.8, 1.4], atol=1e-14)


def test_solve_linear_stacked_right_hand_sides():
    a = np.array([[4.0, 1.0, 0.0], [1.0, 3.0, 1.0], [0.0, 1.0, 2.0]])
    b = np.arange(12.0).reshape(3, 4)
    x = solve_linear(a, b)
    assert x.shape == (3, 4)
    np.testing.assert_allclose(a @ x, b, atol=1e-12)


def test_solve_linear_singular():
    with pytest.raises(SingularMatrix):
        solve_linear([[1.0, 2.0], [2.0, 4.0]], [1.0, 2.0])
    with pytest.raises(SingularMatrix):
        solve_linear(np.zeros((2, 2)), [1.0, 2.0])


def test_solve_linear_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        solve_linear(np.eye(2), [1.0, 2.0, 3.0])


def test_sym_eig_extremes_diagonal():
    report = sym_eig_extremes(np.diag([3.0, 1.0, 2.0]))
    assert report.lambda_min == pytest.approx(1.0)
    assert report.lambda_max == pytest.approx(3.0)
    assert report.residual < 1e-12


def test_sym_eig_extremes_symmetrizes_input():
    report = sym_eig_extremes([[1.0, 2.0], [0.0, 1.0]])
    assert report.lambda_min == pytest.approx(0.0, abs=1e-12)
    assert report.lambda_max == pytest.approx(2.0)


def test_is_symmetric():
    assert is_symmetric([[1.0, 2.0], [2.0, 1.0]])
    assert not is_symmetric([[1.0, 2.0], [2.1, 1.0]])


def test_lyapunov_scalar():
    g = solve_continuous_lyapunov([[-0.1]])
    assert g[0, 0] == pytest.approx(5.0, rel=1e-12)


def test_lyapunov_diagonal():
    g = solve_continuous_lyapunov(np.diag([-1.0, -2.0]))
    np.testing.assert_allclose(g, np.diag([0.5, 0.25]), atol=1e-14)


def test_lyapunov_general_hurwitz_matrix():
    rng = np.random.default_rng(3)
    a = -2.0 * np.eye(4) + 0.3 * rng.standard_normal((4, 4))
    g = solve_continuous_lyapunov(a)
    assert lyapunov_residual(a, g) < 1e-10
    assert is_symmetric(g, 1e-12)
    assert sym_eig_extremes(g).lambda_min > 0


def test_lyapunov_no_unique_solution():
    # eigenvalues ±i sum to zero
    with pytest.raises(SingularMatrix):
        solve_continuous_lyapunov([[0.0, 1.0], [-1.0, 0.0]])


def test_spectral_radius_diagonal():
    assert spectral_radius(np.diag([0.5, -0.9])) == pytest.approx(0.9, abs=1e-8)


def test_spectral_radius_nilpotent_and_zero():
    assert spectral_radius([[0.0, 1.0], [0.0, 0.0]]) == 0.0
    assert spectral_radius(np.zeros((3, 3))) == 0.0


def test_spectral_radius_rotation():
    rotation = 0.8 * np.array([[0.0, -1.0], [1.0, 0.0]])
    assert spectral_radius(rotation) == pytest.approx(0.8, abs=1e-8)


def test_spectral_radius_jordan_block():
    assert spectral_radius([[0.5, 1.0], [0.0, 0.5]]) == pytest.approx(0.5, abs=1e-6)


def test_spectral_radius_matches_eigenvalues():
    rng = np.random.default_rng(11)
    x = rng.standard_normal((6, 6))
    s = 0.5 * (x + x.T)
    expected = np.max(np.abs(np.linalg.eigvalsh(s)))
    assert spectral_radius(s) == pytest.approx(expected, abs=1e-6)


def test_spectral_radius_no_convergence():
    with pytest.raises(NonConvergence):
        spectral_radius([[0.5, 1.0], [0.0, 0.5]], max_squarings=2)
