"""Tests for the from-scratch dense kernels.

np.linalg is used here only as an independent oracle; the package itself
never calls it.
"""

import numpy as np
import pytest

from selfpred import linalg


def test_matmul_identity():
    m = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(linalg.matmul(np.eye(2), m), m)


def test_matmul_permutation():
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    perm = np.array([[0.0, 1.0], [1.0, 0.0]])
    np.testing.assert_array_equal(
        linalg.matmul(a, perm), np.array([[2.0, 1.0], [4.0, 3.0]])
    )


def test_matmul_against_triple_loop():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((5, 7))
    b = rng.standard_normal((7, 3))
    naive = np.zeros((5, 3))
    for i in range(5):
        for j in range(3):
            for k in range(7):
                naive[i, j] += a[i, k] * b[k, j]
    assert np.max(np.abs(linalg.matmul(a, b) - naive)) <= 1e-12


def test_matmul_dimension_mismatch():
    with pytest.raises(ValueError):
        linalg.matmul(np.eye(2), np.eye(3))


def test_matmul_rejects_nonfinite():
    with pytest.raises(ValueError):
        linalg.matmul(np.array([[np.nan, 0.0], [0.0, 1.0]]), np.eye(2))


def test_frobenius_norm_examples():
    assert linalg.frobenius_norm(np.eye(3)) == pytest.approx(np.sqrt(3.0))
    assert linalg.frobenius_norm(np.zeros((4, 2))) == 0.0
    assert linalg.frobenius_norm(np.array([[3.0, 4.0]])) == pytest.approx(5.0)


def test_operator_norm_examples():
    assert linalg.operator_norm(np.diag([3.0, 1.0])) == pytest.approx(3.0)
    assert linalg.operator_norm(np.array([[0.0, 1.0], [0.0, 0.0]])) == pytest.approx(
        1.0
    )
    assert linalg.operator_norm(np.zeros((3, 3))) == 0.0


def test_operator_norm_against_svd_oracle():
    rng = np.random.default_rng(11)
    for _ in range(20):
        m = rng.standard_normal((8, 8))
        want = np.linalg.svd(m, compute_uv=False)[0]
        assert linalg.operator_norm(m) == pytest.approx(want, rel=1e-9)


def test_operator_norm_rectangular():
    rng = np.random.default_rng(12)
    for shape in [(9, 4), (4, 9)]:
        m = rng.standard_normal(shape)
        want = np.linalg.svd(m, compute_uv=False)[0]
        assert linalg.operator_norm(m) == pytest.approx(want, rel=1e-9)


def test_norm_ordering_invariant():
    rng = np.random.default_rng(13)
    for _ in range(25):
        m = rng.standard_normal((7, 5))
        op = linalg.operator_norm(m)
        fro = linalg.frobenius_norm(m)
        rank = np.linalg.matrix_rank(m)
        assert op <= fro + 1e-12
        assert fro <= np.sqrt(rank) * op + 1e-9


def test_sym_eig_diagonal():
    res = linalg.sym_eig(np.diag([2.0, 1.0]))
    np.testing.assert_allclose(res.eigenvalues, [2.0, 1.0])
    np.testing.assert_allclose(res.eigenvectors, np.eye(2))


def test_sym_eig_hand_2x2():
    # Characteristic polynomial of [[2,1],[1,2]]: (2-l)^2 - 1 -> l in {3, 1}.
    res = linalg.sym_eig(np.array([[2.0, 1.0], [1.0, 2.0]]))
    np.testing.assert_allclose(res.eigenvalues, [3.0, 1.0], atol=1e-13)


def test_sym_eig_reconstruction_spd():
    rng = np.random.default_rng(21)
    for _ in range(10):
        b = rng.standard_normal((16, 16))
        m = b @ b.T + 0.5 * np.eye(16)
        lam, v = linalg.sym_eig(m)
        recon = v @ np.diag(lam) @ v.T
        rel = np.linalg.norm(recon - m) / np.linalg.norm(m)
        assert rel <= 1e-10
        assert np.linalg.norm(v.T @ v - np.eye(16)) <= 1e-10
        # Descending order.
        assert np.all(np.diff(lam) <= 1e-12)


def test_sym_eig_matches_numpy_oracle():
    rng = np.random.default_rng(22)
    m = rng.standard_normal((20, 20))
    m = m + m.T
    lam, _ = linalg.sym_eig(m)
    want = np.sort(np.linalg.eigvalsh(m))[::-1]
    np.testing.assert_allclose(lam, want, atol=1e-10 * np.linalg.norm(m))


def test_sym_eig_orthonormality_large():
    rng = np.random.default_rng(23)
    m = rng.standard_normal((64, 64))
    m = 0.5 * (m + m.T)
    _, v = linalg.sym_eig(m)
    assert np.linalg.norm(v.T @ v - np.eye(64)) <= 1e-10


def test_sym_eig_rejects_asymmetric():
    with pytest.raises(ValueError):
        linalg.sym_eig(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_sym_eig_rejects_nonsquare():
    with pytest.raises(ValueError):
        linalg.sym_eig(np.zeros((2, 3)))


def test_svd_diagonal_signs():
    # Singular values are the absolute eigenvalues of a diagonal matrix.
    _, s, _ = linalg.svd(np.diag([2.0, -1.0]))
    np.testing.assert_allclose(s, [2.0, 1.0], atol=1e-12)


def test_svd_rank_one():
    rng = np.random.default_rng(31)
    u = rng.standard_normal(5)
    u /= np.linalg.norm(u)
    v = rng.standard_normal(4)
    v /= np.linalg.norm(v)
    _, s, _ = linalg.svd(np.outer(u, v))
    np.testing.assert_allclose(s, [1.0, 0.0, 0.0, 0.0], atol=1e-12)


@pytest.mark.parametrize("shape", [(6, 4), (4, 6), (5, 5)])
def test_svd_reconstruction(shape):
    rng = np.random.default_rng(32)
    m = rng.standard_normal(shape)
    u, s, v = linalg.svd(m)
    rel = np.linalg.norm(u @ np.diag(s) @ v.T - m) / np.linalg.norm(m)
    assert rel <= 1e-9
    assert np.all(np.diff(s) <= 1e-12)
    assert np.all(s >= 0)
    want = np.linalg.svd(m, compute_uv=False)
    np.testing.assert_allclose(s, want, atol=1e-9 * want[0])


def test_svd_zero_matrix():
    u, s, v = linalg.svd(np.zeros((3, 2)))
    np.testing.assert_allclose(s, [0.0, 0.0])
    # Completed columns are still orthonormal.
    np.testing.assert_allclose(u.T @ u, np.eye(2), atol=1e-12)


def test_svd_of_psd_matches_sym_eig():
    rng = np.random.default_rng(33)
    b = rng.standard_normal((10, 10))
    m = b @ b.T
    lam, _ = linalg.sym_eig(m)
    _, s, _ = linalg.svd(m)
    np.testing.assert_allclose(s, lam, atol=1e-9 * lam[0])


def test_pseudo_inverse_identity():
    np.testing.assert_allclose(linalg.pseudo_inverse(np.eye(4)), np.eye(4), atol=1e-12)


def test_pseudo_inverse_rank_deficient_diagonal():
    got = linalg.pseudo_inverse(np.diag([2.0, 0.0]))
    np.testing.assert_allclose(got, np.diag([0.5, 0.0]), atol=1e-12)


def test_pseudo_inverse_full_rank_product():
    rng = np.random.default_rng(41)
    m = rng.standard_normal((5, 5))
    assert np.linalg.norm(m @ linalg.pseudo_inverse(m) - np.eye(5)) <= 1e-8


def test_pseudo_inverse_moore_penrose_identities():
    rng = np.random.default_rng(42)
    for shape in [(8, 8), (12, 6), (6, 12), (64, 40)]:
        m = rng.standard_normal(shape)
        p = linalg.pseudo_inverse(m)
        assert np.linalg.norm(m @ p @ m - m) <= 1e-8 * np.linalg.norm(m)
        assert np.linalg.norm(p @ m @ p - p) <= 1e-8 * np.linalg.norm(p)
        assert np.linalg.norm((m @ p).T - m @ p) <= 1e-8
        assert np.linalg.norm((p @ m).T - p @ m) <= 1e-8


def test_pseudo_inverse_rejects_nonpositive_cutoff():
    with pytest.raises(ValueError):
        linalg.pseudo_inverse(np.eye(2), rel_cutoff=0.0)
