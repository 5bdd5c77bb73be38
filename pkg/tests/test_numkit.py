import numpy as np
import pytest

from bowmonad import numkit as nk
from bowmonad.numkit import GQ, ToleranceContext


def test_gaussian_rational_field_ops():
    a, b = GQ(1, 2), GQ(3, -1)
    assert a + b == GQ(4, 1)
    assert a * b == GQ(5, 5)
    assert (a * b) / b == a
    assert a - a == GQ(0)
    assert -a == GQ(-1, -2)
    assert a ** 3 == a * a * a
    assert a.conjugate() == GQ(1, -2)
    with pytest.raises(ZeroDivisionError):
        a / GQ(0)


def test_rank_kernel_identity():
    rk = nk.rank_kernel(np.eye(3, dtype=complex))
    assert rk.rank == 3
    assert rk.kernel.shape == (3, 0)
    assert rk.cokernel.shape == (3, 0)


def test_rank_kernel_zero_matrix():
    rk = nk.rank_kernel(np.zeros((2, 3), dtype=complex))
    assert rk.rank == 0
    assert rk.kernel.shape == (3, 3)


def test_rank_kernel_hand_example():
    # hand row reduction: [[1,2],[2,4]] has rank 1, kernel along (2, -1)
    rk = nk.rank_kernel(np.array([[1, 2], [2, 4]], dtype=complex))
    assert rk.rank == 1
    v = rk.kernel[:, 0]
    assert abs(v[0] / v[1] + 2) < 1e-12

    rk_e = nk.rank_kernel(nk.exact_matrix([[1, 2], [2, 4]]))
    assert rk_e.rank == 1
    v = rk_e.kernel[:, 0]
    assert v[0] / v[1] == GQ(-2)


def test_rank_transpose_and_nullity():
    rng = np.random.default_rng(0)
    for _ in range(20):
        m, n = rng.integers(1, 6, size=2)
        M = rng.integers(-5, 6, size=(m, n)).astype(complex)
        rk = nk.rank_kernel(M)
        rkt = nk.rank_kernel(M.T.copy())
        assert rk.rank == rkt.rank
        assert rk.rank + rk.kernel.shape[1] == n


def test_exact_and_float_ranks_agree():
    rng = np.random.default_rng(1)
    for _ in range(30):
        m, n = rng.integers(1, 6, size=2)
        Mi = rng.integers(-1000, 1001, size=(m, n))
        # force occasional rank deficiency
        if rng.random() < 0.4 and m > 1:
            Mi[-1] = Mi[0] * int(rng.integers(-3, 4))
        rank_f = nk.rank_kernel(Mi.astype(complex)).rank
        rank_e = nk.rank_kernel(nk.exact_matrix(Mi.tolist())).rank
        assert rank_f == rank_e


def test_gap_too_small():
    M = np.diag([1.0, 2e-10, 5e-11]).astype(complex)
    with pytest.raises(nk.GapTooSmall):
        nk.rank_kernel(M, ToleranceContext(rank_tol=1e-10, gap_factor=1e3))


def test_common_eigenvector_k1_no_kernel():
    obs = nk.common_eigenvector_obstruction(
        np.array([[2.0 + 0j]]), np.array([[5.0 + 0j]]),
        np.array([[3.0], [1.0]], dtype=complex))
    assert obs == []


def test_common_eigenvector_diagonal():
    obs = nk.common_eigenvector_obstruction(
        np.diag([1.0, 1.0]).astype(complex), np.diag([2.0, 3.0]).astype(complex),
        np.zeros((2, 2), dtype=complex))
    found = sorted((round(o.xi.real), round(o.eta.real)) for o in obs)
    assert found == [(1, 2), (1, 3)]


def test_common_eigenvector_jordan_block():
    A = np.array([[0, 1], [0, 0]], dtype=complex)
    B = np.eye(2, dtype=complex)
    D = np.array([[0, 1], [0, 0]], dtype=complex)
    obs = nk.common_eigenvector_obstruction(A, B, D)
    assert len(obs) == 1
    o = obs[0]
    assert abs(o.xi) < 1e-10 and abs(o.eta - 1) < 1e-10
    assert abs(abs(o.vector[0]) - 1) < 1e-10


def test_common_eigenvector_exact_certificate():
    A = nk.exact_matrix([[0, 1], [0, 0]])
    B = nk.exact_eye(2)
    D = nk.exact_matrix([[0, 1], [0, 0]])
    obs = nk.common_eigenvector_obstruction(A, B, D)
    assert len(obs) == 1 and obs[0].exact_checked


def test_obstruction_agrees_with_sampling():
    """Emptiness of the obstruction list must agree with full column rank of
    the stacked pencil at random samples and on the eigenvalue grid."""
    rng = np.random.default_rng(3)
    for trial in range(6):
        k = int(rng.integers(1, 4))
        A = rng.integers(-3, 4, (k, k)).astype(complex)
        B = rng.integers(-3, 4, (k, k)).astype(complex)
        D = rng.integers(-2, 3, (2, k)).astype(complex)
        if trial % 2 == 0:
            D[:] = 0  # force failures at every joint eigenvalue
        obs = nk.common_eigenvector_obstruction(A, B, D)
        full_rank = True
        for xi in np.linalg.eigvals(A):
            for eta in np.linalg.eigvals(B):
                S = np.vstack([A - xi * np.eye(k), B - eta * np.eye(k), D])
                s = np.linalg.svd(S, compute_uv=False)
                if s[-1] < 1e-9 * max(s[0], 1.0):
                    full_rank = False
        for _ in range(200):
            xi, eta = rng.standard_normal(2) + 1j * rng.standard_normal(2)
            S = np.vstack([A - xi * np.eye(k), B - eta * np.eye(k), D])
            s = np.linalg.svd(S, compute_uv=False)
            if s[-1] < 1e-9 * max(s[0], 1.0):
                full_rank = False
        assert (len(obs) == 0) == full_rank


def test_pencil_invertible_square_is_empty():
    Y = np.array([[2, -3], [3, 0]], dtype=complex)
    Z0 = np.array([[1, 0], [0, -5]], dtype=complex)
    Z1 = np.eye(2, dtype=complex)
    assert nk.pencil_surjectivity_failures(Y, Z0, Z1) == []


def test_pencil_single_failure():
    Y = np.array([[1.0], [0.0]], dtype=complex)
    Z0 = np.array([[0.0], [-3.0]], dtype=complex)
    Z1 = np.array([[0.0], [1.0]], dtype=complex)
    fails = nk.pencil_surjectivity_failures(Y, Z0, Z1)
    assert len(fails) == 1 and abs(fails[0] - 3) < 1e-7


def test_pencil_degenerate():
    Y = np.zeros((2, 1), dtype=complex)
    Z = np.zeros((2, 1), dtype=complex)
    with pytest.raises(nk.DegeneratePencil):
        nk.pencil_surjectivity_failures(Y, Z, Z)


def test_quotient_trivial_image():
    K = np.eye(2, dtype=complex)
    reps = nk.quotient_representatives(K, np.zeros((2, 0), dtype=complex))
    assert reps.shape == (2, 2)


def test_quotient_coordinate_case():
    K = np.eye(3, dtype=complex)[:, :2]
    I = np.eye(3, dtype=complex)[:, :1]
    reps = nk.quotient_representatives(K, I)
    assert reps.shape == (3, 1)
    v = reps[:, 0]
    assert abs(v[1]) > 0.99 and abs(v[0]) < 1e-10 and abs(v[2]) < 1e-10


def test_quotient_not_contained():
    K = np.eye(3, dtype=complex)[:, :1]
    I = np.eye(3, dtype=complex)[:, 1:2]
    with pytest.raises(nk.ImageNotContained):
        nk.quotient_representatives(K, I)


def test_exact_quotient():
    K = nk.exact_matrix([[1, 0], [0, 1], [0, 0]])
    I = nk.exact_matrix([[1], [0], [0]])
    reps = nk.quotient_representatives(K, I)
    assert reps.shape == (3, 1)


def test_exact_charpoly_and_det():
    M = nk.exact_matrix([[2, -3], [3, 0]])
    cp = nk.charpoly(M)
    assert cp == [GQ(1), GQ(-2), GQ(9)]
    assert nk.exact_det(M) == GQ(9)


def test_exact_solve():
    A = nk.exact_matrix([[2, 1], [1, 1]])
    b = nk.exact_matrix([[3], [2]])
    x = nk.exact_solve(A, b)
    assert x[0, 0] == GQ(1) and x[1, 0] == GQ(1)
    # inconsistent system
    A2 = nk.exact_matrix([[1, 1], [1, 1]])
    b2 = nk.exact_matrix([[0], [1]])
    assert nk.exact_solve(A2, b2) is None
