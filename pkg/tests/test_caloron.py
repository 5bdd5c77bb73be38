import numpy as np
import pytest

from bowmonad import caloron as cal, monadcore as mc, numkit as nk
from bowmonad.nahmbow import BuildRefused, NotInNormalForm


def mk(rows):
    return np.array(rows, dtype=complex)


def worked_example(**overrides):
    fields = dict(A=mk([[2]]), B=mk([[5]]), C=mk([[1, -3]]), D2row=mk([[1]]),
                  Aprime=mk([[3]]), Bprime=mk([[9]]), Cprime=mk([[1, 0]]))
    fields.update(overrides)
    return cal.CaloronData(1, 1, **fields)


def test_worked_example_validates():
    data = worked_example()
    assert np.allclose(data.D, [[3], [1]])
    assert np.allclose(data.monodromy, [[2, -3], [3, 0]])
    assert abs(np.linalg.det(data.monodromy) - 9) < 1e-12
    report = cal.validate(data)
    assert report.passed
    names = {c.name for c in report.checks}
    assert {"relation_1", "relation_2", "relation_3", "stacked_pencil_injective",
            "row_pencil_surjective", "mixed_pencil_surjective",
            "transport_invertible"} <= names


def test_relation2_violation():
    report = cal.validate(worked_example(Cprime=mk([[0, 0]])))
    assert not report.passed
    assert not report["relation_2"].passed
    assert abs(report["relation_2"].residual - 3.0) < 1e-12


def test_zero_D_breaks_injectivity():
    report = cal.validate(worked_example(D2row=mk([[0]]), Aprime=mk([[0]])))
    assert not report["stacked_pencil_injective"].passed
    cert = report["stacked_pencil_injective"].certificate
    xi, eta, _ = cert[0]
    assert abs(complex(*xi if isinstance(xi, list) else (xi.real, xi.imag)) - 2) < 1e-8


def test_build_refused_on_invalid_data():
    bad = worked_example(Cprime=mk([[0, 0]]))
    with pytest.raises(BuildRefused):
        cal.small_monad(bad)
    with pytest.raises(BuildRefused):
        cal.big_monad(bad)


def test_big_monad_polynomial_identity():
    data = worked_example()
    bm = cal.big_monad(data)
    assert bm.composite_residual() < 1e-14
    exact = cal.generate_caloron(2, 2, seed=6, exact=True)
    assert cal.big_monad(exact).composite_residual() == 0.0


def test_big_monad_refuses_m0():
    d0 = cal.generate_caloron(2, 0, seed=1)
    with pytest.raises(BuildRefused):
        cal.big_monad(d0)


def test_big_and_small_fibers_agree():
    data = worked_example()
    bm = cal.big_monad(data)
    sm = cal.small_monad(data)
    rng = np.random.default_rng(8)
    for pt in mc.random_chart_points(50, rng):
        assert mc.fiber_dim(bm.evaluate(pt)) == mc.fiber_dim(sm.evaluate(pt)) == 2


def test_fiber_pairing_between_big_and_small():
    """A fixed random pairing between the two fibers stays rank 2 across
    points (fiberwise isomorphism proxy)."""
    data = worked_example()
    bm, sm = cal.big_monad(data), cal.small_monad(data)
    rng = np.random.default_rng(9)
    n_big = bm.ranks[1]
    n_small = sm.ranks[1]
    pairing = rng.standard_normal((n_small, n_big)) + \
        1j * rng.standard_normal((n_small, n_big))
    for pt in mc.random_chart_points(50, rng):
        fb = mc.fiber(bm.evaluate(pt))
        fs = mc.fiber(sm.evaluate(pt))
        G = fs.basis.conj().T @ pairing @ fb.basis
        s = np.linalg.svd(G, compute_uv=False)
        assert s[1] > 1e-6 * max(s[0], 1.0)


def test_fiber_on_jumping_line():
    data = worked_example()
    bm = cal.big_monad(data)
    # eta in spec(B) = {5}
    assert mc.fiber_dim(bm.evaluate((0.7, 5.0))) == 2


def test_nahm_complex_monodromy_and_conjugation():
    data = worked_example()
    ncx = cal.to_nahm_complex(data)
    assert np.allclose(nk.to_float(ncx.monodromy), [[2, -3], [3, 0]])
    # left form conjugates onto the right-normal pattern
    assert cal.right_normal_residual(data) < 1e-10
    N = nk.to_float(data.monodromy)
    right = np.linalg.inv(N) @ nk.to_float(data.left_normal) @ N
    assert np.allclose(right, [[5, -9], [1, -1]])


def test_m0_jumps_are_rank_one_products():
    d0 = cal.generate_caloron(2, 0, seed=4)
    ncx = cal.to_nahm_complex(d0)
    jump = nk.to_float(ncx.beta_small) - nk.to_float(ncx.beta_large)
    want = nk.to_float(d0.C1) @ nk.to_float(d0.D)[0:1, :]
    assert np.max(np.abs(jump - want)) < 1e-12
    assert np.linalg.matrix_rank(jump, tol=1e-9) <= 1


def test_round_trip_exact_k1m1():
    data = worked_example()
    back = cal.from_nahm_complex(cal.to_nahm_complex(data))
    for name in ("A", "B", "C", "D2row", "Aprime", "Bprime", "Cprime"):
        assert np.max(np.abs(nk.to_float(getattr(back, name)) -
                             nk.to_float(getattr(data, name)))) < 1e-12


@pytest.mark.parametrize("k,m,seed", [(1, 1, 2), (2, 1, 8), (1, 2, 3),
                                      (2, 2, 5)])
def test_round_trip_invariants_float(k, m, seed):
    data = cal.generate_caloron(k, m, seed=seed)
    back = cal.from_nahm_complex(cal.to_nahm_complex(data))
    assert np.max(np.abs(np.poly(nk.to_float(back.B)) -
                         np.poly(nk.to_float(data.B)))) < 1e-8
    assert np.max(np.abs(np.poly(nk.to_float(back.monodromy)) -
                         np.poly(nk.to_float(data.monodromy)))) < 1e-8
    assert (back.k, back.m) == (k, m)


def test_round_trip_exact_backend():
    data = cal.generate_caloron(2, 1, seed=7, exact=True)
    back = cal.from_nahm_complex(cal.to_nahm_complex(data))
    assert nk.charpoly(back.B) == nk.charpoly(data.B)
    assert nk.charpoly(back.monodromy) == nk.charpoly(data.monodromy)


def test_round_trip_m0():
    data = cal.generate_caloron(2, 0, seed=4)
    back = cal.from_nahm_complex(cal.to_nahm_complex(data))
    for name in ("B0", "B1"):
        assert np.max(np.abs(np.poly(nk.to_float(getattr(back, name))) -
                             np.poly(nk.to_float(getattr(data, name))))) < 1e-9


def test_degenerate_m0_complex_refused_upstream():
    # equal endomorphisms with C = 0 fail gencon2 before any complex is built
    data = cal.CaloronDataM0(1, mk([[1]]), mk([[0]]), mk([[0, 0]]),
                             mk([[0], [1]]))
    assert not cal.validate(data)["row_pencil_surjective"].passed
    with pytest.raises(BuildRefused):
        cal.to_nahm_complex(data)


def test_not_in_normal_form():
    data = worked_example()
    ncx = cal.to_nahm_complex(data)
    ncx.beta_large = ncx.beta_large + 0.1 * np.eye(2)   # break the corner
    with pytest.raises(NotInNormalForm):
        cal.from_nahm_complex(ncx)


@pytest.mark.parametrize("k,m,seed", [(1, 0, 0), (1, 1, 1), (1, 2, 2),
                                      (2, 0, 3), (2, 1, 4), (2, 2, 5),
                                      (3, 0, 6)])
def test_generated_data_relations(k, m, seed):
    data = cal.generate_caloron(k, m, seed=seed)
    scale = max(nk.mat_norm(data.A), 1.0)
    for r in data.relation_residuals():
        assert nk.mat_norm(r) < 1e-12 * scale
    exact = cal.generate_caloron(k, m, seed=seed, exact=True)
    for r in exact.relation_residuals():
        assert nk.is_zero_matrix(r)


def test_gencon1_certificate_grid():
    """When validation passes, the stacked pencil keeps full column rank on
    the whole eigenvalue grid."""
    data = cal.generate_caloron(2, 1, seed=12)
    assert cal.validate(data).passed
    A, B, D = nk.to_float(data.A), nk.to_float(data.B), nk.to_float(data.D)
    for xi in np.linalg.eigvals(A):
        for eta in np.linalg.eigvals(B):
            S = np.vstack([A - xi * np.eye(2), B - eta * np.eye(2), D])
            s = np.linalg.svd(S, compute_uv=False)
            assert s[-1] > 1e-8 * s[0]
