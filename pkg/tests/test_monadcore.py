import numpy as np
import pytest

from bowmonad import caloron, monadcore as mc, numkit as nk, taubnut
from bowmonad.monadcore import (CURVE_CLASSES, HEXAGON_ORDER, Line,
                                principal_class, sections_on_line,
                                splitting_type)


def mk(rows):
    return np.array(rows, dtype=complex)


def k1_example():
    # A=1, B=0, C=(1,0), D=(0;1): the one-instanton normalization
    return caloron.CaloronDataM0(1, mk([[1]]), mk([[0]]), mk([[1, 0]]),
                                 mk([[0], [1]]))


def k1m1_taubnut():
    return taubnut.TaubNutData(1, 1, mk([[1]]), mk([[2]]), mk([[3]]),
                               mk([[1, -3]]), mk([[1]]), mk([[3]]),
                               mk([[21]]), mk([[1, 0]]))


# ---------------------------------------------------------------------------
# Picard lattice


def test_hexagon_intersections():
    for i, name in enumerate(HEXAGON_ORDER):
        c = CURVE_CLASSES[name]
        assert c.intersect(c) == -1
        nxt = CURVE_CLASSES[HEXAGON_ORDER[(i + 1) % 6]]
        assert c.intersect(nxt) == 1
        # non-neighbors miss each other
        for j in range(6):
            other = CURVE_CLASSES[HEXAGON_ORDER[j]]
            want = -1 if j == i else (1 if abs(j - i) in (1, 5) else 0)
            assert c.intersect(other) == want


def test_principal_divisors_vanish():
    for fn in ("eta", "xi", "psi"):
        assert principal_class(fn).is_zero()


def test_line_classes():
    b = mc.LINE_CLASSES["B_eta"]
    lxi = mc.LINE_CLASSES["L_xi"]
    lpsi = mc.LINE_CLASSES["L_psi"]
    assert b.intersect(b) == 0 and lxi.intersect(lxi) == 0
    assert lpsi.intersect(lpsi) == 0
    assert b.intersect(lxi) == 1 and b.intersect(lpsi) == 1


# ---------------------------------------------------------------------------
# evaluation and fibers


def test_evaluate_hand_expansion():
    sm = caloron.small_monad(k1_example())
    m = sm.evaluate((2.0, 3.0))
    assert np.allclose(m.alpha.ravel(), [-1, -3, 0, 1])
    assert np.allclose(m.beta.ravel(), [3, -1, 1, 0])
    assert m.residual == 0.0


def test_evaluate_exact_taubnut():
    d = taubnut.TaubNutData(
        1, 1, nk.exact_matrix([[1]]), nk.exact_matrix([[2]]),
        nk.exact_matrix([[3]]), nk.exact_matrix([[1, -3]]),
        nk.exact_matrix([[1]]), nk.exact_matrix([[3]]),
        nk.exact_matrix([[21]]), nk.exact_matrix([[1, 0]]))
    bm = taubnut._big_monad_unchecked(d)
    m = bm.evaluate((nk.GQ(1), nk.GQ(1)))
    assert m.residual == 0.0


def test_composite_vanishes_definitionally():
    sm = caloron.small_monad(k1_example())
    rng = np.random.default_rng(0)
    for _ in range(20):
        pt = tuple(rng.standard_normal(2) + 1j * rng.standard_normal(2))
        assert sm.evaluate(pt).residual < 1e-14


def test_fiber_k1_and_empty_monad():
    sm = caloron.small_monad(k1_example())
    assert mc.fiber(sm.evaluate((2.0, 3.0))).dim == 2
    # k = 0: empty blocks, trivial rank-2 middle
    empty = mc.ParamMonad(
        "xi_eta",
        ([], [mc.BlockSpec("W", mc.o_pp(0, 0), 2)], []),
        mc.PolyMatrix((2, 0)), mc.PolyMatrix((0, 2)))
    m = empty.evaluate((0.3, 0.7))
    assert mc.fiber(m).dim == 2


def test_fiber_exact_sweep():
    d = taubnut.generate_taubnut(1, 1, seed=5, exact=True)
    bm = taubnut._big_monad_unchecked(d)
    rng = np.random.default_rng(7)
    for _ in range(20):
        num = [nk.GQ(int(rng.integers(-9, 10)), int(rng.integers(-9, 10)))
               for _ in range(2)]
        den = nk.GQ(int(rng.integers(1, 5)))
        pt = (num[0] / den, num[1] / den)
        m = bm.evaluate(pt)
        assert m.residual == 0.0
        assert mc.fiber(m).dim == 2


def test_chart_mismatch():
    sm = caloron.small_monad(k1_example())
    with pytest.raises(mc.ChartMismatch):
        sections_on_line(sm, Line("L_psi", 1.0), 0)
    with pytest.raises(mc.ChartMismatch):
        Line("bogus", 1.0)


# ---------------------------------------------------------------------------
# sections and splitting


def trivial_rank2():
    return mc.ParamMonad(
        "xi_eta", ([], [mc.BlockSpec("W", mc.o_pp(0, 0), 2)], []),
        mc.PolyMatrix((2, 0)), mc.PolyMatrix((0, 2)))


def test_sections_trivial_bundle():
    pm = trivial_rank2()
    assert sections_on_line(pm, Line("B_eta", 1.3), -1).dimension == 0
    assert sections_on_line(pm, Line("B_eta", 1.3), 0).dimension == 2


def test_sections_jumping_line_k1():
    sm = caloron.small_monad(k1_example())
    # eta = 0 is the single root of det(eta - B)
    s = sections_on_line(sm, Line("B_eta", 0.0), -1)
    assert s.dimension >= 1
    for v in s.basis:
        assert np.linalg.norm(v) > 0


def test_splitting_types_caloron():
    sm = caloron.small_monad(k1_example())
    assert splitting_type(sm, Line("B_eta", 0.0)) == (1, -1)
    assert splitting_type(sm, Line("B_eta", 2.3)) == (0, 0)
    assert splitting_type(sm, Line("B_eta", -1.0 + 0.5j)) == (0, 0)


def test_splitting_types_k2():
    d = caloron.generate_caloron(2, 1, seed=13)
    sm = caloron.small_monad(d)
    evs = np.linalg.eigvals(nk.to_float(d.B))
    assert abs(evs[0] - evs[1]) > 0.5
    for ev in evs:
        assert splitting_type(sm, Line("B_eta", complex(ev))) == (1, -1)
    rng = np.random.default_rng(11)
    checked = 0
    while checked < 50:
        z = complex(rng.standard_normal() * 3 + 1j * rng.standard_normal() * 3)
        if min(abs(z - e) for e in evs) < 0.3:
            continue
        assert splitting_type(sm, Line("B_eta", z)) == (0, 0)
        checked += 1


def test_splitting_types_taubnut_h1_piece():
    """On the blown-up chart the twisted-down count comes entirely from the
    first-cohomology correction; it must still see exactly the B0 spectrum."""
    bm = taubnut._big_monad_unchecked(k1m1_taubnut())
    s = sections_on_line(bm, Line("B_eta", 6.0), -1)
    assert s.dimension == 1 and s.h1_dim == 1
    assert splitting_type(bm, Line("B_eta", 6.0)) == (1, -1)
    assert splitting_type(bm, Line("B_eta", 1.9)) == (0, 0)


def test_sections_other_rulings():
    bm = taubnut._big_monad_unchecked(k1m1_taubnut())
    for kind, val in (("L_xi", 1.3), ("L_psi", 0.8)):
        assert sections_on_line(bm, Line(kind, val), 0).dimension == 2
        assert sections_on_line(bm, Line(kind, val), -1).dimension == 0


def test_fiber_dim_constant_sweep():
    d = taubnut.generate_taubnut(2, 1, seed=4)
    bm = taubnut._big_monad_unchecked(d)
    rng = np.random.default_rng(3)
    dims = {mc.fiber_dim(bm.evaluate(p))
            for p in mc.random_chart_points(50, rng)}
    assert dims == {2}
