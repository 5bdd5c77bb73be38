"""Analytic side: Nahm flows, boundary data, bow complexes, spectral curves
and the reduction of a bow solution to a finite monad.

Conventions (fixed once, enforced by tests):

* Flow:  i dT_i/ds = (1/2) sum_jk eps_ijk [T_j, T_k], i.e.
  dT1/ds = -i [T2, T3] and cyclic; the T_i stay Hermitian.
* Residue triples rho with T_i = rho_i / s an exact solution satisfy
  [rho_1, rho_2] = -i rho_3 and cyclic; Casimir sum rho_i^2 = (m^2-1)/4.
* Lax matrix A(zeta, s) = T1 + i T2 - 2 T3 zeta - (T1 - i T2) zeta^2; its
  characteristic polynomial is constant along the flow.
* Holomorphic reduction: beta = T1 + i T2, connection d/ds + alpha with
  alpha = -T3 (T0 = 0 gauge), so that d(beta)/ds + [alpha, beta] = 0.
* Bow complexes store the middle endomorphism in the normal frame at the
  right lambda point; the middle transport conjugates the left-end form to
  it.  Rank-one jump data at the lambda points is stored with the
  convention  (outer beta) - (middle beta) = I . J  at both points.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import numkit as nk
from .monadcore import BlockSpec, MonadAtPoint, ParamMonad, PolyMatrix
from .numkit import DEFAULT_CTX, ToleranceContext, ValidationReport


class StepTooCoarse(Exception):
    pass


class PoleProximity(Exception):
    pass


class TransportSingular(Exception):
    pass


class InterpolationIllConditioned(Exception):
    pass


class NotInNormalForm(Exception):
    pass


class BuildRefused(Exception):
    pass


# ---------------------------------------------------------------------------
# representation data


@dataclass(frozen=True)
class BowRepresentation:
    """One interval of length ell with an edge joining its ends, marked
    points at +-lam, ranks k (outer) and k+m (middle)."""

    ell: float = 1.0
    lam: float = 0.25
    k: int = 1
    m: int = 0

    def __post_init__(self):
        if not (0.0 < self.lam < self.ell / 2):
            raise ValueError("lambda must sit strictly inside (0, ell/2)")

    @property
    def lam_minus(self):
        return -self.lam

    @property
    def lam_plus(self):
        return self.lam

    def intervals(self):
        h, t = -self.ell / 2, self.ell / 2
        return [(h, -self.lam, self.k), (-self.lam, self.lam, self.k + self.m),
                (self.lam, t, self.k)]


def su2_irrep(m: int):
    """Hermitian triple (rho1, rho2, rho3) of the m-dimensional irreducible
    representation, normalized so that T_i = rho_i/s solves the flow:
    [rho1, rho2] = -i rho3 and cyclic, Casimir = (m^2 - 1)/4."""
    if m < 1:
        raise ValueError("m >= 1")
    if m == 1:
        z = np.zeros((1, 1), dtype=complex)
        return (z, z.copy(), z.copy())
    if m == 2:
        s1 = np.array([[0, 1], [1, 0]], dtype=complex)
        s2 = np.array([[0, -1j], [1j, 0]], dtype=complex)
        s3 = np.array([[1, 0], [0, -1]], dtype=complex)
        return (s1 / 2, -s2 / 2, s3 / 2)
    if m == 3:
        L1 = np.array([[0, 0, 0], [0, 0, -1j], [0, 1j, 0]], dtype=complex)
        L2 = np.array([[0, 0, 1j], [0, 0, 0], [-1j, 0, 0]], dtype=complex)
        L3 = np.array([[0, -1j, 0], [1j, 0, 0], [0, 0, 0]], dtype=complex)
        return (L1, -L2, L3)
    j = (m - 1) / 2.0
    mm = j - np.arange(m)
    J3 = np.diag(mm).astype(complex)
    Jp = np.zeros((m, m), dtype=complex)
    for i in range(m - 1):
        Jp[i, i + 1] = np.sqrt(j * (j + 1) - mm[i + 1] * (mm[i + 1] + 1))
    Jm = Jp.conj().T
    J1 = (Jp + Jm) / 2
    J2 = (Jp - Jm) / (2j)
    return (J1, -J2, J3)


# ---------------------------------------------------------------------------
# Lax matrices and flows


def lax(T1, T2, T3, zeta: complex) -> np.ndarray:
    return T1 + 1j * T2 - 2 * zeta * T3 - (T1 - 1j * T2) * zeta ** 2


def nahm_rhs(T1, T2, T3):
    c = lambda X, Y: X @ Y - Y @ X
    return (-1j * c(T2, T3), -1j * c(T3, T1), -1j * c(T1, T2))


@dataclass
class Segment:
    """Sampled Nahm triple on [s0, s1]; linear interpolation in between."""

    s0: float
    s1: float
    rank: int
    s_grid: np.ndarray
    T1: np.ndarray       # (n, rank, rank)
    T2: np.ndarray
    T3: np.ndarray
    constant: bool = False
    drift: float = 0.0

    def at(self, s: float):
        if self.constant:
            return self.T1[0], self.T2[0], self.T3[0]
        s = min(max(s, self.s_grid[0]), self.s_grid[-1])
        i = int(np.searchsorted(self.s_grid, s)) - 1
        i = min(max(i, 0), len(self.s_grid) - 2)
        w = (s - self.s_grid[i]) / (self.s_grid[i + 1] - self.s_grid[i])
        return tuple((1 - w) * T[i] + w * T[i + 1]
                     for T in (self.T1, self.T2, self.T3))

    def beta_at(self, s: float):
        t1, t2, _ = self.at(s)
        return t1 + 1j * t2

    def alpha_at(self, s: float):
        return -self.at(s)[2]


def constant_segment(s0, s1, T1, T2, T3, samples: int = 2) -> Segment:
    grid = np.linspace(s0, s1, samples)
    mk = lambda T: np.repeat(np.asarray(T, dtype=complex)[None, :, :], samples, 0)
    return Segment(s0, s1, T1.shape[0], grid, mk(T1), mk(T2), mk(T3),
                   constant=True)


def flow(T1, T2, T3, s0: float, s1: float, step: float,
         zeta_checks=(0.0, 0.5, -1.0, 1j, 2.0), drift_tol: float = 1e-6,
         lam_points=(), pole_guard: float = 0.0) -> Segment:
    """RK4 integration of the flow on [s0, s1]; characteristic coefficients
    of the Lax matrix are monitored at the given zeta samples and a drift
    beyond drift_tol raises StepTooCoarse."""
    if step <= 0:
        raise ValueError("step must be positive")
    for lam in lam_points:
        if s0 - pole_guard < lam < s1 + pole_guard:
            raise PoleProximity(f"interval [{s0}, {s1}] crosses {lam}")
    n = max(2, int(np.ceil((s1 - s0) / step)) + 1)
    grid = np.linspace(s0, s1, n)
    h = grid[1] - grid[0]
    r = T1.shape[0]
    out = [np.zeros((n, r, r), dtype=complex) for _ in range(3)]
    cur = [np.asarray(T, dtype=complex) for T in (T1, T2, T3)]
    ref = [np.poly(lax(*cur, z)) for z in zeta_checks]
    for i, s in enumerate(grid):
        for T, buf in zip(cur, out):
            buf[i] = T
        if i == n - 1:
            break
        k1 = nahm_rhs(*cur)
        k2 = nahm_rhs(*(T + h / 2 * K for T, K in zip(cur, k1)))
        k3 = nahm_rhs(*(T + h / 2 * K for T, K in zip(cur, k2)))
        k4 = nahm_rhs(*(T + h * K for T, K in zip(cur, k3)))
        cur = [T + h / 6 * (K1 + 2 * K2 + 2 * K3 + K4)
               for T, K1, K2, K3, K4 in zip(cur, k1, k2, k3, k4)]
        if not all(np.isfinite(T).all() for T in cur):
            raise StepTooCoarse(
                f"flow left the finite regime near s = {grid[i + 1]:.4f} "
                "(pole hit or step too large)")
    drift = max(np.max(np.abs(np.poly(lax(*cur, z)) - c0))
                for z, c0 in zip(zeta_checks, ref))
    if drift > drift_tol:
        raise StepTooCoarse(f"isospectral drift {drift:.2e} > {drift_tol:.0e}")
    seg = Segment(s0, s1, r, grid, *out)
    seg.drift = drift
    return seg


def isospectral_drift(seg: Segment, zetas) -> float:
    """Max char-poly coefficient drift along a sampled segment."""
    worst = 0.0
    for z in zetas:
        ref = np.poly(lax(seg.T1[0], seg.T2[0], seg.T3[0], z))
        for i in range(len(seg.s_grid)):
            c = np.poly(lax(seg.T1[i], seg.T2[i], seg.T3[i], z))
            worst = max(worst, float(np.max(np.abs(c - ref))))
    return worst


# ---------------------------------------------------------------------------
# bow solutions


@dataclass
class NahmSolution:
    """Piecewise flow data on the bow with the boundary decorations.

    segments: head [-ell/2, -lam] rank k, middle [-lam, lam] rank k+m,
    tail [lam, ell/2] rank k.  i_minus/i_plus are (k+m) x k isometric
    embeddings of the outer fibers into the middle fiber at the lambda
    points.  For m = 0 the fundamental pairs (I, J) at each lambda point are
    stored with the sign conventions of the unitary jump identities
    A^1 - A^0 = (I- - J-^dag z)(J- + I-^dag z) at lam_minus and
    A^0 - A^1 = (I+ - J+^dag z)(J+ + I+^dag z) at lam_plus.
    """

    rep: BowRepresentation
    head: Segment
    middle: Segment
    tail: Segment
    Bth: np.ndarray
    Bht: np.ndarray
    i_minus: np.ndarray | None = None
    i_plus: np.ndarray | None = None
    I_minus: np.ndarray | None = None   # m = 0 only, shape (k, 1)
    J_minus: np.ndarray | None = None   # (1, k)
    I_plus: np.ndarray | None = None
    J_plus: np.ndarray | None = None
    # highest-weight trivialization phase, normalized to 1; only the
    # residual U(1) freedom lives here
    hw_phase: complex = 1.0
    # asymptotic instanton parameters have no finite home in the bow data;
    # they ride along as optional metadata and are never computed
    asymptotics: dict | None = None

    def __post_init__(self):
        k, m = self.rep.k, self.rep.m
        if self.i_minus is None:
            self.i_minus = np.eye(k + m, k, dtype=complex)
        if self.i_plus is None:
            self.i_plus = np.eye(k + m, k, dtype=complex)

    @property
    def k(self):
        return self.rep.k

    @property
    def m(self):
        return self.rep.m

    def segment_at(self, s: float) -> Segment:
        if s <= self.rep.lam_minus:
            return self.head
        if s < self.rep.lam_plus:
            return self.middle
        return self.tail


def solution_k1_m0(rep: BowRepresentation, Bth: complex, Bht: complex,
                   j_minus: complex = 1.0, samples: int = 33) -> NahmSolution:
    """Closed-form rank-one bow solution.

    The outer triple is pinned by the bifundamental identities; all jumps of
    beta vanish (forced at k = 1), the inner T3 is displaced by the
    fundamental data, and the scalar flow is stationary.
    """
    if rep.k != 1 or rep.m != 0:
        raise ValueError("k = 1, m = 0 generator")
    z = Bth * Bht
    t = np.array([z.real, z.imag, (abs(Bth) ** 2 - abs(Bht) ** 2) / 2.0])
    u3 = t[2] + abs(j_minus) ** 2 / 2.0
    mk = lambda v: np.array([[v]], dtype=complex)
    lm, lp = rep.lam_minus, rep.lam_plus
    head = constant_segment(-rep.ell / 2, lm, mk(t[0]), mk(t[1]), mk(t[2]), samples)
    mid = constant_segment(lm, lp, mk(t[0]), mk(t[1]), mk(u3), samples)
    tail = constant_segment(lp, rep.ell / 2, mk(t[0]), mk(t[1]), mk(t[2]), samples)
    return NahmSolution(rep, head, mid, tail, mk(Bth), mk(Bht),
                        I_minus=mk(0.0), J_minus=mk(j_minus),
                        I_plus=mk(abs(j_minus)), J_plus=mk(0.0))


def solution_k1_m1(rep: BowRepresentation, mu1, mu2, weight: float = 0.5,
                   axis_phase: float = 0.9, edge_phase: float = 0.3,
                   samples: int = 33) -> NahmSolution:
    """Closed-form k=1, m=1 bow solution with a commuting constant middle.

    mu1, mu2 are the two real eigenvalue triples of the middle; the outer
    value is their weight / (1-weight) mixture, realized by unit vectors
    v_minus, v_plus with the same overlap against the joint eigenbasis.
    """
    if rep.k != 1 or rep.m != 1:
        raise ValueError("k = 1, m = 1 generator")
    mu1 = np.asarray(mu1, float)
    mu2 = np.asarray(mu2, float)
    w = float(weight)
    if not 0 < w < 1:
        raise ValueError("weight in (0, 1)")
    t = w * mu1 + (1 - w) * mu2
    u = np.array([1.0, 0.0], dtype=complex)
    uperp = np.array([0.0, 1.0], dtype=complex)
    Tmid = [np.diag([mu1[i], mu2[i]]).astype(complex) for i in range(3)]
    v_minus = np.sqrt(w) * u + np.sqrt(1 - w) * uperp
    v_plus = np.sqrt(w) * u + np.sqrt(1 - w) * np.exp(1j * axis_phase) * uperp
    z = t[0] + 1j * t[1]
    if abs(z) < 1e-12:
        raise ValueError("degenerate edge: Bth*Bht would vanish")
    x = t[2] + np.sqrt(t[2] ** 2 + abs(z) ** 2)
    Bth = np.sqrt(x) * np.exp(1j * edge_phase)
    Bht = z / Bth
    mk = lambda v: np.array([[v]], dtype=complex)
    lm, lp = rep.lam_minus, rep.lam_plus
    head = constant_segment(-rep.ell / 2, lm, mk(t[0]), mk(t[1]), mk(t[2]), samples)
    mid = constant_segment(lm, lp, *Tmid, samples)
    tail = constant_segment(lp, rep.ell / 2, mk(t[0]), mk(t[1]), mk(t[2]), samples)
    im = np.stack([v_minus]).T
    ip = np.stack([v_plus]).T
    return NahmSolution(rep, head, mid, tail, mk(Bth), mk(Bht),
                        i_minus=im, i_plus=ip)


def diagonal_solution(rep: BowRepresentation, points, samples: int = 17) -> Segment:
    """Stationary diagonal flow on one interval: each diagonal entry is a
    fixed point of R^3, so commutators vanish and the curve factors into the
    corresponding twistor lines.  Used for curve tests, not a bow solution."""
    pts = np.asarray(points, dtype=float)
    k = pts.shape[0]
    T = [np.diag(pts[:, i]).astype(complex) for i in range(3)]
    return constant_segment(-rep.lam, rep.lam, *T, samples)


# ---------------------------------------------------------------------------
# boundary report


def _zeta_coeffs_of_product(L, R):
    """(L0 + z L1)(R0 + z R1) -> coefficients of z^0, z^1, z^2."""
    (L0, L1), (R0, R1) = L, R
    return (L0 @ R0, L0 @ R1 + L1 @ R0, L1 @ R1)


def check_boundary(sol: NahmSolution, ctx: ToleranceContext = DEFAULT_CTX,
                   fit_eps: float | None = None) -> ValidationReport:
    """Residuals of the bifundamental end identities, the fundamental data
    at the lambda points, Hermiticity, and (m > 1) the pole residue fit."""
    rep = sol.rep
    report = ValidationReport()
    k, m = rep.k, rep.m

    herm = 0.0
    for seg in (sol.head, sol.middle, sol.tail):
        for T in (seg.T1, seg.T2, seg.T3):
            herm = max(herm, float(np.max(np.abs(T - np.conj(np.transpose(
                T, (0, 2, 1)))))))
    report.add("hermiticity", herm < 1e-10, herm)

    # bifundamental: A0(z, ell/2) = (Bth + z Bht^d)(Bht - z Bth^d)
    #                A0(z, -ell/2) = (Bht - z Bth^d)(Bth + z Bht^d)
    Bth, Bht = sol.Bth, sol.Bht
    for name, seg, s, prod in (
            ("bifundamental_tail", sol.tail, rep.ell / 2,
             ((Bth, Bht.conj().T), (Bht, -Bth.conj().T))),
            ("bifundamental_head", sol.head, -rep.ell / 2,
             ((Bht, -Bth.conj().T), (Bth, Bht.conj().T)))):
        t1, t2, t3 = seg.at(s)
        want = (t1 + 1j * t2, -2 * t3, -(t1 - 1j * t2))
        got = _zeta_coeffs_of_product(*prod)
        res = max(float(np.max(np.abs(w - g))) for w, g in zip(want, got))
        report.add(name, res < 1e-10, res)

    if m == 0:
        for name, s, pair, sign in (
                ("fundamental_minus", rep.lam_minus, (sol.I_minus, sol.J_minus), +1),
                ("fundamental_plus", rep.lam_plus, (sol.I_plus, sol.J_plus), -1)):
            I, J = pair
            inner = sol.middle.at(s)
            outer = (sol.head if sign > 0 else sol.tail).at(s)
            # sign > 0: A^1 - A^0 at lam_minus; sign < 0: A^1 - A^0 = -(...)
            diff = [sign * (i - o) for i, o in zip(inner, outer)]
            want = (diff[0] + 1j * diff[1], -2 * diff[2], -(diff[0] - 1j * diff[1]))
            got = _zeta_coeffs_of_product((I, -J.conj().T), (J, I.conj().T))
            res = max(float(np.max(np.abs(w - g))) for w, g in zip(want, got))
            report.add(name, res < 1e-10, res)
    else:
        # continuing components match across the lambda points
        for name, s, outer_seg, emb in (
                ("continuing_minus", rep.lam_minus, sol.head, sol.i_minus),
                ("continuing_plus", rep.lam_plus, sol.tail, sol.i_plus)):
            res = 0.0
            for Ti, To in zip(sol.middle.at(s), outer_seg.at(s)):
                res = max(res, float(np.max(np.abs(
                    emb.conj().T @ Ti @ emb - To))))
            report.add(name, res < 1e-8, res)
        if m >= 2:
            eps = fit_eps if fit_eps is not None else 1e-3 * rep.ell
            for name, lam, side in (("pole_fit_minus", rep.lam_minus, +1),
                                    ("pole_fit_plus", rep.lam_plus, -1)):
                rho, res = fit_pole_residues(sol.middle, lam, side * eps)
                ok, ures = residues_match_irrep(rho, m)
                report.add(name, ok and res < 1e-4, max(res, ures))
    return report


def fit_pole_residues(seg: Segment, lam: float, eps: float):
    """Least-squares fit T_i(s) ~ rho_i/(s-lam) + c_i from samples at
    distances {2, 4, 8} eps on the side of the sign of eps."""
    ds = np.array([2 * eps, 4 * eps, 8 * eps])
    rho, residual = [], 0.0
    for comp in range(3):
        vals = np.stack([seg.at(lam + d)[comp] for d in ds])
        A = np.stack([1.0 / ds, np.ones_like(ds)], axis=1)
        sol, res, *_ = np.linalg.lstsq(A, vals.reshape(3, -1), rcond=None)
        rho.append(sol[0].reshape(vals.shape[1:]))
        fit = A @ sol
        residual = max(residual, float(np.max(np.abs(fit - vals.reshape(3, -1)))))
    return rho, residual


def residues_match_irrep(rho, m: int):
    """Unitary equivalence of a fitted residue triple with su2_irrep(m) on
    its nonzero block; returns (ok, residual)."""
    want = su2_irrep(m)
    got = [np.asarray(r) for r in rho]
    n = got[0].shape[0]
    # restrict to the m-dimensional block actually carrying the residues
    norms = np.array([max(np.linalg.norm(r[i]) for r in
                          [np.abs(g) for g in got]) for i in range(n)])
    idx = np.argsort(-norms)[:m]
    idx = np.sort(idx)
    sub = [g[np.ix_(idx, idx)] for g in got]
    # intertwiner: want_i V = V sub_i for all i
    rows = []
    for w, s in zip(want, sub):
        rows.append(np.kron(np.eye(m), w) - np.kron(s.T, np.eye(m)))
    null = nk.rank_kernel(np.vstack(rows)).kernel
    if null.shape[1] == 0:
        return False, np.inf
    V = null[:, 0].reshape(m, m, order="F")
    if np.linalg.cond(V) > 1e8:
        return False, np.inf
    V = V / np.linalg.norm(V) * np.sqrt(m)
    res = max(float(np.max(np.abs(V @ s @ np.linalg.inv(V) - w)))
              for w, s in zip(want, sub))
    return res < 1e-5, res


# ---------------------------------------------------------------------------
# spectral curves


@dataclass
class SpectralCurve:
    rank: int
    coeffs: dict            # {(i, j): complex} for eta^i zeta^j
    s_drift: float = 0.0

    def grading_ok(self, tol: float = 1e-8) -> bool:
        for (i, j), c in self.coeffs.items():
            if j > 2 * (self.rank - i) and abs(c) > tol:
                return False
        return True

    def reality_residual(self) -> float:
        """Invariance under (eta, zeta) -> (-eta~/zeta~^2, -1/zeta~), i.e.
        c[i, 2(r-i)-j] = (-1)^(r+i+j) conj(c[i, j])."""
        r = self.rank
        worst = 0.0
        scale = max(abs(c) for c in self.coeffs.values()) or 1.0
        for i in range(r + 1):
            for j in range(2 * (r - i) + 1):
                a = self.coeffs.get((i, j), 0.0)
                b = self.coeffs.get((i, 2 * (r - i) - j), 0.0)
                worst = max(worst, abs(b - (-1) ** (r + i + j) * np.conj(a)))
        return worst / scale

    def evaluate(self, eta, zeta):
        return sum(c * eta ** i * zeta ** j for (i, j), c in self.coeffs.items())


def spectral_curve(sol_or_seg, which: str = "S0", zeta_samples: int = None,
                   s_values=None) -> SpectralCurve:
    """det(eta I - A(zeta, s)) as a bivariate polynomial, interpolated from
    characteristic polynomials at Vandermonde zeta nodes; constancy in s is
    verified at three interior values."""
    if isinstance(sol_or_seg, NahmSolution):
        seg = {"S0": sol_or_seg.tail, "S1": sol_or_seg.middle}[which]
    else:
        seg = sol_or_seg
    r = seg.rank
    n = zeta_samples or (2 * r + 3)
    nodes = 1.3 * np.exp(2j * np.pi * np.arange(n) / n) + 0.07
    if s_values is None:
        s_values = np.linspace(seg.s0, seg.s1, 5)[1:-1]
    coeff_sets = []
    for s in s_values:
        t1, t2, t3 = seg.at(s)
        rows = np.stack([np.poly(lax(t1, t2, t3, z)) for z in nodes])  # (n, r+1)
        V = np.vander(nodes, 2 * r + 1, increasing=True)
        if np.linalg.cond(V) > 1e10:
            raise InterpolationIllConditioned("zeta nodes too clustered")
        cz, *_ = np.linalg.lstsq(V, rows, rcond=None)   # (2r+1, r+1)
        coeffs = {}
        for i in range(r + 1):
            for j in range(2 * r + 1):
                c = cz[j, r - i]
                if abs(c) > 1e-11 * max(1.0, np.max(np.abs(cz))):
                    coeffs[(i, j)] = complex(c)
        coeff_sets.append(coeffs)
    drift = 0.0
    keys = set().union(*[set(c) for c in coeff_sets])
    for key in keys:
        vals = [c.get(key, 0.0) for c in coeff_sets]
        drift = max(drift, float(np.max(np.abs(np.array(vals) - vals[0]))))
    return SpectralCurve(r, coeff_sets[0], drift)


# ---------------------------------------------------------------------------
# transports and holomorphic reduction


def transport(seg: Segment, s0: float, s1: float, steps: int = 400) -> np.ndarray:
    """Solution of dP/ds = T3(s) P, P(s0) = 1, evaluated at s1 (this moves
    flat sections of d/ds + alpha with alpha = -T3)."""
    if seg.constant:
        T3 = seg.T3[0]
        w, V = np.linalg.eig(T3 * (s1 - s0))
        try:
            return V @ np.diag(np.exp(w)) @ np.linalg.inv(V)
        except np.linalg.LinAlgError as e:
            raise TransportSingular(str(e))
    n = max(8, steps)
    grid = np.linspace(s0, s1, n + 1)
    h = grid[1] - grid[0]
    P = np.eye(seg.rank, dtype=complex)
    rhs = lambda s, M: seg.at(s)[2] @ M
    for i in range(n):
        s = grid[i]
        k1 = rhs(s, P)
        k2 = rhs(s + h / 2, P + h / 2 * k1)
        k3 = rhs(s + h / 2, P + h / 2 * k2)
        k4 = rhs(s + h, P + h * k3)
        P = P + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return P


@dataclass
class BowComplexTN:
    """Gauge-normalized holomorphic shadow of a bow solution (or of matrix
    data) on the edge-joined interval.

    Outer frames are anchored at the lambda points (outer transports are
    absorbed into the edge maps), the middle endomorphism is recorded in the
    lambda_plus normal frame, and `monodromy` conjugates the lambda_minus
    form to it.  For m = 0 the stored (I, J) pairs factor the jumps
    (outer beta) - (middle beta) at each lambda point.
    """

    k: int
    m: int
    B0: np.ndarray
    B1: np.ndarray
    Bth: np.ndarray
    Bht: np.ndarray
    beta_mid_plus: np.ndarray
    monodromy: np.ndarray
    I_minus: np.ndarray | None = None
    J_minus: np.ndarray | None = None
    I_plus: np.ndarray | None = None
    J_plus: np.ndarray | None = None
    hw_phase: complex = 1.0
    exact: bool = False

    @property
    def beta_mid_minus(self):
        Minv = _inv(self.monodromy)
        return Minv @ self.beta_mid_plus @ self.monodromy if not self.exact \
            else nk.mat_mul(nk.mat_mul(Minv, self.beta_mid_plus), self.monodromy)

    def covariance_residual(self) -> float:
        lhs = nk.to_float(self.beta_mid_plus) @ nk.to_float(self.monodromy)
        rhs = nk.to_float(self.monodromy) @ nk.to_float(self.beta_mid_minus)
        return float(np.max(np.abs(lhs - rhs))) if lhs.size else 0.0

    def edge_residual(self) -> float:
        B0 = nk.to_float(self.B0)
        B1 = nk.to_float(self.B1)
        th = nk.to_float(self.Bth)
        ht = nk.to_float(self.Bht)
        r0 = np.max(np.abs(B0 - ht @ th)) if B0.size else 0.0
        r1 = np.max(np.abs(B1 - th @ ht)) if B1.size else 0.0
        return float(max(r0, r1))


@dataclass
class BowComplexCircle:
    """Holomorphic Nahm complex on the circle (no edge): constant outer
    endomorphism, middle normal form and monodromy; m = 0 keeps the two
    endomorphisms and the rank-one jump factors instead."""

    k: int
    m: int
    beta_small: np.ndarray          # B for m > 0; B0 for m = 0
    beta_large: np.ndarray          # lambda_minus form M for m > 0; B1 for m = 0
    monodromy: np.ndarray           # monodromy for m > 0; holonomy A for m = 0
    I_minus: np.ndarray | None = None
    J_minus: np.ndarray | None = None
    I_plus: np.ndarray | None = None
    J_plus: np.ndarray | None = None
    hw_phase: complex = 1.0
    exact: bool = False

    def right_form(self):
        Minv = _inv(self.monodromy)
        return nk.mat_mul(nk.mat_mul(Minv, self.beta_large), self.monodromy)


def _inv(M):
    if nk.is_exact(M):
        n = M.shape[0]
        sol = nk.exact_solve(M, nk.exact_eye(n))
        if sol is None:
            raise TransportSingular("exact matrix not invertible")
        return sol
    M = np.asarray(M, dtype=complex)
    if M.size and np.linalg.cond(M) > 1e12:
        raise TransportSingular("monodromy numerically defective")
    return np.linalg.inv(M)


def complex_shadow(sol: NahmSolution, transport_steps: int = 800) -> BowComplexTN:
    """Holomorphic (zeta = 0) reduction of a bow solution, gauge-normalized:
    outer transports are absorbed into the edge maps, the middle is put into
    the lambda-point normal frames built from i_minus / i_plus."""
    rep = sol.rep
    k, m = rep.k, rep.m
    lm, lp = rep.lam_minus, rep.lam_plus
    PH = transport(sol.head, -rep.ell / 2, lm, transport_steps)
    PT = transport(sol.tail, lp, rep.ell / 2, transport_steps)
    PM = transport(sol.middle, lm, lp, transport_steps)
    U_minus = _normal_frame(sol.i_minus)
    U_plus = _normal_frame(sol.i_plus)
    beta_mid_plus = U_plus.conj().T @ sol.middle.beta_at(lp) @ U_plus
    monodromy = U_plus.conj().T @ PM @ U_minus
    B0 = sol.head.beta_at(lm)
    B1 = sol.tail.beta_at(lp)
    Bth_n = np.linalg.inv(PT) @ sol.Bth @ np.linalg.inv(PH)
    Bht_n = PH @ sol.Bht @ PT
    out = BowComplexTN(k, m, B0, B1, Bth_n, Bht_n, beta_mid_plus, monodromy)
    if m == 0:
        # jumps in the normalized frames; products carry the invariants
        beta_minus = out.beta_mid_minus
        jm = B0 - beta_minus
        jp = B1 - beta_mid_plus
        out.I_minus, out.J_minus = _rank_one_split(jm, sol.I_minus, sol.J_minus,
                                                   sign=-1)
        out.I_plus, out.J_plus = _rank_one_split(jp, sol.I_plus, sol.J_plus,
                                                 sign=+1)
    return out


def _normal_frame(emb: np.ndarray) -> np.ndarray:
    """Unitary whose first k columns are the embedded outer frame."""
    n, k = emb.shape
    q, _ = np.linalg.qr(np.hstack([emb, np.eye(n, dtype=complex)]))
    U = q[:, :n]
    # align the leading block's phases with the embedding itself
    for j in range(k):
        overlap = U[:, j].conj() @ emb[:, j]
        if abs(overlap) > 1e-12:
            U[:, j] *= overlap / abs(overlap)
    return U


def _rank_one_split(jump: np.ndarray, I_u, J_u, sign: int):
    """Column-row factorization of a rank <= 1 jump; reuses the unitary-side
    factors when they match, normalizing the first nonzero entry of I to 1
    when possible."""
    if np.max(np.abs(jump)) < 1e-12:
        if I_u is not None and J_u is not None:
            return sign * np.asarray(I_u, complex), np.asarray(J_u, complex)
        k = jump.shape[0]
        return np.zeros((k, 1), complex), np.zeros((1, k), complex)
    U, s, Vh = np.linalg.svd(jump)
    if len(s) > 1 and s[1] > 1e-8 * s[0]:
        raise NotInNormalForm("lambda-point jump has rank > 1")
    I = U[:, :1] * s[0]
    J = Vh[:1, :]
    nz = np.flatnonzero(np.abs(I.ravel()) > 1e-12 * s[0])
    if len(nz):
        c = I.ravel()[nz[0]]
        I, J = I / c, J * c
    return I, J


# ---------------------------------------------------------------------------
# finite monad from a bow complex


# boundary twists reused from the fused monad on the blown-up chart
_TW = {
    "mF": {"Fxi": -1, "Fpsi": -1},
    "mFC0": {"Fxi": -1, "Fpsi": -1, "C0": -1},
    "mFCi": {"Fxi": -1, "Fpsi": -1, "Cinf": -1},
    "Eh": {"Cinf": -1, "Fxi": -1},
    "Et": {"C0": -1, "Fpsi": -1},
    "triv": {},
}


def reduce_to_finite_monad(source, point, ctx: ToleranceContext = DEFAULT_CTX,
                           transport_steps: int = 800):
    """Finite monad of a bow solution (or normalized bow complex) at a fixed
    Taub-NUT chart point (xi, psi); returns the evaluated MonadAtPoint.

    The columns are spanned by flat-section families on the two arcs through
    the lambda points, cut down by the requirement that the endomorphism
    preserve the boundary conditions there, plus the edge spaces; evaluation
    maps are built from the stored transports.  m <= 1 only: higher pole
    orders need the graded pole frames, which the desk-scale generators do
    not produce.
    """
    bc = source if isinstance(source, BowComplexTN) else \
        complex_shadow(source, transport_steps)
    if bc.m > 1:
        raise BuildRefused("finite reduction implemented for m <= 1")
    pm = finite_monad_family(bc, ctx)
    return pm.evaluate(point)


def finite_monad_family(bc: BowComplexTN,
                        ctx: ToleranceContext = DEFAULT_CTX) -> ParamMonad:
    """The finite monad of a normalized bow complex as a ParamMonad over the
    (xi, psi) chart."""
    k, m = bc.k, bc.m
    if m > 1:
        raise BuildRefused("finite reduction implemented for m <= 1")
    B0 = np.asarray(nk.to_float(bc.B0))
    B1 = np.asarray(nk.to_float(bc.B1))
    Bth = np.asarray(nk.to_float(bc.Bth))
    Bht = np.asarray(nk.to_float(bc.Bht))
    Mp = np.asarray(nk.to_float(bc.beta_mid_plus))
    P = np.asarray(nk.to_float(bc.monodromy))
    Mm = np.linalg.inv(P) @ Mp @ P
    iplus = np.eye(k + m, k, dtype=complex)

    if m == 0:
        Kp = np.eye(k, dtype=complex)
        Km = np.eye(k, dtype=complex)
        w_extra = [BlockSpec("Wplus", _TW["triv"], 1),
                   BlockSpec("Wminus", _TW["triv"], 1)]
    else:
        Kp = nk.rank_kernel(Mp[k:, :k], ctx).kernel
        Km = nk.rank_kernel(Mm[k:, :k], ctx).kernel
        if Kp.shape[1] != k - 1 or Km.shape[1] != k - 1:
            raise TransportSingular("pole cut at a lambda point is degenerate")
        w_extra = []

    cols1 = [BlockSpec("Uplus", _TW["mF"], Kp.shape[1]),
             BlockSpec("W1", _TW["mFC0"], k),
             BlockSpec("W2", _TW["mFCi"], k),
             BlockSpec("Uminus", _TW["mF"], Km.shape[1])]
    cols2 = [BlockSpec("U1", _TW["mF"], k + m),
             BlockSpec("Vplus", _TW["triv"], k),
             BlockSpec("U0m", _TW["mF"], k),
             BlockSpec("E1", _TW["Eh"], k),
             BlockSpec("E2", _TW["Et"], k),
             BlockSpec("U0p", _TW["mF"], k),
             BlockSpec("Vminus", _TW["triv"], k)] + w_extra
    cols3 = [BlockSpec("V1", _TW["triv"], k + m),
             BlockSpec("V0p", _TW["triv"], k),
             BlockSpec("V0m", _TW["triv"], k)]

    n1 = sum(b.rank for b in cols1)
    n2 = sum(b.rank for b in cols2)
    n3 = sum(b.rank for b in cols3)
    alpha = PolyMatrix((n2, n1))
    beta = PolyMatrix((n3, n2))
    o1 = _offsets(cols1)
    o2 = _offsets(cols2)
    o3 = _offsets(cols3)

    # alpha blocks ---------------------------------------------------------
    add = alpha.add_monomial
    # U+ column: -ev1, (eta - beta) in the tail parametrization, -ev_c
    add(0, 0, o2[0], o1[0], -(iplus @ Kp))
    add(0, 0, o2[1], o1[0], -(B1 @ Kp))
    add(1, 1, o2[1], o1[0], Kp)                       # eta
    add(0, 0, o2[2], o1[0], -(Bht @ Kp))
    # W1 column
    add(0, 0, o2[5], o1[1], -np.eye(k))
    add(0, 1, o2[3], o1[1], np.eye(k))                # psi
    add(0, 0, o2[4], o1[1], -Bht)
    # W2 column
    add(0, 0, o2[2], o1[2], -np.eye(k))
    add(0, 0, o2[3], o1[2], -Bth)
    add(1, 0, o2[4], o1[2], np.eye(k))                # xi
    # U- column
    add(0, 0, o2[5], o1[3], -(Bth @ Km))
    add(0, 0, o2[6], o1[3], -(B0 @ Km))
    add(1, 1, o2[6], o1[3], Km)                       # eta
    add(0, 0, o2[0], o1[3], -(P @ iplus @ Km))
    if m == 0:
        add(0, 0, o2[7], o1[0], np.asarray(bc.J_plus, complex))
        add(0, 0, o2[8], o1[3], np.asarray(bc.J_minus, complex))

    # beta blocks ----------------------------------------------------------
    add = beta.add_monomial
    add(1, 1, o3[0], o2[0], np.eye(k + m))            # eta
    add(0, 0, o3[0], o2[0], -Mp)
    add(0, 0, o3[0], o2[1], iplus)
    add(0, 0, o3[2], o2[1], Bht)
    add(1, 1, o3[2], o2[2], np.eye(k))
    add(0, 0, o3[2], o2[2], -B0)
    add(1, 0, o3[1], o2[3], np.eye(k))                # xi
    add(0, 0, o3[2], o2[3], Bht)
    add(0, 0, o3[1], o2[4], Bth)
    add(0, 1, o3[2], o2[4], np.eye(k))                # psi
    add(1, 1, o3[1], o2[5], np.eye(k))
    add(0, 0, o3[1], o2[5], -B1)
    add(0, 0, o3[1], o2[6], Bth)
    add(0, 0, o3[0], o2[6], P @ iplus)
    if m == 0:
        add(0, 0, o3[0], o2[7], np.asarray(bc.I_plus, complex))
        add(0, 0, o3[0], o2[8], P @ np.asarray(bc.I_minus, complex))

    return ParamMonad("xi_psi", (cols1, cols2, cols3), alpha, beta)


def _offsets(blocks):
    out, pos = [], 0
    for b in blocks:
        out.append((pos, pos + b.rank))
        pos += b.rank
    return out
