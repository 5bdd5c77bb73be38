"""Caloron matrix data: normalized tuples, monad constructions on the
product surface, non-degeneracy certification, and the round trip with Nahm
complexes on the circle.

The small monad is the two-variable complex

    alpha = (A - xi; B - eta; D),   beta = (eta - B, A - xi, C),

whose composite is exactly [A, B] + C D, so the first relation is the
anticommutation.  The fused monad for m > 0 carries the shift-structure
blocks; all of its signs are pinned by the requirement beta o alpha = 0,
which the test suite enforces rather than trusting the table.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numkit as nk
from .monadcore import BlockSpec, ParamMonad, PolyMatrix, o_pp
from .nahmbow import BowComplexCircle, BuildRefused, NotInNormalForm
from .numkit import DEFAULT_CTX, ToleranceContext, ValidationReport, is_exact


def _shift_matrix(m: int, exact: bool):
    """Lower shift: ones on the first subdiagonal."""
    out = nk.zeros_like_backend(m, m, exact)
    one = nk.GQ_ONE if exact else 1.0
    for i in range(m - 1):
        out[i + 1, i] = one
    return out


def _e_minus_col(m: int, exact: bool):
    out = nk.zeros_like_backend(m, 1, exact)
    if m:
        out[0, 0] = nk.GQ_ONE if exact else 1.0
    return out


def _e_plus_row(m: int, exact: bool):
    out = nk.zeros_like_backend(1, m, exact)
    if m:
        out[0, m - 1] = nk.GQ_ONE if exact else 1.0
    return out


@dataclass
class CaloronData:
    """Matrix tuple for magnetic charge m > 0.

    Shapes: A, B: k x k; C: k x 2; D2row: 1 x k; Aprime: m x k;
    Bprime: 1 x k; Cprime: m x 2.  The second row block D of the stacked
    2 x k matrix is D2row, the first row is the last row of Aprime.
    """

    k: int
    m: int
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D2row: np.ndarray
    Aprime: np.ndarray
    Bprime: np.ndarray
    Cprime: np.ndarray

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("CaloronData requires m >= 1; use CaloronDataM0")
        k, m = self.k, self.m
        shapes = {"A": (k, k), "B": (k, k), "C": (k, 2), "D2row": (1, k),
                  "Aprime": (m, k), "Bprime": (1, k), "Cprime": (m, 2)}
        for name, want in shapes.items():
            got = getattr(self, name).shape
            if got != want:
                raise ValueError(f"{name} has shape {got}, want {want}")

    @property
    def exact(self) -> bool:
        return is_exact(self.A)

    @property
    def D(self) -> np.ndarray:
        out = nk.zeros_like_backend(2, self.k, self.exact)
        out[0:1, :] = self.Aprime[self.m - 1:self.m, :]
        out[1:2, :] = self.D2row
        return out

    @property
    def C1(self):
        return self.C[:, 0:1]

    @property
    def C2(self):
        return self.C[:, 1:2]

    @property
    def shift(self):
        return _shift_matrix(self.m, self.exact)

    @property
    def left_normal(self) -> np.ndarray:
        """Constant block (B, -C1 e+; e-^T B', shift - C1' e+); the large
        interval endomorphism in left-normal form."""
        k, m = self.k, self.m
        out = nk.zeros_like_backend(k + m, k + m, self.exact)
        em = _e_minus_col(m, self.exact)
        ep = _e_plus_row(m, self.exact)
        out[:k, :k] = self.B
        out[:k, k:] = -nk.mat_mul(self.C1, ep)
        out[k:, :k] = nk.mat_mul(em, self.Bprime)
        out[k:, k:] = self.shift - nk.mat_mul(self.Cprime[:, 0:1], ep)
        return out

    @property
    def monodromy(self) -> np.ndarray:
        """Krylov matrix [ (A; A'), v, M v, ..., M^{m-1} v ] with
        v = (C2; C2'); invertibility is the last non-degeneracy condition
        and the matrix itself is the large-interval parallel transport."""
        k, m = self.k, self.m
        out = nk.zeros_like_backend(k + m, k + m, self.exact)
        out[:k, :k] = self.A
        out[k:, :k] = self.Aprime
        v = nk.zeros_like_backend(k + m, 1, self.exact)
        v[:k, :] = self.C2
        v[k:, :] = self.Cprime[:, 1:2]
        M = self.left_normal
        for j in range(m):
            out[:, k + j: k + j + 1] = v
            if j < m - 1:
                v = nk.mat_mul(M, v)
        return out

    def relation_residuals(self):
        """The three algebraic constraints; zero for consistent data."""
        A, B, C, D = self.A, self.B, self.C, self.D
        em = _e_minus_col(self.m, self.exact)
        ep = _e_plus_row(self.m, self.exact)
        r1 = nk.mat_mul(A, B) - nk.mat_mul(B, A) + nk.mat_mul(C, D)
        r2 = (nk.mat_mul(nk.mat_mul(em, self.Bprime), A)
              + nk.mat_mul(self.shift, self.Aprime)
              - nk.mat_mul(self.Aprime, B) - nk.mat_mul(self.Cprime, D))
        r3 = -nk.mat_mul(ep, self.Aprime) + self.D[0:1, :]
        return r1, r2, r3


@dataclass
class CaloronDataM0:
    """m = 0 flavor: monodromy A (invertible), endomorphism B0, and the
    rank-one jump data inside C, D; B1 = B0 - C1 D1 is derived."""

    k: int
    A: np.ndarray
    B0: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        k = self.k
        shapes = {"A": (k, k), "B0": (k, k), "C": (k, 2), "D": (2, k)}
        for name, want in shapes.items():
            got = getattr(self, name).shape
            if got != want:
                raise ValueError(f"{name} has shape {got}, want {want}")

    m = 0

    @property
    def exact(self) -> bool:
        return is_exact(self.A)

    @property
    def C1(self):
        return self.C[:, 0:1]

    @property
    def C2(self):
        return self.C[:, 1:2]

    @property
    def B1(self) -> np.ndarray:
        return self.B0 - nk.mat_mul(self.C1, self.D[0:1, :])

    def relation_residuals(self):
        r1 = (nk.mat_mul(self.A, self.B0) - nk.mat_mul(self.B0, self.A)
              + nk.mat_mul(self.C, self.D))
        return (r1,)


# ---------------------------------------------------------------------------
# validation


def validate(data, ctx: ToleranceContext = DEFAULT_CTX) -> ValidationReport:
    """Per-condition report: algebraic relations plus the four
    non-degeneracy conditions (injectivity and surjectivity of the small
    pencils for all parameter values, surjectivity of the mixed pencil, and
    invertibility of the transport matrix)."""
    report = ValidationReport()
    Bmat = data.B if isinstance(data, CaloronData) else data.B0
    scale = max(nk.mat_norm(data.A), nk.mat_norm(Bmat), 1.0)
    for i, r in enumerate(data.relation_residuals(), start=1):
        res = nk.mat_norm(r)
        report.add(f"relation_{i}", res < 1e-10 * scale, res)

    B = data.B if isinstance(data, CaloronData) else data.B0
    D = data.D
    obs = nk.common_eigenvector_obstruction(data.A, B, D, ctx)
    report.add("stacked_pencil_injective", len(obs) == 0, 0.0,
               certificate=[(o.xi, o.eta, o.vector) for o in obs] or None)
    obs2 = nk.common_eigenvector_obstruction(
        _t(data.A), _t(B), _t(data.C), ctx)
    report.add("row_pencil_surjective", len(obs2) == 0, 0.0,
               certificate=[(o.xi, o.eta, o.vector) for o in obs2] or None)

    if isinstance(data, CaloronData):
        Yp1 = _mixed_pencil_left(data)
        Z0, Z1 = _z1_pencil(data)
        try:
            fails = nk.pencil_surjectivity_failures(
                nk.to_float(Yp1), nk.to_float(Z0), nk.to_float(Z1), ctx)
            report.add("mixed_pencil_surjective", len(fails) == 0, 0.0,
                       certificate=fails or None)
        except nk.DegeneratePencil as e:
            report.add("mixed_pencil_surjective", False, np.inf, note=str(e))
        Nf = nk.to_float(data.monodromy)
        s = np.linalg.svd(Nf, compute_uv=False)
        ok = s[-1] > ctx.rank_tol * max(s[0], 1.0)
        report.add("transport_invertible", ok, float(s[-1] / max(s[0], 1e-300)))
        # behavior at large |eta| is recorded, not asserted: the surjectivity
        # statement compactifies and only the affine part is decided here
        Yf = nk.to_float(Yp1)
        trend = []
        for eta in (1e2, 1e3, 1e4):
            Zf = nk.to_float(Z0) + eta * nk.to_float(Z1)
            sv = np.linalg.svd(np.hstack([Yf, Zf]), compute_uv=False)
            trend.append(float(sv[-1] / max(sv[0], 1e-300)))
        report.add("mixed_pencil_large_eta", True, 0.0,
                   note="rel min sv at |eta| 1e2/1e3/1e4: "
                        + ", ".join(f"{v:.2e}" for v in trend))
    else:
        Af = nk.to_float(data.A)
        s = np.linalg.svd(Af, compute_uv=False)
        ok = s[-1] > ctx.rank_tol * max(s[0], 1.0)
        report.add("A_invertible", ok, float(s[-1] / max(s[0], 1e-300)))
    return report


def _t(M):
    return nk.conj_transpose(M) if nk.is_exact(M) else np.asarray(M).T.copy()


def _mixed_pencil_left(data: CaloronData):
    k, m = data.k, data.m
    out = nk.zeros_like_backend(k + m, k + 1, data.exact)
    out[:k, :k] = data.A
    out[k:, :k] = data.Aprime
    out[:k, k:] = data.C2
    out[k:, k:] = data.Cprime[:, 1:2]
    return out


def _z1_pencil(data: CaloronData):
    """Z1(eta) = eta * I - M as (constant, linear) pair."""
    k, m = data.k, data.m
    Z0 = -data.left_normal
    Z1 = nk.eye_like_backend(k + m, data.exact)
    return Z0, Z1


# ---------------------------------------------------------------------------
# monads


def small_monad(data, ctx: ToleranceContext = DEFAULT_CTX,
                validated: ValidationReport | None = None) -> ParamMonad:
    """Standard monad with column ranks (k, 2k+2, k) on the (xi, eta)
    chart; works for both flavors (m = 0 uses B0)."""
    report = validated if validated is not None else validate(data, ctx)
    if not report.passed:
        raise BuildRefused("data fails validation:\n" + report.render())
    k = data.k
    exact = data.exact
    B = data.B if isinstance(data, CaloronData) else data.B0
    cols1 = [BlockSpec("U", o_pp(-1, 0), k)]
    cols2 = [BlockSpec("S", o_pp(-1, 1), k), BlockSpec("T", o_pp(0, 0), k),
             BlockSpec("W", o_pp(0, 0), 2)]
    cols3 = [BlockSpec("Q", o_pp(0, 1), k)]
    alpha = PolyMatrix((2 * k + 2, k), exact=exact)
    beta = PolyMatrix((k, 2 * k + 2), exact=exact)
    eye = nk.eye_like_backend(k, exact)
    alpha.add_monomial(0, 0, (0, k), (0, k), data.A)
    alpha.add_monomial(1, 0, (0, k), (0, k), -eye)
    alpha.add_monomial(0, 0, (k, 2 * k), (0, k), B)
    alpha.add_monomial(0, 1, (k, 2 * k), (0, k), -eye)
    alpha.add_monomial(0, 0, (2 * k, 2 * k + 2), (0, k), data.D)
    beta.add_monomial(0, 0, (0, k), (0, k), -B)
    beta.add_monomial(0, 1, (0, k), (0, k), eye)
    beta.add_monomial(0, 0, (0, k), (k, 2 * k), data.A)
    beta.add_monomial(1, 0, (0, k), (k, 2 * k), -eye)
    beta.add_monomial(0, 0, (0, k), (2 * k, 2 * k + 2), data.C)
    return ParamMonad("xi_eta", (cols1, cols2, cols3), alpha, beta, exact)


def big_monad(data: CaloronData, ctx: ToleranceContext = DEFAULT_CTX,
              validated: ValidationReport | None = None) -> ParamMonad:
    """Fused monad with the shift-structure blocks (m > 0)."""
    if not isinstance(data, CaloronData):
        raise BuildRefused("the fused monad needs the m > 0 data flavor")
    report = validated if validated is not None else validate(data, ctx)
    if not report.passed:
        raise BuildRefused("data fails validation:\n" + report.render())
    k, m = data.k, data.m
    exact = data.exact
    cols1 = [BlockSpec("Up", o_pp(-1, 0), k), BlockSpec("Um", o_pp(-1, 0), k + m)]
    cols2 = [BlockSpec("Vp", o_pp(0, 0), k + 1),
             BlockSpec("Vm", o_pp(0, 0), k + m + 1),
             BlockSpec("S0", o_pp(-1, 1), k),
             BlockSpec("S1", o_pp(-1, 0), k + m)]
    cols3 = [BlockSpec("T0", o_pp(0, 1), k), BlockSpec("T1", o_pp(0, 0), k + m)]
    n1, n2, n3 = 2 * k + m, 4 * k + 2 * m + 2, 2 * k + m
    alpha = PolyMatrix((n2, n1), exact=exact)
    beta = PolyMatrix((n3, n2), exact=exact)
    eyek = nk.eye_like_backend(k, exact)
    eyem = nk.eye_like_backend(m, exact)
    eyekm = nk.eye_like_backend(k + m, exact)
    em = _e_minus_col(m, exact)
    ep = _e_plus_row(m, exact)

    # offsets: col1 Up [0,k), Um [k, 2k+m)
    # col2 Vp [0, k+1), Vm [k+1, 2k+m+2), S0 [2k+m+2, 3k+m+2), S1 [3k+m+2, ..)
    oVp, oVm = 0, k + 1
    oS0, oS1 = 2 * k + m + 2, 3 * k + m + 2
    # plus-side resolution column
    alpha.add_monomial(0, 0, (oVp, oVp + k), (0, k), -data.B)
    alpha.add_monomial(0, 1, (oVp, oVp + k), (0, k), eyek)
    alpha.add_monomial(0, 0, (oVp + k, oVp + k + 1), (0, k), -data.D2row)
    # W- on (Vm, Um): rows (k | m | 1), cols (k | m)
    alpha.add_monomial(0, 0, (oVm, oVm + k), (k, 2 * k), -data.B)
    alpha.add_monomial(0, 1, (oVm, oVm + k), (k, 2 * k), eyek)
    alpha.add_monomial(0, 0, (oVm + k, oVm + k + m), (k, 2 * k),
                       -nk.mat_mul(em, data.Bprime))
    alpha.add_monomial(0, 0, (oVm + k, oVm + k + m), (2 * k, 2 * k + m),
                       -data.shift)
    alpha.add_monomial(0, 1, (oVm + k, oVm + k + m), (2 * k, 2 * k + m), eyem)
    alpha.add_monomial(0, 0, (oVm + k + m, oVm + k + m + 1),
                       (2 * k, 2 * k + m), -ep)
    # S0 row: xi * I from Up, [I | 0] from Um
    alpha.add_monomial(1, 0, (oS0, oS0 + k), (0, k), eyek)
    alpha.add_monomial(0, 0, (oS0, oS0 + k), (k, 2 * k), eyek)
    # S1 row: (A; A') from Up, I from Um
    alpha.add_monomial(0, 0, (oS1, oS1 + k), (0, k), data.A)
    alpha.add_monomial(0, 0, (oS1 + k, oS1 + k + m), (0, k), data.Aprime)
    alpha.add_monomial(0, 0, (oS1, oS1 + k + m), (k, 2 * k + m), eyekm)

    # beta rows: T0 [0,k), T1 [k, 2k+m)
    beta.add_monomial(1, 0, (0, k), (oVp, oVp + k), eyek)          # (xi, 0) row
    beta.add_monomial(0, 0, (0, k), (oVm, oVm + k), eyek)          # (1, 0, 0) row
    beta.add_monomial(0, 0, (0, k), (oS0, oS0 + k), data.B)        # B - eta
    beta.add_monomial(0, 1, (0, k), (oS0, oS0 + k), -eyek)
    # (A, C2; A', C2') block
    beta.add_monomial(0, 0, (k, 2 * k), (oVp, oVp + k), data.A)
    beta.add_monomial(0, 0, (k, 2 * k), (oVp + k, oVp + k + 1), data.C2)
    beta.add_monomial(0, 0, (2 * k, 2 * k + m), (oVp, oVp + k), data.Aprime)
    beta.add_monomial(0, 0, (2 * k, 2 * k + m), (oVp + k, oVp + k + 1),
                      data.Cprime[:, 1:2])
    # (I, 0, -C1; 0, I, -C1') block
    beta.add_monomial(0, 0, (k, 2 * k), (oVm, oVm + k), eyek)
    beta.add_monomial(0, 0, (k, 2 * k), (oVm + k + m, oVm + k + m + 1), -data.C1)
    beta.add_monomial(0, 0, (2 * k, 2 * k + m), (oVm + k, oVm + k + m), eyem)
    beta.add_monomial(0, 0, (2 * k, 2 * k + m), (oVm + k + m, oVm + k + m + 1),
                      -data.Cprime[:, 0:1])
    # shifted-block pencil: left normal form minus eta
    beta.add_monomial(0, 0, (k, 2 * k + m), (oS1, oS1 + k + m), data.left_normal)
    beta.add_monomial(0, 1, (k, 2 * k + m), (oS1, oS1 + k + m), -eyekm)
    return ParamMonad("xi_eta", (cols1, cols2, cols3), alpha, beta, exact)


# ---------------------------------------------------------------------------
# Nahm complexes on the circle


def to_nahm_complex(data, ctx: ToleranceContext = DEFAULT_CTX,
                    validated: ValidationReport | None = None) -> BowComplexCircle:
    """Circle complex of the matrix data.

    m > 0: constant endomorphism B on the small interval, left-normal form M
    at the lambda_minus end of the large one, parallel transport monodromy
    across it (identity on the small interval).  m = 0: the two constant
    endomorphisms B0, B1 with the rank-one jump C1 D1 at both marked points
    and the holonomy A as the sole connection invariant.
    """
    report = validated if validated is not None else validate(data, ctx)
    if not report.passed:
        raise BuildRefused("data fails validation:\n" + report.render())
    if isinstance(data, CaloronData):
        return BowComplexCircle(data.k, data.m, data.B, data.left_normal, data.monodromy,
                                exact=data.exact)
    return BowComplexCircle(data.k, 0, data.B0, data.B1, data.A,
                            I_minus=data.C1, J_minus=data.D[0:1, :],
                            I_plus=data.C1, J_plus=data.D[0:1, :],
                            exact=data.exact)


def from_nahm_complex(nc: BowComplexCircle, tol: float = 1e-9):
    """Matrix tuple back from the normal forms and the monodromy."""
    k, m = nc.k, nc.m
    if m > 0:
        return _from_circle_mpos(nc, tol)
    B0 = nc.beta_small
    B1 = nc.beta_large
    A = nc.monodromy
    jump = nk.to_float(B0) - nk.to_float(B1)
    C1f = nk.to_float(nc.I_minus) if nc.I_minus is not None else None
    D1f = nk.to_float(nc.J_minus) if nc.J_minus is not None else None
    if C1f is None or D1f is None:
        raise NotInNormalForm("m = 0 complex must carry jump factors")
    if np.max(np.abs(jump - C1f @ D1f)) > tol * max(1.0, np.max(np.abs(jump))):
        raise NotInNormalForm("stored jump factors do not match B0 - B1")
    exact = nk.is_exact(B0)
    R = -(nk.mat_mul(A, B0) - nk.mat_mul(B0, A)) - nk.mat_mul(
        nc.I_minus, nc.J_minus)
    C2, D2 = _rank_one_factor(R, tol)
    C = nk.zeros_like_backend(k, 2, exact)
    D = nk.zeros_like_backend(2, k, exact)
    C[:, 0:1] = nc.I_minus
    C[:, 1:2] = C2 if exact else np.asarray(C2)
    D[0:1, :] = nc.J_minus
    D[1:2, :] = D2 if exact else np.asarray(D2)
    return CaloronDataM0(k, A, B0, C, D)


def _rank_one_factor(R, tol: float):
    exact = nk.is_exact(R)
    Rf = nk.to_float(R)
    k = Rf.shape[0]
    if np.max(np.abs(Rf)) <= tol:
        z_col = nk.zeros_like_backend(k, 1, exact)
        z_row = nk.zeros_like_backend(1, k, exact)
        if not exact:
            z_col = np.zeros((k, 1), complex)
            z_row = np.zeros((1, k), complex)
        return z_col, z_row
    if exact:
        # pick the first nonzero column as C2, solve the row factor exactly
        for j in range(k):
            col = R[:, j:j + 1]
            if not nk.is_zero_matrix(col):
                row = nk.exact_solve(col, R)
                if row is None:
                    raise NotInNormalForm("residual block has rank > 1")
                return col, row
    U, s, Vh = np.linalg.svd(Rf)
    if len(s) > 1 and s[1] > 1e-8 * s[0]:
        raise NotInNormalForm("residual block has rank > 1")
    return U[:, :1] * s[0], Vh[:1, :]


def _from_circle_mpos(nc: BowComplexCircle, tol: float):
    k, m = nc.k, nc.m
    B = nc.beta_small
    M = nc.beta_large
    N = nc.monodromy
    Mf, Bf, Nf = nk.to_float(M), nk.to_float(B), nk.to_float(N)
    scale = max(np.max(np.abs(Mf)), 1.0)
    if np.max(np.abs(Mf[:k, :k] - Bf)) > tol * scale:
        raise NotInNormalForm("left form does not continue the small block")
    if m > 1 and np.max(np.abs(Mf[:k, k:k + m - 1])) > tol * scale:
        raise NotInNormalForm("left form has entries off the final column")
    if m > 1 and np.max(np.abs(Mf[k + 1:, :k])) > tol * scale:
        raise NotInNormalForm("left form bottom block is not a single row")
    exact = nk.is_exact(M)
    shift = _shift_matrix(m, exact)
    body = M[k:, k:] - shift
    if m > 1:
        body_f = nk.to_float(body)
        if np.max(np.abs(body_f[:, :m - 1])) > tol * scale:
            raise NotInNormalForm("pole block deviates from the shift form")
    C1 = -M[:k, k + m - 1:k + m]
    Bprime = M[k:k + 1, :k]
    C1prime = -body[:, m - 1:m]
    A = N[:k, :k]
    Aprime = N[k:, :k]
    C2 = N[:k, k:k + 1]
    C2prime = N[k:, k:k + 1]
    right = nc.right_form()
    rightf = nk.to_float(right)
    if np.max(np.abs(rightf[:k, :k] - Bf)) > tol * max(np.max(np.abs(rightf)), 1.0):
        raise NotInNormalForm("conjugated form does not continue the small block")
    D2 = right[k:k + 1, :k]
    C = nk.zeros_like_backend(k, 2, exact)
    C[:, 0:1] = C1
    C[:, 1:2] = C2
    Cprime = nk.zeros_like_backend(m, 2, exact)
    Cprime[:, 0:1] = C1prime
    Cprime[:, 1:2] = C2prime
    return CaloronData(k, m, A, B, C, D2, Aprime, Bprime, Cprime)


def right_normal_residual(data: CaloronData) -> float:
    """Deviation of monodromy^-1 M monodromy from the right-normal pattern: the
    continuing block B, the single bottom row D2, the shift block, and
    arbitrary entries only in the final column."""
    k, m = data.k, data.m
    N = nk.to_float(data.monodromy)
    M = nk.to_float(data.left_normal)
    right = np.linalg.inv(N) @ M @ N
    want = np.zeros_like(right)
    want[:k, :k] = nk.to_float(data.B)
    want[k:k + 1, :k] = nk.to_float(data.D2row)
    want[k:, k:] = nk.to_float(_shift_matrix(m, False))
    # free final column
    want[:, k + m - 1] = right[:, k + m - 1]
    return float(np.max(np.abs(right - want)))


# ---------------------------------------------------------------------------
# generation


def generate_caloron(k: int, m: int, seed: int = 0, exact: bool = False,
                     max_tries: int = 40):
    """Random validated caloron data at desk scale.

    Negative magnetic charge is folded onto its positive representative (the
    half-shift swaps the two interval ranks and the sign of m, so only one
    representative is ever materialized).  k = 1 uses the closed-form
    relation solve for any m; k >= 2 picks A with distinct eigenvalues,
    adjusts the second column of C so the product C D has no diagonal part
    in the A eigenbasis, then solves the commutator equation for B entry by
    entry.  m >= 1 needs D (2 x k) of full row rank, which limits the
    solver to k <= 2 there; rejected draws are retried.
    """
    m = abs(m)
    if m >= 1 and k > 2:
        raise ValueError("generator supports m >= 1 only for k <= 2")
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        data = _draw_caloron(k, m, rng, exact)
        if data is None:
            continue
        if validate(data).passed:
            return data
    raise RuntimeError(f"no validated caloron draw for k={k}, m={m}, seed={seed}")


def _rand_int_mat(rng, shape, lo=-4, hi=5):
    return rng.integers(lo, hi, size=shape)


def _draw_caloron(k: int, m: int, rng, exact: bool):
    if m == 0:
        return _draw_caloron_m0(k, rng, exact)
    # integer draws keep the exact backend available
    Ai = np.diag(rng.choice(np.arange(-6, 7), size=k, replace=False))
    D2 = _rand_int_mat(rng, (1, k))
    Ap = _rand_int_mat(rng, (m, k))
    if np.any(D2 == 0) or np.any(Ap[m - 1] == 0):
        return None
    D1 = Ap[m - 1:m, :]
    C1 = _rand_int_mat(rng, (k, 1))
    from fractions import Fraction
    D = np.vstack([D1, D2])
    C1D1 = C1 @ D1
    C2 = np.array([[Fraction(-C1D1[i, i], int(D2[0, i]))] for i in range(k)])
    CD = C1 @ D1 + C2 @ D2
    B = np.zeros((k, k), dtype=object)
    for i in range(k):
        for j in range(k):
            if i == j:
                B[i, j] = Fraction(int(rng.integers(-4, 5)))
            else:
                B[i, j] = Fraction(-CD[i, j], int(Ai[i, i] - Ai[j, j]))
    # relation 2: solve for Bprime (row) and Cprime rows against D
    Bp = np.array([[Fraction(int(x)) for x in _rand_int_mat(rng, (k,))]])
    em = np.zeros((m, 1), dtype=object)
    em[0, 0] = Fraction(1)
    ep = np.zeros((1, m), dtype=object)
    ep[0, m - 1] = Fraction(1)
    shift = np.zeros((m, m), dtype=object)
    for i in range(m - 1):
        shift[i + 1, i] = Fraction(1)
    K = em @ Bp @ Ai + shift @ Ap - Ap @ B      # m x k, must equal Cprime D
    Cp = np.zeros((m, 2), dtype=object)
    if k == 1:
        for i in range(m):
            Cp[i, 0] = Fraction(K[i, 0], int(D[0, 0])) if D[0, 0] else Fraction(0)
            if D[0, 0] == 0:
                return None
            Cp[i, 1] = Fraction(0)
    else:
        Dq = np.array([[Fraction(int(D[a, b])) if not isinstance(D[a, b], Fraction)
                        else D[a, b] for b in range(k)] for a in range(2)])
        det = Dq[0, 0] * Dq[1, 1] - Dq[0, 1] * Dq[1, 0]
        if det == 0:
            return None
        for i in range(m):
            rhs = K[i]
            Cp[i, 0] = (rhs[0] * Dq[1, 1] - rhs[1] * Dq[1, 0]) / det
            Cp[i, 1] = (-rhs[0] * Dq[0, 1] + rhs[1] * Dq[0, 0]) / det
    C = np.hstack([C1, C2])
    mats = dict(A=Ai, B=B, C=C, D2row=D2, Aprime=Ap, Bprime=Bp, Cprime=Cp)
    return _pack(CaloronData, dict(k=k, m=m), mats, exact)


def _draw_caloron_m0(k: int, rng, exact: bool):
    from fractions import Fraction
    Ai = np.diag(rng.choice(np.arange(-6, 7), size=k, replace=False))
    C1 = _rand_int_mat(rng, (k, 1))
    D1 = _rand_int_mat(rng, (1, k))
    D2 = _rand_int_mat(rng, (1, k))
    if np.any(D2 == 0):
        return None
    C1D1 = C1 @ D1
    C2 = np.array([[Fraction(-C1D1[i, i], int(D2[0, i]))] for i in range(k)])
    CD = C1 @ D1 + C2 @ D2
    B0 = np.zeros((k, k), dtype=object)
    for i in range(k):
        for j in range(k):
            if i == j:
                B0[i, j] = Fraction(int(rng.integers(-4, 5)))
            else:
                B0[i, j] = Fraction(-CD[i, j], int(Ai[i, i] - Ai[j, j]))
    C = np.hstack([C1, C2])
    D = np.vstack([D1, D2])
    mats = dict(A=Ai, B0=B0, C=C, D=D)
    return _pack(CaloronDataM0, dict(k=k), mats, exact)


def _pack(cls, meta, mats, exact: bool):
    from fractions import Fraction
    out = {}
    for name, M in mats.items():
        M = np.atleast_2d(M)
        if exact:
            rows = [[nk.GQ(e if isinstance(e, Fraction) else int(e))
                     for e in row] for row in M]
            out[name] = nk.exact_matrix(rows)
        else:
            out[name] = np.array([[complex(e) for e in row] for row in M])
    return cls(**meta, **out)
