"""Scalar backends and tolerance-aware linear algebra.

Two matrix backends are used throughout the package:

* float: ``numpy`` arrays of ``complex128``.  Every rank or kernel decision
  is made against a :class:`ToleranceContext` and must be backed by a
  multiplicative singular-value gap; ambiguous gaps raise
  :class:`GapTooSmall` instead of silently picking a rank.
* exact: ``numpy`` object arrays of :class:`GaussianRational` (complex
  numbers with ``Fraction`` real and imaginary parts).  Rank decisions are
  made by exact elimination and need no gap.

The structured solvers at the bottom (common eigenvector search, pencil
surjectivity, quotient representatives) are what the non-degeneracy
conditions of the matrix data reduce to.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any

import numpy as np


class GapTooSmall(Exception):
    """A float-backend rank decision had no decisive singular-value gap."""


class DegeneratePencil(Exception):
    """A pencil drops rank identically; the failure set is infinite."""


class ImageNotContained(Exception):
    """Quotient requested for spaces that are not nested to tolerance."""


class ProbabilisticOnly(Exception):
    """Reserved flag for sampling-based fallbacks of the eigenvector search.

    The implemented search is spectral and deterministic for every subspace
    dimension, so this is never raised; it is kept so callers can guard the
    interface uniformly.
    """


# ---------------------------------------------------------------------------
# scalars


class GaussianRational:
    """Element of Q(i), stored as a pair of Fractions.

    Arithmetic is closed and exact; division by zero raises
    ``ZeroDivisionError`` as usual.
    """

    __slots__ = ("re", "im")

    def __init__(self, re=0, im=0):
        self.re = Fraction(re)
        self.im = Fraction(im)

    # -- ring ops ----------------------------------------------------------
    def __add__(self, other):
        other = _coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return GaussianRational(self.re + other.re, self.im + other.im)

    __radd__ = __add__

    def __sub__(self, other):
        other = _coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return GaussianRational(self.re - other.re, self.im - other.im)

    def __rsub__(self, other):
        other = _coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return other - self

    def __mul__(self, other):
        other = _coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return GaussianRational(
            self.re * other.re - self.im * other.im,
            self.re * other.im + self.im * other.re,
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _coerce(other)
        if other is NotImplemented:
            return NotImplemented
        d = other.re * other.re + other.im * other.im
        if d == 0:
            raise ZeroDivisionError("division by zero GaussianRational")
        return GaussianRational(
            (self.re * other.re + self.im * other.im) / d,
            (self.im * other.re - self.re * other.im) / d,
        )

    def __rtruediv__(self, other):
        other = _coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return other / self

    def __neg__(self):
        return GaussianRational(-self.re, -self.im)

    def __pow__(self, n: int):
        if not isinstance(n, int) or n < 0:
            return NotImplemented
        out = GaussianRational(1)
        base = self
        while n:
            if n & 1:
                out = out * base
            base = base * base
            n >>= 1
        return out

    def __eq__(self, other):
        other = _coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return self.re == other.re and self.im == other.im

    def __hash__(self):
        return hash((self.re, self.im))

    def __bool__(self):
        return self.re != 0 or self.im != 0

    # -- misc ---------------------------------------------------------------
    def conjugate(self):
        return GaussianRational(self.re, -self.im)

    def abs2(self) -> Fraction:
        return self.re * self.re + self.im * self.im

    def to_complex(self) -> complex:
        return complex(self.re) + 1j * complex(self.im)

    def __repr__(self):
        return f"GQ({self.re}{'+' if self.im >= 0 else ''}{self.im}i)"


def _coerce(x):
    if isinstance(x, GaussianRational):
        return x
    if isinstance(x, (int, Fraction)):
        return GaussianRational(x, 0)
    return NotImplemented


GQ = GaussianRational

GQ_ZERO = GQ(0)
GQ_ONE = GQ(1)


def rationalize(z: complex, max_den: int = 10**6, tol: float = 1e-9):
    """Best GaussianRational approximation of ``z``, or None if not close."""
    re = Fraction(float(np.real(z))).limit_denominator(max_den)
    im = Fraction(float(np.imag(z))).limit_denominator(max_den)
    if abs(float(re) - np.real(z)) <= tol and abs(float(im) - np.imag(z)) <= tol:
        return GQ(re, im)
    return None


# ---------------------------------------------------------------------------
# matrices (both backends are plain numpy arrays)


def is_exact(M) -> bool:
    return getattr(M, "dtype", None) == np.dtype(object)


def exact_matrix(rows) -> np.ndarray:
    """Object array of GaussianRationals from nested int/Fraction/GQ data."""
    rows = [[e if isinstance(e, GQ) else GQ(e) for e in row] for row in rows]
    out = np.empty((len(rows), len(rows[0]) if rows else 0), dtype=object)
    for i, row in enumerate(rows):
        for j, e in enumerate(row):
            out[i, j] = e
    return out


def exact_zeros(m: int, n: int) -> np.ndarray:
    out = np.empty((m, n), dtype=object)
    out[:] = GQ_ZERO
    return out


def exact_eye(n: int) -> np.ndarray:
    out = exact_zeros(n, n)
    for i in range(n):
        out[i, i] = GQ_ONE
    return out


def to_float(M: np.ndarray) -> np.ndarray:
    if not is_exact(M):
        return np.asarray(M, dtype=complex)
    out = np.zeros(M.shape, dtype=complex)
    for idx, e in np.ndenumerate(M):
        out[idx] = e.to_complex()
    return out


def zeros_like_backend(m: int, n: int, exact: bool) -> np.ndarray:
    return exact_zeros(m, n) if exact else np.zeros((m, n), dtype=complex)


def eye_like_backend(n: int, exact: bool) -> np.ndarray:
    return exact_eye(n) if exact else np.eye(n, dtype=complex)


def mat_mul(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    if A.shape[1] != B.shape[0]:
        raise ValueError(f"shape mismatch {A.shape} @ {B.shape}")
    if A.shape[0] == 0 or B.shape[1] == 0 or A.shape[1] == 0:
        exact = is_exact(A) or is_exact(B)
        return zeros_like_backend(A.shape[0], B.shape[1], exact)
    return np.dot(A, B)


def mat_norm(M: np.ndarray) -> float:
    if M.size == 0:
        return 0.0
    return float(np.linalg.norm(to_float(M)))


def is_zero_matrix(M: np.ndarray, tol: float = 0.0) -> bool:
    if M.size == 0:
        return True
    if is_exact(M):
        return all(not e for e in M.flat)
    return bool(np.max(np.abs(M)) <= tol)


def conj_transpose(M: np.ndarray) -> np.ndarray:
    if is_exact(M):
        out = np.empty((M.shape[1], M.shape[0]), dtype=object)
        for (i, j), e in np.ndenumerate(M):
            out[j, i] = e.conjugate()
        return out
    return M.conj().T


# ---------------------------------------------------------------------------
# tolerance context


@dataclass(frozen=True)
class ToleranceContext:
    """Rank decisions keep singular values above ``rank_tol`` (relative) and
    require a multiplicative gap of at least ``gap_factor`` across the cut."""

    rank_tol: float = 1e-10
    gap_factor: float = 1e3

    def require_gap(self, sigma: np.ndarray, rank: int) -> float:
        """Achieved gap across the rank cut; raises if indecisive."""
        if rank == 0 or rank >= len(sigma):
            return np.inf
        if sigma[rank] == 0.0:
            return np.inf
        gap = sigma[rank - 1] / sigma[rank]
        if gap < self.gap_factor:
            raise GapTooSmall(
                f"singular values {sigma[rank-1]:.3e} / {sigma[rank]:.3e} "
                f"give gap {gap:.1f} < {self.gap_factor}"
            )
        return float(gap)


DEFAULT_CTX = ToleranceContext()


# ---------------------------------------------------------------------------
# rank / kernel


@dataclass
class RankKernel:
    rank: int
    kernel: np.ndarray     # n x (n - rank), columns span the right kernel
    cokernel: np.ndarray   # m x (m - rank), columns span the left kernel
    gap: float = np.inf    # inf on the exact backend


def rank_kernel(M: np.ndarray, ctx: ToleranceContext = DEFAULT_CTX) -> RankKernel:
    """Rank with kernel and cokernel bases.

    Float backend: SVD with relative threshold plus gap certificate.
    Exact backend: Gaussian elimination over Q(i), gap-free.
    """
    m, n = M.shape
    if is_exact(M):
        rank, kernel = _exact_rank_kernel(M)
        _, cokernel = _exact_rank_kernel(conj_transpose(M))
        return RankKernel(rank, kernel, cokernel, np.inf)
    M = np.asarray(M, dtype=complex)
    if m == 0 or n == 0:
        return RankKernel(0, np.eye(n, dtype=complex), np.eye(m, dtype=complex))
    U, s, Vh = np.linalg.svd(M)
    smax = s[0] if len(s) else 0.0
    if smax == 0.0:
        return RankKernel(0, np.eye(n, dtype=complex), np.eye(m, dtype=complex))
    rank = int(np.sum(s > ctx.rank_tol * smax))
    gap = ctx.require_gap(s, rank)
    kernel = Vh[rank:].conj().T
    cokernel = U[:, rank:]
    return RankKernel(rank, kernel, cokernel, gap)


def _exact_rank_kernel(M: np.ndarray):
    """Row echelon over Q(i); returns (rank, kernel basis as object array)."""
    m, n = M.shape
    R = M.copy()
    pivots: list[int] = []
    r = 0
    for c in range(n):
        # pick the largest remaining entry in this column as pivot
        best, best_i = None, None
        for i in range(r, m):
            e = R[i, c]
            if e:
                a = e.abs2()
                if best is None or a > best:
                    best, best_i = a, i
        if best_i is None:
            continue
        if best_i != r:
            R[[r, best_i]] = R[[best_i, r]]
        piv = R[r, c]
        for j in range(c, n):
            R[r, j] = R[r, j] / piv
        for i in range(m):
            if i != r and R[i, c]:
                f = R[i, c]
                for j in range(c, n):
                    R[i, j] = R[i, j] - f * R[r, j]
        pivots.append(c)
        r += 1
        if r == m:
            break
    rank = len(pivots)
    free = [c for c in range(n) if c not in pivots]
    kernel = exact_zeros(n, len(free))
    for jf, c in enumerate(free):
        kernel[c, jf] = GQ_ONE
        for i, pc in enumerate(pivots):
            kernel[pc, jf] = -R[i, c]
    return rank, kernel


def nullspace(M: np.ndarray, ctx: ToleranceContext = DEFAULT_CTX) -> np.ndarray:
    return rank_kernel(M, ctx).kernel


def exact_solve(A: np.ndarray, b: np.ndarray):
    """One exact solution of A x = b, or None if inconsistent."""
    m, n = A.shape
    aug = exact_zeros(m, n + b.shape[1])
    aug[:, :n] = A
    aug[:, n:] = b
    rank_a, _ = _exact_rank_kernel(A)
    rank_aug, kern = _exact_rank_kernel(aug)
    if rank_aug != rank_a:
        return None
    # back-substitution via the echelon form of the augmented system
    R = aug.copy()
    pivots = []
    r = 0
    for c in range(n):
        best_i = None
        for i in range(r, m):
            if R[i, c]:
                best_i = i
                break
        if best_i is None:
            continue
        if best_i != r:
            R[[r, best_i]] = R[[best_i, r]]
        piv = R[r, c]
        for j in range(c, n + b.shape[1]):
            R[r, j] = R[r, j] / piv
        for i in range(m):
            if i != r and R[i, c]:
                f = R[i, c]
                for j in range(c, n + b.shape[1]):
                    R[i, j] = R[i, j] - f * R[r, j]
        pivots.append(c)
        r += 1
    x = exact_zeros(n, b.shape[1])
    for i, pc in enumerate(pivots):
        for j in range(b.shape[1]):
            x[pc, j] = R[i, n + j]
    return x


# ---------------------------------------------------------------------------
# characteristic polynomials and determinants


def charpoly(M: np.ndarray):
    """Coefficients of det(eta I - M), highest degree first.

    Exact backend uses Faddeev-LeVerrier (divisions by integers only stay in
    Q(i)); float backend defers to numpy.
    """
    n = M.shape[0]
    if not is_exact(M):
        if n == 0:
            return np.array([1.0 + 0j])
        return np.poly(np.asarray(M, dtype=complex))
    coeffs = [GQ_ONE]
    Mk = exact_eye(n)
    for k in range(1, n + 1):
        Mk = mat_mul(M, Mk)
        tr = GQ_ZERO
        for i in range(n):
            tr = tr + Mk[i, i]
        c = tr / GQ(-k)
        coeffs.append(c)
        for i in range(n):
            Mk[i, i] = Mk[i, i] + c
    return coeffs


def exact_det(M: np.ndarray) -> GaussianRational:
    cp = charpoly(M)
    n = M.shape[0]
    return cp[-1] * GQ((-1) ** n) if n % 2 else cp[-1]


# ---------------------------------------------------------------------------
# validation report plumbing


@dataclass
class CheckResult:
    name: str
    passed: bool
    residual: float = 0.0
    certificate: Any = None
    note: str = ""

    def to_json(self) -> dict:
        out = {"name": self.name, "status": "pass" if self.passed else "fail",
               "residual": self.residual}
        if self.certificate is not None:
            out["certificate"] = _jsonable(self.certificate)
        if self.note:
            out["note"] = self.note
        return out


def _jsonable(x):
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, complex):
        return [x.real, x.imag]
    if isinstance(x, np.ndarray):
        return _jsonable(to_float(x).tolist())
    if isinstance(x, GaussianRational):
        return {"re": {"n": x.re.numerator, "d": x.re.denominator},
                "im": {"n": x.im.numerator, "d": x.im.denominator}}
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.complexfloating):
        return [x.real.item(), x.imag.item()]
    return x


@dataclass
class ValidationReport:
    checks: list[CheckResult] = field(default_factory=list)

    def add(self, name, passed, residual=0.0, certificate=None, note=""):
        self.checks.append(CheckResult(name, bool(passed), float(residual),
                                       certificate, note))

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_json(self) -> dict:
        return {"status": "pass" if self.passed else "fail",
                "checks": [c.to_json() for c in self.checks]}

    def render(self) -> str:
        lines = []
        for c in self.checks:
            tag = "PASS" if c.passed else "FAIL"
            line = f"{tag:4s}  {c.name:32s} residual={c.residual:.3e}"
            if c.note:
                line += f"  ({c.note})"
            lines.append(line)
        lines.append(f"overall: {'pass' if self.passed else 'fail'}")
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# affine pencils in two parameters


@dataclass
class AffinePencil2:
    """M(xi, eta) = M0 + xi*M1 + eta*M2, all blocks of one shape."""

    M0: np.ndarray
    M1: np.ndarray
    M2: np.ndarray

    def __post_init__(self):
        if not (self.M0.shape == self.M1.shape == self.M2.shape):
            raise ValueError("pencil blocks must share a shape")

    def at(self, xi: complex, eta: complex) -> np.ndarray:
        return self.M0 + xi * self.M1 + eta * self.M2


# ---------------------------------------------------------------------------
# common eigenvector obstruction


@dataclass
class Obstruction:
    xi: complex
    eta: complex
    vector: np.ndarray
    residual: float
    exact_checked: bool = False


def _cluster(values: np.ndarray, tol: float) -> list[complex]:
    out: list[complex] = []
    for v in sorted(values, key=lambda z: (z.real, z.imag)):
        if not any(abs(v - w) <= tol for w in out):
            out.append(complex(v))
    return out


def common_eigenvector_obstruction(A, B, D, ctx: ToleranceContext = DEFAULT_CTX,
                                   exact_check: bool = True) -> list[Obstruction]:
    """All (xi, eta, v) with v != 0, Av = xi v, Bv = eta v, Dv = 0.

    An empty list certifies that the stacked pencil (A - xi; B - eta; D) is
    injective for every (xi, eta).  The search is spectral and deterministic:
    xi must be an eigenvalue of A, and within W = ker(A - xi) ∩ ker D the
    remaining condition B v = eta v is linear once eta is pinned to an
    eigenvalue of the compression of B to W.
    """
    Af, Bf, Df = to_float(A), to_float(B), to_float(D)
    k = Af.shape[0]
    if k == 0:
        return []
    scale = max(np.linalg.norm(Af), np.linalg.norm(Bf), np.linalg.norm(Df), 1.0)
    vtol = max(ctx.rank_tol * scale * 100, 1e-8 * scale)
    eigs = np.linalg.eigvals(Af)
    found: list[Obstruction] = []
    for xi in _cluster(eigs, 1e-8 * max(1.0, np.max(np.abs(eigs)))):
        stacked = np.vstack([Af - xi * np.eye(k), Df])
        W = rank_kernel(stacked, ctx).kernel
        if W.shape[1] == 0:
            continue
        Q, _ = np.linalg.qr(W)
        S = Q.conj().T @ Bf @ Q
        G = (np.eye(k) - Q @ Q.conj().T) @ Bf @ Q
        for eta in _cluster(np.linalg.eigvals(S), 1e-8 * max(1.0, np.linalg.norm(S))):
            joint = np.vstack([S - eta * np.eye(S.shape[0]), G])
            C = rank_kernel(joint, ctx).kernel
            for j in range(C.shape[1]):
                v = Q @ C[:, j]
                v = v / np.linalg.norm(v)
                res = max(np.linalg.norm(Af @ v - xi * v),
                          np.linalg.norm(Bf @ v - eta * v),
                          np.linalg.norm(Df @ v) if Df.size else 0.0)
                if res <= vtol:
                    ob = Obstruction(complex(xi), complex(eta), v, float(res))
                    if exact_check and is_exact(A):
                        ob.exact_checked = _exact_certificate(A, B, D, xi, eta, v)
                    found.append(ob)
    return found


def _exact_certificate(A, B, D, xi, eta, v) -> bool:
    """Re-verify a float certificate exactly when xi, eta rationalize."""
    xq, eq = rationalize(xi), rationalize(eta)
    if xq is None or eq is None:
        return False
    k = A.shape[0]
    stacked = exact_zeros(2 * k + D.shape[0], k)
    for i in range(k):
        for j in range(k):
            stacked[i, j] = A[i, j] - (xq if i == j else GQ_ZERO)
            stacked[k + i, j] = B[i, j] - (eq if i == j else GQ_ZERO)
    for i in range(D.shape[0]):
        for j in range(k):
            stacked[2 * k + i, j] = D[i, j]
    rank, _ = _exact_rank_kernel(stacked)
    return rank < k


# ---------------------------------------------------------------------------
# pencil surjectivity


def pencil_surjectivity_failures(Y, Z0, Z1, ctx: ToleranceContext = DEFAULT_CTX,
                                 seed: int = 20240203) -> list[complex]:
    """All eta at which [Y | Z0 + eta Z1] drops row rank.

    Restricting to the left kernel of Y turns this into a finite root
    problem: the compressed pencil P(eta) must lose row rank.  Candidate
    roots come from determinant interpolation of random column compressions
    (rank drops survive any compression, so no failure is missed); each
    candidate is then verified directly on [Y | Z(eta)].
    """
    Yf, Z0f, Z1f = to_float(Y), to_float(Z0), to_float(Z1)
    if Yf.shape[0] != Z0f.shape[0] or Z0f.shape != Z1f.shape:
        raise ValueError("row counts must agree")
    m = Yf.shape[0]
    L = rank_kernel(Yf, ctx).cokernel      # m x c
    c = L.shape[1]
    if c == 0:
        return []
    P0 = L.conj().T @ Z0f
    P1 = L.conj().T @ Z1f
    n = P0.shape[1]
    if n < c:
        raise DegeneratePencil(
            f"left kernel of Y has dimension {c} > {n} pencil columns; "
            "row rank drops for every eta")
    rng = np.random.default_rng(seed)
    scale = max(np.linalg.norm(P0), np.linalg.norm(P1), 1.0)
    candidates: list[complex] = []
    degenerate = 0
    for _ in range(2):
        R = rng.standard_normal((n, c)) + 1j * rng.standard_normal((n, c))
        # det of the c x c compression, interpolated at c+1 nodes
        nodes = np.exp(2j * np.pi * np.arange(c + 1) / (c + 1)) * (1.0 + scale)
        vals = np.array([np.linalg.det(P0 @ R + t * (P1 @ R)) for t in nodes])
        coeffs = np.polyfit(nodes, vals, c)
        if np.max(np.abs(coeffs)) <= 1e-12 * max(1.0, scale ** c):
            degenerate += 1
            continue
        lead = np.max(np.abs(coeffs))
        trimmed = np.trim_zeros(np.where(np.abs(coeffs) > 1e-12 * lead, coeffs, 0), "f")
        if len(trimmed) > 1:
            candidates.extend(np.roots(trimmed))
    if degenerate == 2:
        raise DegeneratePencil("compressed pencil determinant vanishes identically")
    # verify candidates on the full [Y | Z(eta)]
    failures: list[complex] = []
    full_scale = max(np.linalg.norm(Yf), np.linalg.norm(Z0f), np.linalg.norm(Z1f), 1.0)
    for eta in _cluster(np.array(candidates, dtype=complex), 1e-7 * max(1.0, scale)):
        Mfull = np.hstack([Yf, Z0f + eta * Z1f])
        s = np.linalg.svd(Mfull, compute_uv=False)
        if len(s) < m or s[-1] <= 1e-7 * full_scale:
            failures.append(complex(eta))
    return failures


# ---------------------------------------------------------------------------
# quotient representatives


def quotient_representatives(kernel_basis: np.ndarray, image_basis: np.ndarray,
                             ctx: ToleranceContext = DEFAULT_CTX) -> np.ndarray:
    """Basis of a complement of span(image) inside span(kernel).

    Raises :class:`ImageNotContained` when the inclusion fails beyond
    tolerance, which upstream signals a broken composite (beta o alpha != 0).
    """
    K, I = kernel_basis, image_basis
    if is_exact(K) or is_exact(I):
        return _exact_quotient(K, I)
    K = np.asarray(K, dtype=complex)
    I = np.asarray(I, dtype=complex)
    n = K.shape[0]
    if K.shape[1] == 0:
        if I.shape[1] != 0 and np.linalg.norm(I) > ctx.rank_tol:
            raise ImageNotContained("nonzero image with zero kernel")
        return np.zeros((n, 0), dtype=complex)
    QK, _ = np.linalg.qr(K)
    if I.shape[1]:
        resid = np.linalg.norm(I - QK @ (QK.conj().T @ I))
        if resid > max(ctx.rank_tol * 1e3, 1e-8) * max(np.linalg.norm(I), 1.0):
            raise ImageNotContained(f"containment residual {resid:.3e}")
        QI, _ = np.linalg.qr(I)
        rk_i = rank_kernel(I, ctx).rank
        QI = QI[:, :rk_i]
        C = QK - QI @ (QI.conj().T @ QK)
    else:
        rk_i = 0
        C = QK
    rk = rank_kernel(K, ctx).rank
    want = rk - rk_i
    if want <= 0:
        return np.zeros((n, 0), dtype=complex)
    U, s, _ = np.linalg.svd(C, full_matrices=False)
    return U[:, :want]


def _exact_quotient(K: np.ndarray, I: np.ndarray) -> np.ndarray:
    n = K.shape[0]
    if I.shape[1]:
        sol = exact_solve(K, I)
        if sol is None:
            raise ImageNotContained("image not contained in kernel (exact)")
    # row-reduce [I | K]; pivot columns landing in the K block are reps
    aug = exact_zeros(n, I.shape[1] + K.shape[1])
    aug[:, : I.shape[1]] = I
    aug[:, I.shape[1]:] = K
    R = aug.copy()
    m, ncols = R.shape
    pivots = []
    r = 0
    for c in range(ncols):
        best_i = None
        for i in range(r, m):
            if R[i, c]:
                best_i = i
                break
        if best_i is None:
            continue
        if best_i != r:
            R[[r, best_i]] = R[[best_i, r]]
        piv = R[r, c]
        for j in range(c, ncols):
            R[r, j] = R[r, j] / piv
        for i in range(m):
            if i != r and R[i, c]:
                f = R[i, c]
                for j in range(c, ncols):
                    R[i, j] = R[i, j] - f * R[r, j]
        pivots.append(c)
        r += 1
    reps = [c - I.shape[1] for c in pivots if c >= I.shape[1]]
    out = exact_zeros(n, len(reps))
    for j, col in enumerate(reps):
        out[:, j] = K[:, col]
    return out
