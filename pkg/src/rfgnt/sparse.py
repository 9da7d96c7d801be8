"""Complex CSR matrices and the linear solvers the rest of the package uses.

Everything here is dense-vector / sparse-matrix: vectors are plain 1-D numpy
arrays, matrices are :class:`ComplexSparseMatrix` (CSR).  Products go through
scipy's compiled CSR kernels; the Krylov solvers (GMRES, CG, Arnoldi) are
written out here because their iteration counts and stopping rules are part of
the public contract.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp


@dataclass(frozen=True)
class Tolerances:
    """Numerical constants shared by the solvers."""

    arnoldi_breakdown: float = 1e-14
    gmres_restart: int = 200
    gmres_tol: float = 1e-10
    gmres_max_iter: int = 20000
    direct_tol: float = 1e-10
    # relative size of |d_alpha - d_zero| under which a secant update is void
    stalled_update: float = 1e-15


TOLERANCES = Tolerances()


class DimensionError(ValueError):
    pass


class SingularMatrixError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True, eq=False)
class ComplexSparseMatrix:
    """Compressed sparse row matrix with complex entries.

    Construct through :meth:`from_triplets` (sorts and sums duplicates) or
    :meth:`from_dense`; the raw constructor validates the CSR invariants.
    """

    n_rows: int
    n_cols: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray
    _csr: sp.csr_matrix = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        offsets = np.asarray(self.row_offsets, dtype=np.int64)
        cols = np.asarray(self.col_indices, dtype=np.int64)
        vals = np.asarray(self.values, dtype=np.complex128)
        if offsets.shape != (self.n_rows + 1,):
            raise DimensionError("row_offsets must have length n_rows + 1")
        if offsets[0] != 0 or offsets[-1] != vals.size or cols.size != vals.size:
            raise DimensionError("row_offsets inconsistent with stored entries")
        if np.any(np.diff(offsets) < 0):
            raise ValueError("row_offsets must be nondecreasing")
        if cols.size and (cols.min() < 0 or cols.max() >= self.n_cols):
            raise DimensionError("column index out of range")
        # strictly increasing columns inside each row
        if cols.size > 1:
            step = np.diff(cols)
            row_start = np.zeros(cols.size, dtype=bool)
            row_start[offsets[1:-1][offsets[1:-1] < cols.size]] = True
            if np.any((step <= 0) & ~row_start[1:]):
                raise ValueError("column indices must increase strictly within a row")
        object.__setattr__(self, "row_offsets", offsets)
        object.__setattr__(self, "col_indices", cols)
        object.__setattr__(self, "values", vals)
        csr = sp.csr_matrix((vals, cols, offsets), shape=(self.n_rows, self.n_cols))
        object.__setattr__(self, "_csr", csr)

    @classmethod
    def from_triplets(cls, n_rows, n_cols, rows, cols, vals):
        """Build from coordinate triplets; duplicate (row, col) pairs are summed."""
        rows = np.asarray(rows, dtype=np.int64).ravel()
        cols = np.asarray(cols, dtype=np.int64).ravel()
        vals = np.broadcast_to(np.asarray(vals, dtype=np.complex128), rows.shape).ravel()
        if rows.shape != cols.shape:
            raise DimensionError("rows and cols differ in length")
        if rows.size and (rows.min() < 0 or rows.max() >= n_rows):
            raise DimensionError("row index out of range")
        order = np.lexsort((cols, rows))
        rows, cols, vals = rows[order], cols[order], vals[order]
        if rows.size:
            new = np.ones(rows.size, dtype=bool)
            new[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
            starts = np.flatnonzero(new)
            vals = np.add.reduceat(vals, starts)
            rows, cols = rows[starts], cols[starts]
        offsets = np.zeros(n_rows + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=n_rows), out=offsets[1:])
        return cls(n_rows, n_cols, offsets, cols, vals)

    @classmethod
    def from_dense(cls, a):
        a = np.atleast_2d(np.asarray(a, dtype=np.complex128))
        rows, cols = np.nonzero(a)
        return cls.from_triplets(a.shape[0], a.shape[1], rows, cols, a[rows, cols])

    @classmethod
    def from_scipy(cls, m):
        m = sp.csr_matrix(m, dtype=np.complex128)
        m.sum_duplicates()
        m.sort_indices()
        return cls(m.shape[0], m.shape[1], m.indptr, m.indices, m.data)

    @classmethod
    def identity(cls, n):
        idx = np.arange(n)
        return cls.from_triplets(n, n, idx, idx, np.ones(n))

    @property
    def shape(self):
        return (self.n_rows, self.n_cols)

    @property
    def nnz(self):
        return int(self.values.size)

    def to_scipy(self) -> sp.csr_matrix:
        return self._csr

    def to_dense(self) -> np.ndarray:
        return self._csr.toarray()

    def conj_transpose(self) -> "ComplexSparseMatrix":
        return ComplexSparseMatrix.from_scipy(self._csr.conj().T)

    def __matmul__(self, x):
        return spmv(self, x)


def spmv(A: ComplexSparseMatrix, x) -> np.ndarray:
    """Return ``A @ x``."""
    x = np.asarray(x)
    if x.shape[0] != A.n_cols:
        raise DimensionError(f"expected vector of length {A.n_cols}, got {x.shape[0]}")
    return A.to_scipy() @ x.astype(np.complex128, copy=False)


def spmv_adjoint(A: ComplexSparseMatrix, y) -> np.ndarray:
    """Return ``A^* @ y`` with ``A^*`` the conjugate transpose."""
    y = np.asarray(y)
    if y.shape[0] != A.n_rows:
        raise DimensionError(f"expected vector of length {A.n_rows}, got {y.shape[0]}")
    return np.conj(A.to_scipy().T @ np.conj(y.astype(np.complex128, copy=False)))


@dataclass(frozen=True)
class SolveReport:
    """Outcome of an iterative solve.

    ``final_residual_norm`` is measured in the same sense as the tolerance the
    solver was given (relative for GMRES, absolute for CG).
    """

    iterations: int
    final_residual_norm: float
    converged: bool
    method: str = ""
    status: str = ""


def _matvec_of(A) -> Callable[[np.ndarray], np.ndarray]:
    if isinstance(A, ComplexSparseMatrix):
        csr = A.to_scipy()
        return lambda v: csr @ v
    if callable(A):
        return A
    return lambda v: A @ v


def _givens(a, b):
    """Complex rotation (c real, s complex) zeroing ``b`` against ``a``."""
    if b == 0:
        return 1.0, 0.0 + 0.0j, a
    if a == 0:
        return 0.0, np.conj(b) / abs(b), abs(b) + 0.0j
    r = np.hypot(abs(a), abs(b))
    phase = a / abs(a)
    return abs(a) / r, phase * np.conj(b) / r, phase * r


def solve_nonhermitian(A, b, tol: float = TOLERANCES.gmres_tol,
                       max_iter: int = TOLERANCES.gmres_max_iter,
                       restart: int = TOLERANCES.gmres_restart, x0=None):
    """Restarted GMRES for a general complex square system.

    Parameters
    ----------
    A : ComplexSparseMatrix or callable
        The operator.
    b : array
        Right-hand side.
    tol : float
        Relative residual target ``||Ax - b|| / ||b||``.
    max_iter : int
        Cap on the total number of Arnoldi steps over all cycles.
    restart : int
        Cycle length.

    Returns
    -------
    x, SolveReport
        On breakdown or when ``max_iter`` runs out, ``converged`` is False and
        ``x`` is the best iterate found.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if isinstance(A, ComplexSparseMatrix) and A.n_rows != A.n_cols:
        raise DimensionError("GMRES needs a square matrix")
    matvec = _matvec_of(A)
    b = np.asarray(b, dtype=np.complex128)
    n = b.shape[0]
    method = f"gmres({restart})"
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return np.zeros(n, dtype=np.complex128), SolveReport(0, 0.0, True, method, "zero-rhs")
    x = np.zeros(n, dtype=np.complex128) if x0 is None else np.array(x0, dtype=np.complex128)
    m = max(1, min(restart, n))
    total = 0
    status = "max-iter"
    while True:
        r = b - matvec(x)
        beta = np.linalg.norm(r)
        rel = beta / bnorm
        if rel <= tol:
            return x, SolveReport(total, rel, True, method, "converged")
        if total >= max_iter:
            return x, SolveReport(total, rel, False, method, status)
        V = np.zeros((n, m + 1), dtype=np.complex128)
        H = np.zeros((m + 1, m), dtype=np.complex128)
        cs = np.zeros(m)
        sn = np.zeros(m, dtype=np.complex128)
        g = np.zeros(m + 1, dtype=np.complex128)
        g[0] = beta
        V[:, 0] = r / beta
        j_used = 0
        broke = False
        for j in range(m):
            w = matvec(V[:, j])
            for i in range(j + 1):
                H[i, j] = np.vdot(V[:, i], w)
                w -= H[i, j] * V[:, i]
            hnext = np.linalg.norm(w)
            H[j + 1, j] = hnext
            for i in range(j):
                t = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
                H[i + 1, j] = -np.conj(sn[i]) * H[i, j] + cs[i] * H[i + 1, j]
                H[i, j] = t
            cs[j], sn[j], H[j, j] = _givens(H[j, j], H[j + 1, j])
            H[j + 1, j] = 0.0
            g[j + 1] = -np.conj(sn[j]) * g[j]
            g[j] = cs[j] * g[j]
            j_used = j + 1
            total += 1
            if hnext <= TOLERANCES.arnoldi_breakdown * max(1.0, abs(H[j, j])):
                broke = True
                break
            V[:, j + 1] = w / hnext
            if abs(g[j + 1]) / bnorm <= tol or total >= max_iter:
                break
        y = sla.solve_triangular(H[:j_used, :j_used], g[:j_used])
        x = x + V[:, :j_used] @ y
        if broke:
            r = b - matvec(x)
            rel = np.linalg.norm(r) / bnorm
            ok = rel <= tol
            return x, SolveReport(total, rel, bool(ok), method,
                                  "converged" if ok else "breakdown")


def solve_dense(A, b) -> np.ndarray:
    """Direct LU solve of a small dense system; raises on numerical singularity."""
    A = np.asarray(A)
    b = np.asarray(b)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError("solve_dense needs a square matrix")
    if b.shape[0] != A.shape[0]:
        raise DimensionError("right-hand side length mismatch")
    with warnings.catch_warnings():
        warnings.simplefilter("error", sla.LinAlgWarning)
        try:
            return sla.solve(A, b)
        except (sla.LinAlgWarning, np.linalg.LinAlgError) as exc:
            raise SingularMatrixError(f"matrix is singular to working precision: {exc}") from exc


def cg_real(apply_A: Callable[[np.ndarray], np.ndarray], b, tol: float, max_iter: int,
            step_guard: Optional[Callable[[np.ndarray], bool]] = None):
    """Conjugate gradients on a (presumed) symmetric real operator.

    Stops when the residual norm drops to ``tol`` (absolute), after
    ``max_iter`` iterations, or when ``step_guard(x)`` returns True for the
    current iterate.  If a search direction shows nonpositive curvature the
    current iterate is returned with status ``"negative-curvature"``.
    """
    b = np.asarray(b, dtype=float)
    x = np.zeros_like(b)
    r = b.copy()
    rr = float(r @ r)
    rnorm = np.sqrt(rr)
    if rnorm <= tol:
        return x, SolveReport(0, rnorm, True, "cg", "converged")
    p = r.copy()
    for it in range(1, max_iter + 1):
        Ap = apply_A(p)
        curv = float(p @ Ap)
        if curv <= 0:
            return x, SolveReport(it, rnorm, False, "cg", "negative-curvature")
        step = rr / curv
        x = x + step * p
        r = r - step * Ap
        rr_new = float(r @ r)
        rnorm = np.sqrt(rr_new)
        if rnorm <= tol:
            return x, SolveReport(it, rnorm, True, "cg", "converged")
        if step_guard is not None and step_guard(x):
            return x, SolveReport(it, rnorm, False, "cg", "step-floor")
        p = r + (rr_new / rr) * p
        rr = rr_new
    return x, SolveReport(max_iter, rnorm, False, "cg", "max-iter")


def arnoldi_start(b):
    """Initial Arnoldi state: one normalized basis vector, empty Hessenberg."""
    b = np.asarray(b, dtype=np.complex128)
    beta = np.linalg.norm(b)
    if beta == 0:
        raise ValueError("cannot start a Krylov space from the zero vector")
    return (b / beta)[:, None], np.zeros((1, 0), dtype=np.complex128)


def arnoldi_extend(A, basis, hessenberg, breakdown_tol: float = TOLERANCES.arnoldi_breakdown):
    """Append one Arnoldi vector (modified Gram-Schmidt, one reorthogonalization).

    ``basis`` is ``V_{j+1}`` with shape ``(n, j+1)`` and ``hessenberg`` is the
    ``(j+1, j)`` matrix with ``A V_j = V_{j+1} H``.  Returns
    ``(basis, hessenberg, breakdown)``.  Without breakdown the shapes grow to
    ``(n, j+2)`` and ``(j+2, j+1)``.  On breakdown the Krylov space is
    invariant: the basis is returned unchanged and the Hessenberg matrix is
    the square ``(j+1, j+1)`` matrix with ``A V = V H``.
    """
    matvec = _matvec_of(A)
    V = np.asarray(basis)
    H = np.asarray(hessenberg)
    j = H.shape[1]
    if V.shape[1] != j + 1 or H.shape[0] != j + 1:
        raise DimensionError("basis and hessenberg are inconsistent")
    w = matvec(V[:, j]).astype(np.complex128)
    scale = np.linalg.norm(w)
    h = np.zeros(j + 2, dtype=np.complex128)
    for _ in range(2):
        for i in range(j + 1):
            c = np.vdot(V[:, i], w)
            h[i] += c
            w -= c * V[:, i]
    hnext = np.linalg.norm(w)
    H_new = np.zeros((j + 2, j + 1), dtype=np.complex128)
    H_new[: j + 1, :j] = H
    H_new[:, j] = h
    if hnext <= breakdown_tol * max(scale, 1.0) or hnext == 0:
        return V, H_new[: j + 1, :], True
    H_new[j + 1, j] = hnext
    return np.column_stack([V, w / hnext]), H_new, False
