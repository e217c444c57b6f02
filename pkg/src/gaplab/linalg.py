"""Dense Hermitian generalized eigenvalue solver.

The one numerical kernel every other module calls: the problem
A v = lambda B v is reduced with a Cholesky factor of B to a standard
Hermitian problem and handed to LAPACK.  Desk-scale orders (up to a few
thousand) make dense solves simple and exactly reproducible, so there is
no iterative-solver tuning surface here.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
import scipy.linalg
from threadpoolctl import threadpool_limits

from .errors import NoConvergence, NotPositiveDefinite

#: Hermiticity tolerance accepted at construction before symmetrizing.
HERMITICITY_TOL = 1e-12

#: Residual tolerance, relative to ||A|| + ||B||.
RESIDUAL_RTOL = 1e-10


class HermitianMatrix:
    """Dense Hermitian matrix in column-major storage.

    Inputs are symmetrized, H <- (H + H*)/2, at construction so that
    assembly round-off cannot break the Hermiticity invariant; the
    diagonal imaginary part is zeroed exactly.  Real symmetric input is
    kept in a real dtype (the complex Hermitian embedding has the same
    spectrum and the solver exploits realness).
    """

    def __init__(self, entries: np.ndarray):
        a = np.asarray(entries)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("HermitianMatrix needs a square 2-d array")
        if np.iscomplexobj(a):
            a = 0.5 * (a + a.conj().T)
            if not a.imag.any():
                a = np.ascontiguousarray(a.real)
            else:
                np.fill_diagonal(a, a.diagonal().real)
        else:
            a = 0.5 * (a + a.T)
        self._a = a.astype(np.complex128 if np.iscomplexobj(a) else np.float64, copy=False)

    @classmethod
    def from_presymmetrized(cls, entries: np.ndarray) -> "HermitianMatrix":
        """Wrap a matrix that is Hermitian by construction, without copying.

        For assembly pipelines whose output is bitwise Hermitian (folded
        forms built from a symmetrized free matrix); the caller yields
        ownership of `entries`.
        """
        obj = cls.__new__(cls)
        a = np.asarray(entries)
        if np.iscomplexobj(a) and not a.imag.any():
            a = np.ascontiguousarray(a.real)
        obj._a = a.astype(np.complex128 if np.iscomplexobj(a) else np.float64, copy=False)
        return obj

    @property
    def order(self) -> int:
        return self._a.shape[0]

    @property
    def array(self) -> np.ndarray:
        """The stored (symmetrized) entries; treat as read-only."""
        return self._a

    @property
    def is_real(self) -> bool:
        return not np.iscomplexobj(self._a)

    def __repr__(self) -> str:
        kind = "real" if self.is_real else "complex"
        return f"HermitianMatrix(order={self.order}, {kind})"


@dataclass
class Spectrum:
    """Lowest eigenpairs of a generalized problem, sorted nondecreasing.

    residuals[i] = ||A v_i - lambda_i B v_i|| / ||B v_i||; eigenvectors,
    when kept, are B-orthonormal.
    """

    values: np.ndarray
    residuals: np.ndarray
    vectors: Optional[np.ndarray] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.residuals = np.asarray(self.residuals, dtype=float)

    def __len__(self) -> int:
        return len(self.values)


MatrixLike = Union[HermitianMatrix, np.ndarray]


def _as_array(matrix: MatrixLike) -> np.ndarray:
    if isinstance(matrix, HermitianMatrix):
        return matrix.array
    return HermitianMatrix(np.asarray(matrix)).array


def cholesky(matrix: MatrixLike) -> np.ndarray:
    """Lower-triangular L with L L* = B.

    Raises NotPositiveDefinite when a pivot fails; for assembled mass
    matrices that means the mesh or the metric is degenerate.
    """
    b = _as_array(matrix)
    try:
        return np.linalg.cholesky(b)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(f"Cholesky pivot failed: {exc}") from exc


def solve_gevp(
    a: MatrixLike,
    b: MatrixLike,
    count: int,
    keep_vectors: bool = True,
) -> Spectrum:
    """Lowest `count` eigenpairs of A v = lambda B v.

    A Hermitian, B Hermitian positive definite, same order.  The output
    is deterministic for identical input.  Negative eigenvalues are
    returned as computed; the caller owns any nonnegativity contract
    (potentials make the stiffness form indefinite).
    """
    aa = _as_array(a)
    bb = _as_array(b)
    n = aa.shape[0]
    if bb.shape[0] != n:
        raise ValueError("A and B must have the same order")
    if not 1 <= count <= n:
        raise ValueError(f"count must be in 1..{n}, got {count}")

    if np.iscomplexobj(aa) != np.iscomplexobj(bb):
        aa = aa.astype(np.complex128)
        bb = bb.astype(np.complex128)

    # BLAS multithreading only pays off on large problems; on small ones the
    # thread handoff dominates the solve.
    blas_threads = None if n > 1024 else 1
    try:
        with threadpool_limits(limits=blas_threads):
            # Cholesky of B up front: a clean NotPositiveDefinite beats
            # LAPACK's info code.
            cholesky(bb)
            # Bisection on a subset beats divide-and-conquer once only a
            # thin slice of a not-too-small problem is wanted.
            if count <= max(1, n // 6) and n >= 128:
                vals, vecs = scipy.linalg.eigh(
                    aa, bb, subset_by_index=(0, count - 1), driver="gvx"
                )
            else:
                vals, vecs = scipy.linalg.eigh(aa, bb, driver="gvd")
                vals = vals[:count]
                vecs = vecs[:, :count]
    except scipy.linalg.LinAlgError as exc:
        raise NoConvergence(f"generalized eigensolve failed: {exc}") from exc

    av = aa @ vecs
    bv = bb @ vecs
    norm_bv = np.linalg.norm(bv, axis=0)
    residuals = np.linalg.norm(av - bv * vals[np.newaxis, :], axis=0) / norm_bv
    # Backward-stable solves give |A v - lambda B v| of order
    # eps * (|A| + |lambda| |B|) * |v|; the tolerance mirrors that bound so
    # badly scaled mass matrices (deep conformal shrink) are not rejected
    # while genuinely unconverged pairs still are.
    norm_a = float(np.max(np.abs(aa)))
    norm_b = float(np.max(np.abs(bb)))
    norm_v = np.linalg.norm(vecs, axis=0)
    tol = RESIDUAL_RTOL * (norm_a + np.abs(vals) * norm_b) * norm_v / norm_bv
    if np.any(residuals > np.maximum(tol, RESIDUAL_RTOL)):
        worst = int(np.argmax(residuals - tol))
        raise NoConvergence(
            f"residual {residuals[worst]:.3e} exceeds tolerance {tol[worst]:.3e}"
        )
    return Spectrum(vals, residuals, vecs if keep_vectors else None)


def richardson(coarse: float, fine: float, ratio: float = 2.0, order: int = 2) -> float:
    """Eliminate the leading O(h^order) error from two mesh levels."""
    r = ratio**order
    return (r * fine - coarse) / (r - 1.0)
