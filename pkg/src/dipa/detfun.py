"""Determinant objectives over arc-weight vectors, their derivatives, and a
pivot-free LU factorization for the structured matrices they produce.

The weight vector x assembles into a row-stochastic matrix P. Two smooth
objectives are exposed: f_minor(x) = -det(M) with M the leading principal
minor of I - P (doubly stochastic mode), and f_full(x) = -det(I - P + J/n)
with J the all-ones matrix (row stochastic mode). Both reach their feasible
minimum exactly at Hamiltonian cycle indicators.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from dipa.graph import ArcVarMap


def positions(m: ArcVarMap) -> dict:
    return {v: t for t, v in enumerate(m.nodes)}


def arc_positions(m: ArcVarMap) -> tuple:
    """Row and column matrix positions of every arc, as two int arrays."""
    pos = positions(m)
    r = np.array([pos[i] for i, _ in m.arcs], dtype=np.intp)
    c = np.array([pos[j] for _, j in m.arcs], dtype=np.intp)
    return r, c


def assemble_P(m: ArcVarMap, x: np.ndarray) -> np.ndarray:
    n = len(m.nodes)
    x = np.asarray(x, dtype=float)
    if x.shape != (m.n_arcs,):
        raise ValueError(f"x has shape {x.shape}, expected ({m.n_arcs},)")
    P = np.zeros((n, n))
    r, c = arc_positions(m)
    P[r, c] = x
    return P


def check_feasible(x: np.ndarray, m: ArcVarMap, mode: str, tol: float = 1e-8) -> None:
    P = assemble_P(m, x)
    if np.min(x) < -tol:
        raise ValueError(f"negative weight {np.min(x):.3e}")
    row_err = np.max(np.abs(P.sum(axis=1) - 1.0))
    if row_err > tol:
        raise ValueError(f"row sums off by {row_err:.3e}")
    if mode == "ds":
        col_err = np.max(np.abs(P.sum(axis=0) - 1.0))
        if col_err > tol:
            raise ValueError(f"column sums off by {col_err:.3e}")


@dataclass(frozen=True)
class LUResult:
    l: np.ndarray
    u: np.ndarray
    transposed: bool
    skipped: tuple

    def det(self) -> float:
        return float(np.prod(np.diag(self.u)))


def _has_sign_pattern(A: np.ndarray, tol: float) -> bool:
    d = np.diag(A)
    off = A - np.diag(d)
    return bool(np.all(d >= -tol) and np.all(off <= tol))


def lu_nopivot(A: np.ndarray) -> LUResult:
    """Gaussian elimination with unit lower factor and no row exchanges.

    Requires the sign pattern (nonnegative diagonal, nonpositive
    off-diagonal) together with zero column sums or zero row sums. Columns
    summing to zero are factored directly; rows summing to zero factor the
    transpose, reported via the transposed flag, so that l @ u equals A.T.
    Near-zero pivots are skipped after verifying the remaining row and
    column are negligible.
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError("square matrix required")
    scale = max(np.max(np.abs(A)), 1e-300)
    tol = 1e-10 * scale
    if not _has_sign_pattern(A, tol):
        raise ValueError("matrix lacks the required sign pattern")
    col_ok = np.max(np.abs(A.sum(axis=0))) <= tol * n
    row_ok = np.max(np.abs(A.sum(axis=1))) <= tol * n
    if col_ok:
        transposed = False
        u = A.copy()
    elif row_ok:
        transposed = True
        u = A.T.copy()
    else:
        raise ValueError("neither row sums nor column sums vanish")

    skip_tol = 1e-12 * scale
    verify_tol = 1e-10 * scale
    l = np.eye(n)
    skipped = []
    for k in range(n - 1):
        piv = u[k, k]
        if abs(piv) <= skip_tol:
            resid = max(np.max(np.abs(u[k, k + 1 :])), np.max(np.abs(u[k + 1 :, k])))
            if resid > verify_tol:
                raise ValueError(
                    f"zero pivot at {k} with live row/column (residual {resid:.3e})"
                )
            u[k, k + 1 :] = 0.0
            u[k + 1 :, k] = 0.0
            skipped.append(k)
            continue
        mult = u[k + 1 :, k] / piv
        l[k + 1 :, k] = mult
        u[k + 1 :, k:] -= np.outer(mult, u[k, k:])
        u[k + 1 :, k] = 0.0
    return LUResult(l=l, u=u, transposed=transposed, skipped=tuple(skipped))


def _minor_det_and_inv(P: np.ndarray) -> tuple:
    n = P.shape[0]
    M = (np.eye(n) - P)[: n - 1, : n - 1]
    det = float(np.linalg.det(M))
    inv = np.linalg.inv(M)
    return det, inv


def f_minor(x, m: ArcVarMap, n: int | None = None, validate: bool = True) -> float:
    """-det of the leading principal minor of I - P. Equals -1 exactly at a
    Hamiltonian cycle indicator and 0 at any other permutation matrix."""
    if validate:
        check_feasible(x, m, mode="s")
    P = assemble_P(m, x)
    nn = P.shape[0]
    B = np.eye(nn) - P
    try:
        lu = lu_nopivot(B)
    except ValueError:
        # off-manifold probe (e.g. a finite-difference perturbation broke the
        # zero row sums); fall back to a plain determinant of the minor
        return -float(np.linalg.det(B[: nn - 1, : nn - 1]))
    d = np.diag(lu.u)
    return -float(np.prod(d[:-1]))


def f_full(x, m: ArcVarMap, n: int | None = None, validate: bool = True) -> float:
    """-det(I - P + J/n), the rank-one shifted determinant. Equals -n exactly
    at a Hamiltonian cycle indicator."""
    if validate:
        check_feasible(x, m, mode="s")
    P = assemble_P(m, x)
    nn = P.shape[0]
    B = np.eye(nn) - P + np.ones((nn, nn)) / nn
    return -float(np.linalg.det(B))


def _core(x, m: ArcVarMap, mode: str) -> tuple:
    """Shared setup: per-arc row/col indices into the differentiated matrix,
    its determinant, and its inverse. Arcs outside the matrix get index -1."""
    P = assemble_P(m, x)
    nn = P.shape[0]
    r, c = arc_positions(m)
    if mode == "ds":
        det, inv = _minor_det_and_inv(P)
        inside = (r < nn - 1) & (c < nn - 1)
    elif mode == "s":
        B = np.eye(nn) - P + np.ones((nn, nn)) / nn
        det = float(np.linalg.det(B))
        inv = np.linalg.inv(B)
        inside = np.ones(len(r), dtype=bool)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return det, inv, r, c, inside


def grad(x, m: ArcVarMap, n: int | None = None, mode: str = "ds") -> np.ndarray:
    det, inv, r, c, inside = _core(x, m, mode)
    g = np.zeros(m.n_arcs)
    g[inside] = det * inv[c[inside], r[inside]]
    return g


def hess(x, m: ArcVarMap, n: int | None = None, mode: str = "ds") -> np.ndarray:
    det, inv, r, c, inside = _core(x, m, mode)
    a = m.n_arcs
    H = np.zeros((a, a))
    ri, ci = r[inside], c[inside]
    v = inv[ci, ri]
    T = inv[np.ix_(ci, ri)]
    Hin = -det * (np.outer(v, v) - T * T.T)
    idx = np.flatnonzero(inside)
    H[np.ix_(idx, idx)] = Hin
    return H


def value_grad_hess(x, m: ArcVarMap, mode: str) -> tuple:
    """One-pass f, gradient, Hessian sharing a single inversion."""
    det, inv, r, c, inside = _core(x, m, mode)
    f = -det
    g = np.zeros(m.n_arcs)
    g[inside] = det * inv[c[inside], r[inside]]
    a = m.n_arcs
    H = np.zeros((a, a))
    ri, ci = r[inside], c[inside]
    v = inv[ci, ri]
    T = inv[np.ix_(ci, ri)]
    idx = np.flatnonzero(inside)
    H[np.ix_(idx, idx)] = -det * (np.outer(v, v) - T * T.T)
    return f, g, H


def value_only(x, m: ArcVarMap, mode: str) -> float:
    if mode == "ds":
        return f_minor(x, m, validate=False)
    return f_full(x, m, validate=False)
