"""Equality-constraint matrices for the two relaxations and integral null
space bases built without floating-point elimination.

Row mode constrains each out-neighborhood to sum to one. In doubly
stochastic mode the in-sums join and the stacked matrix loses rank
(one dependency for a connected support with an odd closed walk, two when
the support is bipartite). reorder_ds drops dependent rows from the end of
the column block and permutes variables so the leading square block is unit
lower triangular over the integers; the null space basis then has entries
in {-1, 0, +1} by integer forward substitution.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from dipa.graph import ArcVarMap


@dataclass(frozen=True)
class ConstraintMatrix:
    mode: str
    mat: np.ndarray  # dense 0/1, row block then (ds only) column block

    @property
    def shape(self):
        return self.mat.shape


def build_A(m: ArcVarMap, n: int | None = None, mode: str = "ds") -> ConstraintMatrix:
    nn = len(m.nodes)
    pos = {v: t for t, v in enumerate(m.nodes)}
    a = m.n_arcs
    rows = nn if mode == "s" else 2 * nn
    mat = np.zeros((rows, a))
    for k, (i, j) in enumerate(m.arcs):
        mat[pos[i], k] = 1.0
        if mode == "ds":
            mat[nn + pos[j], k] = 1.0
    return ConstraintMatrix(mode=mode, mat=mat)


@dataclass(frozen=True)
class ReorderedDS:
    b: np.ndarray        # rank x rank, unit lower triangular, 0/1
    s: np.ndarray        # rank x (a - rank)
    perm: tuple          # variable permutation, basis columns first
    row_order: tuple     # retained constraint rows, in pinned order
    retained: tuple      # retained rows of the original stacked matrix
    rank: int


def _retained_rows(mat: np.ndarray, n_row_block: int) -> list:
    target = int(np.linalg.matrix_rank(mat))
    retained = list(range(mat.shape[0]))
    idx = mat.shape[0] - 1
    while len(retained) > target and idx >= n_row_block:
        trial = [r for r in retained if r != idx]
        if np.linalg.matrix_rank(mat[trial]) == target:
            retained = trial
        idx -= 1
    if len(retained) != target:
        raise ValueError("could not reach full row rank by dropping column rows")
    return retained


def reorder_ds(A: ConstraintMatrix) -> ReorderedDS:
    """Permute rows and columns of the doubly stochastic constraint matrix
    into [B S] with B unit lower triangular.

    Columns with a single one among the still-active rows are pinned in
    batches, bottom row first; each batch prefers lower variable indices.
    """
    if A.mode != "ds":
        raise ValueError("reorder_ds applies to doubly stochastic constraints")
    mat = A.mat
    n_nodes = mat.shape[0] // 2
    retained = _retained_rows(mat, n_nodes)
    am = mat[retained]
    rank = am.shape[0]
    unpinned = set(range(rank))
    remaining = set(range(am.shape[1]))
    col_sel: list = []
    slot = [0] * rank
    pos = rank
    nz_rows = {c: set(np.flatnonzero(am[:, c])) for c in remaining}
    while unpinned:
        batch = []
        used: set = set()
        for c in sorted(remaining):
            act = nz_rows[c] & unpinned
            if len(act) == 1:
                (i,) = act
                if i not in used:
                    batch.append((c, i))
                    used.add(i)
        if not batch:
            raise ValueError("reordering stalled; constraint support degenerate")
        for c, i in batch:
            col_sel.append(c)
            remaining.discard(c)
            slot[pos - 1] = i
            unpinned.discard(i)
            pos -= 1
    perm = tuple(reversed(col_sel)) + tuple(sorted(remaining))
    row_order = tuple(slot)
    bm = am[list(row_order)][:, list(perm[:rank])]
    sm = am[list(row_order)][:, list(perm[rank:])]
    if not np.array_equal(np.diag(bm), np.ones(rank)) or np.any(np.triu(bm, 1) != 0):
        raise AssertionError("reordered block is not unit lower triangular")
    return ReorderedDS(
        b=bm.astype(np.int64),
        s=sm.astype(np.int64),
        perm=perm,
        row_order=row_order,
        retained=tuple(retained),
        rank=rank,
    )


@dataclass
class NullSpaceRep:
    """Sparse-structured basis Z with A Z = 0, applied without ever forming
    the dense matrix in the solve path."""

    mode: str
    n_vars: int
    dim: int
    # ds fields
    perm: tuple = ()
    y: np.ndarray | None = None  # rank x dim integer block, Z = P [-Y; I]
    # s fields
    cols: np.ndarray | None = None   # variable index per basis column
    leads: np.ndarray | None = None  # leading variable of the same row
    _sp: sp.csc_matrix | None = field(default=None, repr=False)
    _gram: np.ndarray | None = field(default=None, repr=False)

    def apply(self, v: np.ndarray) -> np.ndarray:
        """Z @ v for reduced vectors v."""
        v = np.asarray(v, dtype=float)
        out = np.zeros(self.n_vars)
        if self.mode == "ds":
            rank = self.n_vars - self.dim
            basis = np.asarray(self.perm[:rank], dtype=np.intp)
            free = np.asarray(self.perm[rank:], dtype=np.intp)
            out[free] = v
            out[basis] = -(self.y @ v)
        else:
            np.add.at(out, self.cols, v)
            np.subtract.at(out, self.leads, v)
        return out

    def rmatvec(self, w: np.ndarray) -> np.ndarray:
        """Z.T @ w for full-space vectors w."""
        w = np.asarray(w, dtype=float)
        if self.mode == "ds":
            rank = self.n_vars - self.dim
            basis = np.asarray(self.perm[:rank], dtype=np.intp)
            free = np.asarray(self.perm[rank:], dtype=np.intp)
            return w[free] - self.y.T @ w[basis]
        return w[self.cols] - w[self.leads]

    def sparse(self) -> sp.csc_matrix:
        if self._sp is None:
            if self.mode == "ds":
                rank = self.n_vars - self.dim
                zm = np.zeros((self.n_vars, self.dim))
                basis = np.asarray(self.perm[:rank], dtype=np.intp)
                free = np.asarray(self.perm[rank:], dtype=np.intp)
                zm[basis] = -self.y
                zm[free] = np.eye(self.dim)
                self._sp = sp.csc_matrix(zm)
            else:
                data = np.concatenate([np.ones(self.dim), -np.ones(self.dim)])
                rows = np.concatenate([self.cols, self.leads])
                colidx = np.concatenate([np.arange(self.dim), np.arange(self.dim)])
                self._sp = sp.csc_matrix(
                    (data, (rows, colidx)), shape=(self.n_vars, self.dim)
                )
        return self._sp

    def dense(self) -> np.ndarray:
        return self.sparse().toarray()

    def gram(self) -> np.ndarray:
        """Z.T Z, the reduced-space metric."""
        if self._gram is None:
            zs = self.sparse()
            self._gram = (zs.T @ zs).toarray()
        return self._gram

    def reduce_hessian(self, H: np.ndarray) -> np.ndarray:
        zs = self.sparse()
        return np.asarray(zs.T @ (zs.T @ H.T).T)

    def reduce_diag_quadform(self, d: np.ndarray) -> np.ndarray:
        """Z.T diag(d) Z without forming the full Hessian."""
        zs = self.sparse()
        return np.asarray((zs.T.multiply(d) @ zs).todense())


def build_Z(m: ArcVarMap, n: int | None = None, mode: str = "ds") -> NullSpaceRep:
    a = m.n_arcs
    if mode == "s":
        pos = {v: t for t, v in enumerate(m.nodes)}
        lead_of_node: dict = {}
        for k, (i, _) in enumerate(m.arcs):
            if i not in lead_of_node:
                lead_of_node[i] = k
        cols = []
        leads = []
        for k, (i, _) in enumerate(m.arcs):
            if lead_of_node[i] != k:
                cols.append(k)
                leads.append(lead_of_node[i])
        if len(lead_of_node) != len(m.nodes):
            raise ValueError("a node has no outgoing arc")
        return NullSpaceRep(
            mode="s",
            n_vars=a,
            dim=len(cols),
            cols=np.asarray(cols, dtype=np.intp),
            leads=np.asarray(leads, dtype=np.intp),
        )
    if mode != "ds":
        raise ValueError(f"unknown mode {mode!r}")
    A = build_A(m, mode="ds")
    rds = reorder_ds(A)
    yk = _forward_substitute(rds.b, rds.s)
    vals = set(np.unique(yk)) if yk.size else set()
    if not vals <= {-1, 0, 1}:
        raise AssertionError(f"null space block has entries {sorted(vals)}")
    return NullSpaceRep(
        mode="ds",
        n_vars=a,
        dim=a - rds.rank,
        perm=rds.perm,
        y=yk.astype(float),
    )


def _forward_substitute(b: np.ndarray, s: np.ndarray) -> np.ndarray:
    rank, width = s.shape[0], s.shape[1]
    y = np.zeros((rank, width), dtype=np.int64)
    for p in range(rank):
        y[p] = s[p]
        nz = np.flatnonzero(b[p, :p])
        if nz.size:
            y[p] -= b[p, nz] @ y[nz]
    return y


def z_apply(Z: NullSpaceRep, v: np.ndarray, transpose: bool = False) -> np.ndarray:
    if transpose:
        return Z.rmatvec(v)
    return Z.apply(v)
