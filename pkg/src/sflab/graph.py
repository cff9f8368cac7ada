"""Undirected graphs, normalized Laplacians, and small-scale eigendecomposition.

The Laplacian here is L = I - D^{-1/2} A D^{-1/2}; its spectrum lies in
[0, 2], which is the domain every filter in this package is defined on.
Zero-degree nodes use the pseudoinverse convention D^{-1/2} = 0, so the
diagonal stays exactly 1 everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import (
    DimensionExceeded,
    DimensionMismatch,
    DomainError,
    InvalidProbability,
    NotSymmetric,
)

DENSE_EIGENSOLVE_LIMIT = 4000

SYMMETRY_TOL = 1e-12
EIGENVALUE_CLAMP_TOL = 1e-9


@dataclass(frozen=True)
class Graph:
    """Undirected, unweighted graph on nodes 0..n-1.

    ``edges`` is canonical: each pair (u, v) with u < v, deduplicated,
    sorted. ``E`` is the edge count.
    """

    n: int
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if self.n < 1:
            raise DomainError(f"graph needs at least one node, got n={self.n}")
        seen = set()
        for u, v in self.edges:
            if u == v:
                raise DomainError(f"self-loop at node {u}")
            if not (0 <= u < self.n and 0 <= v < self.n):
                raise DomainError(f"edge ({u}, {v}) out of range for n={self.n}")
            if u > v or (u, v) in seen:
                raise DomainError(f"edges not canonical near ({u}, {v})")
            seen.add((u, v))

    @property
    def E(self) -> int:
        return len(self.edges)

    @classmethod
    def from_edges(cls, n: int, edges) -> "Graph":
        """Build a Graph from an arbitrary iterable of pairs, canonicalizing."""
        canon = set()
        for u, v in edges:
            u, v = int(u), int(v)
            if u == v:
                raise DomainError(f"self-loop at node {u}")
            if not (0 <= u < n and 0 <= v < n):
                raise DomainError(f"edge ({u}, {v}) out of range for n={n}")
            canon.add((min(u, v), max(u, v)))
        return cls(n=n, edges=tuple(sorted(canon)))

    def degrees(self) -> np.ndarray:
        d = np.zeros(self.n, dtype=np.int64)
        for u, v in self.edges:
            d[u] += 1
            d[v] += 1
        return d


@dataclass(frozen=True)
class SparseMatrix:
    """CSR matrix (row offsets, column indices, values)."""

    n_rows: int
    n_cols: int
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray

    def __post_init__(self):
        if len(self.indptr) != self.n_rows + 1:
            raise DimensionMismatch("indptr length must be n_rows + 1")
        if np.any(np.diff(self.indptr) < 0):
            raise DimensionMismatch("row offsets must be non-decreasing")
        if self.indices.size and (
            self.indices.min() < 0 or self.indices.max() >= self.n_cols
        ):
            raise DimensionMismatch("column index out of bounds")

    @classmethod
    def from_scipy(cls, m: sp.spmatrix) -> "SparseMatrix":
        c = sp.csr_matrix(m)
        c.sort_indices()
        return cls(
            n_rows=c.shape[0],
            n_cols=c.shape[1],
            indptr=np.asarray(c.indptr),
            indices=np.asarray(c.indices),
            data=np.asarray(c.data, dtype=np.float64),
        )

    def to_scipy(self) -> sp.csr_matrix:
        return sp.csr_matrix(
            (self.data, self.indices, self.indptr),
            shape=(self.n_rows, self.n_cols),
            copy=False,
        )

    def to_dense(self) -> np.ndarray:
        return self.to_scipy().toarray()

    def max_asymmetry(self) -> float:
        if self.n_rows != self.n_cols:
            return np.inf
        m = self.to_scipy()
        diff = (m - m.T).tocoo()
        return float(np.max(np.abs(diff.data))) if diff.nnz else 0.0


@dataclass(frozen=True)
class EigenSystem:
    """Eigenpairs of a symmetric matrix; eigenvalues ascending, column s of
    ``eigenvectors`` pairs with ``eigenvalues[s]``."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def n(self) -> int:
        return len(self.eigenvalues)


def normalized_laplacian(graph: Graph) -> SparseMatrix:
    """L = I - D^{-1/2} A D^{-1/2} as a symmetric CSR matrix.

    Every diagonal entry is exactly 1 (isolated nodes included); the entry
    for edge (u, v) is -1/sqrt(d_u d_v).
    """
    n = graph.n
    deg = graph.degrees().astype(np.float64)
    inv_sqrt = np.zeros(n)
    nz = deg > 0
    inv_sqrt[nz] = 1.0 / np.sqrt(deg[nz])

    rows = [np.arange(n)]
    cols = [np.arange(n)]
    vals = [np.ones(n)]
    if graph.E:
        e = np.asarray(graph.edges, dtype=np.int64)
        u, v = e[:, 0], e[:, 1]
        w = -inv_sqrt[u] * inv_sqrt[v]
        rows += [u, v]
        cols += [v, u]
        vals += [w, w]
    m = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    )
    return SparseMatrix.from_scipy(m)


def eigendecompose(
    L: SparseMatrix,
    dense_limit: int = DENSE_EIGENSOLVE_LIMIT,
    clamp_range: tuple[float, float] = (0.0, 2.0),
) -> EigenSystem:
    """Dense symmetric eigendecomposition (LAPACK), ascending eigenvalues.

    Values within EIGENVALUE_CLAMP_TOL outside ``clamp_range`` are clamped
    onto it so downstream filter-domain assumptions ([0, 2]) hold exactly;
    values genuinely outside the range (general symmetric input) are kept.
    """
    if L.n_rows != L.n_cols:
        raise DimensionMismatch(f"matrix is {L.n_rows}x{L.n_cols}, not square")
    if L.n_rows > dense_limit:
        raise DimensionExceeded(
            f"n={L.n_rows} exceeds dense eigensolve limit {dense_limit}"
        )
    asym = L.max_asymmetry()
    if asym > SYMMETRY_TOL:
        raise NotSymmetric(f"max |A - A^T| = {asym:g} exceeds {SYMMETRY_TOL:g}")
    w, u = np.linalg.eigh(L.to_dense())
    lo, hi = clamp_range
    w = np.where((w >= lo - EIGENVALUE_CLAMP_TOL) & (w < lo), lo, w)
    w = np.where((w <= hi + EIGENVALUE_CLAMP_TOL) & (w > hi), hi, w)
    return EigenSystem(eigenvalues=w, eigenvectors=u)


def erdos_renyi(n: int, p: float, seed: int) -> Graph:
    """G(n, p): each unordered pair appears independently with probability p.

    Sampling is row-by-row from a single seeded generator, so results are
    reproducible and memory stays O(n).
    """
    if not (0.0 <= p <= 1.0):
        raise InvalidProbability(f"p={p} not in [0, 1]")
    if n < 1:
        raise DomainError(f"n={n} must be >= 1")
    rng = np.random.default_rng(seed)
    edges = []
    for u in range(n - 1):
        draws = rng.random(n - 1 - u)
        hit = np.nonzero(draws < p)[0]
        edges.extend((u, int(u + 1 + j)) for j in hit)
    return Graph(n=n, edges=tuple(edges))


def spmv(M: SparseMatrix, X: np.ndarray) -> np.ndarray:
    """Sparse-dense product M @ X (X may be a vector or a matrix)."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] != M.n_cols:
        raise DimensionMismatch(
            f"M is {M.n_rows}x{M.n_cols} but X has leading dim {X.shape[0]}"
        )
    return M.to_scipy() @ X


def write_edge_list(graph: Graph, path) -> None:
    """Write "u<TAB>v" lines; node count goes in a leading comment so
    trailing isolated nodes survive the round-trip."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# nodes: {graph.n}\n")
        for u, v in graph.edges:
            fh.write(f"{u}\t{v}\n")


def read_edge_list(path) -> Graph:
    n_declared = None
    edges = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if body.startswith("nodes:"):
                    n_declared = int(body.split(":", 1)[1])
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise DomainError(f"{path}:{lineno}: expected 'u<TAB>v', got {line!r}")
            edges.append((int(parts[0]), int(parts[1])))
    if n_declared is None:
        n_declared = 1 + max((max(u, v) for u, v in edges), default=0)
    return Graph.from_edges(n_declared, edges)
