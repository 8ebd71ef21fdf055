"""Weighted one-mode projections, normalized Laplacian spectra and spectral communities."""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Iterable

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.cluster import KMeans

from .analysis import SeriesBundle, build_series
from .model import BipartiteGraph, CommentEvent, StructuralError

DENSE_LIMIT = 6000
ZERO_TOL = 1e-8
GAP_WINDOW = 10
MAX_COMMUNITIES = 8
OTHER = "other"


class EmptyProjectionError(ValueError):
    pass


class SpectrumTooLargeError(ValueError):
    pass


def incidence(graph: BipartiteGraph) -> sp.csr_matrix:
    """Agent x post weight matrix."""
    rows, cols, vals = [], [], []
    for a, p, w in graph.edges():
        rows.append(a)
        cols.append(p)
        vals.append(w)
    return sp.csr_matrix((np.array(vals, dtype=float), (rows, cols)),
                         shape=(graph.n_agents, graph.n_posts))


def commons(W: sp.spmatrix, rule: str = "min") -> sp.csr_matrix:
    """Row-by-row commons matrix with a zero diagonal.

    ``"min"`` sums ``min(w_ip, w_jp)`` over shared columns, using
    ``min(a, b) = sum_k [a >= k][b >= k]`` for integer weights.
    ``"product"`` sums ``w_ip * w_jp``.
    """
    W = sp.csr_matrix(W, dtype=float)
    if rule == "product":
        C = W @ W.T
    elif rule == "min":
        if W.nnz and np.any(W.data != np.round(W.data)):
            raise ValueError("the min rule needs integer weights")
        top = int(W.data.max()) if W.nnz else 0
        C = sp.csr_matrix(W.shape[:1] * 2)
        for k in range(1, top + 1):
            B = (W >= k).astype(float)
            C = C + B @ B.T
    else:
        raise ValueError(f"unknown commons rule {rule!r}")
    C = sp.csr_matrix(C)
    C.setdiag(0.0)
    C.eliminate_zeros()
    return C


@dataclass
class ProjectedGraph:
    """One-mode projection.

    ``nodes`` holds the original ids of the retained nodes; row ``i`` of
    ``weights`` belongs to ``nodes[i]``.
    """

    nodes: np.ndarray
    weights: sp.csr_matrix
    partition: str = "agents"
    rule: str = "min"

    @property
    def strengths(self) -> np.ndarray:
        return np.asarray(self.weights.sum(axis=1)).ravel()

    def __len__(self):
        return len(self.nodes)


def project(graph: BipartiteGraph, which: str = "agents", min_degree: int = 0,
            min_strength: float = 0.0, rule: str = "min") -> ProjectedGraph:
    """Weighted projection onto agents or posts.

    Nodes keep only if their bipartite degree (distinct neighbours) exceeds
    ``min_degree``. The projection is built on the survivors; nodes whose
    projected strength does not exceed ``min_strength`` are dropped next, and
    finally any node left with zero strength.
    """
    if graph.n_agents == 0 or graph.n_posts == 0:
        raise EmptyProjectionError("graph has no agents or no posts")
    W = incidence(graph)
    if which == "posts":
        W = W.T.tocsr()
    elif which != "agents":
        raise ValueError(f"which must be 'agents' or 'posts', got {which!r}")
    degree = np.diff(W.indptr)
    keep = np.flatnonzero(degree > min_degree)
    C = commons(W[keep], rule)
    if min_strength > 0:
        sel = np.flatnonzero(np.asarray(C.sum(axis=1)).ravel() > min_strength)
        keep, C = keep[sel], C[sel][:, sel]
    sel = np.flatnonzero(np.asarray(C.sum(axis=1)).ravel() > 0)
    keep, C = keep[sel], sp.csr_matrix(C[sel][:, sel])
    if len(keep) == 0:
        raise EmptyProjectionError(
            f"no {which} left after filtering (min_degree={min_degree}, min_strength={min_strength})")
    return ProjectedGraph(keep, C, which, rule)


def laplacian(projected: ProjectedGraph) -> sp.csr_matrix:
    """``L = I - D^-1/2 C D^-1/2`` with ``D`` the node strengths."""
    s = projected.strengths
    if np.any(s <= 0):
        raise StructuralError("zero-strength node reached the Laplacian; filter it out first")
    d = sp.diags(1.0 / np.sqrt(s))
    n = len(s)
    L = sp.identity(n, format="csr") - d @ projected.weights @ d
    return sp.csr_matrix((L + L.T) * 0.5)


@dataclass
class SpectralResult:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    labels: np.ndarray | None = None
    n_communities: int = 0

    @property
    def n_zero(self) -> int:
        return int(np.count_nonzero(np.abs(self.eigenvalues) < ZERO_TOL))


def _dense(L) -> np.ndarray:
    return L.toarray() if sp.issparse(L) else np.asarray(L, dtype=float)


def low_spectrum(L, k_max: int | None = 32, dense_limit: int = DENSE_LIMIT) -> SpectralResult:
    """Lowest ``k_max`` eigenpairs (all of them when ``k_max`` is None).

    Eigenvector signs are fixed so the largest-magnitude entry is positive.
    """
    n = L.shape[0]
    if L.shape != (n, n):
        raise ValueError("matrix must be square")
    if n > dense_limit:
        raise SpectrumTooLargeError(
            f"{n} nodes exceed the dense limit {dense_limit}; raise --min-degree or --min-strength")
    M = _dense(L)
    if not np.allclose(M, M.T, atol=1e-12):
        raise ValueError("matrix is not symmetric")
    k = n if k_max is None else min(k_max, n)
    vals, vecs = scipy.linalg.eigh(M, subset_by_index=[0, k - 1])
    idx = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[idx, np.arange(k)])
    signs[signs == 0] = 1.0
    return SpectralResult(vals, vecs * signs)


def choose_k(eigenvalues, window: int = GAP_WINDOW, cap: int = MAX_COMMUNITIES) -> int:
    """Community count from the largest relative gap in the low spectrum.

    With ``z`` zero eigenvalues and the gap after the ``j``-th of the lowest
    ``window`` nonzero ones, the count is ``z + j`` (capped).
    """
    lam = np.sort(np.asarray(eigenvalues, dtype=float))
    z = int(np.count_nonzero(lam < ZERO_TOL))
    nz = lam[z:z + window]
    if len(nz) < 2:
        raise ValueError("need at least two nonzero eigenvalues")
    gaps = (nz[1:] - nz[:-1]) / nz[:-1]
    j = int(np.argmax(gaps)) + 1
    return int(min(max(z + j, 1), cap))


def _order_by_size(labels: np.ndarray) -> np.ndarray:
    uniq, counts = np.unique(labels, return_counts=True)
    first = np.array([np.flatnonzero(labels == u)[0] for u in uniq])
    order = np.lexsort((first, -counts))
    remap = np.empty(len(uniq), dtype=np.int64)
    remap[uniq[order]] = np.arange(len(uniq))
    return remap[labels]


def extract_communities(eigenvalues, eigenvectors, k: int | None = None,
                        cap: int = MAX_COMMUNITIES, random_state: int = 0) -> np.ndarray:
    """Cluster rows of the first ``k`` eigenvectors after normalising them to unit length.

    Labels are 0 for the largest community, 1 for the next and so on.
    """
    if k is None:
        k = choose_k(eigenvalues, cap=cap)
    X = np.asarray(eigenvectors)[:, :k]
    norms = np.linalg.norm(X, axis=1, keepdims=True)
    X = np.divide(X, norms, out=np.zeros_like(X), where=norms > 0)
    distinct = np.unique(np.round(X, 12), axis=0)
    if k == 1 or len(distinct) == 1:
        if k > 1:
            warnings.warn("all spectral coordinates coincide; returning one community")
        return np.zeros(len(X), dtype=np.int64)
    k = min(k, len(distinct))
    km = KMeans(n_clusters=k, n_init=10, random_state=random_state).fit(X)
    return _order_by_size(km.labels_)


class SpectralCommunities(ClusterMixin, BaseEstimator):
    """Communities of a bipartite graph from its projected Laplacian.

    ``fit(graph)`` sets ``projection_``, ``eigenvalues_``, ``eigenvectors_``,
    ``labels_`` (aligned with ``projection_.nodes``), ``n_communities_`` and
    ``assignment_`` (node id -> label).
    """

    def __init__(self, partition="agents", min_degree=5, min_strength=0.0, commons="min",
                 max_communities=MAX_COMMUNITIES, n_eigen=32, dense_limit=DENSE_LIMIT,
                 random_state=0):
        self.partition = partition
        self.min_degree = min_degree
        self.min_strength = min_strength
        self.commons = commons
        self.max_communities = max_communities
        self.n_eigen = n_eigen
        self.dense_limit = dense_limit
        self.random_state = random_state

    def fit(self, X: BipartiteGraph, y=None):
        if not isinstance(X, BipartiteGraph):
            raise TypeError("SpectralCommunities.fit expects a BipartiteGraph")
        proj = project(X, self.partition, self.min_degree, self.min_strength, self.commons)
        spec = low_spectrum(laplacian(proj), self.n_eigen, self.dense_limit)
        if len(proj) < 3 or np.count_nonzero(spec.eigenvalues >= ZERO_TOL) < 2:
            labels = np.zeros(len(proj), dtype=np.int64)
        else:
            labels = extract_communities(spec.eigenvalues, spec.eigenvectors,
                                         cap=self.max_communities, random_state=self.random_state)
        self.projection_ = proj
        self.eigenvalues_ = spec.eigenvalues
        self.eigenvectors_ = spec.eigenvectors
        self.labels_ = labels
        self.n_communities_ = int(labels.max()) + 1 if len(labels) else 0
        self.assignment_ = dict(zip(proj.nodes.tolist(), labels.tolist()))
        return self


def community_series(assignment: dict[int, int], events: Iterable[CommentEvent],
                     n_bins: int | None = None) -> dict:
    """Per-community series keyed by label; agents without a label go to ``"other"``."""
    events = list(events)
    if n_bins is None:
        n_bins = max((e.time for e in events), default=-1) + 1
    groups: dict = {}
    for ev in events:
        groups.setdefault(assignment.get(ev.agent, OTHER), []).append(ev)
    for label in set(assignment.values()):
        groups.setdefault(label, [])
    return {label: build_series(evs, n_bins) for label, evs in groups.items()}


def scatter_rows(projected: ProjectedGraph, eigenvectors: np.ndarray, first: int = 1, n: int = 3):
    """(node, v_first, ..., v_first+n-1) rows; missing columns are padded with 0."""
    vecs = np.zeros((len(projected), n))
    avail = eigenvectors[:, first:first + n]
    vecs[:, :avail.shape[1]] = avail
    for node, row in zip(projected.nodes, vecs):
        yield (int(node), *row.tolist())


def charge_by_community(series: dict, burn_in: int = 0) -> dict:
    return {label: float(np.mean(b.Q[burn_in:])) if len(b) > burn_in else float("nan")
            for label, b in series.items()}
