"""Classification, clustering and linear embedding of pole sets.

Sorted poles stacked as ``[Re p; Im p]`` give a Euclidean feature vector in
which the root distance (p = 2) is the ordinary distance, so nearest-neighbour
search can use a k-d tree.  Clustering works on residue-weighted pole measures
under transport distances.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.optimize import linear_sum_assignment
from scipy.spatial import cKDTree
from sklearn.metrics import silhouette_score

from .interpolation import barycenter_ot, root_vector
from .model import RationalModel
from .transport import DiscreteMeasure, TransportConfig, exact_ot


@dataclass(frozen=True)
class RootEmbedding:
    vector: NDArray[np.float64]
    label: Hashable | None = None

    def __post_init__(self):
        v = np.asarray(self.vector, dtype=float).ravel()
        if v.size == 0 or v.size % 2:
            raise ValueError("a root vector has even, nonzero length")
        if not np.all(np.isfinite(v)):
            raise ValueError("root vector must be finite")
        object.__setattr__(self, "vector", v)

    @classmethod
    def from_model(cls, model: RationalModel, label=None) -> "RootEmbedding":
        return cls(root_vector(model), label)

    @property
    def order(self) -> int:
        return self.vector.size // 2


def _matrix(embeddings) -> NDArray[np.float64]:
    rows = [e.vector if isinstance(e, RootEmbedding) else np.asarray(e, dtype=float) for e in embeddings]
    if not rows:
        raise ValueError("no embeddings")
    size = rows[0].size
    if any(r.size != size for r in rows):
        raise ValueError("embeddings differ in length")
    return np.stack(rows)


def brute_force_neighbors(X: ArrayLike, query: ArrayLike, k: int):
    """k nearest rows of ``X`` by a linear scan; ties go to the lower index."""
    X = np.asarray(X, dtype=float)
    d = np.linalg.norm(X - np.asarray(query, dtype=float), axis=1)
    order = np.lexsort((np.arange(d.size), d))[:k]
    return order, d[order]


class EmbeddingIndex:
    """k-d tree over training embeddings with exact, index-ordered tie handling."""

    def __init__(self, embeddings: Sequence[RootEmbedding], labels: Sequence | None = None):
        self.X = _matrix(embeddings)
        if labels is None:
            labels = [getattr(e, "label", None) for e in embeddings]
        self.labels = list(labels)
        if len(self.labels) != self.X.shape[0]:
            raise ValueError("one label per embedding")
        self.tree = cKDTree(self.X)

    def __len__(self):
        return self.X.shape[0]

    def neighbors(self, query: ArrayLike, k: int = 1):
        """Indices and distances of the ``k`` nearest embeddings.

        The tree supplies the k-th distance; every point within that radius
        (slightly inflated) is then re-ranked by the same distance formula as
        ``brute_force_neighbors`` so ties resolve identically.
        """
        q = np.asarray(query.vector if isinstance(query, RootEmbedding) else query, dtype=float)
        if q.size != self.X.shape[1]:
            raise ValueError(f"query length {q.size} does not match {self.X.shape[1]}")
        k = int(min(max(k, 1), len(self)))
        dk, _ = self.tree.query(q, k=[k])
        radius = float(dk[0]) * (1 + 1e-9) + 1e-12
        cand = np.asarray(self.tree.query_ball_point(q, radius), dtype=np.intp)
        d = np.linalg.norm(self.X[cand] - q, axis=1)
        order = np.lexsort((cand, d))[:k]
        return cand[order], d[order]


def knn_classify(query, training: EmbeddingIndex | Sequence[RootEmbedding], k: int = 1):
    """Majority label among the ``k`` nearest training embeddings.

    Vote ties go to the label whose nearest member ranks first.
    """
    index = training if isinstance(training, EmbeddingIndex) else EmbeddingIndex(training)
    idx, _ = index.neighbors(query, k)
    votes: dict = {}
    for rank, i in enumerate(idx):
        count, first = votes.get(index.labels[i], (0, rank))
        votes[index.labels[i]] = (count + 1, first)
    return min(votes, key=lambda lab: (-votes[lab][0], votes[lab][1]))


@dataclass(frozen=True)
class ClusterConfig:
    n_clusters: int = 3
    iterations: int = 10
    seed: int = 0
    transport: TransportConfig = field(default_factory=TransportConfig)

    def __post_init__(self):
        if self.n_clusters < 1:
            raise ValueError("need at least one cluster")
        if self.iterations < 0:
            raise ValueError("iterations must be nonnegative")


@dataclass
class ClusterAssignment:
    labels: NDArray[np.intp]
    barycenters: list[DiscreteMeasure]
    objective: float
    history: list[float] = field(default_factory=list)


def _cost(x: DiscreteMeasure, c: DiscreteMeasure, config: TransportConfig) -> float:
    return exact_ot(x, c, config).objective


def _cost_matrix(measures, centers, config):
    return np.array([[_cost(x, c, config) for c in centers] for x in measures])


def _seed(measures, K, config: ClusterConfig, rng):
    """k-means++: each new center drawn with probability proportional to its raw cost."""
    n = len(measures)
    centers = [int(rng.integers(n))]
    best = np.array([_cost(x, measures[centers[0]], config.transport) for x in measures])
    for _ in range(1, K):
        best = np.maximum(best, 0.0)
        best[centers] = 0.0
        if best.sum() > 0:
            nxt = int(rng.choice(n, p=best / best.sum()))
        else:
            nxt = int(np.setdiff1d(np.arange(n), centers)[0])
        centers.append(nxt)
        d = np.array([_cost(x, measures[nxt], config.transport) for x in measures])
        best = np.minimum(best, d)
    return [measures[i] for i in centers]


def kbarycenter_cluster(
    measures: Sequence[DiscreteMeasure], config: ClusterConfig | None = None
) -> ClusterAssignment:
    """Lloyd-type clustering with transport barycenters as centers.

    Alternates nearest-center assignment with a barycenter update warm-started
    at the current center, so neither phase can raise the objective (the sum
    of raw transport costs to the assigned centers).  An emptied cluster is
    re-seeded with the point farthest from its center.
    """
    config = config or ClusterConfig()
    K = config.n_clusters
    if K > len(measures):
        raise ValueError(f"{K} clusters for {len(measures)} measures")
    measures = [m.normalized() for m in measures]
    rng = np.random.default_rng(config.seed)
    centers = _seed(measures, K, config, rng)
    C = _cost_matrix(measures, centers, config.transport)
    labels = np.argmin(C, axis=1)
    objective = float(C[np.arange(len(measures)), labels].sum())
    history = [objective]
    for _ in range(config.iterations):
        for k in range(K):
            members = np.flatnonzero(labels == k)
            if members.size == 0:
                far = int(np.argmax(C[np.arange(len(measures)), labels]))
                centers[k] = measures[far]
                continue
            lam = np.full(members.size, 1.0 / members.size)
            centers[k] = barycenter_ot(
                [measures[i] for i in members], lam, config.transport, init=centers[k]
            ).measure
        C = _cost_matrix(measures, centers, config.transport)
        labels = np.argmin(C, axis=1)
        objective = float(C[np.arange(len(measures)), labels].sum())
        history.append(objective)
        if history[-2] - objective <= 1e-12 * max(history[-2], 1e-300):
            break
    return ClusterAssignment(labels, centers, objective, history)


def label_agreement(labels: ArrayLike, truth: ArrayLike) -> float:
    """Fraction of points whose cluster matches the truth under the best relabeling."""
    labels = np.asarray(labels)
    truth = np.asarray(truth)
    a, ia = np.unique(labels, return_inverse=True)
    b, ib = np.unique(truth, return_inverse=True)
    M = np.zeros((a.size, b.size))
    np.add.at(M, (ia, ib), 1)
    r, c = linear_sum_assignment(-M)
    return float(M[r, c].sum() / labels.size)


@dataclass
class PCAResult:
    coordinates: NDArray[np.float64]
    components: NDArray[np.float64]
    explained_variance_ratio: NDArray[np.float64]
    mean: NDArray[np.float64]
    truncated: bool = False

    def transform(self, X: ArrayLike) -> NDArray[np.float64]:
        return (np.asarray(X, dtype=float) - self.mean) @ self.components.T

    def reconstruct(self) -> NDArray[np.float64]:
        return self.coordinates @ self.components + self.mean


def pca_embed(embeddings, components: int = 2) -> PCAResult:
    """Project centered embeddings onto their leading principal directions.

    Asking for more components than the data rank returns only the rank-many
    directions and sets ``truncated``.
    """
    X = _matrix(embeddings)
    if X.shape[0] < 2:
        raise ValueError("need at least two samples")
    if components < 1:
        raise ValueError("need at least one component")
    mean = X.mean(axis=0)
    U, s, Vt = np.linalg.svd(X - mean, full_matrices=False)
    tol = s.max(initial=0.0) * max(X.shape) * np.finfo(float).eps
    rank = int(np.sum(s > tol))
    keep = min(components, rank)
    truncated = keep < components
    total = np.sum(s**2)
    ratio = s[:keep] ** 2 / total if total > 0 else np.zeros(keep)
    return PCAResult(U[:, :keep] * s[:keep], Vt[:keep], ratio, mean, truncated)


def silhouette(coordinates: ArrayLike, labels: ArrayLike) -> float:
    """Mean silhouette coefficient (Euclidean)."""
    return float(silhouette_score(np.asarray(coordinates, dtype=float), np.asarray(labels)))
