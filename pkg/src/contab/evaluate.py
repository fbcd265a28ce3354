"""Clustering, quality indices, similarity structure, and spectra summaries.

Everything here is a pure function of its inputs. k-means uses k-means++
seeding with best-of-n_init restarts; quality indices follow the textbook
formulas and are cross-checked against brute-force evaluation in the tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from contab.ingest import CohortDataset
from contab.seeding import substream


@dataclass
class ClusterAssignment:
    labels: np.ndarray
    k: int
    inertia: float


def _pairwise_sq_dists(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    d = (x * x).sum(axis=1)[:, None] + (y * y).sum(axis=1)[None, :] - 2.0 * x @ y.T
    return np.maximum(d, 0.0)


def _kmeans_pp_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = _pairwise_sq_dists(x, x[chosen])[:, 0]
    while len(chosen) < k:
        total = d2.sum()
        if total <= 0.0:
            # all remaining points coincide with a centroid; take the first unchosen
            for i in range(n):
                if i not in chosen:
                    chosen.append(i)
                    break
        else:
            chosen.append(int(rng.choice(n, p=d2 / total)))
        d2 = np.minimum(d2, _pairwise_sq_dists(x, x[chosen[-1:]])[:, 0])
    return x[chosen].copy()


def _lloyd(x: np.ndarray, centroids: np.ndarray, max_iter: int) -> tuple[np.ndarray, np.ndarray, float]:
    k = centroids.shape[0]
    labels = np.full(x.shape[0], -1)
    for _ in range(max_iter):
        dists = _pairwise_sq_dists(x, centroids)
        new_labels = dists.argmin(axis=1)
        # reseed empty clusters from the points farthest from their centroids,
        # recomputing after each move so two empties never claim one point
        own = dists[np.arange(len(new_labels)), new_labels].copy()
        for cluster in range(k):
            if not (new_labels == cluster).any():
                farthest = int(own.argmax())
                new_labels[farthest] = cluster
                own[farthest] = -1.0
        if (new_labels == labels).all():
            break
        labels = new_labels
        for cluster in range(k):
            centroids[cluster] = x[labels == cluster].mean(axis=0)
    inertia = float(((x - centroids[labels]) ** 2).sum())
    return labels, centroids, inertia


def kmeans(x: np.ndarray, k: int, n_init: int = 10, max_iter: int = 300, seed: int = 0) -> ClusterAssignment:
    """Lloyd's algorithm, k-means++ seeding, best of n_init restarts."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if k < 1:
        raise ValueError("k must be at least 1")
    if k > n:
        raise ValueError(f"k={k} exceeds the number of points n={n}")
    best: tuple[float, np.ndarray] | None = None
    for restart in range(n_init):
        rng = substream(seed, f"kmeans.restart{restart}")
        centroids = _kmeans_pp_init(x, k, rng)
        labels, _, inertia = _lloyd(x, centroids, max_iter)
        if best is None or inertia < best[0]:
            best = (inertia, labels)
    return ClusterAssignment(labels=best[1], k=k, inertia=best[0])


def _check_labels(x: np.ndarray, labels: np.ndarray) -> list[np.ndarray]:
    labels = np.asarray(labels)
    if labels.shape[0] != x.shape[0]:
        raise ValueError("labels length does not match the number of points")
    clusters = [np.nonzero(labels == c)[0] for c in np.unique(labels)]
    return clusters


def silhouette(x: np.ndarray, labels: np.ndarray, metric: str = "euclidean") -> float:
    """Mean silhouette coefficient; singleton-cluster points score 0."""
    x = np.asarray(x, dtype=np.float64)
    clusters = _check_labels(x, labels)
    if len(clusters) < 2:
        raise ValueError("silhouette requires at least 2 clusters")
    if metric == "euclidean":
        dists = np.sqrt(_pairwise_sq_dists(x, x))
    elif metric == "cosine":
        norms = np.linalg.norm(x, axis=1, keepdims=True)
        if (norms == 0).any():
            raise ValueError("cosine silhouette requires nonzero rows")
        dists = 1.0 - (x / norms) @ (x / norms).T
    else:
        raise ValueError(f"unknown metric {metric!r}")

    scores = np.zeros(x.shape[0])
    for members in clusters:
        for i in members:
            if len(members) == 1:
                continue  # convention: singleton scores 0
            a = dists[i, members].sum() / (len(members) - 1)
            b = min(
                dists[i, other].mean()
                for other in clusters
                if other is not members
            )
            denom = max(a, b)
            scores[i] = 0.0 if denom == 0.0 else (b - a) / denom
    return float(scores.mean())


def davies_bouldin(x: np.ndarray, labels: np.ndarray) -> float:
    x = np.asarray(x, dtype=np.float64)
    clusters = _check_labels(x, labels)
    if len(clusters) < 2:
        raise ValueError("davies_bouldin requires at least 2 clusters")
    centroids = np.stack([x[m].mean(axis=0) for m in clusters])
    scatter = np.array(
        [np.linalg.norm(x[m] - centroids[i], axis=1).mean() for i, m in enumerate(clusters)]
    )
    sep = np.sqrt(_pairwise_sq_dists(centroids, centroids))
    k = len(clusters)
    off = ~np.eye(k, dtype=bool)
    if (sep[off] == 0).any():
        raise ValueError("degenerate centroids: two clusters share a centroid")
    worst = np.zeros(k)
    for i in range(k):
        ratios = [(scatter[i] + scatter[j]) / sep[i, j] for j in range(k) if j != i]
        worst[i] = max(ratios)
    return float(worst.mean())


def calinski_harabasz(x: np.ndarray, labels: np.ndarray) -> float:
    x = np.asarray(x, dtype=np.float64)
    clusters = _check_labels(x, labels)
    k = len(clusters)
    if k < 2:
        raise ValueError("calinski_harabasz requires at least 2 clusters")
    n = x.shape[0]
    grand = x.mean(axis=0)
    between = sum(len(m) * float(((x[m].mean(axis=0) - grand) ** 2).sum()) for m in clusters)
    within = sum(float(((x[m] - x[m].mean(axis=0)) ** 2).sum()) for m in clusters)
    if within == 0.0:
        return float("inf")
    return (between / (k - 1)) / (within / (n - k))


def adjusted_rand_index(labels_a, labels_b) -> float:
    a = np.asarray(labels_a)
    b = np.asarray(labels_b)
    if a.shape != b.shape:
        raise ValueError("labelings must have equal length")
    values_a, a_idx = np.unique(a, return_inverse=True)
    values_b, b_idx = np.unique(b, return_inverse=True)
    contingency = np.zeros((len(values_a), len(values_b)), dtype=np.int64)
    np.add.at(contingency, (a_idx, b_idx), 1)

    def comb2(v):
        return v * (v - 1) / 2.0

    index = comb2(contingency).sum()
    sum_a = comb2(contingency.sum(axis=1)).sum()
    sum_b = comb2(contingency.sum(axis=0)).sum()
    total = comb2(len(a))
    expected = sum_a * sum_b / total if total > 0 else 0.0
    max_index = (sum_a + sum_b) / 2.0
    if max_index == expected:
        # degenerate partitions: 1 when they are the same partition, else 0
        return 1.0 if index == expected and sum_a == sum_b else 0.0
    return float((index - expected) / (max_index - expected))


def cosine_similarity_matrix(vectors: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    zero = np.nonzero(norms[:, 0] == 0.0)[0]
    if zero.size:
        raise ValueError(f"zero-norm embedding at row {int(zero[0])}")
    unit = vectors / norms
    return unit @ unit.T


@dataclass
class SimilarityStats:
    within: dict[int, float | None]
    between: float
    prototypes: dict[int, str]
    order: list[int]                      # cohort indices, cluster-contiguous
    names_ordered: list[str]
    matrix_ordered: np.ndarray


def similarity_stats(vectors: np.ndarray, names: list[str], labels: np.ndarray) -> SimilarityStats:
    """Within/between cosine structure plus per-cluster prototype cohorts."""
    cos = cosine_similarity_matrix(np.asarray(vectors, dtype=np.float64))
    labels = np.asarray(labels)
    cluster_ids = [int(c) for c in np.unique(labels)]

    within: dict[int, float | None] = {}
    prototypes: dict[int, str] = {}
    for c in cluster_ids:
        members = np.nonzero(labels == c)[0]
        if len(members) == 1:
            within[c] = None
            prototypes[c] = names[members[0]]
            continue
        block = cos[np.ix_(members, members)]
        off = ~np.eye(len(members), dtype=bool)
        within[c] = float(block[off].mean())
        # mean similarity to the other members; ties break by cohort name
        mean_to_own = (block.sum(axis=1) - 1.0) / (len(members) - 1)
        order = sorted(range(len(members)), key=lambda i: (-mean_to_own[i], names[members[i]]))
        prototypes[c] = names[members[order[0]]]

    cross = labels[:, None] != labels[None, :]
    between = float(cos[cross].mean()) if cross.any() else float("nan")

    order = [i for c in cluster_ids for i in np.nonzero(labels == c)[0]]
    return SimilarityStats(
        within=within,
        between=between,
        prototypes=prototypes,
        order=order,
        names_ordered=[names[i] for i in order],
        matrix_ordered=cos[np.ix_(order, order)],
    )


def nearest_neighbors(vectors: np.ndarray, names: list[str], top_k: int = 3) -> list[list[tuple[str, float]]]:
    """Per cohort, the top_k most cosine-similar other cohorts.

    Ties break lexicographically by cohort name.
    """
    n = len(names)
    if n <= top_k:
        raise ValueError(f"need more than top_k={top_k} cohorts, have {n}")
    cos = cosine_similarity_matrix(np.asarray(vectors, dtype=np.float64))
    result = []
    for i in range(n):
        others = [(names[j], float(cos[i, j])) for j in range(n) if j != i]
        others.sort(key=lambda item: (-item[1], item[0]))
        result.append(others[:top_k])
    return result


def _cluster_members(dataset: CohortDataset, labels: np.ndarray) -> dict[int, np.ndarray]:
    labels = np.asarray(labels)
    if labels.shape[0] != dataset.n:
        raise ValueError("labels length does not match the dataset")
    members = {int(c): np.nonzero(labels == c)[0] for c in np.unique(labels)}
    for c, idx in members.items():
        if idx.size == 0:
            raise ValueError(f"cluster {c} is empty")
    return members


def cluster_spectra(dataset: CohortDataset, labels: np.ndarray) -> dict[int, np.ndarray]:
    """Per-cluster mean substitution-type counts from raw gene-view tallies."""
    per_cohort = np.stack([c.gene.counts.sum(axis=0) for c in dataset.cohorts]).astype(np.float64)
    return {
        c: per_cohort[idx].mean(axis=0)
        for c, idx in _cluster_members(dataset, labels).items()
    }


def cluster_chrom_load(dataset: CohortDataset, labels: np.ndarray) -> dict[int, np.ndarray]:
    """Per-cluster mean length-normalized mutation load per chromosome."""
    per_cohort = np.stack([c.chrom.rates.sum(axis=1) for c in dataset.cohorts])
    return {
        c: per_cohort[idx].mean(axis=0)
        for c, idx in _cluster_members(dataset, labels).items()
    }


@dataclass
class TopGenesReport:
    ranked: dict[int, list[tuple[str, int]]]   # cluster -> (gene, cohort count)
    overlap: dict[str, int] = field(default_factory=dict)


def top_genes_by_cluster(dataset: CohortDataset, labels: np.ndarray, top_n: int = 20) -> TopGenesReport:
    """Genes ranked by how many cohorts in the cluster carry them in the top 25.

    For two clusters, also reports |shared|, |unique to each| over the full
    top-25 gene sets.
    """
    members = _cluster_members(dataset, labels)
    ranked: dict[int, list[tuple[str, int]]] = {}
    gene_sets: dict[int, set[str]] = {}
    for c, idx in members.items():
        counts: dict[str, int] = {}
        for i in idx:
            for gene in dataset.cohorts[i].gene.gene_names:
                if gene:
                    counts[gene] = counts.get(gene, 0) + 1
        ordered = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        ranked[c] = ordered[:top_n]
        gene_sets[c] = set(counts)
    overlap: dict[str, int] = {}
    if len(members) == 2:
        c1, c2 = sorted(gene_sets)
        overlap = {
            "shared": len(gene_sets[c1] & gene_sets[c2]),
            f"unique_{c1}": len(gene_sets[c1] - gene_sets[c2]),
            f"unique_{c2}": len(gene_sets[c2] - gene_sets[c1]),
        }
    return TopGenesReport(ranked=ranked, overlap=overlap)


def _power_iteration(s: np.ndarray, rng_free_start: np.ndarray, iters: int = 1000, tol: float = 1e-13) -> tuple[np.ndarray, float]:
    v = rng_free_start / np.linalg.norm(rng_free_start)
    for _ in range(iters):
        w = s @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return v, 0.0
        w /= norm
        if np.linalg.norm(w - v) < tol:
            v = w
            break
        v = w
    return v, float(v @ s @ v)


def pca_2d(vectors: np.ndarray) -> np.ndarray:
    """Top-2 principal-component coordinates via deflated power iteration.

    Deterministic start vector; sign convention: the largest-magnitude loading
    of each component is positive.
    """
    x = np.asarray(vectors, dtype=np.float64)
    if x.shape[0] < 3:
        raise ValueError("pca_2d requires at least 3 rows")
    centered = x - x.mean(axis=0)
    if not centered.any():
        raise ValueError("pca_2d: matrix has rank 0 after centering")
    cov = centered.T @ centered
    d = cov.shape[0]
    start = np.ones(d) + np.linspace(0.0, 0.1, d)

    v1, lam1 = _power_iteration(cov, start)
    deflated = cov - lam1 * np.outer(v1, v1)
    v2, _ = _power_iteration(deflated, start)
    v2 -= (v2 @ v1) * v1
    norm2 = np.linalg.norm(v2)
    if norm2 > 0:
        v2 /= norm2

    components = np.stack([v1, v2], axis=1)
    for j in range(2):
        lead = np.argmax(np.abs(components[:, j]))
        if components[lead, j] < 0:
            components[:, j] = -components[:, j]
    return centered @ components
