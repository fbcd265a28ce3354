"""Comparison methods over the concatenated 588-dim feature matrix.

All stochastic baselines are bit-reproducible under a fixed seed and return
embeddings (or direct labels for Ward clustering) in the input cohort order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from contab.ingest import CohortDataset, chrom_log_rates, gene_log_counts
from contab.seeding import substream
from contab.tensor import (
    AdamState,
    Tape,
    Tensor,
    adam_step,
    add,
    affine,
    exp,
    log,
    mean_all,
    mul,
    relu,
    row_sum,
    sub,
    vstack,
)
from contab.evaluate import kmeans
from contab.training import EmbeddingMatrix, make_batches, nt_xent_loss

METHODS = ("nmf", "ae", "simclr", "deepcluster", "hierarchical")


@dataclass
class BaselineConfig:
    method: str
    seed: int = 42
    epochs: int = 100
    hidden: int = 256
    latent: int = 64
    rank: int = 2                 # nmf factor count
    nmf_iters: int = 500
    dropout_p: float = 0.1        # simclr feature-dropout probability
    temperature: float = 0.5
    k_pseudo: int = 2             # deepcluster pseudo-cluster count
    batch_size: int = 8
    lr: float = 1e-3

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.method == "simclr" and not (0.0 < self.dropout_p < 1.0):
            raise ValueError("dropout_p must lie in (0, 1)")
        if self.method == "nmf" and self.rank < 1:
            raise ValueError("rank must be at least 1")
        if self.method == "deepcluster" and self.k_pseudo < 2:
            raise ValueError("k_pseudo must be at least 2")


def concat_features(dataset: CohortDataset) -> np.ndarray:
    """Row-wise [gene 300 | chromosome 288] concatenation of scaled features."""
    return np.hstack([dataset.scaled_gene, dataset.scaled_chrom])


def nonneg_features(dataset: CohortDataset) -> np.ndarray:
    """log1p-stage (pre z-score) features; non-negative, as NMF requires."""
    return np.hstack([gene_log_counts(dataset.cohorts), chrom_log_rates(dataset.cohorts)])


def nmf_fit(
    x: np.ndarray,
    rank: int,
    iters: int = 500,
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray, list[float]]:
    """Multiplicative-update NMF minimizing the squared Frobenius residual."""
    x = np.asarray(x, dtype=np.float64)
    if (x < 0).any():
        raise ValueError("nmf_fit requires a non-negative matrix")
    n, m = x.shape
    if rank > min(n, m):
        raise ValueError(f"rank {rank} exceeds min(n, m) = {min(n, m)}")
    rng = substream(seed, "nmf")
    # uniform on (0, 1]: multiplicative updates cannot recover from exact zeros
    w = 1.0 - rng.random((n, rank))
    h = 1.0 - rng.random((rank, m))
    delta = 1e-12
    history = []
    for _ in range(iters):
        h *= (w.T @ x) / (w.T @ w @ h + delta)
        w *= (x @ h.T) / (w @ h @ h.T + delta)
        history.append(float(((x - w @ h) ** 2).sum()))
    return w, h, history


def _init_mlp(rng: np.random.Generator, dims: list[int], prefix: str) -> dict[str, np.ndarray]:
    params = {}
    for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        params[f"{prefix}.{i}.W"] = rng.uniform(-limit, limit, size=(fan_in, fan_out))
        params[f"{prefix}.{i}.b"] = np.zeros((1, fan_out))
    return params


def _mlp_forward(x: Tensor, params: dict[str, Tensor], prefix: str, n_layers: int) -> Tensor:
    h = x
    for i in range(n_layers):
        h = affine(h, params[f"{prefix}.{i}.W"], params[f"{prefix}.{i}.b"])
        if i < n_layers - 1:
            h = relu(h)
    return h


def ae_train(
    x: np.ndarray,
    cfg: BaselineConfig,
    names: list[str] | None = None,
) -> tuple[EmbeddingMatrix, list[float]]:
    """Shallow autoencoder (affine-ReLU bottleneck, affine decoder), MSE loss."""
    x = np.asarray(x, dtype=np.float64)
    n, m = x.shape
    rng = substream(cfg.seed, "ae.init")
    params = _init_mlp(rng, [m, cfg.latent], "enc")
    params.update(_init_mlp(rng, [cfg.latent, m], "dec"))
    state = AdamState(lr=cfg.lr)
    target = Tensor(x)

    history = []
    for _ in range(cfg.epochs):
        tape = Tape()
        leaves = {k: tape.leaf(v) for k, v in params.items()}
        bottleneck = relu(affine(Tensor(x), leaves["enc.0.W"], leaves["enc.0.b"]))
        recon = affine(bottleneck, leaves["dec.0.W"], leaves["dec.0.b"])
        err = sub(recon, target)
        loss = mean_all(mul(err, err))
        history.append(loss.item())
        grads = tape.backward(loss)
        params = adam_step(params, {k: grads[t] for k, t in leaves.items()}, state)

    constants = {k: Tensor(v) for k, v in params.items()}
    embedding = relu(affine(Tensor(x), constants["enc.0.W"], constants["enc.0.b"])).values
    names = names or [str(i) for i in range(n)]
    return EmbeddingMatrix(names=names, vectors=embedding, fusion="ae"), history


def _simclr_encode(x: Tensor, leaves: dict[str, Tensor]) -> tuple[Tensor, Tensor]:
    latent = _mlp_forward(x, leaves, "mlp", 2)
    projected = affine(latent, leaves["proj.0.W"], leaves["proj.0.b"])
    return latent, projected


def simclr_mlp_train(
    x: np.ndarray,
    cfg: BaselineConfig,
    names: list[str] | None = None,
) -> tuple[EmbeddingMatrix, list[float]]:
    """Single-view MLP contrastive baseline with feature-dropout augmentation."""
    if not (0.0 < cfg.dropout_p < 1.0):
        raise ValueError("dropout_p must lie in (0, 1)")
    x = np.asarray(x, dtype=np.float64)
    n, m = x.shape
    init_rng = substream(cfg.seed, "simclr.init")
    params = _init_mlp(init_rng, [m, cfg.hidden, cfg.latent], "mlp")
    params.update(_init_mlp(init_rng, [cfg.latent, cfg.latent], "proj"))
    state = AdamState(lr=cfg.lr)
    aug_rng = substream(cfg.seed, "simclr.augment")
    batch_seed = int(substream(cfg.seed, "simclr.batches").integers(2**31))

    history = []
    for epoch in range(cfg.epochs):
        epoch_losses = []
        for batch in make_batches(n, cfg.batch_size, epoch, batch_seed):
            keep_a = aug_rng.random((len(batch), m)) >= cfg.dropout_p
            keep_b = aug_rng.random((len(batch), m)) >= cfg.dropout_p
            tape = Tape()
            leaves = {k: tape.leaf(v) for k, v in params.items()}
            _, proj_a = _simclr_encode(Tensor(x[batch] * keep_a), leaves)
            _, proj_b = _simclr_encode(Tensor(x[batch] * keep_b), leaves)
            loss = nt_xent_loss(vstack(proj_a, proj_b), cfg.temperature)
            epoch_losses.append(loss.item())
            grads = tape.backward(loss)
            params = adam_step(params, {k: grads[t] for k, t in leaves.items()}, state)
        history.append(float(np.mean(epoch_losses)))

    constants = {k: Tensor(v) for k, v in params.items()}
    latent, _ = _simclr_encode(Tensor(x), constants)
    names = names or [str(i) for i in range(n)]
    return EmbeddingMatrix(names=names, vectors=latent.values, fusion="simclr"), history


def _cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    onehot = np.zeros(logits.shape)
    onehot[np.arange(len(labels)), labels] = 1.0
    # constant per-row shift for a stable log-sum-exp; no gradient through it
    shift = Tensor(-logits.values.max(axis=1, keepdims=True))
    shifted = add(logits, shift)
    log_denom = log(row_sum(exp(shifted)))
    true_term = row_sum(mul(shifted, Tensor(onehot)))
    return mean_all(sub(log_denom, true_term))


@dataclass
class DeepClusterTrace:
    pseudo_labels: list[np.ndarray] = field(default_factory=list)
    head_checksums: list[float] = field(default_factory=list)
    losses: list[float] = field(default_factory=list)


def deepcluster_train(
    x: np.ndarray,
    cfg: BaselineConfig,
    names: list[str] | None = None,
) -> tuple[EmbeddingMatrix, DeepClusterTrace]:
    """Alternate k-means pseudo-labeling with classification training.

    The linear classifier head is re-initialized from the seeded stream at
    every reassignment; the MLP and its optimizer state persist.
    """
    x = np.asarray(x, dtype=np.float64)
    n, m = x.shape
    if cfg.k_pseudo > n:
        raise ValueError(f"k_pseudo={cfg.k_pseudo} exceeds the number of samples {n}")
    init_rng = substream(cfg.seed, "deepcluster.init")
    params = _init_mlp(init_rng, [m, cfg.hidden, cfg.latent], "mlp")
    state = AdamState(lr=cfg.lr)
    head_rng = substream(cfg.seed, "deepcluster.head")
    kmeans_seed = int(substream(cfg.seed, "deepcluster.kmeans").integers(2**31))
    batch_seed = int(substream(cfg.seed, "deepcluster.batches").integers(2**31))

    trace = DeepClusterTrace()
    for epoch in range(cfg.epochs):
        constants = {k: Tensor(v) for k, v in params.items()}
        latents = _mlp_forward(Tensor(x), constants, "mlp", 2).values
        pseudo = kmeans(latents, cfg.k_pseudo, n_init=3, seed=kmeans_seed + epoch).labels
        trace.pseudo_labels.append(pseudo)

        head = _init_mlp(head_rng, [cfg.latent, cfg.k_pseudo], "head")
        trace.head_checksums.append(float(np.abs(head["head.0.W"]).sum()))
        head_state = AdamState(lr=cfg.lr)

        epoch_losses = []
        for batch in make_batches(n, cfg.batch_size, epoch, batch_seed):
            tape = Tape()
            leaves = {k: tape.leaf(v) for k, v in params.items()}
            head_leaves = {k: tape.leaf(v) for k, v in head.items()}
            latent = _mlp_forward(Tensor(x[batch]), leaves, "mlp", 2)
            logits = affine(latent, head_leaves["head.0.W"], head_leaves["head.0.b"])
            loss = _cross_entropy(logits, pseudo[batch])
            epoch_losses.append(loss.item())
            grads = tape.backward(loss)
            params = adam_step(params, {k: grads[t] for k, t in leaves.items()}, state)
            head = adam_step(head, {k: grads[t] for k, t in head_leaves.items()}, head_state)
        trace.losses.append(float(np.mean(epoch_losses)))

    constants = {k: Tensor(v) for k, v in params.items()}
    embedding = _mlp_forward(Tensor(x), constants, "mlp", 2).values
    names = names or [str(i) for i in range(n)]
    return EmbeddingMatrix(names=names, vectors=embedding, fusion="deepcluster"), trace


def ward_linkage(x: np.ndarray) -> list[tuple[int, int, float, int]]:
    """Agglomerative Ward merges via the Lance-Williams recurrence.

    Returns (cluster_i, cluster_j, height, merged_size) per merge, where the
    working distances are squared-Euclidean based merge costs and new clusters
    take ids n, n+1, ... in merge order.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    d2 = (x[:, None, :] - x[None, :, :]) ** 2
    dist = d2.sum(axis=2)

    size = {i: 1 for i in range(n)}
    # grow the matrix to hold merged clusters (ids n, n+1, ...)
    full = np.full((2 * n - 1, 2 * n - 1), np.inf)
    full[:n, :n] = dist
    np.fill_diagonal(full, np.inf)

    merges = []
    next_id = n
    ids = list(range(n))
    for _ in range(n - 1):
        best = (np.inf, None, None)
        for ai in range(len(ids)):
            for bi in range(ai + 1, len(ids)):
                a, b = ids[ai], ids[bi]
                d = full[a, b]
                if d < best[0]:
                    best = (d, a, b)
        height, a, b = best
        merged_size = size[a] + size[b]
        merges.append((a, b, float(height), merged_size))
        for other in ids:
            if other in (a, b):
                continue
            updated = (
                (size[a] + size[other]) * full[a, other]
                + (size[b] + size[other]) * full[b, other]
                - size[other] * full[a, b]
            ) / (merged_size + size[other])
            full[next_id, other] = updated
            full[other, next_id] = updated
        size[next_id] = merged_size
        ids = [i for i in ids if i not in (a, b)] + [next_id]
        next_id += 1
    return merges


def hierarchical_labels(x: np.ndarray, k: int) -> np.ndarray:
    """Cut the Ward dendrogram at k clusters; labels in first-occurrence order."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if k < 1:
        raise ValueError("k must be at least 1")
    if k > n:
        raise ValueError(f"k={k} exceeds the number of points n={n}")
    merges = ward_linkage(x)

    parent = {}
    for step, (a, b, _, _) in enumerate(merges[: n - k]):
        parent[a] = n + step
        parent[b] = n + step

    def root(i):
        while i in parent:
            i = parent[i]
        return i

    raw = [root(i) for i in range(n)]
    canonical: dict[int, int] = {}
    labels = np.empty(n, dtype=np.int64)
    for i, r in enumerate(raw):
        if r not in canonical:
            canonical[r] = len(canonical)
        labels[i] = canonical[r]
    return labels
