"""Joint contrastive training of the two view encoders.

Each batch of cohorts yields 2N views ordered [gene_1..gene_N,
chrom_1..chrom_N]; view i's positive is view (i + N) mod 2N. The NT-Xent
loss is computed on projection-head outputs; fused embeddings come from the
pre-projection latents.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from contab.ingest import CHROM_VIEW_DIM, GENE_VIEW_DIM, CohortDataset
from contab.seeding import substream
from contab.tabnet import TabNetConfig, TabNetEncoder
from contab.tensor import (
    AdamState,
    NonFiniteError,
    Tape,
    Tensor,
    adam_step,
    add,
    exp,
    l2_normalize_rows,
    log,
    matmul,
    mul,
    row_sum,
    sub,
    sum_all,
    transpose,
    vstack,
)

DENOMINATOR_CONVENTIONS = ("exclude-self", "exclude-positive")
FUSIONS = ("mean", "concat")
EMBED_SOURCES = ("latent", "projection")


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 8
    lr: float = 1e-3
    temperature: float = 0.5
    seed: int = 42
    denominator: str = "exclude-self"
    fusion: str = "mean"
    embed_source: str = "latent"

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.batch_size < 2:
            raise ValueError("batch_size must be at least 2")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.denominator not in DENOMINATOR_CONVENTIONS:
            raise ValueError(f"denominator must be one of {DENOMINATOR_CONVENTIONS}")
        if self.fusion not in FUSIONS:
            raise ValueError(f"fusion must be one of {FUSIONS}")
        if self.embed_source not in EMBED_SOURCES:
            raise ValueError(f"embed_source must be one of {EMBED_SOURCES}")

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "lr": self.lr,
            "temperature": self.temperature,
            "seed": self.seed,
            "denominator": self.denominator,
            "fusion": self.fusion,
            "embed_source": self.embed_source,
        }


@dataclass
class EmbeddingMatrix:
    names: list[str]
    vectors: np.ndarray          # n x d
    fusion: str = "mean"

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


def nt_xent_loss(z: Tensor, temperature: float, denominator: str = "exclude-self") -> Tensor:
    """Normalized temperature-scaled cross entropy over 2N paired views.

    exclude-self drops only k = i from each anchor's denominator (the
    standard form, positive included); exclude-positive additionally drops
    the positive, leaving negatives only.
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    if denominator not in DENOMINATOR_CONVENTIONS:
        raise ValueError(f"denominator must be one of {DENOMINATOR_CONVENTIONS}")
    two_n = z.rows
    if two_n < 2 or two_n % 2 != 0:
        raise ValueError("embeddings must stack 2N views with N >= 1")
    n = two_n // 2
    if denominator == "exclude-positive" and n < 2:
        raise ValueError("exclude-positive needs N >= 2: a single pair has no negatives")

    zn = l2_normalize_rows(z)
    sims = mul(matmul(zn, transpose(zn)), 1.0 / temperature)

    pos = np.zeros((two_n, two_n))
    idx = np.arange(two_n)
    pos[idx, (idx + n) % two_n] = 1.0
    keep = 1.0 - np.eye(two_n)
    if denominator == "exclude-positive":
        keep = keep - pos

    positive_terms = row_sum(mul(sims, Tensor(pos)))              # s(i, pos)/tau
    denom = log(row_sum(mul(exp(sims), Tensor(keep))))
    per_anchor = sub(denom, positive_terms)
    return mul(sum_all(per_anchor), 1.0 / two_n)


def make_batches(n_cohorts: int, batch_size: int, epoch: int, seed: int) -> list[np.ndarray]:
    """Seeded permutation split into chunks; a short tail below 2 is merged."""
    if n_cohorts < 2:
        raise ValueError("need at least 2 cohorts to form contrastive batches")
    if batch_size < 2:
        raise ValueError("batch_size must be at least 2")
    perm = substream(seed, f"batches.epoch{epoch}").permutation(n_cohorts)
    chunks = [perm[i : i + batch_size] for i in range(0, n_cohorts, batch_size)]
    if len(chunks) > 1 and len(chunks[-1]) < 2:
        tail = chunks.pop()
        chunks[-1] = np.concatenate([chunks[-1], tail])
    return chunks


@dataclass
class TrainResult:
    encoder_gene: TabNetEncoder
    encoder_chrom: TabNetEncoder
    loss_history: list[float] = field(default_factory=list)
    config: TrainConfig | None = None


def build_encoders(
    cfg: TrainConfig,
    gene_config: TabNetConfig | None = None,
    chrom_config: TabNetConfig | None = None,
) -> tuple[TabNetEncoder, TabNetEncoder]:
    gene_config = gene_config or TabNetConfig(input_dim=GENE_VIEW_DIM)
    chrom_config = chrom_config or TabNetConfig(input_dim=CHROM_VIEW_DIM)
    enc_g = TabNetEncoder(gene_config, substream(cfg.seed, "init.gene"))
    enc_c = TabNetEncoder(chrom_config, substream(cfg.seed, "init.chrom"))
    return enc_g, enc_c


def train(
    dataset: CohortDataset,
    cfg: TrainConfig,
    gene_config: TabNetConfig | None = None,
    chrom_config: TabNetConfig | None = None,
) -> TrainResult:
    """Optimize both encoders jointly with Adam; deterministic given the seed."""
    enc_g, enc_c = build_encoders(cfg, gene_config, chrom_config)
    state = AdamState(lr=cfg.lr)
    xg, xc = dataset.scaled_gene, dataset.scaled_chrom

    loss_history = []
    for epoch in range(cfg.epochs):
        batch_losses = []
        for batch_no, batch in enumerate(make_batches(dataset.n, cfg.batch_size, epoch, cfg.seed)):
            tape = Tape()
            leaves_g = enc_g.leaf_params(tape)
            leaves_c = enc_c.leaf_params(tape)
            try:
                _, proj_g, _ = enc_g.forward(xg[batch], leaves_g, mode="train")
                _, proj_c, _ = enc_c.forward(xc[batch], leaves_c, mode="train")
                loss = nt_xent_loss(vstack(proj_g, proj_c), cfg.temperature, cfg.denominator)
            except NonFiniteError as err:
                raise NonFiniteError(
                    f"non-finite loss at epoch {epoch}, batch {batch_no}: {err}"
                ) from err
            batch_losses.append(loss.item())

            grads = tape.backward(loss)
            merged_params = {f"gene.{k}": v for k, v in enc_g.params.items()}
            merged_params.update({f"chrom.{k}": v for k, v in enc_c.params.items()})
            merged_grads = {f"gene.{k}": grads[t] for k, t in leaves_g.items()}
            merged_grads.update({f"chrom.{k}": grads[t] for k, t in leaves_c.items()})
            updated = adam_step(merged_params, merged_grads, state)
            for key in enc_g.params:
                enc_g.params[key] = updated[f"gene.{key}"]
            for key in enc_c.params:
                enc_c.params[key] = updated[f"chrom.{key}"]
        loss_history.append(float(np.mean(batch_losses)))
    return TrainResult(enc_g, enc_c, loss_history, cfg)


def embed_cohorts(
    encoder_gene: TabNetEncoder,
    encoder_chrom: TabNetEncoder,
    dataset: CohortDataset,
    fusion: str = "mean",
    source: str = "latent",
) -> EmbeddingMatrix:
    """Fused per-cohort embeddings from eval-mode passes over both views."""
    if fusion not in FUSIONS:
        raise ValueError(f"fusion must be one of {FUSIONS}")
    if source not in EMBED_SOURCES:
        raise ValueError(f"embed_source must be one of {EMBED_SOURCES}")
    latent_g, proj_g, _ = encoder_gene.encode(dataset.scaled_gene, mode="eval")
    latent_c, proj_c, _ = encoder_chrom.encode(dataset.scaled_chrom, mode="eval")
    pick_g = latent_g if source == "latent" else proj_g
    pick_c = latent_c if source == "latent" else proj_c
    gn = l2_normalize_rows(pick_g).values
    cn = l2_normalize_rows(pick_c).values
    vectors = (gn + cn) / 2.0 if fusion == "mean" else np.hstack([gn, cn])
    return EmbeddingMatrix(names=dataset.names, vectors=vectors, fusion=fusion)
