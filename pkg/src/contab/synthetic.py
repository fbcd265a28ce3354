"""Planted two-cluster synthetic cohorts for end-to-end verification.

Cluster A carries a higher mutation load with elevated C>T / G>A transitions
and extra burden on a few chromosomes; cluster B is lighter with a G>T tilt.
At separation 0 the two generating distributions coincide, so downstream
recovery should be at chance level.
"""

from __future__ import annotations

import numpy as np

from contab.ingest import (
    CHROMOSOMES,
    GRCH38_LENGTHS,
    N_SUBSTITUTIONS,
    SUBSTITUTION_INDEX,
    Cohort,
    CohortDataset,
    _chrom_view_from_counts,
    _gene_view_from_tallies,
    scale_features,
)
from contab.seeding import substream

_BASE_SUB_WEIGHTS = {
    "A>C": 2.0, "A>G": 6.0, "A>T": 2.0,
    "C>A": 3.0, "C>G": 2.0, "C>T": 10.0,
    "G>A": 10.0, "G>C": 2.0, "G>T": 3.0,
    "T>A": 2.0, "T>C": 6.0, "T>G": 2.0,
}

N_GENE_POOL = 40
GENE_POOL = tuple(f"G{i + 1:02d}" for i in range(N_GENE_POOL))

# cluster A piles extra load onto these chromosomes
_A_HOT_CHROMS = ("19", "7", "9", "1")

BASE_GENE_LOAD = 600.0     # expected gene-view total for cluster B
BASE_CHROM_LOAD = 1800.0   # expected chromosome-view total for cluster B


def _cluster_params(separation: float):
    base = np.array([_BASE_SUB_WEIGHTS[s] for s in sorted(_BASE_SUB_WEIGHTS, key=SUBSTITUTION_INDEX.get)])
    tilt_a = np.ones(N_SUBSTITUTIONS)
    tilt_a[SUBSTITUTION_INDEX["C>T"]] = 1.0 + separation
    tilt_a[SUBSTITUTION_INDEX["G>A"]] = 1.0 + separation
    tilt_b = np.ones(N_SUBSTITUTIONS)
    tilt_b[SUBSTITUTION_INDEX["G>T"]] = 1.0 + separation

    spectrum_a = base * tilt_a
    spectrum_a /= spectrum_a.sum()
    spectrum_b = base * tilt_b
    spectrum_b /= spectrum_b.sum()

    gene_base = 1.0 / np.arange(1.0, N_GENE_POOL + 1.0)
    boost_a = np.ones(N_GENE_POOL)
    boost_a[: N_GENE_POOL // 2] = 1.0 + separation
    boost_b = np.ones(N_GENE_POOL)
    boost_b[N_GENE_POOL // 2 :] = 1.0 + separation
    genes_a = gene_base * boost_a
    genes_a /= genes_a.sum()
    genes_b = gene_base * boost_b
    genes_b /= genes_b.sum()

    chrom_base = np.array([GRCH38_LENGTHS[c] for c in CHROMOSOMES], dtype=np.float64)
    chrom_base /= chrom_base.sum()
    chrom_boost = np.ones(len(CHROMOSOMES))
    for name in _A_HOT_CHROMS:
        chrom_boost[CHROMOSOMES.index(name)] = 1.0 + separation
    chrom_a = chrom_base * chrom_boost
    chrom_a /= chrom_a.sum()

    load_a = 1.0 + separation
    return (
        (spectrum_a, genes_a, chrom_a, BASE_GENE_LOAD * load_a, BASE_CHROM_LOAD * load_a),
        (spectrum_b, genes_b, chrom_base, BASE_GENE_LOAD, BASE_CHROM_LOAD),
    )


def generate_synthetic_cohorts(
    n_cohorts: int,
    seed: int,
    separation: float,
) -> tuple[CohortDataset, np.ndarray]:
    """Poisson-sampled cohorts with planted binary labels (0 = A, 1 = B)."""
    if n_cohorts < 4 or n_cohorts % 2 != 0:
        raise ValueError("n_cohorts must be even and at least 4")
    if separation < 0:
        raise ValueError("separation must be non-negative")
    rng = substream(seed, "synthetic")
    params = _cluster_params(separation)

    cohorts = []
    labels = np.empty(n_cohorts, dtype=np.int64)
    for i in range(n_cohorts):
        label = i % 2
        labels[i] = label
        spectrum, gene_w, chrom_w, gene_load, chrom_load = params[label]
        gene_counts = rng.poisson(gene_load * np.outer(gene_w, spectrum))
        chrom_counts = rng.poisson(chrom_load * np.outer(chrom_w, spectrum))
        tallies = {
            GENE_POOL[g]: gene_counts[g].astype(np.int64)
            for g in range(N_GENE_POOL)
            if gene_counts[g].sum() > 0
        }
        cohorts.append(
            Cohort(
                name=f"SYN{i:02d}",
                gene=_gene_view_from_tallies(tallies, empty=not tallies),
                chrom=_chrom_view_from_counts(chrom_counts, GRCH38_LENGTHS),
            )
        )
    return scale_features(cohorts), labels
