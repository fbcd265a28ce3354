"""Cluster report assembly, CSV/JSON serialization, and the SVG heatmap.

The heatmap is plain SVG text with one rect per matrix cell and a diverging
blue-white-red ramp over [-1, 1]; output bytes depend only on the data.
"""

from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from contab.artifacts import write_csv, write_json
from contab.evaluate import (
    SimilarityStats,
    calinski_harabasz,
    cluster_chrom_load,
    cluster_spectra,
    davies_bouldin,
    kmeans,
    nearest_neighbors,
    pca_2d,
    silhouette,
    similarity_stats,
    top_genes_by_cluster,
)
from contab.ingest import CHROMOSOMES, SUBSTITUTIONS, CohortDataset
from contab.training import EmbeddingMatrix

# Published reference metrics for each method on the original data snapshot;
# attached to comparison output as metadata, never asserted against local runs.
PAPER_REFERENCE = {
    "ms-contab": {"silhouette": 0.561, "davies_bouldin": 0.655, "calinski_harabasz": 43.106},
    "nmf": {"silhouette": 0.141, "davies_bouldin": 3.011, "calinski_harabasz": 2.680},
    "hierarchical": {"silhouette": 0.697, "davies_bouldin": 0.194, "calinski_harabasz": 16.275},
    "ae": {"silhouette": 0.187, "davies_bouldin": 1.866, "calinski_harabasz": 2.385},
    "simclr": {"silhouette": 0.239, "davies_bouldin": 1.378, "calinski_harabasz": 4.721},
    "deepcluster": {"silhouette": 0.216, "davies_bouldin": 1.60, "calinski_harabasz": 3.16},
}

CELL = 14
LABEL_SPACE = 110


def _ramp(value: float) -> str:
    """Diverging color over [-1, 1]: blue at -1, white at 0, red at +1."""
    v = max(-1.0, min(1.0, value))
    blue = (59, 76, 192)
    white = (255, 255, 255)
    red = (180, 4, 38)
    if v < 0:
        lo, hi, t = blue, white, v + 1.0
    else:
        lo, hi, t = white, red, v
    rgb = tuple(round(lo[i] + (hi[i] - lo[i]) * t) for i in range(3))
    return "#{:02x}{:02x}{:02x}".format(*rgb)


def svg_heatmap(matrix: np.ndarray, names: list[str]) -> str:
    """Cosine-similarity heatmap with cluster-ordered axes; one rect per cell."""
    matrix = np.asarray(matrix, dtype=np.float64)
    n = matrix.shape[0]
    if matrix.shape != (n, n) or len(names) != n:
        raise ValueError("matrix must be square and match the name count")
    width = LABEL_SPACE + n * CELL
    height = LABEL_SPACE + n * CELL
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        '<style>text{font-family:monospace;font-size:9px}</style>',
    ]
    for i in range(n):
        for j in range(n):
            x = LABEL_SPACE + j * CELL
            y = LABEL_SPACE + i * CELL
            color = _ramp(float(matrix[i, j]))
            label = escape(f"{names[i]} / {names[j]}: {matrix[i, j]:.4f}")
            parts.append(
                f'<rect class="cell" x="{x}" y="{y}" width="{CELL}" height="{CELL}" '
                f'fill="{color}"><title>{label}</title></rect>'
            )
    for i, name in enumerate(names):
        y = LABEL_SPACE + i * CELL + CELL - 4
        parts.append(f'<text x="2" y="{y}">{escape(name)}</text>')
        x = LABEL_SPACE + i * CELL + CELL - 4
        parts.append(
            f'<text x="{x}" y="{LABEL_SPACE - 4}" transform="rotate(-90 {x} {LABEL_SPACE - 4})">{escape(name)}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def build_cluster_report(
    embedding: EmbeddingMatrix,
    k: int,
    seed: int,
    dataset: CohortDataset | None = None,
    planted_labels: np.ndarray | None = None,
    top_k_neighbors: int = 3,
) -> dict:
    """Run the full evaluation suite over one embedding matrix."""
    assignment = kmeans(embedding.vectors, k, seed=seed)
    labels = assignment.labels
    stats = similarity_stats(embedding.vectors, embedding.names, labels)

    report = {
        "k": k,
        "n_cohorts": embedding.n,
        "inertia": assignment.inertia,
        "silhouette": silhouette(embedding.vectors, labels),
        "silhouette_cosine": silhouette(embedding.vectors, labels, metric="cosine"),
        "davies_bouldin": davies_bouldin(embedding.vectors, labels),
        "calinski_harabasz": calinski_harabasz(embedding.vectors, labels),
        "within": {str(c): stats.within[c] for c in stats.within},
        "between": stats.between,
        "prototypes": {str(c): stats.prototypes[c] for c in stats.prototypes},
    }
    if planted_labels is not None:
        from contab.evaluate import adjusted_rand_index

        report["ari_vs_planted"] = adjusted_rand_index(labels, planted_labels)

    result = {
        "report": report,
        "labels": labels,
        "stats": stats,
        "neighbors": nearest_neighbors(embedding.vectors, embedding.names, top_k=top_k_neighbors)
        if embedding.n > top_k_neighbors
        else None,
        "pca2": pca_2d(embedding.vectors) if embedding.n >= 3 else None,
    }
    if dataset is not None:
        result["spectra"] = cluster_spectra(dataset, labels)
        result["chrom_load"] = cluster_chrom_load(dataset, labels)
        result["top_genes"] = top_genes_by_cluster(dataset, labels)
    return result


def write_cluster_report(out: Path, embedding: EmbeddingMatrix, evaluation: dict) -> None:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    labels = evaluation["labels"]
    stats: SimilarityStats = evaluation["stats"]

    write_json(out / "report.json", evaluation["report"])
    write_csv(out / "labels.csv", ["cohort", "label"], zip(embedding.names, labels))
    write_csv(
        out / "cosine_matrix.csv",
        ["cohort"] + stats.names_ordered,
        ([name] + list(row) for name, row in zip(stats.names_ordered, stats.matrix_ordered)),
    )
    if evaluation["neighbors"] is not None:
        write_csv(
            out / "neighbors.csv",
            ["cohort", "rank", "neighbor", "cosine"],
            (
                [name, rank + 1, neighbor, sim]
                for name, ranked in zip(embedding.names, evaluation["neighbors"])
                for rank, (neighbor, sim) in enumerate(ranked)
            ),
        )
    if evaluation["pca2"] is not None:
        write_csv(
            out / "pca2.csv",
            ["cohort", "pc1", "pc2"],
            ([name] + list(row) for name, row in zip(embedding.names, evaluation["pca2"])),
        )
    (out / "heatmap.svg").write_text(svg_heatmap(stats.matrix_ordered, stats.names_ordered))

    if "spectra" in evaluation:
        write_csv(
            out / "spectra.csv",
            ["cluster"] + list(SUBSTITUTIONS),
            ([c] + list(v) for c, v in sorted(evaluation["spectra"].items())),
        )
        write_csv(
            out / "chrom_load.csv",
            ["cluster"] + [f"chr{c}" for c in CHROMOSOMES],
            ([c] + list(v) for c, v in sorted(evaluation["chrom_load"].items())),
        )
        top = evaluation["top_genes"]
        for cluster, ranked in sorted(top.ranked.items()):
            write_csv(
                out / f"top_genes_{cluster}.csv",
                ["gene", "cohort_count"],
                ranked,
            )
        if top.overlap:
            write_json(out / "gene_overlap.json", top.overlap)


def write_comparison(out: Path, rows: dict[str, dict], requested: list[str]) -> None:
    """Table-2-shaped comparison: one row per requested method that produced
    metrics; missing methods are absent, never zero-filled."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    header = ["method", "silhouette", "davies_bouldin", "calinski_harabasz"]
    has_ari = any("ari_vs_planted" in row for row in rows.values())
    if has_ari:
        header.append("ari_vs_planted")
    csv_rows = []
    for method in requested:
        if method not in rows:
            continue
        row = rows[method]
        values = [method, row["silhouette"], row["davies_bouldin"], row["calinski_harabasz"]]
        if has_ari:
            values.append(row.get("ari_vs_planted", ""))
        csv_rows.append(values)
    write_csv(out / "comparison.csv", header, csv_rows)
    write_json(
        out / "comparison.json",
        {
            "space": "original-embeddings",
            "rows": rows,
            "paper_reference": PAPER_REFERENCE,
        },
    )
