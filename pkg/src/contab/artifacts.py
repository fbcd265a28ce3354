"""File formats shared by the CLI commands.

Everything is written atomically (temp file + rename) and floats are
serialized with repr so reruns and reloads are byte-exact. Manifests honor
SOURCE_DATE_EPOCH so identical runs produce identical trees.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import tempfile
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

import contab
from contab.ingest import (
    CHROM_VIEW_DIM,
    GENE_VIEW_DIM,
    N_SUBSTITUTIONS,
    TOP_GENES,
    ChromosomeView,
    Cohort,
    CohortDataset,
    GeneView,
    chrom_feature_names,
    gene_feature_names,
)
from contab.tabnet import TabNetConfig, TabNetEncoder
from contab.training import EmbeddingMatrix, TrainConfig, TrainResult

FEATURES_FORMAT = "contab-features-v1"
MODEL_FORMAT = "contab-model-v1"


def atomic_write_text(path: Path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def fmt(value) -> str:
    """Round-trippable cell text: repr for floats, str otherwise."""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def write_csv(path: Path, header: list[str], rows) -> None:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    atomic_write_text(path, buffer.getvalue())


def write_json(path: Path, obj) -> None:
    atomic_write_text(path, json.dumps(obj, sort_keys=True, indent=2) + "\n")


def sha256_paths(paths: list[Path]) -> str:
    digest = hashlib.sha256()
    for path in sorted(Path(p) for p in paths):
        digest.update(path.name.encode())
        digest.update(path.read_bytes())
    return digest.hexdigest()


def hash_tree(root: Path) -> str:
    """Content hash of a directory: relative names plus bytes, sorted."""
    root = Path(root)
    digest = hashlib.sha256()
    for path in sorted(root.rglob("*")):
        if path.is_file():
            digest.update(str(path.relative_to(root)).encode())
            digest.update(path.read_bytes())
    return digest.hexdigest()


def _timestamp() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    moment = (
        datetime.fromtimestamp(int(epoch), tz=timezone.utc)
        if epoch
        else datetime.now(tz=timezone.utc)
    )
    return moment.strftime("%Y-%m-%dT%H:%M:%SZ")


def make_manifest(command: str, seed: int, config: dict, input_digest: str, **extra) -> dict:
    manifest = {
        "tool": "contab",
        "version": contab.__version__,
        "command": command,
        "seed": seed,
        "config": config,
        "input_digest": input_digest,
        "created_utc": _timestamp(),
    }
    manifest.update(extra)
    return manifest


# ---------------------------------------------------------------------------
# feature directories


def write_features(
    out: Path,
    dataset: CohortDataset,
    labels: np.ndarray | None = None,
) -> None:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    names = dataset.names

    write_csv(
        out / "gene.csv",
        ["cohort"] + gene_feature_names(),
        ([name] + list(row) for name, row in zip(names, dataset.scaled_gene)),
    )
    write_csv(
        out / "chrom.csv",
        ["cohort"] + chrom_feature_names(),
        ([name] + list(row) for name, row in zip(names, dataset.scaled_chrom)),
    )
    write_csv(
        out / "raw_gene_counts.csv",
        ["cohort"] + gene_feature_names(),
        ([c.name] + [int(v) for v in c.gene.counts.reshape(-1)] for c in dataset.cohorts),
    )
    write_csv(
        out / "raw_chrom_rates.csv",
        ["cohort"] + chrom_feature_names(),
        ([c.name] + list(c.chrom.rates.reshape(-1)) for c in dataset.cohorts),
    )
    write_csv(
        out / "genes.csv",
        ["cohort", "rank", "gene"],
        (
            [c.name, rank + 1, gene]
            for c in dataset.cohorts
            for rank, gene in enumerate(c.gene.gene_names)
            if gene
        ),
    )
    write_json(
        out / "scaling.json",
        {
            "format": FEATURES_FORMAT,
            "gene": {
                "mean": dataset.scaling_params["gene"]["mean"].tolist(),
                "std": dataset.scaling_params["gene"]["std"].tolist(),
            },
            "chrom": {
                "mean": dataset.scaling_params["chrom"]["mean"].tolist(),
                "std": dataset.scaling_params["chrom"]["std"].tolist(),
            },
            "rejects": dict(dataset.rejects),
        },
    )
    if labels is not None:
        write_csv(out / "labels.csv", ["cohort", "label"], zip(names, labels))


def _read_csv_matrix(path: Path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        next(reader)  # header
        names, rows = [], []
        for row in reader:
            names.append(row[0])
            rows.append([float(v) for v in row[1:]])
    return names, np.array(rows, dtype=np.float64)


def load_features(root: Path) -> tuple[CohortDataset, np.ndarray | None]:
    root = Path(root)
    for required in ("gene.csv", "chrom.csv", "raw_gene_counts.csv", "raw_chrom_rates.csv", "genes.csv", "scaling.json"):
        if not (root / required).exists():
            raise ValueError(f"feature directory is missing {required}")

    names, scaled_gene = _read_csv_matrix(root / "gene.csv")
    chrom_names, scaled_chrom = _read_csv_matrix(root / "chrom.csv")
    if names != chrom_names:
        raise ValueError("gene.csv and chrom.csv disagree on cohort order")
    if scaled_gene.shape[1] != GENE_VIEW_DIM or scaled_chrom.shape[1] != CHROM_VIEW_DIM:
        raise ValueError("feature matrices have unexpected widths")

    _, raw_gene = _read_csv_matrix(root / "raw_gene_counts.csv")
    _, raw_rates = _read_csv_matrix(root / "raw_chrom_rates.csv")

    gene_names: dict[str, list[str]] = {name: [] for name in names}
    with open(root / "genes.csv", newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        next(reader)
        for cohort, _, gene in reader:
            gene_names[cohort].append(gene)

    scaling = json.loads((root / "scaling.json").read_text())
    if scaling.get("format") != FEATURES_FORMAT:
        raise ValueError(f"unsupported feature format {scaling.get('format')!r}")

    cohorts = []
    for i, name in enumerate(names):
        listed = gene_names[name]
        padded = tuple(listed) + ("",) * (TOP_GENES - len(listed))
        counts = raw_gene[i].reshape(TOP_GENES, N_SUBSTITUTIONS).astype(np.int64)
        rates = raw_rates[i].reshape(-1, N_SUBSTITUTIONS)
        cohorts.append(
            Cohort(
                name=name,
                gene=GeneView(gene_names=padded, counts=counts, empty=counts.sum() == 0),
                chrom=ChromosomeView(rates=rates),
            )
        )

    dataset = CohortDataset(
        cohorts=cohorts,
        scaled_gene=scaled_gene,
        scaled_chrom=scaled_chrom,
        scaling_params={
            "gene": {
                "mean": np.array(scaling["gene"]["mean"]),
                "std": np.array(scaling["gene"]["std"]),
            },
            "chrom": {
                "mean": np.array(scaling["chrom"]["mean"]),
                "std": np.array(scaling["chrom"]["std"]),
            },
        },
        rejects=dict(scaling.get("rejects", {})),
    )

    labels = None
    labels_path = root / "labels.csv"
    if labels_path.exists():
        with open(labels_path, newline="", encoding="utf-8") as handle:
            reader = csv.reader(handle)
            next(reader)
            by_name = {row[0]: int(row[1]) for row in reader}
        labels = np.array([by_name[name] for name in names], dtype=np.int64)
    return dataset, labels


# ---------------------------------------------------------------------------
# embeddings and models


def write_embeddings(path: Path, embedding: EmbeddingMatrix) -> None:
    dim = embedding.dim
    write_csv(
        path,
        ["cohort"] + [f"e{i:03d}" for i in range(dim)],
        ([name] + list(row) for name, row in zip(embedding.names, embedding.vectors)),
    )


def load_embeddings(path: Path) -> EmbeddingMatrix:
    names, vectors = _read_csv_matrix(Path(path))
    return EmbeddingMatrix(names=names, vectors=vectors, fusion="loaded")


def _arrays_to_json(arrays: dict[str, np.ndarray]) -> dict:
    return {
        name: {"shape": list(arr.shape), "data": arr.reshape(-1).tolist()}
        for name, arr in arrays.items()
    }


def _arrays_from_json(data: dict) -> dict[str, np.ndarray]:
    return {
        name: np.array(entry["data"], dtype=np.float64).reshape(entry["shape"])
        for name, entry in data.items()
    }


def save_model(path: Path, result: TrainResult) -> None:
    def encoder_payload(encoder: TabNetEncoder) -> dict:
        return {
            "config": encoder.config.to_dict(),
            "params": _arrays_to_json(encoder.params),
            "buffers": _arrays_to_json(encoder.buffers),
        }

    write_json(
        Path(path),
        {
            "format": MODEL_FORMAT,
            "train_config": result.config.to_dict() if result.config else None,
            "gene": encoder_payload(result.encoder_gene),
            "chrom": encoder_payload(result.encoder_chrom),
        },
    )


def load_model(path: Path) -> TrainResult:
    payload = json.loads(Path(path).read_text())
    if payload.get("format") != MODEL_FORMAT:
        raise ValueError(f"unsupported model format {payload.get('format')!r}")

    def encoder_from(payload_part: dict) -> TabNetEncoder:
        config = TabNetConfig(**payload_part["config"])
        encoder = TabNetEncoder(config, np.random.default_rng(0))
        encoder.params = _arrays_from_json(payload_part["params"])
        buffers = _arrays_from_json(payload_part["buffers"])
        encoder.buffers = {k: v.reshape(-1) for k, v in buffers.items()}
        return encoder

    train_config = TrainConfig(**payload["train_config"]) if payload.get("train_config") else None
    return TrainResult(
        encoder_gene=encoder_from(payload["gene"]),
        encoder_chrom=encoder_from(payload["chrom"]),
        loss_history=[],
        config=train_config,
    )
