"""Command-line pipeline: featurize | synth | train | evaluate | compare.

Exit codes: 0 success, 2 input/validation error, 3 numerical failure.
CONTAB_SEED overrides any configured seed; SOURCE_DATE_EPOCH pins manifest
timestamps for byte-identical reruns.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from contab import artifacts
from contab.baselines import (
    BaselineConfig,
    ae_train,
    concat_features,
    deepcluster_train,
    hierarchical_labels,
    nmf_fit,
    nonneg_features,
    simclr_mlp_train,
)
from contab.evaluate import (
    adjusted_rand_index,
    calinski_harabasz,
    davies_bouldin,
    kmeans,
    silhouette,
)
from contab.ingest import (
    ColumnSchema,
    GRCH38_LENGTHS,
    build_cohorts,
    load_chromosome_lengths,
    parse_mutations,
    scale_features,
)
from contab.report import build_cluster_report, write_cluster_report, write_comparison
from contab.seeding import derive_seed
from contab.synthetic import generate_synthetic_cohorts
from contab.tensor import NonFiniteError
from contab.training import EmbeddingMatrix, TrainConfig, embed_cohorts, train

COMPARE_METHODS = ("ms-contab", "nmf", "hierarchical", "ae", "simclr", "deepcluster")


def resolve_seed(requested: int) -> int:
    env = os.environ.get("CONTAB_SEED")
    return int(env) if env else requested


def cmd_featurize(args) -> int:
    schema = ColumnSchema.from_json(args.schema) if args.schema else ColumnSchema()
    lengths = load_chromosome_lengths(args.lengths) if args.lengths else GRCH38_LENGTHS
    result = parse_mutations(args.input, schema)
    dataset = scale_features(build_cohorts(result.records, lengths), result.rejects)

    out = Path(args.out)
    artifacts.write_features(out, dataset)
    manifest = artifacts.make_manifest(
        command="featurize",
        seed=0,
        config={
            "schema": schema.__dict__,
            "lengths_override": str(args.lengths) if args.lengths else None,
        },
        input_digest=artifacts.sha256_paths([Path(args.input)]),
        cohort_count=dataset.n,
        rows_total=result.n_rows,
        rows_accepted=result.n_accepted,
        rejects=dict(result.rejects),
    )
    artifacts.write_json(out / "manifest.json", manifest)
    print(f"featurized {dataset.n} cohorts ({result.n_accepted} records, "
          f"{sum(result.rejects.values())} rejected) -> {out}")
    return 0


def cmd_synth(args) -> int:
    seed = resolve_seed(args.seed)
    dataset, labels = generate_synthetic_cohorts(args.n, seed, args.separation)
    out = Path(args.out)
    artifacts.write_features(out, dataset, labels)
    manifest = artifacts.make_manifest(
        command="synth",
        seed=seed,
        config={"n": args.n, "separation": args.separation},
        input_digest="",
        cohort_count=dataset.n,
    )
    artifacts.write_json(out / "manifest.json", manifest)
    print(f"generated {dataset.n} synthetic cohorts -> {out}")
    return 0


def _train_config(path: str | None, seed_override: int | None = None) -> TrainConfig:
    overrides = json.loads(Path(path).read_text()) if path else {}
    cfg = TrainConfig(**overrides)
    seed = resolve_seed(cfg.seed if seed_override is None else seed_override)
    if seed != cfg.seed:
        cfg = TrainConfig(**{**cfg.to_dict(), "seed": seed})
    return cfg


def cmd_train(args) -> int:
    dataset, _ = artifacts.load_features(Path(args.features))
    cfg = _train_config(args.config)
    result = train(dataset, cfg)
    embedding = embed_cohorts(
        result.encoder_gene, result.encoder_chrom, dataset,
        fusion=cfg.fusion, source=cfg.embed_source,
    )

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    artifacts.write_embeddings(out / "embeddings.csv", embedding)
    artifacts.write_csv(
        out / "loss.csv", ["epoch", "mean_loss"],
        ((i + 1, v) for i, v in enumerate(result.loss_history)),
    )
    artifacts.save_model(out / "model.json", result)
    manifest = artifacts.make_manifest(
        command="train",
        seed=cfg.seed,
        config=cfg.to_dict(),
        input_digest=artifacts.hash_tree(Path(args.features)),
        cohort_count=dataset.n,
        assumed_tabnet_defaults=result.encoder_gene.config.to_dict(),
    )
    artifacts.write_json(out / "manifest.json", manifest)
    print(f"trained {cfg.epochs} epochs; final mean loss {result.loss_history[-1]:.6f} -> {out}")
    return 0


def cmd_evaluate(args) -> int:
    embedding = artifacts.load_embeddings(Path(args.embeddings))
    if args.k > embedding.n:
        raise ValueError(f"k={args.k} exceeds the number of cohorts {embedding.n}")
    dataset = labels = None
    if args.features:
        dataset, labels = artifacts.load_features(Path(args.features))
    seed = resolve_seed(args.seed)
    evaluation = build_cluster_report(
        embedding, args.k, seed=seed, dataset=dataset, planted_labels=labels
    )
    out = Path(args.out)
    write_cluster_report(out, embedding, evaluation)
    manifest = artifacts.make_manifest(
        command="evaluate",
        seed=seed,
        config={"k": args.k, "features": bool(args.features)},
        input_digest=artifacts.sha256_paths([Path(args.embeddings)]),
        cohort_count=embedding.n,
    )
    artifacts.write_json(out / "manifest.json", manifest)
    print(f"evaluated k={args.k}: silhouette {evaluation['report']['silhouette']:.4f} -> {out}")
    return 0


def _run_method(method, dataset, cfg, root_seed, epochs):
    """One comparison method -> (embedding or None, labels or None)."""
    if method == "ms-contab":
        train_cfg = TrainConfig(**{**cfg.to_dict(), "epochs": epochs})
        result = train(dataset, train_cfg)
        return embed_cohorts(
            result.encoder_gene, result.encoder_chrom, dataset,
            fusion=train_cfg.fusion, source=train_cfg.embed_source,
        ), None
    seed = derive_seed(root_seed, f"method.{method}")
    if method == "nmf":
        w, _, _ = nmf_fit(nonneg_features(dataset), rank=2, iters=500, seed=seed)
        return EmbeddingMatrix(names=dataset.names, vectors=w, fusion="nmf"), None
    if method == "ae":
        emb, _ = ae_train(concat_features(dataset), BaselineConfig(method="ae", seed=seed, epochs=epochs), dataset.names)
        return emb, None
    if method == "simclr":
        emb, _ = simclr_mlp_train(concat_features(dataset), BaselineConfig(method="simclr", seed=seed, epochs=epochs), dataset.names)
        return emb, None
    if method == "deepcluster":
        emb, _ = deepcluster_train(concat_features(dataset), BaselineConfig(method="deepcluster", seed=seed, epochs=epochs), dataset.names)
        return emb, None
    if method == "hierarchical":
        return None, hierarchical_labels(concat_features(dataset), 2)
    raise ValueError(f"unknown method {method!r}; expected one of {COMPARE_METHODS}")


def cmd_compare(args) -> int:
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    for method in methods:
        if method not in COMPARE_METHODS:
            raise ValueError(f"unknown method {method!r}; expected one of {COMPARE_METHODS}")
    dataset, planted = artifacts.load_features(Path(args.features))
    cfg = _train_config(args.config, seed_override=args.seed)
    root_seed = cfg.seed
    epochs = cfg.epochs

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows: dict[str, dict] = {}
    for method in methods:
        embedding, labels = _run_method(method, dataset, cfg, root_seed, epochs)
        method_dir = out / method
        method_dir.mkdir(parents=True, exist_ok=True)
        if embedding is not None:
            space = embedding.vectors
            labels = kmeans(space, 2, seed=derive_seed(root_seed, f"kmeans.{method}")).labels
            artifacts.write_embeddings(method_dir / "embeddings.csv", embedding)
        else:
            space = concat_features(dataset)
            artifacts.write_csv(
                method_dir / "labels.csv", ["cohort", "label"], zip(dataset.names, labels)
            )
        row = {
            "silhouette": silhouette(space, labels),
            "davies_bouldin": davies_bouldin(space, labels),
            "calinski_harabasz": calinski_harabasz(space, labels),
        }
        if planted is not None:
            row["ari_vs_planted"] = adjusted_rand_index(labels, planted)
        rows[method] = row
        artifacts.write_json(
            method_dir / "manifest.json",
            artifacts.make_manifest(
                command=f"compare.{method}",
                seed=root_seed,
                config=cfg.to_dict(),
                input_digest=artifacts.hash_tree(Path(args.features)),
                cohort_count=dataset.n,
            ),
        )

    write_comparison(out, rows, methods)
    artifacts.write_json(
        out / "manifest.json",
        artifacts.make_manifest(
            command="compare",
            seed=root_seed,
            config={**cfg.to_dict(), "methods": methods},
            input_digest=artifacts.hash_tree(Path(args.features)),
            cohort_count=dataset.n,
        ),
    )
    for method in methods:
        row = rows[method]
        print(
            f"{method:12s} silhouette {row['silhouette']:+.4f}  "
            f"db {row['davies_bouldin']:.4f}  ch {row['calinski_harabasz']:.2f}"
        )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="contab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("featurize", help="parse a mutation TSV into feature matrices")
    p.add_argument("--input", required=True)
    p.add_argument("--schema", help="JSON column-name map")
    p.add_argument("--lengths", help="JSON chromosome-length override")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("synth", help="generate planted-cluster synthetic cohorts")
    p.add_argument("--n", type=int, default=40)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--separation", type=float, default=3.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train the dual encoders and export embeddings")
    p.add_argument("--features", required=True)
    p.add_argument("--config", help="JSON TrainConfig overrides")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="cluster embeddings and write the report")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--features", help="feature dir for spectra/top-gene analyses")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="run several methods and tabulate cluster quality")
    p.add_argument("--features", required=True)
    p.add_argument("--methods", default=",".join(COMPARE_METHODS))
    p.add_argument("--config", help="JSON TrainConfig overrides (epochs apply to baselines)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compare)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NonFiniteError as err:
        print(f"error: {err}", file=sys.stderr)
        return 3
    except (ValueError, TypeError, KeyError, OSError, json.JSONDecodeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
