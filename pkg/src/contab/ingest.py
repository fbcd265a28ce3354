"""COSMIC-style mutation ingestion and per-cohort signature views.

A cohort (cancer type) is summarized by two fixed-width vectors: a 300-dim
gene view (top 25 genes x 12 single-nucleotide substitutions) and a 288-dim
chromosome view (24 chromosomes x 12 substitutions, count per base pair).
"""

from __future__ import annotations

import csv
import io
import json
import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Mapping, Sequence

import numpy as np

# The 12 single-nucleotide substitutions, alphabetical by ref then alt.
# This ordering fixes the layout of every flattened feature vector.
SUBSTITUTIONS: tuple[str, ...] = (
    "A>C", "A>G", "A>T",
    "C>A", "C>G", "C>T",
    "G>A", "G>C", "G>T",
    "T>A", "T>C", "T>G",
)
SUBSTITUTION_INDEX: dict[str, int] = {s: i for i, s in enumerate(SUBSTITUTIONS)}
N_SUBSTITUTIONS = len(SUBSTITUTIONS)

# Canonical chromosomes 1..22, X, Y with GRCh38 primary-assembly lengths (bp).
# Overridable per run via a JSON {name: length} table.
CHROMOSOMES: tuple[str, ...] = tuple(str(i) for i in range(1, 23)) + ("X", "Y")
CHROMOSOME_INDEX: dict[str, int] = {c: i for i, c in enumerate(CHROMOSOMES)}
N_CHROMOSOMES = len(CHROMOSOMES)

GRCH38_LENGTHS: dict[str, int] = {
    "1": 248956422, "2": 242193529, "3": 198295559, "4": 190214555,
    "5": 181538259, "6": 170805979, "7": 159345973, "8": 145138636,
    "9": 138394717, "10": 133797422, "11": 135086622, "12": 133275309,
    "13": 114364328, "14": 107043718, "15": 101991189, "16": 90338345,
    "17": 83257441, "18": 80373285, "19": 58617616, "20": 64444167,
    "21": 46709983, "22": 50818468, "X": 156040895, "Y": 57227415,
}

TOP_GENES = 25
GENE_VIEW_DIM = TOP_GENES * N_SUBSTITUTIONS        # 300
CHROM_VIEW_DIM = N_CHROMOSOMES * N_SUBSTITUTIONS   # 288

_ENST_SUFFIX = re.compile(r"_ENST\d*$")
_CDS_SUBSTITUTION = re.compile(r"([ACGT])>([ACGT])$")
_BASES = frozenset("ACGT")

STD_EPS = 1e-8


def load_chromosome_lengths(path: str | Path) -> dict[str, int]:
    """Read an override length table; must cover all 24 canonical chromosomes."""
    table = json.loads(Path(path).read_text())
    lengths = {}
    for name in CHROMOSOMES:
        if name not in table:
            raise ValueError(f"chromosome length table is missing {name!r}")
        length = int(table[name])
        if length <= 0:
            raise ValueError(f"chromosome {name!r} has non-positive length")
        lengths[name] = length
    return lengths


def normalize_chromosome(raw: str) -> str | None:
    """Canonical chromosome name, or None for MT/alt contigs/garbage."""
    name = raw.strip()
    if name.lower().startswith("chr"):
        name = name[3:]
    name = name.upper()
    return name if name in CHROMOSOME_INDEX else None


@dataclass(frozen=True)
class MutationRecord:
    gene: str
    chromosome: str        # canonical, e.g. "17"
    substitution: str      # e.g. "C>T"
    cohort: str


@dataclass(frozen=True)
class ColumnSchema:
    """Maps logical fields to TSV column names.

    ref/alt take precedence when both resolve; otherwise the substitution is
    parsed from the trailing ``R>A`` of the CDS annotation column.
    """

    gene: str = "GENE_SYMBOL"
    chromosome: str = "CHROMOSOME"
    cohort: str = "PRIMARY_SITE"
    ref: str | None = None
    alt: str | None = None
    cds: str | None = "MUTATION_CDS"

    @classmethod
    def from_json(cls, path: str | Path) -> "ColumnSchema":
        data = json.loads(Path(path).read_text())
        allowed = {"gene", "chromosome", "cohort", "ref", "alt", "cds"}
        unknown = set(data) - allowed
        if unknown:
            raise ValueError(f"unknown schema keys: {sorted(unknown)}")
        return cls(**data)

    def resolve(self, header: Sequence[str]) -> dict[str, int]:
        """Column indices per logical field; raises naming any missing column."""
        positions = {name: i for i, name in enumerate(header)}
        for logical in ("gene", "chromosome", "cohort"):
            column = getattr(self, logical)
            if column not in positions:
                raise ValueError(f"input header is missing required column {column!r} ({logical})")
        resolved = {
            "gene": positions[self.gene],
            "chromosome": positions[self.chromosome],
            "cohort": positions[self.cohort],
        }
        if self.ref is not None and self.alt is not None:
            for logical, column in (("ref", self.ref), ("alt", self.alt)):
                if column not in positions:
                    raise ValueError(f"input header is missing required column {column!r} ({logical})")
            resolved["ref"] = positions[self.ref]
            resolved["alt"] = positions[self.alt]
        elif self.cds is not None:
            if self.cds not in positions:
                raise ValueError(f"input header is missing required column {self.cds!r} (cds)")
            resolved["cds"] = positions[self.cds]
        else:
            raise ValueError("schema must provide either ref+alt columns or a cds column")
        return resolved


@dataclass
class ParseResult:
    records: list[MutationRecord]
    rejects: Counter
    n_rows: int

    @property
    def n_accepted(self) -> int:
        return len(self.records)


def parse_mutations(
    source: str | Path | IO[bytes] | IO[str],
    schema: ColumnSchema | None = None,
) -> ParseResult:
    """Parse a header-ed TSV into single-nucleotide substitution records.

    Rows that are not usable substitutions are tallied under a reason, never
    silently dropped: malformed row, alternative transcript, not a
    substitution, bad chromosome.
    """
    schema = schema or ColumnSchema()
    if isinstance(source, (str, Path)):
        stream: IO[str] = open(source, "r", encoding="utf-8-sig", newline="")
        owns = True
    elif isinstance(source, io.TextIOBase):
        stream = source
        owns = False
    else:
        stream = io.TextIOWrapper(source, encoding="utf-8-sig", newline="")
        owns = False

    try:
        reader = csv.reader(stream, delimiter="\t")
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError("input is empty: no header row") from None
        columns = schema.resolve(header)
        width = len(header)

        records: list[MutationRecord] = []
        rejects: Counter = Counter()
        n_rows = 0
        for row in reader:
            if not row:
                continue
            n_rows += 1
            if len(row) != width:
                rejects["malformed row"] += 1
                continue
            gene = row[columns["gene"]].strip()
            if not gene:
                rejects["malformed row"] += 1
                continue
            if _ENST_SUFFIX.search(gene):
                rejects["alternative transcript"] += 1
                continue
            if "ref" in columns:
                ref = row[columns["ref"]].strip().upper()
                alt = row[columns["alt"]].strip().upper()
            else:
                match = _CDS_SUBSTITUTION.search(row[columns["cds"]].strip())
                if match is None:
                    rejects["not a substitution"] += 1
                    continue
                ref, alt = match.group(1), match.group(2)
            if ref not in _BASES or alt not in _BASES or ref == alt:
                rejects["not a substitution"] += 1
                continue
            chromosome = normalize_chromosome(row[columns["chromosome"]])
            if chromosome is None:
                rejects["bad chromosome"] += 1
                continue
            records.append(
                MutationRecord(
                    gene=gene,
                    chromosome=chromosome,
                    substitution=f"{ref}>{alt}",
                    cohort=row[columns["cohort"]].strip(),
                )
            )
        return ParseResult(records=records, rejects=rejects, n_rows=n_rows)
    finally:
        if owns:
            stream.close()


@dataclass
class GeneView:
    """Top-25 gene substitution counts; rows padded with sentinel "" genes."""

    gene_names: tuple[str, ...]            # length 25
    counts: np.ndarray                     # 25 x 12 int64
    empty: bool = False                    # set when built from no records

    @property
    def flat(self) -> np.ndarray:
        return self.counts.reshape(GENE_VIEW_DIM).astype(np.float64)

    def total_count(self) -> int:
        return int(self.counts.sum())


@dataclass
class ChromosomeView:
    """Per-chromosome substitution rates (count / chromosome length in bp)."""

    rates: np.ndarray                      # 24 x 12 float64

    @property
    def flat(self) -> np.ndarray:
        return self.rates.reshape(CHROM_VIEW_DIM).copy()


@dataclass(frozen=True)
class Cohort:
    name: str
    gene: GeneView
    chrom: ChromosomeView


def _gene_view_from_tallies(tallies: Mapping[str, np.ndarray], empty: bool = False) -> GeneView:
    # order by total count descending, ties broken lexicographically
    ranked = sorted(tallies.items(), key=lambda kv: (-int(kv[1].sum()), kv[0]))[:TOP_GENES]
    names = [name for name, _ in ranked]
    counts = np.zeros((TOP_GENES, N_SUBSTITUTIONS), dtype=np.int64)
    for i, (_, row) in enumerate(ranked):
        counts[i] = row
    names += [""] * (TOP_GENES - len(names))
    return GeneView(gene_names=tuple(names), counts=counts, empty=empty)


def build_gene_view(records: Sequence[MutationRecord]) -> GeneView:
    """Gene-view counts for one cohort's records."""
    _require_single_cohort(records)
    if not records:
        return _gene_view_from_tallies({}, empty=True)
    tallies: dict[str, np.ndarray] = defaultdict(
        lambda: np.zeros(N_SUBSTITUTIONS, dtype=np.int64)
    )
    for rec in records:
        tallies[rec.gene][SUBSTITUTION_INDEX[rec.substitution]] += 1
    return _gene_view_from_tallies(tallies)


def _chrom_view_from_counts(counts: np.ndarray, lengths: Mapping[str, int]) -> ChromosomeView:
    length_col = np.array([lengths[c] for c in CHROMOSOMES], dtype=np.float64)
    return ChromosomeView(rates=counts.astype(np.float64) / length_col[:, None])


def build_chromosome_view(
    records: Sequence[MutationRecord],
    lengths: Mapping[str, int] = GRCH38_LENGTHS,
) -> ChromosomeView:
    """Chromosome-view rates for one cohort's records."""
    _require_single_cohort(records)
    counts = np.zeros((N_CHROMOSOMES, N_SUBSTITUTIONS), dtype=np.int64)
    for rec in records:
        counts[CHROMOSOME_INDEX[rec.chromosome], SUBSTITUTION_INDEX[rec.substitution]] += 1
    return _chrom_view_from_counts(counts, lengths)


def _require_single_cohort(records: Sequence[MutationRecord]) -> None:
    cohorts = {rec.cohort for rec in records}
    if len(cohorts) > 1:
        raise ValueError(f"records span multiple cohorts: {sorted(cohorts)}")


def build_cohorts(
    records: Iterable[MutationRecord],
    lengths: Mapping[str, int] = GRCH38_LENGTHS,
) -> list[Cohort]:
    """Group records by cohort (first-appearance order) and build both views."""
    grouped: dict[str, list[MutationRecord]] = {}
    for rec in records:
        grouped.setdefault(rec.cohort, []).append(rec)
    return [
        Cohort(
            name=name,
            gene=build_gene_view(recs),
            chrom=build_chromosome_view(recs, lengths),
        )
        for name, recs in grouped.items()
    ]


@dataclass
class CohortDataset:
    """All cohorts plus the standardized feature matrices used for training."""

    cohorts: list[Cohort]
    scaled_gene: np.ndarray                # n x 300
    scaled_chrom: np.ndarray               # n x 288
    scaling_params: dict = field(default_factory=dict)
    rejects: dict = field(default_factory=dict)

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.cohorts]

    @property
    def n(self) -> int:
        return len(self.cohorts)


def _standardize(x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-feature z-score with population std; constant features map to 0."""
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    live = std > STD_EPS
    scaled = np.zeros_like(x)
    scaled[:, live] = (x[:, live] - mean[live]) / std[live]
    return scaled, mean, std


def gene_log_counts(cohorts: Sequence[Cohort]) -> np.ndarray:
    return np.log1p(np.stack([c.gene.flat for c in cohorts]))


def chrom_log_rates(cohorts: Sequence[Cohort]) -> np.ndarray:
    # rates are O(1e-8); bring them to O(1) before the log
    return np.log1p(np.stack([c.chrom.flat for c in cohorts]) * 1e6)


def scale_features(
    cohorts: Sequence[Cohort],
    rejects: Mapping[str, int] | None = None,
) -> CohortDataset:
    """log1p + per-feature z-score of both views across cohorts."""
    names = [c.name for c in cohorts]
    if len(set(names)) != len(names):
        raise ValueError("cohort names must be unique")
    if len(cohorts) < 2:
        raise ValueError("cannot standardize one sample")
    scaled_gene, gene_mean, gene_std = _standardize(gene_log_counts(cohorts))
    scaled_chrom, chrom_mean, chrom_std = _standardize(chrom_log_rates(cohorts))
    return CohortDataset(
        cohorts=list(cohorts),
        scaled_gene=scaled_gene,
        scaled_chrom=scaled_chrom,
        scaling_params={
            "gene": {"mean": gene_mean, "std": gene_std},
            "chrom": {"mean": chrom_mean, "std": chrom_std},
        },
        rejects=dict(rejects or {}),
    )


def gene_feature_names() -> list[str]:
    """Positional gene-view column names; gene identity is per cohort."""
    return [f"g{i + 1:02d}|{s}" for i in range(TOP_GENES) for s in SUBSTITUTIONS]


def chrom_feature_names() -> list[str]:
    return [f"chr{c}|{s}" for c in CHROMOSOMES for s in SUBSTITUTIONS]
