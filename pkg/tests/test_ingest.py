"""Ingestion tests: parser filters, view construction, scaling, synthesis.

Expected vectors for the committed fixture are hand-counted: the mini TSV
holds 6 usable substitution rows (TP53: 3x C>T + 1x G>A on chr17, KRAS:
2x G>T on chr12), two alternative-transcript rows, and one indel row.
"""

import io
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from contab.ingest import (
    CHROMOSOME_INDEX,
    GRCH38_LENGTHS,
    SUBSTITUTION_INDEX,
    SUBSTITUTIONS,
    ColumnSchema,
    MutationRecord,
    build_chromosome_view,
    build_cohorts,
    build_gene_view,
    chrom_feature_names,
    gene_feature_names,
    normalize_chromosome,
    parse_mutations,
    scale_features,
)
from contab.synthetic import generate_synthetic_cohorts

FIXTURES = Path(__file__).parent / "fixtures"
MINI_SCHEMA = ColumnSchema(ref="GENOMIC_WT_ALLELE", alt="GENOMIC_MUT_ALLELE")


def idx(gene_rank: int, substitution: str) -> int:
    return gene_rank * 12 + SUBSTITUTION_INDEX[substitution]


class TestSubstitutionOrdering:
    def test_twelve_types_alphabetical(self):
        assert len(SUBSTITUTIONS) == 12
        assert list(SUBSTITUTIONS) == sorted(SUBSTITUTIONS)
        assert SUBSTITUTIONS[0] == "A>C" and SUBSTITUTIONS[-1] == "T>G"

    def test_chromosome_table(self):
        assert len(GRCH38_LENGTHS) == 24
        assert all(length > 10**7 for length in GRCH38_LENGTHS.values())
        assert GRCH38_LENGTHS["1"] == 248956422

    def test_chromosome_normalization(self):
        assert normalize_chromosome("chr17") == "17"
        assert normalize_chromosome("x") == "X"
        assert normalize_chromosome("MT") is None
        assert normalize_chromosome("GL000220.1") is None


class TestParseMutations:
    def test_mini_fixture_counts(self):
        result = parse_mutations(FIXTURES / "cosmic_mini.tsv", MINI_SCHEMA)
        assert result.n_accepted == 6
        assert result.rejects == {"alternative transcript": 2, "not a substitution": 1}
        assert result.n_accepted + sum(result.rejects.values()) == result.n_rows

    def test_enst_suffix_excluded(self):
        tsv = "GENE_SYMBOL\tCHROMOSOME\tREF\tALT\tPRIMARY_SITE\nTP53_ENST00000269305\t17\tC\tT\tlung\n"
        result = parse_mutations(io.StringIO(tsv), ColumnSchema(ref="REF", alt="ALT"))
        assert result.n_accepted == 0
        assert result.rejects == {"alternative transcript": 1}

    def test_ref_equals_alt_excluded(self):
        tsv = "GENE_SYMBOL\tCHROMOSOME\tREF\tALT\tPRIMARY_SITE\nTP53\t17\tC\tC\tlung\n"
        result = parse_mutations(io.StringIO(tsv), ColumnSchema(ref="REF", alt="ALT"))
        assert result.rejects == {"not a substitution": 1}

    def test_bad_chromosome_excluded(self):
        tsv = "GENE_SYMBOL\tCHROMOSOME\tREF\tALT\tPRIMARY_SITE\nTP53\tMT\tC\tT\tlung\n"
        result = parse_mutations(io.StringIO(tsv), ColumnSchema(ref="REF", alt="ALT"))
        assert result.rejects == {"bad chromosome": 1}

    def test_missing_column_is_fatal(self):
        tsv = "GENE\tCHROMOSOME\tREF\tALT\tPRIMARY_SITE\nTP53\t17\tC\tT\tlung\n"
        with pytest.raises(ValueError, match="GENE_SYMBOL"):
            parse_mutations(io.StringIO(tsv), ColumnSchema(ref="REF", alt="ALT"))

    def test_cds_column_parsing(self):
        result = parse_mutations(FIXTURES / "cosmic_three_cohorts.tsv")
        assert result.n_accepted == 10
        assert not result.rejects
        first = result.records[0]
        assert first.substitution == "C>T" and first.cohort == "lung"

    def test_malformed_rows_tallied(self):
        tsv = "GENE_SYMBOL\tCHROMOSOME\tREF\tALT\tPRIMARY_SITE\nTP53\t17\tC\n"
        result = parse_mutations(io.StringIO(tsv), ColumnSchema(ref="REF", alt="ALT"))
        assert result.rejects == {"malformed row": 1}
        assert result.n_rows == 1

    def test_bom_and_crlf_tolerated(self):
        tsv = "﻿GENE_SYMBOL\tCHROMOSOME\tREF\tALT\tPRIMARY_SITE\r\nTP53\t17\tC\tT\tlung\r\n"
        result = parse_mutations(io.BytesIO(tsv.encode("utf-8")), ColumnSchema(ref="REF", alt="ALT"))
        assert result.n_accepted == 1
        assert result.records[0].substitution == "C>T"

    def test_parse_is_deterministic(self):
        data = (FIXTURES / "cosmic_mini.tsv").read_bytes()
        a = parse_mutations(io.BytesIO(data), MINI_SCHEMA)
        b = parse_mutations(io.BytesIO(data), MINI_SCHEMA)
        assert a.records == b.records and a.rejects == b.rejects


def _records(spec: list[tuple[str, str, str]], cohort: str = "lung") -> list[MutationRecord]:
    return [
        MutationRecord(gene=g, chromosome=c, substitution=s, cohort=cohort)
        for g, c, s in spec
    ]


class TestGeneView:
    def test_hand_counted_fixture(self):
        records = _records(
            [("TP53", "17", "C>T")] * 3
            + [("TP53", "17", "G>A")]
            + [("KRAS", "12", "G>T")] * 2
        )
        view = build_gene_view(records)
        assert view.gene_names[:2] == ("TP53", "KRAS")
        assert view.gene_names[2:] == ("",) * 23
        # <= 25 distinct genes: every accepted record is counted
        assert view.total_count() == len(records)
        flat = view.flat
        expected = np.zeros(300)
        expected[idx(0, "C>T")] = 3
        expected[idx(0, "G>A")] = 1
        expected[idx(1, "G>T")] = 2
        np.testing.assert_array_equal(flat, expected)

    def test_empty_input_zero_view_with_flag(self):
        view = build_gene_view([])
        assert view.empty
        assert view.counts.sum() == 0
        assert view.flat.shape == (300,)

    def test_lexicographic_tie_break(self):
        view = build_gene_view(
            _records([("BBB", "1", "A>G"), ("AAA", "1", "A>G")])
        )
        assert view.gene_names[:2] == ("AAA", "BBB")

    def test_top25_truncation_keeps_heaviest(self):
        records = []
        for i in range(30):
            records += _records([(f"GENE{i:02d}", "1", "A>C")] * (i + 1))
        view = build_gene_view(records)
        assert "GENE29" in view.gene_names and "GENE04" not in view.gene_names
        # sum of retained counts <= total records, equality only when <=25 genes
        assert view.total_count() < len(records)

    def test_mixed_cohorts_rejected(self):
        with pytest.raises(ValueError):
            build_gene_view(
                _records([("A", "1", "A>C")]) + _records([("B", "1", "A>C")], cohort="skin")
            )


class TestChromosomeView:
    def test_rate_division(self):
        view = build_chromosome_view(_records([("X", "1", "C>T"), ("Y", "1", "C>T")]))
        expected = 2.0 / 248956422.0
        assert view.rates[CHROMOSOME_INDEX["1"], SUBSTITUTION_INDEX["C>T"]] == pytest.approx(
            expected, rel=1e-15
        )
        assert view.rates.sum() == pytest.approx(expected, rel=1e-15)

    def test_empty_is_zero(self):
        view = build_chromosome_view([])
        assert view.flat.shape == (288,)
        assert (view.rates == 0).all()

    def test_every_substitution_on_chr_y(self):
        records = _records([("G", "Y", s) for s in SUBSTITUTIONS])
        view = build_chromosome_view(records)
        y = CHROMOSOME_INDEX["Y"]
        np.testing.assert_allclose(view.rates[y], 1.0 / GRCH38_LENGTHS["Y"], rtol=1e-15)
        others = np.delete(view.rates, y, axis=0)
        assert (others == 0).all()

    @settings(deadline=None, max_examples=25, derandomize=True)
    @given(st.permutations(list(range(8))))
    def test_permutation_invariance(self, order):
        base = _records(
            [("A", "1", "C>T"), ("B", "2", "G>A"), ("C", "X", "T>G"), ("D", "9", "A>C")] * 2
        )
        view_a = build_chromosome_view(base)
        view_b = build_chromosome_view([base[i] for i in order])
        np.testing.assert_array_equal(view_a.rates, view_b.rates)


class TestScaleFeatures:
    def test_zero_variance_maps_to_zero(self):
        result = parse_mutations(FIXTURES / "cosmic_three_cohorts.tsv")
        dataset = scale_features(build_cohorts(result.records), result.rejects)
        # most gene-view columns are all-zero across cohorts
        zero_cols = (dataset.scaled_gene == 0).all(axis=0)
        assert zero_cols.any()
        assert np.isfinite(dataset.scaled_gene).all()
        assert np.isfinite(dataset.scaled_chrom).all()

    def test_two_point_column_z_scores_to_unit(self):
        # log1p of [0, e-1] is [0, 1]; population z-score gives [-1, 1]
        cohorts = build_cohorts(
            _records([("TP53", "17", "C>T")], cohort="a")
            + _records([("KRAS", "12", "G>T")], cohort="b")
        )
        dataset = scale_features(cohorts)
        col = dataset.scaled_gene[:, idx(0, "C>T")]
        np.testing.assert_allclose(sorted(col), [-1.0, 1.0], atol=1e-12)

    def test_column_means_near_zero(self):
        dataset, _ = generate_synthetic_cohorts(8, seed=5, separation=1.0)
        live = dataset.scaled_gene.std(axis=0) > 0
        means = dataset.scaled_gene[:, live].mean(axis=0)
        assert (np.abs(means) < 1e-9).all()

    def test_single_cohort_rejected(self):
        cohorts = build_cohorts(_records([("TP53", "17", "C>T")]))
        with pytest.raises(ValueError, match="one sample"):
            scale_features(cohorts)

    def test_duplicate_names_rejected(self):
        cohorts = build_cohorts(_records([("TP53", "17", "C>T")]))
        with pytest.raises(ValueError, match="unique"):
            scale_features(cohorts + cohorts)

    def test_feature_name_widths(self):
        assert len(gene_feature_names()) == 300
        assert len(chrom_feature_names()) == 288
        assert chrom_feature_names()[0] == "chr1|A>C"


class TestSyntheticCohorts:
    def test_deterministic_given_seed(self):
        a, labels_a = generate_synthetic_cohorts(40, seed=7, separation=3.0)
        b, labels_b = generate_synthetic_cohorts(40, seed=7, separation=3.0)
        np.testing.assert_array_equal(labels_a, labels_b)
        np.testing.assert_array_equal(a.scaled_gene, b.scaled_gene)
        np.testing.assert_array_equal(a.scaled_chrom, b.scaled_chrom)
        for ca, cb in zip(a.cohorts, b.cohorts):
            np.testing.assert_array_equal(ca.gene.counts, cb.gene.counts)
            np.testing.assert_array_equal(ca.chrom.rates, cb.chrom.rates)

    def test_cluster_a_has_heavier_gene_load(self):
        dataset, labels = generate_synthetic_cohorts(40, seed=7, separation=3.0)
        totals = np.array([c.gene.total_count() for c in dataset.cohorts])
        assert totals[labels == 0].mean() > totals[labels == 1].mean()

    def test_separation_zero_shares_spectrum(self):
        dataset, labels = generate_synthetic_cohorts(40, seed=11, separation=0.0)
        spectra = np.stack([c.gene.counts.sum(axis=0) for c in dataset.cohorts]).astype(float)
        mean_a = spectra[labels == 0].mean(axis=0)
        mean_b = spectra[labels == 1].mean(axis=0)
        # same generating spectrum: per-type means differ only by Poisson noise
        diff = np.abs(mean_a - mean_b) / np.maximum(mean_a + mean_b, 1.0)
        assert diff.max() < 0.25

    def test_validation(self):
        with pytest.raises(ValueError):
            generate_synthetic_cohorts(5, seed=1, separation=1.0)
        with pytest.raises(ValueError):
            generate_synthetic_cohorts(2, seed=1, separation=1.0)

    def test_elevated_substitutions_by_cluster(self):
        dataset, labels = generate_synthetic_cohorts(40, seed=7, separation=3.0)
        spectra = np.stack([c.gene.counts.sum(axis=0) for c in dataset.cohorts]).astype(float)
        ct = SUBSTITUTION_INDEX["C>T"]
        gt = SUBSTITUTION_INDEX["G>T"]
        rel_a = spectra[labels == 0] / spectra[labels == 0].sum(axis=1, keepdims=True)
        rel_b = spectra[labels == 1] / spectra[labels == 1].sum(axis=1, keepdims=True)
        assert rel_a[:, ct].mean() > rel_b[:, ct].mean()
        assert rel_b[:, gt].mean() > rel_a[:, gt].mean()
