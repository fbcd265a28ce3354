"""Baseline tests: NMF recovery/monotonicity, training-run assertions for the
AE/SimCLR/DeepCluster trainers, and Ward linkage against planted blobs."""

import numpy as np
import pytest

from contab.baselines import (
    BaselineConfig,
    ae_train,
    concat_features,
    deepcluster_train,
    hierarchical_labels,
    nmf_fit,
    nonneg_features,
    simclr_mlp_train,
    ward_linkage,
)
from contab.evaluate import adjusted_rand_index
from contab.synthetic import generate_synthetic_cohorts


@pytest.fixture(scope="module")
def planted():
    return generate_synthetic_cohorts(12, seed=21, separation=3.0)


class TestConcatFeatures:
    def test_width_and_prefix(self, planted):
        dataset, _ = planted
        x = concat_features(dataset)
        assert x.shape == (12, 588)
        np.testing.assert_array_equal(x[:, :300], dataset.scaled_gene)
        np.testing.assert_array_equal(x[:, 300:], dataset.scaled_chrom)

    def test_row_permutation_equivariance(self, planted):
        dataset, _ = planted
        x = concat_features(dataset)
        np.testing.assert_array_equal(x[::-1], np.vstack([x[i] for i in range(11, -1, -1)]))

    def test_nonneg_features(self, planted):
        dataset, _ = planted
        x = nonneg_features(dataset)
        assert x.shape == (12, 588)
        assert (x >= 0).all()


class TestNmf:
    def test_zero_matrix(self):
        w, h, history = nmf_fit(np.zeros((4, 5)), rank=2, iters=10, seed=0)
        assert history[-1] == pytest.approx(0.0, abs=1e-20)

    def test_rank_one_recovery(self):
        rng = np.random.default_rng(5)
        w_true = rng.uniform(0.5, 2.0, size=(8, 1))
        h_true = rng.uniform(0.5, 2.0, size=(1, 6))
        x = w_true @ h_true
        w, h, history = nmf_fit(x, rank=1, iters=500, seed=1)
        rel_err = np.linalg.norm(x - w @ h) / np.linalg.norm(x)
        assert rel_err < 1e-3

    def test_objective_non_increasing(self):
        rng = np.random.default_rng(7)
        for seed in range(10):
            x = rng.uniform(0.0, 1.0, size=(25, 18))
            _, _, history = nmf_fit(x, rank=3, iters=120, seed=seed)
            diffs = np.diff(history)
            assert (diffs <= 1e-10).all()

    def test_negative_input_rejected(self):
        with pytest.raises(ValueError):
            nmf_fit(np.array([[1.0, -0.1]]), rank=1)

    def test_rank_too_large_rejected(self):
        with pytest.raises(ValueError):
            nmf_fit(np.ones((3, 4)), rank=4)

    def test_seeded_reproducibility(self):
        x = np.random.default_rng(9).uniform(size=(10, 8))
        a = nmf_fit(x, rank=2, iters=50, seed=3)
        b = nmf_fit(x, rank=2, iters=50, seed=3)
        np.testing.assert_array_equal(a[0], b[0])
        np.testing.assert_array_equal(a[1], b[1])
        assert a[2] == b[2]


class TestAutoencoder:
    def test_loss_decreases_and_shapes(self, planted):
        dataset, _ = planted
        x = concat_features(dataset)
        cfg = BaselineConfig(method="ae", epochs=40, seed=1)
        emb, history = ae_train(x, cfg, dataset.names)
        assert history[-1] < history[0]
        assert emb.vectors.shape == (12, 64)
        assert emb.names == dataset.names

    def test_seeded_reproducibility(self, planted):
        dataset, _ = planted
        x = concat_features(dataset)
        cfg = BaselineConfig(method="ae", epochs=10, seed=4)
        a, _ = ae_train(x, cfg)
        b, _ = ae_train(x, cfg)
        np.testing.assert_array_equal(a.vectors, b.vectors)


class TestSimclr:
    def test_p_in_unit_interval_required(self, planted):
        with pytest.raises(ValueError):
            BaselineConfig(method="simclr", dropout_p=0.0)
        with pytest.raises(ValueError):
            BaselineConfig(method="simclr", dropout_p=1.0)

    def test_degenerate_augmentation_aligns_views(self, planted):
        # p -> 0: the two views coincide, every anchor's positive similarity is 1
        dataset, _ = planted
        x = concat_features(dataset)
        cfg = BaselineConfig(method="simclr", epochs=1, dropout_p=1e-9, seed=2, batch_size=12)
        from contab.baselines import _init_mlp, _simclr_encode
        from contab.seeding import substream
        from contab.tensor import Tensor

        init_rng = substream(cfg.seed, "simclr.init")
        params = _init_mlp(init_rng, [588, cfg.hidden, cfg.latent], "mlp")
        params.update(_init_mlp(init_rng, [cfg.latent, cfg.latent], "proj"))
        constants = {k: Tensor(v) for k, v in params.items()}
        keep = np.random.default_rng(0).random(x.shape) >= cfg.dropout_p
        _, proj_a = _simclr_encode(Tensor(x * keep), constants)
        _, proj_b = _simclr_encode(Tensor(x * keep), constants)
        a = proj_a.values / np.linalg.norm(proj_a.values, axis=1, keepdims=True)
        b = proj_b.values / np.linalg.norm(proj_b.values, axis=1, keepdims=True)
        np.testing.assert_allclose((a * b).sum(axis=1), 1.0, atol=1e-12)

    def test_loss_decreases(self, planted):
        dataset, _ = planted
        x = concat_features(dataset)
        cfg = BaselineConfig(method="simclr", epochs=25, seed=3, batch_size=6)
        emb, history = simclr_mlp_train(x, cfg, dataset.names)
        assert history[-1] < history[0]
        assert emb.vectors.shape == (12, 64)

    def test_seeded_reproducibility(self, planted):
        dataset, _ = planted
        x = concat_features(dataset)
        cfg = BaselineConfig(method="simclr", epochs=5, seed=6, batch_size=6)
        a, _ = simclr_mlp_train(x, cfg)
        b, _ = simclr_mlp_train(x, cfg)
        np.testing.assert_array_equal(a.vectors, b.vectors)


class TestDeepCluster:
    def test_pseudo_label_quality_improves(self, planted):
        dataset, labels = planted
        x = concat_features(dataset)
        cfg = BaselineConfig(method="deepcluster", epochs=15, seed=5, batch_size=6)
        emb, trace = deepcluster_train(x, cfg, dataset.names)
        first = adjusted_rand_index(trace.pseudo_labels[0], labels)
        last = adjusted_rand_index(trace.pseudo_labels[-1], labels)
        assert last >= first
        assert emb.vectors.shape == (12, 64)

    def test_head_reinitialized_each_epoch(self, planted):
        dataset, _ = planted
        x = concat_features(dataset)
        cfg = BaselineConfig(method="deepcluster", epochs=4, seed=7, batch_size=6)
        _, trace = deepcluster_train(x, cfg)
        checksums = trace.head_checksums
        assert len(set(checksums)) == len(checksums)

    def test_k_pseudo_larger_than_n_rejected(self, planted):
        dataset, _ = planted
        x = concat_features(dataset)
        cfg = BaselineConfig(method="deepcluster", epochs=1, k_pseudo=50)
        with pytest.raises(ValueError):
            deepcluster_train(x, cfg)

    def test_seeded_reproducibility(self, planted):
        dataset, _ = planted
        x = concat_features(dataset)
        cfg = BaselineConfig(method="deepcluster", epochs=3, seed=8, batch_size=6)
        a, _ = deepcluster_train(x, cfg)
        b, _ = deepcluster_train(x, cfg)
        np.testing.assert_array_equal(a.vectors, b.vectors)


class TestHierarchical:
    def test_planted_blobs_recovered(self):
        rng = np.random.default_rng(11)
        x = np.vstack([rng.normal(size=(6, 3)), rng.normal(size=(6, 3)) + 8.0])
        planted_labels = np.repeat([0, 1], 6)
        labels = hierarchical_labels(x, 2)
        assert adjusted_rand_index(labels, planted_labels) == 1.0

    def test_k_equals_n(self):
        x = np.arange(10, dtype=float).reshape(5, 2)
        labels = hierarchical_labels(x, 5)
        assert sorted(labels.tolist()) == [0, 1, 2, 3, 4]

    def test_merge_heights_non_decreasing(self):
        rng = np.random.default_rng(13)
        for _ in range(5):
            x = rng.normal(size=(12, 4))
            heights = [h for _, _, h, _ in ward_linkage(x)]
            assert all(b >= a - 1e-10 for a, b in zip(heights, heights[1:]))

    def test_linkage_matches_direct_greedy_oracle(self):
        # oracle: recompute each merge cost 2 * n_a n_b / (n_a + n_b) *
        # ||mean_a - mean_b||^2 directly from the cluster members, instead of
        # via the recurrence the implementation uses
        rng = np.random.default_rng(17)
        x = rng.normal(size=(10, 3))
        merges = ward_linkage(x)

        clusters = {i: [i] for i in range(10)}
        next_id = 10
        for a, b, height, merged_size in merges:
            costs = {}
            for ca in clusters:
                for cb in clusters:
                    if ca < cb:
                        ma = x[clusters[ca]].mean(axis=0)
                        mb = x[clusters[cb]].mean(axis=0)
                        na, nb = len(clusters[ca]), len(clusters[cb])
                        costs[(ca, cb)] = 2.0 * na * nb / (na + nb) * ((ma - mb) ** 2).sum()
            best_pair = min(costs, key=lambda p: (costs[p], p))
            assert best_pair == (min(a, b), max(a, b))
            assert height == pytest.approx(costs[best_pair], rel=1e-9)
            assert merged_size == len(clusters[a]) + len(clusters[b])
            clusters[next_id] = clusters.pop(a) + clusters.pop(b)
            next_id += 1

    def test_first_occurrence_canonicalization(self):
        x = np.array([[0.0], [10.0], [0.1], [10.1]])
        labels = hierarchical_labels(x, 2)
        # sample 0's cluster must be labeled 0, sample 1's labeled 1
        assert labels[0] == 0 and labels[1] == 1
        np.testing.assert_array_equal(labels, [0, 1, 0, 1])

    def test_invalid_k_rejected(self):
        x = np.zeros((4, 2))
        with pytest.raises(ValueError):
            hierarchical_labels(x, 0)
        with pytest.raises(ValueError):
            hierarchical_labels(x, 5)
