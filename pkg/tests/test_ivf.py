import numpy as np
import pytest

from saqlib import ivf
from saqlib.baselines import assign_clusters
from saqlib.data import brute_force_topk, gen_synthetic


@pytest.fixture(scope="module")
def small_index():
    data = gen_synthetic("clustered", 3000, 32, seed=1, blobs=12).vectors
    return data, ivf.ivf_build(data, nlist=16, quantizer="caq", seed=2, bits=8)


class TestBuild:
    def test_every_vector_stored_once(self, small_index):
        data, index = small_index
        assert index.count == len(data)
        assert sorted(index.ids.tolist()) == list(range(len(data)))
        assert index.offsets[-1] == len(data)

    def test_assignment_is_nearest_centroid(self, small_index):
        data, index = small_index
        labels, _ = assign_clusters(data, index.centroids)
        for cluster in range(index.nlist):
            lo, hi = index.offsets[cluster], index.offsets[cluster + 1]
            np.testing.assert_array_equal(labels[index.ids[lo:hi]], cluster)

    def test_single_cluster_centroid_is_mean(self):
        data = gen_synthetic("gaussian", 500, 8, seed=3).vectors
        index = ivf.ivf_build(data, nlist=1, quantizer="caq", seed=0, bits=6)
        np.testing.assert_allclose(index.centroids[0], data.mean(axis=0), atol=1e-4)

    def test_nlist_bounds(self):
        data = gen_synthetic("gaussian", 50, 4, seed=4).vectors
        with pytest.raises(ValueError):
            ivf.ivf_build(data, nlist=51, quantizer="caq")

    def test_default_nlist(self):
        assert ivf.default_nlist(1_000_000) == 4096
        assert ivf.default_nlist(10_000) == 100
        assert ivf.default_nlist(30) == 16


class TestSearch:
    def test_exact_full_probe_has_perfect_recall(self):
        data = gen_synthetic("gaussian", 1200, 16, seed=5, n_queries=20)
        index = ivf.ivf_build(data.vectors, nlist=8, quantizer="exact", seed=0)
        gt_ids, _ = brute_force_topk(data.vectors, data.queries, k=10)
        for j, q in enumerate(data.queries):
            res = ivf.ivf_search(index, q, k=10, nprobe=index.nlist)
            assert set(res.ids.tolist()) == set(gt_ids[j].tolist())

    def test_self_query_returns_vector(self):
        data = gen_synthetic("gaussian", 10000, 24, seed=6).vectors
        index = ivf.ivf_build(data, nlist=24, quantizer="caq", seed=1, bits=8)
        rng = np.random.default_rng(0)
        for vid in rng.integers(0, len(data), size=10):
            res = ivf.ivf_search(index, data[vid], k=1, nprobe=index.nlist)
            assert res.ids[0] == vid

    def test_recall_nondecreasing_in_nprobe(self):
        data = gen_synthetic("clustered", 4000, 16, seed=7, blobs=16, n_queries=30)
        index = ivf.ivf_build(data.vectors, nlist=16, quantizer="caq", seed=2, bits=8)
        gt_ids, _ = brute_force_topk(data.vectors, data.queries, k=10)
        recalls = []
        for nprobe in (1, 2, 4, 8, 16):
            hits = 0
            for j, q in enumerate(data.queries):
                res = ivf.ivf_search(index, q, k=10, nprobe=nprobe)
                hits += len(set(res.ids.tolist()) & set(gt_ids[j].tolist()))
            recalls.append(hits / (10 * len(data.queries)))
        assert all(b >= a - 1e-9 for a, b in zip(recalls, recalls[1:]))

    def test_k_larger_than_n_returns_all(self):
        data = gen_synthetic("gaussian", 40, 8, seed=8).vectors
        index = ivf.ivf_build(data, nlist=4, quantizer="caq", seed=0, bits=8)
        res = ivf.ivf_search(index, data[0], k=100, nprobe=4)
        assert len(res.ids) == 40

    def test_results_match_full_candidate_sort(self):
        # with pruning off, search equals sorting all probed candidates by
        # (estimated distance, id)
        data = gen_synthetic("gaussian", 2000, 32, seed=9, n_queries=5)
        index = ivf.ivf_build(data.vectors, nlist=10, quantizer="saq", seed=3, bits=3)
        for q in data.queries:
            res = ivf.ivf_search(index, q, k=15, nprobe=4, prune=False)
            # replay: collect everything from the same probed clusters
            diff = index.centroids.astype(np.float64) - q.astype(np.float64)
            d2 = np.einsum("cd,cd->c", diff, diff)
            probe = np.lexsort((np.arange(index.nlist), d2))[:4]
            state = index.store.query_state(q)
            all_ids, all_d = [], []
            for c in probe:
                lo, hi = int(index.offsets[c]), int(index.offsets[c + 1])
                if lo == hi:
                    continue
                dists, _, _ = index.store.estimate_cluster(state, int(c), lo, hi, None)
                all_ids.append(index.ids[lo:hi])
                all_d.append(dists)
            all_ids = np.concatenate(all_ids)
            all_d = np.concatenate(all_d)
            order = np.lexsort((all_ids, all_d))[:15]
            np.testing.assert_array_equal(res.ids, all_ids[order])

    def test_rerank_recovers_probed_exact_recall(self):
        data = gen_synthetic("gaussian", 1500, 16, seed=10, n_queries=10)
        index = ivf.ivf_build(data.vectors, nlist=8, quantizer="caq", seed=4, bits=2)
        exact = ivf.ivf_build(data.vectors, nlist=8, quantizer="exact", seed=4)
        for q in data.queries:
            res = ivf.ivf_search(index, q, k=10, nprobe=8, rerank=index.count)
            ref = ivf.ivf_search(exact, q, k=10, nprobe=8)
            np.testing.assert_array_equal(res.ids, ref.ids)

    def test_pruning_reduces_bits(self):
        data = gen_synthetic("skewed", 6000, 64, seed=11, alpha=1.0, n_queries=10)
        index = ivf.ivf_build(data.vectors, nlist=24, quantizer="saq", seed=5, bits=4, granularity=16)
        bits_pruned = bits_full = 0
        for q in data.queries:
            bits_pruned += ivf.ivf_search(index, q, k=10, nprobe=12).stats.bits_accessed
            bits_full += ivf.ivf_search(index, q, k=10, nprobe=12, prune=False).stats.bits_accessed
        assert bits_pruned < bits_full

    def test_dimension_mismatch(self, small_index):
        _, index = small_index
        with pytest.raises(ValueError):
            ivf.ivf_search(index, np.zeros(33, np.float32), k=5, nprobe=2)


class TestQuantizerVariants:
    @pytest.mark.parametrize("quantizer,bits", [("lvq", 8), ("pq", 8.0), ("pca", 16.0), ("saq", 5.0)])
    def test_reasonable_recall_each_store(self, quantizer, bits):
        # skewed spectrum: the regime where every method, including plain
        # dimension truncation, has a fighting chance
        data = gen_synthetic("skewed", 2500, 32, seed=12, alpha=1.0, n_queries=20)
        index = ivf.ivf_build(data.vectors, nlist=10, quantizer=quantizer, seed=6, bits=bits, granularity=16)
        gt_ids, _ = brute_force_topk(data.vectors, data.queries, k=10)
        hits = 0
        for j, q in enumerate(data.queries):
            res = ivf.ivf_search(index, q, k=10, nprobe=10)
            hits += len(set(res.ids.tolist()) & set(gt_ids[j].tolist()))
        assert hits / (10 * len(data.queries)) >= 0.8


class TestPersistence:
    @pytest.mark.parametrize("quantizer,bits", [("caq", 6), ("saq", 3.0), ("lvq", 6), ("pq", 8.0), ("pca", 8.0), ("exact", 0)])
    def test_round_trip_search_identical(self, tmp_path, quantizer, bits):
        data = gen_synthetic("clustered", 800, 32, seed=13, blobs=6, n_queries=5)
        index = ivf.ivf_build(data.vectors, nlist=6, quantizer=quantizer, seed=7, bits=bits, granularity=16)
        ivf.save_index(index, tmp_path / "idx")
        loaded = ivf.load_index(tmp_path / "idx")
        assert loaded.quantizer == quantizer
        np.testing.assert_array_equal(loaded.ids, index.ids)
        for q in data.queries:
            a = ivf.ivf_search(index, q, k=8, nprobe=6)
            b = ivf.ivf_search(loaded, q, k=8, nprobe=6)
            np.testing.assert_array_equal(a.ids, b.ids)
            np.testing.assert_allclose(a.distances, b.distances, rtol=1e-6)

    def test_bad_directory(self, tmp_path):
        (tmp_path / "meta.json").write_text("{}")
        with pytest.raises(ivf.DataFormatError):
            ivf.load_index(tmp_path)
