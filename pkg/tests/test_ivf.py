import numpy as np
import pytest

from sci import clustering, encoder, evaluation, ivf
from sci.core import make_rng
from sci.errors import CorruptIndex, DuplicateItem, TooFewPoints

from conftest import clone_model, linear_model


def make_items(rng, n, dim):
    return list(zip(range(n), rng.normal(size=(n, dim)).astype(np.float32)))


def symmetric_model(dim, seed=0):
    m = linear_model(dim, dim, seed=seed)
    m.params_i = {k: v.copy() for k, v in m.params_q.items()}
    return m


class TestComputeResidual:
    def _centroids(self):
        centers = np.array([[1.0, 0.0], [0.0, 1.0], [2.0, 2.0]],
                           dtype=np.float32)
        return clustering.Centroids(centers, 0.0, 0)

    def test_centered_item(self):
        c = self._centroids()
        cid, r = ivf.compute_residual([1.0, 0.0], [1.0, 0.0], c)
        assert cid == 0
        assert np.all(r == 0.0)

    def test_cross_space_arithmetic(self):
        c = self._centroids()
        cid, r = ivf.compute_residual([2.0, 2.0], [2.1, 2.0], c)
        assert cid == 2
        assert np.allclose(r, [0.1, 0.0], atol=1e-6)

    def test_aligned_towers_match_single_space_residual(self, rng):
        c = self._centroids()
        e = rng.normal(size=2).astype(np.float32)
        cid, r = ivf.compute_residual(e, e, c)
        expected = e.astype(np.float64) - c.centers[cid].astype(np.float64)
        assert np.allclose(r, expected, atol=1e-6)


class TestBuild:
    def test_symmetric_towers_identical_assignments(self, rng):
        m = symmetric_model(6)
        items = make_items(rng, 80, 6)
        std = ivf.build(m, items, ivf.STANDARD, ivf.FLAT, 4, make_rng(1))
        ci = ivf.build(m, items, ivf.CI, ivf.FLAT, 4, make_rng(1))
        for a, b in zip(std.list_ids, ci.list_ids):
            assert np.array_equal(a, b)

    def test_nlist_one_is_exhaustive(self, rng):
        m = linear_model(4, 4, seed=2)
        items = make_items(rng, 30, 4)
        index = ivf.build(m, items, ivf.CI, ivf.FLAT, 1, make_rng(0))
        assert len(index.list_ids[0]) == 30
        q = rng.normal(size=4).astype(np.float32)
        got = ivf.search(index, m, q, 1, 30)
        e_q = encoder.encode(m, encoder.QUERY, q)
        corpus = list(zip([i for i, _ in items],
                          encoder.encode_batch(m, encoder.ITEM,
                                               [f for _, f in items])))
        ref = evaluation.brute_force_search(corpus, e_q, 30)
        assert got.ranked == ref.ranked

    def test_mode_specific_clustering_spaces(self, rng):
        # Two tight latent blobs; item tower = identity, query tower = a
        # 90-degree rotation, so the two spaces cluster differently.
        m = linear_model(2, 2, normalize=False)
        m.params_i["W"] = np.eye(2, dtype=np.float32)
        m.params_q["W"] = np.array([[0.0, -1.0], [1.0, 0.0]], dtype=np.float32)
        blob_a = rng.normal(size=(20, 2)).astype(np.float32) * 0.05 + [3.0, 0.0]
        blob_b = rng.normal(size=(20, 2)).astype(np.float32) * 0.05 - [3.0, 0.0]
        feats = np.concatenate([blob_a, blob_b])
        items = list(zip(range(40), feats))

        std = ivf.build(m, items, ivf.STANDARD, ivf.FLAT, 2, make_rng(4))
        ci = ivf.build(m, items, ivf.CI, ivf.FLAT, 2, make_rng(4))

        e_item = encoder.encode_batch(m, encoder.ITEM, feats)
        e_query = encoder.encode_batch(m, encoder.QUERY, feats)
        std_oracle = clustering.kmeans(e_item, 2, rng=make_rng(4))
        ci_oracle = clustering.kmeans(e_query, 2, rng=make_rng(4))
        std_labels, _ = clustering.assign_batch(std_oracle, e_item)
        ci_labels, _ = clustering.assign_batch(ci_oracle, e_query)

        for index, labels in ((std, std_labels), (ci, ci_labels)):
            for j in range(2):
                assert set(index.list_ids[j].tolist()) == \
                    set(np.flatnonzero(labels == j).tolist())

    def test_duplicate_ids_rejected(self, rng):
        m = linear_model(4, 4)
        items = make_items(rng, 10, 4)
        items[3] = (0, items[3][1])
        with pytest.raises(DuplicateItem):
            ivf.build(m, items, ivf.STANDARD, ivf.FLAT, 2, make_rng(0))

    def test_too_few_items(self, rng):
        m = linear_model(4, 4)
        with pytest.raises(TooFewPoints):
            ivf.build(m, make_items(rng, 3, 4), ivf.STANDARD, ivf.FLAT, 8,
                      make_rng(0))

    def test_pq_residual_space_ablation(self, rng):
        m = linear_model(6, 6, seed=3)
        items = make_items(rng, 64, 6)
        a = ivf.build(m, items, ivf.CI, ivf.PQ, 2, make_rng(0), pq_m=2,
                      pq_ksub=8, residual_space=ivf.RESIDUAL_REPR)
        b = ivf.build(m, items, ivf.CI, ivf.PQ, 2, make_rng(0), pq_m=2,
                      pq_ksub=8, residual_space=ivf.RESIDUAL_STRUCT)
        assert a.residual_space == ivf.RESIDUAL_REPR
        assert b.residual_space == ivf.RESIDUAL_STRUCT
        assert not np.array_equal(a.codebook.codebooks, b.codebook.codebooks)


class TestSearch:
    def test_exhaustive_probe_equals_brute_force(self, rng):
        m = linear_model(5, 5, seed=6)
        items = make_items(rng, 100, 5)
        for mode in (ivf.STANDARD, ivf.CI):
            index = ivf.build(m, items, mode, ivf.FLAT, 8, make_rng(2))
            corpus = list(zip([i for i, _ in items],
                              encoder.encode_batch(m, encoder.ITEM,
                                                   [f for _, f in items])))
            for _ in range(10):
                q = rng.normal(size=5).astype(np.float32)
                got = ivf.search(index, m, q, 8, 10)
                ref = evaluation.brute_force_search(
                    corpus, encoder.encode(m, encoder.QUERY, q), 10)
                assert got.ranked == ref.ranked

    def test_stored_payload_query_ranks_first(self, rng):
        # With identical towers the query encoding of an item's feature
        # equals its stored payload exactly.
        m = symmetric_model(4, seed=8)
        items = make_items(rng, 40, 4)
        index = ivf.build(m, items, ivf.STANDARD, ivf.FLAT, 4, make_rng(1))
        result = ivf.search(index, m, items[17][1], 4, 5)
        assert result.ranked[0][0] == 17
        assert result.ranked[0][1] == pytest.approx(0.0, abs=1e-10)

    def test_pq_lossless_construction_reproduces_flat(self, rng):
        # nlist=1, m=1, one codeword per item: residual quantization is exact,
        # so ADC scores equal the Flat distances.
        m = linear_model(4, 4, seed=9)
        items = make_items(rng, 24, 4)
        flat = ivf.build(m, items, ivf.CI, ivf.FLAT, 1, make_rng(0))
        pq = ivf.build(m, items, ivf.CI, ivf.PQ, 1, make_rng(0), pq_m=1,
                       pq_ksub=24)
        assert pq.mean_reconstruction_error == pytest.approx(0.0, abs=1e-10)
        for _ in range(5):
            q = rng.normal(size=4).astype(np.float32)
            got_flat = ivf.search(flat, m, q, 1, 24)
            got_pq = ivf.search(pq, m, q, 1, 24)
            assert [i for i, _ in got_flat.ranked] == \
                [i for i, _ in got_pq.ranked]
            for (_, a), (_, b) in zip(got_flat.ranked, got_pq.ranked):
                assert a == pytest.approx(b, abs=1e-5)

    def test_probed_cluster_count(self, rng):
        m = linear_model(4, 4)
        index = ivf.build(m, make_items(rng, 50, 4), ivf.CI, ivf.FLAT, 8,
                          make_rng(0))
        for nprobe in (1, 3, 8, 20):
            result = ivf.search(index, m, rng.normal(size=4).astype(np.float32),
                                nprobe, 5)
            assert len(result.probed_clusters) == min(nprobe, 8)

    def test_bad_arguments(self, rng):
        m = linear_model(4, 4)
        index = ivf.build(m, make_items(rng, 20, 4), ivf.CI, ivf.FLAT, 2,
                          make_rng(0))
        with pytest.raises(ValueError):
            ivf.search(index, m, np.zeros(4, dtype=np.float32), 0, 5)
        with pytest.raises(ValueError):
            ivf.search(index, m, np.zeros(4, dtype=np.float32), 1, 0)


class TestSerialization:
    def test_flat_round_trip(self, rng, tmp_path):
        m = linear_model(5, 5, seed=1)
        index = ivf.build(m, make_items(rng, 60, 5), ivf.CI, ivf.FLAT, 4,
                          make_rng(3))
        path = tmp_path / "index.scix"
        ivf.save(index, path)
        loaded = ivf.load(path)
        assert loaded.variant == index.variant
        assert loaded.mode == index.mode
        assert loaded.centroids == index.centroids or np.array_equal(
            loaded.centroids.centers, index.centroids.centers)
        for a, b in zip(loaded.list_ids, index.list_ids):
            assert np.array_equal(a, b)
        for a, b in zip(loaded.list_payload, index.list_payload):
            assert np.array_equal(a, b)

    def test_pq_round_trip(self, rng, tmp_path):
        m = linear_model(8, 8, seed=2)
        index = ivf.build(m, make_items(rng, 80, 8), ivf.CI, ivf.PQ, 4,
                          make_rng(3), pq_m=2, pq_ksub=8,
                          residual_space=ivf.RESIDUAL_STRUCT)
        path = tmp_path / "index.scix"
        ivf.save(index, path)
        loaded = ivf.load(path)
        assert loaded.residual_space == ivf.RESIDUAL_STRUCT
        assert np.array_equal(loaded.codebook.codebooks,
                              index.codebook.codebooks)
        assert np.array_equal(loaded.codebook.train_mse,
                              index.codebook.train_mse)
        for a, b in zip(loaded.list_payload, index.list_payload):
            assert np.array_equal(a, b)

    def test_search_identical_after_round_trip(self, rng, tmp_path):
        m = linear_model(5, 5, seed=1)
        index = ivf.build(m, make_items(rng, 60, 5), ivf.CI, ivf.FLAT, 4,
                          make_rng(3))
        path = tmp_path / "index.scix"
        ivf.save(index, path)
        loaded = ivf.load(path)
        q = rng.normal(size=5).astype(np.float32)
        assert ivf.search(loaded, m, q, 4, 10).ranked == \
            ivf.search(index, m, q, 4, 10).ranked

    def test_truncation_detected(self, rng, tmp_path):
        m = linear_model(5, 5, seed=1)
        index = ivf.build(m, make_items(rng, 60, 5), ivf.CI, ivf.FLAT, 4,
                          make_rng(3))
        path = tmp_path / "index.scix"
        ivf.save(index, path)
        data = path.read_bytes()
        (tmp_path / "trunc.scix").write_bytes(data[:len(data) // 2])
        with pytest.raises(CorruptIndex) as exc:
            ivf.load(tmp_path / "trunc.scix")
        assert exc.value.offset <= len(data) // 2

    def test_bad_magic(self, tmp_path):
        (tmp_path / "bad.scix").write_bytes(b"NOPE" + b"\x00" * 64)
        with pytest.raises(CorruptIndex) as exc:
            ivf.load(tmp_path / "bad.scix")
        assert exc.value.offset == 0

    def test_trailing_bytes(self, rng, tmp_path):
        m = linear_model(5, 5, seed=1)
        index = ivf.build(m, make_items(rng, 60, 5), ivf.CI, ivf.FLAT, 4,
                          make_rng(3))
        path = tmp_path / "index.scix"
        ivf.save(index, path)
        path.write_bytes(path.read_bytes() + b"\x00")
        with pytest.raises(CorruptIndex):
            ivf.load(path)
