import json

import numpy as np
import pytest

from remix import encoder as enc
from remix.datamodel import GeneratorConfig, synth_generate
from remix.errors import EmptyPoolError, NoValidPositiveError
from remix.evalkit import (
    cluster_purity,
    cmc_rank_k,
    evaluate,
    extract,
    mean_ap,
    shuffled_label_baseline,
    split_query_gallery,
    write_report,
)
from remix.numcore import normalize_rows, substream
from remix.pseudolabel import PseudoLabeledPool


from oracles import oracle_ap


def angles(*degs):
    rad = np.deg2rad(degs)
    return np.stack([np.cos(rad), np.sin(rad)], axis=1)


class TestFixtures:
    def test_ap_relevant_irrelevant_relevant(self):
        # ranking [r, i, r] -> (1/1 + 2/3) / 2 = 5/6
        q = angles(0)
        g = angles(5, 20, 60)
        ap = mean_ap(q, [0], [0], g, [0, 1, 0], [1, 1, 1])
        assert ap == pytest.approx(5.0 / 6.0)

    def test_ap_perfect(self):
        q = angles(0)
        g = angles(5, 60)
        assert mean_ap(q, [0], [0], g, [0, 1], [1, 1]) == 1.0

    def test_ap_second_place(self):
        q = angles(0)
        g = angles(5, 60)
        assert mean_ap(q, [0], [0], g, [1, 0], [1, 1]) == pytest.approx(0.5)

    def test_cmc_ranks(self):
        q = angles(0)
        g = angles(5, 20, 60)
        ids = [1, 1, 0]
        assert cmc_rank_k(q, [0], [0], g, ids, [1] * 3, k=1) == 0.0
        assert cmc_rank_k(q, [0], [0], g, ids, [1] * 3, k=2) == 0.0
        assert cmc_rank_k(q, [0], [0], g, ids, [1] * 3, k=3) == 1.0

    def test_same_id_same_cam_masked(self):
        q = angles(0)
        # the nearest gallery item shares id and camera with the query, so
        # it must be ignored rather than counted as a hit
        g = angles(1, 30)
        ap = mean_ap(q, [0], [0], g, [0, 0], [0, 1])
        assert ap == 1.0

    def test_tie_breaks_by_gallery_index(self):
        q = angles(0)
        g = np.array([[1.0, 0.0], [1.0, 0.0]])
        # identical sims: index 0 ranks first, so relevance at index 1
        # lands at rank 2
        ap = mean_ap(q, [0], [0], g, [1, 0], [1, 1])
        assert ap == pytest.approx(0.5)

    def test_no_valid_positive(self):
        q = angles(0)
        g = angles(10)
        with pytest.raises(NoValidPositiveError):
            mean_ap(q, [0], [0], g, [1], [1])


class TestAgainstOracle:
    def test_fifty_random_instances(self):
        rng = substream(0, "gradcheck")
        for _ in range(50):
            nq = int(rng.integers(1, 5))
            ng = int(rng.integers(4, 20))
            n_ids = int(rng.integers(2, 5))
            q = normalize_rows(rng.standard_normal((nq, 3)))
            g = normalize_rows(rng.standard_normal((ng, 3)))
            q_ids = rng.integers(n_ids, size=nq)
            g_ids = rng.integers(n_ids, size=ng)
            q_cams = rng.integers(2, size=nq)
            g_cams = rng.integers(2, size=ng)
            sims = q @ g.T
            aps, hits1 = [], []
            try:
                got_ap = mean_ap(q, q_ids, q_cams, g, g_ids, g_cams)
                got_r1 = cmc_rank_k(q, q_ids, q_cams, g, g_ids, g_cams, k=1)
            except NoValidPositiveError:
                continue
            for qi in range(nq):
                valid = ~((g_ids == q_ids[qi]) & (g_cams == q_cams[qi]))
                rel = (g_ids[valid] == q_ids[qi])
                aps.append(oracle_ap(sims[qi][valid], rel))
                order = np.argsort(-sims[qi][valid], kind="stable")
                hits1.append(bool(rel[order][:1].any()))
            assert got_ap == pytest.approx(np.mean(aps))
            assert got_r1 == pytest.approx(np.mean(hits1))


class TestClusterPurity:
    def _pool(self, clusters):
        pool = PseudoLabeledPool()
        sid = 0
        for pl, hids in enumerate(clusters):
            members = []
            for h in hids:
                from remix.datamodel import SINGLE, PersonSample
                members.append((PersonSample(sid, np.ones(2), None, None,
                                             SINGLE, 0, h), np.ones(2)))
                sid += 1
            pool.entries[pl] = members
        return pool

    def test_hand_computed(self):
        pool = self._pool([[0, 0, 0, 1], [2, 2]])
        assert cluster_purity(pool) == pytest.approx((3 + 2) / 6)

    def test_pure_pool(self):
        assert cluster_purity(self._pool([[0, 0], [1, 1, 1]])) == 1.0

    def test_empty_pool(self):
        with pytest.raises(EmptyPoolError):
            cluster_purity(PseudoLabeledPool())


def _target(seed=0):
    cfg = GeneratorConfig(dim=8, n_identities=6, n_cameras=3,
                          samples_per_id_per_cam=2, n_single_identities=8,
                          n_videos=4, frames_per_identity=3,
                          n_target_identities=6, n_target_cameras=3,
                          target_samples_per_id_per_cam=2,
                          multi_subspace_dim=4)
    return synth_generate(cfg, seed)[2]


class TestProtocol:
    def test_split_takes_lowest_sample_id(self):
        target = _target()
        q_idx, g_idx = split_query_gallery(target)
        assert len(q_idx) == 6 * 3
        assert set(q_idx).isdisjoint(g_idx)
        assert len(q_idx) + len(g_idx) == len(target.samples)
        chosen = {}
        for i in q_idx:
            s = target.samples[i]
            chosen[(s.identity, s.camera)] = s.sample_id
        for s in target.samples:
            assert chosen[(s.identity, s.camera)] <= s.sample_id

    def test_evaluate_report_shape(self):
        target = _target()
        params = enc.init_params(8, [8], 4, substream(0, "init"))
        report = evaluate(params, target)
        assert set(report) == {"rank1", "rank5", "rank10", "mAP",
                               "n_query", "n_gallery", "protocol"}
        assert report["protocol"] == "cross-domain"
        assert report["n_query"] == 18
        assert 0.0 <= report["mAP"] <= 1.0
        assert report["rank1"] <= report["rank5"] <= report["rank10"]

    def test_extract_preserves_order_and_skips_augmentation(self):
        target = _target()
        params = enc.init_params(8, [8], 4, substream(0, "init"))
        a = extract(params, target.samples)
        b = extract(params, target.samples)
        assert np.array_equal(a, b)
        assert a.shape == (len(target.samples), 4)

    def test_shuffled_baseline_below_real_score(self):
        target = _target()
        params = enc.init_params(8, [16], 8, substream(1, "init"))
        report = evaluate(params, target)
        base = shuffled_label_baseline(params, target, substream(0, "baseline"))
        assert 0.0 < base < report["mAP"]

    def test_write_report(self, tmp_path):
        path = tmp_path / "report.json"
        write_report(path, {"mAP": 0.5, "protocol": "cross-domain"})
        doc = json.loads(path.read_text())
        assert doc["mAP"] == 0.5
