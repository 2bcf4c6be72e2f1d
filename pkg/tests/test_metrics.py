"""Metric suite: hand-derived fixtures, brute-force oracle comparison and
structural properties (PQ = SQ x RQ, relabeling invariance, matching
uniqueness)."""

import numpy as np
import pytest

import oracles
from conftest import blob_scene_pair, labeled_map
from sgfsis import metrics
from sgfsis.errors import DimensionError
from sgfsis.labels import InstanceLabelMap

TOL = 1e-9


def _map(raster, classes):
    return InstanceLabelMap(np.asarray(raster, dtype=np.int64), classes,
                            {c: str(c) for c in classes.values()})


class TestMatchInstances:
    def test_identity_matches_everything(self):
        ids = np.array([[1, 1, 0], [2, 2, 0], [0, 0, 3]])
        m = metrics.match_instances(ids, ids)
        assert sorted(m.pairs) == [(1, 1, 1.0), (2, 2, 1.0), (3, 3, 1.0)]
        assert m.unmatched_gt == [] and m.unmatched_pred == []

    def test_disjoint_never_matches(self):
        gt = np.array([[1, 1], [0, 0]])
        pred = np.array([[0, 0], [1, 1]])
        m = metrics.match_instances(gt, pred)
        assert m.pairs == []
        assert m.unmatched_gt == [1] and m.unmatched_pred == [1]

    def test_iou_three_fifths_matches(self):
        # gt 2x2 block; pred covers 3 of its 4 pixels plus 1 outside
        gt = np.zeros((3, 3), dtype=int)
        gt[0:2, 0:2] = 1
        pred = np.zeros((3, 3), dtype=int)
        pred[0, 0] = pred[0, 1] = pred[1, 0] = 1
        pred[2, 2] = 1
        m = metrics.match_instances(gt, pred)
        assert len(m.pairs) == 1
        g, p, iou = m.pairs[0]
        assert (g, p) == (1, 1)
        assert iou == pytest.approx(3 / 5, abs=TOL)

    def test_dim_mismatch_raises(self):
        with pytest.raises(DimensionError):
            metrics.match_instances(np.zeros((2, 2), int), np.zeros((3, 3), int))

    def test_matching_is_unique_on_random_scenes(self):
        for seed in range(30):
            gt, pred = blob_scene_pair(seed)
            m = metrics.match_instances(gt.ids, pred.ids)
            gts = [g for g, _, _ in m.pairs]
            preds = [p for _, p, _ in m.pairs]
            assert len(gts) == len(set(gts))
            assert len(preds) == len(set(preds))


class TestDetectionF1:
    def test_perfect_prediction_is_one(self):
        ids = np.array([[1, 1, 0], [0, 2, 2]])
        lm = _map(ids, {1: 1, 2: 2})
        f1, novel, base = metrics.detection_f1(lm, lm, base_classes=[1])
        assert f1 == {1: 1.0, 2: 1.0}
        assert novel == 1.0 and base == 1.0

    def test_tp2_fp1_fn1_gives_two_thirds(self):
        gt = np.zeros((4, 12), int)
        gt[0:2, 0:2] = 1
        gt[0:2, 4:6] = 2
        gt[0:2, 8:10] = 3  # will go unmatched -> FN
        pred = np.zeros((4, 12), int)
        pred[0:2, 0:2] = 1
        pred[0:2, 4:6] = 2
        pred[2:4, 10:12] = 3  # spurious -> FP
        f1, novel, _ = metrics.detection_f1(
            _map(gt, {1: 1, 2: 1, 3: 1}), _map(pred, {1: 1, 2: 1, 3: 1})
        )
        assert f1[1] == pytest.approx(4 / 6, abs=TOL)

    def test_tp_requires_class_agreement(self):
        ids = np.array([[1, 1], [1, 1]])
        f1, _, _ = metrics.detection_f1(_map(ids, {1: 1}), _map(ids, {1: 2}))
        # perfect overlap but wrong class: an FN for class 1 and an FP for 2
        assert f1[1] == 0.0 and f1[2] == 0.0

    def test_no_overlap_leaves_base_undefined(self):
        ids = np.array([[1, 1], [0, 0]])
        lm = _map(ids, {1: 1})
        _, novel, base = metrics.detection_f1(lm, lm, base_classes=[9])
        assert novel == 1.0
        assert base is None


class TestAji:
    def test_identity_is_one(self):
        gt, _ = blob_scene_pair(3)
        assert metrics.aji(gt.ids, gt.ids) == pytest.approx(1.0, abs=TOL)

    def test_two_blocks_fixture(self):
        # gt: two 2x2 blocks; pred: half of block A plus block B with 1 extra
        gt = np.zeros((4, 5), int)
        gt[0:2, 0:2] = 1
        gt[2:4, 3:5] = 2
        pred = np.zeros((4, 5), int)
        pred[0:2, 0] = 1  # half of block A (2 px)
        pred[2:4, 3:5] = 2
        pred[1, 4] = 2  # 1 extra pixel
        assert metrics.aji(gt.ids if hasattr(gt, "ids") else gt, pred) == (
            pytest.approx(6 / 9, abs=TOL)
        )

    def test_empty_pred_is_zero(self):
        gt = np.array([[1, 1], [0, 0]])
        assert metrics.aji(gt, np.zeros_like(gt)) == 0.0

    def test_empty_empty_is_one(self):
        z = np.zeros((3, 3), int)
        assert metrics.aji(z, z) == 1.0


class TestPanopticQuality:
    def test_perfect_prediction_is_one(self):
        gt, _ = blob_scene_pair(5)
        pq, mpq = metrics.panoptic_quality(gt, gt)
        assert all(v == pytest.approx(1.0, abs=TOL) for v in pq.values())
        assert mpq == pytest.approx(1.0, abs=TOL)

    def test_point_three_fixture(self):
        # one match at IoU 0.6, one FP, one FN, one class
        gt = np.zeros((4, 12), int)
        gt[0:2, 0:2] = 1
        gt[0:2, 6:8] = 2  # FN
        pred = np.zeros((4, 12), int)
        pred[0, 0] = pred[0, 1] = pred[1, 0] = 1
        pred[2, 2] = 1  # IoU 3/5 with gt 1
        pred[2:4, 10:12] = 2  # FP
        pq, mpq = metrics.panoptic_quality(
            _map(gt, {1: 1, 2: 1}), _map(pred, {1: 1, 2: 1})
        )
        assert pq[1] == pytest.approx(0.6 / (1 + 0.5 + 0.5), abs=TOL)
        assert mpq == pytest.approx(0.3, abs=TOL)

    def test_absent_class_excluded_from_mean(self):
        ids = np.array([[1, 1], [1, 1]])
        pq, mpq = metrics.panoptic_quality(_map(ids, {1: 1}), _map(ids, {1: 1}))
        assert set(pq) == {1}
        assert mpq == pytest.approx(1.0, abs=TOL)


class TestDice:
    def test_identical_is_one(self):
        m = np.array([[1, 0], [1, 1]])
        assert metrics.dice_coefficient(m, m) == 1.0

    def test_disjoint_is_zero(self):
        assert metrics.dice_coefficient(
            np.array([[1, 0]]), np.array([[0, 1]])
        ) == 0.0

    def test_half_overlap_fixture(self):
        a = np.zeros((4, 4), int)
        a[0, :] = 1  # |A| = 4
        b = np.zeros((4, 4), int)
        b[0, 2:] = 1
        b[1, 2:] = 1  # |B| = 4, |A & B| = 2
        assert metrics.dice_coefficient(a, b) == pytest.approx(0.5, abs=TOL)

    def test_empty_empty_is_one(self):
        z = np.zeros((2, 2), int)
        assert metrics.dice_coefficient(z, z) == 1.0


class TestOracleAgreement:
    def test_random_scenes_match_brute_force(self):
        for seed in range(40):
            gt, pred = blob_scene_pair(seed)
            assert metrics.aji(gt.ids, pred.ids) == pytest.approx(
                oracles.aji(gt.ids, pred.ids), abs=TOL
            )
            f1, _, _ = metrics.detection_f1(gt, pred)
            of1 = oracles.detection_f1(gt, pred)
            assert set(f1) == set(of1)
            for c in f1:
                if f1[c] is None:
                    assert of1[c] is None
                else:
                    assert f1[c] == pytest.approx(of1[c], abs=TOL)
            pq, mpq = metrics.panoptic_quality(gt, pred)
            opq, ompq = oracles.panoptic_quality(gt, pred)
            for c in pq:
                assert pq[c] == pytest.approx(opq[c], abs=TOL)
            assert mpq == pytest.approx(ompq, abs=TOL)
            assert metrics.dice_coefficient(gt.ids, pred.ids) == pytest.approx(
                oracles.dice(gt.ids, pred.ids), abs=TOL
            )


class TestProperties:
    def test_pq_decomposes_into_sq_times_rq(self):
        for seed in range(25):
            gt, pred = blob_scene_pair(seed)
            pq, _ = metrics.panoptic_quality(gt, pred, per_class=False)
            m = metrics.match_instances(gt.ids, pred.ids)
            tp = len(m.pairs)
            fp = len(m.unmatched_pred)
            fn = len(m.unmatched_gt)
            if tp == 0:
                continue
            sq = sum(iou for _, _, iou in m.pairs) / tp
            rq = tp / (tp + 0.5 * fp + 0.5 * fn)
            assert pq[0] == pytest.approx(sq * rq, abs=TOL)

    def test_aji_bounded_by_dice(self):
        for seed in range(25):
            gt, pred = blob_scene_pair(seed)
            assert metrics.aji(gt.ids, pred.ids) <= (
                metrics.dice_coefficient(gt.ids, pred.ids) + TOL
            )

    def test_relabeling_invariance(self):
        rng = np.random.default_rng(11)
        for seed in range(15):
            gt, pred = blob_scene_pair(seed)
            ids = pred.instance_ids()
            perm = dict(zip(ids, rng.permutation(np.array(ids) + 100)))
            relabeled = np.zeros_like(pred.ids)
            for old, new in perm.items():
                relabeled[pred.ids == old] = new
            shuffled = labeled_map(relabeled)
            for old, new in perm.items():
                shuffled.classes[int(new)] = pred.classes[old]
            assert metrics.aji(gt.ids, pred.ids) == pytest.approx(
                metrics.aji(gt.ids, relabeled), abs=TOL
            )
            _, mpq_a = metrics.panoptic_quality(gt, pred)
            _, mpq_b = metrics.panoptic_quality(gt, shuffled)
            if mpq_a is None:
                assert mpq_b is None
            else:
                assert mpq_a == pytest.approx(mpq_b, abs=TOL)

    def test_all_metrics_in_unit_interval(self):
        for seed in range(20):
            gt, pred = blob_scene_pair(seed)
            report = metrics.evaluate(gt, pred)
            for value in (report.aji, report.mpq, report.dice,
                          report.f1_novel):
                if value is not None:
                    assert -TOL <= value <= 1.0 + TOL


class TestReport:
    def test_macro_average_skips_undefined(self):
        a = metrics.MetricsReport(aji=0.5, mpq=0.4, dice=0.6, f1_novel=0.7)
        b = metrics.MetricsReport(aji=0.7, mpq=None, dice=0.8, f1_novel=None)
        avg = metrics.macro_average([a, b])
        assert avg.aji == pytest.approx(0.6)
        assert avg.mpq == pytest.approx(0.4)
        assert avg.f1_novel == pytest.approx(0.7)

    def test_text_and_json_round(self):
        gt, pred = blob_scene_pair(1)
        report = metrics.evaluate(gt, pred, base_classes=[1])
        text = report.as_text()
        assert "aji = " in text and text.endswith("\n")
        import json

        decoded = json.loads(report.as_json())
        assert decoded["aji"] == pytest.approx(report.aji, abs=TOL)
