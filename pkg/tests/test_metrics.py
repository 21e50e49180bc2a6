"""Tests for dataset-level intersection-over-union reporting."""

import json

import numpy as np
import pytest

from maskctl.metrics import (
    VOC_CLASS_NAMES,
    ConfusionAccumulator,
    EmptyStateError,
    confusion_accumulate,
    iou_report,
)
from maskctl.tensor_store import IGNORE_LABEL
from maskctl.validation import ShapeMismatchError


def _report(pred, gt, num_classes):
    acc = ConfusionAccumulator(num_classes)
    acc.update(np.asarray(pred), np.asarray(gt))
    return iou_report(acc)


class TestIouValues:
    def test_hand_checked_two_class_fixture(self):
        # class 0: TP=1, FP=0, FN=1 -> 1/2; class 1: TP=2, FP=1, FN=0 -> 2/3.
        gt = [[0, 0], [1, 1]]
        pred = [[0, 1], [1, 1]]
        report = _report(pred, gt, 2)
        assert report.per_class[0] == pytest.approx(0.5, abs=1e-12)
        assert report.per_class[1] == pytest.approx(2 / 3, abs=1e-12)
        assert report.miou == pytest.approx(7 / 12, abs=1e-9)

    def test_identical_maps_score_one(self):
        rng = np.random.default_rng(5)
        labels = rng.integers(0, 4, size=(13, 9))
        report = _report(labels, labels, 4)
        assert report.miou == 1.0
        assert all(v == 1.0 for v in report.per_class.values())

    def test_disjoint_maps_score_zero(self):
        gt = np.zeros((4, 4), dtype=np.int64)
        pred = np.ones((4, 4), dtype=np.int64)
        report = _report(pred, gt, 2)
        assert report.miou == 0.0

    def test_dataset_level_not_per_image_average(self):
        # Accumulating over the dataset weights images by pixel agreement,
        # which differs from averaging per-image scores.
        acc = ConfusionAccumulator(2)
        acc.update(np.array([0, 0, 0, 1]), np.array([0, 0, 0, 1]))
        acc.update(np.array([1, 1, 1, 1]), np.array([0, 1, 1, 1]))
        report = iou_report(acc)
        assert report.per_class[0] == pytest.approx(3 / 4, abs=1e-12)
        assert report.per_class[1] == pytest.approx(4 / 5, abs=1e-12)
        assert report.miou == pytest.approx(0.775, abs=1e-12)

    def test_update_order_is_irrelevant(self):
        rng = np.random.default_rng(6)
        chunks = [
            (rng.integers(0, 3, size=(5, 5)), rng.integers(0, 3, size=(5, 5)))
            for _ in range(4)
        ]
        forward = ConfusionAccumulator(3)
        backward = ConfusionAccumulator(3)
        for pred, gt in chunks:
            forward.update(pred, gt)
        for pred, gt in reversed(chunks):
            backward.update(pred, gt)
        np.testing.assert_array_equal(forward.matrix, backward.matrix)

    def test_label_permutation_equivariance(self):
        rng = np.random.default_rng(7)
        gt = rng.integers(0, 3, size=(8, 8))
        pred = rng.integers(0, 3, size=(8, 8))
        base = _report(pred, gt, 3)
        perm = np.array([2, 0, 1])
        swapped = _report(perm[pred], perm[gt], 3)
        for k in range(3):
            assert swapped.per_class[perm[k]] == pytest.approx(base.per_class[k])
        assert swapped.miou == pytest.approx(base.miou, abs=1e-12)


class TestIgnorePixels:
    def test_ignored_ground_truth_skipped(self):
        gt = np.array([[0, IGNORE_LABEL], [1, IGNORE_LABEL]])
        pred = np.array([[0, 1], [1, 0]])
        report = _report(pred, gt, 2)
        assert report.miou == 1.0

    def test_prediction_under_ignored_pixel_unchecked(self):
        # Range validation applies only to counted pixels.
        gt = np.array([0, IGNORE_LABEL])
        pred = np.array([0, 99])
        assert _report(pred, gt, 2).per_class[0] == 1.0

    def test_all_ignored_raises(self):
        acc = ConfusionAccumulator(2)
        acc.update(np.zeros(4, dtype=np.int64), np.full(4, IGNORE_LABEL))
        with pytest.raises(EmptyStateError):
            iou_report(acc)


class TestUndefinedClasses:
    def test_unseen_class_is_none_and_excluded(self):
        gt = np.array([0, 0, 1, 1])
        pred = np.array([0, 0, 1, 1])
        report = _report(pred, gt, 3)
        assert report.per_class[2] is None
        assert report.miou == 1.0

    def test_class_defined_by_false_positives_only(self):
        gt = np.array([0, 0, 0, 0])
        pred = np.array([0, 0, 0, 2])
        report = _report(pred, gt, 3)
        assert report.per_class[2] == 0.0
        assert report.per_class[1] is None
        assert report.miou == pytest.approx((3 / 4 + 0.0) / 2, abs=1e-12)


class TestAccumulatorApi:
    def test_update_returns_self_for_chaining(self):
        acc = ConfusionAccumulator(2)
        result = acc.update([0], [0]).update([1], [1])
        assert result is acc
        assert acc.matrix.sum() == 2

    def test_functional_alias(self):
        acc = ConfusionAccumulator(2)
        out = confusion_accumulate(np.array([0, 1]), np.array([0, 1]), acc)
        assert out is acc
        assert iou_report(acc).miou == 1.0

    def test_merge_equals_single_accumulator(self):
        rng = np.random.default_rng(8)
        preds = [rng.integers(0, 3, size=20) for _ in range(3)]
        gts = [rng.integers(0, 3, size=20) for _ in range(3)]
        whole = ConfusionAccumulator(3)
        for p, g in zip(preds, gts):
            whole.update(p, g)
        parts = [ConfusionAccumulator(3).update(p, g) for p, g in zip(preds, gts)]
        merged = parts[0].merge(parts[1]).merge(parts[2])
        np.testing.assert_array_equal(merged.matrix, whole.matrix)

    def test_merge_class_count_mismatch(self):
        with pytest.raises(ValueError):
            ConfusionAccumulator(2).merge(ConfusionAccumulator(3))

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ShapeMismatchError):
            ConfusionAccumulator(2).update(np.zeros((2, 2)), np.zeros((3, 2)))

    @pytest.mark.parametrize("pred,gt", [([0, 2], [0, 0]), ([0, -1], [0, 0]), ([0, 0], [0, 254])])
    def test_out_of_range_labels_rejected(self, pred, gt):
        with pytest.raises(ValueError):
            ConfusionAccumulator(2).update(np.array(pred), np.array(gt))

    def test_empty_accumulator_raises(self):
        with pytest.raises(EmptyStateError):
            iou_report(ConfusionAccumulator(2))

    def test_invalid_class_count(self):
        with pytest.raises(ValueError):
            ConfusionAccumulator(0)


class TestReportFormats:
    def test_to_json_round_trip(self):
        report = _report([0, 1], [0, 1], 3)
        payload = json.loads(report.to_json())
        assert payload["miou"] == 1.0
        assert payload["per_class"]["0"] == 1.0
        assert payload["per_class"]["2"] is None

    def test_text_table_marks_undefined_and_appends_miou(self):
        table = _report([0, 1], [0, 1], 3).to_text_table()
        header, values = table.splitlines()
        assert header.split() == ["class_0", "class_1", "class_2", "mIOU"]
        assert values.split() == ["100.0", "100.0", "-", "100.0"]

    def test_text_table_uses_voc_names_for_21_classes(self):
        acc = ConfusionAccumulator(21)
        acc.update(np.arange(21), np.arange(21))
        header = iou_report(acc).to_text_table().splitlines()[0]
        assert header.split() == list(VOC_CLASS_NAMES) + ["mIOU"]

    def test_text_table_custom_names(self):
        table = _report([0, 1], [1, 0], 2).to_text_table(class_names=["a", "b"])
        header, values = table.splitlines()
        assert header.split() == ["a", "b", "mIOU"]
        assert values.split() == ["0.0", "0.0", "0.0"]

    def test_percentages_rounded_to_one_decimal(self):
        values = _report([0, 1, 1], [0, 1, 0], 2).to_text_table().splitlines()[1]
        # class 0: 1/2, class 1: 1/2, mean 1/2.
        assert values.split() == ["50.0", "50.0", "50.0"]
