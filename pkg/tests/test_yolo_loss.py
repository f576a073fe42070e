# tests/test_yolo_loss.py
import numpy as np
import pytest

from core.detection import BBox
from core.errors import ShapeError
from core.yolo_loss import LossBreakdown, assign_targets, yolo_loss, yolo_loss_and_grad


def test_truth_goes_to_the_cell_holding_its_center():
    targets = assign_targets([(1, BBox(0.6, 0.3, 0.2, 0.1))], grid=4, boxes_per_cell=2)
    assert targets.responsible() == [(1, 2, 0)]
    np.testing.assert_allclose(targets.boxes[1, 2, 0], [0.4, 0.2, 0.2, 0.1])
    assert targets.classes[1, 2].tolist() == [0.0, 1.0, 0.0]
    assert targets.cell_obj.sum() == 1.0


def test_second_truth_in_an_occupied_cell_is_dropped():
    truths = [(0, BBox(0.1, 0.1, 0.1, 0.1)), (2, BBox(0.15, 0.12, 0.1, 0.1))]
    targets = assign_targets(truths, grid=4, boxes_per_cell=2)
    assert targets.dropped == 1
    assert targets.classes[0, 0].tolist() == [1.0, 0.0, 0.0]


def test_responsible_slot_has_the_best_iou():
    pred = np.zeros((1, 1, 13))
    pred[0, 0, 0:4] = [0.5, 0.5, 0.05, 0.05]
    pred[0, 0, 5:9] = [0.5, 0.5, 0.4, 0.4]
    targets = assign_targets([(0, BBox(0.5, 0.5, 0.4, 0.5))], 1, 2, pred)
    assert targets.responsible() == [(0, 0, 1)]


def test_assign_targets_validates_shapes():
    with pytest.raises(ShapeError):
        assign_targets([(5, BBox(0.5, 0.5, 0.1, 0.1))], 2, 2)
    with pytest.raises(ShapeError):
        assign_targets([], 2, 2, np.zeros((3, 3, 13)))


def perfect_prediction(targets):
    g, b = targets.grid, targets.boxes_per_cell
    pred = np.zeros((g, g, b * 5 + targets.num_classes))
    for row, col, slot in targets.responsible():
        pred[row, col, slot * 5:slot * 5 + 4] = targets.boxes[row, col, slot]
        pred[row, col, slot * 5 + 4] = 1.0
        pred[row, col, b * 5:] = targets.classes[row, col]
    return pred


def test_perfect_prediction_has_zero_loss():
    truths = [(0, BBox(0.2, 0.3, 0.1, 0.2)), (2, BBox(0.7, 0.8, 0.3, 0.3))]
    targets = assign_targets(truths, 3, 2)
    loss = yolo_loss(perfect_prediction(targets), targets)
    assert loss.total == pytest.approx(0.0)
    assert not loss.degenerate


def test_empty_cells_are_weighted_by_lambda_noobj():
    targets = assign_targets([], 1, 2)
    pred = np.zeros((1, 1, 13))
    pred[0, 0, 4] = 0.5
    pred[0, 0, 9] = 0.5
    loss = yolo_loss(pred, targets, lambda_noobj=0.5)
    assert loss.iou_err == pytest.approx(0.25)
    assert loss.coord_err == 0.0
    assert loss.cls_err == 0.0


def test_coordinate_terms_use_lambda_coord_and_square_roots():
    targets = assign_targets([(0, BBox(0.5, 0.5, 0.25, 0.25))], 1, 1, num_classes=1)
    pred = np.zeros((1, 1, 6))
    pred[0, 0, :5] = [0.6, 0.5, 0.64, 0.25, 1.0]
    pred[0, 0, 5] = 1.0
    loss = yolo_loss(pred, targets, lambda_coord=5.0)
    # (0.1)^2 + (sqrt .64 - sqrt .25)^2 = 0.01 + 0.09
    assert loss.coord_err == pytest.approx(5.0 * 0.1)


def test_negative_size_is_flagged_degenerate():
    targets = assign_targets([(0, BBox(0.5, 0.5, 0.25, 0.25))], 1, 1, num_classes=1)
    pred = perfect_prediction(targets)
    pred[0, 0, 2] = -0.1
    assert yolo_loss(pred, targets).degenerate


def test_loss_gradient_matches_finite_differences(rng):
    truths = [(1, BBox(0.3, 0.4, 0.2, 0.3)), (0, BBox(0.8, 0.7, 0.1, 0.2))]
    pred = rng.uniform(0.05, 0.95, size=(2, 2, 13))
    targets = assign_targets(truths, 2, 2, pred)
    _, grad = yolo_loss_and_grad(pred, targets)
    eps = 1e-6
    for index in np.ndindex(pred.shape):
        up, down = pred.copy(), pred.copy()
        up[index] += eps
        down[index] -= eps
        numeric = (yolo_loss(up, targets).total - yolo_loss(down, targets).total) / (2 * eps)
        assert grad[index] == pytest.approx(numeric, rel=1e-5, abs=1e-7)


def test_log_line_format():
    line = LossBreakdown(1.0, 0.5, 0.25).log_line(7)
    assert line == "7 1 0.5 0.25 1.75"


def random_case(rng, grid=4, boxes_per_cell=3, num_classes=3):
    truths = [(int(rng.integers(0, num_classes)),
               BBox(*rng.uniform(0.1, 0.9, size=2), *rng.uniform(0.05, 0.4, size=2)))
              for _ in range(int(rng.integers(1, 6)))]
    pred = rng.uniform(0.01, 0.99, size=(grid, grid, boxes_per_cell * 5 + num_classes))
    return pred, assign_targets(truths, grid, boxes_per_cell, pred, num_classes)


def test_doubling_lambda_coord_doubles_only_the_coordinate_term(rng):
    for _ in range(50):
        pred, targets = random_case(rng)
        base = yolo_loss(pred, targets, lambda_coord=5.0)
        doubled = yolo_loss(pred, targets, lambda_coord=10.0)
        assert doubled.coord_err == pytest.approx(2.0 * base.coord_err, rel=1e-12)
        assert doubled.iou_err == base.iou_err
        assert doubled.cls_err == base.cls_err


def test_loss_ignores_the_order_of_non_responsible_slots(rng):
    for _ in range(50):
        pred, targets = random_case(rng)
        b = targets.boxes_per_cell
        shuffled = pred.copy()
        for row in range(targets.grid):
            for col in range(targets.grid):
                free = [s for s in range(b) if not targets.obj_mask[row, col, s]]
                order = rng.permutation(free)
                for src, dst in zip(free, order):
                    shuffled[row, col, dst * 5:dst * 5 + 5] = pred[row, col, src * 5:src * 5 + 5]
        assert not np.array_equal(shuffled, pred)
        assert yolo_loss(shuffled, targets).total == pytest.approx(yolo_loss(pred, targets).total, rel=1e-12)
