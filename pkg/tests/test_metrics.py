import numpy as np
import pytest

from corrupt3d.errors import EmptyGroundTruth, MissingCell, ZeroCleanAP
from corrupt3d.metrics import (Detection, aggregate, ap_r40,
                               bev_intersection_area, iou_3d, iou_bev)
from corrupt3d.types import Box3D

from conftest import random_box


def cube(x=0.0, y=0.0, z=0.0, l=1.0, w=1.0, h=1.0, yaw=0.0):
    return Box3D(center=(x, y, z), dims=(l, w, h), yaw=yaw)


class TestIoU:
    def test_identical_boxes(self):
        box = cube(3, -2, 1, l=4, w=2, h=1.5, yaw=0.7)
        assert np.isclose(iou_3d(box, box), 1.0)
        assert np.isclose(iou_bev(box, box), 1.0)

    def test_disjoint_boxes(self):
        assert iou_3d(cube(0, 0, 0), cube(10, 0, 0)) == 0.0
        assert iou_bev(cube(0, 0, 0), cube(10, 0, 0)) == 0.0

    def test_offset_unit_cubes_one_third(self):
        # overlap 0.5 x 1 x 1 = 0.5; union 1 + 1 - 0.5 = 1.5
        assert np.isclose(iou_3d(cube(0, 0, 0), cube(0.5, 0, 0)), 1.0 / 3.0)

    def test_z_disjoint_bev_identical(self):
        a = cube(0, 0, 0)
        b = cube(0, 0, 5)
        assert iou_3d(a, b) == 0.0
        assert np.isclose(iou_bev(a, b), 1.0)

    def test_rotated_square_octagon_area(self):
        # 2x2 square vs itself rotated 45 deg: intersection is a regular
        # octagon of area 8 (sqrt(2) - 1)
        a = cube(0, 0, 0, l=2, w=2, h=1)
        b = cube(0, 0, 0, l=2, w=2, h=1, yaw=np.pi / 4)
        want = 8.0 * (np.sqrt(2.0) - 1.0)
        assert np.isclose(bev_intersection_area(a, b), want, atol=1e-9)
        assert np.isclose(iou_bev(a, b), want / (8.0 - want), atol=1e-9)

    def test_symmetry(self, rng):
        for _ in range(50):
            a, b = random_box(rng), random_box(rng)
            b = Box3D(center=(a.center[0] + rng.normal(0, 1),
                              a.center[1] + rng.normal(0, 1),
                              a.center[2] + rng.normal(0, 0.3)),
                      dims=b.dims, yaw=b.yaw)
            assert np.isclose(iou_3d(a, b), iou_3d(b, a), atol=1e-12)
            assert np.isclose(iou_bev(a, b), iou_bev(b, a), atol=1e-12)

    def test_bounds(self, rng):
        for _ in range(100):
            a, b = random_box(rng), random_box(rng)
            v = iou_3d(a, b)
            assert 0.0 <= v <= 1.0 + 1e-12

    def test_monte_carlo_volume_oracle(self, rng):
        from corrupt3d.geometry import from_box_local, to_box_local
        for trial in range(5):
            a = Box3D(center=(0, 0, 0),
                      dims=tuple(rng.uniform(1.5, 4.0, 3)),
                      yaw=rng.uniform(-np.pi, np.pi))
            b = Box3D(center=tuple(rng.uniform(-0.8, 0.8, 3)),
                      dims=tuple(rng.uniform(1.5, 4.0, 3)),
                      yaw=rng.uniform(-np.pi, np.pi))
            half_a = np.array([a.l, a.w, a.h]) / 2.0
            local = rng.uniform(-1, 1, size=(200_000, 3)) * half_a
            world = from_box_local(local, a)
            in_b = (np.abs(to_box_local(world, b))
                    <= np.array([b.l, b.w, b.h]) / 2.0).all(axis=1)
            inter = in_b.mean() * a.volume
            union = a.volume + b.volume - inter
            want = inter / union
            assert abs(iou_3d(a, b) - want) < 0.01


def det(frame, score, box):
    return Detection(frame_id=frame, box=box, score=score)


class TestApR40:
    def test_perfect_detections(self):
        gts = {"0": [cube(0, 0, 0), cube(5, 0, 0)], "1": [cube(2, 2, 0)]}
        dets = [det(f, 0.9, b) for f, boxes in gts.items() for b in boxes]
        assert np.isclose(ap_r40(dets, gts, 0.7), 100.0)

    def test_no_detections_zero(self):
        assert ap_r40([], {"0": [cube()]}, 0.7) == 0.0

    def test_empty_ground_truth_raises(self):
        with pytest.raises(EmptyGroundTruth):
            ap_r40([det("0", 0.9, cube())], {"0": []}, 0.7)

    def test_bad_threshold(self):
        with pytest.raises(ValueError):
            ap_r40([], {"0": [cube()]}, 0.0)

    def test_low_scoring_fp_does_not_hurt(self):
        # TP at full recall first; trailing FP cannot lower max precision
        gts = {"0": [cube(0, 0, 0)]}
        dets = [det("0", 0.9, cube(0, 0, 0)), det("0", 0.1, cube(50, 0, 0))]
        assert np.isclose(ap_r40(dets, gts, 0.7), 100.0)

    def test_high_scoring_fp_halves_precision(self):
        gts = {"0": [cube(0, 0, 0)]}
        dets = [det("0", 0.9, cube(50, 0, 0)), det("0", 0.8, cube(0, 0, 0))]
        assert np.isclose(ap_r40(dets, gts, 0.7), 50.0)

    def test_half_recall(self):
        gts = {"0": [cube(0, 0, 0), cube(50, 0, 0)]}
        dets = [det("0", 0.9, cube(0, 0, 0))]
        assert np.isclose(ap_r40(dets, gts, 0.7), 50.0)

    def test_ignored_gt_neither_tp_nor_fp(self):
        gts = {"0": [cube(0, 0, 0)]}
        ignored = {"0": [cube(50, 0, 0)]}
        dets = [det("0", 0.95, cube(50, 0, 0)),   # hits ignored GT only
                det("0", 0.90, cube(0, 0, 0))]
        assert np.isclose(ap_r40(dets, gts, 0.7, ignored=ignored), 100.0)

    def test_double_detection_second_is_fp(self):
        gts = {"0": [cube(0, 0, 0)]}
        dets = [det("0", 0.9, cube(0, 0, 0)), det("0", 0.8, cube(0.01, 0, 0))]
        # second det overlaps the already-matched GT: counted as FP, but the
        # max-precision interpolation keeps AP at 100
        assert np.isclose(ap_r40(dets, gts, 0.7), 100.0)

    def test_threshold_monotonicity(self, rng):
        dets, gts = _random_scenario(rng)
        values = [ap_r40(dets, gts, t) for t in (0.1, 0.3, 0.5, 0.7, 0.9)]
        assert all(a >= b - 1e-9 for a, b in zip(values, values[1:]))

    def test_matches_brute_force_oracle(self, rng):
        for _ in range(10):
            dets, gts = _random_scenario(rng)
            got = ap_r40(dets, gts, 0.5)
            want = _ap_oracle(dets, gts, 0.5)
            assert np.isclose(got, want, atol=1e-9)


def _random_scenario(rng, n_frames=4, n_gt=3):
    gts = {}
    dets = []
    for f in range(n_frames):
        fid = str(f)
        gts[fid] = []
        for _ in range(n_gt):
            box = random_box(rng)
            gts[fid].append(box)
            if rng.random() < 0.8:    # jittered detection
                jitter = rng.normal(0, 0.3, 3)
                dets.append(det(fid, float(rng.random()), Box3D(
                    center=tuple(np.array(box.center) + jitter),
                    dims=box.dims, yaw=box.yaw + rng.normal(0, 0.1))))
        for _ in range(rng.integers(0, 3)):
            dets.append(det(fid, float(rng.random()), random_box(rng)))
    return dets, gts


def _ap_oracle(dets, gts, thr):
    """Independent AP computation: explicit greedy matching, then a direct
    scan of the interpolated precision/recall curve."""
    n_gt = sum(len(v) for v in gts.values())
    order = sorted(range(len(dets)),
                   key=lambda i: (-dets[i].score, dets[i].frame_id, i))
    used = {fid: set() for fid in gts}
    flags = []   # True = TP, False = FP
    for i in order:
        d = dets[i]
        candidates = [(iou_3d(d.box, g), j)
                      for j, g in enumerate(gts.get(d.frame_id, []))
                      if j not in used.get(d.frame_id, set())
                      and iou_3d(d.box, g) >= thr]
        if candidates:
            _, j = max(candidates)
            used[d.frame_id].add(j)
            flags.append(True)
        else:
            flags.append(False)
    prec, rec = [], []
    tp = fp = 0
    for flag in flags:
        tp += flag
        fp += not flag
        prec.append(tp / (tp + fp))
        rec.append(tp / n_gt)
    total = 0.0
    for k in range(1, 41):
        r = k / 40.0
        best = max((p for p, rr in zip(prec, rec) if rr >= r - 1e-12),
                   default=0.0)
        total += best
    return total / 40.0 * 100.0


class TestAggregate:
    def fixture_table(self):
        corruptions = ["fog", "snow"]
        table = {}
        value = 60.0
        for c in corruptions:
            for s in range(1, 6):
                table[(c, s)] = value
                value -= 2.0
        return table

    def test_hand_computed_means(self):
        table = self.fixture_table()
        report = aggregate(table, ap_clean=80.0)
        assert np.isclose(report.ap_per_corruption["fog"],
                          np.mean([60, 58, 56, 54, 52]))
        assert np.isclose(report.ap_per_corruption["snow"],
                          np.mean([50, 48, 46, 44, 42]))
        assert np.isclose(report.ap_cor, 51.0)
        assert np.isclose(report.rce, (80.0 - 51.0) / 80.0)
        assert np.isclose(report.rce_cells[("fog", 1)], (80 - 60) / 80)

    def test_permutation_invariance(self):
        table = self.fixture_table()
        shuffled = dict(reversed(list(table.items())))
        a = aggregate(table, 80.0)
        b = aggregate(shuffled, 80.0)
        assert np.isclose(a.ap_cor, b.ap_cor)
        assert np.isclose(a.rce, b.rce)

    def test_missing_cell(self):
        table = self.fixture_table()
        del table[("snow", 4)]
        with pytest.raises(MissingCell):
            aggregate(table, 80.0)

    def test_empty_table(self):
        with pytest.raises(MissingCell):
            aggregate({}, 80.0)

    def test_zero_clean_ap(self):
        with pytest.raises(ZeroCleanAP):
            aggregate(self.fixture_table(), 0.0)

    def test_explicit_corruption_subset(self):
        report = aggregate(self.fixture_table(), 80.0, corruptions=["fog"])
        assert np.isclose(report.ap_cor, 56.0)

    def test_json_round_trip(self):
        import json
        report = aggregate(self.fixture_table(), 80.0)
        payload = json.loads(report.to_json())
        assert payload["ap_clean"] == 80.0
        assert np.isclose(payload["ap_cor"], 51.0)
        assert np.isclose(payload["corruptions"]["fog"]["severities"]["3"], 56.0)

    def test_csv_contains_rows(self):
        report = aggregate(self.fixture_table(), 80.0)
        lines = report.to_csv().strip().splitlines()
        assert lines[0].startswith("corruption,severity_1")
        assert any(line.startswith("fog,") for line in lines)
        assert any(line.startswith("RCE,") for line in lines)

    def test_table_renders(self):
        text = aggregate(self.fixture_table(), 80.0).to_table()
        assert "AP_cor" in text and "RCE" in text and "fog" in text
