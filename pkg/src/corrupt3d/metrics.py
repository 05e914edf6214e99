"""Robustness metrics: rotated-box IoU, AP@R40, and corruption aggregation.

BEV IoU clips one yaw-rotated rectangle against the other with
Sutherland-Hodgman; 3D IoU combines the BEV intersection area with the
exact z-interval overlap. AP follows the 40-recall-position protocol with
greedy per-frame matching; "ignored" ground truth (outside the evaluated
difficulty) counts neither as TP nor FP.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

import numpy as np

from .errors import EmptyGroundTruth, MissingCell, ZeroCleanAP
from .types import Box3D

N_RECALL_POSITIONS = 40
SEVERITIES = (1, 2, 3, 4, 5)


# ---------------------------------------------------------------------------
# rotated IoU
# ---------------------------------------------------------------------------

def _bev_rect(box: Box3D) -> np.ndarray:
    """Counter-clockwise 2D footprint corners of a box."""
    c, s = np.cos(box.yaw), np.sin(box.yaw)
    half = np.array([[+box.l, +box.w], [-box.l, +box.w],
                     [-box.l, -box.w], [+box.l, -box.w]]) / 2.0
    rot = np.array([[c, -s], [s, c]])
    return half @ rot.T + np.asarray(box.center[:2])


def _clip_polygon(poly: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Keep the part of `poly` left of the directed edge a -> b."""
    if len(poly) == 0:
        return poly
    edge = b - a
    rel = poly - a
    side = edge[0] * rel[:, 1] - edge[1] * rel[:, 0]
    out = []
    n = len(poly)
    for i in range(n):
        j = (i + 1) % n
        if side[i] >= 0:
            out.append(poly[i])
        if (side[i] >= 0) != (side[j] >= 0):
            t = side[i] / (side[i] - side[j])
            out.append(poly[i] + t * (poly[j] - poly[i]))
    return np.array(out) if out else np.zeros((0, 2))


def _polygon_area(poly: np.ndarray) -> float:
    if len(poly) < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def bev_intersection_area(a: Box3D, b: Box3D) -> float:
    poly = _bev_rect(a)
    clip = _bev_rect(b)
    for i in range(4):
        poly = _clip_polygon(poly, clip[i], clip[(i + 1) % 4])
        if len(poly) == 0:
            return 0.0
    return _polygon_area(poly)


def iou_bev(a: Box3D, b: Box3D) -> float:
    inter = bev_intersection_area(a, b)
    union = a.l * a.w + b.l * b.w - inter
    return inter / union if union > 0 else 0.0


def iou_3d(a: Box3D, b: Box3D) -> float:
    z_lo = max(a.center[2] - a.h / 2.0, b.center[2] - b.h / 2.0)
    z_hi = min(a.center[2] + a.h / 2.0, b.center[2] + b.h / 2.0)
    z_overlap = max(0.0, z_hi - z_lo)
    inter = bev_intersection_area(a, b) * z_overlap
    union = a.volume + b.volume - inter
    return inter / union if union > 0 else 0.0


# ---------------------------------------------------------------------------
# AP with 40 recall positions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Detection:
    frame_id: str
    box: Box3D
    score: float

    def __post_init__(self):
        if not np.isfinite(self.score):
            raise ValueError("detection score must be finite")


def _match_detections(dets, gts, ignored, iou_threshold, iou_fn):
    """Greedy per-frame matching in descending score order.

    Returns (tp, fp) boolean arrays aligned with the sorted detections;
    a detection matching only ignored GT sets neither flag.
    """
    order = sorted(range(len(dets)),
                   key=lambda i: (-dets[i].score, dets[i].frame_id, i))
    gt_used = {fid: np.zeros(len(boxes), bool) for fid, boxes in gts.items()}
    ign_used = {fid: np.zeros(len(boxes), bool) for fid, boxes in ignored.items()}
    tp = np.zeros(len(dets), bool)
    fp = np.zeros(len(dets), bool)
    for rank, i in enumerate(order):
        det = dets[i]
        best_iou, best_j = 0.0, -1
        for j, gt in enumerate(gts.get(det.frame_id, [])):
            if gt_used[det.frame_id][j]:
                continue
            v = iou_fn(det.box, gt)
            if v >= iou_threshold and v > best_iou:
                best_iou, best_j = v, j
        if best_j >= 0:
            gt_used[det.frame_id][best_j] = True
            tp[rank] = True
            continue
        hit_ignored = False
        for j, gt in enumerate(ignored.get(det.frame_id, [])):
            if ign_used[det.frame_id][j]:
                continue
            if iou_fn(det.box, gt) >= iou_threshold:
                ign_used[det.frame_id][j] = True
                hit_ignored = True
                break
        if not hit_ignored:
            fp[rank] = True
    return tp, fp


def ap_r40(dets, gts, iou_threshold: float, iou_fn=iou_3d,
           ignored=None) -> float:
    """Average precision (percent) sampled at 40 recall positions.

    dets: list of Detection (one class). gts: dict frame_id -> list of
    Box3D counted toward recall. ignored: optional dict of GT boxes that
    are neither rewarded nor penalized.
    """
    if not 0.0 < iou_threshold < 1.0:
        raise ValueError("iou_threshold must be in (0, 1)")
    ignored = ignored or {}
    n_gt = sum(len(v) for v in gts.values())
    if n_gt == 0:
        raise EmptyGroundTruth("AP undefined without ground-truth boxes")
    if not dets:
        return 0.0
    tp, fp = _match_detections(dets, gts, ignored, iou_threshold, iou_fn)
    keep = tp | fp            # drop ignored-matched detections from the curve
    cum_tp = np.cumsum(tp[keep])
    cum_fp = np.cumsum(fp[keep])
    recall = cum_tp / n_gt
    with np.errstate(invalid="ignore"):
        precision = cum_tp / np.maximum(cum_tp + cum_fp, 1)
    total = 0.0
    for k in range(1, N_RECALL_POSITIONS + 1):
        r = k / N_RECALL_POSITIONS
        at_least = recall >= r - 1e-12
        total += float(precision[at_least].max()) if at_least.any() else 0.0
    return total / N_RECALL_POSITIONS * 100.0


# ---------------------------------------------------------------------------
# aggregation (AP_cor and RCE)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MetricsReport:
    ap_clean: float
    ap_cells: dict                 # (corruption, severity) -> AP
    ap_per_corruption: dict        # corruption -> mean AP over severities
    ap_cor: float
    rce_cells: dict                # (corruption, severity) -> RCE fraction
    rce: float
    severities: tuple = SEVERITIES

    def to_json(self) -> str:
        payload = {
            "ap_clean": self.ap_clean,
            "ap_cor": self.ap_cor,
            "rce": self.rce,
            "corruptions": {
                c: {
                    "mean": self.ap_per_corruption[c],
                    "severities": {str(s): self.ap_cells[(c, s)]
                                   for s in self.severities
                                   if (c, s) in self.ap_cells},
                    "rce": {str(s): self.rce_cells[(c, s)]
                            for s in self.severities
                            if (c, s) in self.rce_cells},
                }
                for c in self.ap_per_corruption
            },
        }
        return json.dumps(payload, indent=2)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["corruption"] + [f"severity_{s}" for s in self.severities]
                        + ["mean"])
        for c in self.ap_per_corruption:
            row = [c] + [f"{self.ap_cells[(c, s)]:.4f}"
                         for s in self.severities if (c, s) in self.ap_cells]
            row.append(f"{self.ap_per_corruption[c]:.4f}")
            writer.writerow(row)
        writer.writerow(["AP_clean", f"{self.ap_clean:.4f}"])
        writer.writerow(["AP_cor", f"{self.ap_cor:.4f}"])
        writer.writerow(["RCE", f"{self.rce:.6f}"])
        return buf.getvalue()

    def to_table(self) -> str:
        width = max((len(c) for c in self.ap_per_corruption), default=10) + 2
        lines = [f"{'Corruption':<{width}}" +
                 "".join(f"  S{s:<6}" for s in self.severities) + "  Mean"]
        for c in self.ap_per_corruption:
            cells = "".join(f"  {self.ap_cells[(c, s)]:<7.2f}"
                            for s in self.severities if (c, s) in self.ap_cells)
            lines.append(f"{c:<{width}}{cells}  {self.ap_per_corruption[c]:.2f}")
        lines.append("")
        lines.append(f"AP_clean = {self.ap_clean:.2f}")
        lines.append(f"AP_cor   = {self.ap_cor:.2f}")
        lines.append(f"RCE      = {100.0 * self.rce:.2f}%")
        return "\n".join(lines)


def aggregate(ap_table: dict, ap_clean: float, corruptions=None,
              severities=SEVERITIES) -> MetricsReport:
    """Fold per-(corruption, severity) AP into AP_cor and RCE.

    ap_table maps (corruption, severity) to AP percent. The corruption set
    defaults to the one present in the table; every corruption must cover
    all requested severities.
    """
    if corruptions is None:
        corruptions = sorted({c for c, _ in ap_table})
    if not corruptions:
        raise MissingCell("no corruptions in AP table")
    missing = [(c, s) for c in corruptions for s in severities
               if (c, s) not in ap_table]
    if missing:
        raise MissingCell(f"missing AP cells: {missing}")
    per_corruption = {
        c: sum(ap_table[(c, s)] for s in severities) / len(severities)
        for c in corruptions
    }
    ap_cor = sum(per_corruption.values()) / len(corruptions)
    if ap_clean == 0.0:
        raise ZeroCleanAP("RCE undefined for AP_clean = 0")
    rce_cells = {(c, s): (ap_clean - ap_table[(c, s)]) / ap_clean
                 for c in corruptions for s in severities}
    rce = (ap_clean - ap_cor) / ap_clean
    return MetricsReport(ap_clean=ap_clean,
                         ap_cells={(c, s): ap_table[(c, s)]
                                   for c in corruptions for s in severities},
                         ap_per_corruption=per_corruption,
                         ap_cor=ap_cor, rce_cells=rce_cells, rce=rce,
                         severities=tuple(severities))
