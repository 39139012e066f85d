"""KITTI-style detection evaluation: rotated IoU, greedy score-ordered
matching with don't-care regions, 40-point interpolated AP, and AOS."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Box3D, rect_intersection_area
from .labels import EASY, HARD, IGNORED, MODERATE, LabelRecord, assign_difficulty

N_RECALL_POSITIONS = 40
DIFFICULTIES = (EASY, MODERATE, HARD)
DIFFICULTY_LABELS = ("Easy", "Moderate", "Hard")
METRIC_FAMILIES = ("3d", "bev", "2d", "aos")

DEFAULT_IOU_THRESHOLDS = {"3d": 0.7, "bev": 0.7, "2d": 0.7, "aos": 0.7}


# ---------------------------------------------------------------------------
# IoU
# ---------------------------------------------------------------------------

def iou_bev(a: Box3D, b: Box3D) -> float:
    """Rotated-rectangle IoU of the ground-plane footprints."""
    inter = rect_intersection_area(a.bev_corners(), b.bev_corners())
    area_a = a.dims[0] * a.dims[1]
    area_b = b.dims[0] * b.dims[1]
    union = area_a + area_b - inter
    return inter / union if union > 0 else 0.0


def iou_3d(a: Box3D, b: Box3D) -> float:
    """BEV intersection times vertical overlap, over the volume union."""
    inter_area = rect_intersection_area(a.bev_corners(), b.bev_corners())
    za0, za1 = a.center[2] - a.dims[2] / 2.0, a.center[2] + a.dims[2] / 2.0
    zb0, zb1 = b.center[2] - b.dims[2] / 2.0, b.center[2] + b.dims[2] / 2.0
    overlap = max(0.0, min(za1, zb1) - max(za0, zb0))
    inter = inter_area * overlap
    vol_a = float(np.prod(a.dims))
    vol_b = float(np.prod(b.dims))
    union = vol_a + vol_b - inter
    return inter / union if union > 0 else 0.0


def iou_2d(a, b) -> float:
    """Axis-aligned rect IoU; rects are (left, top, right, bottom)."""
    il = max(a[0], b[0])
    it = max(a[1], b[1])
    ir = min(a[2], b[2])
    ib = min(a[3], b[3])
    inter = max(ir - il, 0.0) * max(ib - it, 0.0)
    area_a = max(a[2] - a[0], 0.0) * max(a[3] - a[1], 0.0)
    area_b = max(b[2] - b[0], 0.0) * max(b[3] - b[1], 0.0)
    union = area_a + area_b - inter
    return inter / union if union > 0 else 0.0


def _label_box_bev(rec: LabelRecord) -> Box3D:
    """Camera-frame label as a Box3D in (x, z, -y) space so the shared
    rotated-rect code sees the ground plane as the first two axes."""
    h, w, l = rec.dims
    x, y, z = rec.location
    return Box3D(center=np.array([x, z, -(y - h / 2.0)]), dims=np.array([l, w, h]),
                 yaw=-rec.rotation_y)


def label_iou(a: LabelRecord, b: LabelRecord, family: str) -> float:
    if family == "3d":
        return iou_3d(_label_box_bev(a), _label_box_bev(b))
    if family == "bev":
        return iou_bev(_label_box_bev(a), _label_box_bev(b))
    if family in ("2d", "aos"):
        return iou_2d(a.bbox2d, b.bbox2d)
    raise ValueError(f"unknown metric family {family!r}")


# ---------------------------------------------------------------------------
# Matching
# ---------------------------------------------------------------------------

@dataclass
class FrameMatch:
    tp: np.ndarray  # per-detection (score order) True for TP
    fp: np.ndarray  # per-detection True for FP (don't-care matches are neither)
    scores: np.ndarray
    similarity: np.ndarray  # orientation similarity per detection (TP only, else 0)
    num_valid_gt: int


def match_frame(dets: list[LabelRecord], gts: list[LabelRecord],
                iou_threshold: float, difficulty: int, family: str = "3d") -> FrameMatch:
    """Greedy matching in descending score order.

    GTs of the evaluated difficulty pool (category <= difficulty) are valid;
    harder or Ignored GTs (and DontCare regions) are don't-care: matching
    them yields neither TP nor FP.
    """
    order = np.argsort([-d.score for d in dets], kind="stable")
    gt_valid = []
    for g in gts:
        if g.type == "DontCare":
            gt_valid.append(False)
        else:
            gt_valid.append(assign_difficulty(g) <= difficulty)
    claimed = [False] * len(gts)

    n = len(dets)
    tp = np.zeros(n, dtype=bool)
    fp = np.zeros(n, dtype=bool)
    sim = np.zeros(n)
    scores = np.array([dets[i].score for i in order], dtype=float)

    for rank, di in enumerate(order):
        det = dets[di]
        best_iou = -1.0
        best_gt = -1
        best_dontcare = -1
        best_dontcare_iou = -1.0
        for gi, gt in enumerate(gts):
            if claimed[gi]:
                continue
            iou = label_iou(det, gt, family)
            if iou < iou_threshold:
                continue
            if gt_valid[gi]:
                if iou > best_iou:
                    best_iou = iou
                    best_gt = gi
            elif iou > best_dontcare_iou:
                best_dontcare_iou = iou
                best_dontcare = gi
        if best_gt >= 0:
            claimed[best_gt] = True
            tp[rank] = True
            delta = det.alpha - gts[best_gt].alpha
            sim[rank] = (1.0 + math.cos(delta)) / 2.0
        elif best_dontcare >= 0:
            claimed[best_dontcare] = True  # neither TP nor FP
        else:
            fp[rank] = True
    num_valid = int(sum(gt_valid))
    return FrameMatch(tp=tp, fp=fp, scores=scores, similarity=sim, num_valid_gt=num_valid)


# ---------------------------------------------------------------------------
# AP / AOS aggregation
# ---------------------------------------------------------------------------

def _interpolated_average(recall: np.ndarray, quality: np.ndarray) -> float:
    """Mean of max-quality-at-recall>=r over the 40 recall sample points."""
    total = 0.0
    for k in range(1, N_RECALL_POSITIONS + 1):
        r = k / N_RECALL_POSITIONS
        mask = recall >= r - 1e-12
        total += float(quality[mask].max()) if mask.any() else 0.0
    return total / N_RECALL_POSITIONS


def ap40(tp: np.ndarray, fp: np.ndarray, scores: np.ndarray, total_gt: int) -> float | None:
    """AP at 40 recall positions with PASCAL max-interpolation.

    Detections neither TP nor FP (don't-care matches) are excluded from the
    precision denominator. Returns None when there is no ground truth.
    """
    if total_gt == 0:
        return None
    order = np.argsort(-scores, kind="stable")
    tp = np.asarray(tp, dtype=bool)[order]
    fp = np.asarray(fp, dtype=bool)[order]
    counted = tp | fp
    cum_tp = np.cumsum(tp)
    cum_counted = np.cumsum(counted)
    valid = cum_counted > 0
    recall = cum_tp[valid] / total_gt
    precision = cum_tp[valid] / cum_counted[valid]
    if len(recall) == 0:
        return 0.0
    return _interpolated_average(recall, precision)


def aos(tp: np.ndarray, fp: np.ndarray, scores: np.ndarray, similarity: np.ndarray,
        total_gt: int) -> float | None:
    """Average orientation similarity through the same 40-point interpolation."""
    if total_gt == 0:
        return None
    order = np.argsort(-scores, kind="stable")
    tp = np.asarray(tp, dtype=bool)[order]
    fp = np.asarray(fp, dtype=bool)[order]
    sim = np.asarray(similarity, dtype=float)[order]
    counted = tp | fp
    cum_tp = np.cumsum(tp)
    cum_counted = np.cumsum(counted)
    cum_sim = np.cumsum(np.where(tp, sim, 0.0))
    valid = cum_counted > 0
    recall = cum_tp[valid] / total_gt
    quality = cum_sim[valid] / cum_counted[valid]
    if len(recall) == 0:
        return 0.0
    return _interpolated_average(recall, quality)


# ---------------------------------------------------------------------------
# Full evaluation
# ---------------------------------------------------------------------------

@dataclass
class EvalReport:
    """AP (percent) per metric family and difficulty; None where undefined."""

    values: dict  # {family: {difficulty_label: float | None}}

    def cell(self, family: str, difficulty: str) -> float | None:
        return self.values[family][difficulty]

    def to_text(self) -> str:
        header = f"{'':12s}" + "".join(f"{d:>10s}" for d in DIFFICULTY_LABELS)
        lines = [header]
        for family in METRIC_FAMILIES:
            row = f"{family.upper():12s}"
            for d in DIFFICULTY_LABELS:
                v = self.values[family][d]
                row += f"{v:10.2f}" if v is not None else f"{'-':>10s}"
            lines.append(row)
        return "\n".join(lines)

    def to_csv(self) -> str:
        lines = ["metric," + ",".join(d.lower() for d in DIFFICULTY_LABELS)]
        for family in METRIC_FAMILIES:
            cells = []
            for d in DIFFICULTY_LABELS:
                v = self.values[family][d]
                cells.append(f"{v:.4f}" if v is not None else "")
            lines.append(family + "," + ",".join(cells))
        return "\n".join(lines) + "\n"


def evaluate(dets: dict[int, list[LabelRecord]], gts: dict[int, list[LabelRecord]],
             iou_thresholds: dict[str, float] | None = None,
             class_name: str = "Car") -> EvalReport:
    """Per-difficulty AP40 for 3D / BEV / 2D plus AOS over aligned frames."""
    thresholds = dict(DEFAULT_IOU_THRESHOLDS)
    if iou_thresholds:
        thresholds.update(iou_thresholds)
    missing = sorted(set(gts) ^ set(dets))
    if missing:
        raise ValueError(f"mismatched frame ids between detections and ground truth: {missing}")
    for frame in dets.values():
        for d in frame:
            if d.score is None or not math.isfinite(d.score):
                raise ValueError("every detection needs a finite score")

    values: dict = {f: {} for f in METRIC_FAMILIES}
    for family in METRIC_FAMILIES:
        for difficulty, dlabel in zip(DIFFICULTIES, DIFFICULTY_LABELS):
            tps, fps, all_scores, sims = [], [], [], []
            total_gt = 0
            for fid in sorted(gts):
                frame_dets = [d for d in dets[fid] if d.type == class_name]
                frame_gts = [g for g in gts[fid]
                             if g.type == class_name or g.type == "DontCare"]
                m = match_frame(frame_dets, frame_gts, thresholds[family],
                                difficulty, family=family)
                tps.append(m.tp)
                fps.append(m.fp)
                all_scores.append(m.scores)
                sims.append(m.similarity)
                total_gt += m.num_valid_gt
            tp = np.concatenate(tps) if tps else np.zeros(0, dtype=bool)
            fp = np.concatenate(fps) if fps else np.zeros(0, dtype=bool)
            sc = np.concatenate(all_scores) if all_scores else np.zeros(0)
            sm = np.concatenate(sims) if sims else np.zeros(0)
            if family == "aos":
                v = aos(tp, fp, sc, sm, total_gt)
            else:
                v = ap40(tp, fp, sc, total_gt)
            values[family][dlabel] = None if v is None else 100.0 * v
    return EvalReport(values=values)
