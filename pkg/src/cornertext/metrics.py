"""Detection quality metrics: greedy IoU matching and precision/recall/F."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .geometry import RotatedRect, rotated_iou
from .pipeline import Detection


@dataclass
class Assignment:
    """One image's matching outcome: (det_index, gt_index, iou) triples."""

    pairs: list[tuple[int, int, float]]
    n_detections: int
    n_ground_truth: int

    @property
    def true_positives(self) -> int:
        return len(self.pairs)

    @property
    def false_positives(self) -> int:
        return self.n_detections - len(self.pairs)

    @property
    def false_negatives(self) -> int:
        return self.n_ground_truth - len(self.pairs)


def match_detections(detections: Sequence[Detection], ground_truth: Sequence[RotatedRect],
                     iou_threshold: float = 0.5) -> Assignment:
    """Greedy one-to-one matching by descending detection score.

    Each detection may claim at most one still-unmatched ground-truth box,
    the one it overlaps most at rotated IoU >= threshold. Score ties break
    lexicographically on corner coordinates so the outcome is order-free.
    """
    order = sorted(range(len(detections)),
                   key=lambda i: (-detections[i].score,
                                  tuple(c for p in detections[i].rect.corners for c in p)))
    taken = [False] * len(ground_truth)
    pairs: list[tuple[int, int, float]] = []
    for di in order:
        best_j, best_iou = -1, 0.0
        for j, gt in enumerate(ground_truth):
            if taken[j]:
                continue
            iou = rotated_iou(detections[di].rect, gt)
            if iou >= iou_threshold and iou > best_iou:
                best_j, best_iou = j, iou
        if best_j >= 0:
            taken[best_j] = True
            pairs.append((di, best_j, best_iou))
    return Assignment(pairs, len(detections), len(ground_truth))


@dataclass
class EvalReport:
    true_positives: int
    false_positives: int
    false_negatives: int
    precision: float
    recall: float
    f_measure: float
    per_image: list[dict] = field(default_factory=list)


def report(assignments: Assignment | Sequence[Assignment]) -> EvalReport:
    """Aggregate assignments into precision/recall/F.

    Precision with zero detections is defined as 0 so dashboards stay
    monotone; F is the harmonic mean, 0 when P + R = 0.
    """
    if isinstance(assignments, Assignment):
        assignments = [assignments]
    tp = sum(a.true_positives for a in assignments)
    fp = sum(a.false_positives for a in assignments)
    fn = sum(a.false_negatives for a in assignments)
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    f = 2.0 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    per_image = []
    for idx, a in enumerate(assignments):
        p = a.true_positives / a.n_detections if a.n_detections else 0.0
        r = a.true_positives / a.n_ground_truth if a.n_ground_truth else 0.0
        per_image.append({
            "image": idx,
            "true_positives": a.true_positives,
            "false_positives": a.false_positives,
            "false_negatives": a.false_negatives,
            "precision": p,
            "recall": r,
            "f_measure": 2.0 * p * r / (p + r) if p + r > 0 else 0.0,
        })
    return EvalReport(tp, fp, fn, precision, recall, f, per_image)
