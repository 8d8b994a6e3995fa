"""Polygon-level detection evaluation.

Greedy one-to-one IoU matching between detection boundaries and ground-
truth polygons, with difficult ground truth treated as don't-care: a
detection whose only qualifying overlap is with a difficult region neither
counts for nor against precision, and difficult instances never enter the
recall denominator. Per-image reports micro-average by summing counts.
"""

import json
from dataclasses import dataclass

from .geometry import Polygon, polygon_iou
from .reconstruction import DetectionResult


@dataclass
class GroundTruthInstance:
    polygon: Polygon
    difficult: bool = False


@dataclass(frozen=True)
class EvalReport:
    precision: float
    recall: float
    f_measure: float
    matched: int
    num_dets: int
    num_gts: int
    notes: tuple = ()

    def to_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f_measure": self.f_measure,
            "matched": self.matched,
            "num_dets": self.num_dets,
            "num_gts": self.num_gts,
        }


def _match_with_dont_care(dets, gts, iou_threshold):
    """(matches, ignored_det_indices): greedy one-to-one matching against
    non-difficult ground truth, then don't-care absorption of leftover
    detections by difficult ground truth."""
    regular = [(i, g) for i, g in enumerate(gts) if not g.difficult]
    difficult = [(i, g) for i, g in enumerate(gts) if g.difficult]
    candidates = []
    for d, det in enumerate(dets):
        for g, gt in regular:
            iou = polygon_iou(det.boundary, gt.polygon)
            if iou >= iou_threshold:
                candidates.append((iou, d, g))
    candidates.sort(key=lambda c: (-c[0], c[1], c[2]))
    used_d: set[int] = set()
    used_g: set[int] = set()
    matches = []
    for iou, d, g in candidates:
        if d in used_d or g in used_g:
            continue
        used_d.add(d)
        used_g.add(g)
        matches.append((d, g))
    ignored = {
        d for d, det in enumerate(dets)
        if d not in used_d and any(
            polygon_iou(det.boundary, gt.polygon) >= iou_threshold
            for _, gt in difficult)
    }
    return sorted(matches), ignored


def match(dets, gts, iou_threshold: float = 0.5) -> list[tuple[int, int]]:
    """One-to-one (detection index, ground-truth index) pairs, chosen
    greedily in descending IoU order among pairs reaching the threshold."""
    if not 0.0 < iou_threshold < 1.0:
        raise ValueError("iou_threshold must lie in (0, 1)")
    matches, _ = _match_with_dont_care(dets, gts, iou_threshold)
    return matches


def evaluate(dets, gts, iou_threshold: float = 0.5) -> EvalReport:
    """Precision, recall and F-measure of detections against ground truth.

    Precision counts only detections not absorbed by don't-care regions;
    recall is over non-difficult ground truth; zero denominators define the
    metric as 0 and are flagged in the report notes.
    """
    if not 0.0 < iou_threshold < 1.0:
        raise ValueError("iou_threshold must lie in (0, 1)")
    matches, ignored = _match_with_dont_care(dets, gts, iou_threshold)
    matched = len(matches)
    num_dets = len(dets) - len(ignored)
    num_gts = sum(1 for g in gts if not g.difficult)
    return _report_from_counts(matched, num_dets, num_gts)


def _report_from_counts(matched: int, num_dets: int, num_gts: int) -> EvalReport:
    notes = []
    if num_dets > 0:
        precision = matched / num_dets
    else:
        precision, notes = 0.0, notes + ["no counted detections: precision defined as 0"]
    if num_gts > 0:
        recall = matched / num_gts
    else:
        recall, notes = 0.0, notes + ["no countable ground truth: recall defined as 0"]
    if precision + recall > 0.0:
        f_measure = 2.0 * precision * recall / (precision + recall)
    else:
        f_measure = 0.0
        notes = notes + ["precision + recall is 0: f-measure defined as 0"]
    return EvalReport(precision, recall, f_measure, matched, num_dets, num_gts,
                      tuple(notes))


def combine_reports(reports) -> EvalReport:
    """Micro-average per-image reports by summing matched/detection/ground-
    truth counts before recomputing the quotients."""
    matched = sum(r.matched for r in reports)
    num_dets = sum(r.num_dets for r in reports)
    num_gts = sum(r.num_gts for r in reports)
    return _report_from_counts(matched, num_dets, num_gts)


# ---------------------------------------------------------------------------
# ground-truth and report files

@dataclass
class GroundTruthFile:
    image_id: str
    instances: list[GroundTruthInstance]


def dumps_gts(gf: GroundTruthFile) -> str:
    data = {
        "image_id": gf.image_id,
        "instances": [
            {
                "polygon": [[v.x, v.y] for v in inst.polygon.vertices],
                "difficult": inst.difficult,
            }
            for inst in gf.instances
        ],
    }
    return json.dumps(data, ensure_ascii=False, separators=(",", ":")) + "\n"


def loads_gts(text: str) -> GroundTruthFile:
    def reject(name):
        raise ValueError(f"non-finite JSON literal {name!r} is not allowed")
    data = json.loads(text, parse_constant=reject)
    instances = [
        GroundTruthInstance(
            polygon=Polygon([(float(x), float(y)) for x, y in entry["polygon"]]),
            difficult=bool(entry["difficult"]),
        )
        for entry in data["instances"]
    ]
    return GroundTruthFile(image_id=str(data["image_id"]), instances=instances)


def write_gts(path, gf: GroundTruthFile) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(dumps_gts(gf))


def read_gts(path) -> GroundTruthFile:
    with open(path, encoding="utf-8") as f:
        return loads_gts(f.read())


def dumps_report(report: EvalReport) -> str:
    return json.dumps(report.to_dict(), ensure_ascii=False,
                      separators=(",", ":")) + "\n"


def write_report(path, report: EvalReport) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(dumps_report(report))
