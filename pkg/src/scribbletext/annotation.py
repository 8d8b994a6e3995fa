"""Scribble-line annotation data model.

An image annotation is a list of instances, each an ordered run of points
clicked along a text instance's centerline. Straight instances carry two
points; curved ones carry one point per bend. Hard-to-read regions are
flagged difficult and keep their original polygon coordinates in the same
points field; they contribute only to ignore masks downstream.

This module owns the annotation file format, validation, derivation of
scribbles from polygon ground truth (for synthetic corpora and format
conversion), coordinate-noise injection, labeling-cost metrics, and
rasterization of annotations into training-target masks.
"""

import json
import math
from dataclasses import dataclass, replace

import numpy as np
import shapely
import shapely.affinity

from .geometry import (
    BinaryMask,
    Point2D,
    Polygon,
    Polyline,
    _as_points,
    rasterize_polygon,
    rasterize_polyline,
    to_shapely,
)

ANNOTATION_FORMAT_VERSION = "1.0"


@dataclass
class ScribbleInstance:
    """One annotated text instance.

    Construction is permissive so that files containing rule violations can
    still be loaded and reported on; validate() is the arbiter.
    """

    id: int
    points: list[Point2D]
    difficult: bool = False
    transcript: str | None = None
    label_time_ms: int | None = None

    def __post_init__(self):
        self.id = int(self.id)
        self.points = _as_points(self.points)
        self.difficult = bool(self.difficult)
        if self.label_time_ms is not None:
            self.label_time_ms = int(self.label_time_ms)


@dataclass
class ImageAnnotation:
    image_id: str
    width: int
    height: int
    instances: list[ScribbleInstance]

    def __post_init__(self):
        self.image_id = str(self.image_id)
        self.width = int(self.width)
        self.height = int(self.height)


@dataclass(frozen=True)
class CostReport:
    """Labeling-cost summary; averages are None when no instance qualifies."""

    avg_points_per_instance: float | None
    avg_label_time_ms: float | None
    instance_count: int

    def to_dict(self) -> dict:
        return {
            "avg_points_per_instance": self.avg_points_per_instance,
            "avg_label_time_ms": self.avg_label_time_ms,
            "instance_count": self.instance_count,
        }


@dataclass(frozen=True)
class Violation:
    """A single rule breach found by validate()."""

    instance_id: int | None
    rule: str
    detail: str

    def __str__(self):
        where = "image" if self.instance_id is None else f"instance {self.instance_id}"
        return f"{where}: {self.rule}: {self.detail}"


def validate(annotation: ImageAnnotation) -> list[Violation]:
    """Check every annotation invariant; violations are data, not errors."""
    out: list[Violation] = []
    if annotation.width <= 0 or annotation.height <= 0:
        out.append(Violation(None, "image-size",
                             f"width/height must be positive, got "
                             f"{annotation.width}x{annotation.height}"))
    seen: set[int] = set()
    for inst in annotation.instances:
        if inst.id in seen:
            out.append(Violation(inst.id, "duplicate-id",
                                 "instance id reused within the image"))
        seen.add(inst.id)
        if not inst.difficult and len(inst.points) < 2:
            out.append(Violation(inst.id, "min-points",
                                 f"non-difficult instance has {len(inst.points)} "
                                 f"point(s); at least 2 required"))
        for p in inst.points:
            if not (0.0 <= p.x <= annotation.width and 0.0 <= p.y <= annotation.height):
                out.append(Violation(inst.id, "out-of-bounds",
                                     f"point ({p.x}, {p.y}) outside "
                                     f"[0, {annotation.width}] x [0, {annotation.height}]"))
        if inst.label_time_ms is not None and inst.label_time_ms < 0:
            out.append(Violation(inst.id, "negative-label-time",
                                 f"label_time_ms is {inst.label_time_ms}"))
    return out


# ---------------------------------------------------------------------------
# scribble derivation from polygon ground truth

def _long_axis_angle(geom) -> float:
    """Orientation of the longest side of the minimum rotated rectangle,
    normalized to (-pi/2, pi/2]; exact ties resolve to horizontal."""
    rect = geom.minimum_rotated_rectangle
    if rect.geom_type != "Polygon":
        return 0.0
    c = list(rect.exterior.coords)
    e1 = math.hypot(c[1][0] - c[0][0], c[1][1] - c[0][1])
    e2 = math.hypot(c[2][0] - c[1][0], c[2][1] - c[1][1])
    if math.isclose(e1, e2, rel_tol=1e-9, abs_tol=1e-12):
        return 0.0
    if e1 >= e2:
        angle = math.atan2(c[1][1] - c[0][1], c[1][0] - c[0][0])
    else:
        angle = math.atan2(c[2][1] - c[1][1], c[2][0] - c[1][0])
    if angle <= -math.pi / 2:
        angle += math.pi
    elif angle > math.pi / 2:
        angle -= math.pi
    return angle


def derive_scribble(gt_polygon: Polygon, n_points: int) -> Polyline:
    """Estimated centerline of a polygon: n_points samples at evenly spaced
    stations along the long axis, each the midpoint of the widest cross
    slice, all strictly inside the polygon.

    For an axis-aligned rectangle and n_points=2 this yields the points at
    25% and 75% of the width on the horizontal midline.
    """
    if n_points < 2:
        raise ValueError("a scribble needs at least 2 points")
    geom = to_shapely(gt_polygon)
    angle = _long_axis_angle(geom)
    rot = shapely.affinity.rotate(geom, -angle, origin=(0, 0), use_radians=True)
    minx, miny, maxx, maxy = rot.bounds
    samples = []
    for i in range(n_points):
        station = minx + (maxx - minx) * (i + 0.5) / n_points
        cut = rot.intersection(
            shapely.LineString([(station, miny - 1.0), (station, maxy + 1.0)]))
        pieces = [g for g in getattr(cut, "geoms", [cut])
                  if g.geom_type == "LineString" and g.length > 1e-9]
        if not pieces:
            raise ValueError(f"polygon too thin to sample a centerline point "
                             f"at station {station!r}")
        widest = max(pieces, key=lambda g: g.length)
        mid = widest.interpolate(0.5, normalized=True)
        samples.append((mid.x, mid.y))
    back = shapely.affinity.rotate(
        shapely.MultiPoint(samples), angle, origin=(0, 0), use_radians=True)
    points = [(p.x, p.y) for p in back.geoms]
    for x, y in points:
        if not geom.contains(shapely.Point(x, y)):
            raise ValueError("polygon too thin to contain a centerline sample")
    return Polyline(points)


# ---------------------------------------------------------------------------
# coordinate-noise injection

def _instance_rng(seed: int, image_id: str) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence([int(seed), *image_id.encode("utf-8")]))


def perturb(annotation: ImageAnnotation, offset: float,
            heights, seed: int) -> ImageAnnotation:
    """Displace every coordinate of every non-difficult instance by u*offset*H
    with u drawn uniformly from [-1/2, +1/2], independently per coordinate.

    heights maps instance id -> instance height H in pixels. Difficult
    instances pass through untouched; results are clamped to image bounds;
    output is deterministic per (seed, image_id).
    """
    if offset < 0.0:
        raise ValueError("offset must be non-negative")
    rng = _instance_rng(seed, annotation.image_id)
    out = []
    for inst in annotation.instances:
        if inst.difficult:
            out.append(replace(inst, points=list(inst.points)))
            continue
        if inst.id not in heights:
            raise ValueError(f"missing height for instance {inst.id}")
        h = float(heights[inst.id])
        draws = rng.uniform(-0.5, 0.5, size=(len(inst.points), 2))
        moved = [
            (
                min(max(p.x + u[0] * offset * h, 0.0), float(annotation.width)),
                min(max(p.y + u[1] * offset * h, 0.0), float(annotation.height)),
            )
            for p, u in zip(inst.points, draws)
        ]
        out.append(replace(inst, points=moved))
    return ImageAnnotation(annotation.image_id, annotation.width,
                           annotation.height, out)


# ---------------------------------------------------------------------------
# cost metrics

def cost_metrics(annotations) -> CostReport:
    """Average clicked points per non-difficult instance and average label
    time over instances that carry timing, across a set of annotations."""
    point_counts = []
    times = []
    total = 0
    for ann in annotations:
        for inst in ann.instances:
            total += 1
            if not inst.difficult:
                point_counts.append(len(inst.points))
            if inst.label_time_ms is not None:
                times.append(inst.label_time_ms)
    avg_points = sum(point_counts) / len(point_counts) if point_counts else None
    avg_time = sum(times) / len(times) if times else None
    return CostReport(avg_points, avg_time, total)


# ---------------------------------------------------------------------------
# ground-truth masks

def _disk_mask(x: float, y: float, radius: float, w: int, h: int) -> np.ndarray:
    cx = np.arange(w, dtype=np.float64) + 0.5
    cy = np.arange(h, dtype=np.float64) + 0.5
    X, Y = np.meshgrid(cx, cy)
    return np.hypot(X - x, Y - y) <= radius


def _instance_region_bits(inst: ScribbleInstance, thickness: float,
                          w: int, h: int) -> np.ndarray:
    """Footprint of a difficult instance: its stored points as a polygon
    when possible, else as a thick line, else as a disk."""
    if len(inst.points) >= 3:
        try:
            return rasterize_polygon(Polygon(inst.points), w, h).bits
        except ValueError:
            pass  # collinear or duplicate points: fall through to the line
    try:
        return rasterize_polyline(Polyline(inst.points), thickness, w, h).bits
    except ValueError:
        p = inst.points[0]
        return _disk_mask(p.x, p.y, thickness / 2.0, w, h)


def make_gt_masks(annotation: ImageAnnotation,
                  thickness: float = 5.0) -> tuple[BinaryMask, BinaryMask]:
    """(target, ignore) training masks for one image.

    target is the union of the thick-rasterized scribble lines of all
    non-difficult instances; ignore is the union of difficult-instance
    regions. The two never overlap: ignore wins on conflict.
    """
    violations = validate(annotation)
    if violations:
        raise ValueError("invalid annotation: " +
                         "; ".join(str(v) for v in violations))
    w, h = annotation.width, annotation.height
    target = np.zeros((h, w), dtype=bool)
    ignore = np.zeros((h, w), dtype=bool)
    for inst in annotation.instances:
        if inst.difficult:
            if inst.points:
                ignore |= _instance_region_bits(inst, thickness, w, h)
        else:
            target |= rasterize_polyline(Polyline(inst.points), thickness, w, h).bits
    target &= ~ignore
    return BinaryMask.from_array(target), BinaryMask.from_array(ignore)


# ---------------------------------------------------------------------------
# serialization

def _reject_constant(name):
    raise ValueError(f"non-finite JSON literal {name!r} is not allowed")


def annotation_to_dict(annotation: ImageAnnotation) -> dict:
    instances = []
    for inst in annotation.instances:
        entry = {
            "id": inst.id,
            "points": [[p.x, p.y] for p in inst.points],
            "difficult": inst.difficult,
        }
        if inst.transcript is not None:
            entry["transcript"] = inst.transcript
        if inst.label_time_ms is not None:
            entry["label_time_ms"] = inst.label_time_ms
        instances.append(entry)
    return {
        "version": ANNOTATION_FORMAT_VERSION,
        "image": {
            "id": annotation.image_id,
            "width": annotation.width,
            "height": annotation.height,
        },
        "instances": instances,
    }


def annotation_from_dict(data: dict) -> ImageAnnotation:
    if data.get("version") != ANNOTATION_FORMAT_VERSION:
        raise ValueError(f"unsupported annotation format version: "
                         f"{data.get('version')!r}")
    image = data["image"]
    instances = [
        ScribbleInstance(
            id=entry["id"],
            points=[(float(x), float(y)) for x, y in entry["points"]],
            difficult=entry["difficult"],
            transcript=entry.get("transcript"),
            label_time_ms=entry.get("label_time_ms"),
        )
        for entry in data["instances"]
    ]
    return ImageAnnotation(image["id"], image["width"], image["height"], instances)


def dumps_annotation(annotation: ImageAnnotation) -> str:
    return json.dumps(annotation_to_dict(annotation),
                      ensure_ascii=False, separators=(",", ":")) + "\n"


def loads_annotation(text: str) -> ImageAnnotation:
    return annotation_from_dict(json.loads(text, parse_constant=_reject_constant))


def write_annotation(path, annotation: ImageAnnotation) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(dumps_annotation(annotation))


def read_annotation(path) -> ImageAnnotation:
    with open(path, encoding="utf-8") as f:
        return loads_annotation(f.read())
