"""Deterministic synthetic scenes and a tunable noisy-detector stand-in.

Scenes carry text instances with known character boxes, centerlines and
boundary polygons, so every downstream stage (pseudo-label filtering,
grouping, reconstruction, evaluation) can be scored against exact ground
truth. ``ideal_outputs`` emits what a perfect detector would produce;
``simulate_detector`` degrades it with seeded drop/jitter/score/spurious
noise and an optional box blur of the text-line map.
"""

import math
from dataclasses import dataclass

import numpy as np
import shapely.affinity
import shapely.geometry
from scipy import ndimage

from .annotation import ImageAnnotation, ScribbleInstance
from .evaluation import GroundTruthInstance
from .geometry import (
    AxisAlignedBox,
    Polygon,
    Polyline,
    RasterGrid,
    from_shapely,
    rasterize_polyline,
)
from .weak_supervision import DIGITS, LETTERS, CharBox

SCRIBBLE_THICKNESS = 5.0
SHAPE_KINDS = ("horizontal", "oriented", "curved")

_GLYPHS = DIGITS + LETTERS
_MIN_SEPARATION = 8.0
_CANVAS_MARGIN = 2.0
_SPURIOUS_CLEARANCE = 4.5
_PLACEMENT_TRIES = 300


@dataclass
class SyntheticInstance:
    """One text instance with exact known geometry: boundary polygon, the
    centerline through its character centers, and scored character boxes."""

    gt_polygon: Polygon
    centerline: Polyline
    char_boxes: list[CharBox]
    difficult: bool = False


@dataclass
class SyntheticScene:
    image_id: str
    width: int
    height: int
    instances: list[SyntheticInstance]


@dataclass(frozen=True)
class NoiseConfig:
    """Detector degradation knobs; the default configuration is noiseless."""

    drop_prob: float = 0.0
    jitter_frac: float = 0.0
    spurious_per_image: float = 0.0
    score_floor: float = 1.0
    map_blur_radius: int = 0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.drop_prob <= 1.0:
            raise ValueError("drop_prob must lie in [0, 1]")
        if self.jitter_frac < 0.0:
            raise ValueError("jitter_frac must be non-negative")
        if self.spurious_per_image < 0.0:
            raise ValueError("spurious_per_image must be non-negative")
        if not 0.0 <= self.score_floor <= 1.0:
            raise ValueError("score_floor must lie in [0, 1]")
        if self.map_blur_radius < 0:
            raise ValueError("map_blur_radius must be non-negative")


def _scene_rng(seed: int, image_id: str) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence([int(seed), *image_id.encode("utf-8")]))


def _build_instance(rng: np.random.Generator, shape: str, difficult_prob: float):
    """Instance geometry in local coordinates: (centers, centerline points,
    per-char (w, h, class), boundary radius, difficult flag)."""
    difficult = bool(rng.random() < difficult_prob)
    height = float(rng.uniform(18.0, 36.0))
    n_chars = int(rng.integers(4, 7)) if shape == "curved" else int(rng.integers(3, 7))
    char_h = rng.uniform(0.8, 1.0, n_chars) * height
    char_w = rng.uniform(0.55, 0.95, n_chars) * height
    gaps = rng.uniform(0.1, 0.35, n_chars - 1) * height
    classes = [_GLYPHS[i] for i in rng.integers(0, len(_GLYPHS), n_chars)]

    if shape == "horizontal":
        angles = np.zeros(max(n_chars - 1, 1))
    elif shape == "oriented":
        angles = np.full(max(n_chars - 1, 1), rng.uniform(-math.pi / 6, math.pi / 6))
    elif shape == "curved":
        start = rng.uniform(-math.pi / 8, math.pi / 8)
        step = float(rng.choice([-1.0, 1.0])) * rng.uniform(
            math.radians(6.0), math.radians(14.0))
        angles = start + step * np.arange(n_chars - 1)
    else:
        raise ValueError(f"unknown shape kind {shape!r}; expected one of {SHAPE_KINDS}")

    centers = [(0.0, 0.0)]
    for k in range(n_chars - 1):
        spacing = (char_w[k] + char_w[k + 1]) / 2.0 + gaps[k]
        cx, cy = centers[-1]
        centers.append((cx + spacing * math.cos(angles[k]),
                        cy + spacing * math.sin(angles[k])))

    if shape == "curved":
        line_points = list(centers)
    else:
        line_points = [centers[0], centers[-1]]

    # boundary radius: at least the text half-height, and wide enough that
    # every (axis-aligned) character box fits inside the swept region
    half_diag = float(np.hypot(char_w / 2.0, char_h / 2.0).max())
    radius = max(height / 2.0, half_diag + 0.5)
    sizes = list(zip(char_w.tolist(), char_h.tolist(), classes))
    return centers, line_points, sizes, radius, difficult


def generate_scene(seed: int, n_instances: int, shape_mix=SHAPE_KINDS,
                   difficult_prob: float = 0.0, width: int = 512,
                   height: int = 512) -> SyntheticScene:
    """Seeded random scene of non-overlapping text instances.

    Each instance is a run of 3-6 characters along a horizontal, oriented
    or curved path drawn from ``shape_mix``; instances keep at least 8 px
    of clearance from each other and 2 px from the canvas edge. Raises if
    an instance cannot be placed.
    """
    if n_instances < 1:
        raise ValueError("n_instances must be at least 1")
    shape_mix = tuple(shape_mix)
    if not shape_mix or any(s not in SHAPE_KINDS for s in shape_mix):
        raise ValueError(f"shape_mix must be a non-empty subset of {SHAPE_KINDS}")
    if not 0.0 <= difficult_prob <= 1.0:
        raise ValueError("difficult_prob must lie in [0, 1]")
    if width < 1 or height < 1:
        raise ValueError("canvas dimensions must be positive")

    rng = np.random.default_rng(int(seed))
    image_id = f"synth-{int(seed):06d}"
    placed_geoms = []
    instances: list[SyntheticInstance] = []
    for _ in range(n_instances):
        shape = shape_mix[int(rng.integers(0, len(shape_mix)))]
        centers, line_points, sizes, radius, difficult = _build_instance(
            rng, shape, difficult_prob)
        local_boundary = shapely.geometry.LineString(centers).buffer(
            radius, quad_segs=8)
        minx, miny, maxx, maxy = local_boundary.bounds
        lo_x, hi_x = _CANVAS_MARGIN - minx, width - _CANVAS_MARGIN - maxx
        lo_y, hi_y = _CANVAS_MARGIN - miny, height - _CANVAS_MARGIN - maxy
        if lo_x > hi_x or lo_y > hi_y:
            raise ValueError(
                f"canvas {width}x{height} too small for a "
                f"{maxx - minx:.0f}x{maxy - miny:.0f} instance")
        placed = None
        for _ in range(_PLACEMENT_TRIES):
            tx = float(rng.uniform(lo_x, hi_x))
            ty = float(rng.uniform(lo_y, hi_y))
            candidate = shapely.affinity.translate(local_boundary, tx, ty)
            if all(candidate.distance(g) >= _MIN_SEPARATION for g in placed_geoms):
                placed = (tx, ty, candidate)
                break
        if placed is None:
            raise ValueError(
                f"could not place instance {len(instances) + 1} of "
                f"{n_instances} on a {width}x{height} canvas")
        tx, ty, boundary_geom = placed
        placed_geoms.append(boundary_geom)
        boxes = [
            CharBox(AxisAlignedBox(cx + tx - w / 2.0, cy + ty - h / 2.0,
                                   cx + tx + w / 2.0, cy + ty + h / 2.0),
                    score=1.0, char_class=cls)
            for (cx, cy), (w, h, cls) in zip(centers, sizes)
        ]
        instances.append(SyntheticInstance(
            gt_polygon=from_shapely(boundary_geom),
            centerline=Polyline([(x + tx, y + ty) for x, y in line_points]),
            char_boxes=boxes,
            difficult=difficult,
        ))
    return SyntheticScene(image_id=image_id, width=int(width),
                          height=int(height), instances=instances)


def _copy_box(cb: CharBox) -> CharBox:
    b = cb.box
    return CharBox(AxisAlignedBox(b.x1, b.y1, b.x2, b.y2), cb.score, cb.char_class)


def _ideal_map(scene: SyntheticScene) -> RasterGrid:
    bits = np.zeros((scene.height, scene.width), dtype=bool)
    for inst in scene.instances:
        if inst.difficult:
            continue
        bits |= rasterize_polyline(inst.centerline, SCRIBBLE_THICKNESS,
                                   scene.width, scene.height).bits
    return RasterGrid.from_array(bits.astype(np.float64))


def ideal_outputs(scene: SyntheticScene):
    """(detections, map, annotations, gts) a perfect detector would emit.

    Detections are the exact character boxes at score 1.0; the map marks
    every non-difficult centerline at value 1.0 with the scribble thickness;
    annotations carry centerlines as scribbles (difficult instances as their
    boundary-polygon outline); ground truth lists all boundary polygons.
    """
    if not scene.instances:
        raise ValueError("scene has no instances")
    detections = [_copy_box(cb) for inst in scene.instances
                  for cb in inst.char_boxes]
    grid = _ideal_map(scene)
    ann_instances = []
    for k, inst in enumerate(scene.instances):
        points = (inst.gt_polygon.vertices if inst.difficult
                  else inst.centerline.points)
        ann_instances.append(ScribbleInstance(
            id=k, points=[(p.x, p.y) for p in points], difficult=inst.difficult))
    annotations = ImageAnnotation(image_id=scene.image_id, width=scene.width,
                                  height=scene.height, instances=ann_instances)
    gts = [GroundTruthInstance(polygon=inst.gt_polygon, difficult=inst.difficult)
           for inst in scene.instances]
    return detections, grid, annotations, gts


def simulate_detector(scene: SyntheticScene, noise: NoiseConfig):
    """(detections, map) after seeded degradation of the ideal outputs.

    Each character box is independently dropped with ``drop_prob``; kept
    boxes get their four coordinates jittered by uniform ±jitter_frac of the
    box size and a score drawn uniformly from [score_floor, 1]. A Poisson
    number of spurious Unknown-class boxes is placed clear of every
    centerline. The map is box-blurred and renormalized when
    ``map_blur_radius`` > 0. The all-defaults config reproduces
    ``ideal_outputs`` exactly.
    """
    if not scene.instances:
        raise ValueError("scene has no instances")
    rng = _scene_rng(noise.seed, scene.image_id)
    detections: list[CharBox] = []
    for inst in scene.instances:
        for cb in inst.char_boxes:
            if rng.random() < noise.drop_prob:
                continue
            b = cb.box
            u = rng.uniform(-1.0, 1.0, 4)
            x1 = b.x1 + u[0] * noise.jitter_frac * b.width
            y1 = b.y1 + u[1] * noise.jitter_frac * b.height
            x2 = b.x2 + u[2] * noise.jitter_frac * b.width
            y2 = b.y2 + u[3] * noise.jitter_frac * b.height
            x1, x2 = min(x1, x2), max(x1, x2)
            y1, y2 = min(y1, y2), max(y1, y2)
            x2 = max(x2, x1 + 1e-6)
            y2 = max(y2, y1 + 1e-6)
            score = float(rng.uniform(noise.score_floor, 1.0))
            detections.append(CharBox(AxisAlignedBox(x1, y1, x2, y2), score,
                                      cb.char_class))

    n_spurious = int(rng.poisson(noise.spurious_per_image))
    if n_spurious:
        centerlines = [shapely.geometry.LineString(
            [(p.x, p.y) for p in inst.centerline.points])
            for inst in scene.instances]
        for _ in range(n_spurious):
            for _ in range(_PLACEMENT_TRIES):
                w = float(rng.uniform(8.0, 24.0))
                h = float(rng.uniform(8.0, 24.0))
                x1 = float(rng.uniform(0.0, max(scene.width - w, 1e-6)))
                y1 = float(rng.uniform(0.0, max(scene.height - h, 1e-6)))
                geom = shapely.geometry.box(x1, y1, x1 + w, y1 + h)
                if all(geom.distance(cl) >= _SPURIOUS_CLEARANCE
                       for cl in centerlines):
                    score = float(rng.uniform(noise.score_floor, 1.0))
                    detections.append(CharBox(
                        AxisAlignedBox(x1, y1, x1 + w, y1 + h), score, "Unknown"))
                    break

    grid = _ideal_map(scene)
    if noise.map_blur_radius > 0:
        size = 2 * noise.map_blur_radius + 1
        blurred = ndimage.uniform_filter(grid.values, size=size, mode="constant",
                                         cval=0.0)
        peak = blurred.max()
        if peak > 0.0:
            blurred = blurred / peak
        grid = RasterGrid.from_array(np.clip(blurred, 0.0, 1.0))
    return detections, grid
