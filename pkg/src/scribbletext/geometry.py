"""Pure computational-geometry kernel.

Points, polylines, polygons, axis-aligned boxes, probability grids and
binary masks, plus the operations the rest of the toolkit is built on:
polygon IoU, box/polyline intersection, box/mask overlap, outward polygon
buffering, thick-line rasterization, connected components, contour
extraction and grid binarization.

Pixel model: pixel (c, r) is the unit cell [c, c+1) x [r, r+1) with center
(c + 0.5, r + 0.5). Coordinates are in pixel units, origin top-left,
x rightward, y downward.
"""

import math
from dataclasses import dataclass, field

import numpy as np
import shapely
from scipy import ndimage
from shapely.geometry import Polygon as _ShapelyPolygon


def _check_finite(*values):
    for v in values:
        if not math.isfinite(v):
            raise ValueError(f"non-finite coordinate: {v!r}")


@dataclass
class Point2D:
    x: float
    y: float

    def __post_init__(self):
        self.x = float(self.x)
        self.y = float(self.y)
        _check_finite(self.x, self.y)

    def as_tuple(self):
        return (self.x, self.y)


def _as_points(points) -> list[Point2D]:
    out = []
    for p in points:
        if isinstance(p, Point2D):
            out.append(p)
        else:
            x, y = p
            out.append(Point2D(float(x), float(y)))
    return out


def points_to_array(points) -> np.ndarray:
    """(n, 2) float64 array from a sequence of Point2D or (x, y) pairs."""
    pts = _as_points(points)
    return np.array([(p.x, p.y) for p in pts], dtype=np.float64).reshape(-1, 2)


@dataclass
class Polyline:
    """Open chain of >= 2 points with positive total arc length."""

    points: list[Point2D]

    def __post_init__(self):
        self.points = _as_points(self.points)
        if len(self.points) < 2:
            raise ValueError("polyline needs at least 2 points")
        if self.length() <= 0.0:
            raise ValueError("polyline has zero arc length")

    def as_array(self) -> np.ndarray:
        return points_to_array(self.points)

    def segments(self):
        for a, b in zip(self.points[:-1], self.points[1:]):
            yield a, b

    def length(self) -> float:
        arr = points_to_array(self.points)
        return float(np.sum(np.hypot(*np.diff(arr, axis=0).T)))


def signed_area(points) -> float:
    """Shoelace signed area; positive for the stored orientation."""
    arr = points_to_array(points)
    x, y = arr[:, 0], arr[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


@dataclass
class Polygon:
    """Closed ring of >= 3 vertices with nonzero area.

    Construction drops consecutive duplicate vertices and normalizes the
    orientation to positive shoelace area. Rings that touch themselves at
    isolated lattice corners (as produced by contour tracing of
    diagonally-connected components) are tolerated; set operations route
    through shapely's make_valid internally.
    """

    vertices: list[Point2D]

    def __post_init__(self):
        pts = _as_points(self.vertices)
        if len(pts) >= 2 and pts[0].as_tuple() == pts[-1].as_tuple():
            pts = pts[:-1]
        deduped = [pts[0]] if pts else []
        for p in pts[1:]:
            if p.as_tuple() != deduped[-1].as_tuple():
                deduped.append(p)
        if len(deduped) < 3:
            raise ValueError("polygon needs at least 3 distinct vertices")
        if signed_area(deduped) == 0.0:
            raise ValueError("polygon has zero area")
        if signed_area(deduped) < 0.0:
            deduped.reverse()
        self.vertices = deduped

    def as_array(self) -> np.ndarray:
        return points_to_array(self.vertices)

    def area(self) -> float:
        return abs(signed_area(self.vertices))

    def perimeter(self) -> float:
        arr = self.as_array()
        closed = np.vstack([arr, arr[:1]])
        return float(np.sum(np.hypot(*np.diff(closed, axis=0).T)))

    def bounds(self):
        arr = self.as_array()
        return (
            float(arr[:, 0].min()),
            float(arr[:, 1].min()),
            float(arr[:, 0].max()),
            float(arr[:, 1].max()),
        )


@dataclass
class AxisAlignedBox:
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        self.x1, self.y1 = float(self.x1), float(self.y1)
        self.x2, self.y2 = float(self.x2), float(self.y2)
        _check_finite(self.x1, self.y1, self.x2, self.y2)
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise ValueError(f"degenerate box: ({self.x1},{self.y1},{self.x2},{self.y2})")

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def center(self):
        return ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)

    @property
    def area(self) -> float:
        return self.width * self.height

    def as_polygon(self) -> Polygon:
        return Polygon([
            (self.x1, self.y1), (self.x2, self.y1),
            (self.x2, self.y2), (self.x1, self.y2),
        ])


@dataclass
class RasterGrid:
    """Real-valued grid with entries in [0, 1], row-major, shape (h, w)."""

    width: int
    height: int
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("grid dimensions must be positive")
        self.values = np.asarray(self.values, dtype=np.float64).reshape(self.height, self.width)
        if not np.all(np.isfinite(self.values)):
            raise ValueError("grid contains non-finite values")
        if self.values.min() < 0.0 or self.values.max() > 1.0:
            raise ValueError("grid values must lie in [0, 1]")

    @classmethod
    def from_array(cls, values) -> "RasterGrid":
        arr = np.asarray(values, dtype=np.float64)
        return cls(width=arr.shape[1], height=arr.shape[0], values=arr)


@dataclass
class BinaryMask:
    """Boolean grid, row-major, shape (h, w)."""

    width: int
    height: int
    bits: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("mask dimensions must be positive")
        self.bits = np.asarray(self.bits, dtype=bool).reshape(self.height, self.width)

    @classmethod
    def from_array(cls, bits) -> "BinaryMask":
        arr = np.asarray(bits, dtype=bool)
        return cls(width=arr.shape[1], height=arr.shape[0], bits=arr)

    @classmethod
    def zeros(cls, width: int, height: int) -> "BinaryMask":
        return cls(width=width, height=height, bits=np.zeros((height, width), dtype=bool))

    def count(self) -> int:
        return int(self.bits.sum())


# ---------------------------------------------------------------------------
# shapely bridge

def to_shapely(p: Polygon):
    """Valid shapely geometry for a Polygon (MultiPolygon for pinched rings)."""
    geom = _ShapelyPolygon([v.as_tuple() for v in p.vertices])
    if not geom.is_valid:
        geom = shapely.make_valid(geom)
    return geom


def from_shapely(geom) -> Polygon:
    """Largest exterior ring of a shapely result as a Polygon (holes dropped)."""
    if geom.geom_type == "Polygon":
        best = geom
    elif geom.geom_type in ("MultiPolygon", "GeometryCollection"):
        polys = [g for g in geom.geoms if g.geom_type == "Polygon"]
        if not polys:
            raise ValueError(f"no polygonal part in {geom.geom_type}")
        best = max(polys, key=lambda g: g.area)
    else:
        raise ValueError(f"unexpected geometry type {geom.geom_type}")
    return Polygon(list(best.exterior.coords))


# ---------------------------------------------------------------------------
# operations

def polygon_iou(a: Polygon, b: Polygon) -> float:
    """Intersection-over-union of two polygons (concave supported)."""
    ga, gb = to_shapely(a), to_shapely(b)
    if ga.area == 0.0 or gb.area == 0.0:
        raise ValueError("zero-area polygon in IoU")
    if ga.equals(gb):
        return 1.0
    inter = ga.intersection(gb).area
    union = ga.area + gb.area - inter
    if union <= 0.0:
        raise ValueError("degenerate polygon union")
    return min(1.0, max(0.0, inter / union))


def _segment_intersects_box(p: Point2D, q: Point2D, box: AxisAlignedBox) -> bool:
    # Liang-Barsky clip of p + t(q - p), t in [0, 1], against the closed box.
    t0, t1 = 0.0, 1.0
    for d, lo, hi in (
        (q.x - p.x, box.x1 - p.x, box.x2 - p.x),
        (q.y - p.y, box.y1 - p.y, box.y2 - p.y),
    ):
        if d == 0.0:
            if lo > 0.0 or hi < 0.0:
                return False
        else:
            ta, tb = lo / d, hi / d
            if ta > tb:
                ta, tb = tb, ta
            t0 = max(t0, ta)
            t1 = min(t1, tb)
            if t0 > t1:
                return False
    return True


def box_polyline_intersects(box: AxisAlignedBox, line: Polyline) -> bool:
    """True iff any segment of the polyline meets the closed box."""
    return any(_segment_intersects_box(a, b, box) for a, b in line.segments())


def box_polygon_intersects(box: AxisAlignedBox, poly: Polygon) -> bool:
    """True iff the closed box and the polygon share any point."""
    return shapely.box(box.x1, box.y1, box.x2, box.y2).intersects(to_shapely(poly))


def box_mask_overlap_area(box: AxisAlignedBox, mask: BinaryMask) -> float:
    """Number of set pixels whose unit cell overlaps the box with positive area."""
    c_lo = max(0, math.floor(box.x1))
    c_hi = min(mask.width - 1, math.ceil(box.x2) - 1)
    r_lo = max(0, math.floor(box.y1))
    r_hi = min(mask.height - 1, math.ceil(box.y2) - 1)
    if c_lo > c_hi or r_lo > r_hi:
        return 0.0
    return float(mask.bits[r_lo:r_hi + 1, c_lo:c_hi + 1].sum())


def buffer_polygon(p: Polygon, d: float, chords_per_circle: int = 32) -> Polygon:
    """Outward Minkowski sum of the polygon with a disk of radius d.

    Round joints, approximated with chords_per_circle chords per full
    circle (at least 16; the default 32 keeps the inscribed-chord area
    error of a full disk under 1% even when the disk term dominates).
    d = 0 returns the input unchanged; shrinking is unsupported.
    """
    if d < 0.0:
        raise ValueError("negative buffer distance (shrinking unsupported)")
    if chords_per_circle < 16:
        raise ValueError("chords_per_circle must be >= 16")
    if d == 0.0:
        return p
    grown = to_shapely(p).buffer(d, quad_segs=chords_per_circle // 4)
    return from_shapely(grown)


def _segment_distance_grid(px, py, qx, qy, cx, cy):
    # Distance from pixel centers (cx: (w,), cy: (h,)) to segment pq.
    X, Y = np.meshgrid(cx, cy)
    vx, vy = qx - px, qy - py
    l2 = vx * vx + vy * vy
    if l2 == 0.0:
        return np.hypot(X - px, Y - py)
    t = ((X - px) * vx + (Y - py) * vy) / l2
    t = np.clip(t, 0.0, 1.0)
    return np.hypot(X - (px + t * vx), Y - (py + t * vy))


def rasterize_polyline(line: Polyline, thickness: float, w: int, h: int) -> BinaryMask:
    """Pixels whose center lies within thickness/2 of the polyline."""
    if w <= 0 or h <= 0:
        raise ValueError("grid dimensions must be positive")
    if thickness <= 0.0:
        raise ValueError("thickness must be positive")
    r = thickness / 2.0
    bits = np.zeros((h, w), dtype=bool)
    for a, b in line.segments():
        c_lo = max(0, math.floor(min(a.x, b.x) - r - 1.0))
        c_hi = min(w - 1, math.ceil(max(a.x, b.x) + r + 1.0))
        r_lo = max(0, math.floor(min(a.y, b.y) - r - 1.0))
        r_hi = min(h - 1, math.ceil(max(a.y, b.y) + r + 1.0))
        if c_lo > c_hi or r_lo > r_hi:
            continue
        cx = np.arange(c_lo, c_hi + 1, dtype=np.float64) + 0.5
        cy = np.arange(r_lo, r_hi + 1, dtype=np.float64) + 0.5
        dist = _segment_distance_grid(a.x, a.y, b.x, b.y, cx, cy)
        bits[r_lo:r_hi + 1, c_lo:c_hi + 1] |= dist <= r
    return BinaryMask.from_array(bits)


def rasterize_polygon(poly: Polygon, w: int, h: int) -> BinaryMask:
    """Pixels whose center is inside the polygon (even-odd scanline fill)."""
    if w <= 0 or h <= 0:
        raise ValueError("grid dimensions must be positive")
    bits = np.zeros((h, w), dtype=bool)
    arr = poly.as_array()
    x1, y1, x2, y2 = poly.bounds()
    r_lo = max(0, math.floor(y1 - 0.5))
    r_hi = min(h - 1, math.ceil(y2))
    edges = list(zip(arr, np.roll(arr, -1, axis=0)))
    for row in range(r_lo, r_hi + 1):
        y = row + 0.5
        xs = []
        for (px, py), (qx, qy) in edges:
            if py == qy:
                continue
            # half-open rule: count the edge on [min(y), max(y))
            if (py <= y < qy) or (qy <= y < py):
                xs.append(px + (y - py) * (qx - px) / (qy - py))
        xs.sort()
        for xa, xb in zip(xs[0::2], xs[1::2]):
            c_lo = max(0, math.ceil(xa - 0.5))
            c_hi = min(w - 1, math.ceil(xb - 0.5) - 1)
            if c_lo <= c_hi:
                bits[row, c_lo:c_hi + 1] = True
    return BinaryMask.from_array(bits)


_EIGHT_CONNECTED = np.ones((3, 3), dtype=int)


def connected_components(mask: BinaryMask) -> list[BinaryMask]:
    """8-connected components, each as a mask of identical dimensions."""
    labels, n = ndimage.label(mask.bits, structure=_EIGHT_CONNECTED)
    return [BinaryMask.from_array(labels == i) for i in range(1, n + 1)]


def extract_contour(component: BinaryMask) -> Polygon:
    """Outer boundary of a component, traced on the pixel-corner lattice.

    Crack-following with the set pixels kept on the right of the travel
    direction; diagonal (8-connected) touches pass through the shared
    corner, so the ring may revisit a lattice point. Holes are ignored.
    """
    bits = component.bits
    seeds = np.argwhere(bits)
    if seeds.size == 0:
        raise ValueError("empty component has no contour")
    r0, c0 = (int(v) for v in seeds[0])  # topmost, then leftmost set pixel

    h, w = bits.shape

    def is_set(c, r):
        return 0 <= c < w and 0 <= r < h and bits[r, c]

    # cells (left, right) of the edge leaving vertex (x, y) in direction d
    def side_cells(x, y, d):
        if d == (1, 0):   # E
            return (x, y - 1), (x, y)
        if d == (0, 1):   # S
            return (x, y), (x - 1, y)
        if d == (-1, 0):  # W
            return (x - 1, y), (x - 1, y - 1)
        return (x - 1, y - 1), (x, y - 1)  # N

    def turn_left(d):
        return (d[1], -d[0])

    def turn_right(d):
        return (-d[1], d[0])

    v = (c0, r0)
    d = (1, 0)
    first_edge = None
    path = []
    max_steps = 4 * w * h + 8
    for _ in range(max_steps):
        for cand in (turn_left(d), d, turn_right(d)):
            left, right = side_cells(v[0], v[1], cand)
            if is_set(*right) and not is_set(*left):
                d = cand
                break
        else:
            raise RuntimeError("contour trace stuck")  # pragma: no cover
        if first_edge is None:
            first_edge = (v, d)
        elif (v, d) == first_edge:
            break
        path.append(v)
        v = (v[0] + d[0], v[1] + d[1])
    else:  # pragma: no cover
        raise RuntimeError("contour trace did not close")

    # drop collinear run points, keeping every turn (pinch corners repeat)
    keep = []
    n = len(path)
    for i in range(n):
        prev_pt, cur, nxt = path[i - 1], path[i], path[(i + 1) % n]
        din = (cur[0] - prev_pt[0], cur[1] - prev_pt[1])
        dout = (nxt[0] - cur[0], nxt[1] - cur[1])
        if din != dout:
            keep.append(cur)
    return Polygon([(float(x), float(y)) for x, y in keep])


def binarize(grid: RasterGrid, threshold: float) -> BinaryMask:
    """Pixel set iff its value is >= threshold."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must lie in [0, 1]")
    return BinaryMask.from_array(grid.values >= threshold)
