"""Inference-side post-processing.

Turns a predicted text-line probability map plus character boxes into
final text boundaries: binarize the map, split it into regions, group the
surviving character boxes onto the region each overlaps most, estimate a
per-group expansion distance from mean character size, and expand each
region's contour by that distance. Also renders the naive left-to-right
transcript of a group and owns the results/map file formats.
"""

import json
import math
import struct
from dataclasses import dataclass

import numpy as np

from .geometry import (
    BinaryMask,
    Polygon,
    RasterGrid,
    binarize,
    box_mask_overlap_area,
    buffer_polygon,
    connected_components,
    extract_contour,
)
from .weak_supervision import CharBox, ClassMode, map_class

#: Connected regions of the binarized map smaller than this many pixels are
#: discarded as speckle before grouping.
MIN_REGION_PIXELS = 4

TLM_MAGIC = b"TLM1"


@dataclass
class TextLineRegion:
    """One connected region of the binarized text-line map."""

    mask: BinaryMask
    contour: Polygon
    region_id: int


@dataclass
class CharGroup:
    """Character boxes assigned to one region (nonempty)."""

    region_id: int
    members: list[CharBox]


@dataclass
class DetectionResult:
    """A reconstructed text instance: expanded boundary polygon, the region
    it came from, an optional transcript, and its supporting box count."""

    boundary: Polygon
    region_id: int
    transcript: str | None
    char_count: int


@dataclass(frozen=True)
class ReconstructionConfig:
    t_infer: float = 0.5
    bin_threshold: float = 0.2
    expansion_factor: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.t_infer <= 1.0:
            raise ValueError("t_infer must lie in [0, 1]")
        if not 0.0 <= self.bin_threshold <= 1.0:
            raise ValueError("bin_threshold must lie in [0, 1]")
        if self.expansion_factor <= 0.0:
            raise ValueError("expansion_factor must be positive")


def extract_textlines(grid: RasterGrid, bin_threshold: float) -> list[TextLineRegion]:
    """Connected regions of the binarized map, each with its outer contour;
    regions below MIN_REGION_PIXELS pixels are dropped as noise."""
    mask = binarize(grid, bin_threshold)
    regions = []
    for comp in connected_components(mask):
        if comp.count() < MIN_REGION_PIXELS:
            continue
        regions.append(TextLineRegion(mask=comp, contour=extract_contour(comp),
                                      region_id=len(regions)))
    return regions


def group_chars(chars, regions, t_infer: float) -> list[CharGroup]:
    """Assign each character box scoring >= t_infer to the region it
    overlaps most (by intersected set-pixel area); ties go to the lowest
    region id and zero-overlap boxes are dropped. Groups come back ordered
    by region id with members in input order."""
    if not 0.0 <= t_infer <= 1.0:
        raise ValueError("t_infer must lie in [0, 1]")
    members: dict[int, list[CharBox]] = {}
    for char in chars:
        if char.score < t_infer:
            continue
        best_id, best_area = None, 0.0
        for region in regions:
            area = box_mask_overlap_area(char.box, region.mask)
            if area > best_area:
                best_id, best_area = region.region_id, area
        if best_id is not None:
            members.setdefault(best_id, []).append(char)
    return [CharGroup(region_id=rid, members=members[rid])
            for rid in sorted(members)]


def expansion_distance(group: CharGroup) -> float:
    """Mean sqrt(height * width) over the group's boxes: the distance the
    region contour is expanded by (before the global expansion factor)."""
    if not group.members:
        raise ValueError("cannot size an empty group")
    return sum(math.sqrt(c.box.height * c.box.width)
               for c in group.members) / len(group.members)


def reconstruct(regions, groups, config: ReconstructionConfig) -> list[DetectionResult]:
    """Expand each grouped region's contour outward by expansion_factor
    times the group's mean character size. Regions with no group produce no
    output; transcripts are left unset here."""
    by_id = {r.region_id: r for r in regions}
    out = []
    for group in sorted(groups, key=lambda g: g.region_id):
        if group.region_id not in by_id:
            raise ValueError(f"group references unknown region {group.region_id}")
        region = by_id[group.region_id]
        distance = config.expansion_factor * expansion_distance(group)
        boundary = buffer_polygon(region.contour, distance)
        out.append(DetectionResult(boundary=boundary, region_id=group.region_id,
                                   transcript=None, char_count=len(group.members)))
    return out


_TRANSCRIPT_FALLBACK = {"Unknown": "?", "Background": "?", "Foreground": "#"}


def naive_transcript(group: CharGroup, mode: ClassMode = ClassMode.ALL,
                     domain: str = "synthetic") -> str:
    """Group members' classes concatenated in ascending box-center-x order.
    Digits and letters render as themselves, unknown glyphs as '?', and
    class-agnostic foreground boxes as '#'."""
    ordered = sorted(group.members, key=lambda c: c.box.center[0])
    chars = []
    for member in ordered:
        cls = map_class(member.char_class, mode, domain)
        chars.append(_TRANSCRIPT_FALLBACK.get(cls, cls))
    return "".join(chars)


# ---------------------------------------------------------------------------
# text-line map file (binary)

def dumps_tlm(grid: RasterGrid) -> bytes:
    """Serialize a probability map: magic, little-endian u32 width and
    height, then row-major little-endian f32 values."""
    header = TLM_MAGIC + struct.pack("<II", grid.width, grid.height)
    return header + grid.values.astype("<f4").tobytes(order="C")


def loads_tlm(blob: bytes) -> RasterGrid:
    if len(blob) < 12 or blob[:4] != TLM_MAGIC:
        raise ValueError("not a text-line map: bad magic or truncated header")
    width, height = struct.unpack("<II", blob[4:12])
    expected = 12 + 4 * width * height
    if len(blob) != expected:
        raise ValueError(f"text-line map size mismatch: expected {expected} "
                         f"bytes, got {len(blob)}")
    values = np.frombuffer(blob, dtype="<f4", offset=12).astype(np.float64)
    return RasterGrid(width=width, height=height, values=values)


def write_tlm(path, grid: RasterGrid) -> None:
    with open(path, "wb") as f:
        f.write(dumps_tlm(grid))


def read_tlm(path) -> RasterGrid:
    with open(path, "rb") as f:
        return loads_tlm(f.read())


# ---------------------------------------------------------------------------
# results file

@dataclass
class ResultsFile:
    image_id: str
    detections: list[DetectionResult]


def dumps_results(rf: ResultsFile) -> str:
    detections = []
    for det in rf.detections:
        entry: dict = {"polygon": [[v.x, v.y] for v in det.boundary.vertices]}
        if det.transcript is not None:
            entry["transcript"] = det.transcript
        entry["char_count"] = det.char_count
        detections.append(entry)
    data = {"image_id": rf.image_id, "detections": detections}
    return json.dumps(data, ensure_ascii=False, separators=(",", ":")) + "\n"


def loads_results(text: str) -> ResultsFile:
    def reject(name):
        raise ValueError(f"non-finite JSON literal {name!r} is not allowed")
    data = json.loads(text, parse_constant=reject)
    detections = [
        DetectionResult(
            boundary=Polygon([(float(x), float(y)) for x, y in entry["polygon"]]),
            region_id=i,
            transcript=entry.get("transcript"),
            char_count=int(entry["char_count"]),
        )
        for i, entry in enumerate(data["detections"])
    ]
    return ResultsFile(image_id=str(data["image_id"]), detections=detections)


def write_results(path, rf: ResultsFile) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(dumps_results(rf))


def read_results(path) -> ResultsFile:
    with open(path, encoding="utf-8") as f:
        return loads_results(f.read())
