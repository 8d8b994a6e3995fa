"""Command-line entry points and the annotation HTTP service.

The CLI wraps every pipeline stage over an on-disk project tree::

    project/
      images/        manifest.json (+ optional image files)
      annotations/   <image_id>.json scribble annotations (one dir per annotator)
      detections/    <image_id>.json character boxes
      maps/          <image_id>.tlm text-line probability maps
      gts/           <image_id>.json ground-truth polygons
      results/       <image_id>.json reconstructed boundaries

Report-producing commands write a JSON summary, a CSV with per-image rows,
and a rendered PNG figure side by side. ``serve`` exposes the annotation
API used by the browser frontend; all of its writes are atomic
(temp file + rename) and guarded by per-image version numbers.
"""

import csv
import io
import json
import os
import threading
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

import click

from .annotation import (
    ImageAnnotation,
    annotation_from_dict,
    annotation_to_dict,
    cost_metrics,
    dumps_annotation,
    perturb,
    read_annotation,
    validate,
)
from .evaluation import (
    EvalReport,
    GroundTruthFile,
    combine_reports,
    dumps_gts,
    dumps_report,
    evaluate,
    read_gts,
)
from .geometry import Polyline, to_shapely
from .reconstruction import (
    DetectionResult,
    ReconstructionConfig,
    ResultsFile,
    dumps_results,
    extract_textlines,
    group_chars,
    naive_transcript,
    read_results,
    read_tlm,
    reconstruct,
    write_tlm,
)
from .synth_oracle import NoiseConfig, generate_scene, ideal_outputs, simulate_detector
from .weak_supervision import (
    ClassMode,
    DetectionsFile,
    dumps_detections,
    generate_pseudo_labels,
    read_detections,
)

EVENT_KINDS = ("start", "point", "finish", "discard")


@dataclass(frozen=True)
class SessionEvent:
    """One timed annotation action, as streamed by the frontend."""

    image_id: str
    instance_id: int
    event: str
    timestamp_ms: int

    def __post_init__(self):
        if self.event not in EVENT_KINDS:
            raise ValueError(f"event must be one of {EVENT_KINDS}")
        if self.timestamp_ms < 0:
            raise ValueError("timestamp_ms must be non-negative")

    def to_dict(self) -> dict:
        return {"image_id": self.image_id, "instance_id": self.instance_id,
                "event": self.event, "timestamp_ms": self.timestamp_ms}


@dataclass(frozen=True)
class ProjectLayout:
    """Directory conventions of a project tree."""

    root: Path

    @property
    def images_dir(self) -> Path:
        return self.root / "images"

    @property
    def manifest_path(self) -> Path:
        return self.images_dir / "manifest.json"

    @property
    def detections_dir(self) -> Path:
        return self.root / "detections"

    @property
    def maps_dir(self) -> Path:
        return self.root / "maps"

    @property
    def gts_dir(self) -> Path:
        return self.root / "gts"

    @property
    def results_dir(self) -> Path:
        return self.root / "results"

    def annotations_dir(self, annotator: str | None = None) -> Path:
        name = f"annotations-{annotator}" if annotator else "annotations"
        return self.root / name

    def events_dir(self, annotator: str | None = None) -> Path:
        name = f"events-{annotator}" if annotator else "events"
        return self.root / name

    def read_manifest(self) -> list[dict]:
        with open(self.manifest_path, encoding="utf-8") as f:
            data = json.load(f)
        return sorted(data["images"], key=lambda e: e["id"])

    def write_manifest(self, entries) -> None:
        entries = sorted(
            ({"id": str(e["id"]), "width": int(e["width"]),
              "height": int(e["height"])} for e in entries),
            key=lambda e: e["id"])
        _atomic_write_text(self.manifest_path, _dumps_compact({"images": entries}))


def _dumps_compact(data) -> str:
    return json.dumps(data, ensure_ascii=False, separators=(",", ":")) + "\n"


def _atomic_write_text(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="") as f:
        f.write(text)
    os.replace(tmp, path)


def _scribbles_from_annotation(ann: ImageAnnotation) -> list[Polyline]:
    return [Polyline([(p.x, p.y) for p in inst.points])
            for inst in ann.instances
            if not inst.difficult and len(inst.points) >= 2]


def _short_side(polygon) -> float:
    """Short side length of a polygon's minimum rotated rectangle."""
    rect = to_shapely(polygon).minimum_rotated_rectangle
    coords = list(rect.exterior.coords)
    if len(coords) < 3:
        raise ValueError("degenerate ground-truth polygon")
    sides = [
        ((coords[i][0] - coords[i + 1][0]) ** 2 +
         (coords[i][1] - coords[i + 1][1]) ** 2) ** 0.5
        for i in range(len(coords) - 1)
    ]
    return min(s for s in sides if s > 0.0)


# ---------------------------------------------------------------------------
# report rendering (JSON + CSV + PNG triple)

_REPORT_COLUMNS = ("image_id", "precision", "recall", "f_measure",
                   "matched", "num_dets", "num_gts")


def _report_csv(per_image, combined: EvalReport) -> str:
    buf = io.StringIO(newline="")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(_REPORT_COLUMNS)
    for image_id, rep in sorted(per_image, key=lambda pair: pair[0]):
        writer.writerow([image_id, repr(rep.precision), repr(rep.recall),
                         repr(rep.f_measure), rep.matched, rep.num_dets,
                         rep.num_gts])
    writer.writerow(["OVERALL", repr(combined.precision), repr(combined.recall),
                     repr(combined.f_measure), combined.matched,
                     combined.num_dets, combined.num_gts])
    return buf.getvalue()


def _save_figure(fig, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="png",
                metadata={"Software": "scribbletext report renderer"})


def _render_report_png(per_image, combined: EvalReport, path: Path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rows = sorted(per_image, key=lambda pair: pair[0])
    fig, ax = plt.subplots(figsize=(9.0, 4.5), dpi=100)
    if rows:
        xs = range(len(rows))
        ax.bar(xs, [r.f_measure for _, r in rows], color="#4878cf",
               label="per-image F")
        ax.set_xticks(list(xs))
        ax.set_xticklabels([image_id for image_id, _ in rows], rotation=90,
                           fontsize=6)
    ax.axhline(combined.f_measure, color="#d65f5f", linestyle="--",
               label=f"overall F = {combined.f_measure:.3f}")
    ax.set_ylim(0.0, 1.05)
    ax.set_ylabel("F-measure")
    ax.set_title("Detection quality by image")
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    _save_figure(fig, path)
    plt.close(fig)


def write_report_files(out_dir: Path, per_image, combined: EvalReport) -> None:
    """report.json / report.csv / report.png under ``out_dir``."""
    out_dir = Path(out_dir)
    _atomic_write_text(out_dir / "report.json", dumps_report(combined))
    _atomic_write_text(out_dir / "report.csv", _report_csv(per_image, combined))
    _render_report_png(per_image, combined, out_dir / "report.png")


def _render_cost_png(report, per_file, path: Path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.0, 4.0), dpi=100)
    points = [n for _, counts in sorted(per_file) for n in counts]
    if points:
        ax1.hist(points, bins=range(1, max(points) + 2), color="#4878cf",
                 align="left", rwidth=0.8)
    ax1.set_xlabel("points per instance")
    ax1.set_ylabel("instances")
    ax1.set_title("Annotation cost: clicks")
    labels, values = [], []
    if report.avg_points_per_instance is not None:
        labels.append("avg points")
        values.append(report.avg_points_per_instance)
    if report.avg_label_time_ms is not None:
        labels.append("avg time (s)")
        values.append(report.avg_label_time_ms / 1000.0)
    if labels:
        ax2.bar(labels, values, color="#6acc65")
    ax2.set_title(f"{report.instance_count} instances")
    fig.tight_layout()
    _save_figure(fig, path)
    plt.close(fig)


# ---------------------------------------------------------------------------
# CLI

@click.group()
def main():
    """Scribble-annotation toolkit: weak labels, reconstruction, evaluation."""


def _project_arg(func):
    return click.argument(
        "project", type=click.Path(exists=True, file_okay=False,
                                   path_type=Path))(func)


_ANNOTATOR_OPT = click.option(
    "--annotator", default=None,
    help="Use the per-annotator annotation set annotations-NAME/.")


@main.command("validate")
@_project_arg
@_ANNOTATOR_OPT
def cmd_validate(project: Path, annotator: str | None):
    """Check every annotation file against the labeling rules."""
    layout = ProjectLayout(project)
    ann_dir = layout.annotations_dir(annotator)
    total = 0
    files = sorted(ann_dir.glob("*.json")) if ann_dir.is_dir() else []
    for path in files:
        try:
            ann = read_annotation(path)
        except (ValueError, KeyError, TypeError) as exc:
            click.echo(f"image {path.stem} instance -: parse-error: {exc}")
            total += 1
            continue
        for v in validate(ann):
            click.echo(f"image {ann.image_id} instance "
                       f"{'-' if v.instance_id is None else v.instance_id}: "
                       f"{v.rule}: {v.detail}")
            total += 1
    click.echo(f"{total} violation(s) in {len(files)} file(s)")
    if total:
        raise SystemExit(1)


@main.command("pipeline")
@_project_arg
@click.option("--t-pseudo", default=0.9, show_default=True,
              type=click.FloatRange(0.0, 1.0),
              help="Score threshold for keeping pseudo-label boxes.")
@click.option("--t-infer", default=0.5, show_default=True,
              type=click.FloatRange(0.0, 1.0),
              help="Score threshold for boxes used in reconstruction.")
@click.option("--bin-threshold", default=0.2, show_default=True,
              type=click.FloatRange(0.0, 1.0, min_open=True),
              help="Binarization threshold for the text-line map.")
@click.option("--expansion-factor", default=1.0, show_default=True,
              type=click.FloatRange(min=0.0),
              help="Contour expansion as a multiple of the mean char scale.")
@click.option("--match-iou", default=0.5, show_default=True,
              type=click.FloatRange(0.0, 1.0, min_open=True, max_open=True),
              help="IoU threshold for evaluation matching.")
@_ANNOTATOR_OPT
def cmd_pipeline(project: Path, t_pseudo: float, t_infer: float,
                 bin_threshold: float, expansion_factor: float,
                 match_iou: float, annotator: str | None):
    """Reconstruct boundaries for every image and score them.

    Consumes detections/, maps/ and gts/; when a scribble annotation exists
    for an image its detections are first filtered into pseudo-labels.
    Writes results/<image_id>.json plus report.json/.csv/.png.
    """
    layout = ProjectLayout(project)
    config = ReconstructionConfig(t_infer=t_infer, bin_threshold=bin_threshold,
                                  expansion_factor=expansion_factor)
    ids = sorted(p.stem for p in layout.detections_dir.glob("*.json")) \
        if layout.detections_dir.is_dir() else []
    per_image: list[tuple[str, EvalReport]] = []
    errors = 0
    for image_id in ids:
        try:
            per_image.append(
                (image_id, _pipeline_one(layout, image_id, t_pseudo, config,
                                         match_iou, annotator)))
        except (OSError, ValueError, KeyError) as exc:
            errors += 1
            click.echo(f"error: {image_id}: {exc}", err=True)
    combined = combine_reports([rep for _, rep in per_image])
    write_report_files(layout.root, per_image, combined)
    click.echo(dumps_report(combined), nl=False)
    if ids and errors == len(ids):
        raise SystemExit(1)


def _pipeline_one(layout: ProjectLayout, image_id: str, t_pseudo: float,
                  config: ReconstructionConfig, match_iou: float,
                  annotator: str | None) -> EvalReport:
    det_file = read_detections(layout.detections_dir / f"{image_id}.json")
    grid = read_tlm(layout.maps_dir / f"{image_id}.tlm")
    gt_file = read_gts(layout.gts_dir / f"{image_id}.json")
    chars = det_file.chars
    ann_path = layout.annotations_dir(annotator) / f"{image_id}.json"
    if ann_path.is_file():
        scribbles = _scribbles_from_annotation(read_annotation(ann_path))
        chars = generate_pseudo_labels(chars, scribbles, t_pseudo,
                                       image_id).labels
    regions = extract_textlines(grid, config.bin_threshold)
    groups = group_chars(chars, regions, config.t_infer)
    results = reconstruct(regions, groups, config)
    transcripts = {g.region_id: naive_transcript(g, ClassMode.ALL)
                   for g in groups}
    results = [DetectionResult(boundary=r.boundary, region_id=r.region_id,
                               transcript=transcripts[r.region_id],
                               char_count=r.char_count)
               for r in results]
    _atomic_write_text(layout.results_dir / f"{image_id}.json",
                       dumps_results(ResultsFile(image_id, results)))
    return evaluate(results, gt_file.instances, match_iou)


@main.command("perturb")
@_project_arg
@click.option("--offset", required=True, type=click.FloatRange(min=0.0),
              help="Perturbation scale as a fraction of instance height.")
@click.option("--seed", default=0, show_default=True, type=int)
@_ANNOTATOR_OPT
def cmd_perturb(project: Path, offset: float, seed: int,
                annotator: str | None):
    """Write a displaced copy of the annotation tree for robustness studies.

    Each scribble point moves by a uniform random offset bounded by
    ``offset`` times the instance height (taken from the matching
    ground-truth polygon); difficult instances are left untouched. Output
    goes to a sibling directory with a ``-perturbed`` suffix.
    """
    layout = ProjectLayout(project)
    src = layout.annotations_dir(annotator)
    dst = src.with_name(src.name + "-perturbed")
    files = sorted(src.glob("*.json")) if src.is_dir() else []
    if not files:
        raise click.ClickException(f"no annotation files in {src}")
    for path in files:
        ann = read_annotation(path)
        gt_file = read_gts(layout.gts_dir / f"{path.stem}.json")
        if len(gt_file.instances) != len(ann.instances):
            raise click.ClickException(
                f"{path.stem}: {len(ann.instances)} annotated instances but "
                f"{len(gt_file.instances)} ground-truth polygons")
        heights = {inst.id: _short_side(gt.polygon)
                   for inst, gt in zip(ann.instances, gt_file.instances)}
        moved = perturb(ann, offset, heights, seed)
        _atomic_write_text(dst / path.name, dumps_annotation(moved))
    click.echo(f"perturbed {len(files)} file(s) into {dst}")


@main.command("cost")
@_project_arg
@click.option("--out", default=None,
              type=click.Path(file_okay=False, path_type=Path),
              help="Also write cost.json/.csv/.png into this directory.")
@_ANNOTATOR_OPT
def cmd_cost(project: Path, out: Path | None, annotator: str | None):
    """Summarize annotation cost (clicks and labeling time)."""
    layout = ProjectLayout(project)
    ann_dir = layout.annotations_dir(annotator)
    files = sorted(ann_dir.glob("*.json")) if ann_dir.is_dir() else []
    annotations = [read_annotation(p) for p in files]
    report = cost_metrics(annotations)
    click.echo(_dumps_compact(report.to_dict()), nl=False)
    if out is not None:
        per_file = [(ann.image_id, [len(i.points) for i in ann.instances])
                    for ann in annotations]
        _atomic_write_text(out / "cost.json", _dumps_compact(report.to_dict()))
        buf = io.StringIO(newline="")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["image_id", "instances", "points"])
        for image_id, counts in sorted(per_file):
            writer.writerow([image_id, len(counts), sum(counts)])
        _atomic_write_text(out / "cost.csv", buf.getvalue())
        _render_cost_png(report, per_file, out / "cost.png")


@main.command("synth")
@click.argument("out_dir", type=click.Path(file_okay=False, path_type=Path))
@click.option("--images", default=10, show_default=True,
              type=click.IntRange(min=1), help="Number of scenes.")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--instances", default=5, show_default=True,
              type=click.IntRange(min=1), help="Text instances per scene.")
@click.option("--width", default=512, show_default=True,
              type=click.IntRange(min=32))
@click.option("--height", default=512, show_default=True,
              type=click.IntRange(min=32))
@click.option("--difficult-prob", default=0.0, show_default=True,
              type=click.FloatRange(0.0, 1.0))
@click.option("--drop-prob", default=0.0, show_default=True,
              type=click.FloatRange(0.0, 1.0))
@click.option("--jitter-frac", default=0.0, show_default=True,
              type=click.FloatRange(min=0.0))
@click.option("--spurious", default=0.0, show_default=True,
              type=click.FloatRange(min=0.0),
              help="Expected spurious boxes per image.")
@click.option("--score-floor", default=1.0, show_default=True,
              type=click.FloatRange(0.0, 1.0))
@click.option("--blur-radius", default=0, show_default=True,
              type=click.IntRange(min=0))
def cmd_synth(out_dir: Path, images: int, seed: int, instances: int,
              width: int, height: int, difficult_prob: float, drop_prob: float,
              jitter_frac: float, spurious: float, score_floor: float,
              blur_radius: int):
    """Generate a synthetic project tree with known ground truth.

    Scene i uses seed+i; detector outputs are degraded by the noise flags
    (all defaults produce the ideal detector). Output is deterministic for
    a fixed flag set.
    """
    layout = ProjectLayout(out_dir)
    noise = NoiseConfig(drop_prob=drop_prob, jitter_frac=jitter_frac,
                        spurious_per_image=spurious, score_floor=score_floor,
                        map_blur_radius=blur_radius, seed=seed)
    entries = []
    for i in range(images):
        scene = generate_scene(seed + i, instances,
                               difficult_prob=difficult_prob,
                               width=width, height=height)
        _, _, annotations, gts = ideal_outputs(scene)
        detections, grid = simulate_detector(scene, noise)
        image_id = scene.image_id
        _atomic_write_text(layout.annotations_dir() / f"{image_id}.json",
                           dumps_annotation(annotations))
        _atomic_write_text(
            layout.detections_dir / f"{image_id}.json",
            dumps_detections(DetectionsFile(
                image_id, detections, textline_map=f"maps/{image_id}.tlm")))
        layout.maps_dir.mkdir(parents=True, exist_ok=True)
        write_tlm(layout.maps_dir / f"{image_id}.tlm", grid)
        _atomic_write_text(layout.gts_dir / f"{image_id}.json",
                           dumps_gts(GroundTruthFile(image_id, gts)))
        entries.append({"id": image_id, "width": scene.width,
                        "height": scene.height})
    layout.write_manifest(entries)
    click.echo(f"wrote {images} scene(s) to {out_dir}")


@main.command("eval")
@click.argument("results_dir", type=click.Path(exists=True, file_okay=False,
                                               path_type=Path))
@click.argument("gts_dir", type=click.Path(exists=True, file_okay=False,
                                           path_type=Path))
@click.option("--match-iou", default=0.5, show_default=True,
              type=click.FloatRange(0.0, 1.0, min_open=True, max_open=True))
@click.option("--out", default=None,
              type=click.Path(file_okay=False, path_type=Path),
              help="Also write report.json/.csv/.png into this directory.")
def cmd_eval(results_dir: Path, gts_dir: Path, match_iou: float,
             out: Path | None):
    """Score result files against ground-truth files by image id."""
    ids = sorted({p.stem for p in results_dir.glob("*.json")} |
                 {p.stem for p in gts_dir.glob("*.json")})
    per_image = []
    for image_id in ids:
        res_path = results_dir / f"{image_id}.json"
        gts_path = gts_dir / f"{image_id}.json"
        dets = read_results(res_path).detections if res_path.is_file() else []
        gts = read_gts(gts_path).instances if gts_path.is_file() else []
        per_image.append((image_id, evaluate(dets, gts, match_iou)))
    combined = combine_reports([rep for _, rep in per_image])
    click.echo(dumps_report(combined), nl=False)
    if out is not None:
        write_report_files(out, per_image, combined)


@main.command("serve")
@_project_arg
@click.option("--port", default=8800, show_default=True,
              type=click.IntRange(1, 65535))
@click.option("--host", default="127.0.0.1", show_default=True)
@_ANNOTATOR_OPT
@click.option("--ui", type=click.Path(exists=True, file_okay=False,
                                      path_type=Path), default=None,
              help="Serve this directory of static frontend files at /.")
def cmd_serve(project: Path, port: int, host: str, annotator: str | None,
              ui: Path | None):
    """Run the annotation HTTP service for the browser frontend."""
    import uvicorn

    uvicorn.run(create_app(project, annotator, static_dir=ui),
                host=host, port=port, log_level="warning")


# ---------------------------------------------------------------------------
# HTTP service

def _instance_timings(events: list[SessionEvent]) -> dict[int, int]:
    """instance_id -> labeling duration in ms (first start to the first
    finish at or after it)."""
    starts: dict[int, int] = {}
    timings: dict[int, int] = {}
    for ev in events:
        if ev.event == "start" and ev.instance_id not in starts:
            starts[ev.instance_id] = ev.timestamp_ms
        elif (ev.event == "finish" and ev.instance_id in starts
              and ev.instance_id not in timings
              and ev.timestamp_ms >= starts[ev.instance_id]):
            timings[ev.instance_id] = ev.timestamp_ms - starts[ev.instance_id]
    return timings


def create_app(project_root, annotator: str | None = None,
               static_dir=None):
    """FastAPI application backing the annotation frontend.

    State lives entirely on disk: annotation files plus ``.version``
    sidecars under the annotator's annotation directory, and per-image
    event logs. Writes are atomic and serialized per image, so concurrent
    clients editing different images never block each other and a version
    mismatch on the same image yields 409 instead of a silent overwrite.

    When ``static_dir`` is given, its files are served at ``/`` (with
    ``index.html`` as the directory page) so the browser frontend shares
    the API's origin.
    """
    from fastapi import FastAPI, HTTPException
    from fastapi.responses import FileResponse
    from pydantic import BaseModel, Field

    layout = ProjectLayout(Path(project_root))
    ann_dir = layout.annotations_dir(annotator)
    ev_dir = layout.events_dir(annotator)
    locks: dict[str, threading.Lock] = defaultdict(threading.Lock)
    locks_guard = threading.Lock()

    def image_lock(image_id: str) -> threading.Lock:
        with locks_guard:
            return locks[image_id]

    def manifest_by_id() -> dict[str, dict]:
        try:
            return {e["id"]: e for e in layout.read_manifest()}
        except FileNotFoundError:
            raise HTTPException(500, detail="project has no image manifest")

    def require_image(image_id: str) -> dict:
        entry = manifest_by_id().get(image_id)
        if entry is None:
            raise HTTPException(404, detail=f"unknown image {image_id!r}")
        return entry

    def ann_path(image_id: str) -> Path:
        return ann_dir / f"{image_id}.json"

    def version_path(image_id: str) -> Path:
        return ann_dir / f"{image_id}.version"

    def current_version(image_id: str) -> int:
        try:
            return int(version_path(image_id).read_text(encoding="utf-8"))
        except FileNotFoundError:
            return 0

    def events_path(image_id: str) -> Path:
        return ev_dir / f"{image_id}.jsonl"

    def read_events(image_id: str) -> list[SessionEvent]:
        try:
            lines = events_path(image_id).read_text(encoding="utf-8").splitlines()
        except FileNotFoundError:
            return []
        return [SessionEvent(**json.loads(line)) for line in lines if line]

    class AnnotationPut(BaseModel):
        version: int = Field(ge=0)
        annotation: dict

    class EventIn(BaseModel):
        image_id: str
        instance_id: int
        event: str
        timestamp_ms: int = Field(ge=0)

    app = FastAPI(title="scribbletext annotation service")

    @app.get("/api/images")
    def list_images():
        entries = sorted(manifest_by_id().values(), key=lambda e: e["id"])
        return [
            {"id": e["id"], "width": e["width"], "height": e["height"],
             "annotated": ann_path(e["id"]).is_file()}
            for e in entries
        ]

    @app.get("/api/images/{image_id}/file")
    def image_file(image_id: str):
        require_image(image_id)
        for ext in ("png", "jpg", "jpeg", "bmp"):
            path = layout.images_dir / f"{image_id}.{ext}"
            if path.is_file():
                return FileResponse(path)
        raise HTTPException(404, detail=f"no pixel data for image {image_id!r}")

    @app.get("/api/images/{image_id}/annotation")
    def get_annotation(image_id: str):
        require_image(image_id)
        with image_lock(image_id):
            version = current_version(image_id)
            path = ann_path(image_id)
            if not path.is_file():
                return {"version": version, "annotation": None}
            return {"version": version,
                    "annotation": annotation_to_dict(read_annotation(path))}

    @app.put("/api/images/{image_id}/annotation")
    def put_annotation(image_id: str, body: AnnotationPut):
        entry = require_image(image_id)
        try:
            ann = annotation_from_dict(body.annotation)
        except (ValueError, KeyError, TypeError) as exc:
            raise HTTPException(422, detail=f"malformed annotation: {exc}")
        if ann.image_id != image_id:
            raise HTTPException(
                422, detail="annotation image id does not match the URL")
        if (ann.width, ann.height) != (entry["width"], entry["height"]):
            raise HTTPException(
                422, detail="annotation size does not match the image")
        violations = validate(ann)
        if violations:
            raise HTTPException(422, detail=[str(v) for v in violations])
        with image_lock(image_id):
            version = current_version(image_id)
            if body.version != version:
                raise HTTPException(
                    409, detail={"message": "version conflict",
                                 "version": version})
            timings = _instance_timings(read_events(image_id))
            for inst in ann.instances:
                if inst.id in timings:
                    inst.label_time_ms = timings[inst.id]
            _atomic_write_text(ann_path(image_id), dumps_annotation(ann))
            _atomic_write_text(version_path(image_id), f"{version + 1}\n")
            return {"version": version + 1}

    @app.post("/api/images/{image_id}/events")
    def post_events(image_id: str, body: list[EventIn]):
        require_image(image_id)
        try:
            events = [SessionEvent(ev.image_id, ev.instance_id, ev.event,
                                   ev.timestamp_ms) for ev in body]
        except ValueError as exc:
            raise HTTPException(422, detail=str(exc))
        if any(ev.image_id != image_id for ev in events):
            raise HTTPException(
                422, detail="event image id does not match the URL")
        stamps = [ev.timestamp_ms for ev in events]
        if stamps != sorted(stamps):
            raise HTTPException(
                422, detail="event timestamps must be non-decreasing")
        with image_lock(image_id):
            existing = read_events(image_id)
            if existing and events and \
                    events[0].timestamp_ms < existing[-1].timestamp_ms:
                raise HTTPException(
                    422, detail="event timestamps must not move backwards")
            text = "".join(_dumps_compact(ev.to_dict())
                           for ev in existing + events)
            _atomic_write_text(events_path(image_id), text)
        return {"stored": len(events)}

    @app.get("/api/metrics/cost")
    def metrics_cost():
        files = sorted(ann_dir.glob("*.json")) if ann_dir.is_dir() else []
        report = cost_metrics([read_annotation(p) for p in files])
        return report.to_dict()

    if static_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=static_dir, html=True),
                  name="ui")

    return app


if __name__ == "__main__":
    main()
