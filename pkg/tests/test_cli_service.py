"""Tests for the CLI commands and the annotation HTTP service."""

import json
from pathlib import Path

import pytest
from click.testing import CliRunner
from fastapi.testclient import TestClient

from scribbletext.annotation import (
    annotation_to_dict,
    dumps_annotation,
    read_annotation,
    validate,
)
from scribbletext.cli_service import (
    ProjectLayout,
    SessionEvent,
    _instance_timings,
    _short_side,
    create_app,
    main,
)
from scribbletext.evaluation import read_gts
from scribbletext.reconstruction import DetectionResult, ResultsFile, write_results

runner = CliRunner()


def tree_bytes(root: Path) -> dict:
    return {str(p.relative_to(root)): p.read_bytes()
            for p in sorted(root.rglob("*")) if p.is_file()}


def make_project(tmp_path: Path, name="proj", images=3, seed=11, **flags) -> Path:
    root = tmp_path / name
    args = ["synth", str(root), "--images", str(images), "--seed", str(seed),
            "--instances", "4"]
    for key, value in flags.items():
        args += [f"--{key.replace('_', '-')}", str(value)]
    result = runner.invoke(main, args, catch_exceptions=False)
    assert result.exit_code == 0, result.output
    return root


# ---------------------------------------------------------------------------
# synth

def test_synth_writes_complete_deterministic_tree(tmp_path):
    a = make_project(tmp_path, "a", images=3, seed=5)
    b = make_project(tmp_path, "b", images=3, seed=5)
    assert tree_bytes(a) == tree_bytes(b)
    c = make_project(tmp_path, "c", images=3, seed=6)
    assert tree_bytes(c) != tree_bytes(a)

    layout = ProjectLayout(a)
    manifest = layout.read_manifest()
    assert len(manifest) == 3
    ids = [e["id"] for e in manifest]
    assert ids == sorted(ids)
    for image_id in ids:
        assert (layout.annotations_dir() / f"{image_id}.json").is_file()
        assert (layout.detections_dir / f"{image_id}.json").is_file()
        assert (layout.maps_dir / f"{image_id}.tlm").is_file()
        assert (layout.gts_dir / f"{image_id}.json").is_file()


def test_synth_annotations_are_valid(tmp_path):
    root = make_project(tmp_path, images=2, difficult_prob=0.3)
    for path in ProjectLayout(root).annotations_dir().glob("*.json"):
        assert validate(read_annotation(path)) == []


# ---------------------------------------------------------------------------
# pipeline

def test_pipeline_zero_noise_is_perfect(tmp_path):
    root = make_project(tmp_path, images=4, seed=2)
    result = runner.invoke(main, ["pipeline", str(root),
                                  "--expansion-factor", "0.5"],
                           catch_exceptions=False)
    assert result.exit_code == 0, result.output
    report = json.loads((root / "report.json").read_text())
    assert report["f_measure"] == 1.0
    assert report["matched"] == report["num_gts"] > 0
    assert json.loads(result.output.splitlines()[-1]) == report

    layout = ProjectLayout(root)
    ids = [e["id"] for e in layout.read_manifest()]
    for image_id in ids:
        assert (layout.results_dir / f"{image_id}.json").is_file()
    csv_lines = (root / "report.csv").read_text().splitlines()
    assert csv_lines[0].startswith("image_id,")
    assert len(csv_lines) == len(ids) + 2
    assert csv_lines[-1].startswith("OVERALL,")
    assert (root / "report.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_pipeline_rerun_is_byte_identical(tmp_path):
    root = make_project(tmp_path, images=3, seed=3, drop_prob=0.2)
    args = ["pipeline", str(root), "--expansion-factor", "0.5"]
    assert runner.invoke(main, args, catch_exceptions=False).exit_code == 0
    first = tree_bytes(root)
    assert runner.invoke(main, args, catch_exceptions=False).exit_code == 0
    assert tree_bytes(root) == first


def test_pipeline_empty_detections_dir(tmp_path):
    root = tmp_path / "empty"
    for sub in ("images", "detections", "maps", "gts"):
        (root / sub).mkdir(parents=True)
    result = runner.invoke(main, ["pipeline", str(root)],
                           catch_exceptions=False)
    assert result.exit_code == 0
    report = json.loads((root / "report.json").read_text())
    assert report["num_dets"] == 0 and report["num_gts"] == 0


def test_pipeline_missing_inputs(tmp_path):
    root = make_project(tmp_path, images=3, seed=4)
    maps = sorted(ProjectLayout(root).maps_dir.glob("*.tlm"))
    maps[0].unlink()
    result = runner.invoke(main, ["pipeline", str(root),
                                  "--expansion-factor", "0.5"])
    assert result.exit_code == 0  # two images still succeed
    report = json.loads((root / "report.json").read_text())
    assert report["f_measure"] == 1.0
    csv_lines = (root / "report.csv").read_text().splitlines()
    assert len(csv_lines) == 2 + 2  # header + 2 surviving images + overall

    for path in ProjectLayout(root).maps_dir.glob("*.tlm"):
        path.unlink()
    result = runner.invoke(main, ["pipeline", str(root)])
    assert result.exit_code == 1  # every image failed


def test_pipeline_flag_range_usage_error(tmp_path):
    root = make_project(tmp_path, images=1)
    result = runner.invoke(main, ["pipeline", str(root), "--t-pseudo", "1.5"])
    assert result.exit_code == 2
    result = runner.invoke(main, ["pipeline", str(root), "--match-iou", "1.0"])
    assert result.exit_code == 2


# ---------------------------------------------------------------------------
# validate

def test_validate_clean_project(tmp_path):
    root = make_project(tmp_path, images=2)
    result = runner.invoke(main, ["validate", str(root)],
                           catch_exceptions=False)
    assert result.exit_code == 0
    assert "0 violation(s)" in result.output


def test_validate_reports_violations_with_ids(tmp_path):
    root = make_project(tmp_path, images=2, seed=9)
    ann_paths = sorted(ProjectLayout(root).annotations_dir().glob("*.json"))
    data = json.loads(ann_paths[0].read_text())
    data["instances"][0]["points"] = [[-5.0, -5.0], [1e9, 4.0]]
    data["instances"].append(dict(data["instances"][1], id=data["instances"][1]["id"]))
    ann_paths[0].write_text(json.dumps(data), encoding="utf-8")

    expected = sum(len(validate(read_annotation(p))) for p in ann_paths)
    assert expected > 0
    result = runner.invoke(main, ["validate", str(root)])
    assert result.exit_code == 1
    lines = [l for l in result.output.splitlines() if l.startswith("image ")]
    assert len(lines) == expected
    image_id = json.loads(ann_paths[0].read_text())["image"]["id"]
    assert any(image_id in l and "out-of-bounds" in l for l in lines)
    assert any("duplicate-id" in l for l in lines)
    assert f"{expected} violation(s)" in result.output


# ---------------------------------------------------------------------------
# eval

def test_eval_gt_as_results_is_perfect(tmp_path):
    root = make_project(tmp_path, images=3, seed=8, difficult_prob=0.2)
    layout = ProjectLayout(root)
    results2 = tmp_path / "gt_results"
    results2.mkdir()
    for path in layout.gts_dir.glob("*.json"):
        gt_file = read_gts(path)
        dets = [DetectionResult(boundary=inst.polygon, region_id=i,
                                transcript=None, char_count=1)
                for i, inst in enumerate(gt_file.instances)]
        write_results(results2 / path.name, ResultsFile(gt_file.image_id, dets))
    result = runner.invoke(main, ["eval", str(results2), str(layout.gts_dir),
                                  "--out", str(tmp_path / "evalout")],
                           catch_exceptions=False)
    assert result.exit_code == 0
    report = json.loads(result.output)
    assert report["f_measure"] == 1.0
    for name in ("report.json", "report.csv", "report.png"):
        assert (tmp_path / "evalout" / name).is_file()


def test_eval_counts_unmatched_ids(tmp_path):
    root = make_project(tmp_path, images=2, seed=10)
    layout = ProjectLayout(root)
    empty_results = tmp_path / "no_results"
    empty_results.mkdir()
    result = runner.invoke(main, ["eval", str(empty_results),
                                  str(layout.gts_dir)], catch_exceptions=False)
    report = json.loads(result.output)
    assert report["num_dets"] == 0 and report["matched"] == 0
    assert report["num_gts"] > 0 and report["recall"] == 0.0


# ---------------------------------------------------------------------------
# perturb

def test_perturb_offset_zero_is_identity(tmp_path):
    root = make_project(tmp_path, images=2, seed=12)
    result = runner.invoke(main, ["perturb", str(root), "--offset", "0"],
                           catch_exceptions=False)
    assert result.exit_code == 0
    src = ProjectLayout(root).annotations_dir()
    dst = src.with_name(src.name + "-perturbed")
    assert tree_bytes(src) == tree_bytes(dst)


def test_perturb_moves_non_difficult_points_within_bound(tmp_path):
    root = make_project(tmp_path, images=2, seed=13, difficult_prob=0.3)
    args = ["perturb", str(root), "--offset", "0.3", "--seed", "7"]
    assert runner.invoke(main, args, catch_exceptions=False).exit_code == 0
    layout = ProjectLayout(root)
    src = layout.annotations_dir()
    dst = src.with_name(src.name + "-perturbed")
    first = tree_bytes(dst)
    assert runner.invoke(main, args, catch_exceptions=False).exit_code == 0
    assert tree_bytes(dst) == first  # deterministic per seed
    moved_any = False
    for path in sorted(src.glob("*.json")):
        before = read_annotation(path)
        after = read_annotation(dst / path.name)
        gt_file = read_gts(layout.gts_dir / path.name)
        for b, a, gt in zip(before.instances, after.instances,
                            gt_file.instances):
            bound = 0.3 * _short_side(gt.polygon) + 1e-9
            for pb, pa in zip(b.points, a.points):
                if b.difficult:
                    assert (pa.x, pa.y) == (pb.x, pb.y)
                else:
                    assert abs(pa.x - pb.x) <= bound
                    assert abs(pa.y - pb.y) <= bound
                    moved_any |= (pa.x, pa.y) != (pb.x, pb.y)
    assert moved_any


def test_perturb_requires_annotations(tmp_path):
    root = tmp_path / "bare"
    (root / "gts").mkdir(parents=True)
    result = runner.invoke(main, ["perturb", str(root), "--offset", "0.1"])
    assert result.exit_code != 0


# ---------------------------------------------------------------------------
# cost

def test_cost_command_and_files(tmp_path):
    root = make_project(tmp_path, images=3, seed=14)
    out = tmp_path / "costout"
    result = runner.invoke(main, ["cost", str(root), "--out", str(out)],
                           catch_exceptions=False)
    assert result.exit_code == 0
    report = json.loads(result.output)
    layout = ProjectLayout(root)
    anns = [read_annotation(p)
            for p in sorted(layout.annotations_dir().glob("*.json"))]
    points = [len(i.points) for a in anns for i in a.instances]
    assert report["instance_count"] == len(points)
    assert report["avg_points_per_instance"] == pytest.approx(
        sum(points) / len(points))
    assert report["avg_label_time_ms"] is None
    assert json.loads((out / "cost.json").read_text()) == report
    assert (out / "cost.csv").read_text().splitlines()[0] == \
        "image_id,instances,points"
    assert (out / "cost.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


# ---------------------------------------------------------------------------
# HTTP service

@pytest.fixture()
def service(tmp_path):
    root = make_project(tmp_path, images=2, seed=21)
    app = create_app(root)
    with TestClient(app) as client:
        yield root, client


def first_image(client) -> dict:
    images = client.get("/api/images").json()
    return images[0]


def test_service_lists_images_sorted(service):
    _, client = service
    resp = client.get("/api/images")
    assert resp.status_code == 200
    images = resp.json()
    assert len(images) == 2
    assert [e["id"] for e in images] == sorted(e["id"] for e in images)
    assert all(set(e) == {"id", "width", "height", "annotated"}
               for e in images)
    assert all(e["annotated"] for e in images)  # synth writes annotations


def test_service_annotation_roundtrip_and_versioning(service):
    root, client = service
    image_id = first_image(client)["id"]
    got = client.get(f"/api/images/{image_id}/annotation").json()
    assert got["version"] == 0
    assert got["annotation"]["image"]["id"] == image_id

    doc = got["annotation"]
    doc["instances"][0]["transcript"] = "hello"
    put = client.put(f"/api/images/{image_id}/annotation",
                     json={"version": 0, "annotation": doc})
    assert put.status_code == 200
    assert put.json() == {"version": 1}

    again = client.get(f"/api/images/{image_id}/annotation").json()
    assert again["version"] == 1
    assert again["annotation"] == doc

    stale = client.put(f"/api/images/{image_id}/annotation",
                       json={"version": 0, "annotation": doc})
    assert stale.status_code == 409
    assert stale.json()["detail"]["version"] == 1

    fresh = client.put(f"/api/images/{image_id}/annotation",
                       json={"version": 1, "annotation": doc})
    assert fresh.status_code == 200 and fresh.json() == {"version": 2}

    stored = read_annotation(
        ProjectLayout(root).annotations_dir() / f"{image_id}.json")
    assert validate(stored) == []
    assert annotation_to_dict(stored) == doc


def test_service_unknown_image_and_missing_pixels(service):
    _, client = service
    assert client.get("/api/images/nope/annotation").status_code == 404
    assert client.put("/api/images/nope/annotation",
                      json={"version": 0, "annotation": {}}).status_code == 404
    assert client.post("/api/images/nope/events", json=[]).status_code == 404
    image_id = first_image(client)["id"]
    # synthetic projects carry no pixel files
    assert client.get(f"/api/images/{image_id}/file").status_code == 404


def test_service_put_rejects_invalid_documents(service):
    _, client = service
    entry = first_image(client)
    image_id = entry["id"]
    doc = client.get(f"/api/images/{image_id}/annotation").json()["annotation"]

    bad = json.loads(json.dumps(doc))
    bad["instances"][0]["points"] = [[-1.0, -1.0], [5.0, 5.0]]
    resp = client.put(f"/api/images/{image_id}/annotation",
                      json={"version": 0, "annotation": bad})
    assert resp.status_code == 422
    assert any("out-of-bounds" in d for d in resp.json()["detail"])

    wrong_id = json.loads(json.dumps(doc))
    wrong_id["image"]["id"] = "other"
    assert client.put(f"/api/images/{image_id}/annotation",
                      json={"version": 0, "annotation": wrong_id}
                      ).status_code == 422

    wrong_size = json.loads(json.dumps(doc))
    wrong_size["image"]["width"] = entry["width"] + 1
    assert client.put(f"/api/images/{image_id}/annotation",
                      json={"version": 0, "annotation": wrong_size}
                      ).status_code == 422

    assert client.put(f"/api/images/{image_id}/annotation",
                      json={"version": 0, "annotation": {"nonsense": True}}
                      ).status_code == 422
    # nothing was written
    assert client.get(f"/api/images/{image_id}/annotation").json()["version"] == 0


def test_service_events_drive_label_timing(service):
    _, client = service
    image_id = first_image(client)["id"]
    events = [
        {"image_id": image_id, "instance_id": 0, "event": "start",
         "timestamp_ms": 1000},
        {"image_id": image_id, "instance_id": 0, "event": "point",
         "timestamp_ms": 1800},
        {"image_id": image_id, "instance_id": 1, "event": "start",
         "timestamp_ms": 2000},
        {"image_id": image_id, "instance_id": 0, "event": "finish",
         "timestamp_ms": 3500},
    ]
    resp = client.post(f"/api/images/{image_id}/events", json=events)
    assert resp.status_code == 200 and resp.json() == {"stored": 4}

    doc = client.get(f"/api/images/{image_id}/annotation").json()["annotation"]
    doc["instances"][0]["label_time_ms"] = 999999  # client value is overridden
    put = client.put(f"/api/images/{image_id}/annotation",
                     json={"version": 0, "annotation": doc})
    assert put.status_code == 200
    saved = client.get(f"/api/images/{image_id}/annotation").json()["annotation"]
    assert saved["instances"][0]["label_time_ms"] == 2500
    assert "label_time_ms" not in saved["instances"][1]  # no finish event


def test_service_event_validation(service):
    _, client = service
    image_id = first_image(client)["id"]
    base = {"image_id": image_id, "instance_id": 0, "timestamp_ms": 100}
    assert client.post(f"/api/images/{image_id}/events",
                       json=[dict(base, event="warp")]).status_code == 422
    assert client.post(f"/api/images/{image_id}/events",
                       json=[dict(base, event="start", image_id="other")]
                       ).status_code == 422
    out_of_order = [dict(base, event="start", timestamp_ms=500),
                    dict(base, event="finish", timestamp_ms=400)]
    assert client.post(f"/api/images/{image_id}/events",
                       json=out_of_order).status_code == 422
    assert client.post(f"/api/images/{image_id}/events",
                       json=[dict(base, event="start", timestamp_ms=900)]
                       ).status_code == 200
    # later batches may not move backwards in time
    assert client.post(f"/api/images/{image_id}/events",
                       json=[dict(base, event="finish", timestamp_ms=800)]
                       ).status_code == 422


def test_service_cost_matches_cli(service):
    root, client = service
    image_id = first_image(client)["id"]
    doc = client.get(f"/api/images/{image_id}/annotation").json()["annotation"]
    doc["instances"][0]["label_time_ms"] = 1234
    assert client.put(f"/api/images/{image_id}/annotation",
                      json={"version": 0, "annotation": doc}).status_code == 200
    api_cost = client.get("/api/metrics/cost").json()
    cli = runner.invoke(main, ["cost", str(root)], catch_exceptions=False)
    assert json.loads(cli.output) == api_cost
    assert api_cost["avg_label_time_ms"] == 1234


def test_service_persists_across_reload(service):
    root, client = service
    image_id = first_image(client)["id"]
    doc = client.get(f"/api/images/{image_id}/annotation").json()["annotation"]
    doc["instances"][0]["transcript"] = "persisted"
    assert client.put(f"/api/images/{image_id}/annotation",
                      json={"version": 0, "annotation": doc}).status_code == 200
    before = client.get(f"/api/images/{image_id}/annotation").json()

    with TestClient(create_app(root)) as reloaded:
        after = reloaded.get(f"/api/images/{image_id}/annotation").json()
        assert after == before
        assert reloaded.get("/api/images").json() == \
            client.get("/api/images").json()


def test_service_static_ui_mount(tmp_path):
    root = make_project(tmp_path, images=1, seed=31)
    ui_dir = tmp_path / "ui"
    ui_dir.mkdir()
    (ui_dir / "index.html").write_text("<html><body>annotator</body></html>",
                                       encoding="utf-8")
    (ui_dir / "app.js").write_text("export {};\n", encoding="utf-8")
    with TestClient(create_app(root, static_dir=ui_dir)) as client:
        page = client.get("/")
        assert page.status_code == 200
        assert "annotator" in page.text
        assert client.get("/app.js").status_code == 200
        # API routes keep precedence over the static mount
        assert client.get("/api/images").status_code == 200
    with TestClient(create_app(root)) as bare:
        assert bare.get("/").status_code == 404


def test_service_per_annotator_sets_are_isolated(tmp_path):
    root = make_project(tmp_path, images=1, seed=30)
    layout = ProjectLayout(root)
    with TestClient(create_app(root, annotator="alice")) as alice:
        image_id = alice.get("/api/images").json()[0]["id"]
        # alice starts from an empty personal set
        assert not alice.get("/api/images").json()[0]["annotated"]
        got = alice.get(f"/api/images/{image_id}/annotation").json()
        assert got == {"version": 0, "annotation": None}
        doc = annotation_to_dict(read_annotation(
            layout.annotations_dir() / f"{image_id}.json"))
        assert alice.put(f"/api/images/{image_id}/annotation",
                         json={"version": 0, "annotation": doc}
                         ).status_code == 200
    assert (layout.annotations_dir("alice") / f"{image_id}.json").is_file()
    with TestClient(create_app(root)) as default:
        # the shared set still has version 0 and its original content
        got = default.get(f"/api/images/{image_id}/annotation").json()
        assert got["version"] == 0
        assert got["annotation"] == doc


# ---------------------------------------------------------------------------
# timing helper

def test_instance_timings_rules():
    def ev(instance_id, kind, ts):
        return SessionEvent("img", instance_id, kind, ts)

    events = [ev(0, "start", 100), ev(0, "point", 200), ev(0, "finish", 700),
              ev(1, "start", 300), ev(1, "discard", 400),
              ev(2, "finish", 50), ev(2, "start", 60), ev(2, "finish", 90)]
    timings = _instance_timings(events)
    assert timings[0] == 600
    assert 1 not in timings            # never finished
    assert timings[2] == 30            # finish before start is ignored
    with pytest.raises(ValueError):
        ev(0, "warp", 100)
    with pytest.raises(ValueError):
        ev(0, "start", -5)
