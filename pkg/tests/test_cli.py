import json
from collections import Counter
from pathlib import Path

import numpy as np
import pytest

from trafficpipe.cli import EXIT_CONFIG, EXIT_IO, EXIT_OK, EXIT_STAGE, OUTPUT_ENV, main
from trafficpipe.pipeline import FunctionTask, register_stage
from trafficpipe.synth import (ActorSpec, SceneSpec, event_key, load_expected_events, save_scene_spec)
from trafficpipe.zones import Surface, ZoneMap, ZoneMeta, paint_rect


def tiny_scene() -> SceneSpec:
    w, h = 64, 48
    raster = np.zeros((h, w), np.uint8)
    paint_rect(raster, 1, 0, 0, w, 24)
    paint_rect(raster, 2, 0, 24, w, h)
    zmap = ZoneMap(raster, {1: ZoneMeta(1, Surface.ROAD, (1.0, 0.0)),
                            2: ZoneMeta(2, Surface.SIDEWALK, None, prohibited_classes=frozenset({"car"}))})
    actors = (ActorSpec.from_segments("car", 12, 8, 2, (48, 8), [(18, -2, 0)], texture_seed=11),
              ActorSpec.from_segments("person", 4, 8, 0, (4, 30), [(30, 1, 0)], texture_seed=12))
    return SceneSpec(w, h, 32, actors=actors, zones=zmap, noise_sigma=1.0, seed=3)


@pytest.fixture(scope="module")
def fixture_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    save_scene_spec(tiny_scene(), d / "scene.json")
    assert main(["synth", str(d / "scene.json"), "--output-dir", str(d / "scene")]) == EXIT_OK
    return d


def run_config(d: Path, **over) -> Path:
    doc = {
        "input": {"path": "scene/video.y4m"},
        "output_dir": "out",
        "stages": [
            {"name": "detect", "kind": "detections_file", "params": {"path": "scene/detections.jsonl"}},
            {"name": "flow", "kind": "flow", "params": {"detections": "detect", "window": 9}},
            {"name": "behaviors", "kind": "behaviors",
             "params": {"detections": "detect", "motions": "flow", "zones_raster": "scene/zones.pgm",
                        "zones_meta": "scene/zones.json"}},
        ],
    }
    doc.update(over)
    path = d / f"run_{abs(hash(json.dumps(doc, sort_keys=True))) % 10**8}.json"
    path.write_text(json.dumps(doc))
    return path


def read_log(d: Path, name: str) -> list[dict]:
    return [json.loads(l) for l in (d / name).read_text().splitlines()]


def test_synth_fixture_complete_and_deterministic(fixture_dir, tmp_path):
    names = {p.name for p in (fixture_dir / "scene").iterdir()}
    assert names == {"video.y4m", "truth.xml", "motions.json", "zones.pgm", "zones.json",
                     "expected_events.json", "detections.jsonl", "scene.json"}
    assert main(["synth", str(fixture_dir / "scene.json"), "--output-dir", str(tmp_path)]) == EXIT_OK
    for n in names:
        assert (tmp_path / n).read_bytes() == (fixture_dir / "scene" / n).read_bytes()


def test_synth_errors(tmp_path, monkeypatch):
    monkeypatch.delenv(OUTPUT_ENV, raising=False)
    assert main(["synth", "fig3"]) == EXIT_CONFIG
    assert main(["synth", str(tmp_path / "missing.json"), "--output-dir", str(tmp_path)]) == EXIT_CONFIG


def test_run_emits_expected_events(fixture_dir, capsys):
    out = fixture_dir / "r1"
    assert main(["run", str(run_config(fixture_dir)), "--output-dir", str(out)]) == EXIT_OK
    assert "frames" in capsys.readouterr().out
    want = Counter(event_key(e) for e in load_expected_events(fixture_dir / "scene" / "expected_events.json"))
    got = Counter(event_key(e) for e in read_log(out, "events.jsonl"))
    assert want and got == want
    assert {k for k, *_ in want} == {"WRONG_WAY"}


def test_workers_override_gives_identical_logs(fixture_dir):
    cfg = run_config(fixture_dir, stages=[
        {"name": "detect", "kind": "detections_file", "params": {"path": "scene/detections.jsonl"}},
        {"name": "flow", "kind": "flow", "params": {"detections": "detect", "window": 9}},
        {"name": "render", "kind": "render", "params": {"detections": "detect"}},
    ], annotated_video=True)
    for w in ("1", "4"):
        assert main(["run", str(cfg), "--workers", w, "--output-dir", str(fixture_dir / f"w{w}")]) == EXIT_OK
    for name in ("detections.jsonl", "motions.jsonl", "events.jsonl", "run.json", "annotated.y4m"):
        assert (fixture_dir / "w1" / name).read_bytes() == (fixture_dir / "w4" / name).read_bytes()
    assert main(["run", str(cfg), "--sequential", "--output-dir", str(fixture_dir / "seq")]) == EXIT_OK
    assert (fixture_dir / "seq" / "motions.jsonl").read_bytes() == (fixture_dir / "w1" / "motions.jsonl").read_bytes()


def test_missing_zone_file_named(fixture_dir, capsys):
    cfg = run_config(fixture_dir, stages=[
        {"name": "detect", "kind": "detections_file", "params": {"path": "scene/detections.jsonl"}},
        {"name": "behaviors", "kind": "behaviors",
         "params": {"detections": "detect", "zones_raster": "scene/nope.pgm", "zones_meta": "scene/zones.json"}},
    ])
    assert main(["run", str(cfg)]) == EXIT_CONFIG
    assert "nope.pgm" in capsys.readouterr().err


def test_config_errors_listed_all_at_once(fixture_dir, capsys):
    cfg = run_config(fixture_dir, colour="red", stages=[
        {"name": "a", "kind": "warp_drive"},
        {"name": "a", "kind": "flow", "workers": 2},
        {"name": "b", "kind": "identity", "queue_capacity": 0},
    ])
    assert main(["run", str(cfg)]) == EXIT_CONFIG
    err = capsys.readouterr().err
    for needle in ("'colour'", "warp_drive", "duplicate stage name", "workers = 1", "queue_capacity"):
        assert needle in err
    assert err.count("config error:") >= 5


def test_config_file_problems(tmp_path, capsys):
    assert main(["run", str(tmp_path / "none.json")]) == EXIT_CONFIG
    (tmp_path / "bad.json").write_text("{")
    assert main(["run", str(tmp_path / "bad.json")]) == EXIT_CONFIG
    (tmp_path / "c.json").write_text(json.dumps({"input": {"path": "v.y4m"}, "stages": []}))
    assert main(["run", str(tmp_path / "c.json")]) == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "not found" in err and "invalid JSON" in err and "output_dir" in err
    assert main(["run", str(tmp_path / "c.json"), "--workers", "0"]) == EXIT_CONFIG


def test_output_dir_precedence(fixture_dir, monkeypatch):
    cfg = run_config(fixture_dir, stages=[], output_dir="from_config")
    monkeypatch.setenv(OUTPUT_ENV, str(fixture_dir / "from_env"))
    assert main(["run", str(cfg), "--output-dir", str(fixture_dir / "from_flag")]) == EXIT_OK
    assert (fixture_dir / "from_flag" / "run.json").exists() and not (fixture_dir / "from_env").exists()
    assert main(["run", str(cfg)]) == EXIT_OK
    assert (fixture_dir / "from_env" / "run.json").exists() and not (fixture_dir / "from_config").exists()
    monkeypatch.delenv(OUTPUT_ENV)
    assert main(["run", str(cfg)]) == EXIT_OK
    assert (fixture_dir / "from_config" / "run.json").exists()


@register_stage("test_explode")
def _explode(params):
    def fn(env):
        if env.seq == params.get("at", 3):
            raise RuntimeError("kaboom")
        return None
    return FunctionTask(fn)


def test_stage_failure_exit_code(fixture_dir, capsys):
    cfg = run_config(fixture_dir, stages=[{"name": "x", "kind": "test_explode", "params": {"at": 4}}])
    assert main(["run", str(cfg), "--output-dir", str(fixture_dir / "boom")]) == EXIT_STAGE
    err = capsys.readouterr().err
    assert "'x'" in err and "4" in err and "kaboom" in err
    skip = run_config(fixture_dir, stages=[{"name": "x", "kind": "test_explode", "on_error": "skip"}])
    assert main(["run", str(skip), "--output-dir", str(fixture_dir / "skipped")]) == EXIT_OK


def test_truncated_input_is_io_failure(fixture_dir, capsys):
    d = fixture_dir / "trunc"
    d.mkdir()
    data = (fixture_dir / "scene" / "video.y4m").read_bytes()
    (d / "video.y4m").write_bytes(data[: len(data) // 2 + 17])
    cfg = d / "c.json"
    cfg.write_text(json.dumps({"input": {"path": "video.y4m"}, "output_dir": "o", "stages": []}))
    assert main(["run", str(cfg)]) == EXIT_IO
    assert "I/O failure" in capsys.readouterr().err


def test_evaluate_perfect_detections(fixture_dir, tmp_path):
    scene = fixture_dir / "scene"
    cfg = tmp_path / "eval.json"
    cfg.write_text(json.dumps({"objectness_grid": [0.1, 0.4, 0.7], "label_grid": [0.1, 0.4, 0.7]}))
    assert main(["evaluate", str(scene / "detections.jsonl"), str(scene / "truth.xml"), "--config", str(cfg),
                 "--output-dir", str(tmp_path / "rep")]) == EXIT_OK
    files = sorted(p.name for p in (tmp_path / "rep").iterdir())
    assert len([f for f in files if f.startswith("confusion_")]) == 9
    for name in ("pr_car.csv", "pr_person.csv"):
        rows = (tmp_path / "rep" / name).read_text().splitlines()[1:]
        assert all(r.split(",")[1:3] == ["1.000000", "1.000000"] for r in rows)
    conf = (tmp_path / "rep" / "confusion_obj0.400_lbl0.400.csv").read_text().splitlines()
    assert conf[0].split(",")[1:] == ["car", "person"]
    assert conf[1].split(",")[1:3] == ["1.000000", "0.000000"]
    assert conf[2].split(",")[1:3] == ["0.000000", "1.000000"]


def test_evaluate_parse_error_names_line(fixture_dir, tmp_path, capsys):
    bad = tmp_path / "d.jsonl"
    bad.write_text('{"frame_seq": 0}\n')
    assert main(["evaluate", str(bad), str(fixture_dir / "scene" / "truth.xml"),
                 "--output-dir", str(tmp_path)]) == EXIT_CONFIG
    assert ":1" in capsys.readouterr().err
    (tmp_path / "e.json").write_text('{"iou": 0.5}')
    assert main(["evaluate", str(bad), str(bad), "--config", str(tmp_path / "e.json")]) == EXIT_CONFIG


def test_report_empty_and_deterministic(fixture_dir, tmp_path):
    empty = tmp_path / "logs"
    empty.mkdir()
    assert main(["report", str(empty), "--output-dir", str(tmp_path / "a")]) == EXIT_OK
    assert (tmp_path / "a" / "counts.csv").read_text().count("\n") == 1
    assert (tmp_path / "a" / "event_counts.csv").read_text().count("\n") == 1
    logs = fixture_dir / "r1"
    if not logs.exists():
        assert main(["run", str(run_config(fixture_dir)), "--output-dir", str(logs)]) == EXIT_OK
    for sub in ("b", "c"):
        assert main(["report", str(logs), "--bucket", "0.2", "--output-dir", str(tmp_path / sub)]) == EXIT_OK
    for name in ("counts.csv", "event_counts.csv"):
        assert (tmp_path / "b" / name).read_bytes() == (tmp_path / "c" / name).read_bytes()
    assert "WRONG_WAY" in (tmp_path / "b" / "event_counts.csv").read_text()
    assert main(["report", str(logs), "--bucket", "0"]) == EXIT_CONFIG


def test_bundled_example_scene(tmp_path):
    spec = Path(__file__).resolve().parents[1] / "configs" / "crossing_scene.json"
    assert main(["synth", str(spec), "--output-dir", str(tmp_path)]) == EXIT_OK
    assert len(list(tmp_path.iterdir())) == 8
    assert load_expected_events(tmp_path / "expected_events.json")
