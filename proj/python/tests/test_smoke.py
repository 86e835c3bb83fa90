import json
import math
import os
import pathlib

import numpy as np
import pytest

import streetstage as ss

DATA = pathlib.Path(os.environ.get("STREETSTAGE_DATA_DIR", pathlib.Path(__file__).parents[2] / "data"))
R = 6371008.8


def small_demo(tmp_path, w=128, h=72):
    doc = json.loads((DATA / "demo_scene.json").read_text())
    doc["resolution"] = [w, h]
    scene = ss.Scene.from_dict(doc)
    ss.resolve_references(scene, DATA)
    return scene


def test_point_straight_ahead_lands_on_center_column():
    cam = ss.CameraPose(ss.GeoPoint.from_degrees(40.0, -105.0), heading=0.0, pitch=0.0,
                        horizontal_fov=ss.rad(90), vertical_fov=ss.rad(60), height_above_ground=2.5)
    # 20 m due north, top of a 2.5 m subject: level with the lens
    actor = ss.GeoPoint.from_degrees(40.0 + math.degrees(20.0 / R), -105.0)
    u, v, vis = ss.project_actor_point(actor, 2.5, cam, ss.ScreenSize(1280, 720))
    assert vis == "on_screen"
    assert u == pytest.approx(640.0, abs=0.5)
    assert v == pytest.approx(360.0, abs=0.5)


def test_ground_point_matches_pinhole_oracle():
    cam = ss.CameraPose(ss.GeoPoint.from_degrees(40.0, -105.0), heading=ss.rad(90), pitch=0.0,
                        horizontal_fov=ss.rad(90), vertical_fov=ss.rad(60), height_above_ground=2.5)
    # 10 m east, 2 m north; camera looks east
    p = ss.offset_to_geo(cam.position, 10.0, 2.0)
    u, v, _ = ss.project_actor_point(p, 0.0, cam, ss.ScreenSize(1000, 600))
    az = math.atan2(2.0, 10.0)  # to the left
    assert u == pytest.approx(500 - 500 * math.tan(az) / math.tan(math.pi / 4), abs=1.0)
    el = math.atan2(-2.5, math.hypot(10.0, 2.0))
    assert v == pytest.approx(300 - 300 * math.tan(el) / math.tan(math.pi / 6), abs=1.0)


def test_unproject_round_trip():
    cam = ss.CameraPose(ss.GeoPoint.from_degrees(40.01, -105.27), heading=ss.rad(30), pitch=ss.rad(-10),
                        horizontal_fov=ss.rad(80), vertical_fov=ss.rad(50))
    screen = ss.ScreenSize(800, 500)
    g = ss.unproject_to_ground(300.0, 400.0, cam, screen)
    u, v, _ = ss.project_actor_point(g, 0.0, cam, screen)
    assert (u, v) == pytest.approx((300.0, 400.0), abs=1e-3)
    with pytest.raises(ss.Error) as e:
        ss.unproject_to_ground(300.0, 10.0, cam, screen)
    assert e.value.code == "NoGroundIntersection"


def test_scene_load_validate_sample():
    scene = ss.load_scene(DATA / "demo_scene.json")
    assert scene.actor_ids == ["walker", "cyclist"]
    assert scene.frame_count == 80
    assert ss.validate_scene(scene) == []
    assert ss.check_scene(scene, DATA) == []
    s = ss.sample_scene(scene, 2.0)
    assert [q["actor_id"] for q in s["quads"]] == ["walker", "cyclist"]
    assert s["resolution"] == [1280, 720]

    broken = ss.load_scene(DATA / "broken_scene.json")
    paths = [p for p, _ in ss.check_scene(broken, DATA)]
    assert "scene_prompt" in paths and "actors[1].id" in paths


def test_render_view_from_array():
    pano = np.zeros((256, 512, 3), np.uint8)
    pano[:, :, 1] = 200
    p = ss.Panorama(pano, 0.0)
    cam = ss.CameraPose(ss.GeoPoint.from_degrees(40, -105), horizontal_fov=ss.rad(60), vertical_fov=ss.rad(40))
    img = ss.render_view(p, cam, ss.ScreenSize(64, 48))
    assert img.shape == (48, 64, 3)
    assert (img[:, :, 1] == 200).all()


def test_offline_pipeline_with_mock(tmp_path):
    scene = small_demo(tmp_path)
    svc = ss.Service({"imagery": {"fixtures": str(DATA / "fixtures")}, "data_dir": str(tmp_path / "d")})
    nodes = svc.search_nodes("-105.2705,40.0095,-105.2695,40.0102")
    assert [n["id"] for n in nodes] == ["demo-0002", "demo-0001", "demo-0003"]

    pano = ss.Panorama.load(DATA / "fixtures" / "demo-0001.png", ss.rad(12.5))
    bg, masks = ss.render_inputs(scene, pano, tmp_path / "in")
    assert len(masks) == 2
    m = ss.read_manifest(bg)
    assert (m["count"], m["width"], m["height"]) == (80, 128, 72)
    mask = ss.read_frame(masks[0], 40)
    assert set(np.unique(mask[:, :, 3])) <= {0, 255}

    bundle = ss.build_bundle(scene, bg, masks)
    assert bundle.mask_count == 2
    out = ss.mock_generate(bundle, tmp_path / "gen")
    assert ss.read_manifest(out)["count"] == 80


def test_service_render_and_wait(tmp_path):
    scene = small_demo(tmp_path, 96, 54)
    svc = ss.Service({"imagery": {"fixtures": str(DATA / "fixtures")}, "data_dir": str(tmp_path / "d")})
    view = svc.view("demo-0001", 0.0, 0.0, ss.rad(90), 160, 90)
    assert view.shape == (90, 160, 3)
    prev = svc.preview(scene, 2.5)
    assert ((prev == [0, 255, 0]).all(axis=2)).sum() > 0

    job = svc.render(scene, tmp_path / "work")
    done = svc.wait(job, 120)
    assert done["state"] == "done"
    assert ss.read_manifest(done["result"])["count"] == 80
    assert svc.render(scene, tmp_path / "work") == job

    scene.scene_prompt = ""
    with pytest.raises(ss.Error) as e:
        svc.render(scene, tmp_path / "w2")
    assert e.value.code == "EmptyPrompt"


def test_config_errors_surface_as_error():
    with pytest.raises(ss.Error) as e:
        ss.Service({"imagery": {"provder": "x"}})
    assert e.value.code == "InvalidArgument"
