import time

import numpy as np
import pytest
from fastapi.testclient import TestClient

from sketchtraj.fixtures import synth_fixture, write_fixture
from sketchtraj.geometry import camera_to_dict
from sketchtraj.server import create_app
from sketchtraj.service import SessionStore


@pytest.fixture(scope="module")
def bundle():
    return synth_fixture("arc", noise=0.005, seed=0)


@pytest.fixture()
def client(tmp_path):
    store = SessionStore(tmp_path / "data")
    return TestClient(create_app(store))


def create_session(client, bundle, n_views=3):
    manifest = [camera_to_dict(cam) for cam in bundle.cameras[:n_views]]
    resp = client.post("/sessions", json={"views": manifest})
    assert resp.status_code == 201, resp.text
    return resp.json()


def submit_all(client, bundle, sid, n_views=3):
    for vid in list(bundle.sketch_files)[:n_views]:
        resp = client.post(f"/sessions/{sid}/views/{vid}/sketches",
                           json=bundle.sketch_files[vid])
        assert resp.status_code == 200, resp.text


def train_and_wait(client, sid, config, timeout=120.0):
    resp = client.post(f"/sessions/{sid}/train", json={"config": config})
    assert resp.status_code == 202, resp.text
    deadline = time.time() + timeout
    while time.time() < deadline:
        status = client.get(f"/sessions/{sid}").json()
        if status["status"] in ("trained", "failed"):
            return status
        time.sleep(0.3)
    raise TimeoutError("training did not finish in time")


FAST = {
    "flow": {"epochs": 150, "hidden_width": 16, "seed": 0},
    "intersect": {"grid": 24, "n_depth": 24, "n_time": 8},
    "fit": {"steps": 300},
}


class TestSessionEndpoints:
    def test_create_and_get(self, client, bundle):
        created = create_session(client, bundle)
        sid = created["id"]
        assert created["status"] == "sketching"
        assert created["heldout_view_ids"] == ["view3"]
        got = client.get(f"/sessions/{sid}").json()
        assert got["views"] == ["view1", "view2", "view3"]
        assert client.get("/sessions").json()["sessions"] == [sid]

    def test_bad_manifest_is_400(self, client, bundle):
        manifest = [camera_to_dict(cam) for cam in bundle.cameras[:2]]
        manifest[0]["orientation_rows"][1] += 0.01
        resp = client.post("/sessions", json={"views": manifest})
        assert resp.status_code == 400
        assert "orthonormal" in resp.json()["detail"]

    def test_unknown_session_is_404(self, client):
        assert client.get("/sessions/missing").status_code == 404
        assert client.get("/sessions/missing/samples").status_code == 404

    def test_sketch_submission_counts(self, client, bundle):
        sid = create_session(client, bundle)["id"]
        payload = bundle.sketch_files["view1"]
        resp = client.post(f"/sessions/{sid}/views/view1/sketches", json=payload)
        assert resp.json()["stored_strokes"] == 3
        resp = client.post(f"/sessions/{sid}/views/view1/sketches", json=payload)
        assert resp.json()["stored_strokes"] == 6

    def test_sketch_idempotency_key(self, client, bundle):
        sid = create_session(client, bundle)["id"]
        payload = dict(bundle.sketch_files["view1"])
        payload["idempotency_key"] = "abc"
        client.post(f"/sessions/{sid}/views/view1/sketches", json=payload)
        resp = client.post(f"/sessions/{sid}/views/view1/sketches", json=payload)
        assert resp.json()["stored_strokes"] == 3

    def test_invalid_sketch_is_400(self, client, bundle):
        sid = create_session(client, bundle)["id"]
        resp = client.post(f"/sessions/{sid}/views/view1/sketches",
                           json={"strokes": [[[0.0, 0.5, 0.5]]]})
        assert resp.status_code == 400
        assert "l >= 2" in resp.json()["detail"]

    def test_train_without_sketches_is_409(self, client, bundle):
        sid = create_session(client, bundle)["id"]
        resp = client.post(f"/sessions/{sid}/train", json={})
        assert resp.status_code == 409


@pytest.fixture(scope="module")
def trained(bundle, tmp_path_factory):
    store = SessionStore(tmp_path_factory.mktemp("api") / "data")
    api_client = TestClient(create_app(store))
    sid = create_session(api_client, bundle)["id"]
    submit_all(api_client, bundle, sid)
    status = train_and_wait(api_client, sid, FAST)
    assert status["status"] == "trained", status
    return api_client, sid


class TestTrainedFlow:
    def test_progress_reported_during_training(self, client, bundle):
        sid = create_session(client, bundle)["id"]
        submit_all(client, bundle, sid)
        client.post(f"/sessions/{sid}/train", json={"config": FAST})
        phases = set()
        for _ in range(400):
            status = client.get(f"/sessions/{sid}").json()
            phases.add(status["progress"].get("phase"))
            if status["status"] in ("trained", "failed"):
                break
            time.sleep(0.05)
        assert status["status"] == "trained"
        assert any(p and p.startswith("flow:") for p in phases)

    def test_samples_endpoint(self, trained):
        client, sid = trained
        resp = client.get(f"/sessions/{sid}/samples",
                          params={"n": 2, "seed": 3, "timesteps": 30})
        body = resp.json()
        assert len(body["trajectories"]) == 2
        assert len(body["trajectories"][0]["points"]) == 30
        again = client.get(f"/sessions/{sid}/samples",
                           params={"n": 2, "seed": 3, "timesteps": 30}).json()
        assert body == again

    def test_samples_with_start(self, trained):
        client, sid = trained
        resp = client.get(f"/sessions/{sid}/samples",
                          params={"n": 1, "start": "0.05,0.0,0.1"})
        first = resp.json()["trajectories"][0]["points"][0]
        np.testing.assert_allclose(first, [0.05, 0.0, 0.1], atol=1e-9)
        bad = client.get(f"/sessions/{sid}/samples", params={"start": "1,2"})
        assert bad.status_code == 400

    def test_overlay_endpoint(self, trained):
        client, sid = trained
        resp = client.get(f"/sessions/{sid}/overlay/view3", params={"n": 4})
        lines = resp.json()["polylines"]
        assert len(lines) == 4
        assert all(len(line["points"]) >= 2 for line in lines)

    def test_overlay_unknown_view_is_409(self, trained):
        client, sid = trained
        assert client.get(f"/sessions/{sid}/overlay/nope").status_code == 409

    def test_report_endpoint(self, trained):
        client, sid = trained
        body = client.get(f"/sessions/{sid}/report").json()
        assert set(body["baselines"]) == {"linear", "nn"}
        assert body["mfd_mean"] >= 0

    def test_untrained_samples_conflict(self, client, bundle):
        sid = create_session(client, bundle)["id"]
        assert client.get(f"/sessions/{sid}/samples").status_code == 409


class TestImages:
    def test_image_served(self, tmp_path, bundle):
        fixture_dir = tmp_path / "fx"
        write_fixture(bundle, fixture_dir)
        import json as json_mod

        manifest = json_mod.loads((fixture_dir / "manifest.json").read_text())
        for view in manifest:
            view["image_path"] = str(fixture_dir / view["image_path"])
        store = SessionStore(tmp_path / "data")
        client = TestClient(create_app(store))
        sid = client.post("/sessions", json={"views": manifest}).json()["id"]
        resp = client.get(f"/sessions/{sid}/images/view1")
        assert resp.status_code == 200
        assert resp.content[:8] == b"\x89PNG\r\n\x1a\n"
        assert client.get(f"/sessions/{sid}/images/nope").status_code == 409
