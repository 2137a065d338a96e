import io
import json
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient
from PIL import Image

from dragfield.service import create_app
from tests.test_engine import tiny_scenario


@pytest.fixture()
def client(tmp_path):
    app = create_app(out_dir=str(tmp_path))
    with TestClient(app) as tc:
        yield tc


def make_body(steps=12, **config):
    sc = tiny_scenario(steps=steps)
    return {"scenario": sc.to_dict(), "config_overrides": config}


def wait_until(predicate, timeout=30.0):
    deadline = time.time() + timeout
    while time.time() < deadline:
        if predicate():
            return True
        time.sleep(0.05)
    return False


def test_create_session_happy_path(client):
    resp = client.post("/sessions", json=make_body())
    assert resp.status_code == 201
    body = resp.json()
    assert body["status"] == "running"
    assert body["id"]
    listing = client.get("/sessions").json()["sessions"]
    assert any(s["id"] == body["id"] for s in listing)


def test_create_session_validation_errors(client):
    doc = make_body()
    doc["scenario"]["points"][0]["handle"] = [4]
    resp = client.post("/sessions", json=doc)
    assert resp.status_code == 422
    errors = resp.json()["errors"]
    assert any("points[0].handle" in e["message"] for e in errors)


def test_unknown_session_404(client):
    assert client.get("/sessions/nope/state").status_code == 404
    assert client.post("/sessions/nope/control",
                       json={"action": "step"}).status_code == 404


def test_step_and_state(client):
    sid = client.post("/sessions", json=make_body()).json()["id"]
    resp = client.post(f"/sessions/{sid}/control",
                       json={"action": "step", "steps": 10})
    assert resp.status_code == 202
    assert wait_until(lambda: client.get(f"/sessions/{sid}/state").json()["step"] >= 10
                      or client.get(f"/sessions/{sid}/state").json()["status"] != "running")
    state = client.get(f"/sessions/{sid}/state").json()
    assert state["step"] >= 10 or state["status"] in ("converged", "max_steps")
    assert len(state["points"]) == 1
    assert len(state["gate_history"]) == state["step"]


def test_run_to_terminal_and_flush(client, tmp_path):
    sid = client.post("/sessions", json=make_body(steps=25)).json()["id"]
    client.post(f"/sessions/{sid}/control", json={"action": "run"})
    assert wait_until(
        lambda: client.get(f"/sessions/{sid}/state").json()["status"]
        in ("converged", "max_steps"))
    state = client.get(f"/sessions/{sid}/state").json()
    assert state["status"] in ("converged", "max_steps")
    # write-through on terminal: the record is on disk and loadable
    record_path = tmp_path / f"session_{sid}" / "run_record.json"
    assert wait_until(lambda: record_path.exists())
    doc = json.loads(record_path.read_text())
    assert doc["status"] == state["status"]


def test_stepping_terminal_session_conflicts(client):
    sid = client.post("/sessions", json=make_body(steps=0)).json()["id"]
    # a zero-budget session parks immediately once asked to run
    client.post(f"/sessions/{sid}/control", json={"action": "run"})
    assert wait_until(
        lambda: client.get(f"/sessions/{sid}/state").json()["status"] == "max_steps")
    resp = client.post(f"/sessions/{sid}/control", json={"action": "step"})
    assert resp.status_code == 409


def test_invalid_action_rejected(client):
    sid = client.post("/sessions", json=make_body()).json()["id"]
    resp = client.post(f"/sessions/{sid}/control", json={"action": "dance"})
    assert resp.status_code == 422


def test_event_stream_delivers_steps_in_order(client):
    sid = client.post("/sessions", json=make_body(steps=6)).json()["id"]
    client.post(f"/sessions/{sid}/control", json={"action": "run"})
    assert wait_until(
        lambda: client.get(f"/sessions/{sid}/state").json()["status"]
        in ("converged", "max_steps"))
    total = client.get(f"/sessions/{sid}/state").json()["step"]
    assert total >= 1

    steps = []
    with client.stream("GET", f"/sessions/{sid}/events") as resp:
        assert resp.status_code == 200
        for line in resp.iter_lines():
            if line.startswith("data: "):
                message = json.loads(line[6:])
                if message["type"] == "step":
                    steps.append(message["record"]["step"])
    assert steps == list(range(1, total + 1))


def test_frame_endpoint_returns_png(client):
    sid = client.post("/sessions", json=make_body()).json()["id"]
    resp = client.get(f"/sessions/{sid}/frame")
    assert resp.status_code == 200
    assert resp.headers["content-type"] == "image/png"
    img = Image.open(io.BytesIO(resp.content))
    assert img.size == (48, 48)


def test_frame_heatmap_peak_matches_tracked_point(client):
    sid = client.post("/sessions", json=make_body()).json()["id"]
    client.post(f"/sessions/{sid}/control", json={"action": "step", "steps": 3})
    assert wait_until(lambda: client.get(f"/sessions/{sid}/state").json()["step"] >= 3)
    state = client.get(f"/sessions/{sid}/state").json()
    tracked = state["points"][0]["p"]

    plain = client.get(f"/sessions/{sid}/frame").content
    heat = client.get(f"/sessions/{sid}/frame?heatmap_point=0").content
    assert plain != heat
    img = np.asarray(Image.open(io.BytesIO(heat)), dtype=np.int32)
    base = np.asarray(Image.open(io.BytesIO(plain)), dtype=np.int32)
    # the hottest overlay pixel (most red-shifted) sits on the tracked point
    redness = (img[..., 0] - img[..., 2]) - (base[..., 0] - base[..., 2])
    dy, dx = np.unravel_index(np.argmax(redness), redness.shape)
    assert abs(dx - tracked[0]) <= 1 and abs(dy - tracked[1]) <= 1


def test_sessions_are_independent(client):
    a = client.post("/sessions", json=make_body()).json()["id"]
    b = client.post("/sessions", json=make_body()).json()["id"]
    client.post(f"/sessions/{a}/control", json={"action": "step", "steps": 4})
    assert wait_until(lambda: client.get(f"/sessions/{a}/state").json()["step"] >= 4)
    assert client.get(f"/sessions/{b}/state").json()["step"] == 0
