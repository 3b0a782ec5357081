import numpy as np
import pytest
from fastapi.testclient import TestClient

from quaydeck.calib import Anchor, AnchorSet, save_anchor_set
from quaydeck.env import FeatureScales, rollout
from quaydeck.instance import GeneratorConfig, generate_instance, save_instance
from quaydeck.moo import NormalizationBounds, evaluate_policy
from quaydeck.nn import init_params, save_checkpoint
from quaydeck.service import create_app


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("service-data")
    cfg = GeneratorConfig(qc_count=3, yard_count=6, task_count=18, truck_count=5)
    inst = generate_instance(cfg, seed=77)
    save_instance(inst, root / "instances" / "pilot.json")
    scales = FeatureScales.for_instance(inst)
    policy = init_params(
        seed=5, meta={"scales": {"dist": scales.dist, "count": scales.count}}
    )
    save_checkpoint(policy, root / "checkpoints" / "pilot.ckpt")
    # Asymmetric fan (anchor points at 10 and 50 degrees) so calibrating the
    # even preference visibly shifts it.
    anchors = AnchorSet(
        [Anchor((0.8, 0.2), (0.9848, 0.1736)), Anchor((0.2, 0.8), (0.6428, 0.766))],
        NormalizationBounds((0.0, 0.0), (1.0, 1.0)),
    )
    save_anchor_set(anchors, root / "anchors" / "pilot.txt")
    return root


@pytest.fixture()
def client(data_dir):
    return TestClient(create_app(data_dir))


def make_session(client, **overrides):
    body = {"instance_id": "pilot", "checkpoint_id": "pilot",
            "preference": [0.5, 0.5], "seed": 13}
    body.update(overrides)
    resp = client.post("/sessions", json=body)
    assert resp.status_code == 200, resp.text
    return resp.json()


def test_create_session_starts_paused_at_zero(client):
    out = make_session(client)
    state = out["state"]
    assert out["api"] == "quaydeck-api/1"
    assert state["kind"] == "snapshot" and state["seq"] == 0
    assert state["clock"] == 0.0 and state["mode"] == "paused"
    assert len(state["qcs"]) == 3 and len(state["trucks"]) == 5
    layout = out["layout"]
    assert len(layout["nodes"]) == 3 + 6 + 1
    assert layout["nodes"][0]["kind"] == "qc"


def test_unknown_checkpoint_404(client):
    resp = client.post("/sessions", json={
        "instance_id": "pilot", "checkpoint_id": "ghost", "preference": [0.5, 0.5],
    })
    assert resp.status_code == 404


def test_calibrate_without_anchors_errors(client, data_dir):
    (data_dir / "anchors" / "pilot.txt").rename(data_dir / "anchors" / "hold.txt")
    try:
        resp = client.post("/sessions", json={
            "instance_id": "pilot", "checkpoint_id": "pilot",
            "preference": [0.5, 0.5], "calibrate": True,
        })
        assert resp.status_code == 404
    finally:
        (data_dir / "anchors" / "hold.txt").rename(data_dir / "anchors" / "pilot.txt")


def test_negative_preference_rejected(client):
    sid = make_session(client)["session_id"]
    resp = client.post(f"/sessions/{sid}/preference",
                       json={"preference": [-0.2, 1.2]})
    assert resp.status_code == 422


def test_step_emits_exactly_one_decision_frame(client):
    sid = make_session(client)["session_id"]
    resp = client.post(f"/sessions/{sid}/control",
                       json={"command": "step", "steps": 1})
    state = resp.json()
    assert state["kind"] == "decision"
    assert state["seq"] == 1
    assert state["decision"]["preference"] == [0.5, 0.5]


def test_pause_is_idempotent(client):
    sid = make_session(client)["session_id"]
    for _ in range(3):
        resp = client.post(f"/sessions/{sid}/control", json={"command": "pause"})
        assert resp.json()["mode"] == "paused"


def test_preference_applies_at_next_decision(client):
    sid = make_session(client)["session_id"]
    client.post(f"/sessions/{sid}/control", json={"command": "step", "steps": 3})
    ack = client.post(f"/sessions/{sid}/preference",
                      json={"preference": [1.0, 0.0]}).json()
    assert ack["accepted"] == [1.0, 0.0]
    state = client.post(f"/sessions/{sid}/control",
                        json={"command": "step", "steps": 1}).json()
    assert state["decision"]["preference"] == [1.0, 0.0]
    assert state["seq"] >= ack["effective_from_seq"]


def test_calibrated_preference_echoed(client):
    sid = make_session(client, calibrate=True)["session_id"]
    state = client.post(f"/sessions/{sid}/control",
                        json={"command": "step", "steps": 1}).json()
    decision = state["decision"]
    assert decision["preference"] == [0.5, 0.5]
    # With the synthetic two-anchor fan, [0.5, 0.5] interpolates strictly
    # between the anchor preferences.
    calibrated = decision["calibrated_preference"]
    assert calibrated != decision["preference"]
    assert 0.2 <= calibrated[0] <= 0.8


def test_run_to_completion_matches_offline_rollout(client, data_dir):
    sid = make_session(client, seed=21)["session_id"]
    client.post(f"/sessions/{sid}/control", json={"command": "speed", "speed": 1e9})
    client.post(f"/sessions/{sid}/control", json={"command": "run"})
    for _ in range(400):
        state = client.get(f"/sessions/{sid}/state").json()
        if state["done"]:
            break
    assert state["done"] and state["kind"] == "terminal"

    from quaydeck.instance import load_instance
    from quaydeck.nn import load_checkpoint

    inst = load_instance(data_dir / "instances" / "pilot.json")
    policy = load_checkpoint(data_dir / "checkpoints" / "pilot.ckpt")
    scales = FeatureScales(dist=policy.meta["scales"]["dist"],
                           count=policy.meta["scales"]["count"])
    traj = rollout(policy, inst, [0.5, 0.5], seed=21, mode="sample", scales=scales)
    assert state["objectives"]["idle"] == traj.objectives[0]
    assert state["objectives"]["dist"] == traj.objectives[1]


def test_step_after_done_conflicts(client):
    sid = make_session(client, seed=4)["session_id"]
    client.post(f"/sessions/{sid}/control", json={"command": "step", "steps": 18})
    state = client.get(f"/sessions/{sid}/state").json()
    assert state["done"]
    resp = client.post(f"/sessions/{sid}/control", json={"command": "step"})
    assert resp.status_code == 409


def test_scripted_replay_reproduces_decisions(client):
    def drive(sid):
        decisions = []
        client.post(f"/sessions/{sid}/control", json={"command": "step", "steps": 5})
        client.post(f"/sessions/{sid}/preference", json={"preference": [0.1, 0.9]})
        client.post(f"/sessions/{sid}/control", json={"command": "step", "steps": 5})
        # harvest all decision frames via the stream snapshotting endpoint
        state = client.get(f"/sessions/{sid}/state").json()
        assert state["seq"] >= 10
        return state

    a = drive(make_session(client, seed=99)["session_id"])
    b = drive(make_session(client, seed=99)["session_id"])
    assert a["decision"] == b["decision"]
    assert a["objectives"] == b["objectives"]
    assert a["clock"] == b["clock"]


def test_stream_delivers_frames_in_order(client):
    sid = make_session(client, seed=2)["session_id"]
    with client.websocket_connect(f"/sessions/{sid}/stream") as ws:
        first = ws.receive_json()
        assert first["kind"] == "snapshot" and first["seq"] == 0
        client.post(f"/sessions/{sid}/control", json={"command": "step", "steps": 2})
        seen = [ws.receive_json() for _ in range(2)]
        seqs = [f["seq"] for f in seen]
        assert seqs == sorted(seqs) and seqs[0] > first["seq"]
    state = client.get(f"/sessions/{sid}/state").json()
    assert state["seq"] == seqs[-1]


def test_two_subscribers_receive_identical_frames(client):
    sid = make_session(client, seed=3)["session_id"]
    with client.websocket_connect(f"/sessions/{sid}/stream") as ws1, \
         client.websocket_connect(f"/sessions/{sid}/stream") as ws2:
        s1, s2 = ws1.receive_json(), ws2.receive_json()
        assert s1 == s2
        client.post(f"/sessions/{sid}/control", json={"command": "step", "steps": 3})
        f1 = [ws1.receive_json() for _ in range(3)]
        f2 = [ws2.receive_json() for _ in range(3)]
        assert f1 == f2


def test_stream_after_done_sends_terminal_then_closes(client):
    sid = make_session(client, seed=6)["session_id"]
    client.post(f"/sessions/{sid}/control", json={"command": "step", "steps": 18})
    with client.websocket_connect(f"/sessions/{sid}/stream") as ws:
        frame = ws.receive_json()
        assert frame["kind"] == "terminal"


def test_pareto_endpoint_grid_and_cache(client, data_dir):
    resp = client.get("/pareto", params={
        "checkpoint_id": "pilot", "instance_id": "pilot", "grid": 11, "C": 1,
        "seed": 40,
    })
    assert resp.status_code == 200
    body = resp.json()
    assert len(body["points"]) == 11
    again = client.get("/pareto", params={
        "checkpoint_id": "pilot", "instance_id": "pilot", "grid": 11, "C": 1,
        "seed": 40,
    })
    assert again.content == resp.content  # served from cache, byte-identical


def test_pareto_single_rollout_matches_direct_eval(client, data_dir):
    from quaydeck.instance import load_instance
    from quaydeck.nn import load_checkpoint

    resp = client.get("/pareto", params={
        "checkpoint_id": "pilot", "instance_id": "pilot", "grid": 3, "C": 1,
        "seed": 70,
    })
    inst = load_instance(data_dir / "instances" / "pilot.json")
    policy = load_checkpoint(data_dir / "checkpoints" / "pilot.ckpt")
    scales = FeatureScales(dist=policy.meta["scales"]["dist"],
                           count=policy.meta["scales"]["count"])
    mid = evaluate_policy(policy, [0.5, 0.5], inst, 1, 70, scales)
    assert resp.json()["points"][1]["objectives"] == list(mid.objectives)


def test_unknown_session_404(client):
    assert client.get("/sessions/nope/state").status_code == 404
    assert client.post("/sessions/nope/control",
                       json={"command": "pause"}).status_code == 404
