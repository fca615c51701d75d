import pytest
from fastapi.testclient import TestClient

from outbreak_alloc.config import CostParams, SystemConfig, config_to_dict, \
    desk_epi
from outbreak_alloc.service import SCHEMA_VERSION, create_app

HEADERS = {"X-Schema-Version": SCHEMA_VERSION}


@pytest.fixture()
def client():
    return TestClient(create_app())


def small_config(seed=0, budget=4, n_clusters=3):
    doc = config_to_dict(SystemConfig(
        epi=desk_epi(), costs=CostParams(budget=budget),
        n_clusters=n_clusters, stagger_window=6, seed=seed))
    return doc


def create(client, seed=0, policy=None, **cfg):
    body = {"seed": seed, "config": small_config(seed=seed, **cfg),
            "policy": policy or {"kind": "fixed_m_qr"}}
    resp = client.post("/sessions", json=body, headers=HEADERS)
    assert resp.status_code == 200, resp.text
    return resp.json()


def step(client, sid, override=None):
    body = {"override": override} if override else {}
    resp = client.post(f"/sessions/{sid}/step", json=body, headers=HEADERS)
    assert resp.status_code == 200, resp.text
    return resp.json()


def test_schema_version_header_mandatory(client):
    resp = client.post("/sessions", json={"seed": 0})
    assert resp.status_code == 400
    resp = client.post("/sessions", json={"seed": 0},
                       headers={"X-Schema-Version": "999"})
    assert resp.status_code == 400
    resp = client.get("/sessions/nope/state", headers=HEADERS)
    assert resp.status_code == 404
    assert resp.headers["X-Schema-Version"] == SCHEMA_VERSION


def test_create_is_deterministic_per_content(client):
    a = create(client, seed=3)
    b = create(client, seed=3)
    assert a["session_id"] != b["session_id"]
    sa = dict(a["state"]); sb = dict(b["state"])
    sa.pop("session_id"); sb.pop("session_id")
    assert sa == sb


def test_invalid_config_rejected_with_field_message(client):
    body = {"seed": 0, "config": small_config(), "policy": {"kind": "manual"}}
    body["config"]["costs"]["alpha2"] = -0.5
    resp = client.post("/sessions", json=body, headers=HEADERS)
    assert resp.status_code == 422
    assert "alpha2" in resp.text or "cost" in resp.text


def test_unknown_policy_rejected(client):
    resp = client.post("/sessions", json={
        "seed": 0, "policy": {"kind": "oracle"}}, headers=HEADERS)
    assert resp.status_code == 422


def test_step_and_metrics_flow(client):
    created = create(client, seed=1)
    sid = created["session_id"]
    deltas = [step(client, sid)["delta"] for _ in range(5)]
    assert [d["day"] for d in deltas] == list(range(5))
    metrics = client.get(f"/sessions/{sid}/metrics", headers=HEADERS).json()
    assert metrics["day"] == 5
    assert metrics["tests_executed"] == sum(d["executed"] for d in deltas)
    assert metrics["multiplier_history"] == [d["m_t"] for d in deltas]
    state = client.get(f"/sessions/{sid}/state", headers=HEADERS).json()
    assert state["day"] == 5
    totals = deltas[-1]["totals"]
    assert totals["s1"] == sum(c["s1"] for c in state["clusters"])


def test_budget_override_zero_blocks_tests(client):
    sid = create(client, seed=2)["session_id"]
    for _ in range(12):
        delta = step(client, sid, override={"budget": 0})["delta"]
        assert delta["executed"] == 0
        assert delta["budget"] == 0


def test_m_override_applies_for_one_step(client):
    sid = create(client, seed=4)["session_id"]
    d1 = step(client, sid, override={"m_t": 4.0})["delta"]
    assert d1["m_t"] == 4.0
    assert d1["alpha3_active"] == pytest.approx(4.0 * 0.05)
    d2 = step(client, sid)["delta"]
    assert d2["m_t"] == 1.0  # controller resumes


def test_m_override_range_checked(client):
    sid = create(client, seed=4)["session_id"]
    resp = client.post(f"/sessions/{sid}/step",
                       json={"override": {"m_t": 99.0}}, headers=HEADERS)
    assert resp.status_code == 422


def test_fork_shares_future_randomness(client):
    sid = create(client, seed=5)["session_id"]
    for _ in range(4):
        step(client, sid)
    fork = client.post(f"/sessions/{sid}/fork", headers=HEADERS).json()
    fid = fork["session_id"]
    for _ in range(6):
        da = step(client, sid)["delta"]
        db = step(client, fid)["delta"]
        assert da == db
    sa = client.get(f"/sessions/{sid}/state", headers=HEADERS).json()
    sb = client.get(f"/sessions/{fid}/state", headers=HEADERS).json()
    sa.pop("session_id"); sb.pop("session_id")
    assert sa == sb


def test_fork_divergence_and_compare(client):
    sid = create(client, seed=6)["session_id"]
    for _ in range(3):
        step(client, sid)
    fid = client.post(f"/sessions/{sid}/fork",
                      headers=HEADERS).json()["session_id"]
    for _ in range(5):
        step(client, sid, override={"m_t": 0.5})
        step(client, fid, override={"m_t": 2.0})
    compare = client.get(f"/sessions/{sid}/compare/{fid}",
                         headers=HEADERS).json()
    assert compare["first_divergence_day"] is not None
    assert compare["first_divergence_day"] >= 3
    for entry in compare["aligned"][:3]:
        assert not entry["differs"]


def test_compare_unrelated_sessions_rejected(client):
    a = create(client, seed=7)["session_id"]
    b = create(client, seed=8)["session_id"]
    resp = client.get(f"/sessions/{a}/compare/{b}", headers=HEADERS)
    assert resp.status_code == 422


def test_policy_switch_mid_session(client):
    sid = create(client, seed=9, policy={"kind": "manual"})["session_id"]
    step(client, sid, override={"m_t": 2.0})
    resp = client.post(f"/sessions/{sid}/policy",
                       json={"kind": "bin_m_qr"}, headers=HEADERS)
    assert resp.status_code == 200
    delta = step(client, sid)["delta"]
    assert delta["m_t"] >= 1.0
    events = client.get(f"/sessions/{sid}/events",
                        headers=HEADERS).json()["events"]
    kinds = [e["type"] for e in events]
    assert kinds == ["step", "policy", "step"]


def test_reset_restores_day_zero(client):
    sid = create(client, seed=10)["session_id"]
    first = step(client, sid)["delta"]
    for _ in range(3):
        step(client, sid)
    client.post(f"/sessions/{sid}/reset", headers=HEADERS)
    state = client.get(f"/sessions/{sid}/state", headers=HEADERS).json()
    assert state["day"] == 0
    replay = step(client, sid)["delta"]
    assert replay == first  # pure function of (config, seed, log)


def test_session_isolation_interleaved_equals_serial(client):
    serial_deltas = {}
    for seed in range(8):
        sid = create(client, seed=seed)["session_id"]
        serial_deltas[seed] = [step(client, sid)["delta"] for _ in range(6)]

    interleaved = {seed: create(client, seed=seed)["session_id"]
                   for seed in range(8)}
    inter_deltas = {seed: [] for seed in range(8)}
    for _ in range(6):
        for seed in range(8):
            inter_deltas[seed].append(step(client, interleaved[seed])["delta"])
    for seed in range(8):
        assert inter_deltas[seed] == serial_deltas[seed]


def test_lru_eviction_notified():
    client = TestClient(create_app(session_cap=2))
    a = create(client, seed=0)["session_id"]
    b = create(client, seed=1)["session_id"]
    resp = create(client, seed=2)
    assert resp["evicted"] == [a]
    assert client.get(f"/sessions/{a}/state",
                      headers=HEADERS).status_code == 404
    assert client.get(f"/sessions/{b}/state",
                      headers=HEADERS).status_code == 200


def test_event_stream_replays_log(client):
    sid = create(client, seed=11)["session_id"]
    step(client, sid)
    step(client, sid)
    with client.stream("GET", f"/sessions/{sid}/stream",
                       headers=HEADERS) as resp:
        assert resp.status_code == 200
        body = "".join(resp.iter_text())
    lines = [l for l in body.split("\n\n") if l.startswith("data: ")]
    assert len(lines) == 2
    events = client.get(f"/sessions/{sid}/events",
                        headers=HEADERS).json()
    assert events["next"] == 2


def test_step_after_finish_conflicts(client):
    sid = create(client, seed=12, n_clusters=3)["session_id"]
    state = client.get(f"/sessions/{sid}/state", headers=HEADERS).json()
    while not state["finished"]:
        state = step(client, sid)["state"]
    resp = client.post(f"/sessions/{sid}/step", json={}, headers=HEADERS)
    assert resp.status_code == 409
