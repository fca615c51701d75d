"""Record a scripted steering session against the real scenario service.

Produces frontend/tests/fixtures/steering_session.json: every payload the
dashboard would receive during a 30-step session with multiplier/budget
overrides, a mid-session fork, the divergent branch, the service's
trajectory diff, and final metrics. The dashboard tests replay this log and
must render exactly these numbers (service-as-oracle).
"""

import json
import sys
from pathlib import Path

from fastapi.testclient import TestClient

from outbreak_alloc.service import SCHEMA_VERSION, create_app

HEADERS = {"X-Schema-Version": SCHEMA_VERSION}

# 30 steering actions: day index -> override (None = let the policy run).
SCRIPT = []
for day in range(30):
    if day in (4, 5, 6):
        SCRIPT.append({"m_t": 2.0})
    elif day == 10:
        SCRIPT.append({"budget": 2})
    elif day in (15, 16):
        SCRIPT.append({"m_t": 0.5})
    else:
        SCRIPT.append(None)

FORK_AT = 12  # steps taken before forking the comparison branch


def main() -> int:
    client = TestClient(create_app())
    record = {"schema_version": SCHEMA_VERSION, "events": []}

    def log(kind, payload):
        record["events"].append({"kind": kind, "payload": payload})

    create = client.post("/sessions", json={
        "seed": 42,
        "policy": {"kind": "manual", "fixed_m": 1.0},
    }, headers=HEADERS).json()
    sid = create["session_id"]
    log("created", create)

    fork_id = None
    for step_index, override in enumerate(SCRIPT):
        if step_index == FORK_AT:
            fork = client.post(f"/sessions/{sid}/fork",
                               headers=HEADERS).json()
            fork_id = fork["session_id"]
            log("forked", fork)
        body = {"override": override} if override else {}
        step = client.post(f"/sessions/{sid}/step", json=body,
                           headers=HEADERS).json()
        log("step", {"request": body, "response": step})
        if fork_id is not None:
            fork_body = {"override": {"m_t": 3.5}}
            fork_step = client.post(f"/sessions/{fork_id}/step",
                                    json=fork_body, headers=HEADERS).json()
            log("fork_step", {"request": fork_body, "response": fork_step})

    metrics = client.get(f"/sessions/{sid}/metrics", headers=HEADERS).json()
    log("metrics", metrics)
    fork_metrics = client.get(f"/sessions/{fork_id}/metrics",
                              headers=HEADERS).json()
    log("fork_metrics", fork_metrics)
    compare = client.get(f"/sessions/{sid}/compare/{fork_id}",
                         headers=HEADERS).json()
    log("compare", compare)

    out = Path(__file__).resolve().parent.parent / "frontend" / "tests" \
        / "fixtures" / "steering_session.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(record, indent=1) + "\n")
    steps = sum(1 for e in record["events"] if e["kind"] == "step")
    print(f"wrote {out} ({steps} main-branch steps, "
          f"{len(record['events'])} events)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
