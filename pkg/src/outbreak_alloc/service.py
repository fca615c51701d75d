"""Local what-if exploration service over simulation sessions.

A session binds (config, seed, policy) to a live runtime. Clients step it
day by day, optionally overriding the multiplier (this step only) or the
daily budget (persists until changed), fork it into branches that share
future randomness, and compare branch timelines. Every session is
replayable: state is a pure function of (config, seed, ordered override
log), which the counter-keyed RNG guarantees.

Wire protocol (all JSON over HTTP; the X-Schema-Version header is
mandatory on requests and echoed on responses):

  POST /sessions                    {config?, seed, policy} -> session + any
                                    LRU-evicted session ids in "evicted"
  POST /sessions/{id}/step         {override?: {"m_t": float} | {"budget": int}}
  POST /sessions/{id}/fork         -> new session sharing seed lineage
  POST /sessions/{id}/policy       {policy} switch controller mid-session
  POST /sessions/{id}/reset        back to day 0, clears the log
  GET  /sessions/{id}/state        full snapshot
  GET  /sessions/{id}/metrics      running totals and multiplier history
  GET  /sessions/{id}/events?since=k   ordered event log (polling stream)
  GET  /sessions/{id}/stream       server-sent events of the same log
  GET  /sessions/{a}/compare/{b}   aligned per-day timelines + divergence

Step delta fields: day (absolute day simulated), m_t (multiplier applied),
alpha3_active (per-test cost perceived by local policies), budget (tests/day
cap), demand (positive-value candidates before capping), executed (tests
administered), reward_sum (sum over active clusters of the day's true-cost
reward), active_clusters (count), s1_inc / s2_inc / s3_inc (day totals:
infectious person-days outside quarantine, unnecessary quarantine person-
days, tests), per_cluster the same increments per cluster plus quarantined
(contacts isolated today), mean_q / max_q (belief summary over active
contacts), totals (episode-to-date S1, S2, S3, tests executed), finished
(episode over).
"""

from __future__ import annotations

import copy
import hashlib
import itertools
import json
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, HTTPException, Request, Response
from fastapi.responses import StreamingResponse

from .config import CostParams, SystemConfig, config_from_dict, \
    config_to_dict, desk_epi
from .controllers import BinSearchM, FixedM, load_controller
from .engine import HeuristicPolicy, QRankingPolicy, SystemRuntime
from .errors import ParameterError
from .harness import ALL_POLICIES
from .value import AnalyticQ, load_checkpoint

SCHEMA_VERSION = "1"
DEFAULT_SESSION_CAP = 16

MANUAL = "manual"
POLICY_KINDS = ALL_POLICIES + (MANUAL,)


def _default_config(seed: int) -> SystemConfig:
    return SystemConfig(epi=desk_epi(), costs=CostParams(budget=5),
                        n_clusters=5, seed=seed)


def build_session_policy(kind: str, config: SystemConfig, params: dict):
    costs = config.costs
    if kind in ("fixed_m_qr", "bin_m_qr", "hier_ppo_qr", MANUAL):
        backend = params.get("value_backend", "analytic")
        if backend == "analytic":
            estimator = AnalyticQ(config.epi, costs.alpha2)
        else:
            estimator = load_checkpoint(params["value_checkpoint"])
        if kind == "bin_m_qr":
            controller = BinSearchM(costs)
        elif kind == "hier_ppo_qr":
            controller = load_controller(params["controller_checkpoint"])
        else:  # fixed multiplier; manual steering overrides per step
            controller = FixedM(params.get("fixed_m", 1.0), costs)
        return QRankingPolicy(controller, estimator, costs)
    return HeuristicPolicy(kind, costs)


@dataclass
class Session:
    id: str
    root: str                     # lineage root for compare validation
    config: SystemConfig
    seed: int
    policy_kind: str
    policy_params: dict
    runtime: SystemRuntime
    override_log: list[dict] = field(default_factory=list)
    events: list[dict] = field(default_factory=list)
    counter: int = 0

    def snapshot(self) -> dict:
        state = self.runtime.state
        clusters = []
        for c in state.clusters:
            q_mean = q_max = None
            records = self.runtime.records.get(c.id)
            if c.active and records:
                q_now = [r.q_now for r in records]
                q_mean, q_max = float(np.mean(q_now)), float(np.max(q_now))
            clusters.append({
                "id": c.id, "size": c.size,
                "activation_day": c.activation_day, "active": c.active,
                "local_day": c.local_day, "s1": c.s1_days, "s2": c.s2_days,
                "s3": c.s3_tests,
                "quarantined": sum(i.quarantined for i in c.individuals),
                "mean_q": q_mean, "max_q": q_max,
            })
        return {
            "session_id": self.id,
            "day": state.day,
            "finished": state.finished(),
            "budget": state.budget,
            "last_multiplier": state.last_multiplier,
            "last_demand": state.last_demand,
            "policy": self.policy_kind,
            "clusters": clusters,
        }

    def metrics(self) -> dict:
        state = self.runtime.state
        steps = self.runtime.step_metrics
        return {
            "session_id": self.id,
            "day": state.day,
            "s1_total": sum(c.s1_days for c in state.clusters),
            "s2_total": sum(c.s2_days for c in state.clusters),
            "s3_total": sum(c.s3_tests for c in state.clusters),
            "tests_executed": sum(m.executed for m in steps),
            "reward_total": sum(m.reward_sum for m in steps),
            "multiplier_history": [m.multiplier for m in steps],
            "executed_history": [m.executed for m in steps],
        }


class SessionStore:
    def __init__(self, cap: int = DEFAULT_SESSION_CAP):
        self.cap = cap
        self.sessions: OrderedDict[str, Session] = OrderedDict()
        self._counter = itertools.count()

    def new_id(self, config: SystemConfig, seed: int) -> str:
        content = json.dumps(config_to_dict(config), sort_keys=True) + str(seed)
        digest = hashlib.sha256(content.encode()).hexdigest()[:12]
        return f"{digest}-{next(self._counter)}"

    def add(self, session: Session) -> list[str]:
        evicted = []
        while len(self.sessions) >= self.cap:
            victim, _ = self.sessions.popitem(last=False)
            evicted.append(victim)
        self.sessions[session.id] = session
        return evicted

    def get(self, session_id: str) -> Session:
        if session_id not in self.sessions:
            raise HTTPException(status_code=404,
                                detail=f"unknown session {session_id!r}")
        self.sessions.move_to_end(session_id)
        return self.sessions[session_id]


def _step_session(session: Session, override: dict | None) -> dict:
    runtime = session.runtime
    if runtime.state.finished():
        raise HTTPException(status_code=409, detail="episode finished")
    m_override = None
    budget_override = None
    if override:
        unknown = set(override) - {"m_t", "budget"}
        if unknown:
            raise HTTPException(status_code=422,
                                detail=f"unknown override fields {sorted(unknown)}")
        if "m_t" in override:
            m_override = float(override["m_t"])
            costs = session.config.costs
            if not costs.m_min <= m_override <= costs.m_max:
                raise HTTPException(
                    status_code=422,
                    detail=f"m_t must lie in [{costs.m_min}, {costs.m_max}]")
        if "budget" in override:
            budget_override = int(override["budget"])
            if budget_override < 0:
                raise HTTPException(status_code=422,
                                    detail="budget must be non-negative")
    runtime.prepare_day()
    active = runtime.state.active_clusters()
    q_all = [r.q_now for c in active for r in runtime.records[c.id]]
    before = {c.id: (c.s1_days, c.s2_days, c.s3_tests)
              for c in runtime.state.clusters}
    metrics = runtime.execute_day(m_override=m_override,
                                  budget_override=budget_override)
    per_cluster = []
    episode_days = session.config.epi.episode_days
    for c in runtime.state.clusters:
        if not c.activation_day <= metrics.day \
                < c.activation_day + episode_days:
            continue  # was not simulated this step
        s1_0, s2_0, s3_0 = before[c.id]
        per_cluster.append({
            "cluster": c.id,
            "s1_inc": c.s1_days - s1_0,
            "s2_inc": c.s2_days - s2_0,
            "s3_inc": c.s3_tests - s3_0,
            "quarantined": sum(i.quarantined for i in c.individuals),
        })
    state = runtime.state
    delta = {
        "day": metrics.day,
        "m_t": metrics.multiplier,
        "alpha3_active": metrics.alpha3_active,
        "budget": metrics.budget,
        "demand": metrics.demand,
        "executed": metrics.executed,
        "reward_sum": metrics.reward_sum,
        "active_clusters": metrics.active_clusters,
        "s1_inc": sum(p["s1_inc"] for p in per_cluster),
        "s2_inc": sum(p["s2_inc"] for p in per_cluster),
        "s3_inc": sum(p["s3_inc"] for p in per_cluster),
        "per_cluster": per_cluster,
        "mean_q": float(np.mean(q_all)) if q_all else None,
        "max_q": float(np.max(q_all)) if q_all else None,
        "totals": {
            "s1": sum(c.s1_days for c in state.clusters),
            "s2": sum(c.s2_days for c in state.clusters),
            "s3": sum(c.s3_tests for c in state.clusters),
            "tests": sum(m.executed for m in runtime.step_metrics),
        },
        "finished": state.finished(),
    }
    session.override_log.append({"day": metrics.day,
                                 "override": override or {}})
    session.events.append({"type": "step", "seq": len(session.events),
                           "delta": delta})
    return delta


def create_app(session_cap: int = DEFAULT_SESSION_CAP) -> FastAPI:
    app = FastAPI(title="outbreak-alloc scenario service")
    store = SessionStore(cap=session_cap)
    app.state.store = store

    @app.middleware("http")
    async def schema_version_gate(request: Request, call_next):
        version = request.headers.get("x-schema-version")
        if version != SCHEMA_VERSION:
            return Response(
                content=json.dumps({"detail": "missing or unsupported "
                                    f"X-Schema-Version (expect {SCHEMA_VERSION})"}),
                status_code=400, media_type="application/json",
                headers={"X-Schema-Version": SCHEMA_VERSION})
        response = await call_next(request)
        response.headers["X-Schema-Version"] = SCHEMA_VERSION
        return response

    def make_session(config: SystemConfig, seed: int, kind: str,
                     params: dict, root: str | None = None) -> Session:
        policy = build_session_policy(kind, config, params)
        runtime = SystemRuntime(config, policy, episode=0)
        sid = store.new_id(config, seed)
        return Session(id=sid, root=root or sid, config=config, seed=seed,
                       policy_kind=kind, policy_params=params,
                       runtime=runtime)

    @app.post("/sessions")
    def create_session(body: dict):
        seed = int(body.get("seed", 0))
        kind = body.get("policy", {}).get("kind", "fixed_m_qr")
        params = {k: v for k, v in body.get("policy", {}).items()
                  if k != "kind"}
        if kind not in POLICY_KINDS:
            raise HTTPException(status_code=422,
                                detail=f"policy.kind must be one of "
                                f"{sorted(POLICY_KINDS)}")
        try:
            if "config" in body and body["config"] is not None:
                doc = dict(body["config"])
                doc.setdefault("schema_version", 1)
                doc["seed"] = seed
                config = config_from_dict(doc)
            else:
                config = _default_config(seed)
        except (ParameterError, TypeError, KeyError) as exc:
            raise HTTPException(status_code=422,
                                detail=f"config invalid: {exc}")
        try:
            session = make_session(config, seed, kind, params)
        except (ParameterError, FileNotFoundError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        evicted = store.add(session)
        return {"session_id": session.id, "evicted": evicted,
                "config": config_to_dict(config),
                "state": session.snapshot()}

    @app.post("/sessions/{session_id}/step")
    def step(session_id: str, body: dict | None = None):
        session = store.get(session_id)
        override = (body or {}).get("override")
        return {"delta": _step_session(session, override),
                "state": session.snapshot()}

    @app.post("/sessions/{session_id}/fork")
    def fork(session_id: str):
        session = store.get(session_id)
        clone = copy.deepcopy(session.runtime)
        sid = store.new_id(session.config, session.seed)
        branch = Session(
            id=sid, root=session.root, config=session.config,
            seed=session.seed, policy_kind=session.policy_kind,
            policy_params=session.policy_params, runtime=clone,
            override_log=list(session.override_log),
            events=[dict(e) for e in session.events])
        evicted = store.add(branch)
        return {"session_id": sid, "evicted": evicted,
                "state": branch.snapshot()}

    @app.post("/sessions/{session_id}/policy")
    def switch_policy(session_id: str, body: dict):
        session = store.get(session_id)
        kind = body.get("kind")
        if kind not in POLICY_KINDS:
            raise HTTPException(status_code=422,
                                detail=f"kind must be one of "
                                f"{sorted(POLICY_KINDS)}")
        params = {k: v for k, v in body.items() if k != "kind"}
        try:
            session.runtime.policy = build_session_policy(
                kind, session.config, params)
        except (ParameterError, FileNotFoundError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        session.policy_kind = kind
        session.policy_params = params
        session.events.append({"type": "policy", "seq": len(session.events),
                               "kind": kind})
        return {"state": session.snapshot()}

    @app.post("/sessions/{session_id}/reset")
    def reset(session_id: str):
        session = store.get(session_id)
        policy = build_session_policy(session.policy_kind, session.config,
                                      session.policy_params)
        session.runtime = SystemRuntime(session.config, policy, episode=0)
        session.override_log.clear()
        session.events.append({"type": "reset", "seq": len(session.events)})
        return {"state": session.snapshot()}

    @app.get("/sessions/{session_id}/state")
    def state(session_id: str):
        session = store.get(session_id)
        snapshot = session.snapshot()
        snapshot["config"] = config_to_dict(session.config)
        return snapshot

    @app.get("/sessions/{session_id}/metrics")
    def metrics(session_id: str):
        return store.get(session_id).metrics()

    @app.get("/sessions/{session_id}/events")
    def events(session_id: str, since: int = 0):
        session = store.get(session_id)
        return {"events": session.events[since:],
                "next": len(session.events)}

    @app.get("/sessions/{session_id}/stream")
    def stream(session_id: str):
        session = store.get(session_id)
        existing = list(session.events)

        def render():
            for event in existing:
                yield f"data: {json.dumps(event)}\n\n"

        return StreamingResponse(render(), media_type="text/event-stream",
                                 headers={"X-Schema-Version": SCHEMA_VERSION})

    @app.get("/sessions/{a}/compare/{b}")
    def compare(a: str, b: str):
        sa, sb = store.get(a), store.get(b)
        if sa.root != sb.root:
            raise HTTPException(status_code=422,
                                detail="sessions do not share a lineage root")
        steps_a = [e["delta"] for e in sa.events if e["type"] == "step"]
        steps_b = [e["delta"] for e in sb.events if e["type"] == "step"]
        aligned = []
        first_divergence = None
        for i in range(max(len(steps_a), len(steps_b))):
            da = steps_a[i] if i < len(steps_a) else None
            db = steps_b[i] if i < len(steps_b) else None
            differs = da != db
            if differs and first_divergence is None:
                first_divergence = da["day"] if da else db["day"]
            aligned.append({"index": i, "a": da, "b": db,
                            "differs": differs})
        return {"a": a, "b": b, "first_divergence_day": first_divergence,
                "aligned": aligned}

    return app
