/**
 * Event-log session state. The store is an append-only list of service
 * messages; the rendered SessionView is a pure fold over that list. Nothing
 * is recomputed client-side: timeline rows, cluster rows, and totals are the
 * service's own numbers copied through. Replaying a recorded log therefore
 * reconstructs the exact view the human saw.
 */

import {
  ClusterSnapshot, CreateResponse, MetricsPayload, SessionState, StepDelta,
  StoreEvent,
} from "./types.js";

export interface TimelineRow {
  day: number;
  mT: number;
  alpha3Active: number;
  budget: number;
  demand: number;
  executed: number;
  rewardSum: number;
  activeClusters: number;
  s1Inc: number;
  s2Inc: number;
  s3Inc: number;
}

export interface SessionView {
  sessionId: string | null;
  policy: string;
  day: number;
  finished: boolean;
  degraded: boolean;
  degradedReason: string | null;
  lineage: string[];
  multiplierBounds: { mMin: number; mMax: number } | null;
  nominalBudget: number | null;
  timeline: TimelineRow[];
  clusters: ClusterSnapshot[];
  totals: { s1: number; s2: number; s3: number; tests: number } | null;
  metrics: MetricsPayload | null;
  evictedNotices: string[];
}

function emptyView(): SessionView {
  return {
    sessionId: null,
    policy: "",
    day: 0,
    finished: false,
    degraded: false,
    degradedReason: null,
    lineage: [],
    multiplierBounds: null,
    nominalBudget: null,
    timeline: [],
    clusters: [],
    totals: null,
    metrics: null,
    evictedNotices: [],
  };
}

function timelineRow(delta: StepDelta): TimelineRow {
  return {
    day: delta.day,
    mT: delta.m_t,
    alpha3Active: delta.alpha3_active,
    budget: delta.budget,
    demand: delta.demand,
    executed: delta.executed,
    rewardSum: delta.reward_sum,
    activeClusters: delta.active_clusters,
    s1Inc: delta.s1_inc,
    s2Inc: delta.s2_inc,
    s3Inc: delta.s3_inc,
  };
}

function applyCreate(view: SessionView, response: CreateResponse,
                     parent: string | null): void {
  view.sessionId = response.session_id;
  view.policy = response.state.policy;
  view.day = response.state.day;
  view.finished = response.state.finished;
  view.clusters = response.state.clusters;
  if (parent === null) {
    view.lineage = [response.session_id];
  } else {
    view.lineage = [...view.lineage, response.session_id];
  }
  if (response.config) {
    view.multiplierBounds = {
      mMin: response.config.costs.m_min,
      mMax: response.config.costs.m_max,
    };
    view.nominalBudget = response.config.costs.budget;
  }
  view.evictedNotices = [...view.evictedNotices, ...response.evicted];
}

export function foldEvents(log: readonly StoreEvent[]): SessionView {
  const view = emptyView();
  for (const event of log) {
    switch (event.type) {
      case "created":
        applyCreate(view, event.response, null);
        break;
      case "forked":
        applyCreate(view, event.response, event.parent);
        break;
      case "step": {
        const { delta, state } = event.response;
        view.timeline = [...view.timeline, timelineRow(delta)];
        view.totals = delta.totals;
        view.day = state.day;
        view.finished = delta.finished;
        view.clusters = state.clusters;
        view.degraded = false;
        view.degradedReason = null;
        break;
      }
      case "policy":
        view.policy = event.state.policy;
        view.clusters = event.state.clusters;
        break;
      case "reset":
        view.timeline = [];
        view.totals = null;
        view.metrics = null;
        view.day = event.state.day;
        view.finished = event.state.finished;
        view.clusters = event.state.clusters;
        break;
      case "metrics":
        view.metrics = event.payload;
        break;
      case "degraded":
        view.degraded = true;
        view.degradedReason = event.reason;
        break;
      case "recovered":
        view.degraded = false;
        view.degradedReason = null;
        break;
    }
  }
  return view;
}

export class SessionStore {
  private readonly events: StoreEvent[] = [];

  apply(event: StoreEvent): void {
    this.events.push(event);
  }

  get log(): readonly StoreEvent[] {
    return this.events;
  }

  view(): SessionView {
    return foldEvents(this.events);
  }

  /** Rebuild a view from a recorded log; used by the replay tests. */
  static replay(log: readonly StoreEvent[]): SessionView {
    return foldEvents(log);
  }
}
