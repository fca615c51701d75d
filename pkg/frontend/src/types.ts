/**
 * Wire types mirroring the scenario service JSON payloads, field by field.
 * The dashboard never invents numbers: everything rendered comes from one of
 * these payloads.
 */

export const SCHEMA_VERSION = "1";

export interface ClusterSnapshot {
  id: number;
  size: number;
  activation_day: number;
  active: boolean;
  local_day: number;
  s1: number;
  s2: number;
  s3: number;
  quarantined: number;
  mean_q: number | null;
  max_q: number | null;
}

export interface SessionState {
  session_id: string;
  day: number;
  finished: boolean;
  budget: number;
  last_multiplier: number;
  last_demand: number;
  policy: string;
  clusters: ClusterSnapshot[];
  config?: ServiceConfig;
}

export interface ServiceConfig {
  schema_version: number;
  epi: Record<string, number | boolean>;
  costs: {
    alpha2: number;
    alpha3_true: number;
    gamma: number;
    budget: number;
    m_min: number;
    m_max: number;
  };
  mode: string;
  n_clusters: number;
  stagger_window: number;
  n_max: number;
  seed: number;
}

export interface PerClusterDelta {
  cluster: number;
  s1_inc: number;
  s2_inc: number;
  s3_inc: number;
  quarantined: number;
}

export interface StepDelta {
  day: number;
  m_t: number;
  alpha3_active: number;
  budget: number;
  demand: number;
  executed: number;
  reward_sum: number;
  active_clusters: number;
  s1_inc: number;
  s2_inc: number;
  s3_inc: number;
  per_cluster: PerClusterDelta[];
  mean_q: number | null;
  max_q: number | null;
  totals: { s1: number; s2: number; s3: number; tests: number };
  finished: boolean;
}

export interface CreateResponse {
  session_id: string;
  evicted: string[];
  config: ServiceConfig;
  state: SessionState;
}

export interface StepResponse {
  delta: StepDelta;
  state: SessionState;
}

export interface MetricsPayload {
  session_id: string;
  day: number;
  s1_total: number;
  s2_total: number;
  s3_total: number;
  tests_executed: number;
  reward_total: number;
  multiplier_history: number[];
  executed_history: number[];
}

export interface CompareEntry {
  index: number;
  a: StepDelta | null;
  b: StepDelta | null;
  differs: boolean;
}

export interface ComparePayload {
  a: string;
  b: string;
  first_divergence_day: number | null;
  aligned: CompareEntry[];
}

export type Override = { m_t: number } | { budget: number };

export interface PolicyBinding {
  kind: string;
  fixed_m?: number;
  value_backend?: string;
}

/**
 * Events appended to the dashboard's own log. Every event wraps a service
 * payload verbatim (or records a degradation); views are pure folds of this
 * log, which is what makes replay tests possible.
 */
export type StoreEvent =
  | { type: "created"; response: CreateResponse }
  | { type: "forked"; parent: string; response: CreateResponse }
  | { type: "step"; response: StepResponse }
  | { type: "policy"; kind: string; state: SessionState }
  | { type: "reset"; state: SessionState }
  | { type: "metrics"; payload: MetricsPayload }
  | { type: "degraded"; reason: string }
  | { type: "recovered" };
