/**
 * Thin HTTP client for the scenario service. Every request carries the
 * mandatory X-Schema-Version header. Failures throw ServiceError; there are
 * deliberately no retries here — the caller surfaces a degraded state and
 * the human decides when to try again.
 */

import {
  ComparePayload, CreateResponse, MetricsPayload, Override, PolicyBinding,
  SCHEMA_VERSION, SessionState, StepResponse,
} from "./types.js";

export class ServiceError extends Error {
  constructor(message: string, readonly status?: number) {
    super(message);
  }
}

export type FetchLike = (url: string, init?: {
  method?: string;
  headers?: Record<string, string>;
  body?: string;
}) => Promise<{ ok: boolean; status: number; json(): Promise<unknown> }>;

export class ServiceClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike =
      globalThis.fetch as unknown as FetchLike,
  ) {}

  private async request<T>(method: string, path: string,
                           body?: unknown): Promise<T> {
    let resp;
    try {
      resp = await this.fetchImpl(`${this.baseUrl}${path}`, {
        method,
        headers: {
          "Content-Type": "application/json",
          "X-Schema-Version": SCHEMA_VERSION,
        },
        body: body === undefined ? undefined : JSON.stringify(body),
      });
    } catch (err) {
      throw new ServiceError(`service unreachable: ${String(err)}`);
    }
    if (!resp.ok) {
      let detail = `HTTP ${resp.status}`;
      try {
        const payload = (await resp.json()) as { detail?: string };
        if (payload.detail) detail = `${detail}: ${payload.detail}`;
      } catch {
        // body was not JSON; keep the status line
      }
      throw new ServiceError(detail, resp.status);
    }
    return (await resp.json()) as T;
  }

  createSession(seed: number, policy: PolicyBinding,
                config?: unknown): Promise<CreateResponse> {
    return this.request("POST", "/sessions", { seed, policy, config });
  }

  step(sessionId: string, override?: Override): Promise<StepResponse> {
    return this.request("POST", `/sessions/${sessionId}/step`,
                        override ? { override } : {});
  }

  fork(sessionId: string): Promise<CreateResponse> {
    return this.request("POST", `/sessions/${sessionId}/fork`);
  }

  switchPolicy(sessionId: string,
               policy: PolicyBinding): Promise<{ state: SessionState }> {
    return this.request("POST", `/sessions/${sessionId}/policy`, policy);
  }

  reset(sessionId: string): Promise<{ state: SessionState }> {
    return this.request("POST", `/sessions/${sessionId}/reset`);
  }

  state(sessionId: string): Promise<SessionState> {
    return this.request("GET", `/sessions/${sessionId}/state`);
  }

  metrics(sessionId: string): Promise<MetricsPayload> {
    return this.request("GET", `/sessions/${sessionId}/metrics`);
  }

  compare(a: string, b: string): Promise<ComparePayload> {
    return this.request("GET", `/sessions/${a}/compare/${b}`);
  }
}
