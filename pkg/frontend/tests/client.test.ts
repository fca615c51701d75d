import { describe, expect, it, vi } from "vitest";

import { ServiceClient, ServiceError } from "../src/client.js";
import { SessionStore } from "../src/store.js";
import { SCHEMA_VERSION } from "../src/types.js";
import { renderBanner } from "../src/ui.js";

function okResponse(payload: unknown) {
  return { ok: true, status: 200, json: async () => payload };
}

describe("ServiceClient", () => {
  it("sends the mandatory schema version header", async () => {
    const calls: any[] = [];
    const fetchImpl = vi.fn(async (url: string, init?: any) => {
      calls.push([url, init]);
      return okResponse({ session_id: "s", evicted: [], state: {} });
    });
    const client = new ServiceClient("http://svc", fetchImpl as any);
    await client.createSession(1, { kind: "manual" });
    expect(calls[0][0]).toBe("http://svc/sessions");
    expect(calls[0][1].headers["X-Schema-Version"]).toBe(SCHEMA_VERSION);
  });

  it("throws ServiceError with detail on HTTP errors", async () => {
    const fetchImpl = async () => ({
      ok: false, status: 422,
      json: async () => ({ detail: "m_t must lie in [0.25, 4.0]" }),
    });
    const client = new ServiceClient("http://svc", fetchImpl as any);
    await expect(client.step("s", { m_t: 99 })).rejects.toThrow(
      /422.*m_t must lie/);
  });

  it("does not retry on failure: one request per call", async () => {
    const fetchImpl = vi.fn(async () => {
      throw new Error("ECONNREFUSED");
    });
    const client = new ServiceClient("http://svc", fetchImpl as any);
    await expect(client.metrics("s")).rejects.toBeInstanceOf(ServiceError);
    expect(fetchImpl).toHaveBeenCalledTimes(1);
  });

  it("a failed step surfaces as a visible degraded banner", async () => {
    const fetchImpl = async () => {
      throw new Error("service down");
    };
    const client = new ServiceClient("http://svc", fetchImpl as any);
    const store = new SessionStore();
    try {
      await client.step("s");
    } catch (err) {
      store.apply({ type: "degraded", reason: (err as Error).message });
    }
    const banner = renderBanner(store.view());
    expect(banner).toContain("service degraded");
    expect(banner).toContain("no automatic retry");
    expect(banner).toContain("role=\"alert\"");
  });
});
