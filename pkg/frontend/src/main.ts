/**
 * Browser wiring. The UI advances only on confirmed service responses: a
 * click issues one request; its payload is appended to the event log and the
 * whole page re-renders from the fold. Failures append a degraded event —
 * visibly surfaced, never silently retried.
 */

import { ServiceClient, ServiceError } from "./client.js";
import { buildCompareView } from "./compare.js";
import { SessionStore } from "./store.js";
import { Override, PolicyBinding } from "./types.js";
import { renderComparison, renderSession } from "./ui.js";

const SERVICE_URL = (window as unknown as { SERVICE_URL?: string })
  .SERVICE_URL ?? "http://127.0.0.1:8321";

const client = new ServiceClient(SERVICE_URL);
const stores = new Map<string, SessionStore>();
let activeSession: string | null = null;

function mount(): HTMLElement {
  const el = document.getElementById("app");
  if (!el) throw new Error("missing #app element");
  return el;
}

function render(): void {
  const el = mount();
  if (!activeSession) {
    el.innerHTML = "<p>no session — create one</p>"
      + '<button id="create-btn">create session</button>';
    bindCreate();
    return;
  }
  const store = stores.get(activeSession)!;
  el.innerHTML = renderSession(store.view())
    + '<div id="compare-slot"></div>'
    + '<button id="create-btn">new session</button>';
  bindCreate();
  bindControls(store);
}

async function guarded(store: SessionStore,
                       action: () => Promise<void>): Promise<void> {
  try {
    await action();
  } catch (err) {
    const reason = err instanceof ServiceError ? err.message : String(err);
    store.apply({ type: "degraded", reason });
  }
  render();
}

function bindCreate(): void {
  document.getElementById("create-btn")?.addEventListener("click", () => {
    const store = new SessionStore();
    void guarded(store, async () => {
      const response = await client.createSession(
        Math.floor(Math.random() * 1e6), { kind: "manual" });
      store.apply({ type: "created", response });
      stores.set(response.session_id, store);
      activeSession = response.session_id;
    });
  });
}

function currentOverride(store: SessionStore): Override | undefined {
  const view = store.view();
  if (view.policy !== "manual") return undefined;
  const slider = document.getElementById("m-slider") as HTMLInputElement;
  return slider ? { m_t: Number(slider.value) } : undefined;
}

function bindControls(store: SessionStore): void {
  document.getElementById("step-btn")?.addEventListener("click", () => {
    void guarded(store, async () => {
      const sid = store.view().sessionId!;
      const response = await client.step(sid, currentOverride(store));
      store.apply({ type: "step", response });
      const metrics = await client.metrics(sid);
      store.apply({ type: "metrics", payload: metrics });
    });
  });
  document.getElementById("fork-btn")?.addEventListener("click", () => {
    void guarded(store, async () => {
      const parent = store.view().sessionId!;
      const response = await client.fork(parent);
      const branch = new SessionStore();
      for (const event of store.log) branch.apply(event);
      branch.apply({ type: "forked", parent, response });
      stores.set(response.session_id, branch);
      activeSession = response.session_id;
      const compare = await client.compare(parent, response.session_id);
      const slot = document.getElementById("compare-slot");
      if (slot) slot.innerHTML = renderComparison(buildCompareView(compare));
    });
  });
  document.getElementById("policy-select")?.addEventListener("change",
    (event) => {
      const kind = (event.target as HTMLSelectElement).value;
      void guarded(store, async () => {
        const sid = store.view().sessionId!;
        const binding: PolicyBinding = { kind };
        const { state } = await client.switchPolicy(sid, binding);
        store.apply({ type: "policy", kind, state });
      });
    });
  document.getElementById("budget-input")?.addEventListener("change",
    (event) => {
      const budget = Number((event.target as HTMLInputElement).value);
      void guarded(store, async () => {
        const sid = store.view().sessionId!;
        const response = await client.step(sid, { budget });
        store.apply({ type: "step", response });
      });
    });
}

document.addEventListener("DOMContentLoaded", render);
