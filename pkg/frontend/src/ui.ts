/**
 * HTML renderers. Pure functions from view models to markup strings so the
 * tests can assert on rendered output without a browser. Numbers pass
 * through fmt() only — one display-precision rule, no arithmetic.
 */

import { CompareView } from "./compare.js";
import { SessionView, TimelineRow } from "./store.js";

export function fmt(value: number | null | undefined, digits = 4): string {
  if (value === null || value === undefined) return "–";
  return Number(value).toFixed(digits);
}

function esc(text: string): string {
  return text.replace(/&/g, "&amp;").replace(/</g, "&lt;")
    .replace(/>/g, "&gt;");
}

export function renderBanner(view: SessionView): string {
  if (!view.degraded) return "";
  return `<div class="banner error" role="alert">service degraded: `
    + `${esc(view.degradedReason ?? "unknown")} — steering paused, `
    + `no automatic retry</div>`;
}

export function renderEvictions(view: SessionView): string {
  if (view.evictedNotices.length === 0) return "";
  return `<div class="banner warn">evicted sessions: `
    + `${view.evictedNotices.map(esc).join(", ")}</div>`;
}

function timelineCells(row: TimelineRow): string {
  return [
    row.day, fmt(row.mT, 3), fmt(row.alpha3Active, 4), row.budget,
    row.demand, row.executed, row.s1Inc, row.s2Inc, row.s3Inc,
    row.activeClusters, fmt(row.rewardSum, 4),
  ].map((v) => `<td>${v}</td>`).join("");
}

export function renderTimeline(view: SessionView): string {
  const head = "<tr><th>day</th><th>m</th><th>a3 active</th><th>B</th>"
    + "<th>demand</th><th>tests</th><th>S1+</th><th>S2+</th><th>S3+</th>"
    + "<th>|A|</th><th>reward</th></tr>";
  const body = view.timeline.map(
    (row) => `<tr data-day="${row.day}">${timelineCells(row)}</tr>`).join("");
  return `<table class="timeline">${head}${body}</table>`;
}

export function renderClusters(view: SessionView): string {
  const head = "<tr><th>id</th><th>size</th><th>age</th><th>active</th>"
    + "<th>S1</th><th>S2</th><th>S3</th><th>quarantined</th>"
    + "<th>mean q</th><th>max q</th></tr>";
  const body = view.clusters.map((c) =>
    `<tr data-cluster="${c.id}"><td>${c.id}</td><td>${c.size}</td>`
    + `<td>${c.local_day}</td><td>${c.active ? "yes" : "no"}</td>`
    + `<td>${c.s1}</td><td>${c.s2}</td><td>${c.s3}</td>`
    + `<td>${c.quarantined}</td><td>${fmt(c.mean_q)}</td>`
    + `<td>${fmt(c.max_q)}</td></tr>`).join("");
  return `<table class="clusters">${head}${body}</table>`;
}

export function renderTotals(view: SessionView): string {
  if (!view.totals) return "<p class=\"totals\">no steps yet</p>";
  const t = view.totals;
  const reward = view.metrics
    ? ` cumulative reward ${fmt(view.metrics.reward_total)}` : "";
  return `<p class="totals">S1 ${t.s1} · S2 ${t.s2} · S3 ${t.s3} · `
    + `tests ${t.tests} ·${reward}</p>`;
}

export function renderControls(view: SessionView): string {
  const bounds = view.multiplierBounds;
  if (!bounds) return "<p>connect to a session to steer</p>";
  return `<div class="controls">`
    + `<label>multiplier <input id="m-slider" type="range" `
    + `min="${bounds.mMin}" max="${bounds.mMax}" step="0.01" `
    + `value="1"/></label>`
    + `<label>budget <input id="budget-input" type="number" min="0" `
    + `value="${view.nominalBudget ?? 0}"/></label>`
    + `<select id="policy-select">`
    + ["manual", "fixed_m_qr", "bin_m_qr", "hier_ppo_qr"].map(
      (k) => `<option value="${k}"${k === view.policy ? " selected" : ""}>`
        + `${k}</option>`).join("")
    + `</select>`
    + `<button id="step-btn">step</button>`
    + `<button id="fork-btn">fork</button>`
    + `</div>`;
}

export function renderComparison(cv: CompareView): string {
  const caption = cv.identical
    ? "branches identical"
    : `first divergence at day ${cv.firstDivergenceDay}`;
  const head = "<tr><th>#</th><th>day</th><th>m (a)</th><th>m (b)</th>"
    + "<th>tests (a)</th><th>tests (b)</th><th>reward (a)</th>"
    + "<th>reward (b)</th><th>S1 (a)</th><th>S1 (b)</th><th>diff</th></tr>";
  const body = cv.rows.map((row) =>
    `<tr class="${row.differs ? "diverged" : "same"}">`
    + `<td>${row.index}</td><td>${row.day ?? "–"}</td>`
    + `<td>${fmt(row.a?.mT, 3)}</td><td>${fmt(row.b?.mT, 3)}</td>`
    + `<td>${row.a?.executed ?? "–"}</td><td>${row.b?.executed ?? "–"}</td>`
    + `<td>${fmt(row.a?.rewardSum)}</td><td>${fmt(row.b?.rewardSum)}</td>`
    + `<td>${row.a?.s1 ?? "–"}</td><td>${row.b?.s1 ?? "–"}</td>`
    + `<td>${row.differs ? "✱" : ""}</td></tr>`).join("");
  return `<div class="compare"><p>${caption}</p>`
    + `<table>${head}${body}</table></div>`;
}

export function renderSession(view: SessionView): string {
  return renderBanner(view) + renderEvictions(view)
    + `<h2>session ${view.sessionId ?? "—"} · day ${view.day}`
    + `${view.finished ? " · finished" : ""} · policy ${view.policy}</h2>`
    + renderControls(view) + renderTotals(view) + renderClusters(view)
    + renderTimeline(view);
}
