/**
 * Branch comparison view over the service's trajectory-diff payload. The
 * dashboard aligns what the service aligned and displays the service's own
 * per-step values and divergence point; it adds no arithmetic of its own
 * beyond choosing what to show.
 */

import { ComparePayload, StepDelta } from "./types.js";

export interface CompareRow {
  index: number;
  day: number | null;
  differs: boolean;
  a: BranchCells | null;
  b: BranchCells | null;
}

export interface BranchCells {
  mT: number;
  executed: number;
  rewardSum: number;
  s1: number;
  s2: number;
  s3: number;
}

export interface CompareView {
  a: string;
  b: string;
  firstDivergenceDay: number | null;
  rows: CompareRow[];
  identical: boolean;
}

function cells(delta: StepDelta | null): BranchCells | null {
  if (delta === null) return null;
  return {
    mT: delta.m_t,
    executed: delta.executed,
    rewardSum: delta.reward_sum,
    s1: delta.totals.s1,
    s2: delta.totals.s2,
    s3: delta.totals.s3,
  };
}

export function buildCompareView(payload: ComparePayload): CompareView {
  const rows = payload.aligned.map((entry) => ({
    index: entry.index,
    day: entry.a ? entry.a.day : entry.b ? entry.b.day : null,
    differs: entry.differs,
    a: cells(entry.a),
    b: cells(entry.b),
  }));
  return {
    a: payload.a,
    b: payload.b,
    firstDivergenceDay: payload.first_divergence_day,
    rows,
    identical: payload.first_divergence_day === null
      && rows.every((r) => !r.differs),
  };
}
