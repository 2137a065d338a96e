/** Confidence-chart data: everything shown is lifted verbatim from the
 * streamed step records — the chart never recomputes engine quantities.
 */

import type { RunView } from "./state.js";

export interface ChartPoint {
  step: number;
  s: number | null;
}

export interface GateMarker {
  step: number;
  /** the confidence the gate saw (the previous step's score) */
  confidence: number | null;
}

export interface ChartData {
  series: ChartPoint[];
  /** tau * s1, drawn as the switch threshold; null before s1 exists */
  threshold: number | null;
  markers: GateMarker[];
  losses: Array<{ step: number; loss: number }>;
}

export function chartData(
  view: RunView,
  pointIndex: number,
  tau: number,
): ChartData {
  const series: ChartPoint[] = view.records.map((r) => ({
    step: r.step,
    s: r.points[pointIndex].s,
  }));
  const first = view.records[0];
  const s1 = first ? first.points[pointIndex].s : null;
  const threshold = s1 === null || s1 === undefined ? null : tau * s1;
  const markers: GateMarker[] = view.records
    .filter((r) => r.gate_choice === "template")
    .map((r) => ({ step: r.step, confidence: r.gate_confidences[pointIndex] }));
  const losses = view.records.map((r) => ({ step: r.step, loss: r.loss }));
  return { series, threshold, markers, losses };
}
