/** Confidence-chart data: everything shown is lifted verbatim from the
 * streamed step records — the chart never recomputes engine quantities.
 */
export function chartData(view, pointIndex, tau) {
    const series = view.records.map((r) => ({
        step: r.step,
        s: r.points[pointIndex].s,
    }));
    const first = view.records[0];
    const s1 = first ? first.points[pointIndex].s : null;
    const threshold = s1 === null || s1 === undefined ? null : tau * s1;
    const markers = view.records
        .filter((r) => r.gate_choice === "template")
        .map((r) => ({ step: r.step, confidence: r.gate_confidences[pointIndex] }));
    const losses = view.records.map((r) => ({ step: r.step, loss: r.loss }));
    return { series, threshold, markers, losses };
}
