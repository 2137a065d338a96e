/** Canvas drawing: trails, points, mask shading, the confidence chart. */

import type { ChartData } from "./chart.js";
import type { RectDoc } from "./types.js";

export const HANDLE_COLOR = "#e62828";
export const TARGET_COLOR = "#2850e6";
export const TRAIL_COLOR = "#fafa3c";
export const MASK_TINT = "rgba(255, 255, 255, 0.18)";

export function drawCross(
  ctx: CanvasRenderingContext2D,
  x: number,
  y: number,
  color: string,
  arm = 4,
): void {
  ctx.strokeStyle = color;
  ctx.lineWidth = 1.5;
  ctx.beginPath();
  ctx.moveTo(x - arm, y);
  ctx.lineTo(x + arm, y);
  ctx.moveTo(x, y - arm);
  ctx.lineTo(x, y + arm);
  ctx.stroke();
}

export function drawTrail(
  ctx: CanvasRenderingContext2D,
  trail: Array<[number, number]>,
): void {
  if (trail.length < 2) return;
  ctx.strokeStyle = TRAIL_COLOR;
  ctx.lineWidth = 1.0;
  ctx.beginPath();
  ctx.moveTo(trail[0][0], trail[0][1]);
  for (const [x, y] of trail.slice(1)) ctx.lineTo(x, y);
  ctx.stroke();
}

export function drawMask(
  ctx: CanvasRenderingContext2D,
  rects: RectDoc[],
): void {
  ctx.fillStyle = MASK_TINT;
  for (const r of rects) {
    ctx.fillRect(r.x0, r.y0, r.x1 - r.x0, r.y1 - r.y0);
  }
}

/** Confidence chart: s-series, the tau*s1 threshold, gate-switch marks. */
export function drawChart(
  ctx: CanvasRenderingContext2D,
  data: ChartData,
  width: number,
  height: number,
  maxSteps: number,
): void {
  ctx.clearRect(0, 0, width, height);
  ctx.fillStyle = "#111";
  ctx.fillRect(0, 0, width, height);
  const sx = (step: number) => (step / Math.max(maxSteps, 1)) * (width - 10) + 5;
  const sy = (v: number) => height - 8 - v * (height - 16);

  if (data.threshold !== null) {
    ctx.strokeStyle = "#888";
    ctx.setLineDash([4, 3]);
    ctx.beginPath();
    ctx.moveTo(0, sy(Math.min(data.threshold, 1.2)));
    ctx.lineTo(width, sy(Math.min(data.threshold, 1.2)));
    ctx.stroke();
    ctx.setLineDash([]);
  }

  ctx.strokeStyle = "#3ce6a0";
  ctx.beginPath();
  let started = false;
  for (const pt of data.series) {
    if (pt.s === null) continue;
    const x = sx(pt.step);
    const y = sy(Math.min(pt.s, 1.2));
    if (!started) {
      ctx.moveTo(x, y);
      started = true;
    } else {
      ctx.lineTo(x, y);
    }
  }
  ctx.stroke();

  ctx.fillStyle = "#e6a43c";
  for (const marker of data.markers) {
    const x = sx(marker.step);
    ctx.fillRect(x - 2, 2, 4, 6);
  }
}
