/** Studio wiring: canvas interaction, control buttons, live panels. */

import { chartData } from "./chart.js";
import { ServiceClient } from "./client.js";
import { drawChart, drawCross, drawMask, drawTrail, HANDLE_COLOR,
         TARGET_COLOR } from "./draw.js";
import { addMaskRect, applyMessage, clearDraft, draftToScenario, newDraft,
         newRunView, placePoint, trajectory, RunView, StudioDraft } from "./state.js";
import type { SessionState } from "./types.js";

const client = new ServiceClient("");

let draft: StudioDraft = newDraft();
let view: RunView = newRunView();
let sessionId: string | null = null;
let sessionState: SessionState | null = null;
let maskMode = false;
let dragStart: [number, number] | null = null;
let heatmapPoint: number | null = null;
let streamAbort: AbortController | null = null;

const field = document.getElementById("field") as HTMLCanvasElement;
const overlay = document.getElementById("overlay") as HTMLCanvasElement;
const chart = document.getElementById("chart") as HTMLCanvasElement;
const statusLine = document.getElementById("status") as HTMLElement;
const banner = document.getElementById("banner") as HTMLElement;
const frame = new Image();

function $(id: string): HTMLElement {
  return document.getElementById(id) as HTMLElement;
}

function slider(id: string, out: string, apply: (v: number) => void): void {
  const el = $(id) as HTMLInputElement;
  el.addEventListener("input", () => {
    apply(parseFloat(el.value));
    $(out).textContent = el.value;
    redraw();
  });
}

function canvasPos(ev: MouseEvent): [number, number] {
  const rect = overlay.getBoundingClientRect();
  return [
    ((ev.clientX - rect.left) / rect.width) * draft.width,
    ((ev.clientY - rect.top) / rect.height) * draft.height,
  ];
}

overlay.addEventListener("mousedown", (ev) => {
  if (!maskMode) return;
  dragStart = canvasPos(ev);
});

overlay.addEventListener("mouseup", (ev) => {
  const pos = canvasPos(ev);
  if (maskMode && dragStart) {
    draft = addMaskRect(draft, dragStart[0], dragStart[1], pos[0], pos[1]);
    dragStart = null;
  } else if (!maskMode && sessionId === null) {
    draft = placePoint(draft, pos[0], pos[1]);
  }
  redraw();
});

function setStatus(text: string): void {
  statusLine.textContent = text;
}

async function createSession(): Promise<void> {
  if (draft.points.length === 0) {
    setStatus("place at least one handle/target pair first");
    return;
  }
  try {
    const scenario = draftToScenario(draft);
    const created = await client.createSession(scenario);
    sessionId = created.id;
    view = newRunView();
    banner.hidden = true;
    setStatus(`session ${created.id}: ${created.status}`);
    followStream();
    pollState();
  } catch (err) {
    setStatus(`create failed: ${err}`);
  }
}

function followStream(): void {
  if (!sessionId) return;
  streamAbort?.abort();
  streamAbort = new AbortController();
  client
    .stream(sessionId, (message) => {
      view = applyMessage(view, message);
      redraw();
    }, streamAbort.signal)
    .catch(() => {
      banner.hidden = false;   // stale-state warning with reconnect
    });
}

async function pollState(): Promise<void> {
  if (!sessionId) return;
  try {
    sessionState = await client.state(sessionId);
    setStatus(
      `session ${sessionId}: ${sessionState.status}, step ${sessionState.step}`);
    refreshFrame();
  } catch {
    banner.hidden = false;
  }
  if (sessionState && ["running", "paused", "initializing"]
      .includes(sessionState.status)) {
    setTimeout(pollState, 500);
  }
}

function refreshFrame(): void {
  if (!sessionId || !sessionState) return;
  frame.src = client.frameUrl(sessionId, heatmapPoint, sessionState.step);
}

frame.onload = () => redraw();

function redraw(): void {
  const fctx = field.getContext("2d")!;
  fctx.imageSmoothingEnabled = false;
  fctx.clearRect(0, 0, field.width, field.height);
  if (frame.src && frame.complete && frame.naturalWidth > 0) {
    fctx.drawImage(frame, 0, 0, field.width, field.height);
  } else {
    fctx.fillStyle = "#202020";
    fctx.fillRect(0, 0, field.width, field.height);
  }

  const ctx = overlay.getContext("2d")!;
  ctx.clearRect(0, 0, overlay.width, overlay.height);
  ctx.save();
  ctx.scale(overlay.width / draft.width, overlay.height / draft.height);
  drawMask(ctx, draft.maskRects);
  for (const pt of draft.points) {
    drawCross(ctx, pt.handle[0], pt.handle[1], HANDLE_COLOR);
    drawCross(ctx, pt.target[0], pt.target[1], TARGET_COLOR);
  }
  if (draft.pendingHandle) {
    drawCross(ctx, draft.pendingHandle[0], draft.pendingHandle[1],
              HANDLE_COLOR, 6);
  }
  draft.points.forEach((pt, i) => {
    drawTrail(ctx, trajectory(view, i, pt.handle));
  });
  ctx.restore();

  drawChart(chart.getContext("2d")!, chartData(view, 0, draft.config.tau),
            chart.width, chart.height, draft.config.max_steps);
  const last = view.records[view.records.length - 1];
  $("readout").textContent = last
    ? `step ${last.step} loss ${last.loss.toFixed(4)} ` +
      `s ${last.points[0].s?.toFixed(3) ?? "-"} gate ${last.gate_choice}`
    : "no steps yet";
}

$("create").addEventListener("click", createSession);
$("step1").addEventListener("click", () => sessionId && client.control(sessionId, "step", 1));
$("step10").addEventListener("click", () => sessionId && client.control(sessionId, "step", 10));
$("runbtn").addEventListener("click", () => sessionId && client.control(sessionId, "run"));
$("pause").addEventListener("click", () => sessionId && client.control(sessionId, "pause"));
$("reset").addEventListener("click", () => {
  streamAbort?.abort();
  sessionId = null;
  sessionState = null;
  view = newRunView();
  draft = clearDraft(draft);
  frame.src = "";
  redraw();
});
$("maskmode").addEventListener("change", (ev) => {
  maskMode = (ev.target as HTMLInputElement).checked;
});
$("heatmap").addEventListener("change", (ev) => {
  heatmapPoint = (ev.target as HTMLInputElement).checked ? 0 : null;
  refreshFrame();
});
$("reconnect").addEventListener("click", () => {
  banner.hidden = true;
  followStream();
  pollState();
});

slider("lam", "lamv", (v) => (draft.config.lam = v));
slider("tau", "tauv", (v) => (draft.config.tau = v));
slider("eta", "etav", (v) => (draft.config.eta = v));

redraw();
setStatus("place a red handle, then its blue target; create to start");
