/** Studio state: the scenario draft being edited and the live run view.
 *
 * The draft is what create-session submits, so point placement has to
 * round-trip exactly: a point placed at pixel (x, y) appears at (x, y)
 * in the created scenario document.  Streamed records apply in step
 * order; out-of-order or duplicate messages are rejected loudly rather
 * than silently reordered.
 */

import type {
  PointDoc,
  RectDoc,
  ScenarioDoc,
  StepRecordDoc,
} from "./types.js";

export interface DraftConfig {
  lam: number;
  tau: number;
  eta: number;
  max_steps: number;
}

export interface StudioDraft {
  width: number;
  height: number;
  seed: number;
  points: PointDoc[];
  pendingHandle: [number, number] | null;
  maskRects: RectDoc[];
  config: DraftConfig;
}

export function newDraft(width = 256, height = 256, seed = 7): StudioDraft {
  return {
    width,
    height,
    seed,
    points: [],
    pendingHandle: null,
    maskRects: [],
    config: { lam: 0.3, tau: 0.4, eta: 20.0, max_steps: 60 },
  };
}

/** First click places a red handle, the second its blue target. */
export function placePoint(draft: StudioDraft, x: number, y: number): StudioDraft {
  const px = Math.round(x);
  const py = Math.round(y);
  if (px < 0 || py < 0 || px >= draft.width || py >= draft.height) {
    return draft;
  }
  if (draft.pendingHandle === null) {
    return { ...draft, pendingHandle: [px, py] };
  }
  const point: PointDoc = { handle: draft.pendingHandle, target: [px, py] };
  return {
    ...draft,
    pendingHandle: null,
    points: [...draft.points, point],
  };
}

export function addMaskRect(
  draft: StudioDraft,
  x0: number,
  y0: number,
  x1: number,
  y1: number,
): StudioDraft {
  const rect: RectDoc = {
    x0: Math.max(0, Math.min(Math.round(x0), Math.round(x1))),
    y0: Math.max(0, Math.min(Math.round(y0), Math.round(y1))),
    x1: Math.min(draft.width, Math.max(Math.round(x0), Math.round(x1)) + 1),
    y1: Math.min(draft.height, Math.max(Math.round(y0), Math.round(y1)) + 1),
  };
  if (rect.x1 - rect.x0 < 2 || rect.y1 - rect.y0 < 2) {
    return draft;
  }
  return { ...draft, maskRects: [...draft.maskRects, rect] };
}

export function clearDraft(draft: StudioDraft): StudioDraft {
  return newDraft(draft.width, draft.height, draft.seed);
}

/** The submitted scenario: a neutral scene with one blob under each handle. */
export function draftToScenario(draft: StudioDraft, channels = 16): ScenarioDoc {
  const blobs = draft.points.map((pt, i) => {
    const signature = new Array(channels).fill(0);
    // a 4-channel block per point keeps signatures unit-norm and distinct
    const start = (i * 4) % (channels - 3);
    for (let c = start; c < start + 4; c++) signature[c] = 0.5;
    return {
      center: [pt.handle[0], pt.handle[1]] as [number, number],
      sigma: 2.4,
      amplitude: 2.0,
      channel_signature: signature,
    };
  });
  return {
    format_version: 1,
    name: "studio",
    kind: "plain",
    seed: draft.seed,
    scene: {
      height: draft.height,
      width: draft.width,
      channels,
      noise_amplitude: 0.01,
      latent_scale: 100.0,
      blobs,
    },
    points: draft.points.map((pt, i) => ({ ...pt, blob: i })),
    mask: draft.maskRects.length ? draft.maskRects : "full",
    config: {
      lam: draft.config.lam,
      tau: draft.config.tau,
      eta: draft.config.eta,
      max_steps: draft.config.max_steps,
      sigma_label: 2.4,
    },
  };
}

export interface RunView {
  records: StepRecordDoc[];
  status: string;
}

export function newRunView(): RunView {
  return { records: [], status: "running" };
}

/** Apply one streamed message; records must arrive in step order. */
export function applyMessage(
  view: RunView,
  message: { type: string; record?: StepRecordDoc; status?: string | null },
): RunView {
  if (message.type === "status") {
    return message.status
      ? { ...view, status: message.status }
      : view;
  }
  const record = message.record;
  if (!record) return view;
  const expected = view.records.length + 1;
  if (record.step !== expected) {
    throw new Error(
      `stream out of order: got step ${record.step}, expected ${expected}`,
    );
  }
  return { ...view, records: [...view.records, record] };
}

/** Per-point polyline of tracked positions, starting at the handle. */
export function trajectory(
  view: RunView,
  pointIndex: number,
  handle: [number, number],
): Array<[number, number]> {
  const trail: Array<[number, number]> = [handle];
  for (const record of view.records) {
    trail.push(record.points[pointIndex].p);
  }
  return trail;
}
