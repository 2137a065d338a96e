/** Wire types mirroring the session service's JSON bodies. */

export interface PointDoc {
  handle: [number, number];
  target: [number, number];
  blob?: number;
}

export interface RectDoc {
  x0: number;
  y0: number;
  x1: number;
  y1: number;
}

export interface BlobDoc {
  center: [number, number];
  sigma: number;
  amplitude: number;
  channel_signature: number[];
}

export interface ScenarioDoc {
  format_version: number;
  name: string;
  kind: string;
  seed: number;
  scene: {
    height: number;
    width: number;
    channels: number;
    noise_amplitude: number;
    latent_scale: number;
    blobs: BlobDoc[];
  };
  points: PointDoc[];
  mask: "full" | RectDoc[];
  config: Record<string, number>;
}

export interface StepPointDoc {
  p: [number, number];
  s: number | null;
  converged: boolean;
}

export interface StepRecordDoc {
  step: number;
  gate_choice: "dynamic" | "template";
  gate_confidences: Array<number | null>;
  loss: number;
  points: StepPointDoc[];
  w: number[];
  wall_time?: number;
}

export interface StreamMessage {
  type: "step" | "status";
  record?: StepRecordDoc;
  status?: string | null;
}

export interface SessionPointState {
  p: [number, number];
  p0: [number, number];
  target: [number, number];
  s: number | null;
  s1: number | null;
  converged: boolean;
  trajectory: Array<[number, [number, number], number | null]>;
}

export interface SessionState {
  id: string | null;
  scenario_id: string;
  status: string;
  step: number;
  points: SessionPointState[];
  gate_history: string[];
  config: Record<string, number>;
  width: number;
  height: number;
  failure: string | null;
}
