/** Studio <-> service round-trip against the real session service.
 *
 * Spawns the python service, drives it exactly as the UI does (draft ->
 * create -> step x10 -> stream), and checks that every rendered quantity
 * (trajectory endpoints, confidence-chart values, gate markers) equals
 * the streamed step records verbatim.
 */

import assert from "node:assert/strict";
import { spawn } from "node:child_process";
import { after, before, test } from "node:test";

import { chartData } from "../src/chart.js";
import { ServiceClient } from "../src/client.js";
import { applyMessage, draftToScenario, newDraft, newRunView, placePoint,
         trajectory } from "../src/state.js";
import type { StreamMessage } from "../src/types.js";

const PORT = 8765 + (process.pid % 500);
const BASE = `http://127.0.0.1:${PORT}`;

let service: ReturnType<typeof spawn>;

async function waitForService(): Promise<void> {
  for (let i = 0; i < 100; i++) {
    try {
      const resp = await fetch(`${BASE}/sessions`);
      if (resp.ok) return;
    } catch {
      /* not up yet */
    }
    await new Promise((r) => setTimeout(r, 200));
  }
  throw new Error("service did not come up");
}

before(async () => {
  service = spawn(
    "python3",
    ["-m", "uvicorn", "--factory", "dragfield.service:create_app",
     "--host", "127.0.0.1", "--port", String(PORT), "--log-level", "error"],
    { cwd: "..", stdio: "ignore" },
  );
  await waitForService();
});

after(() => {
  service.kill();
});

test("A9 studio round-trip: rendered values equal streamed records", async () => {
  // place points the way canvas clicks do
  let draft = newDraft(96, 96, 5);
  draft.config.max_steps = 30;
  draft = placePoint(draft, 30, 48);
  draft = placePoint(draft, 60, 48);
  const scenario = draftToScenario(draft);
  assert.deepEqual(scenario.points[0].handle, [30, 48]);
  assert.deepEqual(scenario.points[0].target, [60, 48]);

  const client = new ServiceClient(BASE);
  const created = await client.createSession(scenario);
  assert.equal(created.status, "running");

  await client.control(created.id, "step", 10);
  const deadline = Date.now() + 60_000;
  let state = await client.state(created.id);
  while (state.step < 10 && state.status === "running"
         && Date.now() < deadline) {
    await new Promise((r) => setTimeout(r, 150));
    state = await client.state(created.id);
  }
  assert.ok(state.step >= 10, `expected 10 steps, got ${state.step}`);

  // collect exactly the stream the UI applies
  let view = newRunView();
  const messages: StreamMessage[] = [];
  const abort = new AbortController();
  await new Promise<void>((resolve, reject) => {
    client.stream(created.id, (message) => {
      messages.push(message);
      if (message.type === "step") {
        view = applyMessage(view, message);
        if (view.records.length >= 10) {
          abort.abort();
          resolve();
        }
      }
    }, abort.signal).then(() => resolve(), (err) => {
      if (abort.signal.aborted) resolve();
      else reject(err);
    });
  });

  assert.equal(view.records.length, 10);
  assert.deepEqual(view.records.map((r) => r.step),
                   [1, 2, 3, 4, 5, 6, 7, 8, 9, 10]);

  // the trajectory polyline ends exactly at the last record's position,
  // and every vertex equals the corresponding streamed record.p
  const trail = trajectory(view, 0, [30, 48]);
  assert.deepEqual(trail[0], [30, 48]);
  assert.deepEqual(trail[trail.length - 1], view.records[9].points[0].p);
  view.records.forEach((r, i) => {
    assert.deepEqual(trail[i + 1], r.points[0].p);
  });
  // the service's own state snapshot agrees with the stream
  assert.deepEqual(state.points[0].p, view.records[9].points[0].p);

  // chart values equal the streamed confidences verbatim
  const chart = chartData(view, 0, scenario.config.tau);
  assert.equal(chart.series.length, 10);
  chart.series.forEach((pt, i) => {
    assert.equal(pt.s, view.records[i].points[0].s);
  });
  const s1 = view.records[0].points[0].s;
  assert.ok(s1 !== null);
  assert.equal(chart.threshold, scenario.config.tau * (s1 as number));

  // gate-switch markers appear iff the record stream contains a
  // template-gated step, and only at those exact steps
  const templateSteps = view.records
    .filter((r) => r.gate_choice === "template")
    .map((r) => r.step);
  assert.deepEqual(chart.markers.map((m) => m.step), templateSteps);
  if (templateSteps.length === 0) {
    assert.equal(chart.markers.length, 0);
  }
});

test("service rejects a bad studio draft with field messages", async () => {
  const draft = placePoint(placePoint(newDraft(64, 64), 10, 10), 200, 10);
  // force an out-of-bounds target straight into the document
  const scenario = draftToScenario(draft);
  scenario.points = [{ handle: [10, 10], target: [200, 10], blob: 0 }];
  const client = new ServiceClient(BASE);
  await assert.rejects(
    () => client.createSession(scenario),
    (err: Error) => err.message.includes("points[0].target"));
});
