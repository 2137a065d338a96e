/** Studio state: the scenario draft being edited and the live run view.
 *
 * The draft is what create-session submits, so point placement has to
 * round-trip exactly: a point placed at pixel (x, y) appears at (x, y)
 * in the created scenario document.  Streamed records apply in step
 * order; out-of-order or duplicate messages are rejected loudly rather
 * than silently reordered.
 */
export function newDraft(width = 256, height = 256, seed = 7) {
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
export function placePoint(draft, x, y) {
    const px = Math.round(x);
    const py = Math.round(y);
    if (px < 0 || py < 0 || px >= draft.width || py >= draft.height) {
        return draft;
    }
    if (draft.pendingHandle === null) {
        return { ...draft, pendingHandle: [px, py] };
    }
    const point = { handle: draft.pendingHandle, target: [px, py] };
    return {
        ...draft,
        pendingHandle: null,
        points: [...draft.points, point],
    };
}
export function addMaskRect(draft, x0, y0, x1, y1) {
    const rect = {
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
export function clearDraft(draft) {
    return newDraft(draft.width, draft.height, draft.seed);
}
/** The submitted scenario: a neutral scene with one blob under each handle. */
export function draftToScenario(draft, channels = 16) {
    const blobs = draft.points.map((pt, i) => {
        const signature = new Array(channels).fill(0);
        // a 4-channel block per point keeps signatures unit-norm and distinct
        const start = (i * 4) % (channels - 3);
        for (let c = start; c < start + 4; c++)
            signature[c] = 0.5;
        return {
            center: [pt.handle[0], pt.handle[1]],
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
export function newRunView() {
    return { records: [], status: "running" };
}
/** Apply one streamed message; records must arrive in step order. */
export function applyMessage(view, message) {
    if (message.type === "status") {
        return message.status
            ? { ...view, status: message.status }
            : view;
    }
    const record = message.record;
    if (!record)
        return view;
    const expected = view.records.length + 1;
    if (record.step !== expected) {
        throw new Error(`stream out of order: got step ${record.step}, expected ${expected}`);
    }
    return { ...view, records: [...view.records, record] };
}
/** Per-point polyline of tracked positions, starting at the handle. */
export function trajectory(view, pointIndex, handle) {
    const trail = [handle];
    for (const record of view.records) {
        trail.push(record.points[pointIndex].p);
    }
    return trail;
}
