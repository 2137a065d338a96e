/** Service client.  Streaming uses fetch + incremental SSE parsing so the
 * same code runs in the browser and under node's test runner.
 */
export class ServiceError extends Error {
    status;
    constructor(status, message) {
        super(message);
        this.status = status;
    }
}
export class ServiceClient {
    baseUrl;
    constructor(baseUrl) {
        this.baseUrl = baseUrl;
    }
    async request(path, init) {
        const resp = await fetch(this.baseUrl + path, init);
        const body = await resp.json().catch(() => ({}));
        if (!resp.ok) {
            throw new ServiceError(resp.status, JSON.stringify(body));
        }
        return body;
    }
    async createSession(scenario, overrides = {}) {
        return (await this.request("/sessions", {
            method: "POST",
            headers: { "content-type": "application/json" },
            body: JSON.stringify({ scenario, config_overrides: overrides }),
        }));
    }
    async state(id) {
        return (await this.request(`/sessions/${id}/state`));
    }
    async control(id, action, steps = 1) {
        await this.request(`/sessions/${id}/control`, {
            method: "POST",
            headers: { "content-type": "application/json" },
            body: JSON.stringify({ action, steps }),
        });
    }
    frameUrl(id, heatmapPoint, cacheKey) {
        const layer = heatmapPoint === null ? "" : `heatmap_point=${heatmapPoint}&`;
        return `${this.baseUrl}/sessions/${id}/frame?${layer}t=${cacheKey}`;
    }
    /** Consume the SSE event stream, invoking onMessage per data frame.
     * Resolves when the server closes the stream (terminal session). */
    async stream(id, onMessage, signal) {
        const resp = await fetch(`${this.baseUrl}/sessions/${id}/events`, {
            signal,
        });
        if (!resp.ok || !resp.body) {
            throw new ServiceError(resp.status, "event stream unavailable");
        }
        const reader = resp.body.getReader();
        const decoder = new TextDecoder();
        let buffer = "";
        for (;;) {
            const { value, done } = await reader.read();
            if (done)
                break;
            buffer += decoder.decode(value, { stream: true });
            let idx;
            while ((idx = buffer.indexOf("\n\n")) >= 0) {
                const frame = buffer.slice(0, idx);
                buffer = buffer.slice(idx + 2);
                for (const line of frame.split("\n")) {
                    if (line.startsWith("data: ")) {
                        onMessage(JSON.parse(line.slice(6)));
                    }
                }
            }
        }
    }
}
