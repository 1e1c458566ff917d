import { describe, expect, it } from "vitest";

import { ApiError, NetworkError, ServiceClient } from "../src/api.js";
import { OfflineQueue, QueueStatus } from "../src/queue.js";
import { SubmissionPayload } from "../src/types.js";

function payload(t: number): SubmissionPayload {
  return { task_id: `clip:${t}`, annotator: "a1", scores: { happy: 3 } };
}

/** fetch stub that fails with a network error n times, then succeeds. */
function flakyFetch(failTimes: number, log: string[]): typeof fetch {
  let failures = 0;
  return (async (url: RequestInfo | URL, init?: RequestInit) => {
    if (failures < failTimes) {
      failures += 1;
      throw new TypeError("fetch failed");
    }
    log.push(String(init?.body ?? ""));
    return new Response(JSON.stringify({ ok: true, task_id: "x" }), { status: 200 });
  }) as typeof fetch;
}

function rejectingFetch(status: number, error: string): typeof fetch {
  return (async () =>
    new Response(JSON.stringify({ error, detail: "rejected" }), { status })) as typeof fetch;
}

describe("OfflineQueue", () => {
  it("retries network failures with backoff until flushed", async () => {
    const sent: string[] = [];
    const statuses: QueueStatus[] = [];
    const client = new ServiceClient({ baseUrl: "http://svc", fetchImpl: flakyFetch(3, sent) });
    const queue = new OfflineQueue(client, {
      baseDelayMs: 1,
      onStatus: (s) => statuses.push(s),
      sleep: async () => undefined,
    });
    queue.enqueue(payload(0));
    queue.enqueue(payload(1));
    await queue.flush();
    expect(queue.size).toBe(0);
    expect(sent).toHaveLength(2);
    expect(statuses.some((s) => s.state === "offline")).toBe(true);
    expect(statuses.at(-1)?.state).toBe("idle");
  });

  it("never drops a submission silently", async () => {
    const client = new ServiceClient({
      baseUrl: "http://svc",
      fetchImpl: (async () => {
        throw new TypeError("offline");
      }) as typeof fetch,
    });
    const queue = new OfflineQueue(client, { baseDelayMs: 1, sleep: async () => undefined });
    queue.enqueue(payload(0));
    await expect(queue.flush(3)).rejects.toBeInstanceOf(NetworkError);
    expect(queue.size).toBe(1); // still pending, not lost
  });

  it("does not retry server-side validation rejections", async () => {
    const client = new ServiceClient({
      baseUrl: "http://svc",
      fetchImpl: rejectingFetch(422, "AllZeroScores"),
    });
    const queue = new OfflineQueue(client, { baseDelayMs: 1, sleep: async () => undefined });
    queue.enqueue(payload(0));
    await expect(queue.flush()).rejects.toBeInstanceOf(ApiError);
    expect(queue.size).toBe(1); // left for the caller to fix, not silently dropped
  });
});

describe("ServiceClient", () => {
  it("parses structured validation errors", async () => {
    const client = new ServiceClient({
      baseUrl: "http://svc",
      fetchImpl: rejectingFetch(422, "ConfidenceOutOfRange"),
    });
    const err = await client.submit(payload(0)).then(
      () => null,
      (e) => e as ApiError,
    );
    expect(err).toBeInstanceOf(ApiError);
    expect(err!.status).toBe(422);
    expect(err!.errorCode).toBe("ConfidenceOutOfRange");
  });

  it("wraps transport failures as NetworkError", async () => {
    const client = new ServiceClient({
      baseUrl: "http://svc",
      fetchImpl: (async () => {
        throw new TypeError("connection refused");
      }) as typeof fetch,
    });
    await expect(client.nextTask()).rejects.toBeInstanceOf(NetworkError);
  });

  it("sends the bearer token when configured", async () => {
    let seenAuth: string | null = null;
    const client = new ServiceClient({
      baseUrl: "http://svc",
      token: "tok-9",
      fetchImpl: (async (_url: RequestInfo | URL, init?: RequestInit) => {
        seenAuth = (init?.headers as Record<string, string>)["Authorization"] ?? null;
        return new Response(null, { status: 204 });
      }) as typeof fetch,
    });
    expect(await client.nextTask()).toBeNull();
    expect(seenAuth).toBe("Bearer tok-9");
  });
});
