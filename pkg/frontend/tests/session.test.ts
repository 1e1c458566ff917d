/**
 * Scripted end-to-end session against a real service instance: fetch ->
 * score -> submit -> advance for 10 frames, sparse payloads on the wire,
 * all-zero blocked client-side and rejected server-side with 422.
 */

import { ChildProcess, spawn } from "node:child_process";
import { mkdtempSync, mkdirSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiError, ServiceClient } from "../src/api.js";
import { AnnotateSession } from "../src/session.js";
import { EMOTIONS, SubmissionPayload, Task } from "../src/types.js";

const TINY_JPEG = Buffer.from(
  "ffd8ffe000104a46494600010100000100010000ffdb00430008060607060508070707" +
    "09090808 0a0c140d0c0b0b0c1912130f141d1a1f1e1d1a1c1c20242e2720222c231c1c" +
    "2837292c30313434341f27393d38323c2e333432ffc0000b080001000101011100ffc4" +
    "001400010000000000000000000000000000000008ffc4001410010000000000000000" +
    "0000000000000000ffda0008010100003f00548bf0ffd9".replace(/ /g, ""),
  "hex",
);

function buildCorpus(root: string, clips: Record<string, [string, number]>): void {
  for (const [clipId, [movieId, duration]] of Object.entries(clips)) {
    const clipDir = join(root, movieId, clipId);
    mkdirSync(join(clipDir, "frames"), { recursive: true });
    writeFileSync(
      join(clipDir, "clip.json"),
      JSON.stringify({
        clip_id: clipId,
        movie_id: movieId,
        domain: "raw",
        duration_seconds: duration,
        media_uri: join(clipDir, "media.mp4"),
      }),
    );
    for (let t = 0; t < duration; t++) {
      writeFileSync(join(clipDir, "frames", `${clipId}_${t}.jpg`), TINY_JPEG);
    }
  }
}

const PORT = 8731 + Math.floor(Math.random() * 500);
const BASE_URL = `http://127.0.0.1:${PORT}`;
let service: ChildProcess;

async function waitForService(): Promise<void> {
  const deadline = Date.now() + 20_000;
  while (Date.now() < deadline) {
    try {
      const response = await fetch(`${BASE_URL}/progress`);
      if (response.ok) return;
    } catch {
      // not up yet
    }
    await new Promise((resolve) => setTimeout(resolve, 200));
  }
  throw new Error("service did not become ready");
}

beforeAll(async () => {
  const corpus = mkdtempSync(join(tmpdir(), "emoview-ui-"));
  buildCorpus(corpus, { clip_a: ["movie1", 6], clip_b: ["movie2", 4] });
  service = spawn("python3", ["-m", "emoview.cli", "serve", "--corpus", corpus, "--port", String(PORT)], {
    stdio: "ignore",
  });
  await waitForService();
});

afterAll(() => {
  service?.kill();
});

describe("scripted annotation session", () => {
  it("completes fetch -> score -> submit -> advance for 10 frames", async () => {
    const client = new ServiceClient({ baseUrl: BASE_URL, annotator: "rater_ui" });
    const tasksSeen: Task[] = [];
    const payloadsSent: SubmissionPayload[] = [];
    let done = false;
    const session = new AnnotateSession(client, {
      onTask: (task) => tasksSeen.push(task),
      onSubmitted: (_task, payload) => payloadsSent.push(payload),
      onDone: () => {
        done = true;
      },
    });

    await session.start();
    expect(session.current?.task_id).toBe("clip_a:0");
    expect(session.current?.prefilled_emotions).toEqual([...EMOTIONS]);

    let guard = 0;
    while (session.current && guard < 20) {
      guard += 1;
      const t = session.current.timestamp_seconds;
      // all-zero draft is blocked client-side before any wire traffic
      expect(session.draft!.canSubmit).toBe(false);
      await expect(session.submit()).rejects.toThrow(/submit blocked/);

      session.draft!.setScore(EMOTIONS[t % EMOTIONS.length]!, (t % 5) + 1);
      if (t % 2 === 0) session.draft!.setScore("neutral", 1);
      await session.submit(); // auto-advances
    }

    expect(done).toBe(true);
    expect(payloadsSent).toHaveLength(10);
    expect(session.submittedCount).toBe(10);
    expect(tasksSeen.map((t) => t.task_id)).toEqual([
      "clip_a:0", "clip_a:1", "clip_a:2", "clip_a:3", "clip_a:4", "clip_a:5",
      "clip_b:0", "clip_b:1", "clip_b:2", "clip_b:3",
    ]);

    // sparse payloads: no zero-valued score ever leaves the client
    for (const payload of payloadsSent) {
      expect(Object.keys(payload.scores).length).toBeGreaterThan(0);
      expect(Object.values(payload.scores).every((v) => v >= 1 && v <= 5)).toBe(true);
    }

    const progress = await client.progress();
    expect(progress["clip_a"]!.submitted["rater_ui"]).toBe(6);
    expect(progress["clip_b"]!.submitted["rater_ui"]).toBe(4);
  });

  it("rejects a forced all-zero POST server-side with 422", async () => {
    const response = await fetch(`${BASE_URL}/annotations`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ task_id: "clip_a:0", annotator: "forcer", scores: { happy: 0 } }),
    });
    expect(response.status).toBe(422);
    const body = (await response.json()) as { error: string };
    expect(body.error).toBe("AllZeroScores");
  });

  it("surfaces server validation errors without advancing", async () => {
    const client = new ServiceClient({ baseUrl: BASE_URL, annotator: "rater_two" });
    const validationErrors: ApiError[] = [];
    const session = new AnnotateSession(client, {
      onValidationError: (error) => validationErrors.push(error),
    });
    await session.start();
    const before = session.current?.task_id;
    // bypass the client-side range guard to prove the server rejects too
    (session.draft as unknown as { scores: Map<string, number> }).scores.set("happy", 6);
    await expect(session.submit()).rejects.toBeInstanceOf(ApiError);
    expect(validationErrors[0]?.errorCode).toBe("ConfidenceOutOfRange");
    expect(session.current?.task_id).toBe(before); // still on the same frame
  });
});
