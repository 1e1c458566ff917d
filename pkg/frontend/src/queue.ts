/**
 * Offline submission queue: failed submissions are held and retried with
 * backoff until the service acknowledges them. Nothing is ever dropped
 * silently; state changes surface through the status callback so the UI can
 * show a retry banner.
 */

import { NetworkError, ServiceClient } from "./api.js";
import { SubmissionPayload } from "./types.js";

export type QueueStatus =
  | { state: "idle" }
  | { state: "offline"; pending: number; nextRetryMs: number }
  | { state: "flushing"; pending: number }
  | { state: "flushed" };

export interface QueueOptions {
  baseDelayMs?: number;
  maxDelayMs?: number;
  onStatus?: (status: QueueStatus) => void;
  sleep?: (ms: number) => Promise<void>;
}

const defaultSleep = (ms: number) => new Promise<void>((resolve) => setTimeout(resolve, ms));

export class OfflineQueue {
  private readonly client: ServiceClient;
  private readonly pending: SubmissionPayload[] = [];
  private readonly baseDelayMs: number;
  private readonly maxDelayMs: number;
  private readonly onStatus: (status: QueueStatus) => void;
  private readonly sleep: (ms: number) => Promise<void>;
  private flushing = false;

  constructor(client: ServiceClient, options: QueueOptions = {}) {
    this.client = client;
    this.baseDelayMs = options.baseDelayMs ?? 1000;
    this.maxDelayMs = options.maxDelayMs ?? 30_000;
    this.onStatus = options.onStatus ?? (() => undefined);
    this.sleep = options.sleep ?? defaultSleep;
  }

  get size(): number {
    return this.pending.length;
  }

  enqueue(payload: SubmissionPayload): void {
    this.pending.push(payload);
  }

  /**
   * Drain the queue in order. Network failures back off and retry forever;
   * a server-side rejection (4xx) is NOT retried silently and is re-thrown
   * with the payload left at the head of the queue for the caller to fix.
   */
  async flush(maxAttempts = Infinity): Promise<void> {
    if (this.flushing) return;
    this.flushing = true;
    let attempt = 0;
    try {
      while (this.pending.length > 0) {
        this.onStatus({ state: "flushing", pending: this.pending.length });
        const head = this.pending[0]!;
        try {
          await this.client.submit(head);
          this.pending.shift();
          attempt = 0;
        } catch (err) {
          if (err instanceof NetworkError) {
            attempt += 1;
            if (attempt >= maxAttempts) throw err;
            const delay = Math.min(this.baseDelayMs * 2 ** (attempt - 1), this.maxDelayMs);
            this.onStatus({ state: "offline", pending: this.pending.length, nextRetryMs: delay });
            await this.sleep(delay);
            continue;
          }
          throw err; // validation errors need user attention, not retries
        }
      }
      this.onStatus({ state: "flushed" });
    } finally {
      this.flushing = false;
      if (this.pending.length === 0) this.onStatus({ state: "idle" });
    }
  }
}
