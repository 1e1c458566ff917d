/**
 * Annotation session controller: fetch task -> score -> submit -> advance.
 *
 * Owns the current draft, queues submissions while offline, and surfaces
 * server validation errors instead of swallowing them. The headless test
 * suite drives this class directly; the DOM layer in app.ts is rendering
 * only.
 */

import { ApiError, NetworkError, ServiceClient } from "./api.js";
import { AnnotationDraft } from "./draft.js";
import { OfflineQueue, QueueStatus } from "./queue.js";
import { SubmissionPayload, Task } from "./types.js";

export interface SessionEvents {
  onTask?: (task: Task) => void;
  onSubmitted?: (task: Task, payload: SubmissionPayload) => void;
  onValidationError?: (error: ApiError) => void;
  onQueueStatus?: (status: QueueStatus) => void;
  onDone?: () => void;
}

export class AnnotateSession {
  readonly client: ServiceClient;
  readonly queue: OfflineQueue;
  private readonly events: SessionEvents;
  current: Task | null = null;
  draft: AnnotationDraft | null = null;
  submittedCount = 0;

  constructor(client: ServiceClient, events: SessionEvents = {}, queue?: OfflineQueue) {
    this.client = client;
    this.events = events;
    this.queue =
      queue ?? new OfflineQueue(client, { onStatus: (s) => this.events.onQueueStatus?.(s) });
  }

  /** True when leaving the current frame would lose unsubmitted edits. */
  get hasDirtyDraft(): boolean {
    return this.draft !== null && this.draft.dirty && this.current !== null;
  }

  async start(): Promise<Task | null> {
    return this.advance();
  }

  async advance(): Promise<Task | null> {
    const task = await this.client.nextTask();
    this.current = task;
    this.draft = task ? new AnnotationDraft(task.task_id) : null;
    if (task) {
      this.events.onTask?.(task);
    } else {
      this.events.onDone?.();
    }
    return task;
  }

  /**
   * Submit the current draft and auto-advance. Client-side guard: an
   * all-zero draft never reaches the wire. A network failure queues the
   * payload for retry and still advances; a validation rejection (422)
   * stays on the current frame.
   */
  async submit(): Promise<SubmissionPayload> {
    if (!this.current || !this.draft) {
      throw new Error("no active task");
    }
    if (!this.draft.canSubmit) {
      throw new Error("submit blocked: select at least one emotion");
    }
    const task = this.current;
    const payload = this.draft.payload(
      task,
      this.client.annotator,
      (task.mode ?? "simple") === "rationale",
    );
    try {
      await this.client.submit(payload);
    } catch (err) {
      if (err instanceof NetworkError) {
        this.queue.enqueue(payload);
        void this.queue.flush().catch(() => undefined);
        this.submittedCount += 1;
        this.events.onSubmitted?.(task, payload);
        await this.advance();
        return payload;
      }
      if (err instanceof ApiError && err.status === 422) {
        this.events.onValidationError?.(err);
      }
      throw err;
    }
    this.submittedCount += 1;
    this.events.onSubmitted?.(task, payload);
    await this.advance();
    return payload;
  }
}
