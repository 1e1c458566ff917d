/** Thin typed client for the annotation service endpoints. */

import { SubmissionAck, SubmissionPayload, Task } from "./types.js";

export class ApiError extends Error {
  readonly status: number;
  readonly errorCode: string | null;
  readonly detail: string | null;

  constructor(status: number, errorCode: string | null, detail: string | null) {
    super(`HTTP ${status}${errorCode ? ` ${errorCode}` : ""}${detail ? `: ${detail}` : ""}`);
    this.status = status;
    this.errorCode = errorCode;
    this.detail = detail;
  }
}

export class NetworkError extends Error {}

export interface ClientOptions {
  baseUrl: string;
  token?: string;
  annotator?: string;
  fetchImpl?: typeof fetch;
}

export class ServiceClient {
  readonly baseUrl: string;
  readonly token?: string;
  readonly annotator?: string;
  private readonly fetchImpl: typeof fetch;

  constructor(options: ClientOptions) {
    this.baseUrl = options.baseUrl.replace(/\/+$/, "");
    this.token = options.token;
    this.annotator = options.annotator;
    this.fetchImpl = options.fetchImpl ?? fetch;
  }

  private headers(json: boolean): Record<string, string> {
    const headers: Record<string, string> = {};
    if (json) headers["Content-Type"] = "application/json";
    if (this.token) headers["Authorization"] = `Bearer ${this.token}`;
    return headers;
  }

  private async request(path: string, init?: RequestInit): Promise<Response> {
    let response: Response;
    try {
      response = await this.fetchImpl(`${this.baseUrl}${path}`, init);
    } catch (err) {
      throw new NetworkError(String(err));
    }
    if (!response.ok && response.status !== 204) {
      let errorCode: string | null = null;
      let detail: string | null = null;
      try {
        const body = (await response.json()) as { error?: string; detail?: unknown };
        errorCode = body.error ?? null;
        detail = body.detail != null ? String(body.detail) : null;
      } catch {
        // non-JSON error body; status alone is enough
      }
      throw new ApiError(response.status, errorCode, detail);
    }
    return response;
  }

  /** Next unannotated frame for this annotator, or null when done. */
  async nextTask(): Promise<Task | null> {
    const query = this.annotator ? `?annotator=${encodeURIComponent(this.annotator)}` : "";
    const response = await this.request(`/tasks/next${query}`, { headers: this.headers(false) });
    if (response.status === 204) return null;
    return (await response.json()) as Task;
  }

  async submit(payload: SubmissionPayload): Promise<SubmissionAck> {
    const response = await this.request("/annotations", {
      method: "POST",
      headers: this.headers(true),
      body: JSON.stringify(payload),
    });
    return (await response.json()) as SubmissionAck;
  }

  frameUrl(task: Task): string {
    return `${this.baseUrl}${task.frame_uri}`;
  }

  async progress(): Promise<Record<string, { frames: number; submitted: Record<string, number> }>> {
    const response = await this.request("/progress", { headers: this.headers(false) });
    return (await response.json()) as Record<
      string,
      { frames: number; submitted: Record<string, number> }
    >;
  }
}
