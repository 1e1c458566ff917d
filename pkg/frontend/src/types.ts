/** Shared types mirroring the annotation service's HTTP API. */

export const EMOTIONS = [
  "angry",
  "funny",
  "fear",
  "happy",
  "sad",
  "surprised",
  "neutral",
  "excited",
  "touched",
  "tense",
] as const;

export type Emotion = (typeof EMOTIONS)[number];

export const MAX_CONFIDENCE = 5;

export interface Task {
  task_id: string;
  clip_id: string;
  timestamp_seconds: number;
  frame_uri: string;
  prefilled_emotions: string[];
  assigned_annotator: string;
  mode?: "simple" | "rationale";
}

export interface SubmissionPayload {
  task_id: string;
  annotator?: string;
  /** Sparse: zero-valued scores are never serialized. */
  scores: Record<string, number>;
  rationale?: string;
}

export interface SubmissionAck {
  ok: boolean;
  task_id: string;
}
