/**
 * Client-side annotation draft: one 0-5 confidence per category, an optional
 * rationale, and keyboard navigation state.
 *
 * The server stays the single source of truth for aggregation; this class
 * only guards the submission contract: every category present locally,
 * zero-valued scores stripped from the payload, and submission blocked while
 * everything is zero.
 */

import { EMOTIONS, Emotion, MAX_CONFIDENCE, SubmissionPayload, Task } from "./types.js";

export type KeyAction =
  | { kind: "score"; emotion: Emotion; value: number }
  | { kind: "move"; emotion: Emotion }
  | { kind: "submit" }
  | { kind: "none" };

export class AnnotationDraft {
  readonly taskId: string;
  private scores: Map<Emotion, number>;
  rationale = "";
  dirty = false;
  focusIndex = 0;

  constructor(taskId: string) {
    this.taskId = taskId;
    this.scores = new Map(EMOTIONS.map((e) => [e, 0]));
  }

  score(emotion: Emotion): number {
    return this.scores.get(emotion) ?? 0;
  }

  setScore(emotion: Emotion, value: number): void {
    if (!Number.isInteger(value) || value < 0 || value > MAX_CONFIDENCE) {
      throw new RangeError(`confidence must be an integer in [0, ${MAX_CONFIDENCE}], got ${value}`);
    }
    this.scores.set(emotion, value);
    this.dirty = true;
  }

  clearScore(emotion: Emotion): void {
    this.setScore(emotion, 0);
  }

  setRationale(text: string): void {
    this.rationale = text;
    this.dirty = true;
  }

  get allZero(): boolean {
    for (const value of this.scores.values()) {
      if (value > 0) return false;
    }
    return true;
  }

  /** Submission is only possible once at least one category is scored. */
  get canSubmit(): boolean {
    return !this.allZero;
  }

  get focusedEmotion(): Emotion {
    return EMOTIONS[this.focusIndex] as Emotion;
  }

  /** Sparse map for the wire: zero scores are omitted entirely. */
  sparseScores(): Record<string, number> {
    const out: Record<string, number> = {};
    for (const emotion of EMOTIONS) {
      const value = this.score(emotion);
      if (value > 0) out[emotion] = value;
    }
    return out;
  }

  payload(task: Task, annotator?: string, rationaleMode = false): SubmissionPayload {
    if (!this.canSubmit) {
      throw new Error("cannot submit: no emotion selected");
    }
    const payload: SubmissionPayload = {
      task_id: task.task_id,
      scores: this.sparseScores(),
    };
    if (annotator) payload.annotator = annotator;
    if (rationaleMode && this.rationale.trim()) payload.rationale = this.rationale.trim();
    return payload;
  }

  /**
   * Keyboard parity: digits 1-5 score the focused category, 0 clears it,
   * arrows move between categories, Enter submits (when allowed).
   */
  handleKey(key: string): KeyAction {
    if (key >= "0" && key <= "5") {
      const value = Number(key);
      const emotion = this.focusedEmotion;
      this.setScore(emotion, value);
      return { kind: "score", emotion, value };
    }
    if (key === "ArrowDown" || key === "ArrowRight") {
      this.focusIndex = (this.focusIndex + 1) % EMOTIONS.length;
      return { kind: "move", emotion: this.focusedEmotion };
    }
    if (key === "ArrowUp" || key === "ArrowLeft") {
      this.focusIndex = (this.focusIndex + EMOTIONS.length - 1) % EMOTIONS.length;
      return { kind: "move", emotion: this.focusedEmotion };
    }
    if (key === "Enter" && this.canSubmit) {
      return { kind: "submit" };
    }
    return { kind: "none" };
  }
}
