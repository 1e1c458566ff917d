/**
 * DOM layer: renders the current frame, the ten pre-filled emotion
 * categories with 0-5 segmented confidence controls, the optional rationale
 * box, and next/previous navigation. All behavior lives in the session
 * controller; this file only wires it to elements.
 */

import { ApiError, ServiceClient } from "./api.js";
import { AnnotateSession } from "./session.js";
import { EMOTIONS, Emotion, MAX_CONFIDENCE, SubmissionPayload, Task } from "./types.js";

interface UiSettings {
  baseUrl: string;
  token?: string;
  annotator?: string;
}

function loadSettings(): UiSettings {
  return {
    baseUrl: localStorage.getItem("emoview.baseUrl") ?? "http://127.0.0.1:8080",
    token: localStorage.getItem("emoview.token") ?? undefined,
    annotator: localStorage.getItem("emoview.annotator") ?? undefined,
  };
}

export function mount(root: HTMLElement): AnnotateSession {
  const settings = loadSettings();
  const client = new ServiceClient({
    baseUrl: settings.baseUrl,
    token: settings.token,
    annotator: settings.annotator,
  });

  root.innerHTML = `
    <header class="instructions">
      Label the <strong>dominant emotion experienced as a viewer</strong> when
      observing the current frame, not the characters' expressions. Assign a
      confidence from 1 (most uncertain) to 5 (most certain) to every emotion
      you experience; leave the rest at 0.
    </header>
    <div id="banner" class="banner" hidden></div>
    <main>
      <figure>
        <img id="frame" alt="current frame" />
        <figcaption id="frame-caption"></figcaption>
      </figure>
      <form id="selectors"></form>
      <label id="rationale-row" hidden>
        Rationale
        <textarea id="rationale" rows="3"
          placeholder="Key visual cues behind your judgment"></textarea>
      </label>
      <div class="controls">
        <button id="prev" type="button">&#8592; Previous</button>
        <button id="submit" type="button" disabled
          title="Select at least one emotion first">Submit</button>
        <button id="next" type="button">Next &#8594;</button>
      </div>
      <div id="error" class="error" hidden></div>
      <div id="done" hidden>All assigned frames are annotated.</div>
    </main>`;

  const frameImg = root.querySelector<HTMLImageElement>("#frame")!;
  const caption = root.querySelector<HTMLElement>("#frame-caption")!;
  const selectors = root.querySelector<HTMLFormElement>("#selectors")!;
  const rationaleRow = root.querySelector<HTMLElement>("#rationale-row")!;
  const rationaleBox = root.querySelector<HTMLTextAreaElement>("#rationale")!;
  const submitButton = root.querySelector<HTMLButtonElement>("#submit")!;
  const prevButton = root.querySelector<HTMLButtonElement>("#prev")!;
  const nextButton = root.querySelector<HTMLButtonElement>("#next")!;
  const banner = root.querySelector<HTMLElement>("#banner")!;
  const errorBox = root.querySelector<HTMLElement>("#error")!;
  const doneBox = root.querySelector<HTMLElement>("#done")!;

  const history: { task: Task; payload: SubmissionPayload }[] = [];
  let reviewing: number | null = null; // index into history while browsing back

  const session = new AnnotateSession(client, {
    onTask: (task) => {
      reviewing = null;
      renderTask(task);
    },
    onSubmitted: (task, payload) => {
      history.push({ task, payload });
      errorBox.hidden = true;
    },
    onValidationError: (error: ApiError) => {
      errorBox.textContent = `${error.errorCode ?? "rejected"}: ${error.detail ?? error.message}`;
      errorBox.hidden = false;
    },
    onQueueStatus: (status) => {
      if (status.state === "offline") {
        banner.textContent =
          `Offline: ${status.pending} submission(s) queued, ` +
          `retrying in ${Math.round(status.nextRetryMs / 1000)}s`;
        banner.hidden = false;
      } else if (status.state === "flushed" || status.state === "idle") {
        banner.hidden = true;
      }
    },
    onDone: () => {
      doneBox.hidden = false;
      submitButton.disabled = true;
      frameImg.removeAttribute("src");
      caption.textContent = "";
    },
  });

  function renderSelectors(readonlyScores?: Record<string, number>): void {
    selectors.innerHTML = "";
    for (const emotion of EMOTIONS) {
      const row = document.createElement("fieldset");
      row.className = "category";
      row.dataset.emotion = emotion;
      const legend = document.createElement("legend");
      legend.textContent = emotion;
      row.appendChild(legend);
      for (let value = 0; value <= MAX_CONFIDENCE; value++) {
        const button = document.createElement("button");
        button.type = "button";
        button.textContent = String(value);
        button.setAttribute("aria-label", `${emotion} confidence ${value}`);
        const current = readonlyScores
          ? (readonlyScores[emotion] ?? 0)
          : (session.draft?.score(emotion) ?? 0);
        button.classList.toggle("selected", current === value);
        button.disabled = readonlyScores !== undefined;
        button.addEventListener("click", () => {
          session.draft?.setScore(emotion, value);
          refresh();
        });
        row.appendChild(button);
      }
      selectors.appendChild(row);
    }
  }

  function refresh(): void {
    const draft = session.draft;
    for (const row of selectors.querySelectorAll<HTMLElement>(".category")) {
      const emotion = row.dataset.emotion as Emotion;
      const score = draft?.score(emotion) ?? 0;
      row.querySelectorAll("button").forEach((button, value) => {
        button.classList.toggle("selected", value === score);
      });
      row.classList.toggle("focused", draft?.focusedEmotion === emotion);
    }
    submitButton.disabled = !draft?.canSubmit;
    submitButton.title = draft?.canSubmit ? "" : "Select at least one emotion first";
  }

  function renderTask(task: Task): void {
    doneBox.hidden = true;
    frameImg.src = client.frameUrl(task);
    caption.textContent = `${task.clip_id} @ ${task.timestamp_seconds}s`;
    rationaleRow.hidden = (task.mode ?? "simple") !== "rationale";
    rationaleBox.value = "";
    renderSelectors();
    refresh();
  }

  function renderHistoryEntry(index: number): void {
    const entry = history[index]!;
    frameImg.src = client.frameUrl(entry.task);
    caption.textContent = `${entry.task.clip_id} @ ${entry.task.timestamp_seconds}s (submitted)`;
    renderSelectors(entry.payload.scores);
    submitButton.disabled = true;
  }

  rationaleBox.addEventListener("input", () => session.draft?.setRationale(rationaleBox.value));

  submitButton.addEventListener("click", () => {
    void session.submit().catch(() => undefined); // surfaced via onValidationError
  });

  prevButton.addEventListener("click", () => {
    if (history.length === 0) return;
    if (reviewing === null && session.hasDirtyDraft) {
      if (!confirm("Discard the scores entered for this frame?")) return;
    }
    reviewing = reviewing === null ? history.length - 1 : Math.max(0, reviewing - 1);
    renderHistoryEntry(reviewing);
  });

  nextButton.addEventListener("click", () => {
    if (reviewing === null) return;
    reviewing += 1;
    if (reviewing >= history.length) {
      reviewing = null;
      if (session.current) renderTask(session.current);
    } else {
      renderHistoryEntry(reviewing);
    }
  });

  document.addEventListener("keydown", (event) => {
    if (event.target instanceof HTMLTextAreaElement) return;
    const draft = session.draft;
    if (!draft || reviewing !== null) return;
    const action = draft.handleKey(event.key);
    if (action.kind === "submit") {
      void session.submit().catch(() => undefined);
    }
    if (action.kind !== "none") {
      event.preventDefault();
      refresh();
    }
  });

  window.addEventListener("beforeunload", (event) => {
    if (session.hasDirtyDraft) event.preventDefault();
  });

  void session.start();
  return session;
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  mount(document.getElementById("app")!);
}
