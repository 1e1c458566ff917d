"""Annotation task server and job runner.

Endpoints (JSON unless noted):

* ``GET  /tasks/next?annotator=``  — lowest-timestamp frame the annotator has
  not yet submitted; 204 when they are done.
* ``POST /annotations``            — validate and durably append a submission.
* ``GET  /frames/{clip}/{t}``      — frame image bytes.
* ``GET  /progress``               — per-clip, per-annotator submission counts.
* ``POST /aggregate/{clip}``       — compact the submission log and aggregate;
  idempotent per submission-log content hash.
* ``GET  /stats``                  — corpus statistics (JSON or ``?format=csv``).
* ``POST /eval/run``               — start an evaluation job.
* ``GET  /jobs/{id}``              — job status.

Submissions are persisted to an append-only JSON-lines log per clip, fsync'd
before the request is acknowledged, so an acked annotation survives restart.
Two annotators may hold the same frame concurrently; one annotator never
receives a frame they already submitted. Annotator identity comes from a
bearer token when a token map is configured, otherwise from the request.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import uuid
from dataclasses import dataclass
from pathlib import Path

from fastapi import FastAPI, HTTPException, Request, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import FileResponse, PlainTextResponse

from . import artifacts
from .annotation import (
    AnnotationDocument,
    aggregate_document,
    dataset_stats,
    stats_to_csv,
    validate_document,
)
from .dataset import ClipRecord
from .errors import (
    AllZeroScores,
    ConfidenceOutOfRange,
    CorpusNotFound,
    EmoviewError,
    MalformedDocument,
    RationaleInSimpleMode,
)
from .evaluation import ExperimentConfig, run_experiment
from .model_client import ConstantBackend, GoldEchoBackend
from .taxonomy import CANONICAL_NAMES, parse_label

SCHEMA_VERSION = "1.0"


@dataclass(frozen=True)
class ServiceConfig:
    corpus_root: str
    mode: str = "simple"  # annotation mode served to raters
    tokens: dict[str, str] | None = None  # bearer token -> annotator_id
    host: str = "127.0.0.1"
    port: int = 8080

    @classmethod
    def from_dict(cls, d: dict) -> "ServiceConfig":
        return cls(
            corpus_root=d["corpus_root"],
            mode=d.get("mode", "simple"),
            tokens=d.get("tokens"),
            host=d.get("host", "127.0.0.1"),
            port=int(d.get("port", 8080)),
        )


@dataclass
class JobStatus:
    job_id: str
    kind: str  # "aggregate" | "eval" | "context_build"
    state: str = "pending"  # pending -> running -> done | failed
    progress: float = 0.0
    artifact_uri: str | None = None
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "job_id": self.job_id,
            "kind": self.kind,
            "state": self.state,
            "progress": self.progress,
            "artifact_uri": self.artifact_uri,
            "error": self.error,
        }


class CorpusStore:
    """Filesystem corpus: clip metadata, frames, and per-clip submission logs."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        if not self.root.is_dir():
            raise CorpusNotFound(str(root))
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def _lock(self, clip_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(clip_id, threading.Lock())

    def clips(self) -> dict[str, ClipRecord]:
        out: dict[str, ClipRecord] = {}
        for clip_json in sorted(self.root.glob("*/*/clip.json")):
            record = ClipRecord.from_dict(json.loads(clip_json.read_text()))
            out[record.clip_id] = record
        return out

    def clip_dir(self, clip_id: str) -> Path:
        for clip_json in self.root.glob("*/*/clip.json"):
            if json.loads(clip_json.read_text())["clip_id"] == clip_id:
                return clip_json.parent
        raise KeyError(clip_id)

    def frame_timestamps(self, clip: ClipRecord) -> list[int]:
        return list(range(int(clip.duration_seconds)))

    def frame_path(self, clip_id: str, t: int) -> Path:
        return self.clip_dir(clip_id) / "frames" / f"{clip_id}_{t}.jpg"

    # --- submission log -----------------------------------------------------

    def _log_path(self, clip_id: str) -> Path:
        return self.clip_dir(clip_id) / "submissions.jsonl"

    def submissions(self, clip_id: str) -> list[dict]:
        path = self._log_path(clip_id)
        if not path.exists():
            return []
        return [json.loads(line) for line in path.read_text().splitlines() if line.strip()]

    def append_submission(self, clip_id: str, record: dict) -> None:
        with self._lock(clip_id):
            with open(self._log_path(clip_id), "a") as f:
                f.write(json.dumps(record, sort_keys=True) + "\n")
                f.flush()
                os.fsync(f.fileno())

    def submissions_hash(self, clip_id: str) -> str:
        path = self._log_path(clip_id)
        data = path.read_bytes() if path.exists() else b""
        return hashlib.sha256(data).hexdigest()[:16]

    def compact_document(self, clip_id: str, mode: str) -> AnnotationDocument:
        """Fold the append-only log into a validated annotation document."""
        clip = self.clips().get(clip_id)
        if clip is None:
            raise KeyError(clip_id)
        submissions = self.submissions(clip_id)
        if not submissions:
            raise MalformedDocument(f"no submissions for clip {clip_id}")
        frames: dict[str, list[dict]] = {}
        for sub in submissions:
            entry = {"annotator": sub["annotator"], "scores": sub["scores"]}
            if sub.get("rationale") is not None:
                entry["rationale"] = sub["rationale"]
            # Later submissions by the same annotator replace earlier ones.
            bucket = frames.setdefault(str(sub["timestamp"]), [])
            bucket[:] = [e for e in bucket if e["annotator"] != sub["annotator"]]
            bucket.append(entry)
        doc = {
            "schema_version": SCHEMA_VERSION,
            "mode": mode,
            "emotions": list(CANONICAL_NAMES),
            "confidence_scale": {"min": 0, "max": 5, "zero_means": "not_selected"},
            "video": {"name": clip.media_uri, "fps": 1},
            "frames": frames,
        }
        return validate_document(json.dumps(doc))


def _validate_submission(body: dict, mode: str) -> tuple[str, int, dict, str | None]:
    task_id = body.get("task_id")
    if task_id:
        clip_id, t = artifacts.parse_frame_key(task_id)
    else:
        clip_id, t = body["clip_id"], int(body["timestamp"])
    scores_raw = body.get("scores") or {}
    scores: dict[str, int] = {}
    for name, value in scores_raw.items():
        label = parse_label(name)
        if isinstance(value, bool) or not isinstance(value, int) or not 0 <= value <= 5:
            raise ConfidenceOutOfRange(value)
        if value > 0:
            scores[label.value] = value
    if not scores:
        raise AllZeroScores(t)
    rationale = body.get("rationale")
    if rationale is not None and mode != "rationale":
        raise RationaleInSimpleMode(t)
    return clip_id, t, scores, rationale


def create_app(config: ServiceConfig) -> FastAPI:
    store = CorpusStore(config.corpus_root)
    app = FastAPI(title="emoview annotation service")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    app.state.store = store
    app.state.config = config
    app.state.jobs: dict[str, JobStatus] = {}
    app.state.aggregate_jobs: dict[str, str] = {}  # content hash -> job id
    app.state.eval_lock = threading.Lock()

    def annotator_from(request: Request, claimed: str | None) -> str:
        if config.tokens:
            auth = request.headers.get("authorization", "")
            token = auth.removeprefix("Bearer ").strip()
            annotator = config.tokens.get(token)
            if annotator is None:
                raise HTTPException(status_code=401, detail="unknown bearer token")
            return annotator
        if not claimed:
            raise HTTPException(status_code=422, detail="annotator required")
        return claimed

    @app.exception_handler(EmoviewError)
    async def domain_error(_request: Request, exc: EmoviewError):
        from fastapi.responses import JSONResponse

        return JSONResponse(
            status_code=422,
            content={"error": type(exc).__name__, "detail": str(exc)},
        )

    @app.get("/tasks/next")
    def next_task(request: Request, annotator: str | None = None):
        who = annotator_from(request, annotator)
        for clip_id, clip in sorted(store.clips().items()):
            submitted = {
                s["timestamp"] for s in store.submissions(clip_id) if s["annotator"] == who
            }
            for t in store.frame_timestamps(clip):
                if t not in submitted:
                    return {
                        "task_id": artifacts.frame_key_str(clip_id, t),
                        "clip_id": clip_id,
                        "timestamp_seconds": t,
                        "frame_uri": f"/frames/{clip_id}/{t}",
                        "prefilled_emotions": list(CANONICAL_NAMES),
                        "assigned_annotator": who,
                        "mode": config.mode,
                    }
        return Response(status_code=204)

    @app.post("/annotations")
    async def submit(request: Request):
        body = await request.json()
        who = annotator_from(request, body.get("annotator"))
        clip_id, t, scores, rationale = _validate_submission(body, config.mode)
        clip = store.clips().get(clip_id)
        if clip is None:
            raise HTTPException(status_code=404, detail=f"unknown clip {clip_id}")
        if t not in store.frame_timestamps(clip):
            raise HTTPException(status_code=404, detail=f"no frame {t} in clip {clip_id}")
        record = {"annotator": who, "timestamp": t, "scores": scores}
        if rationale is not None:
            record["rationale"] = rationale
        store.append_submission(clip_id, record)
        return {"ok": True, "task_id": artifacts.frame_key_str(clip_id, t)}

    @app.get("/frames/{clip_id}/{t}")
    def frame(clip_id: str, t: int):
        try:
            path = store.frame_path(clip_id, t)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown clip {clip_id}")
        if not path.exists():
            raise HTTPException(status_code=404, detail="frame not extracted")
        return FileResponse(path, media_type="image/jpeg")

    @app.get("/progress")
    def progress():
        out = {}
        for clip_id, clip in sorted(store.clips().items()):
            per_annotator: dict[str, int] = {}
            for sub in store.submissions(clip_id):
                per_annotator[sub["annotator"]] = per_annotator.get(sub["annotator"], 0) + 1
            out[clip_id] = {
                "frames": len(store.frame_timestamps(clip)),
                "submitted": per_annotator,
            }
        return out

    @app.post("/aggregate/{clip_id}")
    def aggregate(clip_id: str):
        content_hash = store.submissions_hash(clip_id)
        existing = app.state.aggregate_jobs.get(content_hash)
        if existing:
            return app.state.jobs[existing].to_dict()
        job = JobStatus(job_id=f"agg-{content_hash}", kind="aggregate", state="running")
        app.state.jobs[job.job_id] = job
        try:
            doc = store.compact_document(clip_id, config.mode)
            agg = aggregate_document(doc)
            artifact = store.clip_dir(clip_id) / f"aggregate_{content_hash}.json"
            artifact.write_text(agg.to_json())
            job.state = "done"
            job.progress = 1.0
            job.artifact_uri = str(artifact)
            app.state.aggregate_jobs[content_hash] = job.job_id
        except KeyError:
            job.state = "failed"
            job.error = f"unknown clip {clip_id}"
            raise HTTPException(status_code=404, detail=job.error)
        except EmoviewError as exc:
            job.state = "failed"
            job.error = str(exc)
            raise
        return job.to_dict()

    @app.get("/stats")
    def stats(format: str = "json"):
        per_clip = {}
        for clip_id in sorted(store.clips()):
            try:
                doc = store.compact_document(clip_id, config.mode)
            except (EmoviewError, KeyError):
                continue
            per_clip[clip_id] = dataset_stats(doc)
        if format == "csv":
            chunks = []
            for clip_id, s in per_clip.items():
                chunks.append(f"# clip {clip_id}\n" + stats_to_csv(s))
            return PlainTextResponse("".join(chunks), media_type="text/csv")
        return per_clip

    @app.post("/eval/run")
    async def eval_run(request: Request):
        body = await request.json()
        cfg = ExperimentConfig.from_dict(body["experiment"])
        manifest = artifacts.load_manifest(body["manifest"])
        aggregates = artifacts.load_aggregates(body["aggregates"])
        contexts, cumulative = artifacts.load_contexts(body["contexts"])
        out_dir = body["out_dir"]
        backend = None
        mock = body.get("mock")
        if mock == "gold":
            backend = GoldEchoBackend(artifacts.gold_map(aggregates))
        elif mock and mock.startswith("constant:"):
            backend = ConstantBackend(mock.split(":", 1)[1])

        job = JobStatus(job_id=f"eval-{uuid.uuid4().hex[:12]}", kind="eval")
        app.state.jobs[job.job_id] = job

        def run():
            # One evaluation at a time per service; endpoint configs are not
            # safely shareable across concurrent runs.
            with app.state.eval_lock:
                job.state = "running"
                try:
                    report = run_experiment(
                        cfg,
                        manifest,
                        contexts,
                        aggregates,
                        out_dir,
                        backend=backend,
                        cumulative_texts=cumulative,
                    )
                    job.progress = 1.0
                    job.artifact_uri = str(Path(out_dir) / "report.json")
                    job.state = "done"
                except Exception as exc:  # surfaced via job status
                    job.state = "failed"
                    job.error = f"{type(exc).__name__}: {exc}"

        threading.Thread(target=run, daemon=True).start()
        return job.to_dict()

    @app.get("/jobs/{job_id}")
    def job_status(job_id: str):
        job = app.state.jobs.get(job_id)
        if job is None:
            raise HTTPException(status_code=404, detail=f"unknown job {job_id}")
        return job.to_dict()

    return app


def serve(config: ServiceConfig) -> None:
    """Run the service until interrupted; raises PortInUse on a busy port."""
    import uvicorn

    from .errors import PortInUse

    app = create_app(config)
    try:
        uvicorn.run(app, host=config.host, port=config.port, log_level="warning")
    except OSError as exc:
        if exc.errno == 98:  # EADDRINUSE
            raise PortInUse(config.port)
        raise
