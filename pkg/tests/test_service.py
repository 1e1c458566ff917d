"""HTTP service: task serving, validated submissions, durability, idempotent
aggregation, stats, and eval jobs."""

from __future__ import annotations

import json
import time

import pytest
from fastapi.testclient import TestClient

from emoview.annotation import aggregate_document, validate_document
from emoview.errors import CorpusNotFound
from emoview.service import CorpusStore, ServiceConfig, create_app

from conftest import build_corpus


@pytest.fixture
def corpus(tmp_path):
    return build_corpus(tmp_path / "corpus", {"clip_a": ("movie1", 3), "clip_b": ("movie2", 2)})


@pytest.fixture
def client(corpus):
    app = create_app(ServiceConfig(corpus_root=str(corpus)))
    return TestClient(app)


def submit(client, annotator, task_id, scores, rationale=None):
    body = {"task_id": task_id, "annotator": annotator, "scores": scores}
    if rationale is not None:
        body["rationale"] = rationale
    return client.post("/annotations", json=body)


def test_missing_corpus_rejected(tmp_path):
    with pytest.raises(CorpusNotFound):
        create_app(ServiceConfig(corpus_root=str(tmp_path / "nope")))


def test_next_task_ordering(client):
    task = client.get("/tasks/next", params={"annotator": "a1"}).json()
    assert task["task_id"] == "clip_a:0"
    assert task["timestamp_seconds"] == 0
    assert task["prefilled_emotions"] == [
        "angry", "funny", "fear", "happy", "sad", "surprised", "neutral", "excited", "touched", "tense",
    ]
    assert task["assigned_annotator"] == "a1"


def test_task_advances_after_submission_and_never_repeats(client):
    seen = []
    for _ in range(5):
        response = client.get("/tasks/next", params={"annotator": "a1"})
        if response.status_code == 204:
            break
        task = response.json()
        seen.append(task["task_id"])
        assert submit(client, "a1", task["task_id"], {"happy": 3}).status_code == 200
    assert seen == ["clip_a:0", "clip_a:1", "clip_a:2", "clip_b:0", "clip_b:1"]
    assert client.get("/tasks/next", params={"annotator": "a1"}).status_code == 204
    assert len(set(seen)) == len(seen)


def test_two_annotators_may_hold_same_frame(client):
    t1 = client.get("/tasks/next", params={"annotator": "a1"}).json()
    t2 = client.get("/tasks/next", params={"annotator": "a2"}).json()
    assert t1["task_id"] == t2["task_id"] == "clip_a:0"


def test_submission_validation_errors(client):
    response = submit(client, "a1", "clip_a:0", {"happy": 6})
    assert response.status_code == 422
    assert response.json()["error"] == "ConfidenceOutOfRange"

    response = submit(client, "a1", "clip_a:0", {"bored": 3})
    assert response.status_code == 422
    assert response.json()["error"] == "UnknownEmotion"

    response = submit(client, "a1", "clip_a:0", {})
    assert response.status_code == 422
    assert response.json()["error"] == "AllZeroScores"

    response = submit(client, "a1", "clip_a:0", {"happy": 0})
    assert response.status_code == 422
    assert response.json()["error"] == "AllZeroScores"

    response = submit(client, "a1", "clip_a:0", {"happy": 3}, rationale="nice light")
    assert response.status_code == 422
    assert response.json()["error"] == "RationaleInSimpleMode"


def test_rationale_mode_accepts_rationales(corpus):
    app = create_app(ServiceConfig(corpus_root=str(corpus), mode="rationale"))
    client = TestClient(app)
    response = submit(client, "a1", "clip_a:0", {"happy": 3}, rationale="warm tones")
    assert response.status_code == 200


def test_submission_survives_restart(corpus):
    client1 = TestClient(create_app(ServiceConfig(corpus_root=str(corpus))))
    assert submit(client1, "a1", "clip_a:0", {"happy": 4}).status_code == 200

    client2 = TestClient(create_app(ServiceConfig(corpus_root=str(corpus))))
    progress = client2.get("/progress").json()
    assert progress["clip_a"]["submitted"] == {"a1": 1}
    task = client2.get("/tasks/next", params={"annotator": "a1"}).json()
    assert task["task_id"] == "clip_a:1"


def test_frame_bytes_served(client):
    response = client.get("/frames/clip_a/0")
    assert response.status_code == 200
    assert response.headers["content-type"] == "image/jpeg"
    assert response.content.startswith(b"\xff\xd8")
    assert client.get("/frames/clip_a/99").status_code == 404


def test_aggregate_idempotent_per_content(client):
    for t in range(3):
        submit(client, "a1", f"clip_a:{t}", {"happy": 3})
        submit(client, "a2", f"clip_a:{t}", {"happy": 2, "tense": 1})
    first = client.post("/aggregate/clip_a").json()
    second = client.post("/aggregate/clip_a").json()
    assert first["job_id"] == second["job_id"]
    assert first["state"] == "done"
    agg = json.loads(open(first["artifact_uri"]).read())
    assert set(agg["frames"]) == {"0", "1", "2"}

    # new content -> new job
    submit(client, "a3", "clip_a:0", {"sad": 5})
    third = client.post("/aggregate/clip_a").json()
    assert third["job_id"] != first["job_id"]

    job = client.get(f"/jobs/{first['job_id']}").json()
    assert job["state"] == "done"


def test_cli_service_parity(client, corpus, tmp_path):
    for t in range(3):
        submit(client, "a1", f"clip_a:{t}", {"happy": 3})
        submit(client, "a2", f"clip_a:{t}", {"tense": 2})
    job = client.post("/aggregate/clip_a").json()
    service_bytes = open(job["artifact_uri"], "rb").read()

    store = CorpusStore(str(corpus))
    doc = store.compact_document("clip_a", "simple")
    doc_path = tmp_path / "doc.json"
    doc_path.write_text(doc.to_json())

    from emoview.cli import main

    out_path = tmp_path / "agg.json"
    assert main(["aggregate", "--in", str(doc_path), "--out", str(out_path)]) == 0
    assert out_path.read_bytes() == service_bytes


def test_resubmission_replaces_earlier_record(client):
    submit(client, "a1", "clip_a:0", {"happy": 4})
    submit(client, "a1", "clip_a:0", {"sad": 2})
    submit(client, "a2", "clip_a:0", {"happy": 1})
    for t in (1, 2):
        submit(client, "a1", f"clip_a:{t}", {"neutral": 1})
        submit(client, "a2", f"clip_a:{t}", {"neutral": 1})
    job = client.post("/aggregate/clip_a").json()
    agg = json.loads(open(job["artifact_uri"]).read())
    assert agg["frames"]["0"]["scores"] == {"happy": 1, "sad": 2}


def test_stats_endpoint(client):
    for t in range(3):
        submit(client, "a1", f"clip_a:{t}", {"happy": 3})
    stats = client.get("/stats").json()
    assert stats["clip_a"]["frames"] == 3
    assert stats["clip_a"]["class_distribution"]["happy"]["count"] == 3
    csv_response = client.get("/stats", params={"format": "csv"})
    assert csv_response.status_code == 200
    assert "class_distribution,happy" in csv_response.text


def test_bearer_token_identity(corpus):
    config = ServiceConfig(corpus_root=str(corpus), tokens={"tok-1": "rater_one"})
    client = TestClient(create_app(config))
    assert client.get("/tasks/next").status_code == 401
    response = client.get("/tasks/next", headers={"Authorization": "Bearer tok-1"})
    assert response.json()["assigned_annotator"] == "rater_one"
    posted = client.post(
        "/annotations",
        json={"task_id": "clip_a:0", "scores": {"happy": 2}},
        headers={"Authorization": "Bearer tok-1"},
    )
    assert posted.status_code == 200
    progress = client.get("/progress").json()
    assert progress["clip_a"]["submitted"] == {"rater_one": 1}


def test_eval_run_job(client, corpus, tmp_path):
    # annotate clip_b fully, aggregate, build contexts, then run a gold-echo eval
    for t in range(2):
        submit(client, "a1", f"clip_b:{t}", {"tense": 3})
    job = client.post("/aggregate/clip_b").json()
    assert job["state"] == "done"

    manifest = {
        "train_movies": ["movie1"],
        "test_movies": ["movie2"],
        "frames": [["clip_b", 0, "test"], ["clip_b", 1, "test"]],
        "seed": 0,
    }
    manifest_path = tmp_path / "manifest.json"
    manifest_path.write_text(json.dumps(manifest))

    from conftest import simple_triplet

    contexts = {
        "triplets": {str(t): simple_triplet("clip_b", t).to_dict() for t in range(2)},
        "cumulative": {},
    }
    contexts_path = tmp_path / "contexts.json"
    contexts_path.write_text(json.dumps(contexts))

    body = {
        "experiment": {
            "train_domain": "none",
            "test_domain": "fpv",
            "variant": "single_frame",
            "model": {"max_parallel_requests": 2, "backoff_seconds": 0.001},
        },
        "manifest": str(manifest_path),
        "aggregates": {"clip_b": job["artifact_uri"]},
        "contexts": {"clip_b": str(contexts_path)},
        "out_dir": str(tmp_path / "eval_out"),
        "mock": "gold",
    }
    started = client.post("/eval/run", json=body).json()
    assert started["kind"] == "eval"
    for _ in range(100):
        status = client.get(f"/jobs/{started['job_id']}").json()
        if status["state"] in ("done", "failed"):
            break
        time.sleep(0.05)
    assert status["state"] == "done", status
    report = json.loads(open(status["artifact_uri"]).read())
    assert report["accuracy"] == 100.00


def test_compacted_document_validates(client, corpus):
    for t in range(3):
        submit(client, "a1", f"clip_a:{t}", {"happy": 3})
    store = CorpusStore(str(corpus))
    doc = store.compact_document("clip_a", "simple")
    revalidated = validate_document(doc.to_json())
    agg = aggregate_document(revalidated)
    assert sorted(agg.frames) == [0, 1, 2]
