"""Metrics and experiment orchestration for the 10-class emotion task.

Reports Accuracy, Macro-F1 (unweighted mean over all 10 classes), and
Weighted-F1 (gold-proportion weighted), plus per-class precision/recall/F1
and a confusion matrix. Three arithmetic identities tie the report together
and are verified on every computed report:

    accuracy    = sum_c proportion_c * recall_c
    weighted_f1 = sum_c proportion_c * f1_c
    macro_f1    = mean of the 10 per-class f1 values

Failed completion parses always count as wrong (never skipped) and are
tracked in a reserved failed column outside the 10x10 grid. Internal
arithmetic runs at full precision; rounding to 2 decimals happens only at
report emission, half-up.
"""

from __future__ import annotations

import json
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path

from .annotation import AggregatedFrameLabel
from .context import ContextTriplet
from .errors import EmptyInput, MissingAggregate, MissingContext
from .model_client import ModelClient, ModelEndpointConfig, classify_emotion
from .prompts import EmotionPrediction, PromptVariant, parse_completion, render_prompt
from .taxonomy import CANONICAL_NAMES, CANONICAL_ORDER, EmotionLabel

TIE_CANONICAL = "canonical_only"
TIE_PERMISSIVE = "correct_if_in_tie_set"
TIE_POLICIES = (TIE_CANONICAL, TIE_PERMISSIVE)

DOMAINS = ("raw", "fpv")


def round2(value: float) -> float:
    """Half-up rounding to 2 decimals, applied at report time only."""
    return float(Decimal(repr(value)).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


@dataclass(frozen=True)
class EvalExample:
    """One test frame: gold aggregate plus the parsed model prediction."""

    clip_id: str
    t: int
    gold: AggregatedFrameLabel
    prediction: EmotionPrediction

    @property
    def frame_key(self) -> tuple[str, int]:
        return (self.clip_id, self.t)

    def effective_gold(self, tie_policy: str) -> EmotionLabel:
        """The label the example is scored against under a tie policy."""
        pred = self.prediction.label
        if tie_policy == TIE_PERMISSIVE and pred is not None and pred in self.gold.tie_set:
            return pred
        return self.gold.canonical_label

    def to_dict(self) -> dict:
        return {
            "clip_id": self.clip_id,
            "t": self.t,
            "gold": self.gold.to_dict(),
            "label": self.prediction.label.value if self.prediction.label else None,
            "raw_completion": self.prediction.raw_completion,
            "parse_status": self.prediction.parse_status,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalExample":
        label = EmotionLabel(d["label"]) if d["label"] else None
        return cls(
            clip_id=d["clip_id"],
            t=int(d["t"]),
            gold=AggregatedFrameLabel.from_dict(d["gold"]),
            prediction=EmotionPrediction(label, d["raw_completion"], d["parse_status"]),
        )


@dataclass(frozen=True)
class ConfusionMatrix:
    """Gold-by-predicted counts; failed parses sit in a separate column."""

    counts: tuple[tuple[int, ...], ...]  # rows gold, cols predicted, canonical order
    failed: tuple[int, ...]  # per gold class

    def total(self) -> int:
        return sum(sum(row) for row in self.counts) + sum(self.failed)

    def row_percent(self) -> list[list[float]]:
        out = []
        for i, row in enumerate(self.counts):
            denom = sum(row) + self.failed[i]
            out.append([round2(100.0 * v / denom) if denom else 0.0 for v in row])
        return out

    def to_dict(self) -> dict:
        return {
            "labels": list(CANONICAL_NAMES),
            "counts": [list(r) for r in self.counts],
            "failed": list(self.failed),
            "row_percent": self.row_percent(),
        }

    def to_csv(self) -> str:
        lines = ["gold\\pred," + ",".join(CANONICAL_NAMES) + ",failed"]
        for i, label in enumerate(CANONICAL_NAMES):
            row = ",".join(str(v) for v in self.counts[i])
            lines.append(f"{label},{row},{self.failed[i]}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class MetricsReport:
    """Full-precision metrics; ``to_dict`` rounds for emission."""

    accuracy: float
    macro_f1: float
    weighted_f1: float
    per_class: dict[str, dict[str, float]]
    confusion: ConfusionMatrix
    parse_failure_rate: float
    n_examples: int
    tie_policy: str

    def verify_identities(self, tol: float = 0.01) -> None:
        acc, macro, weighted = aggregate_from_per_class(self.per_class)
        for name, got, want in (
            ("accuracy", acc, self.accuracy),
            ("macro_f1", macro, self.macro_f1),
            ("weighted_f1", weighted, self.weighted_f1),
        ):
            if abs(got - want) > tol:
                raise RuntimeError(f"metric identity violated for {name}: {got} vs {want}")

    def to_dict(self) -> dict:
        return {
            "accuracy": round2(self.accuracy),
            "macro_f1": round2(self.macro_f1),
            "weighted_f1": round2(self.weighted_f1),
            "per_class": {
                label: {k: round2(v) for k, v in stats.items()}
                for label, stats in self.per_class.items()
            },
            "parse_failure_rate": round2(self.parse_failure_rate),
            "n_examples": self.n_examples,
            "tie_policy": self.tie_policy,
            "confusion": self.confusion.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        lines = ["class,precision,recall,f1,proportion"]
        for label, stats in self.per_class.items():
            lines.append(
                f"{label},{round2(stats['precision'])},{round2(stats['recall'])},"
                f"{round2(stats['f1'])},{round2(stats['proportion'])}"
            )
        lines.append(f"accuracy,{round2(self.accuracy)},,,")
        lines.append(f"macro_f1,{round2(self.macro_f1)},,,")
        lines.append(f"weighted_f1,{round2(self.weighted_f1)},,,")
        return "\n".join(lines) + "\n"


def aggregate_from_per_class(per_class: dict[str, dict[str, float]]) -> tuple[float, float, float]:
    """Reconstruct the three headline metrics from per-class stats (percent).

    These identities also validate externally reported tables: feeding a
    reference per-class table through them must reproduce its footer.
    """
    f1s = [per_class[name]["f1"] for name in CANONICAL_NAMES]
    macro = sum(f1s) / len(f1s)
    weighted = sum(per_class[n]["proportion"] * per_class[n]["f1"] for n in CANONICAL_NAMES) / 100.0
    accuracy = sum(per_class[n]["proportion"] * per_class[n]["recall"] for n in CANONICAL_NAMES) / 100.0
    return accuracy, macro, weighted


def build_confusion(examples: list[EvalExample], tie_policy: str = TIE_CANONICAL) -> ConfusionMatrix:
    """Tally gold-by-predicted counts; failed parses go to the failed column."""
    if not examples:
        raise EmptyInput("examples")
    n = len(CANONICAL_ORDER)
    grid = [[0] * n for _ in range(n)]
    failed = [0] * n
    index = {label: i for i, label in enumerate(CANONICAL_ORDER)}
    for ex in examples:
        gi = index[ex.effective_gold(tie_policy)]
        if ex.prediction.label is None:
            failed[gi] += 1
        else:
            grid[gi][index[ex.prediction.label]] += 1
    return ConfusionMatrix(
        counts=tuple(tuple(row) for row in grid),
        failed=tuple(failed),
    )


def compute_metrics(examples: list[EvalExample], tie_policy: str = TIE_CANONICAL) -> MetricsReport:
    """Per-class precision/recall/F1 and the three headline metrics.

    Classes absent from both gold and predictions score 0 across the board
    (the empty-denominator convention). Under the permissive tie policy a
    prediction inside the gold tie set counts as that label.
    """
    if not examples:
        raise EmptyInput("examples")
    if tie_policy not in TIE_POLICIES:
        raise ValueError(f"tie_policy must be one of {TIE_POLICIES}")

    confusion = build_confusion(examples, tie_policy)
    n_total = len(examples)
    per_class: dict[str, dict[str, float]] = {}
    correct_total = 0
    for i, label in enumerate(CANONICAL_ORDER):
        gold_count = sum(confusion.counts[i]) + confusion.failed[i]
        pred_count = sum(confusion.counts[r][i] for r in range(len(CANONICAL_ORDER)))
        correct = confusion.counts[i][i]
        correct_total += correct
        precision = 100.0 * correct / pred_count if pred_count else 0.0
        recall = 100.0 * correct / gold_count if gold_count else 0.0
        f1 = 2 * precision * recall / (precision + recall) if (precision + recall) else 0.0
        per_class[label.value] = {
            "precision": precision,
            "recall": recall,
            "f1": f1,
            "proportion": 100.0 * gold_count / n_total,
        }

    n_failed = sum(confusion.failed)
    report = MetricsReport(
        accuracy=100.0 * correct_total / n_total,
        macro_f1=sum(s["f1"] for s in per_class.values()) / len(per_class),
        weighted_f1=sum(s["proportion"] * s["f1"] for s in per_class.values()) / 100.0,
        per_class=per_class,
        confusion=confusion,
        parse_failure_rate=100.0 * n_failed / n_total,
        n_examples=n_total,
        tie_policy=tie_policy,
    )
    report.verify_identities()
    return report


# --- experiment orchestration ---------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    """One run: domain pairing, prompt variant, endpoint, and scoring policy."""

    train_domain: str  # "raw" | "fpv" | "none" (zero-shot)
    test_domain: str
    variant: PromptVariant
    model: ModelEndpointConfig
    tie_policy: str = TIE_CANONICAL
    allow_recovery: bool = True

    def __post_init__(self):
        if self.train_domain not in DOMAINS + ("none",):
            raise ValueError("train_domain must be raw, fpv, or none")
        if self.test_domain not in DOMAINS:
            raise ValueError("test_domain must be raw or fpv")
        if self.tie_policy not in TIE_POLICIES:
            raise ValueError(f"tie_policy must be one of {TIE_POLICIES}")

    def to_dict(self) -> dict:
        return {
            "train_domain": self.train_domain,
            "test_domain": self.test_domain,
            "variant": self.variant.value,
            "tie_policy": self.tie_policy,
            "allow_recovery": self.allow_recovery,
            "model": {
                "base_url": self.model.base_url,
                "model_name": self.model.model_name,
                "timeout_seconds": self.model.timeout_seconds,
                "max_retries": self.model.max_retries,
                "max_parallel_requests": self.model.max_parallel_requests,
                "temperature": self.model.temperature,
                "attachment_mode": self.model.attachment_mode,
                "backoff_seconds": self.model.backoff_seconds,
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        model = ModelEndpointConfig.from_env(**d.get("model", {}))
        return cls(
            train_domain=d.get("train_domain", "none"),
            test_domain=d["test_domain"],
            variant=PromptVariant(d["variant"]),
            model=model,
            tie_policy=d.get("tie_policy", TIE_CANONICAL),
            allow_recovery=bool(d.get("allow_recovery", True)),
        )


def load_examples_log(path: str | Path) -> dict[tuple[str, int], EvalExample]:
    """Read a (possibly partial) example log for resuming."""
    path = Path(path)
    examples: dict[tuple[str, int], EvalExample] = {}
    if path.exists():
        for line in path.read_text().splitlines():
            if line.strip():
                ex = EvalExample.from_dict(json.loads(line))
                examples[ex.frame_key] = ex
    return examples


def run_experiment(
    cfg: ExperimentConfig,
    manifest,
    contexts: dict[tuple[str, int], ContextTriplet],
    aggregates: dict[tuple[str, int], AggregatedFrameLabel],
    out_dir: str | Path,
    backend=None,
    cumulative_texts: dict[tuple[str, int], str] | None = None,
    split: str = "test",
) -> MetricsReport:
    """Predict every manifest test frame and score the run.

    Inference fans out with bounded parallelism; completed predictions are
    appended to ``examples.jsonl`` so an interrupted run resumes where it
    stopped. The metric reduction sorts by frame key, so the report is
    independent of completion order.
    """
    if cfg.model.temperature != 0:
        raise ValueError("evaluation runs require temperature 0 for reproducibility")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    log_path = out_dir / "examples.jsonl"
    cumulative_texts = cumulative_texts or {}

    frame_keys = sorted(
        (clip_id, t) for clip_id, t, frame_split in manifest.frames if frame_split == split
    )
    for fk in frame_keys:
        if fk not in aggregates:
            raise MissingAggregate(fk)
        if fk not in contexts:
            raise MissingContext(fk)

    done = load_examples_log(log_path)
    pending = [fk for fk in frame_keys if fk not in done]

    client = ModelClient(cfg.model, backend=backend, log_path=out_dir / "requests.jsonl")
    append_lock = threading.Lock()

    def predict(fk: tuple[str, int]) -> None:
        request = render_prompt(
            cfg.variant, contexts[fk], gold=None, cumulative_text=cumulative_texts.get(fk)
        )
        raw = classify_emotion(client, request)
        prediction = parse_completion(raw, allow_recovery=cfg.allow_recovery)
        example = EvalExample(clip_id=fk[0], t=fk[1], gold=aggregates[fk], prediction=prediction)
        with append_lock:
            with open(log_path, "a") as f:
                f.write(json.dumps(example.to_dict()) + "\n")
            done[fk] = example

    if pending:
        with ThreadPoolExecutor(max_workers=cfg.model.max_parallel_requests) as pool:
            list(pool.map(predict, pending))

    examples = [done[fk] for fk in frame_keys]
    report = compute_metrics(examples, tie_policy=cfg.tie_policy)
    (out_dir / "report.json").write_text(report.to_json())
    (out_dir / "report.csv").write_text(report.to_csv())
    (out_dir / "confusion.csv").write_text(report.confusion.to_csv())
    return report
