"""Per-class evaluation, recovery-speed comparison and report files."""

from __future__ import annotations

import csv
import json
import math
import os
from collections.abc import Iterable, Sequence
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from unlearnkit.data.dataset import Dataset
from unlearnkit.nn.network import Network

NOT_REACHED = "not reached"
REPORT_FORMAT = "unlearnkit-report"
TABLE_ORDER = ("original", "scratch", "retrained", "ours")


def predict(model: Network, images: np.ndarray, chunk: int = 500) -> np.ndarray:
    """Argmax class per image; ties resolve to the lowest class index."""
    out = []
    for start in range(0, images.shape[0], chunk):
        out.append(model.forward(images[start : start + chunk]).argmax(axis=1))
    return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)


def _nanmean(values: Iterable[float]) -> float:
    vals = [v for v in values if not math.isnan(v)]
    return float(np.mean(vals)) if vals else math.nan


@dataclass
class EvalReport:
    model_id: str
    per_class_accuracy: list[float]
    num_test_samples: list[int]
    forgotten_classes: list[int]
    remaining_avg: float
    forgotten_avg: float
    overall_accuracy: float
    random_baseline: float
    undefined_classes: list[int] = field(default_factory=list)
    split: str = "test"

    @property
    def num_classes(self) -> int:
        return len(self.per_class_accuracy)

    def to_dict(self) -> dict:
        d = asdict(self)
        # JSON has no NaN; null marks an undefined accuracy
        for key in ("remaining_avg", "forgotten_avg", "overall_accuracy"):
            if math.isnan(d[key]):
                d[key] = None
        d["per_class_accuracy"] = [None if math.isnan(v) else v for v in d["per_class_accuracy"]]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        d = dict(d)
        for key in ("remaining_avg", "forgotten_avg", "overall_accuracy"):
            if d[key] is None:
                d[key] = math.nan
        d["per_class_accuracy"] = [math.nan if v is None else float(v) for v in d["per_class_accuracy"]]
        return cls(**d)


def summarize(
    model_id: str, predictions: np.ndarray, labels: np.ndarray, num_classes: int, forgotten: Iterable[int] = ()
) -> EvalReport:
    """Build an :class:`EvalReport` from predicted and true labels."""
    forgotten = sorted({int(c) for c in forgotten})
    if forgotten and not 0 <= forgotten[0] <= forgotten[-1] < num_classes:
        raise ValueError(f"forgotten classes {forgotten} out of range for {num_classes} classes")
    labels = np.asarray(labels)
    correct = np.bincount(labels[predictions == labels], minlength=num_classes)
    counts = np.bincount(labels, minlength=num_classes)
    per_class = [float(correct[k] / counts[k]) if counts[k] else math.nan for k in range(num_classes)]
    undefined = [k for k in range(num_classes) if counts[k] == 0]
    remaining = [per_class[k] for k in range(num_classes) if k not in forgotten]
    return EvalReport(
        model_id=model_id,
        per_class_accuracy=per_class,
        num_test_samples=[int(c) for c in counts],
        forgotten_classes=forgotten,
        remaining_avg=_nanmean(remaining),
        forgotten_avg=_nanmean(per_class[k] for k in forgotten),
        overall_accuracy=float(correct.sum() / labels.size) if labels.size else math.nan,
        random_baseline=1.0 / num_classes,
        undefined_classes=undefined,
    )


def evaluate(model: Network, test: Dataset, forgotten_classes: Iterable[int] = (), model_id: str = "model") -> EvalReport:
    """Per-class test accuracy with remaining/forgotten class means.

    Classes without test samples get NaN accuracy, are listed in
    ``undefined_classes`` and are left out of both averages.
    """
    if len(test) == 0:
        raise ValueError("evaluate needs a non-empty test set")
    return summarize(model_id, predict(model, test.images), test.labels, test.num_classes, forgotten_classes)


@dataclass
class TracePoint:
    epoch: int
    remaining_avg: float
    forgotten_avg: float
    seconds: float


@dataclass
class RecoveryTrace:
    """Accuracy after each training epoch of one method (epochs strictly increasing)."""

    method: str
    points: list[TracePoint] = field(default_factory=list)

    def __post_init__(self) -> None:
        epochs = [p.epoch for p in self.points]
        if any(b <= a for a, b in zip(epochs, epochs[1:])):
            raise ValueError(f"{self.method}: trace epochs must be strictly increasing, got {epochs}")

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "points": [
                {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in asdict(p).items()}
                for p in self.points
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RecoveryTrace":
        pts = [
            TracePoint(
                int(p["epoch"]),
                math.nan if p["remaining_avg"] is None else p["remaining_avg"],
                math.nan if p["forgotten_avg"] is None else p["forgotten_avg"],
                p["seconds"],
            )
            for p in d["points"]
        ]
        return cls(d["method"], pts)


@dataclass
class ComparisonSummary:
    threshold: float
    ours_epochs_to_threshold: int | None
    retrain_epochs_to_threshold: int | None
    epoch_speedup: float | None
    ours_final_remaining: float
    retrain_final_remaining: float
    ours_final_forgotten: float
    retrain_final_forgotten: float
    ours_seconds: float
    retrain_seconds: float

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("ours_epochs_to_threshold", "retrain_epochs_to_threshold"):
            if d[key] is None:
                d[key] = NOT_REACHED
        for key, v in d.items():
            if isinstance(v, float) and math.isnan(v):
                d[key] = None
        return d


def epochs_to_threshold(trace: RecoveryTrace, threshold: float) -> int | None:
    for p in trace.points:
        if p.remaining_avg >= threshold:
            return p.epoch
    return None


def compare_methods(ours: RecoveryTrace, retrain: RecoveryTrace, threshold: float | None = None) -> ComparisonSummary:
    """Epochs each method needs to reach ``threshold`` remaining accuracy.

    The default threshold is the retrain baseline's final remaining accuracy.
    An unreached threshold is reported as ``None`` (rendered "not reached").
    """
    if not ours.points or not retrain.points:
        raise ValueError("compare_methods needs non-empty traces")
    if threshold is None:
        threshold = retrain.points[-1].remaining_avg
    e_ours = epochs_to_threshold(ours, threshold)
    e_retrain = epochs_to_threshold(retrain, threshold)
    speedup = e_retrain / e_ours if e_ours and e_retrain else None
    return ComparisonSummary(
        threshold=float(threshold),
        ours_epochs_to_threshold=e_ours,
        retrain_epochs_to_threshold=e_retrain,
        epoch_speedup=speedup,
        ours_final_remaining=ours.points[-1].remaining_avg,
        retrain_final_remaining=retrain.points[-1].remaining_avg,
        ours_final_forgotten=ours.points[-1].forgotten_avg,
        retrain_final_forgotten=retrain.points[-1].forgotten_avg,
        ours_seconds=ours.points[-1].seconds,
        retrain_seconds=retrain.points[-1].seconds,
    )


def _pct(v: float) -> str:
    return "n/a" if math.isnan(v) else f"{100.0 * v:.2f}"


def _ordered(reports: Sequence[EvalReport]) -> list[EvalReport]:
    rank = {name: i for i, name in enumerate(TABLE_ORDER)}
    return sorted(reports, key=lambda r: rank.get(r.model_id, len(rank)))


def report_rows(reports: Sequence[EvalReport], class_names: Sequence[str] | None = None) -> list[list[str]]:
    """Accuracy table: one row per class, then ``remaining`` and ``forgotten`` rows, in percent."""
    reports = _ordered(reports)
    n = reports[0].num_classes
    if any(r.num_classes != n for r in reports):
        raise ValueError("reports disagree on the number of classes")
    names = list(class_names) if class_names else [str(k) for k in range(n)]
    rows = [["class_name", *(r.model_id for r in reports)]]
    for k in range(n):
        rows.append([names[k], *(_pct(r.per_class_accuracy[k]) for r in reports)])
    rows.append(["remaining", *(_pct(r.remaining_avg) for r in reports)])
    rows.append(["forgotten", *(_pct(r.forgotten_avg) for r in reports)])
    return rows


def write_trace_csv(traces: Sequence[RecoveryTrace], path: str | os.PathLike) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "epoch", "remaining_avg", "forgotten_avg", "seconds"])
        for t in traces:
            for p in t.points:
                w.writerow([t.method, p.epoch, repr(p.remaining_avg), repr(p.forgotten_avg), f"{p.seconds:.6f}"])
    return path


def emit_report(
    reports: Sequence[EvalReport],
    path: str | os.PathLike,
    format: str = "csv",
    traces: Sequence[RecoveryTrace] = (),
    comparison: ComparisonSummary | None = None,
    class_names: Sequence[str] | None = None,
) -> list[Path]:
    """Write the accuracy table (and traces) as CSV or JSON; returns the files written.

    CSV output puts traces in a sibling ``<stem>_traces.csv``; JSON keeps
    everything in one document with full float precision.
    """
    if not reports:
        raise ValueError("emit_report needs at least one report")
    path = Path(path)
    written = []
    if format == "csv":
        with path.open("w", newline="") as fh:
            csv.writer(fh).writerows(report_rows(reports, class_names))
        written.append(path)
        if traces:
            written.append(write_trace_csv(traces, path.with_name(f"{path.stem}_traces.csv")))
    elif format == "json":
        doc = {
            "format": REPORT_FORMAT,
            "version": 1,
            "class_names": list(class_names) if class_names else None,
            "reports": [r.to_dict() for r in _ordered(reports)],
            "traces": [t.to_dict() for t in traces],
            "comparison": comparison.to_dict() if comparison else None,
        }
        path.write_text(json.dumps(doc, indent=2, allow_nan=False) + "\n")
        written.append(path)
    else:
        raise ValueError(f"unknown report format {format!r} (expected 'csv' or 'json')")
    return written


def load_report_json(path: str | os.PathLike) -> dict:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != REPORT_FORMAT:
        raise ValueError(f"{path}: not a {REPORT_FORMAT} document")
    return {
        "class_names": doc.get("class_names"),
        "reports": [EvalReport.from_dict(r) for r in doc["reports"]],
        "traces": [RecoveryTrace.from_dict(t) for t in doc.get("traces", [])],
        "comparison": doc.get("comparison"),
    }
