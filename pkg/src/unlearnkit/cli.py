"""Command-line front end.

    unlearnkit pipeline --config exp.json [--set unlearn.alpha=0.5] [--out-dir DIR]
    unlearnkit train|retrain --config exp.json
    unlearnkit erase --config exp.json [--model original.unlf]
    unlearnkit reconstruct --config exp.json [--model scratch.unlf] [--teacher original.unlf]
    unlearnkit eval --config exp.json --model some.unlf [--model-id NAME]
    unlearnkit report --config exp.json

Exit codes: 0 success, 1 runtime failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from unlearnkit import config as config_mod
from unlearnkit.data.cifar import CLASS_NAMES as CIFAR_CLASSES
from unlearnkit.data.cifar import find_batches, load_cifar10
from unlearnkit.data.dataset import Dataset, ForgetSpec, partition_forget
from unlearnkit.data.idx import load_mnist
from unlearnkit.data.synth import synth_blobs
from unlearnkit.errors import ConfigError, UnlearnError
from unlearnkit.eval import (
    EvalReport,
    RecoveryTrace,
    TracePoint,
    compare_methods,
    emit_report,
    evaluate,
)
from unlearnkit.nn.checkpoint import load_checkpoint, save_checkpoint
from unlearnkit.nn.network import Network, blank_like, build_model, init_random
from unlearnkit.unlearn import (
    CHECKPOINT_NAMES,
    StageTrace,
    TrainConfig,
    UnlearnConfig,
    derive_seed,
    knowledge_erase,
    reconstruct,
    resolve_seeds,
    retrain_baseline,
    train_original,
    unlearn_pipeline,
)

COMMANDS = ("train", "erase", "reconstruct", "retrain", "pipeline", "eval", "report")
DATA_ENV = "UNLEARN_DATA_DIR"
MANIFEST_FORMAT = "unlearnkit-manifest"
TRACE_FILES = {"original": "trace_original.json", "erase": "trace_erase.json",
               "reconstruct": "trace_reconstruct.json", "retrain": "trace_retrain.json"}
STAGE_OF = {"original": "train", "scratch": "erase", "ours": "reconstruct", "retrained": "retrain"}
# keys whose values are wall-clock measurements; excluded from content digests
TIMING_KEYS = {"seconds", "ours_seconds", "retrain_seconds"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


@dataclass
class Command:
    name: str
    config_path: Path
    config: dict
    overrides: dict[str, Any] = field(default_factory=dict)
    out_dir: Path = Path(".")
    model: Path | None = None
    teacher: Path | None = None
    model_id: str | None = None


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="unlearnkit", description="Stochastic-teacher machine unlearning experiments.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, type=Path, help="experiment JSON file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", dest="overrides",
                       help="override a config value (dotted key, JSON value); repeatable")
        p.add_argument("--out-dir", type=Path, help="output directory (default: config out_dir)")
        if name in ("erase", "reconstruct", "eval"):
            p.add_argument("--model", type=Path, required=name == "eval", help="input checkpoint")
        if name == "reconstruct":
            p.add_argument("--teacher", type=Path, help="original-model checkpoint")
        if name == "eval":
            p.add_argument("--model-id", help="name used in the report (default: checkpoint stem)")
    return parser


def parse_args(argv: list[str]) -> Command:
    """Parse ``argv`` and load the config with overrides applied.

    Raises :class:`UsageError` for bad flags and :class:`ConfigError` for a
    bad config or override.
    """
    ns = _build_parser().parse_args(argv)
    if ns.command is None:
        raise UsageError("unlearnkit: a command is required (" + ", ".join(COMMANDS) + ")")
    cfg = config_mod.load(ns.config)
    overrides = {}
    for text in ns.overrides:
        key, value = config_mod.parse_override(text)
        cfg = config_mod.apply_override(cfg, key, value)
        overrides[key] = value
    if ns.out_dir is not None:
        cfg["out_dir"] = str(ns.out_dir)
    return Command(
        name=ns.command,
        config_path=ns.config,
        config=cfg,
        overrides=overrides,
        out_dir=Path(cfg["out_dir"]),
        model=getattr(ns, "model", None),
        teacher=getattr(ns, "teacher", None),
        model_id=getattr(ns, "model_id", None),
    )


# ---------------------------------------------------------------- building blocks


def load_datasets(cfg: dict) -> tuple[Dataset, Dataset]:
    d = cfg["dataset"]
    seed = cfg["seed"]
    kind = d["kind"]
    if kind == "synth":
        train = synth_blobs(d["num_classes"], d["per_class"], d["image_side"],
                            derive_seed(seed, "data/train"), d["channels"], "synth-train")
        test = synth_blobs(d["num_classes"], d["test_per_class"], d["image_side"],
                           derive_seed(seed, "data/test"), d["channels"], "synth-test")
    else:
        root = d["root"] or os.environ.get(DATA_ENV)
        if not root:
            raise ConfigError(f"dataset.root is not set and ${DATA_ENV} is empty")
        if kind == "cifar10":
            train = load_cifar10(find_batches(root, "train"), "cifar10-train")
            test = load_cifar10(find_batches(root, "test"), "cifar10-test")
        else:
            train = load_mnist(root, "train", kind)
            test = load_mnist(root, "test", kind)
    if d["train_limit"] is not None:
        train = train.head(d["train_limit"])
    if d["test_limit"] is not None:
        test = test.head(d["test_limit"])
    return train, test


def class_names(cfg: dict, num_classes: int) -> list[str]:
    if cfg["dataset"]["kind"] == "cifar10":
        return list(CIFAR_CLASSES)
    return [str(k) for k in range(num_classes)]


def build_arch(cfg: dict, ds: Dataset) -> Network:
    m = cfg["model"]
    return build_model(ds.input_shape, ds.num_classes, m["channels"], m["kernel"], m["padding"], m["pool"])


def forget_spec(cfg: dict) -> ForgetSpec:
    f = cfg["forget"]
    if f["mode"] == "class":
        return ForgetSpec.by_class(f["classes"])
    return ForgetSpec.by_fraction(f["fraction"], derive_seed(cfg["seed"], "forget"))


def stage_configs(cfg: dict, resolve: bool = True) -> tuple[TrainConfig, UnlearnConfig, TrainConfig]:
    """Train, unlearn and retrain configs; with ``resolve`` the stage seeds are derived from ``seed``."""
    u = cfg["unlearn"]
    train = TrainConfig(**cfg["train"])
    unlearn = UnlearnConfig(
        tau_erase=u["tau_erase"],
        tau_reconstruct=u["tau_reconstruct"],
        alpha=u["alpha"],
        kl_tau2_scaling=u["kl_tau2_scaling"],
        erase=TrainConfig(**u["erase"]),
        reconstruct=TrainConfig(**u["reconstruct"]),
    )
    if not resolve:
        return train, unlearn, train
    return resolve_seeds(cfg["seed"], train, unlearn, train)


# ---------------------------------------------------------------- artifacts


def _strip_timing(obj):
    if isinstance(obj, dict):
        return {k: _strip_timing(v) for k, v in obj.items() if k not in TIMING_KEYS}
    if isinstance(obj, list):
        return [_strip_timing(v) for v in obj]
    return obj


def content_digest(path: Path) -> tuple[str, str]:
    """sha256 of a file; JSON and CSV files with timing fields are hashed without them."""
    data = path.read_bytes()
    if path.suffix == ".json":
        doc = json.loads(data)
        stripped = _strip_timing(doc)
        if stripped != doc:
            canon = json.dumps(stripped, sort_keys=True, separators=(",", ":")).encode()
            return hashlib.sha256(canon).hexdigest(), "sha256-without-timing"
    elif path.suffix == ".csv":
        lines = data.decode().splitlines()
        header = lines[0].split(",") if lines else []
        drop = [i for i, h in enumerate(header) if h in TIMING_KEYS]
        if drop:
            kept = "\n".join(",".join(c for i, c in enumerate(line.split(",")) if i not in drop) for line in lines)
            return hashlib.sha256(kept.encode()).hexdigest(), "sha256-without-timing"
    return hashlib.sha256(data).hexdigest(), "sha256"


class Artifacts:
    """Tracks files written by one command and renders the manifest."""

    def __init__(self, out_dir: Path) -> None:
        self.out_dir = out_dir
        self.paths: list[Path] = []

    def add(self, path: Path) -> Path:
        if path not in self.paths:
            self.paths.append(path)
        return path

    def json(self, name: str, doc: Any) -> Path:
        path = self.out_dir / name
        path.write_text(json.dumps(doc, indent=2, allow_nan=False) + "\n")
        return self.add(path)

    def checkpoint(self, name: str, net: Network) -> Path:
        return self.add(save_checkpoint(net, self.out_dir / name))

    def manifest(self, cmd: Command, status: str, error: str | None = None) -> Path:
        entries = []
        for path in sorted(self.paths, key=lambda p: p.name):
            if not path.exists():
                continue
            digest, method = content_digest(path)
            entry = {"path": path.name, "digest": method, "sha256": digest}
            if method == "sha256":
                # the size of a file with timing fields varies between runs
                entry["bytes"] = path.stat().st_size
            entries.append(entry)
        resolved = {k: v for k, v in cmd.config.items() if k != "out_dir"}
        doc = {
            "format": MANIFEST_FORMAT,
            "version": 1,
            "command": cmd.name,
            "status": status,
            "config": resolved,
            "overrides": cmd.overrides,
            "artifacts": entries,
        }
        if error:
            doc["error"] = error
        name = "manifest.json" if cmd.name == "pipeline" else f"manifest_{cmd.name}.json"
        path = self.out_dir / name
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        return path


def _trace_doc(trace: StageTrace) -> dict:
    return trace.to_dict()


def _eval_name(model_id: str, stage: str) -> str:
    return f"eval_{model_id}_{stage}_test.json"


def _write_eval(art: Artifacts, report: EvalReport, stage: str) -> None:
    art.json(_eval_name(report.model_id, stage), report.to_dict())


# ---------------------------------------------------------------- commands


class _Ctx:
    def __init__(self, cmd: Command, art: Artifacts) -> None:
        self.cmd = cmd
        self.art = art
        self.cfg = cmd.config
        self.train, self.test = load_datasets(self.cfg)
        self.arch = build_arch(self.cfg, self.train)
        self.spec = forget_spec(self.cfg)
        self.forgotten = list(self.spec.classes)
        self.train_cfg, self.unlearn_cfg, self.retrain_cfg = stage_configs(self.cfg)
        self._partition = None

    @property
    def partition(self):
        if self._partition is None:
            self._partition = partition_forget(self.train, self.spec)
        return self._partition

    def monitor(self, net: Network) -> EvalReport:
        return evaluate(net, self.test, self.forgotten, "epoch")

    def load(self, path: Path | None, default: str) -> Network:
        path = path or self.cmd.out_dir / default
        if not path.exists():
            raise FileNotFoundError(f"checkpoint not found: {path}")
        return load_checkpoint(path, expect=self.arch)

    def finish(self, role: str, net: Network, trace: StageTrace, report: EvalReport | None = None) -> None:
        self.art.checkpoint(CHECKPOINT_NAMES[role], net)
        self.art.json(TRACE_FILES[trace.stage], _trace_doc(trace))
        _write_eval(self.art, report or evaluate(net, self.test, self.forgotten, role), STAGE_OF[role])


def _do_pipeline(ctx: _Ctx) -> None:
    train_cfg, unlearn_cfg, _ = stage_configs(ctx.cfg, resolve=False)
    result = unlearn_pipeline(
        ctx.train, ctx.spec, train_cfg, unlearn_cfg, test=ctx.test, master_seed=ctx.cfg["seed"], arch=ctx.arch
    )
    models = {"original": result.original, "scratch": result.scratch, "ours": result.unlearned,
              "retrained": result.retrained}
    for role, stage in STAGE_OF.items():
        trace_key = "original" if stage == "train" else stage
        ctx.finish(role, models[role], result.traces[trace_key], result.reports[role])


def _do_train(ctx: _Ctx):
    init = init_random(blank_like(ctx.arch), derive_seed(ctx.cfg["seed"], "init"))
    net, trace = train_original(ctx.train, init, ctx.train_cfg, ctx.monitor)
    ctx.finish("original", net, trace)


def _do_erase(ctx: _Ctx):
    original = ctx.load(ctx.cmd.model, CHECKPOINT_NAMES["original"])
    net, trace = knowledge_erase(original, ctx.partition.forget, ctx.unlearn_cfg, ctx.monitor)
    ctx.finish("scratch", net, trace)


def _do_reconstruct(ctx: _Ctx):
    scratch = ctx.load(ctx.cmd.model, CHECKPOINT_NAMES["scratch"])
    original = ctx.load(ctx.cmd.teacher, CHECKPOINT_NAMES["original"])
    net, trace = reconstruct(scratch, original, ctx.partition.remain, ctx.unlearn_cfg, ctx.monitor)
    ctx.finish("ours", net, trace)


def _do_retrain(ctx: _Ctx):
    net, trace = retrain_baseline(ctx.partition.remain, ctx.retrain_cfg, ctx.arch, ctx.monitor)
    ctx.finish("retrained", net, trace)


def _do_eval(ctx: _Ctx):
    net = ctx.load(ctx.cmd.model, "")
    model_id = ctx.cmd.model_id or ctx.cmd.model.stem
    _write_eval(ctx.art, evaluate(net, ctx.test, ctx.forgotten, model_id), "eval")


def _load_trace(path: Path, method: str) -> RecoveryTrace:
    doc = json.loads(path.read_text())
    pts = [
        TracePoint(r["epoch"], r["snapshot"]["remaining_avg"], r["snapshot"]["forgotten_avg"], r["seconds"])
        for r in doc["records"]
        if r["snapshot"] is not None
    ]
    return RecoveryTrace(method, pts)


def _do_report(cmd: Command, art: Artifacts) -> None:
    out = cmd.out_dir
    reports = []
    for role, stage in STAGE_OF.items():
        path = out / _eval_name(role, stage)
        if path.exists():
            reports.append(EvalReport.from_dict(json.loads(path.read_text())))
    if not reports:
        raise FileNotFoundError(f"no evaluation files (eval_<model>_<stage>_test.json) in {out}")
    traces = []
    for method, stage in (("ours", "reconstruct"), ("retrained", "retrain")):
        path = out / TRACE_FILES[stage]
        if path.exists():
            traces.append(_load_trace(path, method))
    comparison = None
    if len(traces) == 2 and traces[0].points and traces[1].points:
        comparison = compare_methods(traces[0], traces[1])
        art.json("comparison.json", comparison.to_dict())
    names = class_names(cmd.config, reports[0].num_classes)
    for path in emit_report(reports, out / "report.csv", "csv", traces, comparison, names):
        art.add(path)
    for path in emit_report(reports, out / "report.json", "json", traces, comparison, names):
        art.add(path)


def run(cmd: Command) -> int:
    """Execute ``cmd``; writes artifacts and a manifest into ``cmd.out_dir``."""
    cmd.out_dir.mkdir(parents=True, exist_ok=True)
    art = Artifacts(cmd.out_dir)
    try:
        if cmd.name == "report":
            _do_report(cmd, art)
        else:
            ctx = _Ctx(cmd, art)
            if cmd.name == "pipeline":
                _do_pipeline(ctx)
                _do_report(cmd, art)
            else:
                {"train": _do_train, "erase": _do_erase, "reconstruct": _do_reconstruct,
                 "retrain": _do_retrain, "eval": _do_eval}[cmd.name](ctx)
    except ConfigError as exc:
        art.manifest(cmd, "incomplete", str(exc))
        print(f"unlearnkit {cmd.name}: config error: {exc}", file=sys.stderr)
        return 2
    except (UnlearnError, OSError, ValueError) as exc:
        art.manifest(cmd, "incomplete", str(exc))
        print(f"unlearnkit {cmd.name}: {exc}", file=sys.stderr)
        return 1
    art.manifest(cmd, "complete")
    return 0


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        cmd = parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        _build_parser().print_usage(sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"unlearnkit: config error: {exc}", file=sys.stderr)
        return 2
    return run(cmd)


if __name__ == "__main__":
    sys.exit(main())
