"""Pipeline orchestration: one subcommand per stage over a shared JSON config.

All stage randomness derives from the master seed, so rerunning the whole
pipeline with the same seed reproduces every artifact byte for byte.
Subcommands skip work whose outputs already exist unless --force is given,
and fail with a single-line machine-parsable error naming the producing
subcommand when an upstream artifact is missing.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import balance as balance_mod
from . import corpus as corpus_mod
from . import denoise, evaluation, subword, tasks
from .baseline import EndpointConfig, RunLimits, latest_predictions, prompt_for, run_baseline
from .model import (
    Checkpoint,
    DecodeConfig,
    TrainConfig,
    desk_preset,
    encode_task_pairs,
    finetune,
    generate,
    paper_preset,
    pretrain,
)
from .seeding import derive_seed, make_rng

log = logging.getLogger("luxgen")

GENERATION_TASKS = ("headline", "positive_comment", "negative_comment", "description")


class PipelineError(RuntimeError):
    def __init__(self, message: str, command: str = "", hint: str = ""):
        super().__init__(message)
        self.command = command
        self.hint = hint


@dataclass
class PipelineConfig:
    workdir: str = "out"
    manifest: str = "fixtures/manifest.json"
    master_seed: int = 20240
    reference_language: str = "lb"
    tolerance: float = 0.05
    domain_map: dict = field(default_factory=lambda: {"comments": "web"})
    vocab_size: int = 512
    num_sentinels: int = 64
    model_preset: str = "desk"
    max_seq_len: int = 64
    corruption_rate: float = 0.15
    models: dict = field(
        default_factory=lambda: {"LuxT5-desk": ["lb"], "LuxT5-Grande-desk": ["lb", "de", "fr"]}
    )
    tasks: list = field(default_factory=lambda: list(tasks.TASKS))
    test_fraction: float = 0.15
    exact_counts: dict = field(default_factory=dict)  # task -> [train, test]
    pretrain: dict = field(
        default_factory=lambda: {"learning_rate": 1e-3, "batch_size": 8, "total_steps": 60}
    )
    finetune: dict = field(
        default_factory=lambda: {
            "learning_rate": 1e-3, "batch_size": 8, "epochs": 2, "warmup_fraction": 0.1,
        }
    )
    decode: dict = field(
        default_factory=lambda: {"mode": "greedy", "beam_width": 1, "max_new_tokens": 24, "alpha": 0.6}
    )
    predict_limit: int | None = None
    endpoint: dict = field(default_factory=dict)
    baseline_flavor: str = "base"
    baseline_limits: dict = field(default_factory=dict)
    manual_sample_n: int = 20
    manual_sample_model: str | None = None

    @classmethod
    def from_file(cls, path: str | Path) -> "PipelineConfig":
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise PipelineError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise PipelineError(f"config {path} is not valid JSON: {exc}") from exc
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise PipelineError(f"unknown config fields: {sorted(unknown)}")
        cfg = cls(**raw)
        base = Path(path).parent
        cfg.workdir = str(base / cfg.workdir) if not Path(cfg.workdir).is_absolute() else cfg.workdir
        cfg.manifest = str(base / cfg.manifest) if not Path(cfg.manifest).is_absolute() else cfg.manifest
        return cfg

    # -- artifact paths ---------------------------------------------------

    @property
    def work(self) -> Path:
        return Path(self.workdir)

    @property
    def store_path(self) -> Path:
        return self.work / "store" / "docs.jsonl"

    @property
    def stats_txt(self) -> Path:
        return self.work / "stats" / "stats.txt"

    @property
    def balanced_path(self) -> Path:
        return self.work / "balance" / "balanced.jsonl"

    @property
    def vocab_path(self) -> Path:
        return self.work / "vocab" / "vocab.txt"

    def pairs_path(self, model: str) -> Path:
        return self.work / "pretrain_data" / f"{model}.pairs"

    def checkpoint_path(self, model: str) -> Path:
        return self.work / "checkpoints" / f"{model}.npz"

    def finetuned_path(self, model: str, task: str) -> Path:
        return self.work / "checkpoints" / f"{model}__{task}.npz"

    def task_path(self, task: str, part: str) -> Path:
        return self.work / "tasks" / f"{task}.{part}.jsonl"

    def predictions_path(self, model: str, task: str) -> Path:
        return self.work / "predictions" / f"{model}__{task}.jsonl"

    @property
    def results_path(self) -> Path:
        return self.work / "eval" / "results.json"

    @property
    def report_txt(self) -> Path:
        return self.work / "eval" / "report.txt"

    def model_config(self):
        preset = {"desk": desk_preset, "paper": paper_preset}.get(self.model_preset)
        if preset is None:
            raise PipelineError(f"unknown model preset {self.model_preset!r}")
        if self.model_preset == "desk":
            return preset(vocab_size=self.vocab_size, max_seq_len=self.max_seq_len)
        return preset(vocab_size=self.vocab_size)

    def stage_seed(self, label: str) -> int:
        return derive_seed(self.master_seed, label)


def default_config_dict() -> dict:
    return json.loads(json.dumps(PipelineConfig().__dict__, default=str))


def _require(path: Path, producer: str, command: str) -> Path:
    if not path.exists():
        raise PipelineError(
            f"missing artifact {path}", command=command, hint=f"run '{producer}' first"
        )
    return path


def _fresh(paths: list[Path], force: bool, command: str) -> bool:
    """True when outputs already exist and --force was not given."""
    if force:
        return False
    if paths and all(p.exists() for p in paths):
        log.info("%s: outputs exist, skipping (use --force to redo)", command)
        return True
    return False


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8", newline="\n")


# -- subcommands ------------------------------------------------------------------


def cmd_ingest(cfg: PipelineConfig, force: bool) -> None:
    if _fresh([cfg.store_path], force, "ingest"):
        return
    manifest = corpus_mod.load_manifest(_require(Path(cfg.manifest), "(supply a manifest)", "ingest"))
    docs = corpus_mod.dedupe(corpus_mod.ingest(manifest))
    cfg.store_path.parent.mkdir(parents=True, exist_ok=True)
    corpus_mod.save(docs, cfg.store_path)
    log.info("ingest: %d documents -> %s", len(docs), cfg.store_path)


def cmd_stats(cfg: PipelineConfig, force: bool) -> None:
    outputs = [cfg.stats_txt, cfg.work / "stats" / "stats.tsv"]
    if _fresh(outputs, force, "stats"):
        return
    docs = corpus_mod.load(_require(cfg.store_path, "ingest", "stats"))
    stats = corpus_mod.count_stats(docs)
    text = corpus_mod.render_domain_grid(stats) + "\n" + corpus_mod.render_stats(stats)
    _write(cfg.stats_txt, text)
    _write(cfg.work / "stats" / "stats.tsv", corpus_mod.stats_to_tsv(stats))
    sys.stdout.write(text)


def cmd_balance(cfg: PipelineConfig, force: bool) -> None:
    outputs = [cfg.balanced_path, cfg.work / "balance" / "plan.txt"]
    if _fresh(outputs, force, "balance"):
        return
    docs = corpus_mod.load(_require(cfg.store_path, "ingest", "balance"))
    stats = corpus_mod.count_stats(docs)
    targets = balance_mod.reference_targets(stats, cfg.reference_language, cfg.domain_map)
    plan = balance_mod.plan(
        stats, targets, cfg.tolerance,
        reference_language=cfg.reference_language, domain_map=cfg.domain_map,
    )
    selected = balance_mod.execute(plan, docs, cfg.stage_seed("balance"))
    cfg.balanced_path.parent.mkdir(parents=True, exist_ok=True)
    corpus_mod.save(selected, cfg.balanced_path)
    _write(cfg.work / "balance" / "plan.txt", balance_mod.render_plan(plan))
    _write(cfg.work / "balance" / "plan.tsv", balance_mod.plan_to_tsv(plan))
    log.info("balance: %d documents selected, %d deficits", len(selected), len(plan.deficits))


def cmd_build_vocab(cfg: PipelineConfig, force: bool) -> None:
    if _fresh([cfg.vocab_path], force, "build-vocab"):
        return
    docs = corpus_mod.load(_require(cfg.balanced_path, "balance", "build-vocab"))
    vocab = subword.train_vocab(docs, cfg.vocab_size, cfg.num_sentinels)
    cfg.vocab_path.parent.mkdir(parents=True, exist_ok=True)
    vocab.save(cfg.vocab_path)
    log.info("build-vocab: %d pieces -> %s", cfg.vocab_size, cfg.vocab_path)


def _window(ids: list[int], width: int) -> list[list[int]]:
    return [ids[i : i + width] for i in range(0, len(ids), width) if ids[i : i + width]]


def cmd_make_pretrain_data(cfg: PipelineConfig, force: bool) -> None:
    outputs = [cfg.pairs_path(m) for m in cfg.models]
    if _fresh(outputs, force, "make-pretrain-data"):
        return
    docs = corpus_mod.load(_require(cfg.balanced_path, "balance", "make-pretrain-data"))
    vocab = subword.Vocabulary.load(_require(cfg.vocab_path, "build-vocab", "make-pretrain-data"))
    sentinels = vocab.sentinel_ids
    width = cfg.max_seq_len - 2
    for model_name, languages in cfg.models.items():
        rng = make_rng(cfg.stage_seed(f"pretrain-data/{model_name}"))
        pairs = []
        for doc in docs:
            if doc.language not in languages:
                continue
            ids = vocab.encode(doc.text, append_eos=False)
            for window in _window(ids, width):
                pairs.append(
                    denoise.corrupt(window, cfg.corruption_rate, rng, sentinels, subword.EOS_ID)
                )
        path = cfg.pairs_path(model_name)
        path.parent.mkdir(parents=True, exist_ok=True)
        denoise.save_pairs(pairs, path)
        log.info("make-pretrain-data: %s -> %d pairs", model_name, len(pairs))


def cmd_pretrain(cfg: PipelineConfig, force: bool) -> None:
    outputs = [cfg.checkpoint_path(m) for m in cfg.models]
    if _fresh(outputs, force, "pretrain"):
        return
    vocab = subword.Vocabulary.load(_require(cfg.vocab_path, "build-vocab", "pretrain"))
    model_config = cfg.model_config()
    for model_name in cfg.models:
        pairs = denoise.load_pairs(
            _require(cfg.pairs_path(model_name), "make-pretrain-data", "pretrain")
        )
        train_config = TrainConfig(
            seed=cfg.stage_seed(f"pretrain/{model_name}"), **cfg.pretrain
        )
        checkpoint = pretrain(
            pairs, model_config, train_config,
            vocab_hash=vocab.content_hash(),
            log_path=_log_path(cfg, f"pretrain-{model_name}"),
        )
        cfg.checkpoint_path(model_name).parent.mkdir(parents=True, exist_ok=True)
        checkpoint.save(cfg.checkpoint_path(model_name))
        log.info("pretrain: %s -> step %d", model_name, checkpoint.step)


def _log_path(cfg: PipelineConfig, name: str) -> Path:
    path = cfg.work / "logs" / f"{name}.jsonl"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.unlink(missing_ok=True)
    return path


_BUILDERS = {
    "headline": tasks.build_headline,
    "positive_comment": lambda docs: tasks.build_comments(docs, "positive"),
    "negative_comment": lambda docs: tasks.build_comments(docs, "negative"),
    "description": tasks.build_description,
    "moderation": tasks.build_moderation,
}


def cmd_build_tasks(cfg: PipelineConfig, force: bool) -> None:
    outputs = [cfg.task_path(t, part) for t in cfg.tasks for part in ("train", "test")]
    if _fresh(outputs, force, "build-tasks"):
        return
    docs = corpus_mod.load(_require(cfg.store_path, "ingest", "build-tasks"))
    seed = cfg.stage_seed("build-tasks")
    counts: dict[str, tasks.BuildCounts] = {}
    split_sizes: dict[str, tuple[int, int]] = {}
    for task in cfg.tasks:
        examples, build_counts = _BUILDERS[task](docs)
        if not examples:
            raise PipelineError(f"task {task}: store produced no examples", command="build-tasks")
        if task in cfg.exact_counts:
            train_count, test_count = cfg.exact_counts[task]
            split = tasks.split_exact(examples, train_count, test_count, seed)
        else:
            split = tasks.split(examples, cfg.test_fraction, seed)
        cfg.task_path(task, "train").parent.mkdir(parents=True, exist_ok=True)
        tasks.save_examples(split.train, cfg.task_path(task, "train"))
        tasks.save_examples(split.test, cfg.task_path(task, "test"))
        counts[task] = build_counts
        split_sizes[task] = (len(split.train), len(split.test))
        log.info("build-tasks: %s -> %d train / %d test", task, len(split.train), len(split.test))
    tasks.write_manifest(cfg.work / "tasks" / "manifest.json", seed, counts, split_sizes)


def cmd_finetune(cfg: PipelineConfig, force: bool) -> None:
    outputs = [cfg.finetuned_path(m, t) for m in cfg.models for t in cfg.tasks]
    if _fresh(outputs, force, "finetune"):
        return
    vocab = subword.Vocabulary.load(_require(cfg.vocab_path, "build-vocab", "finetune"))
    model_config = cfg.model_config()
    for model_name in cfg.models:
        base = Checkpoint.load(_require(cfg.checkpoint_path(model_name), "pretrain", "finetune"))
        for task in cfg.tasks:
            train_examples = tasks.load_examples(
                _require(cfg.task_path(task, "train"), "build-tasks", "finetune")
            )
            pairs = encode_task_pairs(train_examples, vocab, model_config.max_seq_len)
            train_config = TrainConfig(
                seed=cfg.stage_seed(f"finetune/{model_name}/{task}"), **cfg.finetune
            )
            tuned = finetune(
                base, pairs, train_config,
                vocab_hash=vocab.content_hash(),
                log_path=_log_path(cfg, f"finetune-{model_name}-{task}"),
            )
            tuned.save(cfg.finetuned_path(model_name, task))
            log.info("finetune: %s/%s done (%d steps)", model_name, task, tuned.step)


def cmd_predict(cfg: PipelineConfig, force: bool) -> None:
    outputs = [cfg.predictions_path(m, t) for m in cfg.models for t in cfg.tasks]
    if _fresh(outputs, force, "predict"):
        return
    vocab = subword.Vocabulary.load(_require(cfg.vocab_path, "build-vocab", "predict"))
    decode_config = DecodeConfig(**cfg.decode)
    for model_name in cfg.models:
        for task in cfg.tasks:
            checkpoint = Checkpoint.load(
                _require(cfg.finetuned_path(model_name, task), "finetune", "predict")
            )
            test_examples = tasks.load_examples(
                _require(cfg.task_path(task, "test"), "build-tasks", "predict")
            )
            if cfg.predict_limit is not None:
                test_examples = test_examples[: cfg.predict_limit]
            records = []
            for ex in test_examples:
                text = generate(checkpoint, vocab, f"{ex.task}: {ex.input_text}", decode_config)
                records.append(
                    evaluation.PredictionRecord(
                        task=task, example_id=ex.example_id, prediction=text
                    )
                )
            path = cfg.predictions_path(model_name, task)
            path.parent.mkdir(parents=True, exist_ok=True)
            evaluation.save_predictions(records, path)
            log.info("predict: %s/%s -> %d predictions", model_name, task, len(records))


def cmd_baseline(cfg: PipelineConfig, force: bool) -> None:
    if not cfg.endpoint:
        raise PipelineError("config has no endpoint section", command="baseline")
    endpoint = EndpointConfig(**cfg.endpoint)
    limits = RunLimits(**cfg.baseline_limits)
    name = f"baseline-{endpoint.model}"
    task_list = [t for t in cfg.tasks if t in GENERATION_TASKS]
    outputs = [cfg.predictions_path(name, t) for t in task_list]
    if _fresh(outputs, force, "baseline"):
        return
    for task in task_list:
        test_examples = tasks.load_examples(
            _require(cfg.task_path(task, "test"), "build-tasks", "baseline")
        )
        if cfg.predict_limit is not None:
            test_examples = test_examples[: cfg.predict_limit]
        template = prompt_for(task, cfg.baseline_flavor)
        path = cfg.predictions_path(name, task)
        path.parent.mkdir(parents=True, exist_ok=True)
        entries = run_baseline(endpoint, test_examples, template, limits, path)
        done = sum(1 for e in latest_predictions(entries).values() if e.status == "ok")
        log.info("baseline: %s -> %d/%d ok", task, done, len(test_examples))


def cmd_evaluate(cfg: PipelineConfig, force: bool) -> None:
    if _fresh([cfg.results_path], force, "evaluate"):
        return
    predictions_dir = cfg.work / "predictions"
    _require(predictions_dir, "predict", "evaluate")
    generation: dict[str, dict[str, float]] = {}
    moderation: dict[str, dict] = {}
    for path in sorted(predictions_dir.glob("*__*.jsonl")):
        model_name, task = path.stem.rsplit("__", 1)
        records = evaluation.load_predictions(path)
        by_id = {r.example_id: r.prediction for r in records}
        test_examples = tasks.load_examples(
            _require(cfg.task_path(task, "test"), "build-tasks", "evaluate")
        )
        covered = [ex for ex in test_examples if ex.example_id in by_id]
        if not covered:
            continue
        if task == "moderation":
            golds = [ex.target_text for ex in covered]
            preds = [by_id[ex.example_id].strip().lower() for ex in covered]
            report = evaluation.classification_metrics(
                preds, golds, list(tasks.MODERATION_LABELS)
            )
            moderation[model_name] = {
                "per_class": {
                    cls: {"precision": m.precision, "recall": m.recall, "f1": m.f1, "support": m.support}
                    for cls, m in report.per_class.items()
                },
                "weighted": {
                    "precision": report.weighted_precision,
                    "recall": report.weighted_recall,
                    "f1": report.weighted_f1,
                },
                "macro_f1": report.macro_f1,
                "accuracy": report.accuracy,
            }
        else:
            score = evaluation.bleu(
                [by_id[ex.example_id] for ex in covered],
                [ex.target_text for ex in covered],
            )
            generation.setdefault(model_name, {})[task] = score
    results = {"generation": generation, "moderation": moderation}
    cfg.results_path.parent.mkdir(parents=True, exist_ok=True)
    _write(cfg.results_path, json.dumps(results, indent=2, sort_keys=True) + "\n")
    log.info("evaluate: results -> %s", cfg.results_path)


def cmd_report(cfg: PipelineConfig, force: bool) -> None:
    outputs = [cfg.report_txt, cfg.work / "eval" / "report.tsv"]
    if _fresh(outputs, force, "report"):
        return
    results = json.loads(_require(cfg.results_path, "evaluate", "report").read_text(encoding="utf-8"))
    parts = []
    tsv = ""
    if results.get("generation"):
        parts.append(evaluation.render_scores_table(results["generation"]))
        tsv = evaluation.scores_to_tsv(results["generation"])
    if results.get("moderation"):
        reports = {}
        for model_name, payload in results["moderation"].items():
            reports[model_name] = evaluation.ClassificationReport(
                per_class={
                    cls: evaluation.ClassMetrics(
                        m["precision"], m["recall"], m["f1"], m["support"]
                    )
                    for cls, m in payload["per_class"].items()
                },
                weighted_precision=payload["weighted"]["precision"],
                weighted_recall=payload["weighted"]["recall"],
                weighted_f1=payload["weighted"]["f1"],
                macro_f1=payload["macro_f1"],
                accuracy=payload["accuracy"],
            )
        parts.append(evaluation.render_classification_table(reports))
    text = "\n".join(parts) if parts else "no results\n"
    _write(cfg.report_txt, text)
    _write(cfg.work / "eval" / "report.tsv", tsv)
    sys.stdout.write(text)


def cmd_manual_sample(cfg: PipelineConfig, force: bool) -> None:
    out = cfg.work / "eval" / "manual_sheet.tsv"
    if _fresh([out], force, "manual-sample"):
        return
    model_name = cfg.manual_sample_model or next(iter(cfg.models))
    merged: list[evaluation.PredictionRecord] = []
    for task in [t for t in cfg.tasks if t in GENERATION_TASKS]:
        path = _require(cfg.predictions_path(model_name, task), "predict", "manual-sample")
        records = evaluation.load_predictions(path)
        by_id = {r.example_id: r for r in records}
        for ex in tasks.load_examples(
            _require(cfg.task_path(task, "test"), "build-tasks", "manual-sample")
        ):
            record = by_id.get(ex.example_id)
            if record is None:
                continue
            merged.append(
                evaluation.PredictionRecord(
                    task=task,
                    example_id=ex.example_id,
                    prediction=record.prediction,
                    input_text=ex.input_text,
                    target_text=ex.target_text,
                )
            )
    sampled = evaluation.sample_manual(
        merged, cfg.manual_sample_n, cfg.stage_seed("manual-sample")
    )
    _write(out, evaluation.manual_sheet(sampled))
    log.info("manual-sample: %d rows -> %s", len(sampled), out)


COMMANDS = {
    "ingest": cmd_ingest,
    "stats": cmd_stats,
    "balance": cmd_balance,
    "build-vocab": cmd_build_vocab,
    "make-pretrain-data": cmd_make_pretrain_data,
    "pretrain": cmd_pretrain,
    "build-tasks": cmd_build_tasks,
    "finetune": cmd_finetune,
    "predict": cmd_predict,
    "baseline": cmd_baseline,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
    "manual-sample": cmd_manual_sample,
}


def run_pipeline(cfg: PipelineConfig, commands: list[str] | None = None, force: bool = False) -> None:
    """Run the given subcommands (default: every stage except baseline) in order."""
    order = commands or [c for c in COMMANDS if c != "baseline"]
    for command in order:
        COMMANDS[command](cfg, force)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="luxgen", description=__doc__)
    parser.add_argument("command", choices=sorted(COMMANDS) + ["all"])
    parser.add_argument("--config", required=True, help="pipeline config (JSON)")
    parser.add_argument("--force", action="store_true", help="redo even if outputs exist")
    parser.add_argument("--seed", type=int, default=None, help="override the master seed")
    parser.add_argument("--preset", choices=["desk", "paper"], default=None)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, stream=sys.stderr, format="%(levelname)s %(message)s")
    try:
        cfg = PipelineConfig.from_file(args.config)
        if args.seed is not None:
            cfg.master_seed = args.seed
        if args.preset is not None:
            cfg.model_preset = args.preset
        if args.command == "all":
            run_pipeline(cfg, force=args.force)
        else:
            COMMANDS[args.command](cfg, args.force)
    except Exception as exc:  # single-line machine-parsable failure
        payload = {
            "error": str(exc),
            "command": getattr(exc, "command", args.command),
            "hint": getattr(exc, "hint", ""),
        }
        sys.stderr.write(json.dumps(payload, sort_keys=True) + "\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
