"""
Command-line entry point: python -m app.main <command> [options]

Exit codes: 0 success, 1 usage/validation error, 2 runtime error.
"""

import argparse
import json
import logging
import sys
import time
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

from app.config import load_config_file, settings
from app.evaluation.harness import DEFAULT_BLOCK_SIZE, compare_report, error_analysis, evaluate_report
from app.graph.workflow_generation import generate_from_seeds
from app.knowledge.kg_store import KnowledgeGraph, load_kg
from app.knowledge.processor import load_stopwords, trace_retrieval
from app.model.checkpoint import load_checkpoint, save_checkpoint
from app.model.trainer import TrainingDivergedError, build_model, precompute_facts, train
from app.services.datasets import (
    GenerationError,
    dataset_stats,
    dedup,
    dedup_report,
    generate_kg_grounded,
    load_dataset,
    load_templates,
    save_dataset,
    split,
)
from app.state import GenConfig, Label, Metrics, ModelConfig, RunReport, TrainConfig, TrainHistory

logger = logging.getLogger(__name__)

Handler = Callable[[Dict[str, Any]], Tuple[Dict[str, Any], str]]

GLOBAL_KEYS = {"json", "config", "verbose", "quiet", "handler", "table", "command", "dataset_command"}

COMMAND_DEFAULTS: Dict[Tuple[str, ...], Dict[str, Any]] = {
    ("facts",): {"dedup_triplets": False},
    ("train",): {
        "baseline": False,
        "seed": 0,
        "min_freq": 1,
        **TrainConfig().model_dump(exclude={"seed", "monitor"}),
        **ModelConfig().model_dump(),
    },
    ("compare",): {"block_size": DEFAULT_BLOCK_SIZE},
    ("errors",): {"limit": 20},
    ("dataset", "split"): {"seed": 0, "stratified": False},
    ("dataset", "gen-kg"): {"seed": 0, "n_per_label": 300},
}


class UsageError(ValueError):
    pass


class CLIParser(argparse.ArgumentParser):
    def error(self, message: str):
        raise UsageError(message)


# ============================================================
# Option resolution
# ============================================================


def resolve_options(args: argparse.Namespace, file_cfg: Dict[str, Any]) -> Dict[str, Any]:
    """Built-in defaults < TOML table for the command < explicit flags."""
    table: Any = file_cfg
    for key in args.table:
        table = table.get(key, {}) if isinstance(table, dict) else {}
    options = dict(COMMAND_DEFAULTS.get(args.table, {}))
    if isinstance(table, dict):
        options.update({k.replace("-", "_"): v for k, v in table.items() if not isinstance(v, dict)})
    options.update({k: v for k, v in vars(args).items() if v is not None and k not in GLOBAL_KEYS})
    return options


def _require(opts: Dict[str, Any], *names: str) -> None:
    missing = [n for n in names if opts.get(n) in (None, "")]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + n.replace("_", "-") for n in missing))


def _kg(opts: Dict[str, Any]) -> KnowledgeGraph:
    return load_kg(opts["kg"]) if opts.get("kg") else KnowledgeGraph([])


def _fmt_metrics_row(name: str, m: Metrics) -> str:
    return f"{name:<10} {m.precision:>9.4f} {m.recall:>9.4f} {m.accuracy:>9.4f} {m.f1:>9.4f}"


METRICS_HEADER = f"{'model':<10} {'precision':>9} {'recall':>9} {'accuracy':>9} {'f1':>9}"


def _fmt_per_class(m: Metrics) -> str:
    lines = [f"{'class':<14} {'true':>6} {'support':>8}"]
    for label in Label:
        lines.append(f"{label.text:<14} {m.per_class_true[label]:>6} {m.support[label] if m.support else '':>8}")
    return "\n".join(lines)


# ============================================================
# Commands
# ============================================================


def cmd_kg_validate(opts: Dict[str, Any]) -> Tuple[Dict[str, Any], str]:
    _require(opts, "kg")
    kg = load_kg(opts["kg"])
    result = {
        "triplets": len(kg),
        "entities": kg.entity_count,
        "sources": len(kg.sources),
        "duplicates": kg.duplicate_count,
    }
    text = (
        f"{result['triplets']} triplets, {result['entities']} entities "
        f"({result['sources']} sources), {result['duplicates']} duplicates"
    )
    return result, text


def cmd_facts(opts: Dict[str, Any]) -> Tuple[Dict[str, Any], str]:
    _require(opts, "kg")
    if opts.get("text") is None:
        raise UsageError("missing required option(s): --text")
    kg = load_kg(opts["kg"])
    stopwords = load_stopwords(opts.get("stopwords"))
    trace = trace_retrieval(opts["text"], kg, stopwords, dedup_triplets=opts["dedup_triplets"])

    lines = []
    if opts.get("show_steps"):
        lines += [
            f"1. input:     {trace.text}",
            f"2. words:     {', '.join(trace.words)}",
            f"3. entities:  {', '.join(trace.entities)}",
            "4. triplets:  " + "; ".join(f"({t.source}, {t.relation}, {t.target})" for t in trace.triplets),
            "   sentences: " + " | ".join(trace.sentences),
            f"5. paragraph: {trace.paragraph}",
        ]
    else:
        lines.append(trace.paragraph)
        for t in trace.triplets:
            lines.append(f"   <- {t.source}\t{t.relation}\t{t.target}")
    if not trace.paragraph:
        lines.append("(empty fact paragraph)")
    return trace.model_dump(), "\n".join(lines)


def _history_table(history: TrainHistory) -> str:
    lines = [
        f"{'epoch':>5} {'loss':>8} {'val_loss':>8} {'precision':>9} {'recall':>8} {'accuracy':>8} {'f1':>8}"
    ]
    for r in history.epochs:
        m = r.val_metrics
        mark = " *" if r.epoch == history.best_epoch else ""
        lines.append(
            f"{r.epoch:>5} {r.train_loss:>8.4f} {r.val_loss:>8.4f} {m.precision:>9.4f} "
            f"{m.recall:>8.4f} {m.accuracy:>8.4f} {m.f1:>8.4f}{mark}"
        )
    return "\n".join(lines)


def cmd_train(opts: Dict[str, Any]) -> Tuple[Dict[str, Any], str]:
    _require(opts, "train", "val", "out")
    variant = "baseline" if opts["baseline"] else "proposed"
    if variant == "proposed":
        _require(opts, "kg")

    train_cfg = TrainConfig(**{k: opts[k] for k in TrainConfig.model_fields if k in opts})
    model_cfg = ModelConfig(**{k: opts[k] for k in ModelConfig.model_fields if k in opts})
    train_set = load_dataset(opts["train"])
    val_set = load_dataset(opts["val"])
    kg = _kg(opts)
    stopwords = load_stopwords(opts.get("stopwords"))

    facts = precompute_facts(train_set, kg, stopwords, train_cfg.fact_workers) if variant == "proposed" else None
    model = build_model(variant, train_set, facts, model_cfg, seed=train_cfg.seed, min_freq=opts["min_freq"])
    best, history = train(model, train_set, val_set, kg, stopwords, train_cfg, train_facts=facts)

    out = Path(opts["out"])
    history_path = Path(opts.get("history") or out.with_suffix(".history.json"))
    save_checkpoint(best, out)
    with open(history_path, "w", encoding="utf-8") as f:
        json.dump(history.comparable(), f, indent=2)

    result = {
        "variant": variant,
        "checkpoint": str(out),
        "history_file": str(history_path),
        "best_epoch": history.best_epoch,
        "stopped_early": history.stopped_early,
        "history": history.model_dump(),
    }
    text = "\n".join(
        [
            f"Trained {variant} model ({len(history.epochs)} epochs, best epoch {history.best_epoch})",
            _history_table(history),
            f"Checkpoint: {out}",
            f"History:    {history_path}",
        ]
    )
    return result, text


def cmd_eval(opts: Dict[str, Any]) -> Tuple[Dict[str, Any], str]:
    _require(opts, "model", "test")
    model = load_checkpoint(opts["model"])
    if model.uses_facts:
        _require(opts, "kg")
    report = evaluate_report(model, load_dataset(opts["test"]), _kg(opts), load_stopwords(opts.get("stopwords")))
    text = "\n".join(
        [
            METRICS_HEADER,
            _fmt_metrics_row(model.variant, report.metrics),
            "",
            _fmt_per_class(report.metrics),
            "",
            f"examples: {report.size}, empty fact paragraphs: {report.empty_fact_paragraphs}",
        ]
    )
    return report.model_dump(), text


def cmd_compare(opts: Dict[str, Any]) -> Tuple[Dict[str, Any], str]:
    _require(opts, "baseline", "proposed", "test")
    baseline = load_checkpoint(opts["baseline"])
    proposed = load_checkpoint(opts["proposed"])
    if baseline.uses_facts or proposed.uses_facts:
        _require(opts, "kg")
    report = compare_report(
        baseline,
        proposed,
        load_dataset(opts["test"]),
        _kg(opts),
        load_stopwords(opts.get("stopwords")),
        block_size=opts["block_size"],
    )
    w = report.wilcoxon
    verdict = "significant" if report.significant else "not significant"
    lines = [
        METRICS_HEADER,
        _fmt_metrics_row("baseline", report.baseline),
        _fmt_metrics_row("proposed", report.proposed),
        "",
        f"Wilcoxon signed-rank over {report.n_blocks} blocks of {report.block_size} (n_eff={w.n_effective}, {w.method})",
        f"W+={w.w_plus:g} W-={w.w_minus:g} W={w.statistic:g} p={w.p_value:.6g} -> {verdict} at alpha={report.alpha}",
    ]
    if baseline.variant != "baseline" or proposed.variant != "proposed":
        lines.append(f"warning: comparing {baseline.variant} (as baseline) with {proposed.variant} (as proposed)")
    return report.model_dump(), "\n".join(lines)


def cmd_errors(opts: Dict[str, Any]) -> Tuple[Dict[str, Any], str]:
    _require(opts, "model", "test")
    model = load_checkpoint(opts["model"])
    if model.uses_facts:
        _require(opts, "kg")
    wrong = error_analysis(
        model, load_dataset(opts["test"]), _kg(opts), load_stopwords(opts.get("stopwords")), limit=opts["limit"]
    )
    lines = [f"{len(wrong)} misclassified examples (limit {opts['limit']})"]
    for i, e in enumerate(wrong, start=1):
        lines += [
            f"[{i}] gold={e.gold.text} predicted={e.predicted.text} "
            f"p=({', '.join(f'{p:.3f}' for p in e.probabilities)})",
            f"    premise:    {e.premise}",
            f"    hypothesis: {e.hypothesis}",
            f"    facts:      {e.fact_paragraph or '(empty)'}",
        ]
    return {"misclassified": [e.model_dump() for e in wrong]}, "\n".join(lines)


def cmd_dataset_split(opts: Dict[str, Any]) -> Tuple[Dict[str, Any], str]:
    _require(opts, "input", "out_dir")
    train_set, val_set, test_set = split(load_dataset(opts["input"]), seed=opts["seed"], stratified=opts["stratified"])
    out_dir = Path(opts["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    files = {}
    for name, part in (("train", train_set), ("val", val_set), ("test", test_set)):
        path = out_dir / f"{name}.jsonl"
        save_dataset(part, path)
        files[name] = str(path)
    counts = {"train": len(train_set), "val": len(val_set), "test": len(test_set)}
    text = f"train={counts['train']} val={counts['val']} test={counts['test']} -> {out_dir}"
    return {"counts": counts, "files": files}, text


def cmd_dataset_dedup(opts: Dict[str, Any]) -> Tuple[Dict[str, Any], str]:
    _require(opts, "input", "output")
    d = load_dataset(opts["input"])
    report = dedup_report(d)
    save_dataset(dedup(d), opts["output"])
    text = f"kept {report.kept} of {report.input_size} ({report.dropped} dropped, {report.conflicts} label conflicts)"
    return report.model_dump(), text


def cmd_dataset_gen(opts: Dict[str, Any]) -> Tuple[Dict[str, Any], str]:
    _require(opts, "seeds", "output")
    if opts.get("model") is None and opts.get("api_model") is not None:
        opts["model"] = opts["api_model"]
    with open(opts["seeds"], "r", encoding="utf-8") as f:
        seeds = [line.strip() for line in f if line.strip()]
    cfg = GenConfig(**{k: opts[k] for k in GenConfig.model_fields if opts.get(k) is not None})
    dataset, state = generate_from_seeds(seeds, load_templates(opts.get("templates")), cfg)
    save_dataset(dataset, opts["output"])
    result = {
        "seeds": len(seeds),
        "premises": len(state.premises),
        "examples": len(dataset),
        "requests": state.requests_made,
        "skipped_responses": state.skipped_responses,
        "label_counts": dataset_stats(dataset).label_counts,
    }
    text = (
        f"{result['examples']} examples from {result['seeds']} seeds ({result['premises']} premises, "
        f"{result['requests']} requests, {result['skipped_responses']} skipped) -> {opts['output']}"
    )
    return result, text


def cmd_dataset_gen_kg(opts: Dict[str, Any]) -> Tuple[Dict[str, Any], str]:
    _require(opts, "kg", "output")
    dataset = generate_kg_grounded(load_kg(opts["kg"]), opts["n_per_label"], seed=opts["seed"])
    save_dataset(dataset, opts["output"])
    counts = dataset_stats(dataset).label_counts
    text = f"{len(dataset)} examples ({', '.join(f'{k}={v}' for k, v in counts.items())}) -> {opts['output']}"
    return {"examples": len(dataset), "label_counts": counts}, text


def cmd_dataset_stats(opts: Dict[str, Any]) -> Tuple[Dict[str, Any], str]:
    _require(opts, "input")
    stats = dataset_stats(load_dataset(opts["input"]))
    lines = [f"size: {stats.size}"]
    lines += [f"  {k:<14} {v}" for k, v in stats.label_counts.items()]
    lines.append(f"mean words: premise {stats.mean_premise_words:.2f}, hypothesis {stats.mean_hypothesis_words:.2f}")
    return stats.model_dump(), "\n".join(lines)


# ============================================================
# Parser
# ============================================================


def _global_flags() -> argparse.ArgumentParser:
    common = CLIParser(add_help=False)
    common.add_argument("--json", action="store_true", default=argparse.SUPPRESS, help="print the run report as JSON")
    common.add_argument("--config", default=argparse.SUPPRESS, help="TOML file with one table per command")
    common.add_argument("--verbose", action="store_true", default=argparse.SUPPRESS)
    common.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS)
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags()
    parser = CLIParser(prog="python -m app.main", description="KG-augmented NLI fact-checking", parents=[common])
    sub = parser.add_subparsers(dest="command")

    def command(subparsers, name: str, handler: Handler, table: Tuple[str, ...], help_text: str):
        p = subparsers.add_parser(name, parents=[common], help=help_text)
        p.set_defaults(handler=handler, table=table)
        return p

    p = command(sub, "kg-validate", cmd_kg_validate, ("kg-validate",), "load a KG file and report counts")
    p.add_argument("--kg")

    p = command(sub, "facts", cmd_facts, ("facts",), "build the fact paragraph for a text")
    p.add_argument("--kg")
    p.add_argument("--stopwords")
    p.add_argument("--text")
    p.add_argument("--dedup-triplets", action="store_true", default=None)
    p.add_argument("--steps", dest="show_steps", action="store_true", default=None, help="print every retrieval step")

    p = command(sub, "train", cmd_train, ("train",), "train a model and write a checkpoint")
    p.add_argument("--train")
    p.add_argument("--val")
    p.add_argument("--kg")
    p.add_argument("--stopwords")
    p.add_argument("--baseline", action="store_true", default=None)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--history")
    p.add_argument("--lr", dest="learning_rate", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--max-epochs", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--fact-workers", type=int)
    p.add_argument("--min-freq", type=int)
    p.add_argument("--d-e", type=int)
    p.add_argument("--d-h", type=int)
    p.add_argument("--max-len-pair", type=int)
    p.add_argument("--max-len-fact", type=int)
    p.add_argument("--init-scale", type=float)

    p = command(sub, "eval", cmd_eval, ("eval",), "evaluate a checkpoint on a test set")
    p.add_argument("--model")
    p.add_argument("--test")
    p.add_argument("--kg")
    p.add_argument("--stopwords")

    p = command(sub, "compare", cmd_compare, ("compare",), "compare baseline and proposed checkpoints")
    p.add_argument("--baseline")
    p.add_argument("--proposed")
    p.add_argument("--test")
    p.add_argument("--kg")
    p.add_argument("--stopwords")
    p.add_argument("--block-size", type=int)

    p = command(sub, "errors", cmd_errors, ("errors",), "list misclassified test examples")
    p.add_argument("--model")
    p.add_argument("--test")
    p.add_argument("--kg")
    p.add_argument("--stopwords")
    p.add_argument("--limit", type=int)

    ds = sub.add_parser("dataset", parents=[common], help="dataset tools")
    ds_sub = ds.add_subparsers(dest="dataset_command")

    p = command(ds_sub, "split", cmd_dataset_split, ("dataset", "split"), "80:20 then 80:20 split")
    p.add_argument("--input")
    p.add_argument("--out-dir")
    p.add_argument("--seed", type=int)
    p.add_argument("--stratified", action="store_true", default=None)

    p = command(ds_sub, "dedup", cmd_dataset_dedup, ("dataset", "dedup"), "drop duplicate pairs")
    p.add_argument("--input")
    p.add_argument("--output")

    p = command(ds_sub, "gen", cmd_dataset_gen, ("dataset", "gen"), "generate from seed statements via chat model")
    p.add_argument("--seeds", help="text file, one seed statement per line")
    p.add_argument("--output")
    p.add_argument("--templates")
    p.add_argument("--n-paraphrases", type=int)
    p.add_argument("--n-hypotheses", type=int)
    p.add_argument("--max-words", type=int)
    p.add_argument("--api-model", "--model", dest="model", help="chat model name (default FACTGEN_API_MODEL)")
    p.add_argument("--api-url", help="chat-completion endpoint (default FACTGEN_API_URL)")
    p.add_argument("--max-workers", type=int)
    p.add_argument("--retries", type=int)
    p.add_argument("--audit-log")

    p = command(ds_sub, "gen-kg", cmd_dataset_gen_kg, ("dataset", "gen-kg"), "offline KG-grounded dataset")
    p.add_argument("--kg")
    p.add_argument("--n-per-label", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--output")

    p = command(ds_sub, "stats", cmd_dataset_stats, ("dataset", "stats"), "label counts and lengths")
    p.add_argument("--input")

    return parser


# ============================================================
# Entry point
# ============================================================


def _setup_logging(args: argparse.Namespace) -> None:
    level = settings.LOG_LEVEL
    if getattr(args, "verbose", False):
        level = logging.DEBUG
    elif getattr(args, "quiet", False):
        level = logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", force=True)


def main(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    started_at = datetime.now(timezone.utc).isoformat()
    started = time.perf_counter()
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    if not hasattr(args, "handler"):
        build_parser().print_help(sys.stderr)
        return 1

    _setup_logging(args)
    as_json = getattr(args, "json", False)
    try:
        opts = resolve_options(args, load_config_file(getattr(args, "config", None)))
        if getattr(args, "verbose", False) and args.table == ("facts",):
            opts.setdefault("show_steps", True)
        result, text = args.handler(opts)
    except (GenerationError, TrainingDivergedError) as e:
        logger.error(f"❌ {type(e).__name__}: {e}")
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as e:
        logger.error(f"❌ {type(e).__name__}: {e}")
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception as e:
        logger.exception(f"❌ Unexpected {type(e).__name__}")
        print(f"error: {e}", file=sys.stderr)
        return 2

    if as_json:
        report = RunReport(
            command=argv,
            config={k: str(v) if isinstance(v, Path) else v for k, v in opts.items()},
            seed=opts.get("seed"),
            started_at=started_at,
            elapsed_seconds=time.perf_counter() - started,
            result=result,
        )
        print(report.model_dump_json(indent=2))
    else:
        print(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
