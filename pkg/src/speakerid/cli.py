"""Command-line entry point: ingest, split, train, predict, evaluate, viz, run.

Every command writes a ``run_manifest.json`` next to its outputs with the
content hashes of its inputs and the resolved options.  ``--config FILE``
(YAML or JSON, keys named like the long options with dashes or underscores)
overrides values given on the command line.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import platform
import re
import sys
from pathlib import Path

import yaml

from . import __version__
from .corpus import (IngestError, NovelCorpus, corpus_stats, filter_minor_speakers, make_cross_domain_splits,
                     make_in_domain_split, make_random_split, parse_pdnc, parse_wp, read_corpus, read_splits,
                     write_corpus, write_splits)
from .backend.base import BackendError
from .templates import DEFAULT_TEMPLATE, get_template, template_catalog

logger = logging.getLogger("speakerid")

RUN_MANIFEST = "run_manifest.json"
SPLITS_FILE = "splits.jsonl"
PREDICTIONS_PATTERN = "predictions.fold{fold}.jsonl"


class CommandError(Exception):
    pass


# -- helpers ------------------------------------------------------------------


def _hash_path(path: Path) -> str:
    h = hashlib.sha256()
    files = sorted(p for p in path.rglob("*") if p.is_file()) if path.is_dir() else [path]
    for f in files:
        h.update(str(f.relative_to(path) if path.is_dir() else f.name).encode())
        h.update(f.read_bytes())
    return h.hexdigest()


def _write_manifest(out: Path, args: argparse.Namespace, inputs: dict[str, Path], **extra) -> None:
    import torch

    manifest = {
        "command": args.command,
        "options": {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "config")},
        "inputs": {name: {"path": str(p), "sha256": _hash_path(p)} for name, p in inputs.items() if p.exists()},
        "versions": {"speakerid": __version__, "python": platform.python_version(), "torch": torch.__version__},
        **extra,
    }
    out.mkdir(parents=True, exist_ok=True)
    (out / RUN_MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str), encoding="utf-8")


def _require(path: str | Path | None, what: str) -> Path:
    if path is None:
        raise CommandError(f"missing {what}")
    p = Path(path)
    if not p.exists():
        raise CommandError(f"expected {what} at {p}")
    return p


def _load_corpus(args) -> NovelCorpus:
    return read_corpus(_require(args.corpus, "normalized corpus directory (--corpus)"))


def _load_split(args):
    splits = read_splits(_require(args.splits, "split file (--splits)"))
    for s in splits:
        if s.fold_index == args.fold:
            return s
    raise CommandError(f"fold {args.fold} not in {args.splits}")


def _make_backend(args, corpus: NovelCorpus | None = None):
    from .backend import make_backend
    from .backend.hf import CONFIG_FILE, HFSeq2SeqBackend
    from .synthetic import vocabulary_texts

    ckpt = getattr(args, "checkpoint", None)
    if ckpt:
        path = _require(ckpt, "checkpoint directory (--checkpoint)")
        if not (path / CONFIG_FILE).exists():
            raise CommandError(f"expected backend checkpoint files in {path}")
        return HFSeq2SeqBackend.load(path)
    texts = vocabulary_texts(corpus, template_catalog()) if corpus is not None else ()
    kwargs = {"seed": args.seed} if args.backend == "tiny" else {}
    return make_backend(args.backend, texts, **kwargs)


def _template(args):
    try:
        return get_template(args.template)
    except KeyError as e:
        raise CommandError(e.args[0]) from None


# -- commands -----------------------------------------------------------------


def cmd_ingest(args) -> int:
    src = _require(args.corpus, "corpus source (--corpus)")
    if args.format == "pdnc":
        corpus = parse_pdnc(src, context_paragraphs=args.context_paragraphs)
    elif args.format == "wp":
        corpus = parse_wp(src)
    else:
        corpus = read_corpus(src)
    out = write_corpus(corpus, args.out)
    stats = corpus_stats(corpus)
    _write_manifest(out, args, {"corpus": src}, n_novels=len(corpus.novels), n_quotations=len(corpus),
                    n_rejects=len(corpus.rejects))
    print(f"{len(corpus.novels)} novels, {len(corpus)} quotations, {len(corpus.rejects)} rejects -> {out}")
    print(stats.table())
    return 0


def cmd_synth(args) -> int:
    from .synthetic import make_synthetic_corpus

    corpus = make_synthetic_corpus(args.quotes, seed=args.seed, n_novels=args.novels)
    out = write_corpus(corpus, args.out)
    _write_manifest(out, args, {}, n_novels=len(corpus.novels), n_quotations=len(corpus))
    print(f"{len(corpus.novels)} synthetic novels, {len(corpus)} quotations -> {out}")
    return 0


def cmd_split(args) -> int:
    corpus = _load_corpus(args)
    if args.min_quotes > 1:
        corpus = filter_minor_speakers(corpus, args.min_quotes)
    if args.protocol == "cross":
        try:
            splits = make_cross_domain_splits(corpus, args.folds, args.test_novels, args.seed)
        except ValueError as e:
            raise CommandError(str(e)) from None
    elif args.protocol == "in":
        splits = [make_in_domain_split(corpus)]
    else:
        splits = [make_random_split(corpus, args.test_fraction, args.seed)]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_splits(splits, out / SPLITS_FILE)
    stats = {s.fold_index: corpus_stats(corpus, s).as_dict() for s in splits}
    (out / "split_stats.json").write_text(json.dumps(stats, indent=2, sort_keys=True), encoding="utf-8")
    _write_manifest(out, args, {"corpus": Path(args.corpus)}, n_folds=len(splits))
    for s in splits:
        print(f"fold {s.fold_index}: train {len(s.train_ids)} / test {len(s.test_ids)}"
              f" (test novels: {', '.join(sorted(s.test_novels - s.train_novels)) or 'shared'})")
    return 0


def cmd_train(args) -> int:
    from .training import TrainingConfig, train

    corpus = _load_corpus(args)
    split = _load_split(args)
    backend = _make_backend(args, corpus)
    config = TrainingConfig(template=args.template, aux_task=args.aux_task, epochs=args.epochs,
                            batch_size=args.batch_size, learning_rate=args.lr, max_source_tokens=args.budget,
                            seed=args.seed, checkpoint_dir=args.out)
    ckpt = train(corpus, split, config, backend, resume=bool(args.checkpoint and args.resume))
    _write_manifest(Path(args.out), args, {"corpus": Path(args.corpus), "splits": Path(args.splits)},
                    epoch_losses=ckpt.epoch_losses)
    print(f"trained {ckpt.manifest['epochs']} epoch(s), final loss {ckpt.epoch_losses[-1]:.4f} -> {args.out}")
    return 0


def cmd_predict(args) -> int:
    from .inference import predict, write_predictions

    corpus = _load_corpus(args)
    split = _load_split(args)
    backend = _make_backend(args, corpus)
    template = _template(args)
    kwargs = {"budget": args.budget}
    if args.mode == "sig":
        kwargs.update(score_space=args.score_space, score_aliases=args.score_aliases)
    preds = predict(corpus, split.test_ids, template, backend, mode=args.mode, **kwargs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / PREDICTIONS_PATTERN.format(fold=split.fold_index)
    write_predictions(preds, path)
    inputs = {"corpus": Path(args.corpus), "splits": Path(args.splits)}
    if args.checkpoint:
        inputs["checkpoint"] = Path(args.checkpoint)
    _write_manifest(out, args, inputs)
    print(f"{len(preds)} {args.mode} predictions -> {path}")
    return 0


def _fold_files(pred_dir: Path) -> dict[int, Path]:
    files = {}
    for p in pred_dir.glob("predictions.fold*.jsonl"):
        m = re.fullmatch(r"predictions\.fold(\d+)\.jsonl", p.name)
        if m:
            files[int(m.group(1))] = p
    return dict(sorted(files.items()))


def cmd_evaluate(args) -> int:
    from .evaluation import aggregate_folds, evaluate_predictions, format_table, write_report
    from .inference import read_predictions
    from .plotting import plot_report

    corpus = _load_corpus(args)
    splits = {s.fold_index: s for s in read_splits(_require(args.splits, "split file (--splits)"))}
    pred_dir = _require(args.predictions, "predictions directory (--predictions)")
    files = _fold_files(pred_dir)
    if not files:
        raise CommandError(f"expected {PREDICTIONS_PATTERN.format(fold='<i>')} files in {pred_dir}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    reports = []
    for fold, path in files.items():
        if fold not in splits:
            raise CommandError(f"{path.name}: fold {fold} not in {args.splits}")
        report = evaluate_predictions(read_predictions(path), corpus, splits[fold])
        write_report(report, out / f"report.fold{fold}.json")
        reports.append(report)
    summary = aggregate_folds(reports)
    write_report(summary, out / "report.json")
    table = format_table(summary, args.method)
    (out / "report.txt").write_text(table + "\n", encoding="utf-8")
    plot_report(summary, out / "report.png", args.method)
    _write_manifest(out, args, {"corpus": Path(args.corpus), "splits": Path(args.splits),
                                "predictions": pred_dir})
    print(table)
    return 0


def cmd_viz(args) -> int:
    from .plotting import plot_embeddings, project_tsne, speaker_embeddings

    corpus = _load_corpus(args)
    split = _load_split(args)
    backend = _make_backend(args, corpus)
    vectors, novels, keys = speaker_embeddings(corpus, split.test_ids, _template(args), backend, args.budget)
    coords = project_tsne(vectors, args.perplexity, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "coords.tsv", "w", encoding="utf-8", newline="\n") as f:
        f.write("novel_id\tquote_id\tx\ty\n")
        for (nid, qid), (x, y) in zip(keys, coords):
            f.write(f"{nid}\t{qid}\t{x:.6f}\t{y:.6f}\n")
    plot_embeddings(coords, novels, out / "embeddings.png")
    inputs = {"corpus": Path(args.corpus), "splits": Path(args.splits)}
    if args.checkpoint:
        inputs["checkpoint"] = Path(args.checkpoint)
    _write_manifest(out, args, inputs)
    print(f"{len(keys)} points -> {out / 'embeddings.png'}")
    return 0


def cmd_run(args) -> int:
    """split, then train / predict per fold, then evaluate."""
    out = Path(args.out)
    base = vars(args).copy()

    def sub(command, **over):
        ns = argparse.Namespace(**{**base, **over, "command": command})
        return ns

    cmd_split(sub("split", out=str(out / "splits")))
    splits_path = str(out / "splits" / SPLITS_FILE)
    for s in read_splits(splits_path):
        ckpt = out / f"checkpoint.fold{s.fold_index}"
        cmd_train(sub("train", splits=splits_path, fold=s.fold_index, out=str(ckpt), checkpoint=None, resume=False))
        for mode in args.modes:
            cmd_predict(sub("predict", splits=splits_path, fold=s.fold_index, checkpoint=str(ckpt), mode=mode,
                            out=str(out / f"predictions.{mode}")))
    for mode in args.modes:
        cmd_evaluate(sub("evaluate", splits=splits_path, predictions=str(out / f"predictions.{mode}"),
                         out=str(out / f"eval.{mode}"), method="SIG" if mode == "sig" else "SIG-D"))
    return 0


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="speakerid", description=__doc__.splitlines()[0],
                                     formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, func, help):
        p = sub.add_parser(name, help=help, formatter_class=argparse.ArgumentDefaultsHelpFormatter)
        p.set_defaults(func=func)
        p.add_argument("--config", help="YAML/JSON file whose values override flags")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=0)
        return p

    def corpus_opts(p, splits=True):
        p.add_argument("--corpus", required=True, help="normalized corpus directory")
        if splits:
            p.add_argument("--splits", required=True, help="split file written by `split`")
            p.add_argument("--fold", type=int, default=0)

    def split_opts(p):
        p.add_argument("--protocol", choices=["cross", "in", "random"], default="cross")
        p.add_argument("--folds", type=int, default=5)
        p.add_argument("--test-novels", type=int, default=4)
        p.add_argument("--min-quotes", type=int, default=10, help="drop speakers with fewer quotations")
        p.add_argument("--test-fraction", type=float, default=0.2, help="random protocol only")

    def model_opts(p, training=False):
        p.add_argument("--template", default=DEFAULT_TEMPLATE,
                       choices=[t.name for t in template_catalog()])
        p.add_argument("--backend", default="tiny", help="tiny | hf:<name or path> | oracle:<table.json>")
        p.add_argument("--checkpoint", help="trained checkpoint directory (overrides --backend)")
        p.add_argument("--budget", type=int, default=256, help="max source tokens")
        if training:
            p.add_argument("--aux-task", choices=["none", "addressee", "gender", "fiction"])
            p.add_argument("--epochs", type=int, default=30)
            p.add_argument("--batch-size", type=int, default=16)
            p.add_argument("--lr", type=float)
            p.add_argument("--resume", action="store_true", help="continue from --checkpoint")

    def predict_opts(p):
        p.add_argument("--score-space", choices=["prob", "logprob"], default="prob")
        p.add_argument("--score-aliases", choices=["max"], default=None)

    p = command("ingest", cmd_ingest, "convert a source corpus into the normalized format")
    p.add_argument("--corpus", required=True)
    p.add_argument("--format", choices=["pdnc", "wp", "jsonl"], default="pdnc")
    p.add_argument("--context-paragraphs", type=int, default=1)

    p = command("synth", cmd_synth, "write a synthetic corpus with deterministic speaker cues")
    p.add_argument("--quotes", type=int, default=600)
    p.add_argument("--novels", type=int, default=1)

    p = command("split", cmd_split, "make train/test splits")
    corpus_opts(p, splits=False)
    split_opts(p)

    p = command("train", cmd_train, "fine-tune a backend on one fold")
    corpus_opts(p)
    model_opts(p, training=True)

    p = command("predict", cmd_predict, "predict speakers for the test side of one fold")
    corpus_opts(p)
    model_opts(p)
    p.add_argument("--mode", choices=["sig", "sig_d"], default="sig")
    predict_opts(p)

    p = command("evaluate", cmd_evaluate, "score prediction files and aggregate folds")
    corpus_opts(p, splits=False)
    p.add_argument("--splits", required=True)
    p.add_argument("--predictions", required=True, help="directory of predictions.fold<i>.jsonl")
    p.add_argument("--method", default="SIG")

    p = command("viz", cmd_viz, "t-SNE of decoder speaker-name embeddings")
    corpus_opts(p)
    model_opts(p)
    p.add_argument("--perplexity", type=float, default=30.0)

    p = command("run", cmd_run, "split, train, predict and evaluate every fold")
    corpus_opts(p, splits=False)
    split_opts(p)
    model_opts(p, training=True)
    predict_opts(p)
    p.add_argument("--modes", nargs="+", choices=["sig", "sig_d"], default=["sig", "sig_d"])
    return parser


def _apply_config(args: argparse.Namespace) -> argparse.Namespace:
    if not getattr(args, "config", None):
        return args
    path = _require(args.config, "configuration file (--config)")
    text = path.read_text(encoding="utf-8")
    data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    for key, value in (data or {}).items():
        dest = key.replace("-", "_")
        if not hasattr(args, dest):
            raise CommandError(f"{path}: unknown option {key!r} for `{args.command}`")
        setattr(args, dest, value)
    return args


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        args = _apply_config(args)
        return args.func(args)
    except (CommandError, IngestError, FileNotFoundError, ValueError, BackendError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
