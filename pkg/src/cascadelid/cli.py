"""Command-line interface: ``cascadelid <subcommand> [flags]``.

Diagnostics go to stderr at the level named by ``CASCADELID_LOG``
(``error``, ``info`` or ``debug``); stdout carries only results.
"""

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .cascade import F1, PrecisionAtMinRecall, load_cascade, run_cascade, tune_threshold_scores
from .classifier import Hyperparams, fit, load_model, predict, save_model
from .data import (
    SplitSpec,
    SyntheticSpec,
    default_synthetic_spec,
    format_tsv,
    generate_synthetic,
    load_tsv,
    rebalance,
    split,
    write_tsv,
)
from .errors import CascadeLidError
from .evaluation import evaluate_cascade, evaluate_model, negative_label
from .features import FeatureConfig
from .preprocess import PreprocessConfig

log = logging.getLogger("cascadelid")

_LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


def configure_logging():
    name = os.environ.get("CASCADELID_LOG", "error").lower()
    level = _LOG_LEVELS.get(name, logging.ERROR)
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")


class UsageError(CascadeLidError):
    pass


def _open_in(path):
    return sys.stdin.buffer if path in (None, "-") else open(path, "rb")


def _open_out(path):
    return sys.stdout if path in (None, "-") else open(path, "w", encoding="utf-8", newline="\n")


def _read_lines(path):
    fh = _open_in(path)
    try:
        data = fh.read()
    finally:
        if fh is not sys.stdin.buffer:
            fh.close()
    text = data.decode("utf-8")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return [line[:-1] if line.endswith("\r") else line for line in lines]


def cmd_train(args):
    try:
        fcfg = FeatureConfig(args.minn, args.maxn, args.buckets)
        pcfg = PreprocessConfig(lowercase=args.lowercase, elongation_cap=args.elongation_cap)
        hp = Hyperparams(args.dim, args.epochs, args.lr, fcfg, pcfg, args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    corpus = load_tsv(args.data)
    result = fit(corpus, hp)
    save_model(result.model, args.out)
    summary = {
        "model": str(args.out),
        "labels": list(result.model.labels),
        "class_counts": result.class_counts,
        "skipped_empty": result.skipped,
        "final_epoch_loss": result.epoch_losses[-1] if result.epoch_losses else None,
    }
    print(json.dumps(summary, ensure_ascii=False))


def cmd_predict(args):
    model = load_model(args.model)
    out = _open_out(args.output)
    try:
        for line in _read_lines(args.input):
            pred = predict(model, line)
            out.write(json.dumps({"label": pred.argmax, "probs": pred.probs}, ensure_ascii=False) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()


def _format_trace(outcome):
    return "\t".join(f"{r.name}:{r.p_target:.2f}:{r.decision}" for r in outcome.trace)


def cmd_cascade(args):
    lines = _read_lines(args.input)
    with load_cascade(args.config, timeout=args.timeout) as cascade:
        target = cascade.target_label
        out = _open_out(args.output)
        try:
            for line in lines:
                outcome = run_cascade(cascade, line)
                label = target if outcome.accepted else negative_label(target)
                if args.trace:
                    label += "\t" + _format_trace(outcome)
                out.write(label + "\n")
        finally:
            if out is not sys.stdout:
                out.close()


def cmd_eval(args):
    corpus = load_tsv(args.data)
    if args.config:
        with load_cascade(args.config, timeout=args.timeout) as cascade:
            report = evaluate_cascade(cascade, corpus, isolated=args.isolated)
        print(report.to_json())
        return
    model = load_model(args.model)
    cm = evaluate_model(model, corpus)
    per_class = {
        label: {"precision": round(p, 4), "recall": round(r, 4), "f1": round(f, 4), "support": s}
        for label, (p, r, f, s) in cm.per_class().items()
    }
    print(json.dumps({
        "per_class": per_class,
        "macro_f1": round(cm.macro_f1(), 4),
        "accuracy": round(cm.accuracy(), 4),
        "confusion": {"labels": cm.labels, "counts": cm.counts.tolist()},
        "label_distribution": {label: cm.support(label) for label in cm.labels},
    }, ensure_ascii=False))


def _objective(args):
    if args.objective == "f1":
        return F1()
    if args.min_recall is None:
        raise UsageError("--objective precision-at-recall requires --min-recall")
    return PrecisionAtMinRecall(args.min_recall)


def cmd_tune(args):
    objective = _objective(args)
    if args.scores:
        scores, positives = [], []
        for lineno, line in enumerate(_read_lines(args.scores), start=1):
            label, sep, value = line.partition("\t")
            try:
                if not sep:
                    raise ValueError
                scores.append(float(value))
            except ValueError:
                raise UsageError(f"{args.scores}: line {lineno}: expected label<TAB>score") from None
            positives.append(label == args.target)
    else:
        model = load_model(args.model)
        corpus = load_tsv(args.data)
        scores = [predict(model, text).probs[args.target] for _, text in corpus]
        positives = [label == args.target for label, _ in corpus]
    theta, value = tune_threshold_scores(scores, positives, objective)
    print(json.dumps({"threshold": theta, "objective": args.objective, "value": round(value, 4)}))


def cmd_split(args):
    try:
        fracs = [float(x) for x in args.ratios.split(",")]
        if len(fracs) != 3:
            raise ValueError("--ratios needs three comma-separated fractions")
        spec = SplitSpec(*fracs, seed=args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    parts = split(load_tsv(args.data), spec)
    outdir = Path(args.out_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    sizes = {}
    for name, part in zip(("train", "valid", "test"), parts):
        write_tsv(part, outdir / f"{args.prefix}{name}.tsv")
        sizes[name] = len(part)
    print(json.dumps(sizes))


def _parse_cap(raw):
    try:
        if "=" not in raw:
            return int(raw)
        caps = {}
        for item in raw.split(","):
            label, _, n = item.rpartition("=")
            caps[label] = int(n)
        return caps
    except ValueError:
        raise UsageError(f"--cap must be N or label=N[,label=N...], got {raw!r}") from None


def cmd_rebalance(args):
    cap = _parse_cap(args.cap)
    caps = cap.values() if isinstance(cap, dict) else [cap]
    if min(caps) < 1:
        raise UsageError("--cap values must be >= 1")
    out = rebalance(load_tsv(args.data), cap, seed=args.seed)
    write_tsv(out, args.out)
    print(json.dumps(out.label_counts(), ensure_ascii=False))


def cmd_synth(args):
    if args.spec:
        spec = SyntheticSpec.from_json(args.spec)
    else:
        spec = default_synthetic_spec(args.languages, args.docs_per_lang, args.seed)
    corpus = generate_synthetic(spec)
    if args.out in (None, "-"):
        sys.stdout.write(format_tsv(corpus))
    else:
        write_tsv(corpus, args.out)


def cmd_serve(args):
    from .server import serve

    host, _, port = args.listen.rpartition(":")
    try:
        port = int(port)
    except ValueError:
        raise UsageError(f"--listen must be HOST:PORT, got {args.listen!r}") from None
    cascade = load_cascade(args.config, timeout=args.timeout)
    try:
        serve(cascade, host or "127.0.0.1", port)
    finally:
        cascade.close()


def build_parser():
    parser = argparse.ArgumentParser(prog="cascadelid", description="Cascaded character n-gram language identification.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a classifier from a TSV corpus")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--dim", type=int, default=50)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--minn", type=int, default=2)
    p.add_argument("--maxn", type=int, default=5)
    p.add_argument("--buckets", type=int, default=1_000_000)
    p.add_argument("--lowercase", action="store_true")
    p.add_argument("--elongation-cap", type=int, default=2)
    p.add_argument("--seed", type=int, default=42)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="label probabilities for each input line (JSON lines)")
    p.add_argument("--model", required=True)
    p.add_argument("--input")
    p.add_argument("--output")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("cascade", help="run a cascade over input lines")
    p.add_argument("--config", required=True)
    p.add_argument("--input")
    p.add_argument("--output")
    p.add_argument("--trace", action="store_true")
    p.add_argument("--timeout", type=float, default=30.0)
    p.set_defaults(func=cmd_cascade)

    p = sub.add_parser("eval", help="evaluate a cascade (or a single model) on a TSV corpus")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--config")
    group.add_argument("--model")
    p.add_argument("--data", required=True)
    p.add_argument("--isolated", action="store_true", help="also score every stage on its own")
    p.add_argument("--timeout", type=float, default=30.0)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("tune", help="tune a decision threshold on a validation set")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--model")
    group.add_argument("--scores", help="TSV of gold label and target-label probability")
    p.add_argument("--data")
    p.add_argument("--target", required=True)
    p.add_argument("--objective", choices=("f1", "precision-at-recall"), default="f1")
    p.add_argument("--min-recall", type=float)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("split", help="seeded train/valid/test split")
    p.add_argument("--data", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--ratios", default="0.8,0.05,0.15")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--prefix", default="")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("rebalance", help="downsample classes to a cap")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--cap", required=True, help="N, or label=N[,label=N...]")
    p.add_argument("--seed", type=int, default=42)
    p.set_defaults(func=cmd_rebalance)

    p = sub.add_parser("synth", help="generate a synthetic multilingual corpus")
    p.add_argument("--spec", help="JSON synthetic spec; default: built-in overlapping alphabets")
    p.add_argument("--languages", type=int, default=5)
    p.add_argument("--docs-per-lang", type=int, default=2000)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("serve", help="HTTP endpoint for batch identification")
    p.add_argument("--config", required=True)
    p.add_argument("--listen", default="127.0.0.1:8080")
    p.add_argument("--timeout", type=float, default=30.0)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None):
    configure_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "tune" and args.model and not args.data:
        parser.error("tune --model requires --data")
    try:
        args.func(args)
    except (CascadeLidError, OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        print(f"cascadelid {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
