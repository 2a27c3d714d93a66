"""Command line entry point.

Exit codes: 0 success, 1 input error (missing/invalid files, bad settings),
2 internal error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import datagen, evaluate, modelio, pipeline
from .classify import format_verdict, parse_verdict
from .preprocess import open_text, normalize_list, write_documents

logger = logging.getLogger("dgaembed")

EXIT_OK, EXIT_INPUT, EXIT_INTERNAL = 0, 1, 2


def _kv(items):
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ValueError(f"expected key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k] = v
    return out


def _config(args) -> pipeline.RunConfig:
    overrides = _kv(args.set)
    for name in ("model", "blacklist", "whitelist", "truth", "output_dir"):
        val = getattr(args, name, None)
        if val is not None:
            overrides[name] = val
    if getattr(args, "logs", None):
        overrides["logs"] = ",".join(args.logs)
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    if args.threshold is not None:
        overrides["threshold"] = str(args.threshold)
    return pipeline.load_config(args.config, overrides)


# -- subcommands -------------------------------------------------------------

def cmd_gen_data(args) -> int:
    settings = _kv(args.set)
    fields = {f: type(getattr(datagen.TrafficProfile(), f)) for f in datagen.TrafficProfile.__dataclass_fields__}
    kwargs = {}
    for k, v in settings.items():
        k = k.replace("-", "_")
        if k not in fields or k == "bot_families":
            raise ValueError(f"unknown profile setting {k!r}")
        kwargs[k] = fields[k](v)
    if args.seed is not None:
        kwargs["seed"] = args.seed
    corpus = datagen.synth_corpus(datagen.TrafficProfile(**kwargs))
    paths = corpus.write(args.out)
    print(json.dumps({k: str(v) for k, v in paths.items()}))
    return EXIT_OK


def cmd_preprocess(args) -> int:
    cfg = _config(args)
    cfg.check_inputs()
    pp = cfg.preprocessor()
    out = sys.stdout if args.out == "-" else open(args.out, "w", encoding="utf-8")
    try:
        write_documents(pp.documents_from_files(cfg.logs), out)
    finally:
        if out is not sys.stdout:
            out.close()
    print(json.dumps(pp.stats.as_dict()), file=sys.stderr)
    return EXIT_OK


def cmd_train(args) -> int:
    res = pipeline.train_all(_config(args))
    print(json.dumps(res.__dict__))
    return EXIT_OK


def cmd_update(args) -> int:
    cfg = _config(args)
    res = pipeline.update(cfg, cfg.logs)
    print(json.dumps(res.__dict__))
    return EXIT_OK


def cmd_score(args) -> int:
    cfg = _config(args)
    if args.domains:
        with open_text(args.domains) as fh:
            verdicts = list(pipeline.score(cfg, fh))
    elif cfg.logs:
        verdicts = list(pipeline.score_logs(cfg, cfg.logs))
    else:
        verdicts = list(pipeline.score(cfg, sys.stdin))
    if args.out:
        pipeline.write_verdicts(verdicts, args.out)
    else:
        for v in verdicts:
            print(format_verdict(v))
    if args.feedback:
        black, white = pipeline.feedback_lists(cfg, verdicts)
        print(json.dumps({"blacklist_additions": len(black), "whitelist_additions": len(white)}),
              file=sys.stderr)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    if args.experiment:
        cfg.check_inputs()
        docs, _ = pipeline._documents(cfg, cfg.logs)
        labels = evaluate.list_labels(
            pipeline.read_token_list(cfg.blacklist) if cfg.blacklist else (),
            pipeline.read_token_list(cfg.whitelist) if cfg.whitelist else ())
        if not cfg.truth:
            raise ValueError("--experiment needs a truth file")
        truth = datagen.read_truth(cfg.truth)
        exp = evaluate.ExperimentConfig(embed=cfg.embed, n_pieces=args.pieces,
                                        clf_epochs=cfg.clf_epochs, clf_lr=cfg.clf_lr,
                                        clf_l2=cfg.clf_l2, threshold=cfg.threshold)
        report = evaluate.run_incremental_experiment(docs, labels, truth, exp)
        print(report.to_table())
        if args.report:
            Path(args.report).write_text(report.to_json())
        return EXIT_OK
    if not args.verdicts or not cfg.truth:
        raise ValueError("evaluate needs --verdicts and --truth (or --experiment)")
    truth = datagen.read_truth(cfg.truth)
    with open(args.verdicts, encoding="utf-8") as fh:
        verdicts = [parse_verdict(ln, cfg.threshold) for ln in fh if ln.strip()]
    cm = evaluate.confusion(verdicts, truth, args.unknown_policy)
    m = evaluate.metrics(cm)
    print(json.dumps({"confusion": cm.__dict__, "metrics": m.__dict__}, indent=2))
    return EXIT_OK


def cmd_export(args) -> int:
    model, _ = modelio.load(args.model)
    out = sys.stdout if args.out == "-" else open(args.out, "w", encoding="utf-8")
    try:
        model.export_tsv(out)
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


def cmd_normalize_list(args) -> int:
    with open_text(args.input) as fh:
        toks = normalize_list(fh, args.depth)
    text = "".join(t + "\n" for t in toks)
    if args.out == "-":
        sys.stdout.write(text)
    else:
        Path(args.out).write_text(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value config file")
    common.add_argument("--seed", type=int)
    common.add_argument("--threshold", type=float)
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a config setting (repeatable)")
    common.add_argument("-v", "--verbose", action="store_true")

    io = argparse.ArgumentParser(add_help=False)
    io.add_argument("--logs", nargs="+")
    io.add_argument("--model")
    io.add_argument("--blacklist")
    io.add_argument("--whitelist")
    io.add_argument("--truth")
    io.add_argument("--output-dir", dest="output_dir")

    parser = argparse.ArgumentParser(prog="dgaembed", description="DGA detection with incrementally trained domain embeddings.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", parents=[common], help="write a synthetic corpus")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("preprocess", parents=[common, io], help="logs -> document file")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", parents=[common, io], help="train embeddings and classifier")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("update", parents=[common, io], help="extend a model with new logs")
    p.set_defaults(func=cmd_update)

    p = sub.add_parser("score", parents=[common, io], help="score domains or log tokens")
    p.add_argument("--domains", help="file with one domain per line")
    p.add_argument("--out")
    p.add_argument("--feedback", action="store_true", help="stage list additions")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("evaluate", parents=[common, io], help="metrics or incremental experiment")
    p.add_argument("--verdicts")
    p.add_argument("--unknown-policy", default="negative", choices=evaluate.UNKNOWN_POLICIES)
    p.add_argument("--experiment", action="store_true")
    p.add_argument("--pieces", type=int, default=10)
    p.add_argument("--report")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("export-embeddings", parents=[common], help="model -> TSV")
    p.add_argument("--model", required=True)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("normalize-list", parents=[common], help="raw list -> tokens")
    p.add_argument("input")
    p.add_argument("--out", default="-")
    p.add_argument("--depth", type=int, default=2)
    p.set_defaults(func=cmd_normalize_list)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (FileNotFoundError, IsADirectoryError, ValueError, KeyError,
            modelio.ModelFileError) as exc:
        logger.error("%s", exc)
        return EXIT_INPUT
    except Exception:
        logger.exception("internal error")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
