"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import neuralcore as nc
from . import preprocess, synthetic
from .corpus import EmotionLabelSet, load_corpus, write_corpus
from .diagnostics import architecture_gradcheck
from .encoder import parse_encoder_spec
from .errors import DataError, NumericalError
from .evalmetrics import evaluate, render_table
from .models import (
    KINDS,
    SIMPLE,
    SIMPLE_AUG,
    ModelDims,
    build_bundle,
    load_bundle,
    load_ensemble,
    predictions_for,
    save_bundle,
    write_ensemble_manifest,
)
from .models.predict import DEFAULT_PRIORITY
from .seeding import derive_seed
from .training import TrainConfig, train_model

log = logging.getLogger("hinglish_erc")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _global_flags(p: argparse.ArgumentParser, suppress: bool) -> None:
    default = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--seed", type=int, default=default(0), help="root seed (default 0)")
    p.add_argument("--config", default=default(None), help="JSON training config file")
    p.add_argument("--jobs", type=int, default=default(1), help="parallel workers where supported")
    p.add_argument("--lenient", action="store_true", default=default(False), help="ignore unknown corpus keys")
    p.add_argument("--float32", action="store_true", default=default(False), help="32-bit tensors (faster, not for checks)")
    p.add_argument("--labels", default=default(None), help="comma-separated label set (default: 8 emotions incl. contempt)")
    p.add_argument("-v", "--verbose", action="store_true", default=default(False))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hinglish-erc", description=__doc__.splitlines()[0])
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def command(name, help):
        p = sub.add_parser(name, help=help)
        _global_flags(p, suppress=True)
        return p

    p = command("translate", "fill text_en via transliteration then translation")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--translit", default="identity", help="identity | dict:<tsv>")
    p.add_argument("--translate", dest="translator", default="identity", help="identity | dict:<tsv>")
    p.add_argument("--force", action="store_true", help="re-translate utterances that already have text_en")
    p.add_argument("--cache-dir", help="on-disk provider cache")

    p = command("augment", "add three paraphrased copies per utterance")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--paraphraser", default="rules", help="rules | rules:<tsv>")

    p = command("train", "train one base model")
    p.add_argument("--kind", required=True, choices=KINDS)
    p.add_argument("--train", required=True)
    p.add_argument("--val")
    p.add_argument("--out", required=True, help="bundle directory")
    p.add_argument("--encoder", default="hashed", help="hashed | precomputed:<jsonl>")
    p.add_argument("--dims", choices=("full", "desk"), default="full")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--main-lr", type=float)
    p.add_argument("--encoder-lr", type=float)
    p.add_argument("--no-context", action="store_true", help="sentence-only baseline (simple history only)")
    p.add_argument("--gru-excludes-next", action="store_true", help="GRU reads [previous..., current] only")
    p.add_argument("--train-on-all", action="store_true", help="merge train and val, fixed epoch count")
    p.add_argument("--epochs-from", help="bundle dir or trainlog.jsonl whose best epoch fixes --train-on-all length")

    p = command("predict", "predict every utterance of a corpus")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--bundle")
    src.add_argument("--ensemble", help="ensemble manifest JSON")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--no-context", action="store_true", help="ignore previous sentence/emotion (simple history only)")

    p = command("ensemble", "write an ensemble manifest for four bundles")
    p.add_argument("--members", nargs=4, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--priority", nargs=4, choices=KINDS, default=list(DEFAULT_PRIORITY))

    p = command("evaluate", "score predictions against a gold corpus")
    p.add_argument("--pred", required=True, action="append", help="prediction JSONL (repeatable)")
    p.add_argument("--gold", required=True)
    p.add_argument("--json", help="write the report(s) as JSON here")

    p = command("gradcheck", "finite-difference check of the four architectures")
    p.add_argument("--kinds", nargs="+", choices=KINDS, default=list(KINDS))
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--max-entries", type=int, default=48, help="entries sampled per parameter tensor (0 = all)")

    p = command("synth", "write the synthetic context-dependent corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--conversations", type=int, default=16)
    return parser


def _labels(args) -> EmotionLabelSet:
    return EmotionLabelSet.parse(args.labels)


def _read_jsonl(path: str) -> list[dict]:
    p = Path(path)
    if not p.exists():
        raise DataError(f"file not found: {p}")
    rows = []
    for lineno, line in enumerate(p.read_text(encoding="utf-8").splitlines(), start=1):
        if line.strip():
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise DataError(f"{p}:{lineno}: invalid JSON ({exc.msg})") from None
    return rows


def _write_jsonl(rows, path: str) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for r in rows:
            fh.write(json.dumps(r, ensure_ascii=False) + "\n")


def cmd_translate(args) -> int:
    convs = load_corpus(args.inp, _labels(args), strict=not args.lenient)
    tl = preprocess.make_transliterator(args.translit)
    tr = preprocess.make_translator(args.translator)
    out = preprocess.translate_corpus(convs, tl, tr, preprocess.ProviderCache(args.cache_dir), args.force, args.jobs)
    write_corpus(out, args.out)
    return EXIT_OK


def cmd_augment(args) -> int:
    convs = load_corpus(args.inp, _labels(args), strict=not args.lenient)
    out = preprocess.augment_corpus(convs, preprocess.make_paraphraser(args.paraphraser), derive_seed(args.seed, "augment"))
    added = sum(len(c.synthetic) - len(o.synthetic) for c, o in zip(out, convs))
    if not added:
        log.warning("the paraphraser produced no candidates; is its synonym table in the corpus language?")
    write_corpus(out, args.out)
    print(f"added {added} synthetic records")
    return EXIT_OK


def _best_epoch_from(path: str) -> int:
    p = Path(path)
    if p.is_dir():
        p = p / "trainlog.jsonl"
    best = [r["epoch"] for r in _read_jsonl(str(p)) if r.get("best")]
    if not best:
        raise DataError(f"no best epoch recorded in {p}")
    return best[-1]


def cmd_train(args) -> int:
    labels = _labels(args)
    strict = not args.lenient
    train = load_corpus(args.train, labels, strict)
    val = load_corpus(args.val, labels, strict) if args.val else []
    if args.kind == SIMPLE_AUG and not any(c.synthetic for c in train):
        raise DataError(f"{args.kind} needs an augmented corpus (no synthetic records in {args.train}); run 'augment' first")
    if args.no_context and args.kind not in (SIMPLE, SIMPLE_AUG):
        raise UsageError("--no-context applies to simple_history models only")
    cfg = TrainConfig.from_file(args.config) if args.config else TrainConfig()
    overrides = {
        "max_epochs": args.epochs,
        "batch_size": args.batch_size,
        "patience": args.patience,
        "main_lr": args.main_lr,
        "encoder_lr": args.encoder_lr,
    }
    cfg = TrainConfig.from_dict({**cfg.to_dict(), **{k: v for k, v in overrides.items() if v is not None}, "seed": args.seed})
    if args.train_on_all:
        if args.epochs_from:
            cfg.max_epochs = _best_epoch_from(args.epochs_from)
        elif args.epochs is None:
            raise UsageError("--train-on-all needs --epochs or --epochs-from")
        cfg.train_on_all = True
    if not val and not cfg.train_on_all:
        log.warning("no validation corpus: training runs all %d epochs and keeps the last", cfg.max_epochs)
    dims = ModelDims.desk() if args.dims == "desk" else ModelDims()
    if args.gru_excludes_next:
        dims = ModelDims.from_dict({**dims.to_dict(), "gru_includes_next": False})
    model_seed = derive_seed(args.seed, f"model:{args.kind}")
    enc_cfg = parse_encoder_spec(args.encoder, dims.d_enc, derive_seed(args.seed, "encoder"), args.lenient, dims.vocab_hash_dim)
    resolved = {"command": "train", "kind": args.kind, "train": args.train, "val": args.val, "out": args.out,
                "encoder": enc_cfg, "dims": dims.to_dict(), "train_config": cfg.to_dict(), "seed": args.seed,
                "no_context": args.no_context, "labels": list(labels.labels)}
    log.info("resolved config: %s", json.dumps(resolved, sort_keys=True))
    bundle = build_bundle(args.kind, labels, dims, enc_cfg, model_seed, args.no_context)
    bundle, trainlog = train_model(bundle, train, val, cfg)
    out = save_bundle(bundle, args.out)
    (out / "trainlog.jsonl").write_text(trainlog.to_jsonl(), encoding="utf-8")
    (out / "trainlog.txt").write_text(trainlog.summary(), encoding="utf-8")
    (out / "run_config.json").write_text(json.dumps(resolved, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    print(trainlog.summary(), end="")
    return EXIT_OK


def cmd_predict(args) -> int:
    if args.ensemble:
        if args.no_context:
            raise UsageError("--no-context applies to a single simple_history bundle")
        model = load_ensemble(args.ensemble)
        labels = model.members[0].labels
    else:
        model = load_bundle(args.bundle)
        if args.no_context:
            if model.kind not in (SIMPLE, SIMPLE_AUG):
                raise UsageError("--no-context applies to simple_history models only")
            model.no_context = True
        labels = model.labels
    convs = load_corpus(args.inp, labels, strict=not args.lenient)
    _write_jsonl(predictions_for(convs, model), args.out)
    return EXIT_OK


def cmd_ensemble(args) -> int:
    out = Path(args.out)
    members = [str(Path(m).resolve()) for m in args.members]
    for m in members:
        if not (Path(m) / "manifest.json").exists():
            raise DataError(f"not a model bundle: {m}")
    write_ensemble_manifest(out, members, args.priority)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    gold_rows = [r for r in _read_jsonl(args.gold) if not r.get("synthetic")]
    labels = _labels(args)
    gold = {(r["cid"], r["index"]): r.get("gold") for r in gold_rows}
    reports = []
    for path in args.pred:
        rows = _read_jsonl(path)
        if len(rows) != len(gold):
            raise DataError(f"{path}: {len(rows)} predictions for {len(gold)} gold utterances")
        pred = {}
        for r in rows:
            key = (r["cid"], r["index"])
            if key not in gold:
                raise DataError(f"{path}: prediction for unknown utterance {key}")
            pred[key] = r["label"]
        keys = list(gold)
        reports.append((Path(path).stem, evaluate([pred[k] for k in keys], [gold[k] for k in keys], labels)))
    print(render_table(reports), end="")
    if args.json:
        payload = {name: r.to_dict() for name, r in reports}
        Path(args.json).write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    if args.float32:
        raise UsageError("gradient checks run in 64-bit precision; drop --float32")
    ok = True
    for kind in args.kinds:
        report = architecture_gradcheck(kind, args.seed, args.tol, args.max_entries or None)
        status = "PASS" if report.passed else "FAIL"
        print(f"{status} {kind:20s} max rel err {report.max_rel_error:.3e} over {report.checked} entries (worst: {report.worst()})")
        ok &= report.passed
    return EXIT_OK if ok else EXIT_NUMERIC


def cmd_synth(args) -> int:
    write_corpus(synthetic.generate(args.conversations, seed=args.seed), args.out)
    print(f"labels: {','.join(synthetic.LABELS.labels)}")
    return EXIT_OK


COMMANDS = {
    "translate": cmd_translate,
    "augment": cmd_augment,
    "train": cmd_train,
    "predict": cmd_predict,
    "ensemble": cmd_ensemble,
    "evaluate": cmd_evaluate,
    "gradcheck": cmd_gradcheck,
    "synth": cmd_synth,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    previous_dtype = nc.get_default_dtype()
    if args.float32:
        nc.set_default_dtype("float32")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"hinglish-erc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FileNotFoundError, KeyError) as exc:
        print(f"hinglish-erc: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"hinglish-erc: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"hinglish-erc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    finally:
        nc.set_default_dtype(previous_dtype)


if __name__ == "__main__":
    sys.exit(main())
