"""Command-line entry point: ``regspan <command> ...``.

Exit codes: 0 success, 1 validation failure or data error, 2 usage error.
Settings resolve as defaults < ``--config`` JSON file < command-line flags,
and the resolved settings are written into every output file's header.

File formats
  BRAT directory   pairs of NAME.txt (one sentence) and NAME.ann (standoff,
                   'T1<TAB>Object 0 7;12 20<TAB>surface'); NAME is the sentence id
  two-column file  'token<TAB>tag' lines, blank line between sentences,
                   optional '# sent_id = ID' lines
  span file        *.jsonl, one JSON record per sentence with tokens, tags
                   and decoded spans with character offsets
  split manifest   directory with train.txt, dev.txt, test.txt (one id per line)
  lexicon          TSV: form, frequency, discontiguous count, '|'-joined
                   variants, '|'-joined variant frequencies
  judgement tasks  *.jsonl, one task per line with text, offsets and choices
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import fields, replace
from pathlib import Path

from . import __version__
from .corpus import (
    apply_manifest,
    corpus_stats,
    iter_brat_pairs,
    load_brat_dir,
    load_corpus,
    read_brat_raw,
    read_split_manifest,
    split_dataset,
    split_sentences,
    tokenize,
    vocab_growth,
    write_split_manifest,
)
from .crf import FeatureTemplateConfig, TrainConfig, load_model, save_model, train, viterbi_decode
from .crf.features import ALL_TEMPLATES
from .exceptions import DecodeError, RegspanError
from .formats import (
    TaggedSentence,
    read_span_annotations,
    read_tagged,
    span_record,
    write_span_records,
    write_two_column,
)
from .lexicon import build_lexicon, read_lexicon, sample_for_judgement, write_lexicon, write_tasks
from .metrics import (
    cohen_kappa,
    defined_term_coverage,
    render_coverage,
    render_span_report,
    render_tag_report,
    span_match_report,
    tag_classification_report,
)
from .spans import (
    DEFAULT_TAGSET,
    REPAIR,
    STRICT,
    SentenceAnnotation,
    SpanCategory,
    TagsetConfig,
    decode_tags,
    lint_gold,
)


logger = logging.getLogger("regspan")

EXIT_OK, EXIT_INVALID, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def resolve_config(defaults: dict, config_path=None, flags: dict | None = None) -> dict:
    """defaults < JSON config file < flags that were actually given."""
    resolved = dict(defaults)
    if config_path:
        path = Path(config_path)
        if not path.exists():
            raise UsageError(f"config file {path} does not exist")
        loaded = json.loads(path.read_text("utf-8"))
        unknown = set(loaded) - set(defaults)
        if unknown:
            raise UsageError(f"unknown config keys {sorted(unknown)}")
        resolved.update(loaded)
    for key, value in (flags or {}).items():
        if value is not None:
            resolved[key] = value
    return resolved


def _existing(path, what="input") -> Path:
    p = Path(path)
    if not p.exists():
        raise UsageError(f"{what} {p} does not exist")
    return p


def _write_or_print(text: str, out):
    if out:
        Path(out).write_text(text, "utf-8")
    else:
        sys.stdout.write(text)


def _tagset(extended: bool) -> TagsetConfig:
    return TagsetConfig.extended() if extended else DEFAULT_TAGSET


# ---------------------------------------------------------------------------
# data loading

def load_annotations(path, tagset=DEFAULT_TAGSET, align="strict") -> list:
    """Gold sentences from a BRAT directory, a span file or a two-column file."""
    path = _existing(path)
    if path.is_dir():
        return load_brat_dir(path, align)
    if path.suffix in (".jsonl", ".json"):
        return read_span_annotations(path)
    return [t.annotation(tagset, STRICT)[0] for t in read_tagged(path)]


def load_tagged(path, tagset=DEFAULT_TAGSET, align="strict") -> list:
    """Tagged sentences from any supported input (BRAT directories are encoded)."""
    path = _existing(path)
    if path.is_dir():
        return [TaggedSentence.from_annotation(a, tagset=tagset) for a in load_brat_dir(path, align)]
    return read_tagged(path)


def _read_id_list(path) -> list:
    path = _existing(path)
    if path.is_dir():
        return [i for ids in read_split_manifest(path).values() for i in ids]
    return [ln.strip() for ln in path.read_text("utf-8").splitlines() if ln.strip()]


def _align(gold: list, pred: list):
    gid = [g.sentence_id for g in gold]
    pid = [p.sentence_id for p in pred]
    if all(gid) and all(pid):
        by_id = {p.sentence_id: p for p in pred}
        missing = [i for i in gid if i not in by_id]
        if missing:
            raise RegspanError(f"predictions missing for sentences {missing[:5]}")
        return gold, [by_id[i] for i in gid]
    if len(gold) != len(pred):
        raise RegspanError(f"{len(gold)} gold vs {len(pred)} predicted sentences")
    return gold, pred


# ---------------------------------------------------------------------------
# commands

TRAIN_DEFAULTS = {f.name: f.default for f in fields(TrainConfig)}
TRAIN_DEFAULTS.update({"templates": list(ALL_TEMPLATES), "window": 1, "extended_tagset": False,
                       "align": "strict"})


def cmd_train(args) -> int:
    cfg = resolve_config(TRAIN_DEFAULTS, args.config, {
        "seed": args.seed, "epochs": args.epochs, "learning_rate": args.learning_rate,
        "l2_strength": args.l2_strength, "batch_size": args.batch_size,
        "optimizer": args.optimizer, "extended_tagset": args.extended_tagset or None,
        "align": args.align, "constrained": False if args.unconstrained else None,
    })
    tagset = _tagset(cfg["extended_tagset"])
    if args.manifest:
        if not args.data:
            raise UsageError("--manifest needs --data (the BRAT directory)")
        splits = apply_manifest(load_brat_dir(_existing(args.data), cfg["align"]),
                                read_split_manifest(_existing(args.manifest)))
        train_set, dev_set = splits.get("train", []), splits.get("dev", [])
    else:
        if not args.train:
            raise UsageError("give --train (and optionally --dev), or --data with --manifest")
        train_set = load_tagged(args.train, tagset, cfg["align"])
        dev_set = load_tagged(args.dev, tagset, cfg["align"]) if args.dev else []
    as_pairs = lambda items: [(list(t.tokens), list(t.labels)) if isinstance(t, TaggedSentence)  # noqa: E731
                              else t for t in items]
    config = TrainConfig(**{k: cfg[k] for k in TRAIN_DEFAULTS if k in {f.name for f in fields(TrainConfig)}})
    result = train(as_pairs(train_set), as_pairs(dev_set), config,
                   FeatureTemplateConfig(tuple(cfg["templates"]), int(cfg["window"])), tagset)
    model = result.model.with_params(result.model.params(),
                                     {**result.model.metadata, "run_config": cfg})
    save_model(model, args.out)
    history_path = Path(args.history) if args.history else Path(str(args.out) + ".history.tsv")
    lines = ["# config: " + json.dumps(cfg, sort_keys=True),
             "epoch\ttrain_nll\tdev_weighted_f1\tdev_accuracy"]
    for rec in result.history:
        lines.append(f"{rec.epoch}\t{rec.train_nll:.6f}\t{rec.dev_weighted_f1}\t{rec.dev_accuracy}")
    history_path.write_text("\n".join(lines) + "\n", "utf-8")
    print(f"saved model to {args.out} (best epoch {result.best_epoch}); history in {history_path}")
    return EXIT_OK


def _input_sentences(paths, no_split, manifest_ids):
    out = []
    for raw in paths:
        path = _existing(raw)
        files = sorted(path.glob("*.txt")) if path.is_dir() else [path]
        for f in files:
            text = f.read_text("utf-8")
            if no_split:
                stripped = text.strip()
                if stripped:
                    out.append((f.stem, stripped))
            else:
                for k, (s, e) in enumerate(split_sentences(text)):
                    out.append((f"{f.stem}_s_{k}", text[s:e]))
    if manifest_ids is not None:
        keep = set(manifest_ids)
        out = [x for x in out if x[0] in keep]
    return out


def cmd_tag(args) -> int:
    model = load_model(_existing(args.model, "model"))
    mode = REPAIR if args.repair else STRICT
    ids = _read_id_list(args.ids) if args.ids else None
    sentences = _input_sentences(args.input, args.no_split, ids)

    def tag_one(item):
        sid, text = item
        tokens = tokenize(text)
        annotation = SentenceAnnotation(sid, tokens, (), text)
        seq, _ = viterbi_decode(model, annotation)
        return annotation, seq

    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            tagged = list(pool.map(tag_one, sentences))   # map keeps input order
    else:
        tagged = [tag_one(x) for x in sentences]

    header = {"command": "tag", "model": str(args.model), "format": args.format,
              "decode_mode": mode, "version": __version__}
    if args.format == "token":
        rows = [TaggedSentence(a.sentence_id, a.tokens, seq.labels, a.text) for a, seq in tagged]
        if args.out:
            write_two_column(rows, args.out, header)
        else:
            sys.stdout.write("# config: " + json.dumps(header, sort_keys=True) + "\n")
            for r in rows:
                sys.stdout.write(f"# sent_id = {r.sentence_id}\n")
                sys.stdout.write("".join(f"{t.surface}\t{lab}\n" for t, lab in zip(r.tokens, r.labels)))
                sys.stdout.write("\n")
        return EXIT_OK

    records = []
    for annotation, seq in tagged:
        try:
            decoded = decode_tags(seq, model.tagset, mode)
        except DecodeError as exc:
            print(f"error: {annotation.sentence_id}: {exc} (use --repair)", file=sys.stderr)
            return EXIT_INVALID
        records.append(span_record(annotation.with_spans(decoded.spans), seq, decoded.repairs))
    if args.out:
        write_span_records(records, args.out)
        Path(str(args.out) + ".meta.json").write_text(json.dumps(header, indent=2), "utf-8")
    else:
        for rec in records:
            sys.stdout.write(json.dumps(rec, ensure_ascii=False) + "\n")
    return EXIT_OK


def cmd_eval(args) -> int:
    tagset = _tagset(args.extended_tagset)
    gold = load_tagged(args.gold, tagset, args.align)
    pred = load_tagged(args.pred, tagset, args.align)
    gold, pred = _align(gold, pred)
    if args.mode == "tags":
        report = tag_classification_report([g.labels for g in gold], [p.labels for p in pred], tagset)
        text = render_tag_report(report, args.decimal)
    else:
        # spans are grouped per sentence, so tag each with its position when ids are absent
        gold_spans, pred_spans = [], []
        for k, (g, p) in enumerate(zip(gold, pred)):
            sid = g.sentence_id if g.sentence_id is not None else f"#{k}"
            gold_spans += [replace(s, sentence_id=sid)
                           for s in decode_tags(g.tag_sequence, tagset, REPAIR).spans]
            pred_spans += [replace(s, sentence_id=sid)
                           for s in decode_tags(p.tag_sequence, tagset, REPAIR).spans]
        report = span_match_report(gold_spans, pred_spans)
        text = render_span_report(report)
    sys.stdout.write(text)
    if args.json:
        Path(args.json).write_text(json.dumps(report.to_dict(), indent=2), "utf-8")
    return EXIT_OK


def _read_terms(path) -> list:
    return [ln.strip() for ln in _existing(path).read_text("utf-8").splitlines()
            if ln.strip() and not ln.startswith("#")]


def cmd_coverage(args) -> int:
    terms = _read_terms(args.terms)
    entries, _ = read_lexicon(_existing(args.lexicon, "lexicon"))
    report = defined_term_coverage(terms, entries, plural_folding=args.plural_folding)
    sys.stdout.write(render_coverage(report, args.decimal))
    if args.json:
        Path(args.json).write_text(json.dumps(report.to_dict(), indent=2), "utf-8")
    return EXIT_OK


def _decoded_corpus(path, tagset):
    annotations, n_repairs = [], 0
    for t in load_tagged(path, tagset):
        annotation, repairs = t.annotation(tagset, REPAIR)
        n_repairs += len(repairs)
        annotations.append(annotation)
    if n_repairs:
        logger.warning("applied %d repairs while decoding %s", n_repairs, path)
    return annotations


def cmd_lexicon(args) -> int:
    tagset = _tagset(args.extended_tagset)
    corpus = _decoded_corpus(args.tagged, tagset)
    entries = build_lexicon(corpus, SpanCategory.parse(args.category), args.plural_folding)
    cfg = {"command": "lexicon", "tagged": str(args.tagged), "category": args.category,
           "plural_folding": args.plural_folding, "version": __version__}
    write_lexicon(entries, args.out, cfg)
    print(f"wrote {len(entries)} entries to {args.out}")
    return EXIT_OK


def cmd_stats(args) -> int:
    docs = load_corpus(_existing(args.corpus, "corpus"))
    exclude = not args.include_punct
    stats = corpus_stats(docs, exclude_punct=exclude)
    cfg = {"command": "stats", "corpus": str(args.corpus), "exclude_punct": exclude,
           "growth_step": args.growth_step, "version": __version__}
    text = "# config: " + json.dumps(cfg, sort_keys=True) + "\n" + stats.to_text()
    _write_or_print(text, args.out)
    if args.json:
        record = {"config": cfg, "stats": stats.to_dict()}
        if args.growth_step:
            record["growth"] = vocab_growth(docs, args.growth_step, exclude)
        Path(args.json).write_text(json.dumps(record, indent=2), "utf-8")
    if args.growth_step:
        series = vocab_growth(docs, args.growth_step, exclude)
        rows = "tokens_seen\tvocabulary_size\n" + "".join(f"{a}\t{b}\n" for a, b in series)
        if args.growth_out:
            Path(args.growth_out).write_text(rows, "utf-8")
        else:
            sys.stdout.write(rows)
    return EXIT_OK


def cmd_validate(args) -> int:
    directory = _existing(args.ann_dir)
    tagset = _tagset(args.extended_tagset)
    pairs = iter_brat_pairs(directory)
    if not pairs:
        raise UsageError(f"no .txt/.ann pairs in {directory}")
    n_bad = 0
    for sid, txt, ann in pairs:
        try:
            raw = read_brat_raw(ann.read_text("utf-8"), txt.read_text("utf-8"), sid)
        except RegspanError as exc:
            print(f"{sid}: parse-error: {exc}")
            n_bad += 1
            continue
        for v in lint_gold(raw, tagset):
            print(f"{sid}: {v}")
            n_bad += 1
    print(f"{len(pairs)} sentences checked, {n_bad} violations", file=sys.stderr)
    return EXIT_INVALID if n_bad else EXIT_OK


def cmd_sample(args) -> int:
    entries, lex_cfg = read_lexicon(_existing(args.lexicon, "lexicon"))
    folding = lex_cfg.get("plural_folding", False) if args.plural_folding is None else args.plural_folding
    corpus = _decoded_corpus(args.corpus, DEFAULT_TAGSET)
    exclude_terms = _read_terms(args.exclude_terms) if args.exclude_terms else []
    exclude_sents = _read_id_list(args.exclude_sentences) if args.exclude_sentences else []
    tasks = sample_for_judgement(entries, corpus, args.n, args.seed, exclude_terms,
                                 exclude_sents, folding)
    write_tasks(tasks, args.out)
    cfg = {"command": "sample", "lexicon": str(args.lexicon), "corpus": str(args.corpus),
           "n": args.n, "seed": args.seed, "plural_folding": folding,
           "exclude_terms": str(args.exclude_terms), "exclude_sentences": str(args.exclude_sentences),
           "version": __version__}
    Path(str(args.out) + ".meta.json").write_text(json.dumps(cfg, indent=2), "utf-8")
    print(f"wrote {len(tasks)} tasks to {args.out}")
    return EXIT_OK


def cmd_split(args) -> int:
    ids = [sid for sid, _, _ in iter_brat_pairs(_existing(args.ann_dir))]
    ratios = tuple(float(x) for x in args.ratios.split(","))
    splits = split_dataset(ids, ratios, args.seed)
    write_split_manifest(splits, args.out)
    print(" ".join(f"{k}={len(v)}" for k, v in splits.items()))
    return EXIT_OK


def _span_units(a_sents, b_sents):
    la, lb = [], []
    for a, b in zip(a_sents, b_sents):
        sa = {s.indices: s.category.value for s in a.spans}
        sb = {s.indices: s.category.value for s in b.spans}
        for unit in sorted(set(sa) | set(sb), key=lambda x: (min(x), len(x))):
            la.append(sa.get(unit, "NONE"))
            lb.append(sb.get(unit, "NONE"))
    return la, lb


def cmd_kappa(args) -> int:
    tagset = _tagset(args.extended_tagset)
    a, b = _align(load_tagged(args.a, tagset), load_tagged(args.b, tagset))
    if args.unit == "tags":
        la = [str(x) for s in a for x in s.labels]
        lb = [str(x) for s in b for x in s.labels]
    else:
        la, lb = _span_units([s.annotation(tagset, REPAIR)[0] for s in a],
                             [s.annotation(tagset, REPAIR)[0] for s in b])
    print(f"kappa\t{cohen_kappa(la, lb):.4f}\tunits\t{len(la)}\tunit\t{args.unit}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="regspan", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_, description=help_)
        p.set_defaults(func=func)
        return p

    def tagset_flag(p):
        p.add_argument("--extended-tagset", action="store_true",
                       help="allow BD/ID labels for Discourse and Functional (16 labels)")

    p = add("train", cmd_train, "train a CRF tagger and save the model")
    p.add_argument("--train", help="BRAT directory, two-column file or span file")
    p.add_argument("--dev", help="development data in the same formats")
    p.add_argument("--data", help="BRAT directory, used with --manifest")
    p.add_argument("--manifest", help="split manifest directory (train.txt, dev.txt)")
    p.add_argument("--config", help="JSON file with training settings")
    p.add_argument("--out", required=True, help="model file to write (.npz container)")
    p.add_argument("--history", help="per-epoch history TSV (default: OUT.history.tsv)")
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--l2-strength", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--optimizer", choices=("sgd", "adam"))
    p.add_argument("--align", choices=("strict", "snap"))
    p.add_argument("--unconstrained", action="store_true",
                   help="train every transition instead of masking illegal ones")
    tagset_flag(p)

    p = add("tag", cmd_tag, "tag raw text with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True, nargs="+", help="text files or directories of *.txt")
    p.add_argument("--format", choices=("token", "spans"), default="token",
                   help="token: two-column file; spans: JSON lines with decoded spans")
    p.add_argument("--repair", action="store_true", help="repair malformed tag sequences when decoding")
    p.add_argument("--no-split", action="store_true",
                   help="treat each file as one sentence whose id is the file name")
    p.add_argument("--ids", help="only tag these sentence ids (file or split manifest directory)")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out")

    p = add("eval", cmd_eval, "compare predicted tags with gold annotations")
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--mode", choices=("tags", "spans"), default="tags")
    p.add_argument("--json", help="also write a machine-readable report")
    p.add_argument("--decimal", default=",", help="decimal mark for percentages")
    p.add_argument("--align", choices=("strict", "snap"), default="strict")
    tagset_flag(p)

    p = add("coverage", cmd_coverage, "defined-term coverage of a lexicon")
    p.add_argument("--terms", required=True, help="one defined term per line")
    p.add_argument("--lexicon", required=True)
    p.add_argument("--plural-folding", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--json")
    p.add_argument("--decimal", default=",")

    p = add("lexicon", cmd_lexicon, "aggregate predicted spans into a lexicon")
    p.add_argument("--tagged", required=True, help="two-column or span file")
    p.add_argument("--out", required=True)
    p.add_argument("--category", default="Object")
    p.add_argument("--plural-folding", action=argparse.BooleanOptionalAction, default=False)
    tagset_flag(p)

    p = add("stats", cmd_stats, "corpus statistics and vocabulary growth")
    p.add_argument("--corpus", required=True, help="text file or directory of *.txt")
    p.add_argument("--growth-step", type=int)
    p.add_argument("--include-punct", action="store_true")
    p.add_argument("--out", help="key-value report (default: stdout)")
    p.add_argument("--json", help="machine-readable record")
    p.add_argument("--growth-out", help="growth series TSV (default: stdout)")

    p = add("validate", cmd_validate, "lint gold BRAT annotations; exit 1 on violations")
    p.add_argument("--ann-dir", required=True)
    tagset_flag(p)

    p = add("sample", cmd_sample, "export judgement tasks for lexicon entries")
    p.add_argument("--lexicon", required=True)
    p.add_argument("--corpus", required=True, help="tagged corpus (span or two-column file)")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--exclude-terms", help="defined terms, one per line")
    p.add_argument("--exclude-sentences", help="sentence ids file or split manifest directory")
    p.add_argument("--plural-folding", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--out", required=True)

    p = add("split", cmd_split, "write a seeded train/dev/test split manifest")
    p.add_argument("--ann-dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ratios", default="0.6,0.2,0.2")

    p = add("kappa", cmd_kappa, "Cohen's kappa between two annotations of the same sentences")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--unit", choices=("tags", "spans"), default="tags",
                   help="tags: one unit per token; spans: one unit per distinct token set")
    tagset_flag(p)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"regspan: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (RegspanError, KeyError, ValueError) as exc:
        print(f"regspan: error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
