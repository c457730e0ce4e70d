"""Command-line interface.

Exit status: 0 success, 1 usage error, 2 ingestion error, 3 evaluation error.
Relative embedding paths are resolved against ``$EMBSTAT_EMBEDDINGS_DIR``
when that variable is set.
"""

from __future__ import annotations

import argparse
import io
import json
import logging
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .bootstrap import DEFAULT_RESAMPLES
from .embeddings import load_embeddings, sentence_embed, tokenize
from .errors import EmbeddingFormatError, EmbstatError, TaskFormatError
from .evalharness import (load_sts_dir, load_wordsim, render_comparisons_csv,
                          render_scores_csv, sweep)
from .normality import (histogram, mean_census, normality_census, qq_points,
                        write_histogram_csv, write_qq_csv)
from .simcore import ApsParams, MeasureKind, similarity

EXIT_OK, EXIT_USAGE, EXIT_INGEST, EXIT_EVAL = 0, 1, 2, 3
EMBEDDINGS_DIR_ENV = "EMBSTAT_EMBEDDINGS_DIR"
FORMATS = ("text", "word2vec-bin")

log = logging.getLogger("embstat")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _measure_list(text):
    try:
        return [MeasureKind.parse(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _measure_pair(text):
    parts = text.split(":")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected A:B, got {text!r}")
    try:
        return tuple(MeasureKind.parse(p) for p in parts)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _unit_interval(text):
    v = float(text)
    if not 0.0 < v < 1.0:
        raise argparse.ArgumentTypeError(f"must be in (0, 1), got {v}")
    return v


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {v}")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--embedding", action="append", default=[], metavar="PATH",
                        help="embedding file (repeatable)")
    common.add_argument("--format", action="append", default=[], choices=FORMATS,
                        help="format of each --embedding; one value applies to all")
    common.add_argument("--limit", type=_positive_int, help="read at most this many words")
    common.add_argument("--output", "-o", help="report path (default: stdout)")
    common.add_argument("--output-format", choices=("json", "csv"), default="json")
    common.add_argument("--threads", type=_positive_int, default=1)
    common.add_argument("--no-lowercase", action="store_true",
                        help="keep sentence tokens in their original case")
    common.add_argument("--log-level", default="WARNING")

    evalopts = argparse.ArgumentParser(add_help=False)
    evalopts.add_argument("--measures", type=_measure_list, default=list(MeasureKind),
                          help="comma-separated subset of cos,prs,spr,ken,aps")
    evalopts.add_argument("--alpha", type=_unit_interval, default=0.05)
    evalopts.add_argument("--aps-top-n", type=_positive_int)
    evalopts.add_argument("--aps-power", type=float, default=0.1)
    evalopts.add_argument("--resamples", type=_positive_int, default=DEFAULT_RESAMPLES)
    evalopts.add_argument("--seed", type=int, default=0)
    evalopts.add_argument("--level", type=_unit_interval, default=0.95)
    evalopts.add_argument("--compare", type=_measure_pair, action="append", default=[],
                          metavar="A:B", help="BCa comparison of two measures (repeatable)")
    evalopts.add_argument("--top", action="store_true",
                          help="compare best rank-based vs best non-rank measure (V column)")

    wordopts = argparse.ArgumentParser(add_help=False)
    wordopts.add_argument("--sep", help="word-sim field separator (default: auto)")
    wordopts.add_argument("--score-column", type=int, default=2)
    wordopts.add_argument("--lowercase-words", action="store_true")

    parser = _Parser(prog="embstat", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"embstat {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("profile", parents=[common], help="mean and normality census of a table")
    p.add_argument("--alpha", type=_unit_interval, default=0.05)
    p.add_argument("--threshold", type=float, default=0.05)
    p.add_argument("--sample", type=_positive_int, default=500,
                   help="number of vectors to test for normality")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("sim", parents=[common], help="similarity of two words or sentences")
    p.add_argument("--measure", type=MeasureKind.parse, required=True)
    p.add_argument("--word-a")
    p.add_argument("--word-b")
    p.add_argument("--sentence-a")
    p.add_argument("--sentence-b")
    p.add_argument("--aps-top-n", type=_positive_int)
    p.add_argument("--aps-power", type=float, default=0.1)

    p = sub.add_parser("wordsim", parents=[common, evalopts, wordopts],
                       help="evaluate word similarity tasks")
    p.add_argument("--task", action="append", default=[], required=True, metavar="PATH")

    p = sub.add_parser("sts", parents=[common, evalopts], help="evaluate STS tasks")
    p.add_argument("--task", action="append", default=[], required=True, metavar="DIR")
    p.add_argument("--include-smt", action="store_true")

    p = sub.add_parser("sweep", parents=[common, evalopts, wordopts],
                       help="all tables x all tasks x all measures")
    p.add_argument("--wordsim", action="append", default=[], metavar="PATH")
    p.add_argument("--sts", action="append", default=[], metavar="DIR")
    p.add_argument("--include-smt", action="store_true")

    p = sub.add_parser("export-qq", parents=[common], help="Q-Q plot data for one vector")
    p.add_argument("--word")
    p.add_argument("--sentence")

    p = sub.add_parser("export-hist", parents=[common], help="histogram data")
    p.add_argument("--word", help="histogram the components of this word's vector")
    p.add_argument("--sentence")
    p.add_argument("--means", action="store_true", help="histogram the per-word means")
    p.add_argument("--bins", type=_positive_int, default=100)
    return parser


def _resolve_embedding(path):
    p = Path(path)
    base = os.environ.get(EMBEDDINGS_DIR_ENV)
    if base and not p.is_absolute():
        p = Path(base) / p
    return p


def _tables(args, keep=None):
    if not args.embedding:
        raise UsageError("at least one --embedding is required")
    fmts = args.format or []
    if len(fmts) == 1:
        fmts = fmts * len(args.embedding)
    if len(fmts) != len(args.embedding):
        raise UsageError("give --format once, or once per --embedding")
    tables = []
    for path, fmt in zip(args.embedding, fmts):
        resolved = _resolve_embedding(path)
        log.info("loading %s (%s)", resolved, fmt)
        table = load_embeddings(resolved, fmt, limit=args.limit, keep=keep)
        if len(table) == 0:
            raise EmbeddingFormatError("no vectors retained", source=str(resolved))
        tables.append(table)
    return tables


def _one_table(args):
    if len(args.embedding) != 1:
        raise UsageError(f"{args.command} takes exactly one --embedding")
    return _tables(args)[0]


def _vector(table, args, word, sentence):
    if (word is None) == (sentence is None):
        raise UsageError("give exactly one of --word / --sentence")
    if word is not None:
        if word not in table:
            raise EmbstatError(f"word {word!r} is not in the vocabulary")
        return table[word]
    sv = sentence_embed(table, tokenize(sentence, lowercase=not args.no_lowercase))
    if sv.degenerate:
        raise EmbstatError("sentence has no in-vocabulary tokens")
    return sv.values


def _aps(args):
    return ApsParams(top_n=args.aps_top_n, power=args.aps_power)


def cmd_profile(args):
    table = _one_table(args)
    census = mean_census(table, args.threshold)
    rng = np.random.Generator(np.random.PCG64(args.seed))
    k = min(args.sample, len(table))
    rows = np.sort(rng.choice(len(table), size=k, replace=False))
    normal = normality_census((table.vectors[i] for i in rows), args.alpha)
    result = {"embedding": table.source_label, "vocabulary": len(table),
              "dimension": table.dimension, "duplicates": table.duplicates,
              "skipped_lines": table.skipped, "mean_census": census.to_dict(),
              "normality": normal.to_dict(), "normality_sample": k}
    if args.output_format == "csv":
        lines = ["metric,value", f"vocabulary,{len(table)}", f"dimension,{table.dimension}",
                 f"mean_exceeding_fraction,{census.fraction!r}",
                 f"normality_proportion,{normal.proportion!r}"]
        return "\n".join(lines) + "\n", result
    return None, result


def cmd_sim(args):
    table = _one_table(args)
    if args.word_a is not None or args.word_b is not None:
        if args.sentence_a is not None or args.sentence_b is not None:
            raise UsageError("use either words or sentences, not both")
        if args.word_a is None or args.word_b is None:
            raise UsageError("--word-a and --word-b go together")
        va = _vector(table, args, args.word_a, None)
        vb = _vector(table, args, args.word_b, None)
    else:
        if args.sentence_a is None or args.sentence_b is None:
            raise UsageError("give --word-a/--word-b or --sentence-a/--sentence-b")
        va = _vector(table, args, None, args.sentence_a)
        vb = _vector(table, args, None, args.sentence_b)
    value = similarity(args.measure, va, vb, _aps(args))
    return None, {"measure": args.measure.label, "similarity": value}


def _load_wordsim_tasks(args, paths):
    tasks = []
    for path in paths:
        with open(path, "rb") as fh:
            tasks.append(load_wordsim(fh, Path(path).stem, sep=args.sep,
                                      score_column=args.score_column,
                                      lowercase=args.lowercase_words))
    return tasks


def _task_vocab(args, tasks):
    vocab = set()
    for t in tasks:
        if hasattr(t, "subtasks"):
            for sub in t.subtasks:
                for sa, sb, _ in sub.pairs:
                    vocab.update(tokenize(sa, lowercase=not args.no_lowercase))
                    vocab.update(tokenize(sb, lowercase=not args.no_lowercase))
        else:
            for wa, wb, _ in t.pairs:
                vocab.update((wa, wb))
    return vocab


def _run_eval(args, tasks):
    # Only vectors the tasks can use are kept; this keeps multi-GB files tractable.
    tables = _tables(args, keep=_task_vocab(args, tasks))
    reports = sweep(tasks, tables, args.measures, pairs=args.compare, top=args.top,
                    level=args.level, resamples=args.resamples, seed=args.seed,
                    aps_params=_aps(args), alpha=args.alpha,
                    lowercase=not args.no_lowercase, threads=args.threads)
    failed = [r for r in reports if r.error]
    if failed and len(failed) == len(reports):
        raise EmbstatError("; ".join(f"{r.task}: {r.error}" for r in failed))
    text = None
    if args.output_format == "csv":
        text = render_scores_csv(reports) + "\n" + render_comparisons_csv(reports)
    return text, {"reports": [r.to_dict() for r in reports]}


def cmd_wordsim(args):
    return _run_eval(args, _load_wordsim_tasks(args, args.task))


def cmd_sts(args):
    return _run_eval(args, [load_sts_dir(d, include_smt=args.include_smt) for d in args.task])


def cmd_sweep(args):
    if not args.wordsim and not args.sts:
        raise UsageError("sweep needs at least one --wordsim or --sts task")
    tasks = _load_wordsim_tasks(args, args.wordsim)
    tasks += [load_sts_dir(d, include_smt=args.include_smt) for d in args.sts]
    return _run_eval(args, tasks)


def _csv_text(write, obj):
    buf = io.StringIO()
    write(obj, buf)
    return buf.getvalue()


def cmd_export_qq(args):
    table = _one_table(args)
    pts = qq_points(_vector(table, args, args.word, args.sentence))
    return _csv_text(write_qq_csv, pts), None


def cmd_export_hist(args):
    table = _one_table(args)
    if args.means:
        if args.word is not None or args.sentence is not None:
            raise UsageError("--means cannot be combined with --word/--sentence")
        values = table.vectors.mean(axis=1)
    else:
        values = _vector(table, args, args.word, args.sentence)
    return _csv_text(write_histogram_csv, histogram(values, bins=args.bins)), None


COMMANDS = {"profile": cmd_profile, "sim": cmd_sim, "wordsim": cmd_wordsim, "sts": cmd_sts,
            "sweep": cmd_sweep, "export-qq": cmd_export_qq, "export-hist": cmd_export_hist}


def _clean(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, MeasureKind):
        return obj.label
    if isinstance(obj, np.generic):
        return _clean(obj.item())
    return obj


def run_config(args) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k not in ("log_level",)}
    cfg["embedding_paths"] = [str(_resolve_embedding(p)) for p in args.embedding]
    return _clean(cfg)


def _header(args):
    return {"toolkit": "embstat", "version": __version__, "seed": getattr(args, "seed", None),
            "config": run_config(args)}


def render(args, text, result) -> str:
    """Final file contents; provenance goes in every output."""
    head = _header(args)
    if args.output_format == "json" and result is not None:
        return json.dumps(_clean({**head, "result": result}), indent=2) + "\n"
    if text is None:
        text = json.dumps(_clean(result), indent=2) + "\n"
    prov = json.dumps(head, sort_keys=True)
    return f"# {prov}\n{text}"


def write_atomic(path, content: str):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(content)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command in ("export-qq", "export-hist") and args.output_format == "json":
        args.output_format = "csv"
    try:
        text, result = COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"embstat: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (EmbeddingFormatError, TaskFormatError, OSError, UnicodeDecodeError) as exc:
        print(f"embstat: ingestion error: {exc}", file=sys.stderr)
        return EXIT_INGEST
    except (EmbstatError, ValueError) as exc:
        print(f"embstat: evaluation error: {exc}", file=sys.stderr)
        return EXIT_EVAL

    if args.command == "sim" and not args.output:
        print(repr(result["similarity"]))
        return EXIT_OK
    content = render(args, text, result)
    if args.output:
        try:
            write_atomic(args.output, content)
        except OSError as exc:
            print(f"embstat: cannot write {args.output}: {exc}", file=sys.stderr)
            return EXIT_USAGE
    else:
        sys.stdout.write(content)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
