"""Benchmark ingestion, scoring and sweeps.

Word-level tasks are scored by the Spearman correlation between gold
ratings and predicted similarities; sentence-level STS tasks by the Pearson
correlation per subtask, averaged without weighting over subtasks.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import re
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO, Iterable, Sequence

import numpy as np

from . import bootstrap
from .embeddings import EmbeddingTable, sentence_embed, tokenize
from .errors import EmbstatError, EvaluationError, TaskFormatError
from .normality import NormalityReport, normality_census
from .simcore import ApsParams, MeasureKind, pearson, similarity, spearman

logger = logging.getLogger(__name__)

EXCLUDED_STS_SUBTASKS = frozenset({"SMT"})
WORD_NORMALITY_BASIS = "unique in-vocabulary word vectors of the task"
STS_NORMALITY_BASIS = "unique non-degenerate sentence vectors of the task"


@dataclass(frozen=True)
class WordSimTask:
    name: str
    pairs: tuple[tuple[str, str, float], ...]
    malformed: int = 0

    def __post_init__(self):
        if not self.pairs:
            raise ValueError("a word similarity task needs at least one pair")


@dataclass(frozen=True)
class StsSubtask:
    name: str
    pairs: tuple[tuple[str, str, float], ...]
    dropped: int = 0


@dataclass(frozen=True)
class StsTask:
    name: str
    subtasks: tuple[StsSubtask, ...]

    def __post_init__(self):
        if not self.subtasks:
            raise ValueError("an STS task needs at least one subtask")


def _lines(reader):
    for lineno, raw in enumerate(reader, start=1):
        if isinstance(raw, bytes):
            raw = raw.decode("utf-8")
        yield lineno, raw.rstrip("\r\n")


def _split(line, sep):
    if sep is not None:
        return [f.strip() for f in line.split(sep)]
    if "\t" in line:
        return [f.strip() for f in line.split("\t")]
    if "," in line:
        return [f.strip() for f in line.split(",")]
    return line.split()


def _parse_float(s):
    try:
        v = float(s)
    except ValueError:
        return None
    return v if math.isfinite(v) else None


def load_wordsim(reader: BinaryIO, name: str = "", *, sep: str | None = None,
                 word_columns=(0, 1), score_column: int = 2,
                 lowercase: bool = False) -> WordSimTask:
    """Parse ``word_a<sep>word_b<sep>score`` lines.

    The separator is detected per line (tab, then comma, then whitespace)
    unless ``sep`` is given. A first line whose score field is not numeric
    is treated as a header; any later bad line is skipped and counted in
    ``malformed``.
    """
    pairs = []
    malformed = 0
    first = True
    need = max(max(word_columns), score_column) + 1
    for lineno, line in _lines(reader):
        if not line.strip():
            continue
        fields = _split(line, sep)
        score = _parse_float(fields[score_column]) if len(fields) >= need else None
        if first:
            first = False
            if len(fields) >= need and score is None:
                continue
        wa, wb = (fields[c] if len(fields) > c else "" for c in word_columns)
        if score is None or not wa or not wb:
            malformed += 1
            logger.debug("%s line %d: skipped %r", name, lineno, line)
            continue
        if lowercase:
            wa, wb = wa.lower(), wb.lower()
        pairs.append((wa, wb, score))
    if not pairs:
        raise TaskFormatError("no parseable word pairs", source=name or None)
    return WordSimTask(name, tuple(pairs), malformed)


def load_sts(gold_reader: BinaryIO, pairs_reader: BinaryIO, name: str = "") -> StsSubtask:
    """Assemble one STS subtask from parallel gold-score and sentence-pair files.

    Sentence lines are ``sentence_a<TAB>sentence_b[<TAB>...]``. Blank gold
    lines drop the pair (shared-task convention); so do sentence lines with
    fewer than two fields. The number of dropped pairs is recorded.
    """
    gold = [line for _, line in _lines(gold_reader)]
    sents = [line for _, line in _lines(pairs_reader)]
    if len(gold) != len(sents):
        raise TaskFormatError(
            f"{len(sents)} sentence lines but {len(gold)} gold lines", source=name or None)
    pairs = []
    dropped = 0
    for lineno, (g, s) in enumerate(zip(gold, sents), start=1):
        if not g.strip():
            dropped += 1
            continue
        score = _parse_float(g.strip())
        if score is None:
            raise TaskFormatError(f"gold score {g!r} is not a number", line=lineno,
                                  source=name or None)
        fields = s.split("\t")
        if len(fields) < 2:
            dropped += 1
            continue
        pairs.append((fields[0], fields[1], score))
    return StsSubtask(name, tuple(pairs), dropped)


_STS_INPUT = re.compile(r"^STS\.input\.(.+)\.txt$")


def load_sts_dir(path, name: str | None = None, include_smt: bool = False) -> StsTask:
    """Load a SentEval-layout directory of ``STS.input.<sub>.txt`` / ``STS.gs.<sub>.txt``.

    The STS13 ``SMT`` subtask is skipped unless ``include_smt`` is set.
    """
    path = Path(path)
    subtasks = []
    for f in sorted(path.iterdir(), key=lambda p: p.name.lower()):
        m = _STS_INPUT.match(f.name)
        if not m:
            continue
        sub = m.group(1)
        if sub in EXCLUDED_STS_SUBTASKS and not include_smt:
            logger.info("%s: skipping subtask %s", path, sub)
            continue
        gs = path / f"STS.gs.{sub}.txt"
        if not gs.exists():
            raise TaskFormatError(f"missing gold file for subtask {sub}", source=str(path))
        with open(gs, "rb") as g, open(f, "rb") as s:
            subtasks.append(load_sts(g, s, sub))
    if not subtasks:
        raise TaskFormatError("no STS.input.*.txt files found", source=str(path))
    return StsTask(name or path.name, tuple(subtasks))


@dataclass
class MeasureScore:
    """Evaluation of one measure on one scoring unit (a task or an STS subtask)."""

    measure: MeasureKind
    score: float | None
    scored: int
    total: int
    skipped: dict[str, int] = field(default_factory=dict)

    @property
    def skipped_count(self) -> int:
        return sum(self.skipped.values())

    @property
    def coverage(self) -> float:
        return self.scored / self.total if self.total else 0.0

    def to_dict(self):
        return {"measure": self.measure.label, "score": self.score, "scored": self.scored,
                "total": self.total, "skipped": self.skipped_count,
                "skip_reasons": dict(sorted(self.skipped.items())), "coverage": self.coverage}


@dataclass
class UnitResult:
    """Scores of every measure on one unit, plus per-item data for bootstrapping."""

    name: str
    total: int
    measures: dict[MeasureKind, MeasureScore]
    gold: np.ndarray = field(repr=False)
    predictions: dict[MeasureKind, np.ndarray] = field(repr=False)
    flagged: list[str] = field(default_factory=list)

    def to_dict(self):
        return {"name": self.name, "total": self.total,
                "measures": {k.label: v.to_dict() for k, v in self.measures.items()},
                "flagged": list(self.flagged)}


@dataclass
class Comparison:
    unit: str
    measure_a: MeasureKind
    measure_b: MeasureKind
    score_a: float | None
    score_b: float | None
    interval: bootstrap.BcaInterval | None
    verdict: bootstrap.Verdict | None
    items: int = 0
    error: str | None = None
    selection: str = "explicit"

    @property
    def winner(self) -> str:
        if self.verdict is bootstrap.Verdict.A_WINS:
            return self.measure_a.label
        if self.verdict is bootstrap.Verdict.B_WINS:
            return self.measure_b.label
        return "tie"

    def to_dict(self):
        return {"unit": self.unit, "measure_a": self.measure_a.label,
                "measure_b": self.measure_b.label, "score_a": self.score_a,
                "score_b": self.score_b, "items": self.items, "selection": self.selection,
                "interval": self.interval.to_dict() if self.interval else None,
                "verdict": self.verdict.value if self.verdict else None,
                "winner": self.winner if self.verdict else None, "error": self.error}


@dataclass
class EvalReport:
    task: str
    task_kind: str  # "wordsim" or "sts"
    embedding: str
    criterion: str  # evaluation correlation: "spearman" or "pearson"
    measures: list[MeasureKind]
    units: list[UnitResult]
    normality: NormalityReport | None = None
    normality_basis: str = ""
    comparisons: list[Comparison] = field(default_factory=list)
    error: str | None = None

    @property
    def total_pairs(self) -> int:
        return sum(u.total for u in self.units)

    def score(self, kind) -> float | None:
        """Task-level score: the unit score, or the unweighted mean over included subtasks."""
        kind = MeasureKind.parse(kind)
        vals = [u.measures[kind].score for u in self.units
                if kind in u.measures and u.measures[kind].score is not None]
        if not vals:
            return None
        return float(np.mean(vals))

    @property
    def scores(self) -> dict[MeasureKind, float | None]:
        return {k: self.score(k) for k in self.measures}

    def coverage(self, kind) -> float:
        kind = MeasureKind.parse(kind)
        total = self.total_pairs
        scored = sum(u.measures[kind].scored for u in self.units if kind in u.measures)
        return scored / total if total else 0.0

    @property
    def v_column(self) -> str | None:
        """Winner type of the top comparison: ``R`` (rank-based), ``N`` (non-rank) or ``=``."""
        for c in self.comparisons:
            if c.selection == "top" and c.verdict is not None:
                if c.verdict is bootstrap.Verdict.TIE:
                    return "="
                winner = c.measure_a if c.verdict is bootstrap.Verdict.A_WINS else c.measure_b
                return "R" if winner.rank_based else "N"
        return None

    def to_dict(self):
        return {
            "task": self.task, "task_kind": self.task_kind, "embedding": self.embedding,
            "criterion": self.criterion,
            "scores": {k.label: self.score(k) for k in self.measures},
            "coverage": {k.label: self.coverage(k) for k in self.measures},
            "total_pairs": self.total_pairs,
            "N": self.normality.proportion if self.normality else None,
            "normality": self.normality.to_dict() if self.normality else None,
            "normality_basis": self.normality_basis,
            "V": self.v_column,
            "units": [u.to_dict() for u in self.units],
            "comparisons": [c.to_dict() for c in self.comparisons],
            "error": self.error,
        }


def _kinds(kinds) -> list[MeasureKind]:
    if isinstance(kinds, (str, MeasureKind)):
        kinds = [kinds]
    out = []
    for k in kinds:
        k = MeasureKind.parse(k)
        if k not in out:
            out.append(k)
    if not out:
        raise ValueError("at least one measure is required")
    return out


def _score_unit(name, items, total, base_skips, kinds, aps_params, criterion):
    """Score vector pairs ``items = [(vec_a, vec_b, gold), ...]`` under every measure."""
    gold = np.array([g for _, _, g in items], dtype=np.float64)
    measures = {}
    predictions = {}
    flagged = []
    corr = spearman if criterion == "spearman" else pearson
    for kind in kinds:
        pred = np.full(len(items), np.nan)
        skipped = Counter(base_skips)
        for i, (va, vb, _) in enumerate(items):
            try:
                pred[i] = similarity(kind, va, vb, aps_params)
            except (EmbstatError, ValueError) as exc:
                skipped[f"undefined-{kind.value}"] += 1
                logger.debug("%s/%s item %d: %s", name, kind.label, i, exc)
        ok = np.isfinite(pred)
        scored = int(np.count_nonzero(ok))
        score = None
        if scored < 2:
            flagged.append(f"{kind.label}: fewer than 2 scored pairs")
        else:
            try:
                score = corr(gold[ok], pred[ok])
            except EmbstatError as exc:
                flagged.append(f"{kind.label}: {exc}")
        measures[kind] = MeasureScore(kind, score, scored, total, dict(skipped))
        predictions[kind] = pred
    return UnitResult(name, total, measures, gold, predictions, flagged)


def _census(vectors, alpha):
    vectors = list(vectors)
    if not vectors or vectors[0].size < 3:
        return None
    try:
        return normality_census(vectors, alpha)
    except ValueError:
        return None


def eval_wordsim(task: WordSimTask, table: EmbeddingTable, kinds, *,
                 aps_params: ApsParams | None = None, alpha: float = 0.05) -> EvalReport:
    """Score a word similarity task by Spearman(gold, predicted similarity).

    Pairs with an out-of-vocabulary word are skipped and counted. The N
    column is the normality census over the task's unique in-vocabulary
    word vectors.
    """
    kinds = _kinds(kinds)
    items = []
    oov = 0
    words = []
    for wa, wb, g in task.pairs:
        if wa in table and wb in table:
            items.append((table[wa], table[wb], g))
            words.extend((wa, wb))
        else:
            oov += 1
    base = {"oov": oov} if oov else {}
    unit = _score_unit(task.name, items, len(task.pairs), base, kinds, aps_params, "spearman")
    if all(m.score is None for m in unit.measures.values()):
        raise EvaluationError(f"{task.name}: fewer than 2 scorable pairs")
    unique = dict.fromkeys(words)
    normality = _census((table[w] for w in unique), alpha)
    return EvalReport(task.name, "wordsim", table.source_label, "spearman", kinds, [unit],
                      normality, WORD_NORMALITY_BASIS)


def eval_sts(task: StsTask, table: EmbeddingTable, kinds, *,
             aps_params: ApsParams | None = None, alpha: float = 0.05,
             lowercase: bool = True) -> EvalReport:
    """Score an STS task: Pearson(gold, predicted) per subtask, then the plain mean.

    Sentences are tokenized, averaged over in-vocabulary words, and pairs
    with a degenerate (empty) sentence vector are skipped. Subtasks with
    fewer than two scored pairs are flagged and left out of the mean.
    """
    kinds = _kinds(kinds)
    cache: dict[str, tuple] = {}

    def embed(sentence):
        toks = tuple(tokenize(sentence, lowercase=lowercase))
        if toks not in cache:
            cache[toks] = sentence_embed(table, toks)
        return toks, cache[toks]

    units = []
    seen = {}
    for sub in task.subtasks:
        items = []
        degenerate = 0
        for sa, sb, g in sub.pairs:
            ta, va = embed(sa)
            tb, vb = embed(sb)
            if va.degenerate or vb.degenerate:
                degenerate += 1
                continue
            items.append((va.values, vb.values, g))
            seen.setdefault(ta, va.values)
            seen.setdefault(tb, vb.values)
        base = {"degenerate-sentence": degenerate} if degenerate else {}
        units.append(_score_unit(sub.name, items, len(sub.pairs), base, kinds, aps_params,
                                 "pearson"))
    if all(m.score is None for u in units for m in u.measures.values()):
        raise EvaluationError(f"{task.name}: no subtask has 2 or more scorable pairs")
    normality = _census(seen.values(), alpha)
    return EvalReport(task.name, "sts", table.source_label, "pearson", kinds, units,
                      normality, STS_NORMALITY_BASIS)


def compare_measures(unit: UnitResult, a: MeasureKind, b: MeasureKind, criterion: str, *,
                     level=0.95, resamples=bootstrap.DEFAULT_RESAMPLES, seed=0,
                     selection="explicit") -> Comparison:
    """BCa interval on ``corr(gold, pred_a) - corr(gold, pred_b)`` over shared items."""
    pa, pb = unit.predictions[a], unit.predictions[b]
    ok = np.isfinite(pa) & np.isfinite(pb)
    sa, sb = unit.measures[a].score, unit.measures[b].score
    n = int(np.count_nonzero(ok))
    try:
        diff = bootstrap.correlation_difference(unit.gold[ok], pa[ok], pb[ok], criterion)
        iv = bootstrap.bca_interval(diff, level=level, resamples=resamples, seed=seed)
    except (EmbstatError, ValueError) as exc:
        return Comparison(unit.name, a, b, sa, sb, None, None, n, str(exc), selection)
    return Comparison(unit.name, a, b, sa, sb, iv, bootstrap.significance_verdict(iv), n,
                      None, selection)


def _top_pair(report: EvalReport, unit: UnitResult):
    ranked = [k for k in report.measures if k.rank_based and unit.measures[k].score is not None]
    plain = [k for k in report.measures if not k.rank_based and unit.measures[k].score is not None]
    if not ranked or not plain:
        return None
    best_r = max(ranked, key=lambda k: unit.measures[k].score)
    best_n = max(plain, key=lambda k: unit.measures[k].score)
    return best_r, best_n


def add_comparisons(report: EvalReport, pairs=(), *, top=False, level=0.95,
                    resamples=bootstrap.DEFAULT_RESAMPLES, seed=0) -> EvalReport:
    """Attach BCa comparisons for each ``(A, B)`` measure pair on every unit.

    With ``top=True`` also compare the best rank-based measure against the
    best non-rank measure (the V column), without any correction for the
    selection step.
    """
    for unit in report.units:
        for a, b in pairs:
            a, b = MeasureKind.parse(a), MeasureKind.parse(b)
            if a not in unit.measures or b not in unit.measures:
                continue
            report.comparisons.append(compare_measures(
                unit, a, b, report.criterion, level=level, resamples=resamples, seed=seed))
        if top:
            chosen = _top_pair(report, unit)
            if chosen:
                report.comparisons.append(compare_measures(
                    unit, chosen[0], chosen[1], report.criterion, level=level,
                    resamples=resamples, seed=seed, selection="top"))
    return report


def evaluate(task, table, kinds, **kw) -> EvalReport:
    if isinstance(task, WordSimTask):
        kw.pop("lowercase", None)
        return eval_wordsim(task, table, kinds, **kw)
    return eval_sts(task, table, kinds, **kw)


def sweep(tasks: Sequence, tables: Sequence[EmbeddingTable], kinds, *, pairs=(),
          top: bool = False, level: float = 0.95, resamples: int = bootstrap.DEFAULT_RESAMPLES,
          seed: int = 0, aps_params: ApsParams | None = None, alpha: float = 0.05,
          lowercase: bool = True, threads: int = 1) -> list[EvalReport]:
    """Evaluate every (table, task) cell and attach pairwise BCa verdicts.

    Cells are independent; a failing cell yields a report carrying ``error``
    instead of aborting the sweep. Output order is tables-major, then tasks.
    """
    kinds = _kinds(kinds)
    cells = [(table, task) for table in tables for task in tasks]

    def run(cell):
        table, task = cell
        try:
            rep = evaluate(task, table, kinds, aps_params=aps_params, alpha=alpha,
                           lowercase=lowercase)
            return add_comparisons(rep, pairs, top=top, level=level, resamples=resamples,
                                   seed=seed)
        except (EmbstatError, ValueError) as exc:
            logger.warning("cell %s/%s failed: %s", table.source_label, task.name, exc)
            kind = "wordsim" if isinstance(task, WordSimTask) else "sts"
            crit = "spearman" if kind == "wordsim" else "pearson"
            return EvalReport(task.name, kind, table.source_label, crit, kinds, [],
                              error=str(exc))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(run, cells))
    return [run(c) for c in cells]


def _fmt(v, digits):
    return "" if v is None else f"{100.0 * v:.{digits}f}"


def render_scores_csv(reports: Iterable[EvalReport]) -> str:
    """One row per report: embedding, task, N, V and each measure's score x100."""
    reports = list(reports)
    kinds = []
    for r in reports:
        for k in r.measures:
            if k not in kinds:
                kinds.append(k)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["embedding", "task", "N", "V"] + [k.label for k in kinds])
    for r in reports:
        n = "" if r.normality is None else f"{r.normality.proportion:.2f}"
        w.writerow([r.embedding, r.task, n, r.v_column or ""]
                   + [_fmt(r.score(k) if k in r.measures else None, 1) for k in kinds])
    return buf.getvalue()


def render_comparisons_csv(reports: Iterable[EvalReport]) -> str:
    """One row per comparison: scores and interval endpoints x100, plus the winner."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["embedding", "task", "unit", "measure_a", "measure_b", "score_a", "score_b",
                "lower", "upper", "winner"])
    for r in reports:
        for c in r.comparisons:
            iv = c.interval
            w.writerow([r.embedding, r.task, c.unit, c.measure_a.label, c.measure_b.label,
                        _fmt(c.score_a, 2), _fmt(c.score_b, 2),
                        _fmt(iv.lower if iv else None, 2), _fmt(iv.upper if iv else None, 2),
                        c.winner if c.verdict else (c.error or "")])
    return buf.getvalue()
