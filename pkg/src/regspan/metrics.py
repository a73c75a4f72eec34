"""Evaluation: per-tag reports, span matching, kappa, term coverage, sample sizes."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

from .exceptions import AlignmentError, EmptyInput, InvalidArgument, LengthMismatch
from .spans import DEFAULT_TAGSET, SpanCategory, TagLabel, TagSequence, TagsetConfig

Z_VALUES = {0.90: 1.645, 0.95: 1.960, 0.99: 2.576}


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f1: float
    support: int = 0


@dataclass(frozen=True)
class TagReport:
    rows: dict          # label name -> PRF, in tagset order
    accuracy: float
    macro: PRF
    weighted: PRF
    total_support: int

    def to_dict(self) -> dict:
        return {
            "rows": {k: asdict(v) for k, v in self.rows.items()},
            "accuracy": self.accuracy,
            "macro": asdict(self.macro),
            "weighted": asdict(self.weighted),
            "total_support": self.total_support,
        }


def _label_names(seq):
    labels = seq.labels if isinstance(seq, TagSequence) else seq
    return [str(TagLabel.parse(x)) for x in labels]


def _f1(p, r):
    return 0.0 if p + r == 0 else 2 * p * r / (p + r)


def tag_classification_report(gold: Sequence, pred: Sequence,
                              tagset: TagsetConfig = DEFAULT_TAGSET) -> TagReport:
    """Token-level precision/recall/F1 per label over aligned sentences.

    Macro averages run over labels that occur in *gold*; a label that is never
    predicted has precision 0.
    """
    if len(gold) != len(pred):
        raise AlignmentError(f"{len(gold)} gold vs {len(pred)} predicted sentences")
    tp, n_gold, n_pred = Counter(), Counter(), Counter()
    correct = total = 0
    for k, (g, p) in enumerate(zip(gold, pred)):
        g, p = _label_names(g), _label_names(p)
        if len(g) != len(p):
            raise AlignmentError(f"sentence {k}: {len(g)} gold vs {len(p)} predicted tags")
        for a, b in zip(g, p):
            n_gold[a] += 1
            n_pred[b] += 1
            if a == b:
                tp[a] += 1
                correct += 1
        total += len(g)
    names = list(tagset.label_names)
    names += sorted((set(n_gold) | set(n_pred)) - set(names))
    rows = {}
    for name in names:
        p = tp[name] / n_pred[name] if n_pred[name] else 0.0
        r = tp[name] / n_gold[name] if n_gold[name] else 0.0
        rows[name] = PRF(p, r, _f1(p, r), n_gold[name])
    present = [rows[n] for n in names if n_gold[n]]
    if present:
        macro = PRF(*(sum(getattr(x, a) for x in present) / len(present)
                      for a in ("precision", "recall", "f1")), total)
        weighted = PRF(*(sum(getattr(x, a) * x.support for x in present) / total
                         for a in ("precision", "recall", "f1")), total)
    else:
        macro = weighted = PRF(0.0, 0.0, 0.0, 0)
    return TagReport(rows, correct / total if total else 0.0, macro, weighted, total)


# ---------------------------------------------------------------------------
# span matching

@dataclass
class SpanCounts:
    exact: int = 0
    partial: int = 0
    missed: int = 0
    spurious: int = 0


@dataclass
class SpanMatchReport:
    exact: int = 0
    partial: int = 0
    missed: int = 0
    spurious: int = 0
    per_category: dict = field(default_factory=dict)
    pairs: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "exact": self.exact, "partial": self.partial,
            "missed": self.missed, "spurious": self.spurious,
            "per_category": {str(k): asdict(v) for k, v in self.per_category.items()},
        }


def _group(spans):
    out = {}
    for s in spans:
        out.setdefault(s.sentence_id, []).append(s)
    return out


def span_match_report(gold_spans: Iterable, pred_spans: Iterable) -> SpanMatchReport:
    """Greedy one-to-one matching of spans within each sentence.

    Exact pairs (same category and token set) are taken first; remaining
    same-category pairs are then matched by largest overlap, ties going to the
    earliest gold span and then the earliest prediction.
    """
    gold_by, pred_by = _group(gold_spans), _group(pred_spans)
    report = SpanMatchReport()
    cats = report.per_category

    def bump(cat, kind):
        counts = cats.setdefault(cat, SpanCounts())
        setattr(counts, kind, getattr(counts, kind) + 1)
        setattr(report, kind, getattr(report, kind) + 1)

    for sid in list(gold_by) + [s for s in pred_by if s not in gold_by]:
        gold = sorted(gold_by.get(sid, []), key=lambda s: (min(s.indices), s.category.value))
        pred = sorted(pred_by.get(sid, []), key=lambda s: (min(s.indices), s.category.value))
        free_g = set(range(len(gold)))
        free_p = set(range(len(pred)))
        for i, g in enumerate(gold):
            for j in sorted(free_p):
                if pred[j].key == g.key:
                    free_g.discard(i)
                    free_p.discard(j)
                    report.pairs.append((g, pred[j], "exact"))
                    bump(g.category, "exact")
                    break
        candidates = []
        for i in free_g:
            for j in free_p:
                if gold[i].category is pred[j].category:
                    overlap = len(gold[i].indices & pred[j].indices)
                    if overlap:
                        candidates.append((-overlap, i, j))
        for _, i, j in sorted(candidates):
            if i in free_g and j in free_p:
                free_g.discard(i)
                free_p.discard(j)
                report.pairs.append((gold[i], pred[j], "partial"))
                bump(gold[i].category, "partial")
        for i in sorted(free_g):
            bump(gold[i].category, "missed")
        for j in sorted(free_p):
            bump(pred[j].category, "spurious")
    return report


# ---------------------------------------------------------------------------
# agreement

def cohen_kappa(labels_a: Sequence, labels_b: Sequence) -> float:
    """Chance-corrected agreement between two raters over the same units."""
    if len(labels_a) != len(labels_b):
        raise LengthMismatch(f"{len(labels_a)} vs {len(labels_b)} labels")
    n = len(labels_a)
    if n == 0:
        raise EmptyInput("kappa needs at least one unit")
    p_o = sum(a == b for a, b in zip(labels_a, labels_b)) / n
    ca, cb = Counter(labels_a), Counter(labels_b)
    p_e = sum(ca[k] * cb[k] for k in ca) / (n * n)
    if p_e == 1.0:
        return 1.0
    return (p_o - p_e) / (1.0 - p_e)


# ---------------------------------------------------------------------------
# defined-term coverage

@dataclass
class CoverageReport:
    found: list          # (term, matching normalized form)
    missing: list        # (term, nearest predicted forms)
    total: int

    @property
    def missing_terms(self) -> list:
        return [t for t, _ in self.missing]

    @property
    def coverage(self) -> float:
        return len(self.found) / self.total if self.total else 0.0

    def to_dict(self) -> dict:
        return {"found": [list(x) for x in self.found],
                "missing": [[t, list(c)] for t, c in self.missing], "total": self.total,
                "coverage": self.coverage}


def _lcs(a, b):
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def defined_term_coverage(defined_terms: Sequence[str], predicted: Iterable,
                          plural_folding: bool = True, n_candidates: int = 5) -> CoverageReport:
    """Which defined terms appear among the predicted Object forms.

    Terms are tokenized, predictions (space-joined token strings or lexicon
    entries) are split on whitespace; both are then normalized the same way.
    Missing terms list the predicted forms sharing the longest common token
    subsequence.
    """
    from .lexicon import normalize_span, normalize_text

    forms = {}
    for p in predicted:
        surface = getattr(p, "normalized_form", p)
        form = normalize_span(surface.split(), plural_folding)
        forms[form] = forms.get(form, 0) + getattr(p, "total_frequency", 1)
    token_forms = {f: f.split() for f in forms}
    found, missing = [], []
    for term in defined_terms:
        norm = normalize_text(term, plural_folding)
        if norm in forms:
            found.append((term, norm))
            continue
        toks = norm.split()
        scored = [(_lcs(toks, t), f) for f, t in token_forms.items()]
        best = max((s for s, _ in scored), default=0)
        near = sorted((f for s, f in scored if s == best and s > 0),
                      key=lambda f: (-forms[f], f))
        missing.append((term, near[:n_candidates]))
    return CoverageReport(found, missing, len(defined_terms))


# ---------------------------------------------------------------------------
# judgement sample size

def sample_size(population: int, confidence: float = 0.99, margin: float = 0.10) -> int:
    """Worst-case (p = 0.5) sample size with finite-population correction."""
    if population < 1:
        raise InvalidArgument("population must be at least 1")
    if not 0 < margin < 1:
        raise InvalidArgument("margin must lie strictly between 0 and 1")
    z = next((v for k, v in Z_VALUES.items() if math.isclose(k, confidence)), None)
    if z is None:
        raise InvalidArgument(f"confidence must be one of {sorted(Z_VALUES)}")
    n0 = z * z * 0.25 / (margin * margin)
    n = math.ceil(n0 / (1 + (n0 - 1) / population))
    return min(n, population)


# ---------------------------------------------------------------------------
# rendering

def _pct(x, decimal):
    return f"{100 * x:.2f}".replace(".", decimal)


def _count(n, decimal):
    return f"{n:,}".replace(",", "." if decimal == "," else ",")


def render_tag_report(report: TagReport, decimal: str = ",") -> str:
    """Plain-text table: one row per label, then accuracy, macro and weighted."""
    head = f"{'':<14}{'P':>8}{'R':>8}{'F1':>8}{'support':>9}"
    lines = [head, "-" * len(head)]
    prev_cat = None
    for name, row in report.rows.items():
        cat = name.split("-", 1)[1]
        if prev_cat is not None and cat != prev_cat:
            lines.append("")
        prev_cat = cat
        lines.append(f"{name:<14}{_pct(row.precision, decimal):>8}{_pct(row.recall, decimal):>8}"
                     f"{_pct(row.f1, decimal):>8}{_count(row.support, decimal):>9}")
    lines.append("")
    total = _count(report.total_support, decimal)
    lines.append(f"{'accuracy':<14}{'':>8}{'':>8}{_pct(report.accuracy, decimal):>8}{total:>9}")
    for name, avg in (("macro avg.", report.macro), ("weighted avg.", report.weighted)):
        lines.append(f"{name:<14}{_pct(avg.precision, decimal):>8}{_pct(avg.recall, decimal):>8}"
                     f"{_pct(avg.f1, decimal):>8}{total:>9}")
    return "\n".join(lines) + "\n"


def render_overview(results: dict, decimal: str = ",") -> str:
    """Weighted P/R/F1 per (split, system) pair, e.g. ``{("dev", "crf"): report}``."""
    lines = [f"{'':<14}{'':<12}{'P':>8}{'R':>8}{'F1':>8}"]
    for (split, system), rep in results.items():
        w = rep.weighted
        lines.append(f"{split:<14}{system:<12}{_pct(w.precision, decimal):>8}"
                     f"{_pct(w.recall, decimal):>8}{_pct(w.f1, decimal):>8}")
    return "\n".join(lines) + "\n"


def render_span_report(report: SpanMatchReport) -> str:
    lines = [f"{'category':<12}{'exact':>8}{'partial':>9}{'missed':>8}{'spurious':>10}"]
    for cat in SpanCategory:
        c = report.per_category.get(cat)
        if c is not None:
            lines.append(f"{cat.value:<12}{c.exact:>8}{c.partial:>9}{c.missed:>8}{c.spurious:>10}")
    lines.append(f"{'total':<12}{report.exact:>8}{report.partial:>9}{report.missed:>8}"
                 f"{report.spurious:>10}")
    return "\n".join(lines) + "\n"


def render_coverage(report: CoverageReport, decimal: str = ",") -> str:
    n_found = len(report.found)
    lines = [
        f"found {n_found} of {report.total} defined terms ({_pct(report.coverage, decimal)}%)",
        "",
        f"{'Undetected defined terms':<55}What we extracted",
    ]
    for term, near in report.missing:
        shown = ", ".join(f"'{f}'" for f in near) if near else "-"
        lines.append(f"{term:<55}{shown}")
    return "\n".join(lines) + "\n"
