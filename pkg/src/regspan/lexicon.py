"""Object-span lexicon: normalization, aggregation and judgement-task export."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .corpus import tokenize
from .exceptions import EmptySpan, NotEnoughEligible
from .spans import SentenceAnnotation, SpanCategory

DETERMINERS = frozenset({"the", "a", "an"})
JUDGEMENT_CHOICES = ("exact match", "partial match", "not an object")


def _fold_plural(token: str) -> str:
    if len(token) <= 3 or token.endswith("ss") or not token.endswith("s"):
        return token
    return token[:-1]


def normalize_span(tokens: Iterable[str], plural_folding: bool = False) -> str:
    """Lowercase, drop leading determiners and optionally fold plurals.

    Leading determiners are stripped while at least one other token remains,
    which keeps the function idempotent on forms like "the a roof".
    Plural folding removes a final "s" unless the token ends in "ss" or has
    at most three characters.
    """
    words = [w.lower() for t in tokens for w in str(t).split()]
    if not words:
        raise EmptySpan("cannot normalize an empty span")
    while len(words) > 1 and words[0] in DETERMINERS:
        words = words[1:]
    if plural_folding:
        words = [_fold_plural(w) for w in words]
    return " ".join(words)


def normalize_text(text: str, plural_folding: bool = False) -> str:
    """Normalize a free-text term by tokenizing it first."""
    return normalize_span([t.surface for t in tokenize(text)], plural_folding)


def span_tokens(annotation: SentenceAnnotation, span) -> list:
    return [annotation.tokens[i].surface for s, e in span.segments for i in range(s, e)]


def span_surface(annotation: SentenceAnnotation, span) -> str:
    return " ".join(span_tokens(annotation, span))


@dataclass
class LexiconEntry:
    normalized_form: str
    surface_variants: Counter = field(default_factory=Counter)
    total_frequency: int = 0
    discontiguous_occurrence_count: int = 0
    occurrences: list = field(default_factory=list)   # (sentence_id, TokenSpan)

    def merge(self, other: "LexiconEntry") -> "LexiconEntry":
        return LexiconEntry(
            self.normalized_form,
            self.surface_variants + other.surface_variants,
            self.total_frequency + other.total_frequency,
            self.discontiguous_occurrence_count + other.discontiguous_occurrence_count,
            self.occurrences + other.occurrences,
        )


def _partial_lexicon(annotation, category, plural_folding):
    part = {}
    for span in annotation.spans:
        if span.category is not category:
            continue
        words = span_tokens(annotation, span)
        form = normalize_span(words, plural_folding)
        entry = part.setdefault(form, LexiconEntry(form))
        entry.surface_variants[" ".join(" ".join(words).split())] += 1
        entry.total_frequency += 1
        entry.discontiguous_occurrence_count += int(span.is_discontiguous)
        entry.occurrences.append((annotation.sentence_id, span))
    return part


def build_lexicon(corpus: Iterable[SentenceAnnotation], category=SpanCategory.OBJECT,
                  plural_folding: bool = False) -> list:
    """One entry per normalized form, most frequent first, then alphabetical."""
    category = SpanCategory.parse(category)
    merged = {}
    for annotation in corpus:
        for form, entry in _partial_lexicon(annotation, category, plural_folding).items():
            merged[form] = merged[form].merge(entry) if form in merged else entry
    return sorted(merged.values(), key=lambda e: (-e.total_frequency, e.normalized_form))


def _sorted_variants(entry):
    return sorted(entry.surface_variants.items(), key=lambda kv: (-kv[1], kv[0]))


def write_lexicon(entries: Iterable[LexiconEntry], path, config: dict | None = None) -> None:
    """Tab-separated lexicon with ``#`` header lines.

    Columns: normalized form, total frequency, discontiguous count,
    ``|``-joined variants, ``|``-joined variant frequencies.
    """
    lines = [
        "# regspan lexicon",
        "# surfaces: tokens joined by single spaces; whitespace runs collapsed",
        "# columns: normalized_form\ttotal_frequency\tdiscontiguous_count\tvariants\tvariant_frequencies",
    ]
    if config is not None:
        lines.append("# config: " + json.dumps(config, sort_keys=True, default=str))
    for e in entries:
        variants = _sorted_variants(e)
        lines.append("\t".join([
            e.normalized_form, str(e.total_frequency), str(e.discontiguous_occurrence_count),
            "|".join(v for v, _ in variants), "|".join(str(c) for _, c in variants),
        ]))
    Path(path).write_text("\n".join(lines) + "\n", "utf-8")


def read_lexicon(path) -> tuple:
    """Return ``(entries, config)``; occurrences are not stored in the file."""
    entries, config = [], {}
    for line in Path(path).read_text("utf-8").splitlines():
        if line.startswith("# config: "):
            config = json.loads(line[len("# config: "):])
            continue
        if not line.strip() or line.startswith("#"):
            continue
        cols = line.split("\t")
        if len(cols) < 4:
            raise ValueError(f"malformed lexicon line {line!r}")
        variants = cols[3].split("|") if cols[3] else []
        if len(cols) >= 5 and cols[4]:
            counts = [int(c) for c in cols[4].split("|")]
        else:
            counts = [0] * len(variants)
        entries.append(LexiconEntry(cols[0], Counter(dict(zip(variants, counts))),
                                    int(cols[1]), int(cols[2])))
    return entries, config


@dataclass(frozen=True)
class JudgementTask:
    task_id: str
    object_surface: str
    normalized_form: str
    sentence_id: str
    text: str
    offsets: tuple
    choices: tuple = JUDGEMENT_CHOICES

    def to_record(self) -> dict:
        return {
            "task_id": self.task_id,
            "sentence_id": self.sentence_id,
            "text": self.text,
            "object": self.object_surface,
            "normalized_form": self.normalized_form,
            "offsets": [list(o) for o in self.offsets],
            "label": [[s, e, "Object"] for s, e in self.offsets],
            "choices": list(self.choices),
        }


def sample_for_judgement(lexicon: Iterable[LexiconEntry], corpus: Iterable[SentenceAnnotation],
                         n: int, seed: int = 0, exclude_terms: Iterable[str] = (),
                         exclude_sentences: Iterable[str] = (),
                         plural_folding: bool = False) -> list:
    """Draw *n* distinct lexicon entries and one sentence context for each.

    Entries matching an excluded (defined) term are skipped, as are
    occurrences in excluded (gold) sentences; an entry left with no
    occurrence is ineligible.  All randomness comes from *seed*.
    """
    forms = [e.normalized_form for e in lexicon]
    wanted = set(forms)
    banned_forms = {normalize_text(t, plural_folding) for t in exclude_terms}
    banned_sents = set(exclude_sentences)
    by_id = {}
    occurrences = {f: [] for f in forms}
    for annotation in corpus:
        by_id[annotation.sentence_id] = annotation
        if annotation.sentence_id in banned_sents:
            continue
        for span in annotation.spans:
            if span.category is not SpanCategory.OBJECT:
                continue
            form = normalize_span(span_tokens(annotation, span), plural_folding)
            if form in wanted:
                occurrences[form].append((annotation.sentence_id, span))
    eligible = [f for f in forms if f not in banned_forms and occurrences[f]]
    if n > len(eligible):
        raise NotEnoughEligible(f"asked for {n} samples but only {len(eligible)} entries are eligible")
    rng = np.random.default_rng(seed)
    picks = []
    for k in rng.choice(len(eligible), size=n, replace=False):
        form = eligible[k]
        occ = occurrences[form]
        picks.append((form, occ[int(rng.integers(len(occ)))]))
    tasks = []
    for out_pos, k in enumerate(rng.permutation(n)):
        form, (sid, span) = picks[k]
        annotation = by_id[sid]
        offsets = tuple((annotation.tokens[s].char_start, annotation.tokens[e - 1].char_end)
                        for s, e in span.segments)
        tasks.append(JudgementTask(f"task-{out_pos + 1:04d}", span_surface(annotation, span),
                                   form, sid, annotation.sentence_text(), offsets))
    return tasks


def write_tasks(tasks: Iterable[JudgementTask], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for task in tasks:
            fh.write(json.dumps(task.to_record(), ensure_ascii=False) + "\n")
