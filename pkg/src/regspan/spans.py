"""Span and tag types, the BH/IH/BD/ID codec and the gold-annotation linter.

A span covers one contiguous *head* segment of tokens and optionally a second
*tail* segment further right in the sentence (a discontiguous multi-word
expression).  Every token of a sentence belongs to exactly one span, so a
sentence can be written as one tag per token::

    a      paved  (       or      equivalent  )       footpath
    BH-obj IH-obj BH-dis  BH-dis  BH-func     BH-dis  BD-obj

Head tokens are tagged ``BH``/``IH``, tail tokens ``BD``/``ID``.  A tail is
attached to the most recently opened head of the same category that has no
tail yet, which is unambiguous as long as no other head of that category
starts between a span's head and its tail.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .exceptions import (
    AdjacentTail,
    DanglingContinuation,
    DoubleTail,
    IllegalDiscontiguity,
    InterleavingError,
    InvalidSpan,
    LengthMismatch,
    OrphanTail,
    OverlapError,
    UncoveredToken,
    UnknownLabel,
)

logger = logging.getLogger(__name__)

STRICT = "strict"
REPAIR = "repair"


class SpanCategory(str, enum.Enum):
    """The four span types.  Definition order is the canonical label order."""

    OBJECT = "Object"
    ACTION = "Action"
    DISCOURSE = "Discourse"
    FUNCTIONAL = "Functional"

    @property
    def short(self) -> str:
        return _SHORT_NAMES[self]

    @classmethod
    def parse(cls, name: str) -> "SpanCategory":
        """Case-insensitive lookup by full name ("object") or tag suffix ("obj")."""
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower()
        try:
            return _CATEGORY_LOOKUP[key]
        except KeyError:
            raise ValueError(f"unknown span category {name!r}") from None

    def __str__(self) -> str:
        return self.value


_SHORT_NAMES = {
    SpanCategory.OBJECT: "obj",
    SpanCategory.ACTION: "act",
    SpanCategory.DISCOURSE: "dis",
    SpanCategory.FUNCTIONAL: "func",
}
_CATEGORY_LOOKUP = {}
for _c in SpanCategory:
    _CATEGORY_LOOKUP[_c.value.lower()] = _c
    _CATEGORY_LOOKUP[_SHORT_NAMES[_c]] = _c


class Position(str, enum.Enum):
    BH = "BH"
    IH = "IH"
    BD = "BD"
    ID = "ID"

    @property
    def is_begin(self) -> bool:
        return self in (Position.BH, Position.BD)

    @property
    def is_tail(self) -> bool:
        return self in (Position.BD, Position.ID)


@dataclass(frozen=True, order=False)
class TagLabel:
    position: Position
    category: SpanCategory

    def __str__(self) -> str:
        return f"{self.position.value}-{self.category.short}"

    @classmethod
    def parse(cls, text) -> "TagLabel":
        if isinstance(text, cls):
            return text
        try:
            pos, cat = str(text).strip().split("-", 1)
            return cls(Position(pos.upper()), SpanCategory.parse(cat))
        except ValueError:
            raise UnknownLabel(f"cannot parse tag label {text!r}") from None


@dataclass(frozen=True)
class TagsetConfig:
    """Which categories may carry BD/ID labels, plus the derived label set.

    The default allows discontiguous spans for Object and Action only, giving
    12 labels.  ``TagsetConfig.extended()`` enables all four categories (16).
    """

    allow_discontiguous: frozenset = frozenset({SpanCategory.OBJECT, SpanCategory.ACTION})

    def __post_init__(self):
        cats = frozenset(SpanCategory.parse(c) for c in self.allow_discontiguous)
        object.__setattr__(self, "allow_discontiguous", cats)

    @classmethod
    def extended(cls) -> "TagsetConfig":
        return cls(frozenset(SpanCategory))

    def allows_tail(self, category: SpanCategory) -> bool:
        return category in self.allow_discontiguous

    @cached_property
    def labels(self) -> tuple:
        out = []
        for cat in SpanCategory:
            out.append(TagLabel(Position.BH, cat))
            out.append(TagLabel(Position.IH, cat))
            if self.allows_tail(cat):
                out.append(TagLabel(Position.BD, cat))
                out.append(TagLabel(Position.ID, cat))
        return tuple(out)

    @cached_property
    def label_names(self) -> tuple:
        return tuple(str(label) for label in self.labels)

    @cached_property
    def _index(self) -> dict:
        return {label: i for i, label in enumerate(self.labels)}

    def __len__(self) -> int:
        return len(self.labels)

    def index(self, label) -> int:
        label = TagLabel.parse(label)
        try:
            return self._index[label]
        except KeyError:
            raise UnknownLabel(f"{label} is not part of this tagset") from None

    @property
    def start(self) -> int:
        """Row index of the virtual start state in the transition mask."""
        return len(self.labels)

    @property
    def stop(self) -> int:
        """Column index of the virtual stop state in the transition mask."""
        return len(self.labels)

    @cached_property
    def transition_mask(self) -> np.ndarray:
        """Boolean ``(L+1, L+1)`` table; rows are labels + START, columns labels + STOP."""
        n = len(self.labels)
        mask = np.zeros((n + 1, n + 1), dtype=bool)
        for j, label in enumerate(self.labels):
            for i, prev in enumerate(self.labels):
                mask[i, j] = _may_follow(prev, label)
            mask[self.start, j] = label.position.is_begin
            mask[j, self.stop] = True
        mask.setflags(write=False)
        return mask

    def is_legal(self, labels: Sequence) -> bool:
        """True iff the sequence uses tagset labels and passes the transition mask."""
        try:
            idx = [self.index(label) for label in labels]
        except UnknownLabel:
            return False
        if not idx:
            return False
        mask = self.transition_mask
        prev = self.start
        for i in idx:
            if not mask[prev, i]:
                return False
            prev = i
        return bool(mask[prev, self.stop])

    def to_dict(self) -> dict:
        return {"allow_discontiguous": sorted(c.value for c in self.allow_discontiguous)}

    @classmethod
    def from_dict(cls, data: dict) -> "TagsetConfig":
        return cls(frozenset(SpanCategory.parse(c) for c in data["allow_discontiguous"]))


def _may_follow(prev: TagLabel, label: TagLabel) -> bool:
    if label.position is Position.IH:
        return prev.category is label.category and prev.position in (Position.BH, Position.IH)
    if label.position is Position.ID:
        return prev.category is label.category and prev.position in (Position.BD, Position.ID)
    return True


DEFAULT_TAGSET = TagsetConfig()


@dataclass(frozen=True)
class Token:
    surface: str
    char_start: int
    char_end: int

    def __post_init__(self):
        if not self.char_start < self.char_end:
            raise ValueError(f"token {self.surface!r} has empty offsets")


@dataclass(frozen=True)
class TokenSpan:
    """A span over token indices; ranges are half-open ``(start, end)`` pairs."""

    category: SpanCategory
    head: tuple
    tail: tuple | None = None
    sentence_id: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "category", SpanCategory.parse(self.category))
        head = tuple(int(x) for x in self.head)
        object.__setattr__(self, "head", head)
        if len(head) != 2 or head[0] < 0 or head[0] >= head[1]:
            raise InvalidSpan(f"head segment {head} must be a non-empty range")
        if self.tail is not None:
            tail = tuple(int(x) for x in self.tail)
            object.__setattr__(self, "tail", tail)
            if len(tail) != 2 or tail[0] >= tail[1]:
                raise InvalidSpan(f"tail segment {tail} must be a non-empty range")
            if not head[1] < tail[0]:
                raise InvalidSpan(
                    f"tail {tail} must start strictly after head {head} ends; "
                    "touching segments form one contiguous span"
                )

    @classmethod
    def from_segments(cls, category, segments: Iterable, sentence_id=None) -> "TokenSpan":
        """Build a span from up to two ranges, merging ranges that touch."""
        segs = sorted(tuple(s) for s in segments)
        if not segs:
            raise InvalidSpan("a span needs at least one segment")
        merged = [list(segs[0])]
        for start, end in segs[1:]:
            if start < merged[-1][1]:
                raise InvalidSpan(f"segments {segs} overlap")
            if start == merged[-1][1]:
                logger.warning("merging touching segments %s of a %s span", segs, category)
                merged[-1][1] = end
            else:
                merged.append([start, end])
        if len(merged) > 2:
            raise InvalidSpan(f"a span has at most two segments, got {len(merged)}")
        tail = tuple(merged[1]) if len(merged) == 2 else None
        return cls(category, tuple(merged[0]), tail, sentence_id)

    @property
    def segments(self) -> tuple:
        return (self.head,) if self.tail is None else (self.head, self.tail)

    @property
    def is_discontiguous(self) -> bool:
        return self.tail is not None

    @property
    def indices(self) -> frozenset:
        return frozenset(i for s, e in self.segments for i in range(s, e))

    def __len__(self) -> int:
        return sum(e - s for s, e in self.segments)

    @property
    def key(self) -> tuple:
        """Identity used for span-set comparison: category plus token indices."""
        return (self.category, self.indices)


@dataclass(frozen=True)
class RawSpan:
    """An unvalidated span as read from an annotation file, for linting."""

    category: str
    segments: tuple
    ident: str | None = None


@dataclass(frozen=True)
class SentenceAnnotation:
    sentence_id: str
    tokens: tuple
    spans: tuple = ()
    text: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "spans", tuple(self.spans))

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def surfaces(self) -> list:
        return [t.surface for t in self.tokens]

    def sentence_text(self) -> str:
        """The source text, rebuilt from token offsets when not stored."""
        if self.text is not None:
            return self.text
        out = []
        pos = 0
        for tok in self.tokens:
            out.append(" " * (tok.char_start - pos))
            out.append(tok.surface)
            pos = tok.char_end
        return "".join(out)

    def span_set(self) -> set:
        return {span.key for span in self.spans}

    def validate(self) -> "SentenceAnnotation":
        """Raise unless the spans partition the token indices."""
        owner = _assign_tokens(self.spans, len(self.tokens))
        missing = [i for i, o in enumerate(owner) if o is None]
        if missing:
            raise UncoveredToken(f"{self.sentence_id}: tokens {missing} are not in any span")
        return self

    def with_spans(self, spans) -> "SentenceAnnotation":
        return SentenceAnnotation(self.sentence_id, self.tokens, tuple(spans), self.text)


@dataclass(frozen=True)
class TagSequence:
    sentence_id: str | None
    labels: tuple

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(TagLabel.parse(x) for x in self.labels))

    def __len__(self) -> int:
        return len(self.labels)

    def __iter__(self):
        return iter(self.labels)

    @property
    def names(self) -> list:
        return [str(x) for x in self.labels]


class Decoded(NamedTuple):
    spans: tuple
    repairs: tuple


def _assign_tokens(spans, n_tokens) -> list:
    owner = [None] * n_tokens
    for k, span in enumerate(spans):
        for start, end in span.segments:
            if start < 0 or end > n_tokens:
                raise LengthMismatch(
                    f"segment ({start}, {end}) lies outside a {n_tokens}-token sentence"
                )
            for i in range(start, end):
                if owner[i] is not None:
                    raise OverlapError(f"token {i} belongs to two spans")
                owner[i] = k
    return owner


def _interleaving_conflict(spans) -> tuple | None:
    for span in spans:
        if span.tail is None:
            continue
        lo, hi = span.head[0], span.tail[0]
        for other in spans:
            if other is span or other.category is not span.category:
                continue
            if lo < other.head[0] < hi:
                return span, other
    return None


def encode_tags(annotation: SentenceAnnotation, tagset: TagsetConfig = DEFAULT_TAGSET) -> TagSequence:
    """Write the annotation's spans as one BH/IH/BD/ID label per token."""
    spans = annotation.spans
    for span in spans:
        if not isinstance(span, TokenSpan):
            raise InvalidSpan(f"cannot encode unvalidated span {span!r}")
    owner = _assign_tokens(spans, len(annotation.tokens))
    missing = [i for i, o in enumerate(owner) if o is None]
    if missing:
        raise UncoveredToken(f"{annotation.sentence_id}: tokens {missing} are not in any span")
    for span in spans:
        if span.tail is not None and not tagset.allows_tail(span.category):
            raise IllegalDiscontiguity(
                f"{span.category} spans may not be discontiguous under this tagset"
            )
    conflict = _interleaving_conflict(spans)
    if conflict is not None:
        span, other = conflict
        raise InterleavingError(
            f"{other.category} head at token {other.head[0]} lies between head "
            f"{span.head} and tail {span.tail} of a span of the same category"
        )

    labels = [None] * len(annotation.tokens)
    for span in spans:
        for seg, (begin, inside) in zip(
            span.segments, ((Position.BH, Position.IH), (Position.BD, Position.ID))
        ):
            start, end = seg
            labels[start] = TagLabel(begin, span.category)
            for i in range(start + 1, end):
                labels[i] = TagLabel(inside, span.category)
    return TagSequence(annotation.sentence_id, tuple(labels))


def decode_tags(tags, tagset: TagsetConfig = DEFAULT_TAGSET, mode: str = STRICT) -> Decoded:
    """Rebuild spans from a tag sequence by a single left-to-right scan.

    ``mode="strict"`` raises a :class:`~regspan.exceptions.DecodeError` on the
    first malformed label.  ``mode="repair"`` applies local fixes instead and
    reports them in ``Decoded.repairs``:

    * IH-x without a BH-x/IH-x predecessor becomes BH-x;
    * ID-x without a BD-x/ID-x predecessor becomes BH-x;
    * BD-x with no open x-head, or whose candidate heads all have tails, becomes BH-x;
    * BD-x directly after the head it belongs to extends that head.
    """
    if mode not in (STRICT, REPAIR):
        raise ValueError(f"mode must be {STRICT!r} or {REPAIR!r}, got {mode!r}")
    if isinstance(tags, TagSequence):
        sentence_id, labels = tags.sentence_id, tags.labels
    else:
        sentence_id, labels = None, tuple(TagLabel.parse(x) for x in tags)
    for label in labels:
        tagset.index(label)

    strict = mode == STRICT
    repairs = []
    # each builder is [category, head_start, head_end, tail_start, tail_end]
    builders = []
    open_heads = {cat: [] for cat in SpanCategory}
    prev_label = None
    prev_segment = None  # (builder, 1 for head / 3 for tail)

    def fail(exc_type, message, i):
        raise exc_type(f"{message} at token {i}", position=i)

    def open_head(cat, i):
        b = [cat, i, i + 1, None, None]
        builders.append(b)
        open_heads[cat].append(b)
        return (b, 1)

    for i, label in enumerate(labels):
        cat, pos = label.category, label.position
        continues = (
            prev_label is not None
            and prev_label.category is cat
            and prev_label.position.is_tail == pos.is_tail
        )
        if pos is Position.BH:
            segment = open_head(cat, i)
        elif pos in (Position.IH, Position.ID):
            if continues:
                b, slot = prev_segment
                b[slot + 1] = i + 1
                segment = prev_segment
            else:
                if strict:
                    fail(DanglingContinuation, f"{label} has no matching predecessor", i)
                repairs.append(f"{pos.value}→BH at {i}")
                segment = open_head(cat, i)
        else:  # BD
            candidates = [b for b in open_heads[cat] if b[3] is None]
            if not candidates:
                if strict:
                    if open_heads[cat]:
                        fail(DoubleTail, f"{label} finds only heads that already have tails", i)
                    fail(OrphanTail, f"{label} has no open head", i)
                repairs.append(f"BD→BH at {i}")
                segment = open_head(cat, i)
            else:
                b = candidates[-1]
                if b[2] == i:
                    if strict:
                        fail(AdjacentTail, f"{label} touches the end of its head", i)
                    repairs.append(f"BD→IH at {i}")
                    b[2] = i + 1
                    segment = (b, 1)
                else:
                    b[3], b[4] = i, i + 1
                    segment = (b, 3)
        prev_label, prev_segment = label, segment

    spans = tuple(
        TokenSpan(b[0], (b[1], b[2]), None if b[3] is None else (b[3], b[4]), sentence_id)
        for b in builders
    )
    return Decoded(spans, tuple(repairs))


@dataclass(frozen=True)
class Violation:
    rule: str
    start: int
    end: int
    message: str
    span_id: str | None = field(default=None, compare=False)

    def __str__(self) -> str:
        where = f"[{self.start},{self.end})"
        ident = f" ({self.span_id})" if self.span_id else ""
        return f"{self.rule} {where}{ident}: {self.message}"


def lint_gold(annotation: SentenceAnnotation, tagset: TagsetConfig = DEFAULT_TAGSET) -> list:
    """Check a raw annotation against the annotation guidelines.

    Works on :class:`RawSpan` as well as :class:`TokenSpan` entries, so files
    that could not be turned into valid spans can still be reported on.
    Returns a list of :class:`Violation`; an empty list means the annotation
    can be encoded.
    """
    n = len(annotation.tokens)
    found = []
    usable = []
    for span in annotation.spans:
        ident = getattr(span, "ident", None)
        segs = [tuple(s) for s in span.segments]
        try:
            cat = SpanCategory.parse(span.category)
        except ValueError:
            lo = min((s for s, _ in segs), default=0)
            hi = max((e for _, e in segs), default=0)
            found.append(Violation("unknown-category", lo, hi, f"unknown type {span.category!r}", ident))
            cat = None
        good = []
        for s, e in segs:
            if s >= e:
                found.append(Violation("empty-segment", s, e, "segment covers no tokens", ident))
            elif s < 0 or e > n:
                found.append(Violation("out-of-range", s, e, f"sentence has {n} tokens", ident))
            else:
                good.append((s, e))
        if len(segs) > 2:
            found.append(Violation(
                "max-two-parts", min(s for s, _ in segs), max(e for _, e in segs),
                f"span has {len(segs)} parts; at most two are allowed", ident,
            ))
        good.sort()
        if cat is not None and len(good) >= 2 and not tagset.allows_tail(cat):
            found.append(Violation(
                "illegal-discontiguity", good[0][0], good[-1][1],
                f"{cat.value} spans may not be discontiguous", ident,
            ))
        usable.append((cat, good, ident))

    covered = [[] for _ in range(n)]
    for k, (_, good, _) in enumerate(usable):
        for s, e in good:
            for i in range(s, e):
                covered[i].append(k)
    for i, owners in enumerate(covered):
        if not owners:
            found.append(Violation("uncovered-token", i, i + 1,
                                   f"token {annotation.tokens[i].surface!r} is in no span"))
    pairs = {}
    for i, owners in enumerate(covered):
        for a in range(len(owners)):
            for b in range(a + 1, len(owners)):
                pairs.setdefault((owners[a], owners[b]), []).append(i)
    for (a, b), idx in sorted(pairs.items()):
        ids = ", ".join(x for x in (usable[a][2], usable[b][2]) if x)
        found.append(Violation("overlapping-spans", min(idx), max(idx) + 1,
                               f"spans share tokens {idx}", ids or None))

    for cat, good, ident in usable:
        if cat is None or len(good) < 2:
            continue
        lo, hi = good[0][0], good[1][0]
        for other_cat, other, other_id in usable:
            if other_cat is cat and other and other is not good and lo < other[0][0] < hi:
                found.append(Violation(
                    "same-category-interleaving", other[0][0], other[0][1],
                    f"{cat.value} head between the head and tail of another {cat.value} span",
                    ident,
                ))
    return found
