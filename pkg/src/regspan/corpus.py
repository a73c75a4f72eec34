"""Reading regulation text and BRAT standoff gold files.

Covers tokenization, rule-based sentence splitting, character-to-token
alignment, dataset splits with on-disk manifests and corpus statistics.
"""

from __future__ import annotations

import logging
import math
import re
import statistics
import unicodedata
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from nltk.tokenize import NLTKWordTokenizer

from .exceptions import (
    BoundaryMismatch,
    EmptyDataset,
    FragmentCountExceeded,
    InvalidSpan,
    MalformedLine,
    UnknownType,
)
from .spans import RawSpan, SentenceAnnotation, SpanCategory, Token, TokenSpan

logger = logging.getLogger(__name__)

SPLIT_NAMES = ("train", "dev", "test")


@dataclass(frozen=True)
class RawDocument:
    doc_id: str
    text: str

    def __post_init__(self):
        if not self.text or not self.text.strip():
            raise ValueError(f"document {self.doc_id!r} is empty")


# ---------------------------------------------------------------------------
# sentence splitting

@lru_cache(maxsize=None)
def default_abbreviations() -> frozenset:
    text = resources.files("regspan").joinpath("data/abbreviations.txt").read_text("utf-8")
    return load_abbreviations(text.splitlines())


def load_abbreviations(lines: Iterable[str]) -> frozenset:
    """Normalize an abbreviation list: lowercased, trailing period dropped."""
    out = set()
    for line in lines:
        line = line.strip()
        if line and not line.startswith("#"):
            out.add(line.lower().rstrip("."))
    return frozenset(out)


_BOUNDARY = re.compile(r"[.!?]+[\"')\]’”]*(?=\s+[\"'(\[‘“]?[A-Z0-9])")


def split_sentences(text: str, abbreviations: Iterable[str] | None = None) -> list:
    """Return ``(start, end)`` character ranges of the sentences in *text*.

    A sentence ends after ``.``, ``!`` or ``?`` (plus closing quotes or
    brackets) when whitespace and then an uppercase letter or digit follow,
    unless the word carrying the period is a known abbreviation.  Ranges are
    trimmed of surrounding whitespace.
    """
    abbrevs = default_abbreviations() if abbreviations is None else load_abbreviations(abbreviations)
    cuts = []
    for m in _BOUNDARY.finditer(text):
        word_start = max(text.rfind(" ", 0, m.start()), text.rfind("\n", 0, m.start()),
                         text.rfind("\t", 0, m.start())) + 1
        word = text[word_start:m.end()].rstrip("\"')]’”").lower().rstrip(".!?")
        if text[m.start()] == "." and word.lstrip("\"'([‘“") in abbrevs:
            continue
        cuts.append(m.end())
    ranges = []
    start = 0
    for cut in cuts + [len(text)]:
        piece = text[start:cut]
        stripped = piece.strip()
        if stripped:
            lead = len(piece) - len(piece.lstrip())
            ranges.append((start + lead, start + lead + len(stripped)))
        start = cut
    return ranges


# ---------------------------------------------------------------------------
# tokenization

_word_tokenizer = NLTKWordTokenizer()
_FALLBACK = re.compile(r"\w+(?:[-/.]\w+)*|[^\w\s]")


def tokenize(text: str) -> list:
    """Treebank-style word tokenization with character offsets into *text*.

    Every non-whitespace character ends up in exactly one token, so the
    source can be rebuilt from the surfaces and offsets.
    """
    try:
        spans = list(_word_tokenizer.span_tokenize(text))
    except (ValueError, LookupError):
        spans = [m.span() for m in _FALLBACK.finditer(text)]
    tokens = []
    pos = 0
    for start, end in sorted(spans):
        if start < pos or start >= end:
            continue
        _fill_gap(text, pos, start, tokens)
        tokens.append(Token(text[start:end], start, end))
        pos = end
    _fill_gap(text, pos, len(text), tokens)
    return tokens


def _fill_gap(text, lo, hi, tokens):
    # characters the tokenizer skipped become tokens of their own
    for m in re.finditer(r"\S+", text[lo:hi]):
        tokens.append(Token(m.group(), lo + m.start(), lo + m.end()))


def is_punctuation(surface: str) -> bool:
    return bool(surface) and all(unicodedata.category(c)[0] in "PS" for c in surface)


# ---------------------------------------------------------------------------
# BRAT standoff

def align_char_spans(tokens: Sequence[Token], fragments: Iterable, mode: str = "strict") -> list:
    """Map character fragments to the minimal covering token ranges.

    In ``strict`` mode a fragment edge that cuts through a token raises
    :class:`BoundaryMismatch`; ``snap`` widens the fragment to whole tokens.
    """
    if mode not in ("strict", "snap"):
        raise ValueError(f"unknown alignment mode {mode!r}")
    out = []
    for fs, fe in fragments:
        hit = [i for i, t in enumerate(tokens) if t.char_end > fs and t.char_start < fe]
        if not hit:
            raise BoundaryMismatch(f"fragment ({fs}, {fe}) covers no token")
        first, last = tokens[hit[0]], tokens[hit[-1]]
        if first.char_start < fs or last.char_end > fe:
            if mode == "strict":
                raise BoundaryMismatch(
                    f"fragment ({fs}, {fe}) cuts through token "
                    f"{(first if first.char_start < fs else last).surface!r}"
                )
            logger.warning("snapped fragment (%d, %d) to (%d, %d)",
                           fs, fe, first.char_start, last.char_end)
        out.append((hit[0], hit[-1] + 1))
    return out


@dataclass(frozen=True)
class BratEntity:
    ident: str
    type: str
    fragments: tuple
    surface: str


_T_LINE = re.compile(r"^(T\S+)\t(\S+) ([0-9 ;]+)\t?(.*)$")


def read_brat_entities(ann_text: str) -> list:
    """Parse the text-bound (``T``) lines of a standoff file.

    Other annotation kinds (relations, attributes, notes) are skipped.
    """
    entities = []
    for n, line in enumerate(ann_text.splitlines(), 1):
        if not line.strip() or not line.startswith("T"):
            continue
        m = _T_LINE.match(line)
        if m is None:
            raise MalformedLine(f"line {n}: cannot parse {line!r}", n)
        ident, etype, offsets, surface = m.groups()
        fragments = []
        for frag in offsets.split(";"):
            parts = frag.split()
            if len(parts) != 2:
                raise MalformedLine(f"line {n}: bad fragment {frag!r}", n)
            start, end = int(parts[0]), int(parts[1])
            if start > end:
                raise MalformedLine(f"line {n}: fragment {start} > {end}", n)
            fragments.append((start, end))
        entities.append(BratEntity(ident, etype, tuple(fragments), surface))
    return entities


def _sentence_ranges(txt_text, split):
    if split:
        return split_sentences(txt_text)
    stripped = txt_text.strip()
    lead = len(txt_text) - len(txt_text.lstrip())
    return [(lead, lead + len(stripped))] if stripped else []


def _sentence_of(ranges, fragments):
    for k, (s, e) in enumerate(ranges):
        if all(s <= fs and fe <= e for fs, fe in fragments):
            return k
    raise BoundaryMismatch(f"fragments {fragments} do not fall inside one sentence")


def _sentences(txt_text, sentence_id, split):
    ranges = _sentence_ranges(txt_text, split)
    out = []
    for k, (s, e) in enumerate(ranges):
        sid = sentence_id if len(ranges) == 1 and not split else f"{sentence_id}_s_{k}"
        text = txt_text[s:e]
        out.append((sid, s, text, tokenize(text)))
    return ranges, out


def parse_brat(ann_text: str, txt_text: str, sentence_id: str = "sentence",
               mode: str = "strict", split: bool = False) -> list:
    """Turn a standoff ``.ann``/``.txt`` pair into sentence annotations.

    By default the ``.txt`` holds a single sentence whose id is
    *sentence_id*; ``split=True`` runs the sentence splitter first and
    suffixes ids with ``_s_<k>``.
    """
    entities = read_brat_entities(ann_text)
    ranges, sentences = _sentences(txt_text, sentence_id, split)
    spans = [[] for _ in sentences]
    for ent in entities:
        try:
            category = SpanCategory.parse(ent.type)
        except ValueError:
            raise UnknownType(f"{ent.ident}: unknown span type {ent.type!r}") from None
        if len(ent.fragments) > 2:
            raise FragmentCountExceeded(
                f"{ent.ident}: {len(ent.fragments)} fragments, at most 2 allowed"
            )
        k = _sentence_of(ranges, ent.fragments)
        sid, offset, _, tokens = sentences[k]
        local = [(fs - offset, fe - offset) for fs, fe in ent.fragments]
        segments = align_char_spans(tokens, local, mode)
        try:
            spans[k].append(TokenSpan.from_segments(category, segments, sid))
        except InvalidSpan as exc:
            raise InvalidSpan(f"{ent.ident}: {exc}") from None
    return [
        SentenceAnnotation(sid, tokens, sorted(sp, key=lambda x: x.head), text)
        for (sid, _, text, tokens), sp in zip(sentences, spans)
    ]


def read_brat_raw(ann_text: str, txt_text: str, sentence_id: str = "sentence") -> SentenceAnnotation:
    """Lenient reader for linting: keeps bad types and extra fragments as-is."""
    _, sentences = _sentences(txt_text, sentence_id, False)
    sid, offset, text, tokens = sentences[0] if sentences else (sentence_id, 0, "", [])
    raw = []
    for ent in read_brat_entities(ann_text):
        local = [(fs - offset, fe - offset) for fs, fe in ent.fragments]
        segments = []
        for frag in local:
            try:
                segments.extend(align_char_spans(tokens, [frag], "snap"))
            except BoundaryMismatch:
                segments.append((0, 0))
        raw.append(RawSpan(ent.type, tuple(segments), ent.ident))
    return SentenceAnnotation(sid, tokens, raw, text)


def serialize_brat(annotation: SentenceAnnotation) -> tuple:
    """Return ``(ann_text, txt_text)`` for one sentence annotation."""
    text = annotation.sentence_text()
    lines = []
    for k, span in enumerate(annotation.spans, 1):
        frags = [(annotation.tokens[s].char_start, annotation.tokens[e - 1].char_end)
                 for s, e in span.segments]
        offsets = ";".join(f"{s} {e}" for s, e in frags)
        surface = " ".join(text[s:e] for s, e in frags)
        lines.append(f"T{k}\t{span.category.value} {offsets}\t{surface}")
    return "\n".join(lines) + ("\n" if lines else ""), text


def iter_brat_pairs(directory) -> list:
    """Sorted ``(sentence_id, txt_path, ann_path)`` triples in *directory*."""
    directory = Path(directory)
    out = []
    for txt in sorted(directory.glob("*.txt")):
        ann = txt.with_suffix(".ann")
        if ann.exists():
            out.append((txt.stem, txt, ann))
    return out


def load_brat_dir(directory, mode: str = "strict") -> list:
    out = []
    for sid, txt, ann in iter_brat_pairs(directory):
        out.extend(parse_brat(ann.read_text("utf-8"), txt.read_text("utf-8"), sid, mode))
    return out


def write_brat_dir(annotations: Iterable[SentenceAnnotation], directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for a in annotations:
        ann, txt = serialize_brat(a)
        (directory / f"{a.sentence_id}.txt").write_text(txt, "utf-8")
        (directory / f"{a.sentence_id}.ann").write_text(ann, "utf-8")


# ---------------------------------------------------------------------------
# dataset splits

def split_dataset(annotations: Sequence, ratios=(0.6, 0.2, 0.2), seed: int = 0) -> dict:
    """Seeded shuffle into train/dev/test.

    Dev and test sizes are ``floor(n * ratio)``; the remainder goes to train.
    """
    items = list(annotations)
    if not items:
        raise EmptyDataset("cannot split an empty dataset")
    if len(ratios) != 3 or any(r < 0 for r in ratios) or not math.isclose(sum(ratios), 1.0):
        raise ValueError(f"ratios must be three non-negative numbers summing to 1, got {ratios}")
    n = len(items)
    n_dev = math.floor(n * ratios[1] + 1e-9)
    n_test = math.floor(n * ratios[2] + 1e-9)
    n_train = n - n_dev - n_test
    order = np.random.default_rng(seed).permutation(n)
    picked = [items[i] for i in order]
    return {
        "train": picked[:n_train],
        "dev": picked[n_train:n_train + n_dev],
        "test": picked[n_train + n_dev:],
    }


def write_split_manifest(splits: dict, directory) -> None:
    """One file per split (``train.txt`` ...), one sentence id per line."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name in SPLIT_NAMES:
        ids = [getattr(a, "sentence_id", a) for a in splits.get(name, [])]
        (directory / f"{name}.txt").write_text("".join(f"{i}\n" for i in ids), "utf-8")


def read_split_manifest(directory) -> dict:
    directory = Path(directory)
    out = {}
    for name in SPLIT_NAMES:
        path = directory / f"{name}.txt"
        if path.exists():
            out[name] = [ln.strip() for ln in path.read_text("utf-8").splitlines() if ln.strip()]
    if not out:
        raise FileNotFoundError(f"no split manifest files in {directory}")
    return out


def apply_manifest(annotations: Iterable[SentenceAnnotation], manifest: dict) -> dict:
    by_id = {a.sentence_id: a for a in annotations}
    out = {}
    for name, ids in manifest.items():
        missing = [i for i in ids if i not in by_id]
        if missing:
            raise KeyError(f"{name} split lists unknown sentence ids {missing[:5]}")
        out[name] = [by_id[i] for i in ids]
    return out


# ---------------------------------------------------------------------------
# corpus statistics

@dataclass
class CorpusStats:
    token_count: int = 0
    vocabulary_size: int = 0
    sentence_count: int = 0
    mean_sentence_length: float = 0.0
    std_dev_sentence_length: float = 0.0
    token_filter: str = ""

    def to_dict(self) -> dict:
        return asdict(self)

    def to_text(self) -> str:
        return "".join(f"{k}\t{v}\n" for k, v in self.to_dict().items())


def _filter_label(exclude_punct):
    base = "vocabulary: distinct lowercased tokens"
    lengths = "sentence length: word tokens per sentence (population std dev)"
    if exclude_punct:
        return f"{base} excluding pure-punctuation tokens; {lengths} excluding punctuation"
    return f"{base}; {lengths}"


@dataclass
class _Partial:
    tokens: int = 0
    vocab: set = field(default_factory=set)
    lengths: list = field(default_factory=list)

    def merge(self, other: "_Partial") -> "_Partial":
        return _Partial(self.tokens + other.tokens, self.vocab | other.vocab,
                        self.lengths + other.lengths)


def _as_text(doc):
    return doc.text if isinstance(doc, RawDocument) else str(doc)


def iter_sentence_tokens(documents, abbreviations=None):
    """Yield the token list of every sentence, document by document."""
    for doc in documents:
        text = _as_text(doc)
        for s, e in split_sentences(text, abbreviations):
            yield tokenize(text[s:e])


def _document_partial(doc, exclude_punct, abbreviations):
    part = _Partial()
    for tokens in iter_sentence_tokens([doc], abbreviations):
        words = [t.surface for t in tokens if not (exclude_punct and is_punctuation(t.surface))]
        part.tokens += len(tokens)
        part.vocab.update(w.lower() for w in words)
        part.lengths.append(len(words))
    return part


def corpus_stats(documents: Iterable, exclude_punct: bool = True, abbreviations=None) -> CorpusStats:
    """Token, sentence and vocabulary counts over split and tokenized documents."""
    total = _Partial()
    for doc in documents:
        total = total.merge(_document_partial(doc, exclude_punct, abbreviations))
    lengths = total.lengths
    return CorpusStats(
        token_count=total.tokens,
        vocabulary_size=len(total.vocab),
        sentence_count=len(lengths),
        mean_sentence_length=statistics.fmean(lengths) if lengths else 0.0,
        std_dev_sentence_length=statistics.pstdev(lengths) if lengths else 0.0,
        token_filter=_filter_label(exclude_punct),
    )


def vocab_growth(documents: Iterable, step: int, exclude_punct: bool = True,
                 abbreviations=None) -> list:
    """``(tokens_seen, vocabulary_size)`` every *step* tokens, plus the final point.

    All tokens count towards ``tokens_seen``; the vocabulary uses the same
    filter as :func:`corpus_stats`.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    seen = 0
    vocab = set()
    series = []
    for tokens in iter_sentence_tokens(documents, abbreviations):
        for tok in tokens:
            seen += 1
            if not (exclude_punct and is_punctuation(tok.surface)):
                vocab.add(tok.surface.lower())
            if seen % step == 0:
                series.append((seen, len(vocab)))
    if seen and (not series or series[-1][0] != seen):
        series.append((seen, len(vocab)))
    return series


def load_corpus(path) -> list:
    """Read a text file, or every ``*.txt`` file of a directory, as documents."""
    path = Path(path)
    files = sorted(path.glob("*.txt")) if path.is_dir() else [path]
    docs = []
    for f in files:
        text = f.read_text("utf-8")
        if text.strip():
            docs.append(RawDocument(f.stem, text))
    return docs
