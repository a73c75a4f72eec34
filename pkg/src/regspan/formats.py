"""Tagged-output file formats.

Two-column format: one ``token<TAB>tag`` line per token, a blank line after
each sentence, and optional ``# sent_id = ...`` / ``# config: ...`` comment
lines.  Comment lines never contain a tab, token lines always do.

Span format (JSON lines): one record per sentence with ``sentence_id``,
``text``, ``tokens`` (``[surface, start, end]``), ``tags``, ``spans`` (category,
token ranges, character offsets, surface) and ``repairs``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .spans import (
    DEFAULT_TAGSET,
    REPAIR,
    SentenceAnnotation,
    TagLabel,
    TagSequence,
    Token,
    TokenSpan,
    decode_tags,
    encode_tags,
)


@dataclass(frozen=True)
class TaggedSentence:
    sentence_id: str | None
    tokens: tuple
    labels: tuple
    text: str | None = None

    @classmethod
    def from_annotation(cls, annotation: SentenceAnnotation, tags: TagSequence | None = None,
                        tagset=DEFAULT_TAGSET) -> "TaggedSentence":
        tags = tags if tags is not None else encode_tags(annotation, tagset)
        return cls(annotation.sentence_id, annotation.tokens, tags.labels, annotation.sentence_text())

    @property
    def tag_sequence(self) -> TagSequence:
        return TagSequence(self.sentence_id, self.labels)

    def annotation(self, tagset=DEFAULT_TAGSET, mode: str = REPAIR) -> tuple:
        """Decode the tags; returns ``(SentenceAnnotation, repairs)``."""
        decoded = decode_tags(self.tag_sequence, tagset, mode)
        return SentenceAnnotation(self.sentence_id, self.tokens, decoded.spans, self.text), decoded.repairs


def _tokens_from_surfaces(surfaces):
    tokens, pos = [], 0
    for s in surfaces:
        tokens.append(Token(s, pos, pos + len(s)))
        pos += len(s) + 1
    return tuple(tokens)


def write_two_column(sentences: Iterable[TaggedSentence], path, header: dict | None = None) -> None:
    lines = []
    if header is not None:
        lines.append("# config: " + json.dumps(header, sort_keys=True, default=str))
    for sent in sentences:
        if sent.sentence_id is not None:
            lines.append(f"# sent_id = {sent.sentence_id}")
        for tok, label in zip(sent.tokens, sent.labels):
            lines.append(f"{getattr(tok, 'surface', tok)}\t{label}")
        lines.append("")
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), "utf-8")


def read_two_column(path) -> list:
    out = []
    sid, surfaces, labels = None, [], []

    def flush():
        nonlocal sid, surfaces, labels
        if surfaces:
            out.append(TaggedSentence(sid, _tokens_from_surfaces(surfaces),
                                      tuple(TagLabel.parse(x) for x in labels)))
        sid, surfaces, labels = None, [], []

    for n, line in enumerate(Path(path).read_text("utf-8").splitlines(), 1):
        if not line.strip():
            flush()
        elif "\t" not in line:
            if line.startswith("# sent_id = "):
                flush()
                sid = line[len("# sent_id = "):].strip()
            elif not line.startswith("#"):
                raise ValueError(f"{path}:{n}: expected 'token<TAB>tag', got {line!r}")
        else:
            surface, label = line.rsplit("\t", 1)
            surfaces.append(surface)
            labels.append(label.strip())
    flush()
    return out


def span_record(annotation: SentenceAnnotation, tags: TagSequence, repairs=()) -> dict:
    text = annotation.sentence_text()
    spans = []
    for span in annotation.spans:
        chars = [(annotation.tokens[s].char_start, annotation.tokens[e - 1].char_end)
                 for s, e in span.segments]
        spans.append({
            "category": span.category.value,
            "head": list(span.head),
            "tail": None if span.tail is None else list(span.tail),
            "char_offsets": [list(c) for c in chars],
            "surface": " ".join(text[s:e] for s, e in chars),
        })
    return {
        "sentence_id": annotation.sentence_id,
        "text": text,
        "tokens": [[t.surface, t.char_start, t.char_end] for t in annotation.tokens],
        "tags": tags.names,
        "spans": spans,
        "repairs": list(repairs),
    }


def write_span_records(records: Iterable[dict], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def read_span_records(path) -> list:
    """Return :class:`TaggedSentence` objects; spans are re-derived from tags."""
    out = []
    for n, line in enumerate(Path(path).read_text("utf-8").splitlines(), 1):
        if not line.strip():
            continue
        rec = json.loads(line)
        tokens = tuple(Token(s, a, b) for s, a, b in rec["tokens"])
        out.append(TaggedSentence(rec.get("sentence_id"), tokens,
                                  tuple(TagLabel.parse(x) for x in rec["tags"]), rec.get("text")))
    return out


def read_span_annotations(path) -> list:
    """Sentence annotations using the spans stored in each record."""
    out = []
    for line in Path(path).read_text("utf-8").splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        sid = rec.get("sentence_id")
        tokens = tuple(Token(s, a, b) for s, a, b in rec["tokens"])
        spans = tuple(TokenSpan(sp["category"], tuple(sp["head"]),
                                None if sp["tail"] is None else tuple(sp["tail"]), sid)
                      for sp in rec["spans"])
        out.append(SentenceAnnotation(sid, tokens, spans, rec.get("text")))
    return out


def read_tagged(path) -> list:
    """Read either format, chosen by the ``.jsonl`` extension."""
    path = Path(path)
    if path.suffix in (".jsonl", ".json"):
        return read_span_records(path)
    return read_two_column(path)
