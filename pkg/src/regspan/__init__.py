"""Shallow parsing of building-regulation text into possibly discontiguous spans."""

__version__ = "0.1.0"

from .corpus import (  # noqa: E402
    CorpusStats,
    RawDocument,
    align_char_spans,
    corpus_stats,
    load_brat_dir,
    load_corpus,
    parse_brat,
    serialize_brat,
    split_dataset,
    split_sentences,
    tokenize,
    vocab_growth,
)
from .crf import CrfModel, TrainConfig, load_model, save_model, train, viterbi_decode  # noqa: E402
from .estimator import CrfTagger, SpanTagEncoder  # noqa: E402
from .lexicon import (  # noqa: E402
    LexiconEntry,
    build_lexicon,
    normalize_span,
    sample_for_judgement,
)
from .metrics import (  # noqa: E402
    cohen_kappa,
    defined_term_coverage,
    sample_size,
    span_match_report,
    tag_classification_report,
)
from .spans import (  # noqa: E402
    DEFAULT_TAGSET,
    SentenceAnnotation,
    SpanCategory,
    TagLabel,
    TagSequence,
    TagsetConfig,
    Token,
    TokenSpan,
    decode_tags,
    encode_tags,
    lint_gold,
)

__all__ = [
    "__version__",
    "CorpusStats",
    "RawDocument",
    "align_char_spans",
    "corpus_stats",
    "load_brat_dir",
    "load_corpus",
    "parse_brat",
    "serialize_brat",
    "split_dataset",
    "split_sentences",
    "tokenize",
    "vocab_growth",
    "LexiconEntry",
    "build_lexicon",
    "normalize_span",
    "sample_for_judgement",
    "cohen_kappa",
    "defined_term_coverage",
    "sample_size",
    "span_match_report",
    "tag_classification_report",
    "CrfModel",
    "TrainConfig",
    "load_model",
    "save_model",
    "train",
    "viterbi_decode",
    "CrfTagger",
    "SpanTagEncoder",
    "DEFAULT_TAGSET",
    "SentenceAnnotation",
    "SpanCategory",
    "TagLabel",
    "TagSequence",
    "TagsetConfig",
    "Token",
    "TokenSpan",
    "decode_tags",
    "encode_tags",
    "lint_gold",
]
