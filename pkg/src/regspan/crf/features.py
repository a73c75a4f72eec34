"""Feature templates for the CRF emission scores."""

from __future__ import annotations

from dataclasses import asdict, dataclass

from ..corpus import is_punctuation

BOS = "BOS"
EOS = "EOS"

ALL_TEMPLATES = (
    "bias",
    "w0",
    "window",
    "prefix",
    "suffix",
    "shape",
    "ispunct",
    "hasdigit",
    "bigram",
)
WORD_IDENTITY_TEMPLATES = ("bias", "w0", "window", "bigram")


@dataclass(frozen=True)
class FeatureTemplateConfig:
    """Which templates fire, and their sizes.

    ``window`` adds lowercased neighbours ``w-k``/``w+k`` for ``k <= window``;
    ``bigram`` adds ``w-1|w0`` and ``w0|w+1``.
    """

    templates: tuple = ALL_TEMPLATES
    window: int = 1
    affix_lengths: tuple = (1, 2, 3)

    def __post_init__(self):
        unknown = set(self.templates) - set(ALL_TEMPLATES)
        if unknown:
            raise ValueError(f"unknown feature templates {sorted(unknown)}")
        if self.window < 0:
            raise ValueError("window must be >= 0")
        object.__setattr__(self, "templates", tuple(self.templates))
        object.__setattr__(self, "affix_lengths", tuple(self.affix_lengths))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["templates"] = list(self.templates)
        d["affix_lengths"] = list(self.affix_lengths)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "FeatureTemplateConfig":
        return cls(tuple(data["templates"]), int(data["window"]), tuple(data["affix_lengths"]))


def word_shape(word: str) -> str:
    out = []
    for c in word:
        if c.isdigit():
            out.append("d")
        elif c.isalpha():
            out.append("X" if c.isupper() else "x")
        else:
            out.append(c)
    return "".join(out)


def _word(words, i):
    if i < 0:
        return BOS
    if i >= len(words):
        return EOS
    return words[i].lower()


def extract_features(tokens, position: int, config: FeatureTemplateConfig | None = None) -> list:
    """Feature strings for the token at *position*, e.g. ``"w0=roof"``."""
    config = config or FeatureTemplateConfig()
    words = [getattr(t, "surface", t) for t in tokens]
    if not 0 <= position < len(words):
        raise IndexError(f"position {position} outside a {len(words)}-token sentence")
    raw = words[position]
    w = raw.lower()
    on = set(config.templates)
    feats = []
    if "bias" in on:
        feats.append("bias")
    if "w0" in on:
        feats.append(f"w0={w}")
    if "window" in on:
        for k in range(1, config.window + 1):
            feats.append(f"w-{k}={_word(words, position - k)}")
            feats.append(f"w+{k}={_word(words, position + k)}")
    if "prefix" in on:
        feats.extend(f"pre{k}={w[:k]}" for k in config.affix_lengths if len(w) >= k)
    if "suffix" in on:
        feats.extend(f"suf{k}={w[-k:]}" for k in config.affix_lengths if len(w) >= k)
    if "shape" in on:
        feats.append(f"shape={word_shape(raw)}")
    if "ispunct" in on and is_punctuation(raw):
        feats.append("ispunct=1")
    if "hasdigit" in on and any(c.isdigit() for c in raw):
        feats.append("hasdigit=1")
    if "bigram" in on:
        feats.append(f"w-1|w0={_word(words, position - 1)}|{w}")
        feats.append(f"w0|w+1={w}|{_word(words, position + 1)}")
    return feats
