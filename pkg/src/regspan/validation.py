"""Input checks for the estimator API."""

from __future__ import annotations

import numpy as np

from .spans import SentenceAnnotation, TagSequence


def check_sentences(X, allow_empty: bool = False) -> list:
    """Coerce *X* to a list of token-surface lists.

    Accepts sentence annotations, lists of :class:`~regspan.spans.Token` and
    lists of strings.  A bare string is rejected because it is almost always
    an untokenized sentence.
    """
    if isinstance(X, (str, bytes)):
        raise TypeError("expected a sequence of tokenized sentences, got a string")
    out = []
    for k, sent in enumerate(X):
        if isinstance(sent, SentenceAnnotation):
            words = sent.surfaces
        elif isinstance(sent, (str, bytes)):
            raise TypeError(f"sentence {k} is a string; tokenize it first")
        else:
            words = [getattr(t, "surface", t) for t in sent]
        if not all(isinstance(w, str) for w in words):
            raise TypeError(f"sentence {k} contains non-string tokens")
        if not words and not allow_empty:
            raise ValueError(f"sentence {k} is empty")
        out.append(words)
    return out


def check_tag_lists(y) -> list:
    out = []
    for seq in y:
        labels = seq.labels if isinstance(seq, TagSequence) else seq
        out.append([str(label) for label in labels])
    return out


def check_tagged(X, y) -> tuple:
    X = check_sentences(X)
    y = check_tag_lists(y)
    if len(X) != len(y):
        raise ValueError(f"{len(X)} sentences but {len(y)} tag sequences")
    for k, (words, tags) in enumerate(zip(X, y)):
        if len(words) != len(tags):
            raise ValueError(f"sentence {k}: {len(words)} tokens but {len(tags)} tags")
    return X, y


def check_vectors(vectors, X, dim=None):
    if vectors is None:
        return None
    if len(vectors) != len(X):
        raise ValueError(f"{len(vectors)} vector blocks for {len(X)} sentences")
    out = []
    for k, (v, words) in enumerate(zip(vectors, X)):
        v = np.asarray(v, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] != len(words):
            raise ValueError(f"sentence {k}: vectors must have shape ({len(words)}, D)")
        if dim is not None and v.shape[1] != dim:
            raise ValueError(f"sentence {k}: vector dimension {v.shape[1]}, expected {dim}")
        dim = v.shape[1]
        out.append(v)
    return out
