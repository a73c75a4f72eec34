"""Linear-chain CRF: parameters, emission scores and exact inference.

Scores live in log space.  A label sequence ``y`` over a sentence of length
``T`` scores::

    trans[START, y0] + sum_t emit[t, y_t] + sum_t trans[y_{t-1}, y_t] + trans[y_{T-1}, STOP]

Transitions forbidden by the tagset mask are pinned to ``-inf`` and never
trained, so every decoded sequence is structurally valid.  An unconstrained
model (``constrained=False``) only forbids START directly followed by STOP;
its output may need repair when decoded into spans.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from ..exceptions import DimensionMismatch, EmptySentence, IllegalGoldSequence
from ..spans import DEFAULT_TAGSET, SentenceAnnotation, TagSequence, TagsetConfig
from .features import FeatureTemplateConfig, extract_features

DTYPE = np.float64


def open_mask(n_labels: int) -> np.ndarray:
    """Mask of an unconstrained model: everything but START -> STOP."""
    mask = np.ones((n_labels + 1, n_labels + 1), dtype=bool)
    mask[n_labels, n_labels] = False
    mask.setflags(write=False)
    return mask


def logsumexp(a: np.ndarray, axis=None) -> np.ndarray:
    """Log-sum-exp that returns ``-inf`` for all ``-inf`` slices without warnings."""
    a = np.asarray(a, dtype=DTYPE)
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True)) + m
    return out.squeeze(axis=axis) if axis is not None else out.reshape(())[()]


@dataclass
class CrfParams:
    """The trainable tables; also used to carry gradients."""

    emission: np.ndarray
    transition: np.ndarray
    projection: np.ndarray | None = None

    def arrays(self) -> list:
        return [a for a in (self.emission, self.transition, self.projection) if a is not None]

    def copy(self) -> "CrfParams":
        return CrfParams(self.emission.copy(), self.transition.copy(),
                         None if self.projection is None else self.projection.copy())


@dataclass(frozen=True, eq=False)
class CrfModel:
    tagset: TagsetConfig
    templates: FeatureTemplateConfig
    feature_index: dict
    emission: np.ndarray
    transition: np.ndarray
    projection: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)
    constrained: bool = True

    def __post_init__(self):
        n_labels = len(self.tagset)
        emission = np.array(self.emission, dtype=DTYPE)
        transition = np.array(self.transition, dtype=DTYPE)
        if emission.shape != (len(self.feature_index), n_labels):
            raise DimensionMismatch(
                f"emission table has shape {emission.shape}, expected "
                f"({len(self.feature_index)}, {n_labels})"
            )
        if transition.shape != (n_labels + 1, n_labels + 1):
            raise DimensionMismatch(f"transition table has shape {transition.shape}")
        if sorted(self.feature_index.values()) != list(range(len(self.feature_index))):
            raise ValueError("feature ids must be 0..F-1 with no repeats")
        allowed = self.trainable_transitions
        transition[~allowed] = -np.inf
        if not np.all(np.isfinite(emission)) or not np.all(np.isfinite(transition[allowed])):
            raise ValueError("model weights must be finite")
        arrays = [emission, transition]
        if self.projection is not None:
            projection = np.array(self.projection, dtype=DTYPE)
            if projection.ndim != 2 or projection.shape[1] != n_labels:
                raise DimensionMismatch(f"projection has shape {projection.shape}")
            object.__setattr__(self, "projection", projection)
            arrays.append(projection)
        for a in arrays:
            a.setflags(write=False)
        object.__setattr__(self, "emission", emission)
        object.__setattr__(self, "transition", transition)

    @classmethod
    def zeros(cls, tagset=DEFAULT_TAGSET, templates=None, features=(), projection_dim=None,
              metadata=None, constrained=True) -> "CrfModel":
        features = sorted(set(features))
        n = len(tagset)
        return cls(
            tagset,
            templates or FeatureTemplateConfig(),
            {f: i for i, f in enumerate(features)},
            np.zeros((len(features), n)),
            np.zeros((n + 1, n + 1)),
            None if projection_dim is None else np.zeros((projection_dim, n)),
            dict(metadata or {}),
            constrained,
        )

    @classmethod
    def random(cls, rng, tagset=DEFAULT_TAGSET, templates=None, features=(), projection_dim=None,
               scale=1.0, constrained=True) -> "CrfModel":
        """A model with normally distributed weights, for tests and fuzzing."""
        base = cls.zeros(tagset, templates, features, projection_dim, constrained=constrained)
        return base.with_params(CrfParams(
            rng.normal(0, scale, base.emission.shape),
            rng.normal(0, scale, base.transition.shape),
            None if projection_dim is None else rng.normal(0, scale, base.projection.shape),
        ))

    @property
    def labels(self) -> tuple:
        return self.tagset.labels

    @property
    def n_labels(self) -> int:
        return len(self.tagset)

    @property
    def projection_dim(self) -> int | None:
        return None if self.projection is None else self.projection.shape[0]

    @property
    def trainable_transitions(self) -> np.ndarray:
        return self.tagset.transition_mask if self.constrained else open_mask(len(self.tagset))

    def params(self) -> CrfParams:
        return CrfParams(self.emission.copy(), self.transition.copy(),
                         None if self.projection is None else self.projection.copy())

    def with_params(self, params: CrfParams, metadata=None) -> "CrfModel":
        return CrfModel(self.tagset, self.templates, self.feature_index, params.emission,
                        params.transition, params.projection,
                        dict(self.metadata if metadata is None else metadata), self.constrained)


class Featurized(NamedTuple):
    """Feature ids per token (unknown features dropped) plus optional vectors."""

    ids: tuple
    vectors: np.ndarray | None = None
    sentence_id: str | None = None


def _surfaces(sentence) -> tuple:
    if isinstance(sentence, SentenceAnnotation):
        return tuple(sentence.surfaces), sentence.sentence_id
    return tuple(getattr(t, "surface", t) for t in sentence), None


def featurize(model: CrfModel, sentence, vectors=None) -> Featurized:
    if isinstance(sentence, Featurized):
        return sentence if vectors is None else sentence._replace(vectors=vectors)
    words, sid = _surfaces(sentence)
    index = model.feature_index
    ids = tuple(
        np.array([index[f] for f in extract_features(words, i, model.templates) if f in index],
                 dtype=np.intp)
        for i in range(len(words))
    )
    return Featurized(ids, vectors, sid)


def emission_scores(model: CrfModel, sentence, vectors=None) -> np.ndarray:
    """``(T, L)`` table of per-token label scores."""
    fs = featurize(model, sentence, vectors)
    return _emissions(model.emission, model.projection, fs)


def _emissions(weights, projection, fs: Featurized) -> np.ndarray:
    T = len(fs.ids)
    scores = np.zeros((T, weights.shape[1]), dtype=DTYPE)
    for t, ids in enumerate(fs.ids):
        if len(ids):
            scores[t] = weights[ids].sum(axis=0)
    if fs.vectors is not None:
        vec = np.asarray(fs.vectors, dtype=DTYPE)
        if projection is None:
            raise DimensionMismatch("model has no projection for external vectors")
        if vec.shape != (T, projection.shape[0]):
            raise DimensionMismatch(
                f"vectors have shape {vec.shape}, expected ({T}, {projection.shape[0]})"
            )
        scores += vec @ projection
    elif projection is not None:
        raise DimensionMismatch("model expects external vectors of dimension "
                                f"{projection.shape[0]}")
    return scores


def _split_transitions(transition):
    n = transition.shape[0] - 1
    return transition[n, :n], transition[:n, :n], transition[:n, n]


def viterbi(emissions: np.ndarray, transition: np.ndarray) -> tuple:
    """Best label indices and their score; ties go to the lowest label index."""
    T = emissions.shape[0]
    if T == 0:
        raise EmptySentence("cannot decode an empty sentence")
    start, trans, stop = _split_transitions(transition)
    score = start + emissions[0]
    back = np.zeros((T, emissions.shape[1]), dtype=np.intp)
    cols = np.arange(emissions.shape[1])
    for t in range(1, T):
        cand = score[:, None] + trans
        back[t] = np.argmax(cand, axis=0)
        score = cand[back[t], cols] + emissions[t]
    final = score + stop
    best = int(np.argmax(final))
    path = [best]
    for t in range(T - 1, 0, -1):
        path.append(int(back[t, path[-1]]))
    path.reverse()
    return path, float(final[best])


def forward(emissions, transition) -> tuple:
    """Forward log-messages ``alpha`` (T, L) and the log partition."""
    T = emissions.shape[0]
    if T == 0:
        raise EmptySentence("empty sentence has no partition function")
    start, trans, stop = _split_transitions(transition)
    alpha = np.empty_like(emissions)
    alpha[0] = start + emissions[0]
    for t in range(1, T):
        alpha[t] = logsumexp(alpha[t - 1][:, None] + trans, axis=0) + emissions[t]
    return alpha, float(logsumexp(alpha[-1] + stop))


def backward(emissions, transition) -> np.ndarray:
    T = emissions.shape[0]
    _, trans, stop = _split_transitions(transition)
    beta = np.empty_like(emissions)
    beta[-1] = stop
    for t in range(T - 2, -1, -1):
        beta[t] = logsumexp(trans + (emissions[t + 1] + beta[t + 1])[None, :], axis=1)
    return beta


class Marginals(NamedTuple):
    log_z: float
    unary: np.ndarray      # (T, L)
    pairwise: np.ndarray   # (T-1, L, L), expected counts of label i at t-1 and j at t


def forward_backward(emissions, transition) -> Marginals:
    alpha, log_z = forward(emissions, transition)
    beta = backward(emissions, transition)
    _, trans, _ = _split_transitions(transition)
    unary = np.exp(alpha + beta - log_z)
    pairwise = np.exp(
        alpha[:-1, :, None] + trans[None] + (emissions[1:] + beta[1:])[:, None, :] - log_z
    )
    return Marginals(log_z, unary, pairwise)


def path_score(emissions, transition, path: Sequence[int]) -> float:
    start, trans, stop = _split_transitions(transition)
    path = np.asarray(path, dtype=np.intp)
    score = start[path[0]] + stop[path[-1]] + emissions[np.arange(len(path)), path].sum()
    if len(path) > 1:
        score += trans[path[:-1], path[1:]].sum()
    return float(score)


def viterbi_decode(model: CrfModel, sentence, vectors=None) -> tuple:
    """Highest-scoring legal :class:`TagSequence` for *sentence*, with its score."""
    fs = featurize(model, sentence, vectors)
    if len(fs.ids) == 0:
        raise EmptySentence("cannot decode an empty sentence")
    path, score = viterbi(_emissions(model.emission, model.projection, fs), model.transition)
    return TagSequence(fs.sentence_id, tuple(model.labels[i] for i in path)), score


def log_partition(model: CrfModel, sentence, vectors=None) -> float:
    fs = featurize(model, sentence, vectors)
    if len(fs.ids) == 0:
        raise EmptySentence("empty sentence has no partition function")
    return forward(_emissions(model.emission, model.projection, fs), model.transition)[1]


def gold_indices(model: CrfModel, gold) -> np.ndarray:
    labels = gold.labels if isinstance(gold, TagSequence) else gold
    try:
        idx = np.array([i if isinstance(i, (int, np.integer)) else model.tagset.index(i)
                        for i in labels], dtype=np.intp)
    except Exception as exc:
        raise IllegalGoldSequence(str(exc)) from None
    if len(idx) == 0 or not model.tagset.is_legal([model.labels[i] for i in idx]):
        raise IllegalGoldSequence(
            "gold sequence violates the transition mask: "
            + " ".join(str(model.labels[i]) for i in idx)
        )
    return idx


def nll_and_gradient(model: CrfModel, batch, l2_strength: float = 0.0) -> tuple:
    """Summed negative log-likelihood of *batch* and its gradient.

    *batch* holds ``(sentence, gold)`` pairs; ``sentence`` may be a token
    list, a :class:`SentenceAnnotation` or a :class:`Featurized`, and
    ``gold`` a :class:`TagSequence`, label names or label indices.  The L2
    term ``l2_strength * ||w||^2`` runs over every trainable weight.
    Forbidden transitions get zero gradient.
    """
    params = CrfParams(model.emission, model.transition, model.projection)
    items = [(featurize(model, s), gold_indices(model, g)) for s, g in batch]
    for fs, gold in items:
        if len(fs.ids) != len(gold):
            raise IllegalGoldSequence(
                f"gold has {len(gold)} labels for a {len(fs.ids)}-token sentence"
            )
    return _nll_and_gradient(params, model.trainable_transitions, items, l2_strength)


def _nll_and_gradient(params: CrfParams, mask, items, l2_strength) -> tuple:
    W, trans, P = params.emission, params.transition, params.projection
    gW = np.zeros_like(W)
    gT = np.zeros_like(trans)
    gP = None if P is None else np.zeros_like(P)
    n = trans.shape[0] - 1
    loss = 0.0
    for fs, gold in items:
        em = _emissions(W, P, fs)
        marg = forward_backward(em, trans)
        loss += marg.log_z - path_score(em, trans, gold)

        diff = marg.unary.copy()
        diff[np.arange(len(gold)), gold] -= 1.0
        lengths = [len(ids) for ids in fs.ids]
        if sum(lengths):
            rows = np.concatenate([ids for ids in fs.ids if len(ids)])
            np.add.at(gW, rows, np.repeat(diff, lengths, axis=0))
        if gP is not None:
            gP += np.asarray(fs.vectors, dtype=DTYPE).T @ diff

        gT[n, :n] += marg.unary[0]
        gT[n, gold[0]] -= 1.0
        gT[:n, n] += marg.unary[-1]
        gT[gold[-1], n] -= 1.0
        if len(gold) > 1:
            gT[:n, :n] += marg.pairwise.sum(axis=0)
            np.add.at(gT, (gold[:-1], gold[1:]), -1.0)

    if l2_strength:
        finite_T = np.where(mask, trans, 0.0)
        loss += l2_strength * (np.sum(W * W) + np.sum(finite_T * finite_T)
                               + (0.0 if P is None else np.sum(P * P)))
        gW += 2 * l2_strength * W
        gT += 2 * l2_strength * finite_T
        if gP is not None:
            gP += 2 * l2_strength * P
    gT[~mask] = 0.0
    return float(loss), CrfParams(gW, gT, gP)
