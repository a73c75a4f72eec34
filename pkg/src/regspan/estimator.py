"""scikit-learn style wrappers around the CRF and the span codec."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .crf import FeatureTemplateConfig, TrainConfig, train, viterbi_decode
from .crf.features import ALL_TEMPLATES
from .spans import (
    REPAIR,
    SentenceAnnotation,
    SpanCategory,
    TagSequence,
    TagsetConfig,
    decode_tags,
    encode_tags,
)
from .validation import check_sentences, check_tag_lists, check_tagged, check_vectors


def _tagset(allow_discontiguous):
    return TagsetConfig(frozenset(SpanCategory.parse(c) for c in allow_discontiguous))


class CrfTagger(BaseEstimator):
    """Linear-chain CRF tagger over BH/IH/BD/ID labels.

    ``fit(X, y)`` takes tokenized sentences and one label list per sentence;
    ``predict(X)`` returns label names.  Hyperparameters mirror
    :class:`regspan.crf.TrainConfig` and :class:`FeatureTemplateConfig`.
    """

    def __init__(self, epochs=30, learning_rate=0.1, l2_strength=1e-4, batch_size=8, seed=0,
                 gradient_clip=None, feature_dropout=0.0, optimizer="sgd",
                 templates=ALL_TEMPLATES, window=1, allow_discontiguous=("Object", "Action"),
                 n_jobs=1, constrained=True):
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.l2_strength = l2_strength
        self.batch_size = batch_size
        self.seed = seed
        self.gradient_clip = gradient_clip
        self.feature_dropout = feature_dropout
        self.optimizer = optimizer
        self.templates = templates
        self.window = window
        self.allow_discontiguous = allow_discontiguous
        self.n_jobs = n_jobs
        self.constrained = constrained

    def _train_config(self):
        return TrainConfig(
            epochs=self.epochs, learning_rate=self.learning_rate, l2_strength=self.l2_strength,
            batch_size=self.batch_size, seed=self.seed, gradient_clip=self.gradient_clip,
            feature_dropout=self.feature_dropout, optimizer=self.optimizer, n_jobs=self.n_jobs,
            constrained=self.constrained,
        )

    def fit(self, X, y, X_dev=None, y_dev=None, vectors=None, dev_vectors=None):
        X, y = check_tagged(X, y)
        dev = []
        if X_dev is not None:
            X_dev, y_dev = check_tagged(X_dev, y_dev)
            dev = list(zip(X_dev, y_dev))
        vectors = check_vectors(vectors, X)
        dev_vectors = check_vectors(dev_vectors, X_dev or [],
                                    None if vectors is None else vectors[0].shape[1])
        result = train(
            list(zip(X, y)), dev, self._train_config(),
            FeatureTemplateConfig(tuple(self.templates), self.window),
            _tagset(self.allow_discontiguous), vectors, dev_vectors,
        )
        self.model_ = result.model
        self.history_ = result.history
        self.best_epoch_ = result.best_epoch
        self.classes_ = np.array(self.model_.tagset.label_names)
        return self

    @classmethod
    def from_model(cls, model) -> "CrfTagger":
        """Wrap an already trained :class:`~regspan.crf.CrfModel`."""
        tagger = cls(allow_discontiguous=tuple(sorted(c.value for c in model.tagset.allow_discontiguous)),
                     templates=model.templates.templates, window=model.templates.window,
                     constrained=model.constrained)
        tagger.model_ = model
        tagger.history_ = []
        tagger.best_epoch_ = model.metadata.get("best_epoch", 0)
        tagger.classes_ = np.array(model.tagset.label_names)
        return tagger

    def predict_sequences(self, X, vectors=None) -> list:
        check_is_fitted(self, "model_")
        if isinstance(X, str):
            raise TypeError("expected a sequence of tokenized sentences, got a string")
        X = list(X)
        ids = [getattr(s, "sentence_id", None) for s in X]
        X = check_sentences(X)
        vectors = check_vectors(vectors, X, self.model_.projection_dim)
        out = []
        for k, words in enumerate(X):
            seq, _ = viterbi_decode(self.model_, words, None if vectors is None else vectors[k])
            out.append(TagSequence(ids[k], seq.labels))
        return out

    def predict(self, X, vectors=None) -> list:
        return [seq.names for seq in self.predict_sequences(X, vectors)]

    def predict_spans(self, X, vectors=None, mode=REPAIR) -> list:
        """Decoded spans (with repair logs) for each sentence."""
        return [decode_tags(seq, self.model_.tagset, mode)
                for seq in self.predict_sequences(X, vectors)]

    def score(self, X, y, vectors=None) -> float:
        """Token accuracy."""
        y = check_tag_lists(y)
        pred = self.predict(X, vectors)
        total = sum(len(t) for t in y)
        hits = sum(a == b for g, p in zip(y, pred) for a, b in zip(g, p))
        return hits / total if total else 0.0


class SpanTagEncoder(TransformerMixin, BaseEstimator):
    """Sentence annotations to label lists and back."""

    def __init__(self, allow_discontiguous=("Object", "Action"), decode_mode="strict"):
        self.allow_discontiguous = allow_discontiguous
        self.decode_mode = decode_mode

    def fit(self, X=None, y=None):
        self.tagset_ = _tagset(self.allow_discontiguous)
        self.classes_ = np.array(self.tagset_.label_names)
        return self

    def transform(self, X) -> list:
        check_is_fitted(self, "tagset_")
        out = []
        for a in X:
            if not isinstance(a, SentenceAnnotation):
                raise TypeError("SpanTagEncoder.transform expects SentenceAnnotation objects")
            out.append(encode_tags(a, self.tagset_).names)
        return out

    def inverse_transform(self, y) -> list:
        check_is_fitted(self, "tagset_")
        return [decode_tags(seq, self.tagset_, self.decode_mode).spans for seq in y]
