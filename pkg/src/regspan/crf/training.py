"""Mini-batch maximum-likelihood training with best-on-dev checkpointing."""

from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .. import __version__
from ..metrics import tag_classification_report
from ..spans import DEFAULT_TAGSET, SentenceAnnotation, encode_tags
from .features import FeatureTemplateConfig, extract_features
from .model import (
    CrfModel,
    CrfParams,
    Featurized,
    _emissions,
    _nll_and_gradient,
    featurize,
    forward,
    gold_indices,
    path_score,
    viterbi,
)

logger = logging.getLogger(__name__)

OPTIMIZERS = ("sgd", "adam")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    learning_rate: float = 0.1
    l2_strength: float = 1e-4
    batch_size: int = 8
    seed: int = 0
    gradient_clip: float | None = None
    feature_dropout: float = 0.0
    optimizer: str = "sgd"
    n_jobs: int = 1
    constrained: bool = True

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.l2_strength < 0:
            raise ValueError("l2_strength must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0 <= self.feature_dropout < 1:
            raise ValueError("feature_dropout must lie in [0, 1)")
        if self.gradient_clip is not None and not self.gradient_clip > 0:
            raise ValueError("gradient_clip must be > 0")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}")

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_nll: float
    dev_weighted_f1: float | None
    dev_accuracy: float | None


@dataclass
class TrainResult:
    model: CrfModel
    history: list = field(default_factory=list)
    best_epoch: int = 0


def _as_example(item, tagset):
    if isinstance(item, SentenceAnnotation):
        return item.surfaces, encode_tags(item, tagset).labels
    words, labels = item
    return [getattr(w, "surface", w) for w in words], list(labels)


def _collect_features(sentences, templates):
    feats = set()
    for words in sentences:
        for i in range(len(words)):
            feats.update(extract_features(words, i, templates))
    return feats


def _drop_features(fs: Featurized, rate, rng) -> Featurized:
    if not rate:
        return fs
    ids = tuple(ids[rng.random(len(ids)) >= rate] for ids in fs.ids)
    return fs._replace(ids=ids)


def _decode_all(params, featurized):
    return [viterbi(_emissions(params.emission, params.projection, fs), params.transition)[0]
            for fs in featurized]


class _Adam:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(a) for a in params.arrays()]
        self.v = [np.zeros_like(a) for a in params.arrays()]
        self.t = 0

    def step(self, params, grad):
        self.t += 1
        for a, g, m, v in zip(params.arrays(), grad.arrays(), self.m, self.v):
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            m_hat = m / (1 - self.b1 ** self.t)
            v_hat = v / (1 - self.b2 ** self.t)
            a -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def _sgd_step(params, grad, lr):
    for a, g in zip(params.arrays(), grad.arrays()):
        a -= lr * g


def _batch_gradient(params, mask, items, l2, n_jobs):
    if n_jobs == 1 or len(items) == 1:
        return _nll_and_gradient(params, mask, items, l2)
    # per-sentence gradients are summed in input order, so the result does
    # not depend on thread scheduling
    with ThreadPoolExecutor(max_workers=n_jobs) as pool:
        parts = list(pool.map(lambda it: _nll_and_gradient(params, mask, [it], 0.0), items))
    loss = sum(p[0] for p in parts)
    grad = parts[0][1]
    for _, g in parts[1:]:
        for a, b in zip(grad.arrays(), g.arrays()):
            a += b
    if l2:
        l2_loss, l2_grad = _nll_and_gradient(params, mask, [], l2)
        loss += l2_loss
        for a, b in zip(grad.arrays(), l2_grad.arrays()):
            a += b
    return loss, grad


def train(train_set, dev_set=(), config: TrainConfig | None = None,
          templates: FeatureTemplateConfig | None = None, tagset=DEFAULT_TAGSET,
          train_vectors=None, dev_vectors=None) -> TrainResult:
    """Fit a CRF by mini-batch gradient descent on the summed NLL.

    Examples are :class:`SentenceAnnotation` objects or ``(tokens, labels)``
    pairs.  Each batch step uses the batch gradient divided by the batch
    size.  The returned model is the epoch with the best dev weighted F1
    (the last epoch when there is no dev set).  Optional ``*_vectors`` give
    one ``(T, D)`` array per sentence and switch on a trained projection.
    """
    config = config or TrainConfig()
    templates = templates or FeatureTemplateConfig()
    train_ex = [_as_example(x, tagset) for x in train_set]
    dev_ex = [_as_example(x, tagset) for x in dev_set]
    if not train_ex:
        raise ValueError("training set is empty")
    projection_dim = None
    if train_vectors is not None:
        projection_dim = np.asarray(train_vectors[0]).shape[1]

    base = CrfModel.zeros(tagset, templates, _collect_features([w for w, _ in train_ex], templates),
                          projection_dim, constrained=config.constrained)
    mask = base.trainable_transitions
    train_fs = [featurize(base, w, None if train_vectors is None else train_vectors[k])
                for k, (w, _) in enumerate(train_ex)]
    train_gold = [gold_indices(base, g) for _, g in train_ex]
    dev_fs = [featurize(base, w, None if dev_vectors is None else dev_vectors[k])
              for k, (w, _) in enumerate(dev_ex)]
    dev_gold = [[str(tagset.labels[i]) for i in gold_indices(base, g)] for _, g in dev_ex]

    rng = np.random.default_rng(config.seed)
    params = base.params()
    adam = _Adam(params, config.learning_rate) if config.optimizer == "adam" else None
    history = []
    best = (None, -np.inf, 0)   # params, dev f1, epoch

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(train_fs))
        for lo in range(0, len(order), config.batch_size):
            idx = order[lo:lo + config.batch_size]
            items = [(_drop_features(train_fs[i], config.feature_dropout, rng), train_gold[i])
                     for i in idx]
            _, grad = _batch_gradient(params, mask, items, config.l2_strength, config.n_jobs)
            for a in grad.arrays():
                a /= len(idx)
            if config.gradient_clip is not None:
                norm = np.sqrt(sum(float(np.sum(a * a)) for a in grad.arrays()))
                if norm > config.gradient_clip:
                    for a in grad.arrays():
                        a *= config.gradient_clip / norm
            if adam is not None:
                adam.step(params, grad)
            else:
                _sgd_step(params, grad, config.learning_rate)

        train_nll = 0.0
        for fs, gold in zip(train_fs, train_gold):
            em = _emissions(params.emission, params.projection, fs)
            train_nll += forward(em, params.transition)[1] - path_score(em, params.transition, gold)
        dev_f1 = dev_acc = None
        if dev_fs:
            pred = [[str(tagset.labels[i]) for i in path] for path in _decode_all(params, dev_fs)]
            report = tag_classification_report(dev_gold, pred, tagset)
            dev_f1, dev_acc = report.weighted.f1, report.accuracy
        history.append(EpochRecord(epoch, float(train_nll), dev_f1, dev_acc))
        logger.info("epoch %d: train nll %.4f dev f1 %s", epoch, train_nll, dev_f1)
        score = dev_f1 if dev_f1 is not None else 0.0
        if not dev_fs or score > best[1]:
            best = (params.copy(), score, epoch)

    best_params, _, best_epoch = best
    metadata = {
        "seed": config.seed,
        "train_config": config.to_dict(),
        "config_hash": config.digest(),
        "version": __version__,
        "best_epoch": best_epoch,
        "epochs_run": config.epochs,
        "n_train": len(train_ex),
        "n_dev": len(dev_ex),
    }
    return TrainResult(base.with_params(best_params, metadata), history, best_epoch)


__all__ = ["TrainConfig", "EpochRecord", "TrainResult", "train", "CrfParams"]
