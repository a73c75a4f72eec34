import io
import json
import math

import numpy as np
import pytest

from _support import brute_force, legal_index_table, legal_sequence, synthetic_corpus
from regspan.crf import (
    CrfModel,
    FeatureTemplateConfig,
    TrainConfig,
    emission_scores,
    extract_features,
    forward_backward,
    load_model,
    log_partition,
    nll_and_gradient,
    save_model,
    train,
    viterbi_decode,
)
from regspan.crf.features import WORD_IDENTITY_TEMPLATES, word_shape
from regspan.crf.model import CrfParams, featurize, logsumexp, path_score, viterbi
from regspan.crf.persistence import FORMAT_VERSION
from regspan.exceptions import (
    CorruptModel,
    DimensionMismatch,
    EmptySentence,
    IllegalGoldSequence,
    VersionMismatch,
)
from regspan.spans import DEFAULT_TAGSET, TagsetConfig, encode_tags

NAMES = DEFAULT_TAGSET.label_names
SENT = ["The", "roof", "covering", "must", "be", "900mm", "wide", "."]


def all_features(words, templates=None):
    return {f for i in range(len(words)) for f in extract_features(words, i, templates)}


def random_model(rng, words, scale=1.0, projection_dim=None, tagset=DEFAULT_TAGSET):
    return CrfModel.random(rng, tagset, features=all_features(words),
                           projection_dim=projection_dim, scale=scale)


# ---------------------------------------------------------------- features

def test_features_at_sentence_start():
    feats = extract_features(["roof", "covering"], 0)
    assert {"w0=roof", "w+1=covering", "w-1=BOS", "bias"} <= set(feats)


def test_features_shape_and_digit():
    feats = extract_features(["900mm"], 0)
    assert "shape=dddxx" in feats and "hasdigit=1" in feats and "w+1=EOS" in feats


def test_features_punctuation():
    assert "ispunct=1" in extract_features(["("], 0)


def test_features_affixes_and_bigrams():
    feats = extract_features(["walls", "of"], 1)
    assert {"suf2=of", "pre1=o", "w-1|w0=walls|of", "w0|w+1=of|EOS"} <= set(feats)
    assert "suf3=of" not in feats


def test_word_shape():
    assert word_shape("Xy-9") == "Xx-d"


def test_template_config_round_trip():
    cfg = FeatureTemplateConfig(WORD_IDENTITY_TEMPLATES, window=2)
    assert FeatureTemplateConfig.from_dict(cfg.to_dict()) == cfg


# ---------------------------------------------------------------- emissions

def test_zero_model_has_zero_scores():
    model = CrfModel.zeros(features=all_features(SENT))
    assert not emission_scores(model, SENT).any()


def test_single_active_feature_is_additive():
    model = CrfModel.zeros(features=["w0=roof"])
    p = model.params()
    p.emission[0, 3] = 2.5
    scores = emission_scores(model.with_params(p), ["a", "roof"])
    expected = np.zeros((2, 12))
    expected[1, 3] = 2.5
    assert np.array_equal(scores, expected)


def test_emissions_are_deterministic():
    model = random_model(np.random.default_rng(0), SENT)
    assert np.array_equal(emission_scores(model, SENT), emission_scores(model, SENT))


def test_projection_adds_vector_scores():
    rng = np.random.default_rng(1)
    model = random_model(rng, SENT, projection_dim=3)
    vec = rng.normal(size=(len(SENT), 3))
    base = model.with_params(CrfParams(model.emission, model.transition.copy(),
                                       np.zeros_like(model.projection)))
    delta = emission_scores(model, SENT, vec) - emission_scores(base, SENT, vec)
    assert np.allclose(delta, vec @ model.projection, atol=1e-12)
    with pytest.raises(DimensionMismatch):
        emission_scores(model, SENT, rng.normal(size=(len(SENT), 4)))
    with pytest.raises(DimensionMismatch):
        emission_scores(model, SENT)


def test_model_is_immutable_and_masked():
    model = random_model(np.random.default_rng(2), SENT)
    mask = DEFAULT_TAGSET.transition_mask
    assert np.all(np.isneginf(model.transition[~mask]))
    assert np.all(np.isfinite(model.transition[mask]))
    with pytest.raises(ValueError):
        model.emission[0, 0] = 1.0


def test_model_rejects_non_finite_weights():
    model = CrfModel.zeros(features=["bias"])
    p = model.params()
    p.emission[0, 0] = np.nan
    with pytest.raises(ValueError):
        model.with_params(p)


# ---------------------------------------------------------------- inference

def test_logsumexp_handles_all_negative_infinity():
    assert logsumexp(np.array([-np.inf, -np.inf])) == -np.inf
    assert math.isclose(float(logsumexp(np.array([0.0, 0.0]))), math.log(2))


def test_single_token_prefers_bh_dis():
    model = CrfModel.zeros(features=["w0=."])
    p = model.params()
    p.emission[0, DEFAULT_TAGSET.index("BH-dis")] = 3.0
    seq, _ = viterbi_decode(model.with_params(p), ["."])
    assert seq.names == ["BH-dis"]


def test_empty_sentence_rejected():
    model = CrfModel.zeros()
    with pytest.raises(EmptySentence):
        viterbi_decode(model, [])
    with pytest.raises(EmptySentence):
        log_partition(model, [])


@pytest.mark.parametrize("length", [1, 2, 3, 4, 5])
def test_zero_model_partition_counts_legal_sequences(length):
    words = ["w"] * length
    model = CrfModel.zeros(features=all_features(words))
    n_legal = len(legal_index_table(NAMES, length))
    assert math.isclose(log_partition(model, words), math.log(n_legal), rel_tol=1e-12)
    loss, _ = nll_and_gradient(model, [(words, ["BH-obj"] * length)])
    assert math.isclose(loss, math.log(n_legal), rel_tol=1e-12)


def test_viterbi_and_partition_match_brute_force():
    rng = np.random.default_rng(11)
    for trial in range(40):
        words = [f"t{rng.integers(6)}" for _ in range(int(rng.integers(1, 6)))]
        model = random_model(rng, words, scale=2.0)
        em = emission_scores(model, words)
        best, best_score, log_z, _ = brute_force(em, model.transition, NAMES)
        seq, score = viterbi_decode(model, words)
        assert [DEFAULT_TAGSET.index(lab) for lab in seq.labels] == best
        assert math.isclose(score, best_score, rel_tol=1e-12, abs_tol=1e-12)
        assert math.isclose(log_partition(model, words), log_z, rel_tol=1e-8)
        assert log_z >= score


def test_viterbi_tie_breaks_to_lowest_index():
    em = np.zeros((1, 12))
    trans = np.where(DEFAULT_TAGSET.transition_mask, 0.0, -np.inf)
    path, _ = viterbi(em, trans)
    assert path == [0]
    em[0, [4, 8]] = 1.0
    assert viterbi(em, trans)[0] == [4]


def test_shift_invariance():
    rng = np.random.default_rng(3)
    model = random_model(rng, SENT)
    em = emission_scores(model, SENT)
    path, score = viterbi(em, model.transition)
    log_z = forward_backward(em, model.transition).log_z
    shifted = em.copy()
    shifted[2] += 7.25
    path2, score2 = viterbi(shifted, model.transition)
    assert path2 == path
    assert math.isclose(score2, score + 7.25, rel_tol=1e-12)
    assert math.isclose(forward_backward(shifted, model.transition).log_z, log_z + 7.25, rel_tol=1e-12)
    assert math.isclose(path_score(shifted, model.transition, path),
                        path_score(em, model.transition, path) + 7.25, rel_tol=1e-12)


def test_marginals_sum_to_one():
    rng = np.random.default_rng(4)
    for _ in range(10):
        model = random_model(rng, SENT, scale=3.0)
        m = forward_backward(emission_scores(model, SENT), model.transition)
        assert np.allclose(m.unary.sum(axis=1), 1.0, atol=1e-10, rtol=0)
        assert np.allclose(m.pairwise.sum(axis=(1, 2)), 1.0, atol=1e-10, rtol=0)
        assert np.allclose(m.pairwise.sum(axis=2), m.unary[:-1], atol=1e-10)


def test_decoded_output_never_violates_mask():
    rng = np.random.default_rng(5)
    for _ in range(300):
        words = [f"t{rng.integers(20)}" for _ in range(int(rng.integers(1, 15)))]
        model = random_model(rng, words, scale=3.0)
        assert legal_sequence(viterbi_decode(model, words)[0].names)


def test_mask_forbids_ih_start():
    model = CrfModel.zeros(features=["bias"])
    p = model.params()
    p.emission[0, DEFAULT_TAGSET.index("IH-obj")] = 50.0
    model = model.with_params(p)
    for n in range(1, 5):
        assert viterbi_decode(model, ["x"] * n)[0].names[0] != "IH-obj"


# ---------------------------------------------------------------- gradient

def _finite_difference(model, batch, l2, which, idx, eps=1e-5):
    def loss_at(delta):
        p = model.params()
        getattr(p, which)[idx] += delta
        return nll_and_gradient(model.with_params(p), batch, l2)[0]
    return (loss_at(eps) - loss_at(-eps)) / (2 * eps)


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(7)
    mask = DEFAULT_TAGSET.transition_mask
    for _ in range(3):
        words = [f"t{rng.integers(5)}" for _ in range(6)]
        model = random_model(rng, words, scale=0.5, projection_dim=2)
        vec = rng.normal(size=(6, 2))
        batch = [(featurize(model, words, vec), ["BH-obj", "IH-obj", "BH-dis", "BD-obj",
                                                 "ID-obj", "BH-act"])]
        _, grad = nll_and_gradient(model, batch, 0.05)
        coords = [("emission", (int(rng.integers(model.emission.shape[0])), int(rng.integers(12))))
                  for _ in range(4)]
        finite = np.argwhere(mask)
        coords += [("transition", tuple(finite[rng.integers(len(finite))])) for _ in range(4)]
        coords += [("projection", (int(rng.integers(2)), int(rng.integers(12)))) for _ in range(2)]
        for which, idx in coords:
            analytic = getattr(grad, which)[idx]
            numeric = _finite_difference(model, batch, 0.05, which, idx)
            assert abs(analytic - numeric) <= 1e-4 * max(abs(analytic), abs(numeric)), (which, idx)


def test_forbidden_transitions_get_zero_gradient():
    rng = np.random.default_rng(8)
    model = random_model(rng, SENT)
    gold = ["BH-obj", "IH-obj", "IH-obj", "BH-act", "BH-func", "BH-obj", "BH-func", "BH-dis"]
    _, grad = nll_and_gradient(model, [(SENT, gold)], 0.1)
    assert not grad.transition[~DEFAULT_TAGSET.transition_mask].any()


def test_duplicate_batch_doubles_loss_and_gradient():
    rng = np.random.default_rng(9)
    model = random_model(rng, SENT)
    gold = ["BH-obj"] * len(SENT)
    l1, g1 = nll_and_gradient(model, [(SENT, gold)])
    l2, g2 = nll_and_gradient(model, [(SENT, gold), (SENT, gold)])
    assert math.isclose(l2, 2 * l1, rel_tol=1e-12)
    for a, b in zip(g1.arrays(), g2.arrays()):
        assert np.allclose(b, 2 * a, rtol=1e-12, atol=1e-12)


def test_illegal_gold_rejected():
    model = CrfModel.zeros(features=["bias"])
    with pytest.raises(IllegalGoldSequence):
        nll_and_gradient(model, [(["a", "b"], ["IH-obj", "BH-obj"])])
    with pytest.raises(IllegalGoldSequence):
        nll_and_gradient(model, [(["a", "b"], ["BH-obj"])])


# ---------------------------------------------------------------- training

@pytest.fixture(scope="module")
def corpus():
    rng = np.random.default_rng(21)
    return synthetic_corpus(rng, 40), synthetic_corpus(rng, 12, prefix="dev")


def test_train_config_validation():
    for bad in ({"epochs": 0}, {"learning_rate": 0}, {"l2_strength": -1}, {"optimizer": "lbfgs"}):
        with pytest.raises(ValueError):
            TrainConfig(**bad)


def test_training_reduces_nll_and_is_reproducible(corpus):
    train_set, dev_set = corpus
    cfg = TrainConfig(epochs=4, seed=5)
    a = train(train_set, dev_set, cfg)
    b = train(train_set, dev_set, cfg)
    assert a.history == b.history
    assert a.history[-1].train_nll < a.history[0].train_nll
    assert np.array_equal(a.model.emission, b.model.emission)
    best = max(a.history, key=lambda r: (r.dev_weighted_f1, -r.epoch))
    assert a.best_epoch == best.epoch
    assert a.model.metadata["seed"] == 5 and a.model.metadata["config_hash"] == cfg.digest()


def test_training_without_dev_returns_last_epoch(corpus):
    result = train(corpus[0][:10], (), TrainConfig(epochs=3))
    assert result.best_epoch == 3 and result.history[-1].dev_weighted_f1 is None


def test_parallel_accumulation_matches_serial(corpus):
    train_set = corpus[0][:16]
    serial = train(train_set, (), TrainConfig(epochs=2, batch_size=8))
    threaded = train(train_set, (), TrainConfig(epochs=2, batch_size=8, n_jobs=4))
    assert np.allclose(serial.model.emission, threaded.model.emission, rtol=1e-12, atol=1e-12)


def test_adam_clipping_and_dropout_run(corpus):
    cfg = TrainConfig(epochs=2, optimizer="adam", learning_rate=0.05, gradient_clip=1.0,
                      feature_dropout=0.2, seed=1)
    result = train(corpus[0][:10], (), cfg)
    assert result.history[-1].train_nll < result.history[0].train_nll


def test_memorization_with_word_identity_features(corpus):
    train_set, _ = corpus
    cfg = TrainConfig(epochs=40, learning_rate=0.5, l2_strength=0.0, batch_size=4)
    model = train(train_set, (), cfg, FeatureTemplateConfig(WORD_IDENTITY_TEMPLATES)).model
    hits = total = 0
    for a in train_set:
        pred = viterbi_decode(model, a)[0].names
        gold = encode_tags(a).names
        hits += sum(p == g for p, g in zip(pred, gold))
        total += len(gold)
    assert hits / total >= 0.99


def test_training_with_external_vectors(corpus):
    train_set = corpus[0][:8]
    rng = np.random.default_rng(0)
    vecs = [rng.normal(size=(len(a.tokens), 3)) for a in train_set]
    result = train(train_set, (), TrainConfig(epochs=2), train_vectors=vecs)
    assert result.model.projection_dim == 3
    assert viterbi_decode(result.model, train_set[0], vecs[0])[0].labels


# ---------------------------------------------------------------- persistence

def test_save_load_round_trip(tmp_path, corpus):
    train_set, dev_set = corpus
    model = train(train_set[:10], (), TrainConfig(epochs=2)).model
    path = tmp_path / "model.npz"
    save_model(model, path)
    back = load_model(path)
    assert back.feature_index == model.feature_index
    assert np.array_equal(back.transition, model.transition)
    assert back.metadata == model.metadata and back.tagset == model.tagset
    for a in dev_set:
        assert viterbi_decode(back, a) == viterbi_decode(model, a)


def test_extended_tagset_and_projection_persist(tmp_path):
    rng = np.random.default_rng(3)
    model = random_model(rng, SENT, projection_dim=2, tagset=TagsetConfig.extended())
    save_model(model, tmp_path / "m")
    back = load_model(tmp_path / "m")
    assert len(back.tagset) == 16 and np.array_equal(back.projection, model.projection)


def test_truncated_file_is_corrupt(tmp_path):
    path = tmp_path / "m.npz"
    save_model(random_model(np.random.default_rng(0), SENT), path)
    data = path.read_bytes()
    path.write_bytes(data[: len(data) // 2])
    with pytest.raises(CorruptModel):
        load_model(path)


def test_garbage_file_is_corrupt(tmp_path):
    path = tmp_path / "m.npz"
    path.write_bytes(b"not a model")
    with pytest.raises(CorruptModel):
        load_model(path)


def _rewrite_meta(path, **changes):
    with np.load(path, allow_pickle=False) as z:
        arrays = {k: z[k] for k in z.files}
    meta = json.loads(str(arrays["meta"]))
    meta.update(changes)
    arrays["meta"] = np.array(json.dumps(meta))
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    path.write_bytes(buf.getvalue())


def test_unknown_version_raises_version_mismatch(tmp_path):
    path = tmp_path / "m.npz"
    save_model(random_model(np.random.default_rng(0), SENT), path)
    _rewrite_meta(path, format_version=FORMAT_VERSION + 1)
    with pytest.raises(VersionMismatch):
        load_model(path)


def test_inconsistent_labels_are_corrupt(tmp_path):
    path = tmp_path / "m.npz"
    save_model(random_model(np.random.default_rng(0), SENT), path)
    _rewrite_meta(path, labels=["BH-obj"])
    with pytest.raises(CorruptModel):
        load_model(path)


# ---------------------------------------------------------------- unconstrained mode

def test_unconstrained_zero_model_counts_every_sequence():
    model = CrfModel.zeros(features=["bias"], constrained=False)
    for length in range(1, 4):
        assert math.isclose(log_partition(model, ["x"] * length), length * math.log(12), rel_tol=1e-12)


def test_unconstrained_model_can_emit_illegal_start():
    model = CrfModel.zeros(features=["bias"], constrained=False)
    p = model.params()
    p.emission[0, DEFAULT_TAGSET.index("IH-obj")] = 50.0
    assert viterbi_decode(model.with_params(p), ["x"])[0].names == ["IH-obj"]


def test_unconstrained_training_updates_masked_transitions(corpus):
    train_set, _ = corpus
    model = train(train_set[:10], (), TrainConfig(epochs=2, constrained=False)).model
    assert not model.constrained
    forbidden = ~DEFAULT_TAGSET.transition_mask
    forbidden[DEFAULT_TAGSET.start, DEFAULT_TAGSET.stop] = False
    assert np.all(np.isfinite(model.transition[forbidden]))
    assert np.any(model.transition[forbidden] != 0)


def test_constrained_flag_persists(tmp_path):
    model = random_model(np.random.default_rng(1), SENT)
    loose = CrfModel(model.tagset, model.templates, model.feature_index, model.emission,
                     np.zeros_like(model.transition), None, {}, False)
    save_model(loose, tmp_path / "m.npz")
    back = load_model(tmp_path / "m.npz")
    assert not back.constrained
    assert np.isfinite(back.transition).sum() == 13 * 13 - 1
