"""Reference encoder: forward pass, gradients, training, checkpoints."""

import numpy as np
import pytest

from opinionsum.classifier import (
    ClassifierInput,
    ReferenceEncoder,
    TrainConfig,
    _positions,
    batch_loss_and_grads,
    classify_phrase,
    decide,
    embed_phrase,
    finetune_on_phrases,
    load_checkpoint,
    phrase_input,
    save_checkpoint,
    token_ids,
    train_on_sentences,
)
from opinionsum.corpus import build_vocab
from opinionsum.distill import PseudoPhraseLabel, PseudoSentenceLabel, distill_loss
from opinionsum.extraction import Phrase
from util import make_sentence


def _model(dim=4, vocab=7, cats=("a", "b", "c"), seed=0):
    return ReferenceEncoder(vocab, dim, list(cats), rng_seed=seed)


def _inputs(rng, n_items, vocab=7, max_len=5):
    items = []
    for _ in range(n_items):
        length = int(rng.integers(1, max_len + 1))
        ids = rng.integers(0, vocab, size=length)
        items.append(ClassifierInput(ids))
    return items


class TestForward:
    def test_predict_is_distribution(self):
        rng = np.random.default_rng(0)
        model = _model()
        for inp in _inputs(rng, 50):
            y = model.predict(inp)
            assert np.all(y >= 0)
            assert abs(y.sum() - 1.0) < 1e-6
            assert y.shape == (3,)

    def test_deterministic_forward(self):
        model = _model()
        inp = ClassifierInput(np.array([1, 2, 3]))
        assert np.array_equal(model.predict(inp), model.predict(inp))
        assert np.array_equal(model.encode(inp), model.encode(inp))

    def test_matches_manual_forward(self):
        # independent step-by-step recomputation with explicit loops
        model = _model(dim=4, vocab=5, cats=("a", "b"), seed=3)
        ids = np.array([2, 0, 4])
        inp = ClassifierInput(ids, span=(1, 3))
        p = model.params
        n, d = 3, 4
        e = np.array([p["emb"][t] for t in ids]) + _positions(n, d)
        q, k, v = e @ p["wq"], e @ p["wk"], e @ p["wv"]
        scores = np.zeros((n, n))
        for i in range(n):
            for j in range(n):
                scores[i, j] = float(q[i] @ k[j]) / np.sqrt(d)
        att = np.zeros((n, n))
        for i in range(n):
            ex = np.exp(scores[i] - scores[i].max())
            att[i] = ex / ex.sum()
        h = att @ v
        pooled = (h[1] + h[2]) / 2.0
        logits = pooled @ p["wo"] + p["bo"]
        expect = np.exp(logits - logits.max())
        expect /= expect.sum()
        np.testing.assert_allclose(model.predict(inp), expect, atol=1e-12)
        np.testing.assert_allclose(model.encode(inp), pooled, atol=1e-12)

    def test_span_of_one_token_is_that_representation(self):
        model = _model(seed=5)
        ids = np.array([1, 4, 2])
        whole = [model.encode(ClassifierInput(ids, span=(i, i + 1))) for i in range(3)]
        # mean over a two-token span equals the mean of the single-token spans
        two = model.encode(ClassifierInput(ids, span=(0, 2)))
        np.testing.assert_allclose(two, (whole[0] + whole[1]) / 2, atol=1e-12)

    def test_span_bounds_checked(self):
        with pytest.raises(ValueError, match="span"):
            ClassifierInput(np.array([1, 2]), span=(0, 3))
        with pytest.raises(ValueError, match="span"):
            ClassifierInput(np.array([1, 2]), span=(1, 1))


class TestGradients:
    def test_parameter_gradients_match_finite_differences(self):
        rng = np.random.default_rng(7)
        model = _model(dim=4, vocab=6, cats=("a", "b", "c"), seed=1)
        items = []
        for inp in _inputs(rng, 3, vocab=6, max_len=3):
            target = rng.dirichlet(np.ones(3))
            items.append((inp, target))
        items[0] = (ClassifierInput(items[0][0].token_ids, span=(0, 1)), items[0][1])
        loss, grads = batch_loss_and_grads(model, items)
        eps = 1e-6
        for name, param in model.params.items():
            fd = np.zeros_like(param)
            it = np.nditer(param, flags=["multi_index"])
            while not it.finished:
                idx = it.multi_index
                old = param[idx]
                param[idx] = old + eps
                hi = batch_loss_and_grads(model, items)[0]
                param[idx] = old - eps
                lo = batch_loss_and_grads(model, items)[0]
                param[idx] = old
                fd[idx] = (hi - lo) / (2 * eps)
                it.iternext()
            denom = np.maximum(np.maximum(np.abs(grads[name]), np.abs(fd)), 1e-6)
            worst = float(np.max(np.abs(grads[name] - fd) / denom))
            assert worst < 1e-3, f"{name}: max relative error {worst:.3g}"


def _toy_corpus():
    s0 = make_sentence([("fast", "JJ"), ("car", "NN")], sid="s0")
    s1 = make_sentence([("slow", "JJ"), ("bus", "NN")], sid="s1")
    return [s0, s1]


class TestTraining:
    def _setup(self):
        corpus = _toy_corpus()
        vocab = build_vocab(corpus, 1)
        pseudo = [
            PseudoSentenceLabel("s0", np.array([0.9, 0.1])),
            PseudoSentenceLabel("s1", np.array([0.1, 0.9])),
        ]
        model = ReferenceEncoder(len(vocab) + 1, 4, ["x", "y"], rng_seed=2)
        return model, pseudo, corpus, vocab

    def test_loss_decreases(self):
        model, pseudo, corpus, vocab = self._setup()
        _, tr = train_on_sentences(model, pseudo, corpus, vocab, TrainConfig(learning_rate=0.5, epochs=60, rng_seed=0))
        assert np.mean(tr[-5:]) < np.mean(tr[:5])

    def test_zero_items_returns_model_unchanged(self):
        model, _, corpus, vocab = self._setup()
        before = {k: v.copy() for k, v in model.params.items()}
        same, tr = train_on_sentences(model, [], corpus, vocab, TrainConfig())
        assert same is model and tr == []
        assert all(np.array_equal(before[k], model.params[k]) for k in before)

    def test_seeded_training_reproducible(self):
        runs = []
        for _ in range(2):
            model, pseudo, corpus, vocab = self._setup()
            train_on_sentences(model, pseudo, corpus, vocab, TrainConfig(epochs=3, rng_seed=9))
            runs.append(model.params)
        assert all(np.array_equal(runs[0][k], runs[1][k]) for k in runs[0])

    def test_unknown_sentence_rejected(self):
        model, _, corpus, vocab = self._setup()
        bad = [PseudoSentenceLabel("ghost", np.array([0.5, 0.5]))]
        with pytest.raises(ValueError, match="ghost"):
            train_on_sentences(model, bad, corpus, vocab, TrainConfig())

    def test_batch_loss_is_mean_of_item_losses(self):
        model, pseudo, corpus, vocab = self._setup()
        items = []
        for label in pseudo:
            sent = next(s for s in corpus if s.id == label.sentence_id)
            items.append((ClassifierInput(token_ids(vocab, [t.surface for t in sent.tokens])), label.distribution))
        loss, _ = batch_loss_and_grads(model, items)
        oracle = np.mean([distill_loss(t, model.predict(i)) for i, t in items])
        assert loss == pytest.approx(oracle, rel=1e-12)

    def test_independent_instances_share_no_state(self):
        model_a, pseudo, corpus, vocab = self._setup()
        model_b = ReferenceEncoder(len(vocab) + 1, 4, ["p", "q", "r"], rng_seed=4)
        snapshot = {k: v.copy() for k, v in model_b.params.items()}
        train_on_sentences(model_a, pseudo, corpus, vocab, TrainConfig(epochs=3))
        assert all(np.array_equal(snapshot[k], model_b.params[k]) for k in snapshot)


class TestFinetune:
    def _phrases(self, corpus):
        return {
            "s0:0-1": Phrase("s0:0-1", "s0", (0, 1), "fast car", "dependency"),
            "s1:0-1": Phrase("s1:0-1", "s1", (0, 1), "slow bus", "dependency"),
        }

    def test_background_moves_toward_uniform(self):
        corpus = _toy_corpus()
        vocab = build_vocab(corpus, 1)
        phrases = self._phrases(corpus)
        model = ReferenceEncoder(len(vocab) + 1, 4, ["x", "y"], rng_seed=6)
        labels = [PseudoPhraseLabel.background(pid, 2) for pid in phrases]
        inputs = [phrase_input(vocab, corpus[i], phrases[pid]) for i, pid in enumerate(sorted(phrases))]
        before = np.mean([model.predict(i).max() for i in inputs])
        finetune_on_phrases(model, labels, phrases, corpus, vocab,
                            TrainConfig(learning_rate=0.5, epochs=40, rng_seed=0))
        after = np.mean([model.predict(i).max() for i in inputs])
        assert after < before

    def test_empty_input_unchanged(self):
        corpus = _toy_corpus()
        vocab = build_vocab(corpus, 1)
        model = ReferenceEncoder(len(vocab) + 1, 4, ["x", "y"], rng_seed=6)
        before = {k: v.copy() for k, v in model.params.items()}
        finetune_on_phrases(model, [], {}, corpus, vocab, TrainConfig())
        assert all(np.array_equal(before[k], model.params[k]) for k in before)

    def test_excluded_labels_skipped(self):
        corpus = _toy_corpus()
        vocab = build_vocab(corpus, 1)
        phrases = self._phrases(corpus)
        model = ReferenceEncoder(len(vocab) + 1, 4, ["x", "y"], rng_seed=6)
        before = {k: v.copy() for k, v in model.params.items()}
        labels = [PseudoPhraseLabel.excluded(pid) for pid in phrases]
        finetune_on_phrases(model, labels, phrases, corpus, vocab, TrainConfig())
        assert all(np.array_equal(before[k], model.params[k]) for k in before)


class TestDecision:
    def test_uniform_below_threshold(self):
        assert decide(np.full(5, 0.2), 0.30, list("abcde")) is None

    def test_confident_class_returned(self):
        y = np.array([0.05, 0.9, 0.05])
        assert decide(y, 0.30, ["x", "food", "y"]) == "food"

    def test_tie_break_schema_order(self):
        y = np.array([0.30, 0.30, 0.2, 0.1, 0.1])
        assert decide(y, 0.30, list("abcde")) == "a"

    def test_threshold_zero_never_none(self):
        rng = np.random.default_rng(8)
        model = _model()
        for inp in _inputs(rng, 20):
            assert classify_phrase(model, inp, 0.0) is not None

    def test_threshold_above_one_always_none(self):
        rng = np.random.default_rng(9)
        model = _model()
        for inp in _inputs(rng, 20):
            assert classify_phrase(model, inp, 1.0001) is None

    def test_embed_phrase_identical_inputs(self):
        model = _model()
        inp = ClassifierInput(np.array([1, 2, 3]), span=(0, 2))
        assert np.array_equal(embed_phrase(model, inp), embed_phrase(model, inp))


class TestCheckpoint:
    def test_roundtrip(self, tmp_path):
        model = _model(dim=6, vocab=9, cats=("a", "b"), seed=12)
        path = tmp_path / "m.ckpt"
        save_checkpoint(model, path, rng_seed=12, schema_sha256="abc123")
        again = load_checkpoint(path)
        assert again.categories == model.categories
        assert again.dim == model.dim and again.vocab_size == model.vocab_size
        for name in model.params:
            np.testing.assert_allclose(again.params[name], model.params[name], atol=1e-6)
        inp = ClassifierInput(np.array([0, 5, 3]))
        np.testing.assert_allclose(again.predict(inp), model.predict(inp), atol=1e-5)

    def test_float32_stable_after_second_roundtrip(self, tmp_path):
        model = _model()
        save_checkpoint(model, tmp_path / "a.ckpt")
        first = load_checkpoint(tmp_path / "a.ckpt")
        save_checkpoint(first, tmp_path / "b.ckpt")
        second = load_checkpoint(tmp_path / "b.ckpt")
        assert all(np.array_equal(first.params[k], second.params[k]) for k in first.params)

    def test_bad_file_rejected(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_bytes(b'{"format": "other"}\n')
        with pytest.raises(ValueError, match="checkpoint"):
            load_checkpoint(path)

    def test_unk_tokens_map_to_reserved_id(self):
        corpus = _toy_corpus()
        vocab = build_vocab(corpus, 1)
        ids = token_ids(vocab, ["fast", "zzz-unknown"])
        assert ids[1] == len(vocab)
        assert ids[0] == vocab.id_of("fast")
