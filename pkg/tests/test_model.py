import math
from collections import Counter

import numpy as np
import pytest

from typicality.errors import ModelLoadError, ModelVersionError, TrainingError
from typicality.metrics import sequence_ic
from typicality.model import NGramModel, train
from typicality.corpus import split, TRAIN, TEST
from typicality.tokenizer import EOS, VOCAB_SIZE


def oracle_distribution(sequences, order, alpha, vocab, context):
    """Interpolated estimate recomputed from raw counts in plain Python."""
    padded = [[None] * (order - 1) + list(s) for s in sequences]
    ctx = [None] * (order - 1) + list(context)
    unigram = Counter(t for s in sequences for t in s)
    total = sum(unigram.values())
    q = [(unigram[v] + 1) / (total + vocab) for v in range(vocab)]
    for k in range(1, order):
        key = tuple(ctx[len(ctx) - k:])
        follow = Counter()
        for s in padded:
            for i in range(order - 1, len(s)):
                if tuple(s[i - k:i]) == key:
                    follow[s[i]] += 1
        n = sum(follow.values())
        if n == 0:
            continue
        q = [(follow[v] + alpha * q[v]) / (n + alpha) for v in range(vocab)]
    return q


def test_unigram_hand_count():
    model = train([[60, 178, EOS]], order=1)
    dist = model.next_distribution([])
    expected = np.full(VOCAB_SIZE, 1 / 233)
    expected[[60, 178, EOS]] = 2 / 233
    np.testing.assert_allclose(dist, expected, rtol=0, atol=1e-15)


def test_order_one_ignores_context():
    model = train([[1, 2, EOS], [3, EOS]], order=1, alpha=7.0)
    a = model.next_distribution([])
    b = model.next_distribution([5, 9, 1])
    assert np.array_equal(a, b)


def test_matches_plain_python_oracle():
    rng = np.random.default_rng(11)
    vocab = 6
    seqs = [list(rng.integers(0, vocab - 1, size=rng.integers(1, 9))) + [vocab - 1]
            for _ in range(30)]
    model = train(seqs, order=3, alpha=0.7, vocab_size=vocab, eos=vocab - 1)
    for _ in range(50):
        ctx = list(rng.integers(0, vocab, size=rng.integers(0, 5)))
        expected = oracle_distribution(seqs, 3, 0.7, vocab, ctx)
        np.testing.assert_allclose(model.next_distribution(ctx), expected, rtol=1e-12)


def test_unseen_context_falls_back(toy_model):
    never = [0, 1, 2, 3]  # pitch tokens without durations never occur in training
    low = toy_model.level_distribution(never[-1:], 0)
    np.testing.assert_array_equal(toy_model.next_distribution(never), low)
    # (60,) occurs in training, (3, 60) does not: stop at the first-order estimate
    partial = toy_model.next_distribution([3, 60])
    np.testing.assert_allclose(partial, toy_model.level_distribution([3, 60], 1), rtol=1e-15)
    assert not np.allclose(partial, low)


def test_normalized_and_full_support(toy_model):
    rng = np.random.default_rng(0)
    for _ in range(1000):
        ctx = rng.integers(0, VOCAB_SIZE, size=rng.integers(0, 8))
        dist = toy_model.next_distribution(ctx)
        assert abs(math.fsum(dist) - 1.0) < 1e-12
        assert dist.min() > 0


def test_distributions_are_read_only(toy_model):
    dist = toy_model.next_distribution([60])
    with pytest.raises(ValueError):
        dist[0] = 1.0


def test_uniform_training_data_gives_near_uniform_output():
    rng = np.random.default_rng(5)
    tokens = rng.integers(0, VOCAB_SIZE, size=100_000)
    model = train([tokens], order=1, eos=None)
    dist = model.next_distribution([])
    assert np.max(np.abs(dist - 1 / VOCAB_SIZE)) < 0.01


def test_large_alpha_converges_to_lower_order():
    seqs = [[1, 2, 1, 3], [2, 2, 3], [1, 3]]
    model = train(seqs, order=2, alpha=1e12, vocab_size=4, eos=3)
    ctx = [1]
    np.testing.assert_allclose(model.next_distribution(ctx), model.level_distribution(ctx, 0),
                               atol=1e-10)


def test_count_linearity():
    seq = [4, 1, 2, 1, 5]
    doubled = train([seq, seq], order=3, vocab_size=6, eos=5)
    once = train([seq], order=3, vocab_size=6, eos=5)
    scaled = [{ctx: {t: 2 * c for t, c in row.items()} for ctx, row in table.items()}
              for table in once.counts]
    assert doubled == NGramModel(3, 1.0, scaled, vocab_size=6, eos=5)


def test_training_errors():
    with pytest.raises(TrainingError):
        train([])
    with pytest.raises(TrainingError):
        train([[60, 178]])
    with pytest.raises(TrainingError):
        train([[999, EOS]])


def test_save_load_round_trip(tmp_path, toy_model):
    path = tmp_path / "model.json"
    toy_model.save(path)
    loaded = NGramModel.load(path)
    assert loaded == toy_model
    assert loaded.digest() == toy_model.digest()
    rng = np.random.default_rng(1)
    for _ in range(100):
        ctx = rng.integers(0, VOCAB_SIZE, size=rng.integers(0, 6))
        assert np.array_equal(loaded.next_distribution(ctx), toy_model.next_distribution(ctx))


def test_truncated_file(tmp_path, tiny_model):
    path = tmp_path / "model.json"
    text = tiny_model.to_json()
    path.write_text(text[: len(text) // 2])
    with pytest.raises(ModelLoadError):
        NGramModel.load(path)


def test_future_version(tmp_path, tiny_model):
    path = tmp_path / "model.json"
    path.write_text(tiny_model.to_json().replace('"version":1', '"version":2'))
    with pytest.raises(ModelVersionError):
        NGramModel.load(path)


def test_wrong_magic():
    with pytest.raises(ModelLoadError):
        NGramModel.from_json('{"magic": "something-else", "version": 1}')


def test_higher_order_fits_held_out_data_better(toy_corpus):
    assignment = split(toy_corpus)
    train_ids = [p for p, part in assignment.items() if part == TRAIN]
    test_ids = [p for p, part in assignment.items() if part == TEST]
    train_seqs = toy_corpus.subset(train_ids).tokens()
    held_out = toy_corpus.subset(test_ids).tokens()

    def mean_id(order):
        model = train(train_seqs, order=order)
        return np.mean([sequence_ic(model, s).id for s in held_out])

    assert mean_id(3) <= mean_id(1)
