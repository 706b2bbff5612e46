import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hyperqf.textaug import UNK, Vocab, random_text_prune, tokenize


@pytest.fixture
def vocab():
    return Vocab(["a", "b", "c"])


def test_tokenize(vocab):
    assert tokenize("a b c", vocab) == [vocab.id("a"), vocab.id("b"), vocab.id("c")]
    assert tokenize("a zzz", vocab) == [vocab.id("a"), vocab.unk_id]
    with pytest.raises(ValueError):
        tokenize("", vocab)
    with pytest.raises(ValueError):
        tokenize("   ", vocab)


def test_vocab_round_trip(vocab):
    assert Vocab.from_list(vocab.itos) == vocab
    assert vocab.itos[0] == UNK


class _Fixed:
    """Stand-in generator returning queued integers."""

    def __init__(self, *values):
        self.values = list(values)

    def integers(self, lo, hi):
        v = self.values.pop(0)
        assert lo <= v < hi
        return v


def test_zero_window_is_identity():
    assert random_text_prune(list("abcd"), 7, _Fixed(0, 2)) == (list("abcd"), 0)


def test_window_two_at_one():
    assert random_text_prune(list("abcd"), 7, _Fixed(2, 1)) == (["a", "d"], 2)


def test_window_clamped_to_keep_one_token():
    out, removed = random_text_prune(list("abc"), 7, _Fixed(7, 0))
    assert removed == 2 and out == ["c"]


def test_max_window_zero_identity(rng):
    assert random_text_prune([1, 2, 3], 0, rng) == ([1, 2, 3], 0)


def test_window_law():
    rng = np.random.default_rng(11)
    counts = np.zeros(8, int)
    for _ in range(40_000):
        counts[random_text_prune(list(range(12)), 7, rng)[1]] += 1
    assert np.all(np.abs(counts / 40_000 - 0.125) <= 0.006)


@settings(max_examples=300, deadline=None)
@given(st.lists(st.integers(0, 50), min_size=1, max_size=20), st.integers(0, 10), st.integers(0, 2**32 - 1))
def test_prune_invariants(tokens, max_window, seed):
    out, removed = random_text_prune(tokens, max_window, np.random.default_rng(seed))
    assert len(out) == len(tokens) - removed >= 1
    # survivors are a prefix plus a suffix of the input
    k = next((i for i in range(len(out)) if out[i] != tokens[i]), len(out))
    assert out[:k] == tokens[:k]
    assert out[k:] == tokens[len(tokens) - (len(out) - k):]
