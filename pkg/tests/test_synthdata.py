import itertools

import numpy as np
import pytest

from hyperqf.synthdata import (
    DatasetFormatError, Hierarchy, HierarchySpec, build_vocab, generate, generate_splits, read_jsonl, write_jsonl,
)


def test_noiseless_records_of_same_leaf_are_identical():
    recs = generate(HierarchySpec(noise=0.0, filler_rate=0.0), 200)
    by_leaf = {}
    for r in recs:
        by_leaf.setdefault(r.leaf, []).append(r)
    assert any(len(v) > 1 for v in by_leaf.values())
    for group in by_leaf.values():
        for r in group[1:]:
            np.testing.assert_array_equal(r.patches, group[0].patches)
            assert r.tokens == group[0].tokens


def test_two_leaves_two_skeletons():
    recs = generate(HierarchySpec(depth=1, branching=2, filler_rate=0.0), 50)
    assert len({tuple(r.tokens) for r in recs}) == 2


def test_deterministic_bytes(tmp_path):
    spec = HierarchySpec(seed=5)
    write_jsonl(generate(spec, 40), tmp_path / "a.jsonl")
    write_jsonl(generate(spec, 40), tmp_path / "b.jsonl")
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()


def test_caption_contains_path_in_order():
    for r in generate(HierarchySpec(filler_rate=0.5), 100):
        assert [t for t in r.tokens if t in r.class_path] == r.class_path
        assert len(r.class_path) == r.depth == 3


def test_splits_share_hierarchy_and_differ():
    tr, te = generate_splits(HierarchySpec(), 10, 5)
    assert [r.id for r in te] == list(range(10, 15))
    assert generate(HierarchySpec(), 15)[10] == te[0]


def test_vocab_covers_captions():
    spec = HierarchySpec()
    vocab = build_vocab(spec)
    assert all(t in vocab for r in generate(spec, 100) for t in r.tokens)
    assert len(vocab) == 1 + 4 + 16 + 64 + spec.n_fillers


@pytest.mark.parametrize("kw", [{"depth": 0}, {"branching": 1}, {"noise": -1.0}, {"filler_rate": 1.0}])
def test_invalid_spec(kw):
    with pytest.raises(ValueError):
        HierarchySpec(**kw)


def test_sibling_prototypes_closer_than_cousins():
    wins = 0
    for seed in range(20):
        tree = Hierarchy.build(HierarchySpec(seed=seed))
        leaves = tree.leaves()
        protos = {leaf: tree.prototype(leaf) for leaf in leaves}
        sib, far = [], []
        for a, b in itertools.combinations(leaves, 2):
            sim = float(protos[a] @ protos[b])
            if a[:-1] == b[:-1]:
                sib.append(sim)
            elif a[0] != b[0]:
                far.append(sim)
        wins += np.mean(sib) > np.mean(far)
    assert wins >= 19  # >= 95% of seed replicates


class TestJsonl:
    def test_empty(self, tmp_path):
        write_jsonl([], tmp_path / "e.jsonl")
        assert (tmp_path / "e.jsonl").read_bytes() == b""
        assert read_jsonl(tmp_path / "e.jsonl") == []

    def test_round_trip(self, tmp_path):
        recs = generate(HierarchySpec(), 100)
        write_jsonl(recs, tmp_path / "d.jsonl")
        assert read_jsonl(tmp_path / "d.jsonl") == recs

    def test_truncated_line(self, tmp_path):
        write_jsonl(generate(HierarchySpec(), 3), tmp_path / "d.jsonl")
        lines = (tmp_path / "d.jsonl").read_text().splitlines()
        lines[1] = lines[1][: len(lines[1]) // 2]
        (tmp_path / "d.jsonl").write_text("\n".join(lines) + "\n")
        with pytest.raises(DatasetFormatError, match="line 2"):
            read_jsonl(tmp_path / "d.jsonl")

    def test_extra_field(self, tmp_path):
        (tmp_path / "d.jsonl").write_text('{"id":0,"patches":[[0.0]],"tokens":["a"],"class_path":["a"],"depth":1,"x":1}\n')
        with pytest.raises(DatasetFormatError, match="line 1"):
            read_jsonl(tmp_path / "d.jsonl")
