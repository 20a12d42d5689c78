import pytest

from forestnmt import corpus as cp
from forestnmt import forest as fo
from forestnmt.errors import AlignmentError, ContractError, CorpusError


def test_frequency_threshold_five():
    sentences = [["cat"]] * 5 + [["dog"]] * 4
    vocab = cp.build_vocab(sentences, min_freq=5)
    assert vocab.id("cat") != cp.UNK_ID
    assert vocab.id("dog") == cp.UNK_ID


def test_min_freq_one_keeps_everything():
    vocab = cp.build_vocab([["a", "b"], ["c"]], min_freq=1)
    assert len(vocab) == len(cp.RESERVED) + 3


def test_unseen_token_is_unk_3():
    vocab = cp.build_vocab([["x"] * 5], min_freq=5)
    assert vocab.id("never-seen") == 3 == cp.UNK_ID


def test_vocab_order_by_frequency_then_first_occurrence():
    sentences = [["b", "a", "a", "c", "b", "a", "c"]]  # a:3 b:2 c:2, b seen first
    vocab = cp.build_vocab(sentences, min_freq=1)
    assert vocab.word_tokens() == ["a", "b", "c"]
    assert vocab.id("a") == 4


def test_round_trip_identity_and_stable_unk():
    vocab = cp.build_vocab([["alpha", "beta"] * 5], min_freq=5)
    tokens = ["alpha", "beta", "alpha"]
    assert vocab.decode(vocab.encode(tokens)) == tokens
    oov = vocab.encode(["gamma", "gamma"])
    assert oov == [cp.UNK_ID, cp.UNK_ID]
    assert vocab.decode(oov) == ["<unk>", "<unk>"]


def test_reserved_sentinels():
    vocab = cp.build_vocab([["z"] * 5], min_freq=5)
    assert [vocab.token(i) for i in range(4)] == list(cp.RESERVED)
    assert (cp.PAD_ID, cp.BOS_ID, cp.EOS_ID, cp.UNK_ID) == (0, 1, 2, 3)


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def test_load_bitext_drops_long_pairs_symmetrically(tmp_path):
    src = write(tmp_path, "s", "a b\n" + " ".join(["w"] * 51) + "\nc d\ne\n")
    tgt = write(tmp_path, "t", "x\ny\n" + " ".join(["v"] * 51) + "\nz\n")
    bt = cp.load_bitext(src, tgt, max_len=50)
    assert len(bt) == 2
    assert bt.dropped == 2
    assert bt.pairs[0][0] == ["a", "b"]


def test_load_bitext_all_within_limits(tmp_path):
    src = write(tmp_path, "s", "a b\nc\n")
    tgt = write(tmp_path, "t", "x\ny z\n")
    bt = cp.load_bitext(src, tgt)
    assert len(bt) == 2 and bt.dropped == 0


def test_load_bitext_line_count_mismatch(tmp_path):
    src = write(tmp_path, "s", "a\nb\nc\n")
    tgt = write(tmp_path, "t", "x\ny\n")
    with pytest.raises(AlignmentError, match="3 lines.*has 2"):
        cp.load_bitext(src, tgt)


def test_load_bitext_forest_length_mismatch_names_line(tmp_path):
    src = write(tmp_path, "s", "a b\nc d e\n")
    tgt = write(tmp_path, "t", "x\ny\n")
    forests = write(
        tmp_path, "f",
        "sent 2\nnode 2 0 2\nedge 2 1.0 0 1\n\nsent 2\nnode 2 0 2\nedge 2 1.0 0 1\n",
    )
    with pytest.raises(CorpusError, match="line 2.*covers 2 words.*has 3"):
        cp.load_bitext(src, tgt, forests)


def test_load_bitext_forest_count_mismatch(tmp_path):
    src = write(tmp_path, "s", "a b\nc d\n")
    tgt = write(tmp_path, "t", "x\ny\n")
    forests = write(tmp_path, "f", "sent 2\nnode 2 0 2\nedge 2 1.0 0 1\n")
    with pytest.raises(AlignmentError, match="1 forests"):
        cp.load_bitext(src, tgt, forests)


def test_load_bitext_skips_forest_blocks_for_dropped_pairs(tmp_path):
    long_src = " ".join(["w"] * 51)
    src = write(tmp_path, "s", f"{long_src}\na b\n")
    tgt = write(tmp_path, "t", "x\ny\n")
    big = "sent 51\nnode 51 0 51\nedge 51 1.0 " + " ".join(map(str, range(51))) + "\n"
    small = "sent 2\nnode 2 0 2\nedge 2 1.0 0 1\n"
    forests = write(tmp_path, "f", big + "\n" + small)
    bt = cp.load_bitext(src, tgt, forests)
    assert len(bt) == 1
    assert bt.pairs[0][2].sentence_len == 2


def test_load_bitext_trees_format_and_lowercase(tmp_path):
    src = write(tmp_path, "s", "A B\nC D E\n")
    tgt = write(tmp_path, "t", "X\nY\n")
    trees = write(tmp_path, "r", "(A B)\n((C D) E)\n")
    bt = cp.load_bitext(src, tgt, trees, forest_format="trees", lowercase=True)
    assert bt.pairs[0][0] == ["a", "b"]
    assert fo.tree_count(bt.pairs[1][2]) == 1


def test_load_bitext_rejects_empty_lines(tmp_path):
    src = write(tmp_path, "s", "a\n\n")
    tgt = write(tmp_path, "t", "x\ny\n")
    with pytest.raises(CorpusError, match="line 2"):
        cp.load_bitext(src, tgt)


def test_prepare_examples_appends_eos_and_strips_structure():
    vocab = cp.build_vocab([["a", "b", "x", "y"] * 5], min_freq=1)
    forest = fo.from_tree("(a b)")
    bt = cp.Bitext([(["a", "b"], ["x", "y"], forest)])
    examples = cp.prepare_examples(bt, "vanilla", vocab, vocab)
    assert examples[0].forest is None and examples[0].tree is None
    assert examples[0].tgt_ids[-1] == cp.EOS_ID

    tree_examples = cp.prepare_examples(bt, "tree", vocab, vocab)
    assert tree_examples[0].tree == ((0, 2), (((0, 1), ()), ((1, 2), ())))
    assert tree_examples[0].forest is None

    forest_examples = cp.prepare_examples(bt, "forest", vocab, vocab)
    assert forest_examples[0].forest is forest


def test_prepare_examples_tree_mode_rejects_ambiguity():
    vocab = cp.build_vocab([["a", "b", "c"] * 5], min_freq=1)
    t1, _ = fo.parse_bracketed("((a b) c)")
    t2, _ = fo.parse_bracketed("(a (b c))")
    from forestnmt.randforest import pack_trees

    ambiguous = pack_trees([t1, t2], 3)
    bt = cp.Bitext([(["a", "b", "c"], ["x"], ambiguous)])
    with pytest.raises(ContractError, match="single-derivation"):
        cp.prepare_examples(bt, "tree", vocab, vocab)


def test_prepare_examples_structured_modes_need_forests():
    vocab = cp.build_vocab([["a"] * 5], min_freq=1)
    bt = cp.Bitext([(["a"], ["x"], None)])
    with pytest.raises(ContractError, match="needs forests"):
        cp.prepare_examples(bt, "forest", vocab, vocab)


def test_empty_corpus_vocab_error():
    with pytest.raises(CorpusError):
        cp.build_vocab([], min_freq=1)
