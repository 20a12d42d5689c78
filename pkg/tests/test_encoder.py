import numpy as np
import pytest

from forestnmt import encoder as enc
from forestnmt import forest as fo
from forestnmt import numcore as nc
from forestnmt.errors import ContractError
from forestnmt.params import init_params, zero_params
from forestnmt.randforest import random_binary_tree, random_forest


def tensors(pairs):
    return [(nc.Tensor(h), nc.Tensor(c)) for h, c in pairs]


def seq_lstm_oracle(p, word_ids):
    """Straight-line numpy re-implementation of the sequential encoder."""
    H = p.hidden
    h = np.zeros(H)
    c = np.zeros(H)
    sig = lambda v: 1 / (1 + np.exp(-v))
    out = []
    for w in word_ids:
        x = p["src_embed"].data[w]
        gates = {}
        for name in ("i", "f", "o"):
            gates[name] = sig(p[f"seq.W_{name}"].data @ x + p[f"seq.U_{name}"].data @ h + p[f"seq.b_{name}"].data)
        ct = np.tanh(p["seq.W_c"].data @ x + p["seq.U_c"].data @ h + p["seq.b_c"].data)
        c = gates["i"] * ct + gates["f"] * c
        h = gates["o"] * np.tanh(c)
        out.append((h.copy(), c.copy()))
    return out


def test_encode_sequence_zero_params_gives_zero_states():
    p = zero_params("vanilla", 6, 6, 5, 3)
    hs, cs = enc.encode_sequence([1, 2, 3, 4], p)
    for h, c in zip(hs, cs):
        assert np.all(h.data == 0.0)
        assert np.all(c.data == 0.0)


def test_encode_sequence_single_word_is_one_lstm_step():
    p = init_params("vanilla", 6, 6, 4, 3, seed=0)
    hs, _ = enc.encode_sequence([2], p)
    (oh, _), = seq_lstm_oracle(p, [2])
    assert np.allclose(hs[0].data, oh, atol=1e-12)


def test_encode_sequence_matches_straight_line_oracle():
    p = init_params("vanilla", 8, 8, 5, 4, seed=3)
    ids = [1, 5, 2]
    hs, cs = enc.encode_sequence(ids, p)
    oracle = seq_lstm_oracle(p, ids)
    for (h, c), (oh, oc) in zip(zip(hs, cs), oracle):
        assert np.allclose(h.data, oh, atol=1e-12)
        assert np.allclose(c.data, oc, atol=1e-12)


def test_encode_sequence_rejects_empty():
    p = init_params("vanilla", 6, 6, 4, 3, seed=0)
    with pytest.raises(ContractError):
        enc.encode_sequence([], p)


def test_tree_combine_zero_params_closed_form():
    p = zero_params("tree", 6, 6, 4, 3)
    rng = np.random.default_rng(0)
    hl, cl, hr, cr = (rng.uniform(-1, 1, 4) for _ in range(4))
    h, c = enc.tree_lstm_combine(
        (nc.Tensor(hl), nc.Tensor(cl)), (nc.Tensor(hr), nc.Tensor(cr)), p
    )
    assert np.allclose(c.data, 0.5 * (cl + cr), atol=1e-12)
    assert np.allclose(h.data, 0.5 * np.tanh(0.5 * (cl + cr)), atol=1e-12)
    # zero children states and biases -> exactly zero
    z = nc.zeros(4)
    h0, _ = enc.tree_lstm_combine((z, z), (z, z), p)
    assert np.all(h0.data == 0.0)


def test_tree_combine_gradients():
    p = init_params("tree", 6, 6, 4, 3, seed=1)
    rng = np.random.default_rng(2)
    leaves = {
        "hl": nc.Tensor(rng.uniform(-1, 1, 4), requires_grad=True),
        "cl": nc.Tensor(rng.uniform(-1, 1, 4), requires_grad=True),
        "hr": nc.Tensor(rng.uniform(-1, 1, 4), requires_grad=True),
        "cr": nc.Tensor(rng.uniform(-1, 1, 4), requires_grad=True),
    }
    checked = {k: v for k, v in p.items() if k.startswith("tree.")} | leaves

    def f():
        h, c = enc.tree_lstm_combine(
            (leaves["hl"], leaves["cl"]), (leaves["hr"], leaves["cr"]), p
        )
        return nc.sum_all(nc.mul(h, h)) + nc.sum_all(c)

    report = nc.grad_check(f, checked)
    assert report.ok(1e-4), str(report)


def test_edge_embedding_binary_equals_combine():
    p = init_params("forest", 6, 6, 4, 3, seed=4)
    rng = np.random.default_rng(5)
    a, b = tensors([(rng.uniform(-1, 1, 4), rng.uniform(-1, 1, 4)) for _ in range(2)])
    via_edge = enc.derive_edge_embedding([a, b], p)
    direct = enc.tree_lstm_combine(a, b, p)
    assert np.array_equal(via_edge[0].data, direct[0].data)


def test_edge_embedding_ternary_left_fold():
    p = init_params("forest", 6, 6, 4, 3, seed=4)
    rng = np.random.default_rng(6)
    a, b, c = tensors([(rng.uniform(-1, 1, 4), rng.uniform(-1, 1, 4)) for _ in range(3)])
    folded = enc.derive_edge_embedding([a, b, c], p)
    manual = enc.tree_lstm_combine(enc.tree_lstm_combine(a, b, p), c, p)
    assert np.array_equal(folded[0].data, manual[0].data)
    assert np.array_equal(folded[1].data, manual[1].data)


def test_edge_embedding_unary_zero_params_is_zero():
    p = zero_params("forest", 6, 6, 4, 3)
    z = nc.zeros(4)
    h, c = enc.derive_edge_embedding([(z, z)], p)
    assert np.all(h.data == 0.0) and np.all(c.data == 0.0)


def test_fuse_single_child_zero_params_closed_form():
    p = zero_params("forest", 6, 6, 4, 3)
    rng = np.random.default_rng(7)
    h1, c1 = rng.uniform(-1, 1, 4), rng.uniform(-1, 1, 4)
    h, c = enc.forest_lstm_fuse([((nc.Tensor(h1), nc.Tensor(c1)), 1.0)], p)
    assert np.allclose(c.data, 0.5 * c1, atol=1e-12)
    assert np.allclose(h.data, 0.5 * np.tanh(0.5 * c1), atol=1e-12)


def test_fuse_permutation_consistency_with_tied_weights():
    p = init_params("forest", 6, 6, 4, 3, seed=8)
    p["fuse.Ug"].data[...] = p["fuse.Wg"].data
    p["fuse.U_f"].data[...] = p["fuse.W_f"].data
    rng = np.random.default_rng(9)
    a = (nc.Tensor(rng.uniform(-1, 1, 4)), nc.Tensor(rng.uniform(-1, 1, 4)))
    b = (nc.Tensor(rng.uniform(-1, 1, 4)), nc.Tensor(rng.uniform(-1, 1, 4)))
    h1, c1 = enc.forest_lstm_fuse([(a, 1.0), (b, 0.0)], p)
    h2, c2 = enc.forest_lstm_fuse([(b, 0.0), (a, 1.0)], p)
    assert np.allclose(h1.data, h2.data, atol=1e-12)
    assert np.allclose(c1.data, c2.data, atol=1e-12)


def test_fuse_contract_checks():
    p = init_params("forest", 6, 6, 4, 3, seed=8)
    with pytest.raises(ContractError):
        enc.forest_lstm_fuse([], p)
    z = nc.zeros(4)
    with pytest.raises(ContractError, match="sum"):
        enc.forest_lstm_fuse([((z, z), 0.4), ((z, z), 0.4)], p)


def test_fuse_gradients_three_children():
    p = init_params("forest", 6, 6, 4, 3, seed=10)
    rng = np.random.default_rng(11)
    children = []
    leaves = {}
    for i in range(3):
        h = nc.Tensor(rng.uniform(-1, 1, 4), requires_grad=True)
        c = nc.Tensor(rng.uniform(-1, 1, 4), requires_grad=True)
        leaves[f"h{i}"], leaves[f"c{i}"] = h, c
        children.append(((h, c), (0.5, 0.3, 0.2)[i]))
    checked = {k: v for k, v in p.items() if k.startswith("fuse.")} | leaves

    def f():
        h, c = enc.forest_lstm_fuse(children, p)
        return nc.sum_all(nc.mul(h, c))

    report = nc.grad_check(f, checked)
    assert report.ok(1e-4), str(report)


def test_encode_forest_counts_unified_embeddings():
    p = init_params("forest", 9, 9, 4, 3, seed=12)
    single = fo.from_tree("((w0 w1) w2)")
    encoded = enc.encode_forest([1, 2, 3], single, p)
    assert len(encoded.phrase_h) == 2  # one per internal node

    two = fo.parse_forest(
        "sent 3\nnode 3 0 2\nnode 4 1 3\nnode 5 0 3\n"
        "edge 3 1.0 0 1\nedge 4 1.0 1 2\nedge 5 0.5 3 2\nedge 5 0.5 0 4\n"
    )
    encoded = enc.encode_forest([1, 2, 3], two, p)
    assert len(encoded.phrase_h) == 3  # two competing mid spans + root
    assert encoded.root is not None


def test_encode_forest_full_zero_collapse():
    p = zero_params("forest", 9, 9, 5, 3)
    rng = np.random.default_rng(13)
    f = random_forest(rng, min_words=4, max_words=6)
    ids = list(range(1, f.sentence_len + 1))
    encoded = enc.encode_forest(ids, f, p)
    for t in encoded.word_h + encoded.phrase_h + encoded.phrase_c:
        assert np.all(t.data == 0.0)


def test_encode_tree_structure_sensitivity():
    p = init_params("tree", 9, 9, 5, 3, seed=14)
    left, _ = fo.parse_bracketed("((a b) c)")
    right, _ = fo.parse_bracketed("(a (b c))")
    ids = [1, 2, 3]
    el = enc.encode_tree(ids, left, p)
    er = enc.encode_tree(ids, right, p)
    assert not np.allclose(el.root[0].data, er.root[0].data)


def test_encode_tree_counts_and_binary_contract():
    p = init_params("tree", 9, 9, 4, 3, seed=15)
    tree, _ = fo.parse_bracketed("(a b)")
    encoded = enc.encode_tree([1, 2], tree, p)
    assert len(encoded.phrase_h) == 1
    assert len(encoded.attendable()) == 3  # 2n-1

    ternary, _ = fo.parse_bracketed("(a b c)")
    with pytest.raises(ContractError, match="binary"):
        enc.encode_tree([1, 2, 3], ternary, p)


def test_tree_and_forest_attendable_counts_agree_on_binary_trees():
    ptree = init_params("tree", 9, 9, 4, 3, seed=16)
    pforest = init_params("forest", 9, 9, 4, 3, seed=16)
    rng = np.random.default_rng(17)
    for _ in range(10):
        n = int(rng.integers(2, 7))
        tree = random_binary_tree(rng, n)
        ids = [int(i) for i in rng.integers(1, 9, n)]
        et = enc.encode_tree(ids, tree, ptree)
        ef = enc.encode_forest(ids, fo.forest_from_tree(tree, n), pforest)
        assert len(et.attendable()) == len(ef.attendable()) == 2 * n - 1


def test_encode_forest_deterministic():
    p = init_params("forest", 9, 9, 4, 3, seed=18)
    f = random_forest(np.random.default_rng(19), min_words=3, max_words=5)
    ids = list(range(1, f.sentence_len + 1))
    a = enc.encode_forest(ids, f, p)
    b = enc.encode_forest(ids, f, p)
    for x, y in zip(a.attendable(), b.attendable()):
        assert np.array_equal(x.data, y.data)


def test_encode_forest_end_to_end_gradients():
    p = init_params("forest", 8, 8, 3, 2, seed=20)
    rng = np.random.default_rng(21)
    forest = random_forest(rng, min_words=3, max_words=4, max_trees=6)
    ids = [int(i) for i in rng.integers(0, 8, forest.sentence_len)]

    def f():
        encoded = enc.encode_forest(ids, forest, p)
        total = None
        for t in encoded.attendable():
            s = nc.sum_all(nc.mul(t, t))
            total = s if total is None else nc.add(total, s)
        return total

    report = nc.grad_check(f, dict(p.items()))
    assert report.ok(1e-4), str(report)


def test_encode_forest_length_mismatch():
    p = init_params("forest", 8, 8, 3, 2, seed=20)
    f = fo.from_tree("(a b)")
    with pytest.raises(ContractError, match="covers 2 words"):
        enc.encode_forest([1, 2, 3], f, p)
