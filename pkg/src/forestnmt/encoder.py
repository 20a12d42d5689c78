"""Source-side encoders.

Three layers share one parameter store:

* sequential LSTM over words (context-dependent word states),
* binary tree-LSTM combining two child (h, c) states into a phrase state,
* derivation fusion, which merges the alternative tree-LSTM embeddings of
  one phrase (one per incoming hyperedge, weighted by its probability)
  into a single unified embedding used by all higher spans.

Non-binary hyperedges are folded left-to-right through the binary cell;
unary hyperedges combine the child with a zero right slot. Fusion runs
even for single-derivation phrases, so the parametrization is uniform.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ContractError
from .forest import LEAF, PackedForest, Tree, topo_order
from .numcore import Tensor, add, concat, lookup, matmul, mul, scale, sigmoid, sub, tanh, zeros
from .params import ModelParams

State = tuple[Tensor, Tensor]  # (h, c)


@dataclass
class EncodedSource:
    """Everything the decoder may attend to, plus the init states."""

    word_h: list[Tensor]
    word_c: list[Tensor]
    phrase_h: list[Tensor]
    phrase_c: list[Tensor]
    root: State | None  # unified state of the root phrase (None in vanilla mode)
    mode: str

    @property
    def n(self) -> int:
        return len(self.word_h)

    @property
    def final_word(self) -> State:
        return (self.word_h[-1], self.word_c[-1])

    def attendable(self) -> list[Tensor]:
        """Word states then phrase states; indices are stable across runs."""
        return self.word_h + self.phrase_h


def _gate(p: ModelParams, w: str, x: Tensor, u: str, h: Tensor, b: str) -> Tensor:
    return add(add(matmul(p[w], x), matmul(p[u], h)), p[b])


def lstm_step(p: ModelParams, x: Tensor, h_prev: Tensor, c_prev: Tensor) -> State:
    i = sigmoid(_gate(p, "seq.W_i", x, "seq.U_i", h_prev, "seq.b_i"))
    f = sigmoid(_gate(p, "seq.W_f", x, "seq.U_f", h_prev, "seq.b_f"))
    o = sigmoid(_gate(p, "seq.W_o", x, "seq.U_o", h_prev, "seq.b_o"))
    c_tilde = tanh(_gate(p, "seq.W_c", x, "seq.U_c", h_prev, "seq.b_c"))
    c = add(mul(i, c_tilde), mul(f, c_prev))
    return (mul(o, tanh(c)), c)


def encode_sequence(word_ids: list[int], p: ModelParams) -> tuple[list[Tensor], list[Tensor]]:
    """Run the sequential LSTM; h_0 = c_0 = 0."""
    if not word_ids:
        raise ContractError("encode_sequence: empty sentence")
    h = zeros(p.hidden)
    c = zeros(p.hidden)
    hs: list[Tensor] = []
    cs: list[Tensor] = []
    for w in word_ids:
        h, c = lstm_step(p, lookup(p["src_embed"], w), h, c)
        hs.append(h)
        cs.append(c)
    return hs, cs


def tree_lstm_combine(left: State, right: State, p: ModelParams, cell: str = "tree") -> State:
    """Binary tree-LSTM cell: parent state from two child (h, c) states."""
    hl, cl = left
    hr, cr = right

    def gate(name: str) -> Tensor:
        return add(
            add(matmul(p[f"{cell}.Ul_{name}"], hl), matmul(p[f"{cell}.Ur_{name}"], hr)),
            p[f"{cell}.b_{name}"],
        )

    i = sigmoid(gate("i"))
    fl = sigmoid(gate("fl"))
    fr = sigmoid(gate("fr"))
    o = sigmoid(gate("o"))
    c_tilde = tanh(gate("c"))
    c = add(add(mul(i, c_tilde), mul(fl, cl)), mul(fr, cr))
    return (mul(o, tanh(c)), c)


def derive_edge_embedding(child_states: list[State], p: ModelParams) -> State:
    """Tree-LSTM embedding for one hyperedge's ordered children.

    Arity 1 combines against a zero right slot; arity > 2 left-folds the
    binary cell (the intermediate fold states are never attended to).
    """
    if not child_states:
        raise ContractError("derive_edge_embedding: edge with no children")
    if len(child_states) == 1:
        z = zeros(p.hidden)
        return tree_lstm_combine(child_states[0], (z, z), p)
    acc = child_states[0]
    for nxt in child_states[1:]:
        acc = tree_lstm_combine(acc, nxt, p)
    return acc


def forest_lstm_fuse(children: list[tuple[State, float]], p: ModelParams) -> State:
    """Fuse the alternative derivation embeddings of one phrase.

    `children` holds one ((h, c), prob) per derivation; probabilities must
    sum to 1. Each derivation gets a probability embedding computed from
    the other derivations' states, its own state, and its probability;
    gates consume the summed [state; probability-embedding] pairs, with a
    per-derivation forget gate that separates "own" from "other" weights.
    """
    if not children:
        raise ContractError("forest_lstm_fuse: no derivations to fuse")
    total = sum(prob for _, prob in children)
    if abs(total - 1.0) > 1e-9:
        raise ContractError(f"forest_lstm_fuse: probabilities sum to {total!r}, not 1")

    hs = [h for (h, _), _ in children]
    cs = [c for (_, c), _ in children]
    probs = [prob for _, prob in children]

    s_all = hs[0]
    for h in hs[1:]:
        s_all = add(s_all, h)

    zs = []
    for h, prob in zip(hs, probs):
        others = sub(s_all, h)
        gamma = tanh(
            add(
                add(matmul(p["fuse.Ug"], others), matmul(p["fuse.Wg"], h)),
                add(scale(p["fuse.vg"], prob), p["fuse.bg"]),
            )
        )
        zs.append(concat([h, gamma]))

    z_all = zs[0]
    for z in zs[1:]:
        z_all = add(z_all, z)

    i = sigmoid(add(matmul(p["fuse.U_i"], z_all), p["fuse.b_i"]))
    o = sigmoid(add(matmul(p["fuse.U_o"], z_all), p["fuse.b_o"]))
    c_tilde = tanh(add(matmul(p["fuse.U_c"], z_all), p["fuse.b_c"]))

    c = mul(i, c_tilde)
    for z, c_l in zip(zs, cs):
        f_l = sigmoid(
            add(
                add(matmul(p["fuse.U_f"], sub(z_all, z)), matmul(p["fuse.W_f"], z)),
                p["fuse.b_f"],
            )
        )
        c = add(c, mul(f_l, c_l))
    return (mul(o, tanh(c)), c)


def encode_forest(word_ids: list[int], forest: PackedForest, p: ModelParams) -> EncodedSource:
    """Words through the sequential LSTM, then one unified (h, c) per
    phrase node in topological order; leaves reuse the word states."""
    if forest.sentence_len != len(word_ids):
        raise ContractError(
            f"encode_forest: forest covers {forest.sentence_len} words, sentence has {len(word_ids)}"
        )
    hs, cs = encode_sequence(word_ids, p)
    unified: dict[int, State] = {i: (hs[i], cs[i]) for i in range(len(word_ids))}
    phrase_h: list[Tensor] = []
    phrase_c: list[Tensor] = []
    for nid in topo_order(forest):
        node = forest.nodes[nid]
        if node.kind == LEAF:
            continue
        fused = forest_lstm_fuse(
            [
                (derive_edge_embedding([unified[t] for t in e.tails], p), e.prob)
                for e in forest.incoming[nid]
            ],
            p,
        )
        unified[nid] = fused
        phrase_h.append(fused[0])
        phrase_c.append(fused[1])
    return EncodedSource(hs, cs, phrase_h, phrase_c, unified[forest.root_id], "forest")


def _check_binary(tree: Tree) -> None:
    span, children = tree
    if len(children) not in (0, 2):
        raise ContractError(f"encode_tree: node over span {span} has {len(children)} children; the tree baseline is binary")
    for c in children:
        _check_binary(c)


def encode_tree(word_ids: list[int], tree: Tree, p: ModelParams) -> EncodedSource:
    """Tree-to-sequence baseline: phrase states by the binary tree-LSTM
    only, in left-to-right post-order (2n-1 attendable states)."""
    _check_binary(tree)
    if tree[0] != (0, len(word_ids)):
        raise ContractError(
            f"encode_tree: tree spans {tree[0]}, sentence has {len(word_ids)} words"
        )
    hs, cs = encode_sequence(word_ids, p)
    phrase_h: list[Tensor] = []
    phrase_c: list[Tensor] = []

    def walk(t: Tree) -> State:
        (start, _), children = t
        if not children:
            return (hs[start], cs[start])
        state = tree_lstm_combine(walk(children[0]), walk(children[1]), p)
        phrase_h.append(state[0])
        phrase_c.append(state[1])
        return state

    root = walk(tree)
    return EncodedSource(hs, cs, phrase_h, phrase_c, root, "tree")


def encode_vanilla(word_ids: list[int], p: ModelParams) -> EncodedSource:
    hs, cs = encode_sequence(word_ids, p)
    return EncodedSource(hs, cs, [], [], None, "vanilla")


def encode(word_ids: list[int], p: ModelParams, forest: PackedForest | None = None,
           tree: Tree | None = None) -> EncodedSource:
    """Encode per the parameters' mode, given whatever structure it needs."""
    if p.mode == "vanilla":
        return encode_vanilla(word_ids, p)
    if p.mode == "tree":
        if tree is None:
            raise ContractError("tree mode needs a parse tree")
        return encode_tree(word_ids, tree, p)
    if forest is None:
        raise ContractError("forest mode needs a packed forest")
    return encode_forest(word_ids, forest, p)
