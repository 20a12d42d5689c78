"""Packed parse forests.

A forest is a hypergraph over sentence spans: nodes are spans, hyperedges
are one way of building a span from an ordered list of child spans, with a
probability per edge. Exponentially many trees share structure through the
packing invariant enforced here: at most one phrase node per span (plus the
implicit leaf per word), so distinct derivations correspond one-to-one to
distinct trees.

File format (one forest per blank-line-separated block)::

    sent <k>                      word count; leaves get ids 0..k-1
    probs log                     optional: edge probs are natural logs
    node <id> <start> <end>       phrase node over half-open span
    edge <head> <p> <t1> ... <tm> one derivation of <head>

Incoming-edge probabilities are normalized per head node at load time and
unreachable nodes are pruned.

Trees are nested span structures: ``((start, end), (child, ...))`` with an
empty child tuple for leaves.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .errors import CapacityError, ForestFormatError

Span = tuple[int, int]
Tree = tuple  # (Span, tuple[Tree, ...])

LEAF = "leaf"
PHRASE = "phrase"


@dataclass(frozen=True)
class ForestNode:
    id: int
    start: int
    end: int
    kind: str

    @property
    def span(self) -> Span:
        return (self.start, self.end)

    @property
    def width(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class Hyperedge:
    head: int
    tails: tuple[int, ...]
    prob: float


@dataclass
class PackedForest:
    sentence_len: int
    nodes: dict[int, ForestNode]
    edges: list[Hyperedge]
    root_id: int
    incoming: dict[int, list[Hyperedge]] = field(init=False)

    def __post_init__(self):
        self.incoming = {nid: [] for nid in self.nodes}
        for e in self.edges:
            self.incoming[e.head].append(e)

    @property
    def phrase_ids(self) -> list[int]:
        """Phrase node ids in topological order (the attention indexing)."""
        return [nid for nid in topo_order(self) if self.nodes[nid].kind == PHRASE]

    def leaf_id(self, position: int) -> int:
        return position


def _fail(msg: str, line: int | None) -> None:
    raise ForestFormatError(msg, line)


def parse_forest(text: str, line_offset: int = 0) -> PackedForest:
    """Parse and validate one forest block.

    Returns a pruned forest with per-head normalized edge probabilities.
    Raises ForestFormatError (with the offending 1-based line number) on
    span violations, cycles, duplicate ids or spans, nonpositive
    probabilities, or a missing/ambiguous root.
    """
    sent_len = None
    log_probs = False
    nodes: dict[int, ForestNode] = {}
    span_owner: dict[Span, int] = {}
    raw_edges: list[tuple[Hyperedge, int]] = []
    seen_edges: set[tuple[int, tuple[int, ...]]] = set()

    for i, raw in enumerate(text.splitlines()):
        ln = line_offset + i + 1
        parts = raw.split()
        if not parts:
            continue
        tag = parts[0]
        if tag == "sent":
            if sent_len is not None:
                _fail("repeated 'sent' line", ln)
            try:
                sent_len = int(parts[1])
            except (IndexError, ValueError):
                _fail("expected 'sent <word-count>'", ln)
            if sent_len < 1:
                _fail(f"word count must be >= 1, got {sent_len}", ln)
            for w in range(sent_len):
                nodes[w] = ForestNode(w, w, w + 1, LEAF)
                span_owner[(w, w + 1)] = w
        elif sent_len is None:
            _fail("forest must start with a 'sent' line", ln)
        elif tag == "probs":
            if len(parts) != 2 or parts[1] not in ("log", "raw"):
                _fail("expected 'probs log' or 'probs raw'", ln)
            log_probs = parts[1] == "log"
        elif tag == "node":
            if len(parts) != 4:
                _fail("expected 'node <id> <start> <end>'", ln)
            try:
                nid, start, end = (int(p) for p in parts[1:])
            except ValueError:
                _fail("node fields must be integers", ln)
            if nid in nodes:
                _fail(f"duplicate node id {nid}", ln)
            if nid < sent_len:
                _fail(f"node id {nid} is reserved for a leaf (ids 0..{sent_len - 1})", ln)
            if not (0 <= start < end <= sent_len):
                _fail(f"span ({start},{end}) outside sentence of {sent_len} words", ln)
            span = (start, end)
            if span in span_owner and nodes[span_owner[span]].kind == PHRASE:
                _fail(f"duplicate phrase span ({start},{end}); a packed forest has one node per span", ln)
            nodes[nid] = ForestNode(nid, start, end, PHRASE)
            if end - start > 1:
                span_owner[span] = nid
        elif tag == "edge":
            if len(parts) < 4:
                _fail("expected 'edge <head> <prob> <tail> [<tail> ...]'", ln)
            try:
                head = int(parts[1])
                prob = float(parts[2])
                tails = tuple(int(p) for p in parts[3:])
            except ValueError:
                _fail("edge fields must be numbers", ln)
            # node declarations may follow; existence checks happen below
            if (head, tails) in seen_edges:
                _fail(f"duplicate edge {head} <- {list(tails)}", ln)
            seen_edges.add((head, tails))
            raw_edges.append((Hyperedge(head, tails, prob), ln))
        else:
            _fail(f"unknown line tag {tag!r}", ln)

    if sent_len is None:
        _fail("empty forest block (no 'sent' line)", line_offset + 1)

    for e, ln in raw_edges:
        if e.head not in nodes:
            _fail(f"edge head {e.head} is not a declared node", ln)
        if nodes[e.head].kind == LEAF:
            _fail(f"edge head {e.head} is a leaf; leaves have no derivations", ln)
        for t in e.tails:
            if t not in nodes:
                _fail(f"edge tail {t} is not a declared node", ln)
        if log_probs:
            if not np.isfinite(e.prob):
                _fail(f"non-finite log probability {e.prob}", ln)
        elif not (e.prob > 0.0 and np.isfinite(e.prob)):
            _fail(f"probability must be positive and finite, got {e.prob}", ln)
        hn = nodes[e.head]
        pos = hn.start
        ok = True
        for t in e.tails:
            tn = nodes[t]
            if tn.start != pos:
                ok = False
                break
            pos = tn.end
        if not ok or pos != hn.end:
            _fail(
                f"tail spans of edge {e.head} <- {list(e.tails)} must tile "
                f"({hn.start},{hn.end}) contiguously in order",
                ln,
            )

    # root: the phrase node spanning the whole sentence (the lone leaf for k=1)
    full = [n.id for n in nodes.values() if n.span == (0, sent_len) and n.kind == PHRASE]
    if len(full) > 1:
        _fail(f"multiple root nodes span the whole sentence: {sorted(full)}", None)
    if not full:
        if sent_len == 1:
            root_id = 0
        else:
            _fail("missing root node spanning the whole sentence", None)
    else:
        root_id = full[0]

    # acyclicity over the declared graph (unary leaf->phrase chains could loop)
    _check_acyclic(nodes, raw_edges)

    # prune to what the root can derive
    incoming: dict[int, list[Hyperedge]] = {nid: [] for nid in nodes}
    for e, _ in raw_edges:
        incoming[e.head].append(e)
    reachable = {root_id}
    stack = [root_id]
    while stack:
        for e in incoming[stack.pop()]:
            for t in e.tails:
                if t not in reachable:
                    reachable.add(t)
                    stack.append(t)
    reachable.update(range(sent_len))  # leaves always carry word states

    kept_nodes = {nid: n for nid, n in nodes.items() if nid in reachable}
    for nid, n in kept_nodes.items():
        if n.kind == PHRASE and not incoming[nid]:
            _fail(f"phrase node {nid} spanning {n.span} has no derivation", None)

    # per-head probability normalization (stable in log mode), keeping the
    # input edge order so phrase fusion sees a reproducible child sequence
    norm: dict[tuple[int, tuple[int, ...]], float] = {}
    for nid in kept_nodes:
        group = incoming[nid]
        if not group:
            continue
        p = np.array([e.prob for e in group], dtype=np.float64)
        if log_probs:
            p = np.exp(p - p.max())
        p /= p.sum()
        for e, pi in zip(group, p):
            norm[(e.head, e.tails)] = float(pi)

    kept_edges = [
        Hyperedge(e.head, e.tails, norm[(e.head, e.tails)])
        for e, _ in raw_edges
        if e.head in kept_nodes
    ]
    return PackedForest(sent_len, kept_nodes, kept_edges, root_id)


def _check_acyclic(nodes, raw_edges) -> None:
    preds: dict[int, set[int]] = {nid: set() for nid in nodes}
    succs: dict[int, set[int]] = {nid: set() for nid in nodes}
    for e, _ in raw_edges:
        for t in e.tails:
            preds[e.head].add(t)
            succs[t].add(e.head)
    indeg = {nid: len(p) for nid, p in preds.items()}
    ready = [nid for nid, d in indeg.items() if d == 0]
    seen = 0
    while ready:
        nid = ready.pop()
        seen += 1
        for s in succs[nid]:
            indeg[s] -= 1
            if indeg[s] == 0:
                ready.append(s)
    if seen != len(nodes):
        cyc = sorted(nid for nid, d in indeg.items() if d > 0)
        _fail(f"cycle among nodes {cyc}", None)


def topo_order(forest: PackedForest) -> list[int]:
    """Deterministic bottom-up node order.

    Every node appears after all tails of all its incoming hyperedges.
    Ready nodes are emitted smallest-first by (span width, leaf-before-
    phrase, start, id), so leaves come first and the phrase indexing used
    by attention is stable across runs.
    """
    preds: dict[int, set[int]] = {nid: set() for nid in forest.nodes}
    succs: dict[int, set[int]] = {nid: set() for nid in forest.nodes}
    for e in forest.edges:
        for t in e.tails:
            preds[e.head].add(t)
            succs[t].add(e.head)

    def key(nid: int):
        n = forest.nodes[nid]
        return (n.width, 0 if n.kind == LEAF else 1, n.start, nid)

    indeg = {nid: len(p) for nid, p in preds.items()}
    heap = [key(nid) for nid, d in indeg.items() if d == 0]
    heapq.heapify(heap)
    out: list[int] = []
    while heap:
        nid = heapq.heappop(heap)[3]
        out.append(nid)
        for s in sorted(succs[nid]):
            indeg[s] -= 1
            if indeg[s] == 0:
                heapq.heappush(heap, key(s))
    return out


def tree_count(forest: PackedForest) -> int:
    """Number of distinct parse trees (exact, arbitrary precision)."""
    counts: dict[int, int] = {}
    for nid in topo_order(forest):
        node = forest.nodes[nid]
        if node.kind == LEAF:
            counts[nid] = 1
        else:
            total = 0
            for e in forest.incoming[nid]:
                prod = 1
                for t in e.tails:
                    prod *= counts[t]
                total += prod
            counts[nid] = total
    return counts[forest.root_id]


def enumerate_trees(forest: PackedForest, limit: int = 10_000) -> list[Tree]:
    """All distinct trees, as nested span structures (the test oracle)."""
    n = tree_count(forest)
    if n > limit:
        raise CapacityError(f"forest encodes {n} trees, above the limit of {limit}")
    trees: dict[int, list[Tree]] = {}
    for nid in topo_order(forest):
        node = forest.nodes[nid]
        if node.kind == LEAF:
            trees[nid] = [(node.span, ())]
        else:
            out = []
            for e in forest.incoming[nid]:
                for combo in product(*(trees[t] for t in e.tails)):
                    out.append((node.span, tuple(combo)))
            trees[nid] = out
    return trees[forest.root_id]


# ---- bracketed trees ----

def parse_bracketed(text: str) -> tuple[Tree, list[str]]:
    """Parse '(w0 (w1 w2))' into a nested span tree plus the word list."""
    tokens = text.replace("(", " ( ").replace(")", " ) ").split()
    if not tokens:
        raise ForestFormatError("empty tree text")
    words: list[str] = []
    pos = 0

    def parse(at: int) -> tuple[Tree, int]:
        nonlocal pos
        if tokens[at] == ")":
            raise ForestFormatError("unbalanced ')' in tree text")
        if tokens[at] != "(":
            words.append(tokens[at])
            pos += 1
            return ((pos - 1, pos), ()), at + 1
        children = []
        at += 1
        while at < len(tokens) and tokens[at] != ")":
            child, at = parse(at)
            children.append(child)
        if at >= len(tokens):
            raise ForestFormatError("unbalanced '(' in tree text")
        if not children:
            raise ForestFormatError("empty '()' group in tree text")
        start = children[0][0][0]
        end = children[-1][0][1]
        return ((start, end), tuple(children)), at + 1

    tree, consumed = parse(0)
    if consumed != len(tokens):
        if tokens[consumed] == ")":
            raise ForestFormatError("unbalanced ')' in tree text")
        raise ForestFormatError("tree text must contain exactly one tree")
    return tree, words


def tree_to_bracketed(tree: Tree, words: list[str]) -> str:
    (start, end), children = tree
    if not children:
        return words[start]
    return "(" + " ".join(tree_to_bracketed(c, words) for c in children) + ")"


def forest_from_tree(tree: Tree, sentence_len: int) -> PackedForest:
    """Pack a single tree: one derivation everywhere, all probs 1."""
    nodes: dict[int, ForestNode] = {
        w: ForestNode(w, w, w + 1, LEAF) for w in range(sentence_len)
    }
    edges: list[Hyperedge] = []
    next_id = sentence_len
    span_node: dict[Span, int] = {}

    def build(t: Tree) -> int:
        nonlocal next_id
        (start, end), children = t
        if not children:
            return start
        tails = tuple(build(c) for c in children)
        span = (start, end)
        if span in span_node:
            raise ForestFormatError(
                f"tree repeats span ({start},{end}); nested unary chains are not representable"
            )
        nid = next_id
        next_id += 1
        span_node[span] = nid
        nodes[nid] = ForestNode(nid, start, end, PHRASE)
        edges.append(Hyperedge(nid, tails, 1.0))
        return nid

    root = build(tree)
    return PackedForest(sentence_len, nodes, edges, root)


def from_tree(text: str) -> PackedForest:
    """Bracketed tree text -> single-derivation forest (tree_count 1)."""
    tree, words = parse_bracketed(text)
    return forest_from_tree(tree, len(words))


def serialize_forest(forest: PackedForest) -> str:
    """Render a forest in the line-based file format (raw probabilities)."""
    lines = [f"sent {forest.sentence_len}"]
    for nid in sorted(forest.nodes):
        n = forest.nodes[nid]
        if n.kind == PHRASE:
            lines.append(f"node {n.id} {n.start} {n.end}")
    for e in forest.edges:
        tails = " ".join(str(t) for t in e.tails)
        lines.append(f"edge {e.head} {e.prob!r} {tails}")
    return "\n".join(lines) + "\n"


def read_forest_blocks(text: str) -> list[PackedForest]:
    """Split file text into blank-line-separated blocks and parse each."""
    forests = []
    block: list[str] = []
    start_line = 0
    for i, line in enumerate(text.splitlines() + [""]):
        if line.strip():
            if not block:
                start_line = i
            block.append(line)
        elif block:
            forests.append(parse_forest("\n".join(block), line_offset=start_line))
            block = []
    return forests
