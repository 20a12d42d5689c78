"""Random forests and tree packing.

Support machinery for the oracle suites: seeded generation of valid
forests (used by the self-check command and property tests) and packing a
set of trees into one shared forest (used to build fixtures with injected
ambiguity).
"""

from __future__ import annotations

import numpy as np

from .forest import (
    LEAF,
    PHRASE,
    ForestNode,
    Hyperedge,
    PackedForest,
    Span,
    Tree,
)


def random_binary_tree(rng: np.random.Generator, n: int, start: int = 0) -> Tree:
    """Uniform-split random binary bracketing over words start..start+n."""
    if n == 1:
        return ((start, start + 1), ())
    k = int(rng.integers(1, n))
    left = random_binary_tree(rng, k, start)
    right = random_binary_tree(rng, n - k, start + k)
    return ((start, start + n), (left, right))


def _compositions(rng: np.random.Generator, start: int, end: int, m: int) -> list[tuple[Span, ...]]:
    """Up to m distinct ordered span partitions of (start, end)."""
    width = end - start
    seen: set[tuple[Span, ...]] = set()
    out: list[tuple[Span, ...]] = []
    for _ in range(4 * m):
        if len(out) == m:
            break
        arity = 3 if width >= 3 and rng.random() < 0.25 else 2
        cuts = sorted(rng.choice(np.arange(start + 1, end), size=arity - 1, replace=False).tolist())
        bounds = [start] + cuts + [end]
        tails = tuple((bounds[i], bounds[i + 1]) for i in range(len(bounds) - 1))
        if tails not in seen:
            seen.add(tails)
            out.append(tails)
    return out


def random_forest(
    rng: np.random.Generator,
    min_words: int = 2,
    max_words: int = 7,
    ambiguity: float = 0.4,
    max_trees: int = 10_000,
    unary_rate: float = 0.1,
) -> PackedForest:
    """Seeded random valid forest with bounded tree count.

    Spans are shared top-down (packing); each phrase span gets one or more
    alternative hyperedges, occasionally with arity 3, plus an occasional
    width-1 phrase node over a leaf to exercise unary edges.
    """
    from .forest import tree_count

    while True:
        n = int(rng.integers(min_words, max_words + 1))
        nodes: dict[int, ForestNode] = {w: ForestNode(w, w, w + 1, LEAF) for w in range(n)}
        next_id = n
        span_node: dict[Span, int] = {}
        edges: list[Hyperedge] = []
        unary_of: dict[int, int] = {}

        def phrase_id(span: Span) -> int:
            nonlocal next_id
            if span not in span_node:
                span_node[span] = next_id
                nodes[next_id] = ForestNode(next_id, span[0], span[1], PHRASE)
                next_id += 1
            return span_node[span]

        def leafish(pos: int) -> int:
            """A leaf, or (rarely) a width-1 phrase over it."""
            nonlocal next_id
            if pos in unary_of:
                return unary_of[pos] if rng.random() < 0.5 else pos
            if rng.random() < unary_rate:
                nid = next_id
                next_id += 1
                nodes[nid] = ForestNode(nid, pos, pos + 1, PHRASE)
                edges.append(Hyperedge(nid, (pos,), 1.0))
                unary_of[pos] = nid
                return nid
            return pos

        todo = [(0, n)]
        done: set[Span] = set()
        phrase_id((0, n))
        while todo:
            span = todo.pop()
            if span in done:
                continue
            done.add(span)
            head = span_node[span]
            m = 1 + (1 if rng.random() < ambiguity else 0) + (1 if rng.random() < ambiguity / 3 else 0)
            group = []
            for tails_spans in _compositions(rng, span[0], span[1], m):
                tails = []
                for s in tails_spans:
                    if s[1] - s[0] == 1:
                        tails.append(leafish(s[0]))
                    else:
                        tails.append(phrase_id(s))
                        todo.append(s)
                group.append(tuple(tails))
            probs = rng.uniform(0.2, 1.0, size=len(group))
            probs /= probs.sum()
            for tails, p in zip(group, probs):
                edges.append(Hyperedge(head, tails, float(p)))

        forest = PackedForest(n, nodes, edges, span_node[(0, n)])
        if tree_count(forest) <= max_trees:
            return forest


def pack_trees(trees: list[Tree], sentence_len: int, weights: list[float] | None = None) -> PackedForest:
    """Pack trees into one forest: shared span nodes, union of edges.

    Each edge's probability is the total weight of the trees using it,
    normalized per head. Trees must not contain unary chains (one phrase
    node per span).
    """
    if weights is None:
        weights = [1.0] * len(trees)
    nodes: dict[int, ForestNode] = {w: ForestNode(w, w, w + 1, LEAF) for w in range(sentence_len)}
    span_node: dict[Span, int] = {}
    next_id = sentence_len
    edge_weight: dict[tuple[int, tuple[int, ...]], float] = {}
    edge_order: list[tuple[int, tuple[int, ...]]] = []

    def node_for(span: Span) -> int:
        nonlocal next_id
        if span[1] - span[0] == 1:
            return span[0]
        if span not in span_node:
            span_node[span] = next_id
            nodes[next_id] = ForestNode(next_id, span[0], span[1], PHRASE)
            next_id += 1
        return span_node[span]

    def add(tree: Tree, w: float) -> int:
        span, children = tree
        nid = node_for(span)
        if not children:
            return nid
        tails = tuple(add(c, w) for c in children)
        key = (nid, tails)
        if key not in edge_weight:
            edge_weight[key] = 0.0
            edge_order.append(key)
        edge_weight[key] += w
        return nid

    roots = {add(t, w) for t, w in zip(trees, weights)}
    if len(roots) != 1:
        raise ValueError("trees must all span the same sentence")

    by_head: dict[int, float] = {}
    for (head, _), w in edge_weight.items():
        by_head[head] = by_head.get(head, 0.0) + w
    edges = [
        Hyperedge(head, tails, edge_weight[(head, tails)] / by_head[head])
        for head, tails in edge_order
    ]
    return PackedForest(sentence_len, nodes, edges, roots.pop())
