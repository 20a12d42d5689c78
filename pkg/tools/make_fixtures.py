"""Regenerate the bundled corpora under src/forestnmt/data/.

Deterministic: running this script always reproduces the committed files.

toy32     32-pair memorization corpus: distinct short sources, arbitrary
          targets, simple forests (half with a packed 2-tree ambiguity).

synth500  500 train + 150 dev pairs where the target is the bracket
          SHAPE of the source's true binary parse (tokens "(", ")" and
          "w"), a deterministic function of the bracketing alone. The
          simulated parser emits the true tree, but with probability
          FAIL_RATE it falls back to a fixed right-branching chain (a
          recognizable failure mode). The 1-best tree file carries
          whatever the parser ranked first; the packed forest always
          holds BOTH candidates with the ranking expressed as edge
          probabilities. So tree mode loses the parse on failed pairs
          while forest mode always retains the true constituents.
"""

from __future__ import annotations

import sys
from collections import Counter
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from forestnmt.forest import forest_from_tree, serialize_forest, tree_to_bracketed
from forestnmt.randforest import pack_trees, random_binary_tree

DATA_DIR = Path(__file__).resolve().parent.parent / "src" / "forestnmt" / "data"

SRC_WORDS = ["ka", "re", "mo", "si", "tu", "ve"]
TGT_WORDS = ["na", "bi", "lo", "du", "pe", "go"]
TOY_SRC = ["ka", "re", "mo", "si", "tu", "ve", "pa", "ho"]
TOY_TGT = ["na", "bi", "lo", "du", "pe", "go", "fu", "wi"]

FAIL_RATE = 0.18       # the parser falls back to its default chain this often
TRUE_WEIGHT = 0.65     # forest probability mass of the better-ranked tree


def shape_target(tree) -> list[str]:
    children = tree[1]
    if not children:
        return ["w"]
    out = ["("]
    for c in children:
        out.extend(shape_target(c))
    out.append(")")
    return out


def right_chain(n: int, start: int = 0):
    if n == 1:
        return ((start, start + 1), ())
    return ((start, start + n), (((start, start + 1), ()), right_chain(n - 1, start + 1)))


def distinct_tree(rng, n, avoid):
    while True:
        t = random_binary_tree(rng, n)
        if t != avoid:
            return t


def make_toy32(rng: np.random.Generator):
    pairs = []
    seen = set()
    while len(pairs) < 32:
        n = int(rng.integers(3, 5))
        src = tuple(TOY_SRC[int(i)] for i in rng.integers(0, len(TOY_SRC), n))
        if src in seen:
            continue
        seen.add(src)
        tgt = [TOY_TGT[int(i)] for i in rng.integers(0, len(TOY_TGT), int(rng.integers(2, 4)))]
        true = random_binary_tree(rng, n)
        if rng.random() < 0.5:
            forest = pack_trees([true, distinct_tree(rng, n, true)], n, weights=[0.7, 0.3])
        else:
            forest = forest_from_tree(true, n)
        pairs.append((list(src), tgt, forest))

    counts_src = Counter(w for s, _, _ in pairs for w in s)
    counts_tgt = Counter(w for _, t, _ in pairs for w in t)
    assert min(counts_src.values()) >= 5, counts_src
    assert min(counts_tgt.values()) >= 5, counts_tgt

    out = DATA_DIR / "toy32"
    out.mkdir(parents=True, exist_ok=True)
    (out / "train.src").write_text("\n".join(" ".join(s) for s, _, _ in pairs) + "\n")
    (out / "train.tgt").write_text("\n".join(" ".join(t) for _, t, _ in pairs) + "\n")
    (out / "train.forests").write_text("\n".join(serialize_forest(f) for _, _, f in pairs))
    print(f"toy32: 32 pairs, src vocab {len(counts_src)}, tgt vocab {len(counts_tgt)}")


def make_synth_split(rng: np.random.Generator, n_pairs: int):
    rows = []
    for _ in range(n_pairs):
        n = int(rng.integers(3, 8))
        words = [SRC_WORDS[int(i)] for i in rng.integers(0, len(SRC_WORDS), n)]
        true = random_binary_tree(rng, n)
        failed = bool(rng.random() < FAIL_RATE)
        w_true = 1.0 - TRUE_WEIGHT if failed else TRUE_WEIGHT
        forest = pack_trees([true, right_chain(n)], n, weights=[w_true, 1.0 - w_true])
        one_best = right_chain(n) if failed else true
        rows.append({
            "src": " ".join(words),
            "tgt": " ".join(shape_target(true)),
            "tree": tree_to_bracketed(one_best, words),
            "forest": serialize_forest(forest),
        })
    return rows


def write_split(rows, prefix: Path):
    prefix.parent.mkdir(parents=True, exist_ok=True)
    for field, suffix in (("src", "src"), ("tgt", "tgt"), ("tree", "trees")):
        (prefix.parent / f"{prefix.name}.{suffix}").write_text(
            "\n".join(r[field] for r in rows) + "\n"
        )
    (prefix.parent / f"{prefix.name}.forests").write_text(
        "\n".join(r["forest"] for r in rows)
    )


def _is_chain_shape(tree_text: str, n: int) -> bool:
    return tree_text.count("(") == n - 1 and tree_text.endswith(")" * (n - 1))


def make_synth500(rng: np.random.Generator):
    train = make_synth_split(rng, 500)
    dev = make_synth_split(rng, 150)
    write_split(train, DATA_DIR / "synth500" / "train")
    write_split(dev, DATA_DIR / "synth500" / "dev")
    failures = sum(
        1 for r in train if _is_chain_shape(r["tree"], len(r["src"].split()))
    )
    print(f"synth500: 500 train + 150 dev pairs, ~{failures} train parses are chain fallbacks")


def main():
    make_toy32(np.random.default_rng(np.random.SeedSequence(32)))
    make_synth500(np.random.default_rng(np.random.SeedSequence(500)))


if __name__ == "__main__":
    main()
