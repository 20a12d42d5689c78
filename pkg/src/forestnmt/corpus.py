"""Parallel-corpus ingestion, vocabularies, and example preparation.

Input text is assumed tokenized (and normally lowercased) upstream; the
loader only splits on whitespace. Forests or 1-best trees ride along with
the source side: forest mode reads blank-line-separated forest blocks,
tree mode reads one bracketed tree per line.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from pathlib import Path

from .errors import AlignmentError, ContractError, CorpusError
from .forest import PackedForest, Tree, enumerate_trees, from_tree, read_forest_blocks, tree_count

PAD_ID, BOS_ID, EOS_ID, UNK_ID = 0, 1, 2, 3
RESERVED = ("<pad>", "<s>", "</s>", "<unk>")


class Vocabulary:
    """Bidirectional token <-> id map with reserved sentinel ids 0..3."""

    def __init__(self, tokens: list[str]):
        self.id_to_token = list(RESERVED) + list(tokens)
        self.token_to_id = {t: i for i, t in enumerate(self.id_to_token)}
        if len(self.token_to_id) != len(self.id_to_token):
            raise ContractError("vocabulary tokens must be unique and not shadow sentinels")

    def __len__(self) -> int:
        return len(self.id_to_token)

    def id(self, token: str) -> int:
        return self.token_to_id.get(token, UNK_ID)

    def token(self, i: int) -> str:
        return self.id_to_token[i]

    def encode(self, tokens: list[str]) -> list[int]:
        return [self.token_to_id.get(t, UNK_ID) for t in tokens]

    def decode(self, ids: list[int]) -> list[str]:
        return [self.id_to_token[i] for i in ids]

    def word_tokens(self) -> list[str]:
        """Non-reserved tokens in id order (for serialization)."""
        return self.id_to_token[len(RESERVED):]


def build_vocab(sentences, min_freq: int = 5) -> Vocabulary:
    """Keep tokens seen at least min_freq times; the rest map to <unk>.

    Ids are assigned by descending frequency, ties broken by first
    occurrence, so they are deterministic across runs.
    """
    counts: Counter[str] = Counter()
    first: dict[str, int] = {}
    k = 0
    for sent in sentences:
        for tok in sent:
            counts[tok] += 1
            if tok not in first:
                first[tok] = k
                k += 1
    if not counts:
        raise CorpusError("cannot build a vocabulary from an empty corpus")
    kept = [t for t, c in counts.items() if c >= min_freq]
    kept.sort(key=lambda t: (-counts[t], first[t]))
    return Vocabulary(kept)


@dataclass
class Bitext:
    """Aligned (source tokens, target tokens, forest) triples."""

    pairs: list[tuple[list[str], list[str], PackedForest | None]]
    split: str = "train"
    dropped: int = 0

    def __len__(self) -> int:
        return len(self.pairs)

    def source_sentences(self):
        return [src for src, _, _ in self.pairs]

    def target_sentences(self):
        return [tgt for _, tgt, _ in self.pairs]


def _read_lines(path) -> list[str]:
    try:
        return Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise CorpusError(f"cannot read {path}: {exc}") from exc


def load_bitext(
    src_path,
    tgt_path,
    forest_path=None,
    max_len: int = 50,
    forest_format: str = "forest",
    lowercase: bool = False,
    split: str = "train",
) -> Bitext:
    """Load line-aligned files; drop pairs where either side exceeds
    max_len tokens (the forest block is skipped in lockstep)."""
    src_lines = _read_lines(src_path)
    tgt_lines = _read_lines(tgt_path)
    if len(src_lines) != len(tgt_lines):
        raise AlignmentError(
            f"{src_path} has {len(src_lines)} lines but {tgt_path} has {len(tgt_lines)}"
        )

    forests: list[PackedForest] | None = None
    if forest_path is not None:
        text = Path(forest_path).read_text(encoding="utf-8")
        if forest_format == "forest":
            forests = read_forest_blocks(text)
        elif forest_format == "trees":
            forests = [from_tree(line) for line in text.splitlines() if line.strip()]
        else:
            raise ContractError(f"unknown forest_format {forest_format!r}")
        if len(forests) != len(src_lines):
            raise AlignmentError(
                f"{forest_path} holds {len(forests)} forests but {src_path} has {len(src_lines)} lines"
            )

    pairs = []
    dropped = 0
    for i, (src_line, tgt_line) in enumerate(zip(src_lines, tgt_lines)):
        if lowercase:
            src_line, tgt_line = src_line.lower(), tgt_line.lower()
        src, tgt = src_line.split(), tgt_line.split()
        if not src or not tgt:
            raise CorpusError(f"line {i + 1}: empty sentence")
        if len(src) > max_len or len(tgt) > max_len:
            dropped += 1
            continue
        forest = forests[i] if forests is not None else None
        if forest is not None and forest.sentence_len != len(src):
            raise CorpusError(
                f"line {i + 1}: forest covers {forest.sentence_len} words "
                f"but the source has {len(src)}"
            )
        pairs.append((src, tgt, forest))
    return Bitext(pairs, split=split, dropped=dropped)


@dataclass
class Example:
    """One numericalized training/eval item."""

    src_ids: list[int]
    tgt_ids: list[int]  # ends with EOS
    forest: PackedForest | None
    tree: Tree | None
    src_len: int


def prepare_examples(bitext: Bitext, mode: str, src_vocab: Vocabulary,
                     tgt_vocab: Vocabulary) -> list[Example]:
    """Numericalize and extract per-mode structure (tree mode wants the
    forest's single derivation as a plain tree)."""
    out = []
    for i, (src, tgt, forest) in enumerate(bitext.pairs):
        tree = None
        if mode == "vanilla":
            forest = None
        elif forest is None:
            raise ContractError(f"{mode} mode needs forests, pair {i + 1} has none")
        elif mode == "tree":
            if tree_count(forest) != 1:
                raise ContractError(
                    f"tree mode needs single-derivation trees, pair {i + 1} has "
                    f"{tree_count(forest)} derivations"
                )
            tree = enumerate_trees(forest, limit=1)[0]
            forest = None
        out.append(
            Example(
                src_vocab.encode(src),
                tgt_vocab.encode(tgt) + [EOS_ID],
                forest,
                tree,
                len(src),
            )
        )
    return out
