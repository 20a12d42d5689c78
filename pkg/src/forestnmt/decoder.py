"""Attentional deep-output decoder with input feeding.

One decoder serves all three modes; the only difference is the attendable
state set (words; words + tree phrases; words + forest phrases) and the
initial state (final word state, or a combiner of the final word state
with the root phrase state).

Per step, scores over every attendable state share one scoring function
and one softmax, so the weights partition into a word mass and a phrase
mass that sum to 1. The state projection of the score function is stored
transposed so a whole sentence's states are projected as one matrix
product when decoding starts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError
from .corpus import BOS_ID, EOS_ID
from .encoder import EncodedSource, tree_lstm_combine
from .numcore import (
    Tensor,
    add,
    cross_entropy_logits,
    lookup,
    matmul,
    softmax,
    stack,
    tanh,
    zeros,
)
from .params import ModelParams


@dataclass
class AttentionRecord:
    """Per-step attention weights, split into word and phrase parts."""

    mode: str
    n: int
    steps: list[tuple[np.ndarray, np.ndarray]] = field(default_factory=list)
    truncated: bool = False

    def add_step(self, weights: np.ndarray) -> None:
        self.steps.append((weights[: self.n].copy(), weights[self.n:].copy()))

    @property
    def word_mass(self) -> float:
        return float(sum(w.sum() for w, _ in self.steps))

    @property
    def phrase_mass(self) -> float:
        return float(sum(p.sum() for _, p in self.steps))


class Attention:
    """Attendable states of one sentence, projected once."""

    def __init__(self, encoded: EncodedSource, p: ModelParams):
        states = encoded.attendable()
        self.n = encoded.n
        self.size = len(states)
        self.states = stack(states)                      # (N, H)
        self.projected = matmul(self.states, p["att.Wae"])  # (N, H)


def _check_mode(encoded: EncodedSource, p: ModelParams) -> None:
    if encoded.mode != p.mode:
        raise ContractError(
            f"decoder: encoding was built in {encoded.mode!r} mode but parameters are {p.mode!r}"
        )


def init_state(encoded: EncodedSource, p: ModelParams) -> Tensor:
    """Initial decoder state: h_n, or combiner(h_n, root phrase state)."""
    _check_mode(encoded, p)
    if p.mode == "vanilla":
        return encoded.final_word[0]
    if encoded.root is None:
        raise ContractError("init_state: encoding has no root phrase state")
    return tree_lstm_combine(encoded.final_word, encoded.root, p, cell="ginit")[0]


def attention_context(g_prev: Tensor, att: Attention | EncodedSource,
                      p: ModelParams) -> tuple[Tensor, np.ndarray]:
    """Score every attendable state against g_prev, softmax once over the
    concatenated scores, and return the weighted state sum plus weights."""
    if isinstance(att, EncodedSource):
        _check_mode(att, p)
        att = Attention(att, p)
    query = matmul(g_prev, p["att.Wag"])            # (H,)
    scores = matmul(tanh(add(att.projected, query)), p["att.v"])  # (N,)
    alpha = softmax(scores)
    context = matmul(alpha, att.states)             # (H,)
    return context, alpha.data.copy()


def decode_step(prev: tuple[Tensor, Tensor, int], att: Attention | EncodedSource,
                p: ModelParams) -> tuple[Tensor, Tensor, Tensor, np.ndarray]:
    """One decoding step from (g_{j-1}, u_{j-1}, y_{j-1}); returns
    (g_j, u_j, distribution over the target vocabulary, weights)."""
    g, u, logits, weights = _step(prev, att, p)
    return g, u, softmax(logits), weights


def _step(prev, att, p):
    if isinstance(att, EncodedSource):
        _check_mode(att, p)
        att = Attention(att, p)
    g_prev, u_prev, y_prev = prev
    e_y = lookup(p["tgt_embed"], y_prev)
    context, weights = attention_context(g_prev, att, p)
    g = tanh(
        add(
            add(matmul(p["dec.Wgh"], g_prev), matmul(p["dec.Wgi"], e_y)),
            add(matmul(p["dec.Wga"], context), matmul(p["dec.Wgu"], u_prev)),
        )
    )
    u = tanh(add(add(matmul(p["dec.Wuc"], context), matmul(p["dec.Wui"], e_y)), g))
    logits = add(matmul(p["dec.Wou"], u), p["dec.bo"])
    return g, u, logits, weights


def sentence_loss(encoded: EncodedSource, target_ids: list[int], p: ModelParams) -> Tensor:
    """Teacher-forced negative log-likelihood, summed over target tokens.

    The target must end with EOS; BOS is fed as y_0, never predicted.
    """
    _check_mode(encoded, p)
    if not target_ids or target_ids[-1] != EOS_ID:
        raise ContractError("sentence_loss: target must end with EOS")
    if any(not 0 <= t < p.tgt_vocab_size for t in target_ids):
        raise ContractError("sentence_loss: target id outside the vocabulary")
    att = Attention(encoded, p)
    g = init_state(encoded, p)
    u = zeros(p.hidden)
    y = BOS_ID
    loss = None
    for t in target_ids:
        g, u, logits, _ = _step((g, u, y), att, p)
        ce = cross_entropy_logits(logits, t)
        loss = ce if loss is None else add(loss, ce)
        y = t
    return loss


def greedy_decode(encoded: EncodedSource, p: ModelParams,
                  max_len: int | None = None) -> tuple[list[int], AttentionRecord]:
    """Argmax decoding (ties break to the lowest id); stops at EOS or
    max_len (default 2n+5, flagged as truncated). BOS/EOS are stripped;
    attention is recorded for every executed step, EOS step included."""
    _check_mode(encoded, p)
    if max_len is None:
        max_len = 2 * encoded.n + 5
    if max_len < 1:
        raise ContractError("greedy_decode: max_len must be >= 1")
    att = Attention(encoded, p)
    record = AttentionRecord(p.mode, encoded.n)
    g = init_state(encoded, p)
    u = zeros(p.hidden)
    y = BOS_ID
    out: list[int] = []
    for _ in range(max_len):
        g, u, logits, weights = _step((g, u, y), att, p)
        record.add_step(weights)
        y = int(np.argmax(logits.data))
        if y == EOS_ID:
            return out, record
        out.append(y)
    record.truncated = True
    return out, record
