"""Evaluation: corpus BLEU, length-bucketed BLEU, perplexity, and the
phrase/word attention-ratio diagnostic.

BLEU follows the reference multi-bleu script's arithmetic exactly:
corpus-level modified n-gram precision up to 4-grams with no smoothing, a
geometric mean over the four orders, and the brevity penalty
exp(1 - r/h) when the hypothesis side is shorter. Any zero precision
(including missing orders when every sentence is shorter than n words)
makes the whole score 0, with a warning.
"""

from __future__ import annotations

import math
import warnings
from collections import Counter
from dataclasses import dataclass, field

from .corpus import Example
from .decoder import AttentionRecord, sentence_loss
from .encoder import encode
from .errors import AlignmentError, ContractError, CorpusError
from .params import ModelParams

BUCKETS = (("<=10", 0, 10), ("11-20", 10, 20), (">20", 20, 10 ** 9))


@dataclass
class BleuReport:
    bleu: float
    precisions: list[float]
    brevity_penalty: float
    hyp_len: int
    ref_len: int
    zero_precision: bool

    @property
    def ratio(self) -> float:
        return self.hyp_len / self.ref_len if self.ref_len else 0.0

    def pretty(self) -> str:
        p = "/".join(f"{100 * x:.1f}" for x in self.precisions)
        return (
            f"BLEU = {self.bleu:.2f}, {p} "
            f"(BP={self.brevity_penalty:.3f}, ratio={self.ratio:.3f}, "
            f"hyp_len={self.hyp_len}, ref_len={self.ref_len})"
        )


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def corpus_bleu(hypotheses: list[list[str]], references: list[list[str]]) -> BleuReport:
    """Corpus-level BLEU-4 with clipped counts and brevity penalty."""
    if len(hypotheses) != len(references):
        raise AlignmentError(
            f"{len(hypotheses)} hypotheses vs {len(references)} references"
        )
    if not hypotheses:
        raise CorpusError("BLEU over an empty corpus")
    correct = [0] * 4
    total = [0] * 4
    hyp_len = 0
    ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        hyp_len += len(hyp)
        ref_len += len(ref)
        for n in range(1, 5):
            counts = _ngrams(hyp, n)
            if not counts:
                continue
            ref_counts = _ngrams(ref, n)
            total[n - 1] += sum(counts.values())
            correct[n - 1] += sum(min(c, ref_counts[g]) for g, c in counts.items())
    precisions = [c / t if t else 0.0 for c, t in zip(correct, total)]
    if hyp_len == 0:
        return BleuReport(0.0, precisions, 0.0, 0, ref_len, True)
    bp = 1.0 if hyp_len >= ref_len else math.exp(1.0 - ref_len / hyp_len)
    zero = any(p == 0.0 for p in precisions)
    if zero:
        warnings.warn("a modified n-gram precision is 0; BLEU is 0 (no smoothing)")
        bleu = 0.0
    else:
        bleu = 100.0 * bp * math.exp(sum(math.log(p) for p in precisions) / 4.0)
    return BleuReport(bleu, precisions, bp, hyp_len, ref_len, zero)


@dataclass
class BucketReport:
    """Per-bucket BLEU over a partition of the test set by source length."""

    buckets: list[tuple[str, BleuReport | None, int]] = field(default_factory=list)

    def pretty(self) -> str:
        lines = []
        for label, report, count in self.buckets:
            if report is None:
                lines.append(f"len {label:>5}: (no sentences)")
            else:
                lines.append(f"len {label:>5}: {report.pretty()}  [{count} sentences]")
        return "\n".join(lines)


def bucket_bleu(source_lengths: list[int], hypotheses: list[list[str]],
                references: list[list[str]]) -> BucketReport:
    """Bucket boundaries: length <= 10, 10 < length <= 20, length > 20."""
    if not len(source_lengths) == len(hypotheses) == len(references):
        raise AlignmentError("sources, hypotheses and references must align")
    report = BucketReport()
    for label, lo, hi in BUCKETS:
        idx = [i for i, n in enumerate(source_lengths) if lo < n <= hi]
        if not idx:
            report.buckets.append((label, None, 0))
            continue
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            sub = corpus_bleu([hypotheses[i] for i in idx], [references[i] for i in idx])
        report.buckets.append((label, sub, len(idx)))
    return report


@dataclass
class RatioReport:
    """Phrase-to-word attention mass ratios (the Fig.-4-style diagnostic)."""

    per_sentence: list[float]
    source_lengths: list[int]

    @property
    def mean(self) -> float:
        return sum(self.per_sentence) / len(self.per_sentence)

    def bucket_means(self) -> list[tuple[str, float | None, int]]:
        out = []
        for label, lo, hi in BUCKETS:
            vals = [r for r, n in zip(self.per_sentence, self.source_lengths) if lo < n <= hi]
            out.append((label, sum(vals) / len(vals) if vals else None, len(vals)))
        return out

    def pretty(self) -> str:
        lines = [f"mean phrase/word attention ratio: {self.mean:.4f}"]
        for label, val, count in self.bucket_means():
            shown = "-" if val is None else f"{val:.4f}"
            lines.append(f"len {label:>5}: {shown}  [{count} sentences]")
        return "\n".join(lines)


def attention_ratio(records: list[AttentionRecord]) -> RatioReport:
    """Per sentence, total phrase mass over total word mass, then averaged."""
    if not records:
        raise ContractError("attention_ratio: no records")
    ratios = []
    for r in records:
        if r.mode == "vanilla":
            raise ContractError("attention_ratio: vanilla records have no phrase part")
        if not r.steps:
            raise ContractError("attention_ratio: record with no decoding steps")
        ratios.append(r.phrase_mass / r.word_mass)
    return RatioReport(ratios, [r.n for r in records])


def perplexity(params: ModelParams, examples: list[Example]) -> float:
    """exp(total teacher-forced NLL / total target token count)."""
    if not examples:
        raise ContractError("perplexity: empty split")
    total_nll = 0.0
    total_tokens = 0
    for ex in examples:
        encoded = encode(ex.src_ids, params, forest=ex.forest, tree=ex.tree)
        total_nll += sentence_loss(encoded, ex.tgt_ids, params).item()
        total_tokens += len(ex.tgt_ids)
    return math.exp(total_nll / total_tokens)
