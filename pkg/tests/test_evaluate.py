import math

import numpy as np
import pytest

from forestnmt import evaluate as ev
from forestnmt.corpus import EOS_ID, Bitext, build_vocab, prepare_examples
from forestnmt.decoder import AttentionRecord
from forestnmt.errors import AlignmentError, ContractError, CorpusError
from forestnmt.params import zero_params


def toks(*lines):
    return [line.split() for line in lines]


def test_identical_corpus_scores_100():
    hyp = toks("the cat sat on the mat", "a b c d")
    report = ev.corpus_bleu(hyp, hyp)
    assert report.bleu == pytest.approx(100.0, abs=1e-9)
    assert report.brevity_penalty == 1.0
    assert not report.zero_precision


def test_modified_unigram_precision_clips_counts():
    report = _quiet_bleu(toks("the the the the"), toks("the cat sat down"))
    assert report.precisions[0] == pytest.approx(0.25)
    assert report.bleu == 0.0  # no matching bigram


def _quiet_bleu(hyps, refs):
    with pytest.warns(UserWarning):
        return ev.corpus_bleu(hyps, refs)


def test_brevity_penalty_closed_form():
    # perfect precisions, hypothesis shorter than reference
    report = ev.corpus_bleu(toks("a b c d e"), toks("a b c d e f"))
    assert report.precisions == pytest.approx([1.0] * 4)
    assert report.bleu == pytest.approx(100.0 * math.exp(1.0 - 6.0 / 5.0), abs=1e-9)


def test_no_brevity_penalty_when_hypothesis_longer():
    report = ev.corpus_bleu(toks("a b c d e f g"), toks("a b c d"))
    assert report.brevity_penalty == 1.0


def test_short_sentences_lack_higher_order_ngrams_score_zero():
    # all sentences shorter than 4 words: the 4-gram order has no mass, so
    # the unsmoothed geometric mean (reference-script arithmetic) is 0
    hyp = toks("a b c")
    report = _quiet_bleu(hyp, hyp)
    assert report.precisions[3] == 0.0
    assert report.bleu == 0.0
    assert report.zero_precision


def test_corpus_bleu_is_permutation_invariant():
    hyps = toks("a b c d", "e f g h i", "x y z w")
    refs = toks("a b c e", "e f g h j", "x y w z")
    a = ev.corpus_bleu(hyps, refs)
    b = ev.corpus_bleu(hyps[::-1], refs[::-1])
    assert a.bleu == pytest.approx(b.bleu, abs=1e-12)


def test_corpus_bleu_errors():
    with pytest.raises(CorpusError):
        ev.corpus_bleu([], [])
    with pytest.raises(AlignmentError):
        ev.corpus_bleu(toks("a"), toks("a", "b"))


def test_bucket_boundaries():
    lens = [5, 10, 11, 20, 21]
    sents = toks("a b c d", "a b c d", "a b c d", "a b c d", "a b c d")
    report = ev.bucket_bleu(lens, sents, sents)
    by_label = {label: count for label, _, count in report.buckets}
    assert by_label == {"<=10": 2, "11-20": 2, ">20": 1}


def test_bucket_all_short_matches_corpus_bleu():
    lens = [4, 5]
    hyps = toks("a b c d", "p q r s t")
    refs = toks("a b c e", "p q r s t")
    report = ev.bucket_bleu(lens, hyps, refs)
    label, sub, count = report.buckets[0]
    assert count == 2
    assert sub.bleu == pytest.approx(ev.corpus_bleu(hyps, refs).bleu)
    assert report.buckets[1][1] is None and report.buckets[2][1] is None


def record_with(mode, n, step_weights):
    r = AttentionRecord(mode, n)
    for w in step_weights:
        r.add_step(np.asarray(w, dtype=float))
    return r


def test_attention_ratio_uniform_counts():
    n, phrases, steps = 4, 3, 5
    w = [1.0 / (n + phrases)] * (n + phrases)
    report = ev.attention_ratio([record_with("forest", n, [w] * steps)])
    assert report.per_sentence[0] == pytest.approx(phrases / n, abs=1e-12)


def test_attention_ratio_zero_when_words_take_all_mass():
    w = [0.5, 0.5, 0.0]
    report = ev.attention_ratio([record_with("tree", 2, [w, w])])
    assert report.per_sentence[0] == 0.0


def test_attention_ratio_matches_independent_recomputation():
    rng = np.random.default_rng(0)
    records = []
    expected = []
    for _ in range(6):
        n = int(rng.integers(2, 6))
        phr = int(rng.integers(1, 5))
        steps = []
        wm = pm = 0.0
        for _ in range(int(rng.integers(1, 7))):
            raw = rng.uniform(0.01, 1.0, n + phr)
            raw /= raw.sum()
            steps.append(raw)
            wm += raw[:n].sum()
            pm += raw[n:].sum()
        records.append(record_with("forest", n, steps))
        expected.append(pm / wm)
    report = ev.attention_ratio(records)
    assert report.per_sentence == pytest.approx(expected, abs=1e-12)
    assert report.mean == pytest.approx(sum(expected) / len(expected), abs=1e-12)


def test_attention_ratio_rejects_vanilla():
    with pytest.raises(ContractError, match="vanilla"):
        ev.attention_ratio([record_with("vanilla", 3, [[0.5, 0.3, 0.2]])])


def test_perplexity_uniform_model_is_vocab_size():
    vocab = build_vocab([["a", "b"] * 5], min_freq=1)
    params = zero_params("vanilla", len(vocab), len(vocab), 4, 3)
    bt = Bitext([(["a", "b"], ["b", "a"], None), (["b"], ["a"], None)])
    examples = prepare_examples(bt, "vanilla", vocab, vocab)
    ppl = ev.perplexity(params, examples)
    assert ppl == pytest.approx(len(vocab), rel=1e-12)
    assert ppl >= 1.0
