import numpy as np
import pytest

from forestnmt import train as tr
from forestnmt.corpus import Bitext, build_vocab, prepare_examples
from forestnmt.decoder import greedy_decode
from forestnmt.encoder import encode
from forestnmt.errors import CheckpointError, ConfigError, NumericError
from forestnmt.forest import from_tree
from forestnmt.params import init_params, zero_params


def tiny_bitext(n_pairs=8, with_forests=False, seed=0):
    """Distinct sources, arbitrary targets, every token frequent."""
    rng = np.random.default_rng(seed)
    src_words = ["s0", "s1", "s2", "s3"]
    tgt_words = ["t0", "t1", "t2", "t3"]
    pairs = []
    seen = set()
    while len(pairs) < n_pairs:
        src = [src_words[int(i)] for i in rng.integers(0, 4, 3)]
        if tuple(src) in seen:
            continue
        seen.add(tuple(src))
        tgt = [tgt_words[int(i)] for i in rng.integers(0, 4, int(rng.integers(2, 4)))]
        forest = None
        if with_forests:
            shape = "((a b) c)" if rng.random() < 0.5 else "(a (b c))"
            forest = from_tree(shape)
        pairs.append((src, tgt, forest))
    return Bitext(pairs)


def quick_config(**kw):
    base = dict(
        mode="vanilla", hidden=8, embed=5, lr=0.5, batch_size=4,
        max_epochs=3, patience=100, seed=7, min_freq=1,
    )
    base.update(kw)
    return tr.TrainConfig(**base)


def test_sgd_step_basics():
    p = zero_params("vanilla", 5, 5, 2, 2)
    t = p["att.v"]
    t.grad = np.full(2, 2.0)
    tr.sgd_step(p, lr=0.1)
    assert np.allclose(t.data, -0.2, atol=1e-15)
    assert t.grad is None

    t.grad = np.full(2, 2.0)
    tr.sgd_step(p, lr=0.0)
    assert np.allclose(t.data, -0.2, atol=1e-15)


def test_sgd_step_rejects_non_finite_grads():
    p = zero_params("vanilla", 5, 5, 2, 2)
    p["att.v"].grad = np.array([np.inf, 0.0])
    with pytest.raises(NumericError, match="att.v"):
        tr.sgd_step(p, lr=0.1)


def test_clipping_preserves_direction():
    p = zero_params("vanilla", 5, 5, 2, 2)
    rng = np.random.default_rng(1)
    for t in p.tensors.values():
        t.grad = rng.uniform(-1, 1, t.data.shape) * 10
    before = {k: t.grad.copy() for k, t in p.items()}
    norm = tr.clip_gradients(p, max_norm=5.0)
    assert norm > 5.0
    assert tr.grad_norm(p) == pytest.approx(5.0, rel=1e-12)
    for k, t in p.items():
        ratio = t.grad / before[k]
        assert np.allclose(ratio, 5.0 / norm, atol=1e-12)


def test_clipping_noop_under_threshold():
    p = zero_params("vanilla", 5, 5, 2, 2)
    p["att.v"].grad = np.array([0.1, 0.1])
    tr.clip_gradients(p, max_norm=5.0)
    assert np.allclose(p["att.v"].grad, 0.1)


def test_first_order_loss_decrease_after_one_step():
    bt = tiny_bitext()
    vocab_src = build_vocab(bt.source_sentences(), 1)
    vocab_tgt = build_vocab(bt.target_sentences(), 1)
    params = init_params("vanilla", len(vocab_src), len(vocab_tgt), 8, 5, seed=3)
    examples = prepare_examples(bt, "vanilla", vocab_src, vocab_tgt)

    def batch_loss():
        return sum(tr.example_loss(ex, params).item() for ex in examples)

    before = batch_loss()
    from forestnmt.numcore import Tape, backward

    params.zero_grads()
    for ex in examples:
        with Tape() as tape:
            backward(tr.example_loss(ex, params), tape)
    tr.sgd_step(params, lr=1e-4)
    assert batch_loss() < before


def test_lr_zero_keeps_parameters_and_loss_constant():
    bt = tiny_bitext()
    ckpt, metrics = tr.train(bt, bt, quick_config(lr=0.0, max_epochs=3))
    losses = [m.train_loss for m in metrics]
    assert losses[0] == pytest.approx(losses[-1], abs=1e-12)
    fresh = init_params("vanilla", ckpt.params.src_vocab_size, ckpt.params.tgt_vocab_size,
                        8, 5, seed=7)
    for name, t in ckpt.params.items():
        assert np.array_equal(t.data, fresh[name].data)


def test_same_seed_same_metrics():
    bt = tiny_bitext()
    _, m1 = tr.train(bt, bt, quick_config())
    _, m2 = tr.train(bt, bt, quick_config())
    assert [m.train_loss for m in m1] == [m.train_loss for m in m2]
    assert [m.dev_ppl for m in m1] == [m.dev_ppl for m in m2]
    assert m1[0].train_loss == m2[0].train_loss  # bit-exact, not approx


def test_early_stopping_returns_best_dev_checkpoint():
    bt = tiny_bitext(n_pairs=10)
    ckpt, metrics = tr.train(bt, bt, quick_config(max_epochs=12, patience=2, lr=1.5))
    assert ckpt.dev_ppl == pytest.approx(min(m.dev_ppl for m in metrics), abs=1e-12)
    assert ckpt.epoch == min(range(len(metrics)), key=lambda i: metrics[i].dev_ppl) + 1


def test_quick_overfit_vanilla_memorizes():
    bt = tiny_bitext(n_pairs=8)
    # halving off: dev == train here, so plateau noise must not melt the lr
    config = quick_config(max_epochs=200, lr=0.3, batch_size=2, lr_halving=False)
    ckpt, metrics = tr.train(bt, bt, config)
    assert ckpt.dev_ppl < 1.5
    examples = prepare_examples(bt, "vanilla", ckpt.src_vocab, ckpt.tgt_vocab)
    hits = 0
    for ex, (_, tgt, _) in zip(examples, bt.pairs):
        encoded = encode(ex.src_ids, ckpt.params)
        out, _ = greedy_decode(encoded, ckpt.params)
        hits += ckpt.tgt_vocab.decode(out) == tgt
    assert hits >= 7


def test_forest_mode_training_smoke():
    bt = tiny_bitext(with_forests=True)
    ckpt, metrics = tr.train(bt, bt, quick_config(mode="forest", max_epochs=2))
    assert len(metrics) == 2
    assert np.isfinite(metrics[-1].dev_ppl)


def test_metrics_csv_format():
    m = [tr.EpochMetrics(1, 2.5, 12.25, 3.141)]
    text = tr.metrics_to_csv(m)
    assert text.splitlines()[0] == "epoch,train_loss,dev_perplexity,seconds"
    assert text.splitlines()[1].startswith("1,2.5,12.25,3.141")


def test_checkpoint_round_trip_bit_exact(tmp_path):
    bt = tiny_bitext()
    ckpt, _ = tr.train(bt, bt, quick_config(max_epochs=2))
    examples = prepare_examples(bt, "vanilla", ckpt.src_vocab, ckpt.tgt_vocab)
    loss_before = sum(tr.example_loss(ex, ckpt.params).item() for ex in examples)

    path = tmp_path / "model.npz"
    tr.save_checkpoint(ckpt, path)
    loaded = tr.load_checkpoint(path)
    for name, t in ckpt.params.items():
        assert np.array_equal(t.data, loaded.params[name].data)
    loss_after = sum(tr.example_loss(ex, loaded.params).item() for ex in examples)
    assert loss_before == loss_after  # bit-exact
    assert loaded.src_vocab.id_to_token == ckpt.src_vocab.id_to_token
    assert loaded.config == ckpt.config


def test_checkpoint_mode_mismatch_is_config_error(tmp_path):
    bt = tiny_bitext()
    ckpt, _ = tr.train(bt, bt, quick_config(max_epochs=1))
    path = tmp_path / "model.npz"
    tr.save_checkpoint(ckpt, path)
    with pytest.raises(ConfigError, match="vanilla"):
        tr.load_checkpoint(path, expect_mode="forest")


def test_checkpoint_truncated_file_is_corrupt(tmp_path):
    bt = tiny_bitext()
    ckpt, _ = tr.train(bt, bt, quick_config(max_epochs=1))
    path = tmp_path / "model.npz"
    tr.save_checkpoint(ckpt, path)
    raw = path.read_bytes()
    path.write_bytes(raw[: len(raw) // 2])
    with pytest.raises(CheckpointError):
        tr.load_checkpoint(path)


def test_checkpoint_version_gate(tmp_path):
    path = tmp_path / "model.npz"
    import json

    with open(path, "wb") as fh:
        np.savez(fh, meta=np.asarray(json.dumps({"format_version": 99})))
    with pytest.raises(CheckpointError, match="version 99"):
        tr.load_checkpoint(path)


def test_config_validation():
    with pytest.raises(ConfigError, match="mode"):
        tr.TrainConfig(mode="beam").validate()
    with pytest.raises(ConfigError, match="hidden"):
        tr.TrainConfig(mode="vanilla", hidden=0).validate()
    with pytest.raises(ConfigError, match="lr"):
        tr.TrainConfig(mode="vanilla", lr=-0.1).validate()
