"""End-to-end training.

Minibatches are realized as gradient accumulation: each sentence runs on
its own tape (forests give every sentence a different graph), losses are
scaled by 1/batch so the step matches SGD on the per-sentence average,
and the parameter update runs once per batch after global-norm clipping.
Early stopping keeps the checkpoint with the best dev perplexity; the
learning rate halves whenever an epoch fails to improve it.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass

import numpy as np

from .corpus import Bitext, Example, Vocabulary, build_vocab, prepare_examples
from .decoder import sentence_loss
from .encoder import encode
from .errors import CheckpointError, ConfigError, ContractError, NumericError
from .evaluate import perplexity
from .numcore import Tape, Tensor, backward, scale
from .params import MODES, ModelParams, init_params

CHECKPOINT_VERSION = 1


@dataclass
class TrainConfig:
    mode: str
    hidden: int = 256
    embed: int = 64
    lr: float = 0.1
    batch_size: int = 128
    max_epochs: int = 20
    patience: int = 3
    seed: int = 1
    clip_norm: float = 5.0
    lr_halving: bool = True
    min_freq: int = 5
    max_len: int = 50

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        positive = {
            "hidden": self.hidden, "embed": self.embed,
            "batch_size": self.batch_size, "max_epochs": self.max_epochs,
            "patience": self.patience, "clip_norm": self.clip_norm,
            "min_freq": self.min_freq, "max_len": self.max_len,
        }
        for name, value in positive.items():
            if value <= 0:
                raise ConfigError(f"{name} must be positive, got {value}")
        if self.lr < 0:  # lr 0 is legal: a no-op run is a useful control
            raise ConfigError(f"lr must be non-negative, got {self.lr}")


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float  # per-token NLL over the epoch
    dev_ppl: float
    seconds: float


@dataclass
class Checkpoint:
    params: ModelParams
    src_vocab: Vocabulary
    tgt_vocab: Vocabulary
    config: TrainConfig
    epoch: int
    dev_ppl: float


def metrics_to_csv(metrics: list[EpochMetrics]) -> str:
    lines = ["epoch,train_loss,dev_perplexity,seconds"]
    for m in metrics:
        lines.append(f"{m.epoch},{m.train_loss!r},{m.dev_ppl!r},{m.seconds:.3f}")
    return "\n".join(lines) + "\n"


def example_loss(ex: Example, params: ModelParams) -> Tensor:
    encoded = encode(ex.src_ids, params, forest=ex.forest, tree=ex.tree)
    return sentence_loss(encoded, ex.tgt_ids, params)


def grad_norm(params: ModelParams) -> float:
    total = 0.0
    for t in params.tensors.values():
        if t.grad is not None:
            total += float((t.grad * t.grad).sum())
    return float(np.sqrt(total))


def clip_gradients(params: ModelParams, max_norm: float) -> float:
    """Scale all gradients so the global norm is at most max_norm.

    Scaling preserves the gradient direction exactly. Returns the
    pre-clip norm.
    """
    norm = grad_norm(params)
    if norm > max_norm:
        factor = max_norm / norm
        for t in params.tensors.values():
            if t.grad is not None:
                t.grad *= factor
    return norm


def sgd_step(params: ModelParams, lr: float) -> None:
    """theta <- theta - lr * grad, then clear the gradients."""
    for name, t in params.tensors.items():
        if t.grad is None:
            continue
        if not np.isfinite(t.grad).all():
            raise NumericError(f"non-finite gradient in {name}")
        t.data -= lr * t.grad
        t.grad = None


def train(
    train_bitext: Bitext,
    dev_bitext: Bitext,
    config: TrainConfig,
    src_vocab: Vocabulary | None = None,
    tgt_vocab: Vocabulary | None = None,
    log=None,
) -> tuple[Checkpoint, list[EpochMetrics]]:
    """Train until max_epochs or `patience` epochs without dev improvement.

    Vocabularies default to being built from the training split. Returns
    the best checkpoint (by dev perplexity) plus per-epoch metrics.
    """
    config.validate()
    if not train_bitext.pairs or not dev_bitext.pairs:
        raise ContractError("train: empty training or dev split")
    if src_vocab is None:
        src_vocab = build_vocab(train_bitext.source_sentences(), config.min_freq)
    if tgt_vocab is None:
        tgt_vocab = build_vocab(train_bitext.target_sentences(), config.min_freq)

    train_examples = prepare_examples(train_bitext, config.mode, src_vocab, tgt_vocab)
    dev_examples = prepare_examples(dev_bitext, config.mode, src_vocab, tgt_vocab)

    params = init_params(
        config.mode, len(src_vocab), len(tgt_vocab), config.hidden, config.embed, config.seed
    )
    shuffle_rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0x5EED]))

    lr = config.lr
    best: Checkpoint | None = None
    bad_epochs = 0
    metrics: list[EpochMetrics] = []
    order = np.arange(len(train_examples))

    for epoch in range(1, config.max_epochs + 1):
        started = time.perf_counter()
        shuffle_rng.shuffle(order)
        epoch_nll = 0.0
        epoch_tokens = 0
        for b0 in range(0, len(order), config.batch_size):
            batch = order[b0:b0 + config.batch_size]
            params.zero_grads()
            for idx in batch:
                ex = train_examples[idx]
                with Tape() as tape:
                    loss = example_loss(ex, params)
                    raw = loss.item()
                    if not np.isfinite(raw):
                        raise NumericError(
                            f"non-finite loss at epoch {epoch}, batch {b0 // config.batch_size}, "
                            f"sentence {idx} (grad norm so far {grad_norm(params):.3e})"
                        )
                    backward(scale(loss, 1.0 / len(batch)), tape)
                epoch_nll += raw
                epoch_tokens += len(ex.tgt_ids)
            clip_gradients(params, config.clip_norm)
            sgd_step(params, lr)

        dev_ppl = perplexity(params, dev_examples)
        seconds = time.perf_counter() - started
        metrics.append(EpochMetrics(epoch, epoch_nll / epoch_tokens, dev_ppl, seconds))
        if log is not None:
            log(
                f"epoch {epoch}: train loss/token {epoch_nll / epoch_tokens:.4f} "
                f"dev ppl {dev_ppl:.4f} lr {lr:g} ({seconds:.1f}s)"
            )

        if best is None or dev_ppl < best.dev_ppl:
            best = Checkpoint(params.copy(), src_vocab, tgt_vocab, config, epoch, dev_ppl)
            bad_epochs = 0
        else:
            bad_epochs += 1
            if config.lr_halving:
                lr /= 2.0
            if bad_epochs >= config.patience:
                break
    return best, metrics


# ---- checkpoint persistence ----

def save_checkpoint(ckpt: Checkpoint, path) -> None:
    """Versioned npz: float64 weights round-trip bit-exactly."""
    meta = {
        "format_version": CHECKPOINT_VERSION,
        "mode": ckpt.params.mode,
        "hidden": ckpt.params.hidden,
        "embed": ckpt.params.embed,
        "src_vocab_size": ckpt.params.src_vocab_size,
        "tgt_vocab_size": ckpt.params.tgt_vocab_size,
        "epoch": ckpt.epoch,
        "dev_ppl": ckpt.dev_ppl,
        "config": asdict(ckpt.config),
        "src_vocab": ckpt.src_vocab.word_tokens(),
        "tgt_vocab": ckpt.tgt_vocab.word_tokens(),
    }
    arrays = {f"param:{name}": t.data for name, t in ckpt.params.items()}
    with open(path, "wb") as fh:
        np.savez(fh, meta=np.asarray(json.dumps(meta)), **arrays)


def load_checkpoint(path, expect_mode: str | None = None) -> Checkpoint:
    import zipfile

    try:
        with np.load(path, allow_pickle=False) as data:
            meta = json.loads(str(data["meta"]))
            arrays = {k[len("param:"):]: data[k] for k in data.files if k.startswith("param:")}
    except (OSError, ValueError, KeyError, zipfile.BadZipFile, json.JSONDecodeError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    version = meta.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"checkpoint format version {version} is not supported (expected {CHECKPOINT_VERSION})"
        )
    if expect_mode is not None and meta["mode"] != expect_mode:
        raise ConfigError(
            f"checkpoint was trained in {meta['mode']!r} mode, not {expect_mode!r}"
        )
    config = TrainConfig(**meta["config"])
    params = init_params(
        meta["mode"], meta["src_vocab_size"], meta["tgt_vocab_size"],
        meta["hidden"], meta["embed"], seed=0,
    )
    expected = set(params.tensors)
    if set(arrays) != expected:
        raise CheckpointError("checkpoint is missing parameter tensors; refusing partial state")
    for name, t in params.items():
        if t.data.shape != arrays[name].shape:
            raise CheckpointError(f"checkpoint tensor {name} has shape {arrays[name].shape}")
        t.data[...] = arrays[name]
    return Checkpoint(
        params,
        Vocabulary(meta["src_vocab"]),
        Vocabulary(meta["tgt_vocab"]),
        config,
        meta["epoch"],
        meta["dev_ppl"],
    )
