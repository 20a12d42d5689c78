"""Named parameter store with seeded initialization.

All trainable weights of the encoders and decoder live here, addressable
by name ("seq.U_i", "fuse.Wg", ...). Which tensors exist depends on the
mode: vanilla has no tree or fusion cells, tree adds the tree-LSTM and the
decoder-init combiner, forest adds the derivation-fusion cell on top.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError
from .numcore import Tensor

MODES = ("vanilla", "tree", "forest")
INIT_SCALE = 0.08

GATES_SEQ = ("i", "f", "o", "c")
GATES_TREE = ("i", "fl", "fr", "o", "c")
GATES_FUSE = ("i", "o", "c")


def _spec(mode: str, n_src: int, n_tgt: int, hidden: int, embed: int):
    """Ordered (name, shape) list; the order fixes the rng draw sequence."""
    H, d = hidden, embed
    out = [("src_embed", (n_src, d)), ("tgt_embed", (n_tgt, d))]
    for g in GATES_SEQ:
        out += [(f"seq.W_{g}", (H, d)), (f"seq.U_{g}", (H, H)), (f"seq.b_{g}", (H,))]
    if mode in ("tree", "forest"):
        for cell in ("tree", "ginit"):
            for g in GATES_TREE:
                out += [
                    (f"{cell}.Ul_{g}", (H, H)),
                    (f"{cell}.Ur_{g}", (H, H)),
                    (f"{cell}.b_{g}", (H,)),
                ]
    if mode == "forest":
        out += [
            ("fuse.Ug", (H, H)),
            ("fuse.Wg", (H, H)),
            ("fuse.vg", (H,)),
            ("fuse.bg", (H,)),
        ]
        for g in GATES_FUSE:
            out += [(f"fuse.U_{g}", (H, 2 * H)), (f"fuse.b_{g}", (H,))]
        out += [("fuse.U_f", (H, 2 * H)), ("fuse.W_f", (H, 2 * H)), ("fuse.b_f", (H,))]
    out += [
        ("dec.Wgh", (H, H)),
        ("dec.Wgi", (H, d)),
        ("dec.Wga", (H, H)),
        ("dec.Wgu", (H, H)),
        ("dec.Wuc", (H, H)),
        ("dec.Wui", (H, d)),
        ("dec.Wou", (n_tgt, H)),
        ("dec.bo", (n_tgt,)),
        ("att.v", (H,)),
        ("att.Wae", (H, H)),
        ("att.Wag", (H, H)),
    ]
    return out


class ModelParams:
    """All trainable weights, addressable by name."""

    def __init__(self, mode: str, src_vocab_size: int, tgt_vocab_size: int,
                 hidden: int, embed: int, tensors: dict[str, Tensor]):
        if mode not in MODES:
            raise ConfigError(f"unknown mode {mode!r}, expected one of {MODES}")
        self.mode = mode
        self.src_vocab_size = src_vocab_size
        self.tgt_vocab_size = tgt_vocab_size
        self.hidden = hidden
        self.embed = embed
        self.tensors = tensors

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self.tensors

    def items(self):
        return self.tensors.items()

    def names(self) -> list[str]:
        return list(self.tensors)

    def zero_grads(self) -> None:
        for t in self.tensors.values():
            t.grad = None

    def copy(self) -> "ModelParams":
        tensors = {k: Tensor(v.data.copy(), requires_grad=True) for k, v in self.tensors.items()}
        return ModelParams(self.mode, self.src_vocab_size, self.tgt_vocab_size,
                           self.hidden, self.embed, tensors)

    def load_values(self, other: "ModelParams") -> None:
        for k, t in self.tensors.items():
            t.data[...] = other.tensors[k].data


def init_params(mode: str, src_vocab_size: int, tgt_vocab_size: int,
                hidden: int, embed: int, seed: int,
                init_scale: float = INIT_SCALE) -> ModelParams:
    """Uniform [-init_scale, init_scale] weights, seeded for reproducibility."""
    if mode not in MODES:
        raise ConfigError(f"unknown mode {mode!r}, expected one of {MODES}")
    if min(src_vocab_size, tgt_vocab_size, hidden, embed) < 1:
        raise ConfigError("vocabulary sizes and dimensions must be positive")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x9E3779B9]))
    tensors = {
        name: Tensor(rng.uniform(-init_scale, init_scale, shape), requires_grad=True)
        for name, shape in _spec(mode, src_vocab_size, tgt_vocab_size, hidden, embed)
    }
    return ModelParams(mode, src_vocab_size, tgt_vocab_size, hidden, embed, tensors)


def zero_params(mode: str, src_vocab_size: int, tgt_vocab_size: int,
                hidden: int, embed: int) -> ModelParams:
    """All-zero weights (the collapse fixtures in the test suite)."""
    tensors = {
        name: Tensor(np.zeros(shape), requires_grad=True)
        for name, shape in _spec(mode, src_vocab_size, tgt_vocab_size, hidden, embed)
    }
    return ModelParams(mode, src_vocab_size, tgt_vocab_size, hidden, embed, tensors)
