"""Command-line entry point.

One binary, four subcommands sharing config parsing and run manifests:

* ``train``     fit a model, write checkpoint + metrics CSV + manifest
* ``translate`` greedy-decode a source file with a checkpoint
* ``eval``      BLEU / buckets / attention-ratio reports
* ``check``     randomized gradient-check and forest-oracle self-test

Exit codes: 0 success, 1 failed self-check, 2 configuration error,
3 data error, 4 numeric abort. stdout carries data, stderr diagnostics.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .corpus import load_bitext
from .decoder import greedy_decode, sentence_loss
from .encoder import encode
from .errors import (
    CheckpointError,
    ConfigError,
    CorpusError,
    ForestFormatError,
    ForestNMTError,
    NumericError,
)
from .evaluate import attention_ratio, bucket_bleu, corpus_bleu
from .forest import enumerate_trees, from_tree, read_forest_blocks, topo_order, tree_count
from .numcore import backend_name, grad_check
from .params import init_params
from .randforest import random_binary_tree, random_forest
from .train import TrainConfig, load_checkpoint, metrics_to_csv, save_checkpoint, train

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(out_dir: Path, payload: dict) -> None:
    (out_dir / "manifest.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _structure_format(mode: str) -> str:
    return "trees" if mode == "tree" else "forest"


# ---- train ----

def cmd_train(args) -> int:
    config = TrainConfig(
        mode=args.mode, hidden=args.hidden, embed=args.embed, lr=args.lr,
        batch_size=args.batch, max_epochs=args.epochs, patience=args.patience,
        seed=args.seed, clip_norm=args.clip, lr_halving=not args.no_lr_halving,
        min_freq=args.min_freq, max_len=args.max_len,
    )
    config.validate()
    needs_structure = args.mode != "vanilla"
    for flag, value in (("--forests", args.forests), ("--dev-forests", args.dev_forests)):
        if needs_structure and value is None:
            raise ConfigError(f"{flag} is required with --mode {args.mode}")
        if not needs_structure and value is not None:
            raise ConfigError(f"{flag} is meaningless with --mode vanilla")

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    inputs = [args.src, args.tgt, args.dev_src, args.dev_tgt]
    if needs_structure:
        inputs += [args.forests, args.dev_forests]
    manifest = {
        "command": "train",
        "version": __version__,
        "backend": backend_name(),
        "config": vars(config).copy(),
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": {
            "checkpoint": str(out_dir / "checkpoint.npz"),
            "metrics": str(out_dir / "metrics.csv"),
        },
        "started": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    _write_manifest(out_dir, manifest)

    fmt = _structure_format(args.mode)
    started = time.perf_counter()
    train_bt = load_bitext(
        args.src, args.tgt, args.forests if needs_structure else None,
        max_len=args.max_len, forest_format=fmt, lowercase=args.lowercase, split="train",
    )
    dev_bt = load_bitext(
        args.dev_src, args.dev_tgt, args.dev_forests if needs_structure else None,
        max_len=args.max_len, forest_format=fmt, lowercase=args.lowercase, split="dev",
    )
    print(
        f"loaded {len(train_bt)} train / {len(dev_bt)} dev pairs "
        f"(dropped {train_bt.dropped}/{dev_bt.dropped} over {args.max_len} tokens)",
        file=sys.stderr,
    )
    ckpt, metrics = train(train_bt, dev_bt, config, log=lambda s: print(s, file=sys.stderr))
    save_checkpoint(ckpt, out_dir / "checkpoint.npz")
    (out_dir / "metrics.csv").write_text(metrics_to_csv(metrics), encoding="utf-8")
    manifest["finished"] = time.strftime("%Y-%m-%dT%H:%M:%S")
    manifest["wall_seconds"] = round(time.perf_counter() - started, 3)
    manifest["best_epoch"] = ckpt.epoch
    manifest["best_dev_perplexity"] = ckpt.dev_ppl
    _write_manifest(out_dir, manifest)
    print(f"best epoch {ckpt.epoch}: dev perplexity {ckpt.dev_ppl:.4f}")
    return EXIT_OK


# ---- translate ----

def _load_structures(path, mode: str):
    text = Path(path).read_text(encoding="utf-8")
    if mode == "tree":
        return [from_tree(line) for line in text.splitlines() if line.strip()]
    return read_forest_blocks(text)


def cmd_translate(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    mode = ckpt.params.mode
    src_lines = Path(args.src).read_text(encoding="utf-8").splitlines()
    if args.lowercase:
        src_lines = [line.lower() for line in src_lines]
    sources = [line.split() for line in src_lines]
    if any(not s for s in sources):
        raise CorpusError("empty source line")

    structures = None
    if mode != "vanilla":
        if args.forests is None:
            raise ConfigError(f"--forests is required: checkpoint is in {mode} mode")
        structures = _load_structures(args.forests, mode)
        if len(structures) != len(sources):
            raise CorpusError(
                f"{len(structures)} structures for {len(sources)} source lines"
            )
    elif args.forests is not None:
        raise ConfigError("--forests given, but the checkpoint is a vanilla model")

    params, src_vocab, tgt_vocab = ckpt.params, ckpt.src_vocab, ckpt.tgt_vocab

    def translate_one(i: int):
        ids = src_vocab.encode(sources[i])
        forest = tree = None
        if structures is not None:
            structure = structures[i]
            if structure.sentence_len != len(ids):
                raise CorpusError(
                    f"line {i + 1}: structure covers {structure.sentence_len} words, "
                    f"source has {len(ids)}"
                )
            if mode == "tree":
                if tree_count(structure) != 1:
                    raise CorpusError(f"line {i + 1}: tree mode needs single-derivation trees")
                tree = enumerate_trees(structure, limit=1)[0]
            else:
                forest = structure
        encoded = encode(ids, params, forest=forest, tree=tree)
        tokens, record = greedy_decode(encoded, params, max_len=args.max_len)
        return tgt_vocab.decode(tokens), record

    indices = range(len(sources))
    if args.threads > 1:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            results = list(pool.map(translate_one, indices))
    else:
        results = [translate_one(i) for i in indices]

    with open(args.out, "w", encoding="utf-8") as fh:
        for tokens, _ in results:
            fh.write(" ".join(tokens) + "\n")

    if args.dump_attention is not None:
        with open(args.dump_attention, "w", encoding="utf-8") as fh:
            for _, record in results:
                fh.write(json.dumps({
                    "mode": record.mode,
                    "n": record.n,
                    "truncated": record.truncated,
                    "steps": [
                        {"words": w.tolist(), "phrases": p.tolist()}
                        for w, p in record.steps
                    ],
                }) + "\n")
    print(f"translated {len(results)} sentences", file=sys.stderr)
    return EXIT_OK


# ---- eval ----

def _read_tokenized(path) -> list[list[str]]:
    return [line.split() for line in Path(path).read_text(encoding="utf-8").splitlines()]


def cmd_eval(args) -> int:
    hyps = _read_tokenized(args.hyp)
    refs = _read_tokenized(args.ref)
    if len(hyps) != len(refs):
        raise CorpusError(f"{len(hyps)} hypotheses vs {len(refs)} references")
    report = corpus_bleu(hyps, refs)
    print(report.pretty())
    csv_rows = [("bleu", "corpus", f"{report.bleu:.4f}")]
    csv_rows += [
        (f"precision{i + 1}", "corpus", f"{p:.6f}") for i, p in enumerate(report.precisions)
    ]
    csv_rows += [
        ("brevity_penalty", "corpus", f"{report.brevity_penalty:.6f}"),
        ("hyp_len", "corpus", str(report.hyp_len)),
        ("ref_len", "corpus", str(report.ref_len)),
    ]

    if args.buckets:
        if args.src is None:
            raise ConfigError("--buckets needs --src to measure source lengths")
        lengths = [len(s) for s in _read_tokenized(args.src)]
        if len(lengths) != len(hyps):
            raise CorpusError(f"{len(lengths)} source lines vs {len(hyps)} hypotheses")
        buckets = bucket_bleu(lengths, hyps, refs)
        print(buckets.pretty())
        for label, sub, count in buckets.buckets:
            csv_rows.append(
                ("bleu", f"len{label}", "absent" if sub is None else f"{sub.bleu:.4f}")
            )
            csv_rows.append(("sentences", f"len{label}", str(count)))

    if args.attention is not None:
        records = _load_attention_records(args.attention)
        ratios = attention_ratio(records)
        print(ratios.pretty())
        csv_rows.append(("attention_ratio", "mean", f"{ratios.mean:.6f}"))
        for label, val, count in ratios.bucket_means():
            csv_rows.append(
                ("attention_ratio", f"len{label}", "absent" if val is None else f"{val:.6f}")
            )
        for i, val in enumerate(ratios.per_sentence):
            csv_rows.append(("attention_ratio", f"sentence{i + 1}", f"{val:.6f}"))

    if args.csv is not None:
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write("metric,scope,value\n")
            for row in csv_rows:
                fh.write(",".join(row) + "\n")
    return EXIT_OK


def _load_attention_records(path):
    from .decoder import AttentionRecord

    records = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        raw = json.loads(line)
        record = AttentionRecord(raw["mode"], raw["n"], truncated=raw["truncated"])
        for step in raw["steps"]:
            record.steps.append(
                (np.asarray(step["words"], dtype=float), np.asarray(step["phrases"], dtype=float))
            )
        records.append(record)
    return records


# ---- check ----

def cmd_check(args) -> int:
    rng_root = np.random.SeedSequence(args.seed)

    def fail(payload: dict) -> int:
        print("SELF-CHECK FAILED", file=sys.stderr)
        print(json.dumps(payload, sort_keys=True), file=sys.stderr)
        return EXIT_CHECK_FAILED

    modes = ("vanilla", "tree", "forest")
    for trial in range(args.trials):
        rng = np.random.default_rng(np.random.SeedSequence([args.seed, 1, trial]))
        mode = modes[trial % 3]
        n_src = int(rng.integers(6, 13))
        n_tgt = int(rng.integers(6, 13))
        hidden = int(rng.integers(3, 9))
        embed = int(rng.integers(2, 5))
        n = int(rng.integers(2, 5))
        params = init_params(mode, n_src, n_tgt, hidden, embed, seed=int(rng.integers(1 << 30)))
        ids = [int(i) for i in rng.integers(0, n_src, n)]
        target = [int(i) for i in rng.integers(4, n_tgt, int(rng.integers(1, 4)))] + [2]
        tree = random_binary_tree(rng, n) if mode == "tree" else None
        forest = random_forest(rng, min_words=n, max_words=n, max_trees=4) if mode == "forest" else None

        def f():
            return sentence_loss(encode(ids, params, forest=forest, tree=tree), target, params)

        corrupt = args.corrupt_grad if trial == 0 else None
        report = grad_check(f, dict(params.items()), corrupt_param=corrupt)
        if not report.ok(1e-4):
            return fail({
                "suite": "gradient-check", "trial": trial, "mode": mode,
                "seed": args.seed, "n": n, "hidden": hidden, "embed": embed,
                "max_rel_err": report.max_rel_err, "worst_param": report.worst_param,
                "worst_index": report.worst_index,
            })
        print(f"gradient check {trial + 1}/{args.trials} [{mode}]: {report.max_rel_err:.2e} ok",
              file=sys.stderr)

    rng = np.random.default_rng(np.random.SeedSequence([args.seed, 2]))
    for trial in range(args.trials * 5):
        forest = random_forest(rng, max_trees=500)
        count = tree_count(forest)
        trees = enumerate_trees(forest, limit=500)
        order = topo_order(forest)
        pos = {nid: k for k, nid in enumerate(order)}
        topo_ok = all(pos[t] < pos[e.head] for e in forest.edges for t in e.tails)
        if count != len(trees) or len(set(trees)) != len(trees) or not topo_ok:
            return fail({
                "suite": "forest-oracle", "trial": trial, "seed": args.seed,
                "tree_count": count, "enumerated": len(trees), "topo_ok": topo_ok,
                "forest_words": forest.sentence_len,
            })
    print(f"forest oracle: {args.trials * 5} random forests ok", file=sys.stderr)
    print("all checks passed")
    return EXIT_OK


# ---- argument wiring ----

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="forestnmt",
        description="Forest-to-sequence neural machine translation toolkit",
    )
    parser.add_argument("--version", action="version", version=f"forestnmt {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--mode", required=True, choices=("vanilla", "tree", "forest"))
    p.add_argument("--src", required=True)
    p.add_argument("--tgt", required=True)
    p.add_argument("--forests", help="forest blocks (forest mode) or bracketed trees (tree mode)")
    p.add_argument("--dev-src", required=True)
    p.add_argument("--dev-tgt", required=True)
    p.add_argument("--dev-forests")
    p.add_argument("--hidden", type=int, default=256)
    p.add_argument("--embed", type=int, default=64)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--batch", type=int, default=128)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--patience", type=int, default=3)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--clip", type=float, default=5.0)
    p.add_argument("--no-lr-halving", action="store_true")
    p.add_argument("--min-freq", type=int, default=5)
    p.add_argument("--max-len", type=int, default=50)
    p.add_argument("--threads", type=int, default=1, help="reserved for evaluation workers")
    p.add_argument("--lowercase", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("translate", help="greedy-decode a source file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--src", required=True)
    p.add_argument("--forests")
    p.add_argument("--out", required=True)
    p.add_argument("--dump-attention")
    p.add_argument("--max-len", type=int, default=None)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--lowercase", action="store_true")
    p.set_defaults(func=cmd_translate)

    p = sub.add_parser("eval", help="score hypotheses")
    p.add_argument("--hyp", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--src")
    p.add_argument("--buckets", action="store_true")
    p.add_argument("--attention")
    p.add_argument("--csv")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("check", help="randomized self-verification")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=9)
    p.add_argument("--corrupt-grad", help="debug hook: corrupt this parameter's gradient")
    p.set_defaults(func=cmd_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CorpusError, ForestFormatError, CheckpointError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ForestNMTError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
