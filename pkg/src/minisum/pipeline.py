"""Corpus ingestion, run manifests, and the end-to-end experiment driver."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict
from pathlib import Path

import torch

from minisum import objectives as obj
from minisum import text_core as tc
from minisum.decoding import DecodeConfig, beam_search
from minisum.model import (DualOptimizer, ModelConfig, OptimConfig,
                           Seq2SeqTransformer, evaluate_perplexity,
                           save_checkpoint)
from minisum.rouge import EvalProtocol, score_corpus
from minisum.synthetic import SyntheticSpec, gen_synthetic
from minisum.trainer import (batches_from_examples, clamp_to_positions,
                             finetune_examples, make_pretrain_data, train_loop)


class MalformedRecord(ValueError):
    pass


def read_jsonl(path) -> list[dict]:
    records = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as e:
                raise MalformedRecord(f"{path}:{lineno}: invalid JSON: {e}") from e
    return records


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as f:
        for rec in records:
            f.write(json.dumps(rec) + "\n")


def ingest(paths: list[str | Path], out_path: str | Path) -> dict:
    """Normalize raw .txt files or JSONL corpora into {"id","text"} JSONL.

    Returns a stats report: document count, whitespace-token count, and
    a sentence-count histogram.
    """
    records = []
    for path in paths:
        path = Path(path)
        if path.suffix == ".jsonl":
            for lineno, rec in enumerate(read_jsonl(path), 1):
                if "id" not in rec or "text" not in rec:
                    raise MalformedRecord(
                        f"{path}:{lineno}: record needs 'id' and 'text' fields")
                records.append({"id": str(rec["id"]), "text": rec["text"]})
        else:
            records.append({"id": path.stem, "text": path.read_text(encoding="utf-8")})
    write_jsonl(out_path, records)
    hist: dict[int, int] = {}
    n_tokens = 0
    for rec in records:
        m = tc.segment_sentences(rec["text"]).m
        hist[m] = hist.get(m, 0) + 1
        n_tokens += len(rec["text"].split())
    return {"n_docs": len(records), "n_whitespace_tokens": n_tokens,
            "sentence_histogram": {str(k): v for k, v in sorted(hist.items())}}


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def config_hash(config: dict) -> str:
    return hashlib.sha256(
        json.dumps(config, sort_keys=True).encode("utf-8")).hexdigest()


DEFAULT_EXPERIMENT = {
    "seed": 0,
    "objective": "sr",
    "vocab_size": 600,
    "model": {"d_model": 64, "n_heads": 4, "enc_layers": 2, "dec_layers": 2,
              "enc_ffn": 256, "dec_ffn": 128, "enc_dropout": 0.1,
              "dec_dropout": 0.3, "max_positions": 512},
    "synthetic": {"n_docs": 1000, "min_sentences": 4, "max_sentences": 8,
                  "reorder_fraction": 0.0},
    "span": {"a": 5, "b": 20},
    "target_len": 64,
    "pretrain": {"steps": 600, "batch_size": 16, "enc_peak_lr": 3e-4,
                 "dec_peak_lr": 3e-4, "warmup": 100},
    "finetune": {"steps": 400, "batch_size": 16, "enc_peak_lr": 3e-4,
                 "dec_peak_lr": 3e-4, "warmup": 100},
    "decode": {"beam_size": 5, "min_len": 1, "max_len": 64,
               "block_repeated_trigrams": True},
    "protocol": "f1",
    "n_val": 50,
}


def _merged(base: dict, override: dict) -> dict:
    out = dict(base)
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merged(out[key], val)
        else:
            out[key] = val
    return out


def run_experiment(config: dict, out_dir: str | Path,
                   corpus_path: str | Path | None = None,
                   pairs_path: str | Path | None = None) -> dict:
    """pretrain -> finetune -> decode -> score, with a manifest.

    Synthetic data is generated unless corpus/pairs JSONL paths are
    given. All stochastic stages derive from config["seed"], so two runs
    with the same config hash produce identical metrics.
    """
    cfg = _merged(DEFAULT_EXPERIMENT, config)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    seed = cfg["seed"]
    manifest: dict = {"config": cfg, "config_hash": config_hash(cfg), "seed": seed,
                      "inputs": {}}

    if corpus_path is not None:
        docs = read_jsonl(corpus_path)
        manifest["inputs"]["corpus"] = file_sha256(corpus_path)
    else:
        docs, gen_pairs = gen_synthetic(SyntheticSpec(**cfg["synthetic"]), seed)
    if pairs_path is not None:
        pairs = read_jsonl(pairs_path)
        manifest["inputs"]["pairs"] = file_sha256(pairs_path)
    elif corpus_path is None:
        pairs = gen_pairs
    else:
        raise ValueError("a corpus_path requires a pairs_path for fine-tuning")

    vocab = tc.train_bpe((d["text"] for d in docs), cfg["vocab_size"])
    vocab.save(out_dir / "vocab.txt")

    span = obj.SpanParams(**cfg["span"])
    data = make_pretrain_data(vocab, docs, cfg["objective"], seed, span=span,
                              target_len=cfg["target_len"])
    objective_counts: dict[str, int] = {}
    for _, ex in data:
        objective_counts[ex.objective] = objective_counts.get(ex.objective, 0) + 1
    manifest["pretrain_objective_counts"] = objective_counts

    torch.manual_seed(seed)
    model = Seq2SeqTransformer(ModelConfig(vocab_size=vocab.size, **cfg["model"]))

    n_val = min(cfg["n_val"], len(data) // 5)
    examples = clamp_to_positions([(ex.input_ids, ex.target_ids) for _, ex in data],
                                  model.config.max_positions)
    train_ex = examples[n_val:]
    val_batches = batches_from_examples(examples[:n_val], 16)
    ppl0 = evaluate_perplexity(model, val_batches)
    pt = cfg["pretrain"]
    optimizer = DualOptimizer(model, OptimConfig(
        enc_peak_lr=pt["enc_peak_lr"], dec_peak_lr=pt["dec_peak_lr"],
        warmup=pt["warmup"]))
    result = train_loop(model, optimizer, train_ex, pt["steps"], pt["batch_size"],
                        seed, val_batches=val_batches, eval_every=100)
    save_checkpoint(out_dir / "pretrained.ckpt", model, optimizer)
    manifest["pretrain"] = {
        "initial_val_perplexity": ppl0,
        "val_perplexity_curve": result.val_perplexities,
        "final_loss": result.losses[-1],
    }

    n_holdout = max(1, min(cfg["n_val"], len(pairs) // 5))
    ft_pairs, holdout = pairs[n_holdout:], pairs[:n_holdout]
    ft = cfg["finetune"]
    ft_opt = DualOptimizer(model, OptimConfig(
        enc_peak_lr=ft["enc_peak_lr"], dec_peak_lr=ft["dec_peak_lr"],
        warmup=ft["warmup"]))
    ft_examples = finetune_examples(vocab, ft_pairs)
    ft_result = train_loop(model, ft_opt, ft_examples, ft["steps"],
                           ft["batch_size"], seed + 1)
    save_checkpoint(out_dir / "finetuned.ckpt", model, ft_opt)
    manifest["finetune"] = {"final_loss": ft_result.losses[-1]}

    decode_cfg = DecodeConfig(**cfg["decode"])
    src_limit = min(512, model.config.max_positions)
    outputs = []
    for pair in holdout:
        src = tc.truncate(
            tc.encode(vocab, tc.normalize_whitespace(pair["document"])), src_limit)
        hyp = beam_search(model, src, decode_cfg)
        outputs.append({"id": pair["id"], "summary": tc.decode(vocab, hyp.tokens),
                        "log_prob": hyp.log_prob})
    write_jsonl(out_dir / "decoded.jsonl", outputs)

    protocol = EvalProtocol(cfg["protocol"])
    scored = [(o["summary"], p["summary"]) for o, p in zip(outputs, holdout)]
    manifest["rouge"] = {
        variant: asdict(score_corpus(scored, variant, protocol))
        for variant in ("r1", "r2", "rl")
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return manifest
