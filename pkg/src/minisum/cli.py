"""Command-line entry points for every pipeline stage."""

from __future__ import annotations

import json
import sys
from dataclasses import asdict
from pathlib import Path

import click

from minisum import objectives as obj
from minisum import pipeline
from minisum import text_core as tc
from minisum.decoding import DecodeConfig, beam_search, beam_sweep, tune_min_length
from minisum.model import (DualOptimizer, ModelConfig, OptimConfig,
                           Seq2SeqTransformer, load_checkpoint, save_checkpoint)
from minisum.reorder import corpus_reorder_stat, lead3
from minisum.rouge import EvalProtocol, score_corpus
from minisum.synthetic import SyntheticSpec, gen_synthetic
from minisum.trainer import (finetune_examples, make_pretrain_data, train_loop)

import torch


@click.group()
def main():
    """Desk-scale seq2seq summarization pre-training toolkit."""


@main.command()
@click.argument("inputs", nargs=-1, required=True)
@click.option("--out", required=True, type=click.Path())
def ingest(inputs, out):
    """Normalize raw text / JSONL inputs into a canonical corpus."""
    stats = pipeline.ingest(list(inputs), out)
    if stats["n_docs"] == 0:
        click.echo("warning: empty corpus", err=True)
    click.echo(json.dumps(stats, indent=2))


@main.command("gen-synthetic")
@click.option("--n-docs", default=100, show_default=True)
@click.option("--min-sentences", default=4, show_default=True)
@click.option("--max-sentences", default=8, show_default=True)
@click.option("--reorder-fraction", default=0.0, show_default=True)
@click.option("--seed", required=True, type=int)
@click.option("--out", required=True, type=click.Path())
@click.option("--pairs-out", type=click.Path(), default=None,
              help="Also write document-summary pairs here.")
def gen_synthetic_cmd(n_docs, min_sentences, max_sentences, reorder_fraction,
                      seed, out, pairs_out):
    """Generate a deterministic template-grammar corpus."""
    spec = SyntheticSpec(n_docs=n_docs, min_sentences=min_sentences,
                         max_sentences=max_sentences,
                         reorder_fraction=reorder_fraction)
    docs, pairs = gen_synthetic(spec, seed)
    pipeline.write_jsonl(out, docs)
    if pairs_out:
        pipeline.write_jsonl(pairs_out, pairs)
    click.echo(f"wrote {len(docs)} documents to {out}")


@main.command("train-bpe")
@click.option("--corpus", required=True, type=click.Path(exists=True))
@click.option("--size", default=1000, show_default=True)
@click.option("--out", required=True, type=click.Path())
def train_bpe_cmd(corpus, size, out):
    """Learn a byte-level BPE vocabulary from a JSONL corpus."""
    docs = pipeline.read_jsonl(corpus)
    vocab = tc.train_bpe((d["text"] for d in docs), size)
    vocab.save(out)
    click.echo(f"vocabulary of {vocab.size} tokens ({len(vocab.merges)} merges) -> {out}")


@main.command("make-pretrain-data")
@click.option("--corpus", required=True, type=click.Path(exists=True))
@click.option("--vocab", required=True, type=click.Path(exists=True))
@click.option("--objective", type=click.Choice(["sr", "nsg", "mdg", "all"]),
              required=True)
@click.option("--seed", required=True, type=int)
@click.option("--span-min", default=100, show_default=True)
@click.option("--span-max", default=256, show_default=True)
@click.option("--target-len", default=256, show_default=True)
@click.option("--out", required=True, type=click.Path())
def make_pretrain_data_cmd(corpus, vocab, objective, seed, span_min, span_max,
                           target_len, out):
    """Build (input, target) pre-training pairs as JSONL."""
    docs = pipeline.read_jsonl(corpus)
    voc = tc.Vocabulary.load(vocab)
    data = make_pretrain_data(voc, docs, objective, seed,
                              span=obj.SpanParams(a=span_min, b=span_max),
                              target_len=target_len)
    with open(out, "w", encoding="utf-8") as f:
        for doc_id, ex in data:
            f.write(ex.to_json(doc_id) + "\n")
    click.echo(f"wrote {len(data)} examples to {out}")


def _train_command(examples, vocab_size, model_json, optim, steps, batch_size,
                   seed, out, init_ckpt=None):
    torch.manual_seed(seed)
    if init_ckpt:
        model, _, _ = load_checkpoint(init_ckpt)
    else:
        params = json.loads(Path(model_json).read_text()) if model_json else {}
        model = Seq2SeqTransformer(ModelConfig(vocab_size=vocab_size, **params))
    optimizer = DualOptimizer(model, optim)
    result = train_loop(model, optimizer, examples, steps, batch_size, seed)
    save_checkpoint(out, model, optimizer)
    click.echo(json.dumps({"steps": len(result.losses),
                           "final_loss": result.losses[-1]}))


@main.command()
@click.option("--data", required=True, type=click.Path(exists=True),
              help="Pre-training examples JSONL from make-pretrain-data.")
@click.option("--vocab", required=True, type=click.Path(exists=True))
@click.option("--config", "model_json", type=click.Path(exists=True), default=None,
              help="JSON file with ModelConfig overrides.")
@click.option("--steps", required=True, type=int)
@click.option("--batch-size", default=16, show_default=True)
@click.option("--enc-lr", default=2e-5, show_default=True)
@click.option("--dec-lr", default=1e-4, show_default=True)
@click.option("--warmup", default=10000, show_default=True)
@click.option("--seed", required=True, type=int)
@click.option("--out", required=True, type=click.Path())
def pretrain(data, vocab, model_json, steps, batch_size, enc_lr, dec_lr,
             warmup, seed, out):
    """Pre-train the miniature model on denoising examples."""
    voc = tc.Vocabulary.load(vocab)
    records = pipeline.read_jsonl(data)
    examples = [(r["input_ids"], r["target_ids"]) for r in records]
    _train_command(examples, voc.size, model_json,
                   OptimConfig(enc_peak_lr=enc_lr, dec_peak_lr=dec_lr,
                               warmup=warmup),
                   steps, batch_size, seed, out)


@main.command()
@click.option("--ckpt", required=True, type=click.Path(exists=True))
@click.option("--pairs", required=True, type=click.Path(exists=True),
              help='JSONL of {"document", "summary"}.')
@click.option("--vocab", required=True, type=click.Path(exists=True))
@click.option("--steps", required=True, type=int)
@click.option("--batch-size", default=16, show_default=True)
@click.option("--lr", default=2e-5, show_default=True)
@click.option("--warmup", default=4000, show_default=True)
@click.option("--seed", required=True, type=int)
@click.option("--out", required=True, type=click.Path())
def finetune(ckpt, pairs, vocab, steps, batch_size, lr, warmup, seed, out):
    """Fine-tune a pre-trained checkpoint on document-summary pairs."""
    voc = tc.Vocabulary.load(vocab)
    records = pipeline.read_jsonl(pairs)
    examples = finetune_examples(voc, records)
    _train_command(examples, voc.size, None,
                   OptimConfig(enc_peak_lr=lr, dec_peak_lr=lr, warmup=warmup),
                   steps, batch_size, seed, out, init_ckpt=ckpt)


def _load_for_decode(ckpt, vocab):
    model, _, _ = load_checkpoint(ckpt)
    return model, tc.Vocabulary.load(vocab)


@main.command()
@click.option("--ckpt", required=True, type=click.Path(exists=True))
@click.option("--vocab", required=True, type=click.Path(exists=True))
@click.option("--input", "input_path", required=True, type=click.Path(exists=True))
@click.option("--beam", default=5, show_default=True)
@click.option("--min-len", default=1, show_default=True)
@click.option("--max-len", default=256, show_default=True)
@click.option("--block-trigrams/--no-block-trigrams", default=True, show_default=True)
@click.option("--out", required=True, type=click.Path())
def decode(ckpt, vocab, input_path, beam, min_len, max_len, block_trigrams, out):
    """Beam-search decode documents to summaries."""
    model, voc = _load_for_decode(ckpt, vocab)
    cfg = DecodeConfig(beam_size=beam, min_len=min_len, max_len=max_len,
                       block_repeated_trigrams=block_trigrams)
    src_limit = min(512, model.config.max_positions)
    outputs = []
    for rec in pipeline.read_jsonl(input_path):
        src = tc.truncate(tc.encode(voc, tc.normalize_whitespace(rec["text"])), src_limit)
        hyp = beam_search(model, src, cfg)
        outputs.append({"id": rec["id"], "summary": tc.decode(voc, hyp.tokens),
                        "log_prob": hyp.log_prob})
    pipeline.write_jsonl(out, outputs)
    click.echo(f"decoded {len(outputs)} documents -> {out}")


@main.command("rouge")
@click.option("--variant", type=click.Choice(["r1", "r2", "rl"]), required=True)
@click.option("--protocol", type=click.Choice(["f1", "limited-recall"]),
              default="f1", show_default=True)
@click.option("--pairs", required=True, type=click.Path(exists=True))
def rouge_cmd(variant, protocol, pairs):
    """Score candidate/reference pairs; emits a JSON report."""
    records = pipeline.read_jsonl(pairs)
    score = score_corpus([(r["candidate"], r["reference"]) for r in records],
                         variant, EvalProtocol(protocol))
    click.echo(json.dumps({"variant": variant, "protocol": protocol,
                           "precision": score.precision, "recall": score.recall,
                           "f1": score.f1, "n_pairs": len(records)}))


@main.command("analyze-reorder")
@click.option("--pairs", required=True, type=click.Path(exists=True),
              help='JSONL of {"document", "summary"}.')
@click.option("--raw-counts", is_flag=True,
              help="Align by overlapped-bigram count instead of ROUGE-2 F1.")
def analyze_reorder(pairs, raw_counts):
    """Report the fraction of pairs showing content reordering."""
    records = pipeline.read_jsonl(pairs)
    splits = [(tc.segment_sentences(r["document"]),
               tc.segment_sentences(r["summary"])) for r in records]
    report = corpus_reorder_stat(splits, raw_counts=raw_counts)
    click.echo(json.dumps({"n_pairs": report.n_pairs,
                           "n_reordered": report.n_reordered,
                           "fraction": report.fraction}))


@main.command("lead3")
@click.option("--docs", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
def lead3_cmd(docs, out):
    """Emit the first-three-sentences baseline summaries."""
    outputs = [{"id": rec["id"],
                "summary": lead3(tc.segment_sentences(rec["text"]))}
               for rec in pipeline.read_jsonl(docs)]
    pipeline.write_jsonl(out, outputs)
    click.echo(f"wrote {len(outputs)} baselines to {out}")


def _val_sources(voc, records):
    sources = [tc.truncate(tc.encode(voc, tc.normalize_whitespace(r["document"])), 512)
               for r in records]
    refs = [r["summary"] for r in records]
    return sources, refs


@main.command("beam-sweep")
@click.option("--ckpt", required=True, type=click.Path(exists=True))
@click.option("--vocab", required=True, type=click.Path(exists=True))
@click.option("--pairs", required=True, type=click.Path(exists=True))
@click.option("--beams", default="1,2,3,4,5,6,7,8,9,10", show_default=True)
@click.option("--min-len", default=1, show_default=True)
@click.option("--max-len", default=64, show_default=True)
def beam_sweep_cmd(ckpt, vocab, pairs, beams, min_len, max_len):
    """Decode+score the validation pairs at each beam size."""
    model, voc = _load_for_decode(ckpt, vocab)
    sources, refs = _val_sources(voc, pipeline.read_jsonl(pairs))
    cfg = DecodeConfig(min_len=min_len, max_len=max_len)
    rows = beam_sweep(model, sources, refs, lambda ids: tc.decode(voc, ids), cfg,
                      beams=[int(b) for b in beams.split(",")])
    click.echo(json.dumps(rows, indent=2))


@main.command("tune-min-len")
@click.option("--ckpt", required=True, type=click.Path(exists=True))
@click.option("--vocab", required=True, type=click.Path(exists=True))
@click.option("--pairs", required=True, type=click.Path(exists=True))
@click.option("--lo", default=30, show_default=True)
@click.option("--hi", default=80, show_default=True)
@click.option("--step", default=5, show_default=True)
@click.option("--beam", default=5, show_default=True)
@click.option("--max-len", default=256, show_default=True)
def tune_min_len_cmd(ckpt, vocab, pairs, lo, hi, step, beam, max_len):
    """Grid-search the minimum summary length on validation ROUGE-L."""
    model, voc = _load_for_decode(ckpt, vocab)
    sources, refs = _val_sources(voc, pipeline.read_jsonl(pairs))
    cfg = DecodeConfig(beam_size=beam, max_len=max_len)
    best, table = tune_min_length(model, sources, refs,
                                  lambda ids: tc.decode(voc, ids), cfg,
                                  range_lo=lo, range_hi=hi, step=step)
    click.echo(json.dumps({"best_min_len": best,
                           "table": {str(k): v for k, v in table.items()}}))


@main.command("run-experiment")
@click.option("--config", type=click.Path(exists=True), default=None,
              help="JSON experiment config (defaults used where absent).")
@click.option("--seed", required=True, type=int)
@click.option("--out-dir", required=True, type=click.Path())
@click.option("--corpus", type=click.Path(exists=True), default=None)
@click.option("--pairs", type=click.Path(exists=True), default=None)
def run_experiment_cmd(config, seed, out_dir, corpus, pairs):
    """Run pretrain -> finetune -> decode -> score and write a manifest."""
    cfg = json.loads(Path(config).read_text()) if config else {}
    cfg["seed"] = seed
    manifest = pipeline.run_experiment(cfg, out_dir, corpus_path=corpus,
                                       pairs_path=pairs)
    click.echo(json.dumps({"config_hash": manifest["config_hash"],
                           "rouge": manifest["rouge"]}, indent=2))


if __name__ == "__main__":
    main()
