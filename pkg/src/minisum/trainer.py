"""Corpus-to-batches plumbing and the pre-train / fine-tune loops."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from minisum import objectives as obj
from minisum import text_core as tc
from minisum.model import (Batch, DualOptimizer, ModelConfig, OptimConfig,
                           Seq2SeqTransformer, evaluate_perplexity, make_batch,
                           train_step)


def tokenize_document(vocab: tc.Vocabulary, text: str) -> list[list[int]]:
    """Per-sentence token id sequences whose concatenation equals the
    encoding of the whitespace-normalized document."""
    split = tc.segment_sentences(text)
    seqs = []
    for i, sent in enumerate(split.sentences):
        prefix = " " if i > 0 else ""
        seqs.append(tc.encode(vocab, prefix + sent))
    return [s for s in seqs if s]


def make_pretrain_example(vocab: tc.Vocabulary, doc_id: str, text: str,
                          objective: str, seed: int,
                          span: obj.SpanParams | None = None,
                          policy: obj.MaskPolicy | None = None,
                          target_len: int = obj.MAX_TARGET_LEN,
                          max_input: int | None = obj.MAX_INPUT_LEN,
                          max_target: int | None = obj.MAX_TARGET_LEN):
    """One PretrainExample for one document, or None if infeasible.

    The per-document rng is derived from (seed, doc_id), so output does
    not depend on processing order.
    """
    span = span or obj.SpanParams()
    policy = policy or obj.MaskPolicy()
    rng = obj.make_rng(obj.derive_seed(seed, doc_id))
    sentence_seqs = tokenize_document(vocab, text)
    piece = [t for s in sentence_seqs for t in s]
    if not piece:
        return None
    try:
        if objective == "sr":
            return obj.sentence_reorder(sentence_seqs, rng, max_input, max_target)
        if objective == "nsg":
            return obj.next_segment_split(piece, rng, target_len, max_input=max_input)
        if objective == "mdg":
            return obj.mask_document(piece, span, policy, rng, vocab,
                                     max_input, max_target)
        if objective == "all":
            return obj.mix_all(sentence_seqs, [], span, policy, rng, vocab,
                               target_len, max_input, max_target)
    except (obj.TooShort, obj.EmptyDocument, obj.NoFeasibleObjective):
        return None
    raise ValueError(f"unknown objective {objective!r}")


def make_pretrain_data(vocab: tc.Vocabulary, docs: list[dict], objective: str,
                       seed: int, **kwargs) -> list[tuple[str, obj.PretrainExample]]:
    out = []
    for doc in docs:
        ex = make_pretrain_example(vocab, doc["id"], doc["text"], objective,
                                   seed, **kwargs)
        if ex is not None:
            out.append((doc["id"], ex))
    return out


@dataclass
class TrainResult:
    losses: list[float] = field(default_factory=list)
    val_perplexities: list[tuple[int, float]] = field(default_factory=list)


def batches_from_examples(examples: list[tuple[list[int], list[int]]],
                          batch_size: int) -> list[Batch]:
    return [make_batch(examples[i:i + batch_size])
            for i in range(0, len(examples), batch_size)]


def clamp_to_positions(examples: list[tuple[list[int], list[int]]],
                       max_positions: int) -> list[tuple[list[int], list[int]]]:
    """Truncate examples to the model's position budget (target keeps one
    slot for the BOS prefix)."""
    return [(src[:max_positions], tgt[:max_positions - 1])
            for src, tgt in examples]


def train_loop(model: Seq2SeqTransformer, optimizer: DualOptimizer,
               examples: list[tuple[list[int], list[int]]], steps: int,
               batch_size: int, seed: int,
               val_batches: list[Batch] | None = None,
               eval_every: int = 0,
               stop_at_ppl: float | None = None) -> TrainResult:
    """Run `steps` updates over reshuffled passes of the example pool.

    Optionally evaluates validation perplexity every eval_every steps
    and stops early once it drops below stop_at_ppl.
    """
    if not examples:
        raise ValueError("no training examples")
    examples = clamp_to_positions(examples, model.config.max_positions)
    rng = np.random.default_rng(seed)
    torch.manual_seed(seed)
    result = TrainResult()
    order: list[int] = []
    for step in range(1, steps + 1):
        if len(order) < batch_size:
            order = rng.permutation(len(examples)).tolist() + order
        idx = [order.pop() for _ in range(min(batch_size, len(order)))]
        batch = make_batch([examples[i] for i in idx])
        result.losses.append(train_step(model, optimizer, batch))
        if val_batches and eval_every and step % eval_every == 0:
            ppl = evaluate_perplexity(model, val_batches)
            result.val_perplexities.append((step, ppl))
            if stop_at_ppl is not None and ppl <= stop_at_ppl:
                break
    return result


def finetune_examples(vocab: tc.Vocabulary, pairs: list[dict],
                      max_input: int = 512,
                      max_target: int = 256) -> list[tuple[list[int], list[int]]]:
    """(document, summary) token pairs with the standard truncation."""
    out = []
    for pair in pairs:
        src = tc.truncate(tc.encode(vocab, tc.normalize_whitespace(pair["document"])),
                          max_input)
        tgt = tc.truncate(tc.encode(vocab, tc.normalize_whitespace(pair["summary"])),
                          max_target)
        if src and tgt:
            out.append((src, tgt))
    return out
