"""Beam-search decoding with trigram blocking and length constraints,
plus the minimum-length tuner and beam-size sweep harnesses."""

from __future__ import annotations

from dataclasses import dataclass, field

import torch

from minisum.model import Seq2SeqTransformer
from minisum.rouge import EvalProtocol, headline, score_corpus
from minisum.text_core import BOS_ID, EOS_ID, MASK_ID, PAD_ID, UNK_ID


@dataclass
class DecodeConfig:
    beam_size: int = 5
    min_len: int = 1
    max_len: int = 256
    block_repeated_trigrams: bool = True

    def __post_init__(self):
        if self.beam_size < 1:
            raise ValueError("beam_size must be >= 1")
        if not 1 <= self.min_len <= self.max_len:
            raise ValueError("need 1 <= min_len <= max_len")


@dataclass
class BeamHypothesis:
    tokens: list[int]  # generated content tokens, EOS included once finished
    log_prob: float
    finished: bool = False
    trigrams: set[tuple[int, int, int]] = field(default_factory=set)


def trigram_block(tokens: list[int], candidate: int) -> bool:
    """True iff appending candidate does NOT repeat an existing trigram."""
    if len(tokens) < 3:
        return True
    new = (tokens[-2], tokens[-1], candidate)
    for i in range(len(tokens) - 2):
        if (tokens[i], tokens[i + 1], tokens[i + 2]) == new:
            return False
    return True


# Tokens the decoder must never emit as content.
_FORBIDDEN = (PAD_ID, BOS_ID, MASK_ID, UNK_ID)


@torch.no_grad()
def beam_search(model: Seq2SeqTransformer, source: list[int],
                cfg: DecodeConfig) -> BeamHypothesis:
    """Length-extended beam search over content tokens.

    EOS is forbidden while a hypothesis has fewer than min_len content
    tokens; finished hypotheses are set aside; search stops once
    beam_size hypotheses have finished or max_len is reached. Scores
    are raw cumulative log-probs (no length normalization). Ties break
    by lower token id, then earlier hypothesis index. If nothing
    finishes, the best unfinished hypothesis is returned.
    """
    if not source:
        raise ValueError("source must be non-empty")
    model.eval()
    device = next(model.parameters()).device
    src = torch.tensor([source], dtype=torch.long, device=device)
    src_mask = torch.ones_like(src, dtype=torch.bool)
    memory = model.encode(src, src_mask)

    live = [BeamHypothesis(tokens=[], log_prob=0.0)]
    finished: list[BeamHypothesis] = []
    # the BOS prefix occupies one decoder position
    max_len = min(cfg.max_len, model.config.max_positions - 1)
    for _ in range(max_len):
        if len(finished) >= cfg.beam_size:
            break
        # batch all live hypotheses through the decoder
        n = len(live)
        t = len(live[0].tokens) + 1  # BOS + generated so far
        tgt = torch.full((n, t), BOS_ID, dtype=torch.long, device=device)
        for i, hyp in enumerate(live):
            if hyp.tokens:
                tgt[i, 1:] = torch.tensor(hyp.tokens, dtype=torch.long, device=device)
        tgt_mask = torch.ones_like(tgt, dtype=torch.bool)
        logits = model.decode(memory.expand(n, -1, -1), src_mask.expand(n, -1),
                              tgt, tgt_mask)
        log_probs = torch.log_softmax(logits[:, -1, :].double(), dim=-1)

        candidates = []  # (-score, token, hyp_index, hyp, lp)
        for i, hyp in enumerate(live):
            row = log_probs[i]
            for tok in range(row.shape[0]):
                if tok in _FORBIDDEN:
                    continue
                if tok == EOS_ID and len(hyp.tokens) < cfg.min_len:
                    continue
                if (cfg.block_repeated_trigrams and tok != EOS_ID
                        and not trigram_block(hyp.tokens, tok)):
                    continue
                lp = row[tok].item()
                if lp == float("-inf"):
                    continue
                candidates.append((-(hyp.log_prob + lp), tok, i, hyp, lp))
        if not candidates:
            break
        candidates.sort(key=lambda c: (c[0], c[1], c[2]))

        new_live = []
        for neg_score, tok, _, hyp, lp in candidates:
            if len(new_live) >= cfg.beam_size:
                break
            ext = BeamHypothesis(
                tokens=hyp.tokens + [tok],
                log_prob=hyp.log_prob + lp,
                finished=(tok == EOS_ID),
            )
            if ext.finished:
                finished.append(ext)
                if len(finished) >= cfg.beam_size:
                    break
            else:
                new_live.append(ext)
        live = new_live
        if not live:
            break

    pool = finished if finished else live
    return min(pool, key=lambda h: (-h.log_prob, h.tokens))


def greedy_decode(model: Seq2SeqTransformer, source: list[int],
                  cfg: DecodeConfig) -> BeamHypothesis:
    """Beam search with beam_size 1."""
    cfg1 = DecodeConfig(beam_size=1, min_len=cfg.min_len, max_len=cfg.max_len,
                        block_repeated_trigrams=cfg.block_repeated_trigrams)
    return beam_search(model, source, cfg1)


def tune_min_length(model: Seq2SeqTransformer, sources: list[list[int]],
                    references: list[str], detok, cfg: DecodeConfig,
                    range_lo: int = 30, range_hi: int = 80,
                    step: int = 5) -> tuple[int, dict[int, float]]:
    """Pick the min_len maximizing validation ROUGE-L (full-length F1).

    detok maps decoded token ids back to a string. Ties break to the
    smaller min_len. Returns (best, {min_len: rouge_l_f1}).
    """
    if range_lo > range_hi or step < 1:
        raise ValueError("need range_lo <= range_hi and step >= 1")
    table = {}
    for min_len in range(range_lo, range_hi + 1, step):
        trial = DecodeConfig(beam_size=cfg.beam_size, min_len=min_len,
                             max_len=max(cfg.max_len, min_len),
                             block_repeated_trigrams=cfg.block_repeated_trigrams)
        cands = [detok(beam_search(model, src, trial).tokens) for src in sources]
        score = score_corpus(list(zip(cands, references)), "rl",
                             EvalProtocol.FULL_LENGTH_F1)
        table[min_len] = score.f1
    best = max(table, key=lambda k: (table[k], -k))
    return best, table


def beam_sweep(model: Seq2SeqTransformer, sources: list[list[int]],
               references: list[str], detok, cfg: DecodeConfig,
               beams: list[int] | None = None) -> list[dict]:
    """Decode+score once per beam size; returns the sweep as a table."""
    beams = beams or list(range(1, 11))
    if not beams:
        raise ValueError("beams must be non-empty")
    rows = []
    for beam in beams:
        trial = DecodeConfig(beam_size=beam, min_len=cfg.min_len,
                             max_len=cfg.max_len,
                             block_repeated_trigrams=cfg.block_repeated_trigrams)
        cands = [detok(beam_search(model, src, trial).tokens) for src in sources]
        score = score_corpus(list(zip(cands, references)), "rl",
                             EvalProtocol.FULL_LENGTH_F1)
        rows.append({"beam": beam, "rouge_l": score.f1})
    return rows
