"""Pre-training pair construction: sentence reordering (SR), next
segment generation (NSG), masked document generation (MDG), and the
uniform three-way mixing policy.

Every transform is a deterministic function of its inputs and the
generator state, so corpus-scale generation can parallelize with
per-piece derived seeds.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from minisum.text_core import MASK_ID, N_SPECIALS, Vocabulary, truncate

MAX_INPUT_LEN = 512
MAX_TARGET_LEN = 256


class EmptyDocument(ValueError):
    pass


class TooShort(ValueError):
    pass


class NoFeasibleObjective(ValueError):
    pass


@dataclass
class MaskPolicy:
    """Per-token treatment probabilities inside the masked span."""

    p_mask: float = 0.8
    p_random: float = 0.1
    p_keep: float = 0.1

    def __post_init__(self):
        total = self.p_mask + self.p_random + self.p_keep
        if abs(total - 1.0) > 1e-9 or min(self.p_mask, self.p_random, self.p_keep) < 0:
            raise ValueError("mask/random/keep probabilities must be >= 0 and sum to 1")


@dataclass
class SpanParams:
    """Inclusive bounds for the masked-span length draw."""

    a: int = 100
    b: int = 256

    def __post_init__(self):
        if not 1 <= self.a <= self.b:
            raise ValueError("need 1 <= a <= b")


@dataclass
class PretrainExample:
    input_ids: list[int]
    target_ids: list[int]
    objective: str  # "sr" | "nsg" | "mdg"
    meta: dict = field(default_factory=dict)

    def to_json(self, example_id: str) -> str:
        return json.dumps({
            "id": example_id,
            "objective": self.objective,
            "input_ids": self.input_ids,
            "target_ids": self.target_ids,
            "meta": self.meta,
        })


def make_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed)


def derive_seed(global_seed: int, piece_id: str) -> int:
    """Stable per-piece seed so output is independent of worker scheduling."""
    h = hashlib.sha256(f"{global_seed}:{piece_id}".encode()).digest()
    return int.from_bytes(h[:8], "little")


def _maybe_truncate(ids: list[int], limit: Optional[int]) -> list[int]:
    return ids if limit is None else truncate(ids, limit)


def sentence_reorder(sentence_seqs: list[list[int]], rng: np.random.Generator,
                     max_input: Optional[int] = MAX_INPUT_LEN,
                     max_target: Optional[int] = MAX_TARGET_LEN) -> PretrainExample:
    """SR: input is the sentence-shuffled document, target the original.

    The permutation is uniform over all m! orders (identity included),
    drawn Fisher-Yates style. meta["order"] records the shuffled order
    as 1-based original-sentence indices.
    """
    m = len(sentence_seqs)
    if m == 0 or sum(len(s) for s in sentence_seqs) == 0:
        raise EmptyDocument("sentence reordering needs a non-empty document")
    order = rng.permutation(m)
    shuffled = [tok for i in order for tok in sentence_seqs[i]]
    original = [tok for seq in sentence_seqs for tok in seq]
    return PretrainExample(
        input_ids=_maybe_truncate(shuffled, max_input),
        target_ids=_maybe_truncate(original, max_target),
        objective="sr",
        meta={"order": [int(i) + 1 for i in order]},
    )


def next_segment_split(seq: list[int], rng: np.random.Generator,
                       target_len: int = MAX_TARGET_LEN,
                       split_at: Optional[int] = None,
                       max_input: Optional[int] = MAX_INPUT_LEN) -> PretrainExample:
    """NSG: a document prefix predicts the tokens that follow it.

    The split point is uniform over interior positions unless split_at
    pins it (e.g. to a fixed piece boundary). The input keeps at most
    the last max_input tokens before the split.
    """
    if len(seq) < 2:
        raise TooShort("need at least 2 tokens to split")
    if target_len < 1:
        raise ValueError("target_len must be >= 1")
    k = int(rng.integers(1, len(seq))) if split_at is None else split_at
    if not 1 <= k <= len(seq) - 1:
        raise ValueError(f"split point {k} outside [1, {len(seq) - 1}]")
    prefix = seq[:k]
    if max_input is not None:
        prefix = prefix[-max_input:]
    return PretrainExample(
        input_ids=prefix,
        target_ids=seq[k:k + target_len],
        objective="nsg",
        meta={"split": k},
    )


def mask_document(piece: list[int], span: SpanParams, policy: MaskPolicy,
                  rng: np.random.Generator, vocab: Vocabulary,
                  max_input: Optional[int] = MAX_INPUT_LEN,
                  max_target: Optional[int] = MAX_TARGET_LEN) -> PretrainExample:
    """MDG: corrupt one contiguous span, predict the whole original piece.

    Span length l ~ U(a, min(b, |piece|)), start k ~ U(1, |piece|-l+1),
    both inclusive. Each span position independently gets masked /
    replaced by a random non-special token / kept, per the policy.
    meta records k, l (1-based) and the per-position actions.
    """
    n = len(piece)
    if n < span.a:
        raise TooShort(f"piece of {n} tokens is shorter than minimum span {span.a}")
    l = int(rng.integers(span.a, min(span.b, n) + 1))
    k = int(rng.integers(1, n - l + 2))  # 1-based start
    corrupted = list(piece)
    actions = []
    non_special = vocab.size - N_SPECIALS
    for pos in range(k - 1, k - 1 + l):
        u = rng.random()
        if u < policy.p_mask:
            corrupted[pos] = MASK_ID
            actions.append("mask")
        elif u < policy.p_mask + policy.p_random:
            corrupted[pos] = N_SPECIALS + int(rng.integers(non_special))
            actions.append("random")
        else:
            actions.append("keep")
    return PretrainExample(
        input_ids=_maybe_truncate(corrupted, max_input),
        target_ids=_maybe_truncate(list(piece), max_target),
        objective="mdg",
        meta={"span_start": k, "span_len": l, "actions": actions},
    )


OBJECTIVES = ("sr", "nsg", "mdg")


def mix_all(sentence_seqs: list[list[int]], following: list[int],
            span: SpanParams, policy: MaskPolicy, rng: np.random.Generator,
            vocab: Vocabulary, target_len: int = MAX_TARGET_LEN,
            max_input: Optional[int] = MAX_INPUT_LEN,
            max_target: Optional[int] = MAX_TARGET_LEN) -> PretrainExample:
    """Draw SR/NSG/MDG uniformly and delegate; redraw among the feasible
    objectives if the drawn one's precondition fails."""
    piece = [tok for seq in sentence_seqs for tok in seq]
    feasible = []
    if sentence_seqs and piece:
        feasible.append("sr")
    if len(piece) + len(following) >= 2:
        feasible.append("nsg")
    if len(piece) >= span.a:
        feasible.append("mdg")
    if not feasible:
        raise NoFeasibleObjective("piece supports none of SR/NSG/MDG")
    choice = OBJECTIVES[int(rng.integers(3))]
    if choice not in feasible:
        choice = feasible[int(rng.integers(len(feasible)))]
    if choice == "sr":
        return sentence_reorder(sentence_seqs, rng, max_input, max_target)
    if choice == "nsg":
        return next_segment_split(piece + following, rng, target_len,
                                  max_input=max_input)
    return mask_document(piece, span, policy, rng, vocab, max_input, max_target)
