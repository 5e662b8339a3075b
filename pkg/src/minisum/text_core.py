"""Raw-text handling: sentence segmentation, byte-level BPE, piecing.

Token id layout: the five special tokens occupy ids 0..4, the 256 raw
bytes occupy ids 5..260, learned merges start at 261. Byte-level
fallback means no input text ever maps to UNK.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

PAD_ID = 0
BOS_ID = 1
EOS_ID = 2
MASK_ID = 3
UNK_ID = 4

SPECIAL_NAMES = {"PAD": PAD_ID, "BOS": BOS_ID, "EOS": EOS_ID, "MASK": MASK_ID, "UNK": UNK_ID}
N_SPECIALS = 5
BYTE_OFFSET = N_SPECIALS
BASE_VOCAB_SIZE = N_SPECIALS + 256  # 261

VOCAB_MAGIC = "STEPBPE v1"


class EmptyCorpus(ValueError):
    """Raised when a corpus contains no non-empty document."""


class InvalidId(ValueError):
    """Raised when a token id is outside the vocabulary."""


@dataclass
class RawDocument:
    id: str
    text: str


@dataclass
class SentenceSplit:
    sentences: list[str]

    @property
    def m(self) -> int:
        return len(self.sentences)


def normalize_whitespace(text: str) -> str:
    """Collapse whitespace runs to single spaces and trim the ends."""
    return " ".join(text.split())


_SENT_BOUNDARY = re.compile(r"(?<=[.!?]) ")


def segment_sentences(text: str) -> SentenceSplit:
    """Split text into sentences on {., !, ?} followed by whitespace.

    Whitespace is normalized first, so rejoining the sentences with
    single spaces reproduces the normalized input. A trailing fragment
    with no terminator becomes the final sentence. Abbreviation
    mis-splits ("Dr. Smith") are an accepted artifact of the rule.
    """
    norm = normalize_whitespace(text)
    if not norm:
        return SentenceSplit([])
    return SentenceSplit(_SENT_BOUNDARY.split(norm))


def _bytes_to_printable() -> dict[int, str]:
    # Bijective map from byte values to printable unicode chars, so merge
    # rules serialize as visible strings with no whitespace ambiguity.
    keep = (
        list(range(ord("!"), ord("~") + 1))
        + list(range(0xA1, 0xAD))
        + list(range(0xAE, 0x100))
    )
    mapping = {}
    shift = 0
    for b in range(256):
        if b in keep:
            mapping[b] = chr(b)
        else:
            mapping[b] = chr(0x100 + shift)
            shift += 1
    return mapping


_BYTE_TO_CHAR = _bytes_to_printable()
_CHAR_TO_BYTE = {c: b for b, c in _BYTE_TO_CHAR.items()}


def token_bytes_to_str(tok: bytes) -> str:
    return "".join(_BYTE_TO_CHAR[b] for b in tok)


def token_str_to_bytes(s: str) -> bytes:
    return bytes(_CHAR_TO_BYTE[c] for c in s)


@dataclass
class Vocabulary:
    """Byte-level BPE vocabulary: merge rules plus token<->id maps."""

    merges: list[tuple[bytes, bytes]] = field(default_factory=list)
    token_to_id: dict[bytes, int] = field(default_factory=dict)
    id_to_token: list[bytes | None] = field(default_factory=list)
    specials: dict[str, int] = field(default_factory=lambda: dict(SPECIAL_NAMES))

    def __post_init__(self):
        if not self.id_to_token:
            self.id_to_token = [None] * N_SPECIALS + [bytes([b]) for b in range(256)]
            self.token_to_id = {bytes([b]): BYTE_OFFSET + b for b in range(256)}
            for left, right in self.merges:
                self._register(left + right)

    def _register(self, tok: bytes) -> int:
        tid = len(self.id_to_token)
        self.id_to_token.append(tok)
        self.token_to_id[tok] = tid
        return tid

    @property
    def size(self) -> int:
        return len(self.id_to_token)

    @property
    def special_ids(self) -> set[int]:
        return set(self.specials.values())

    def save(self, path: str | Path) -> None:
        lines = [f"{VOCAB_MAGIC} {self.size}"]
        for left, right in self.merges:
            lines.append(f"{token_bytes_to_str(left)} {token_bytes_to_str(right)}")
        for name, tid in self.specials.items():
            lines.append(f"#special {name} {tid}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        header = lines[0].rsplit(" ", 1)
        if header[0] != VOCAB_MAGIC:
            raise ValueError(f"not a {VOCAB_MAGIC} vocabulary file: {path}")
        declared = int(header[1])
        merges: list[tuple[bytes, bytes]] = []
        specials: dict[str, int] = {}
        for line in lines[1:]:
            if not line:
                continue
            if line.startswith("#special "):
                _, name, tid = line.split(" ")
                specials[name] = int(tid)
            else:
                left, right = line.split(" ")
                merges.append((token_str_to_bytes(left), token_str_to_bytes(right)))
        vocab = cls(merges=merges, specials=specials or dict(SPECIAL_NAMES))
        if vocab.size != declared:
            raise ValueError(
                f"vocabulary size mismatch: header says {declared}, got {vocab.size}"
            )
        return vocab


# Pre-tokenization: alternate runs of non-whitespace and whitespace, so
# concatenating chunks reproduces the input byte-for-byte and merges
# never straddle a word/space boundary.
_CHUNK = re.compile(r"\S+|\s+")


def _chunks(text: str) -> list[bytes]:
    return [c.encode("utf-8") for c in _CHUNK.findall(text)]


def _count_pairs(seqs: dict[tuple[bytes, ...], int]) -> dict[tuple[bytes, bytes], int]:
    counts: dict[tuple[bytes, bytes], int] = {}
    for seq, mult in seqs.items():
        for i in range(len(seq) - 1):
            pair = (seq[i], seq[i + 1])
            counts[pair] = counts.get(pair, 0) + mult
    return counts


def _apply_merge(seq: tuple[bytes, ...], pair: tuple[bytes, bytes]) -> tuple[bytes, ...]:
    out: list[bytes] = []
    i = 0
    merged = pair[0] + pair[1]
    while i < len(seq):
        if i + 1 < len(seq) and seq[i] == pair[0] and seq[i + 1] == pair[1]:
            out.append(merged)
            i += 2
        else:
            out.append(seq[i])
            i += 1
    return tuple(out)


def train_bpe(corpus, target_size: int) -> Vocabulary:
    """Learn byte-pair merges greedily until target_size token types exist.

    Most frequent adjacent pair wins each round; ties break to the
    lexicographically smallest pair in byte order. Stops early when no
    adjacent pair is left. Deterministic for a fixed corpus order.
    """
    if target_size < BASE_VOCAB_SIZE:
        raise ValueError(f"target_size must be >= {BASE_VOCAB_SIZE}, got {target_size}")
    seqs: dict[tuple[bytes, ...], int] = {}
    n_nonempty = 0
    for doc in corpus:
        text = doc.text if isinstance(doc, RawDocument) else doc
        if not text:
            continue
        n_nonempty += 1
        for chunk in _chunks(text):
            key = tuple(bytes([b]) for b in chunk)
            seqs[key] = seqs.get(key, 0) + 1
    if n_nonempty == 0:
        raise EmptyCorpus("no non-empty document in corpus")

    merges: list[tuple[bytes, bytes]] = []
    n_merges = target_size - BASE_VOCAB_SIZE
    for _ in range(n_merges):
        counts = _count_pairs(seqs)
        if not counts:
            break
        best_count = max(counts.values())
        best = min(pair for pair, count in counts.items() if count == best_count)
        merges.append(best)
        seqs = {_apply_merge(seq, best): mult for seq, mult in seqs.items()}
    return Vocabulary(merges=merges)


def encode(vocab: Vocabulary, text: str) -> list[int]:
    """Tokenize text to ids: UTF-8 bytes, then merges in learned order.

    Byte-level fallback means any Unicode string encodes without UNK,
    and decode(encode(text)) == text exactly.
    """
    rank = {pair: i for i, pair in enumerate(vocab.merges)}
    out: list[int] = []
    for chunk in _chunks(text):
        seq: list[bytes] = [bytes([b]) for b in chunk]
        while len(seq) > 1:
            best_rank = None
            best_i = -1
            for i in range(len(seq) - 1):
                r = rank.get((seq[i], seq[i + 1]))
                if r is not None and (best_rank is None or r < best_rank):
                    best_rank = r
                    best_i = i
            if best_rank is None:
                break
            seq[best_i:best_i + 2] = [seq[best_i] + seq[best_i + 1]]
        out.extend(vocab.token_to_id[tok] for tok in seq)
    return out


def decode(vocab: Vocabulary, ids: list[int]) -> str:
    """Map ids back to text; special tokens are dropped."""
    special = vocab.special_ids
    parts = []
    for tid in ids:
        if tid in special:
            continue
        if tid < 0 or tid >= vocab.size:
            raise InvalidId(f"token id {tid} out of range for vocabulary of size {vocab.size}")
        parts.append(vocab.id_to_token[tid])
    return b"".join(parts).decode("utf-8", errors="replace")


def split_pieces(ids: list[int], piece_len: int = 512) -> list[list[int]]:
    """Non-overlapping windows of exactly piece_len; short remainder dropped."""
    if piece_len < 1:
        raise ValueError("piece_len must be >= 1")
    return [ids[i:i + piece_len] for i in range(0, len(ids) - piece_len + 1, piece_len)]


def truncate(ids: list[int], max_len: int) -> list[int]:
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    return ids[:max_len]
