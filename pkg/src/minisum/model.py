"""Miniature encoder-decoder transformer and its training machinery.

Pre-norm residual blocks, learned positional embeddings, token
embeddings tied across encoder, decoder, and output projection by
default. Training uses two Adam optimizers (encoder group, decoder
group), each with its own peak learning rate and warmup schedule.
"""

from __future__ import annotations

import io
import json
import math
import struct
from dataclasses import asdict, dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from minisum.text_core import BOS_ID, EOS_ID, PAD_ID


class NonFiniteLoss(RuntimeError):
    pass


class AllPadded(ValueError):
    pass


class EmptyDataset(ValueError):
    pass


@dataclass
class ModelConfig:
    """Shape of the miniature model. Defaults keep the reference ratios:
    encoder at least as deep as the decoder, larger encoder FFN, heavier
    decoder dropout."""

    vocab_size: int = 1000
    d_model: int = 64
    n_heads: int = 4
    enc_layers: int = 2
    dec_layers: int = 2
    enc_ffn: int = 256
    dec_ffn: int = 128
    enc_dropout: float = 0.1
    dec_dropout: float = 0.3
    max_positions: int = 512
    tie_embeddings: bool = True

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise ValueError("d_model must be divisible by n_heads")
        for name in ("vocab_size", "d_model", "n_heads", "enc_layers",
                     "dec_layers", "enc_ffn", "dec_ffn", "max_positions"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        for name in ("enc_dropout", "dec_dropout"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ValueError(f"{name} must be in [0, 1)")


class MultiHeadAttention(nn.Module):
    def __init__(self, d_model: int, n_heads: int):
        super().__init__()
        self.n_heads = n_heads
        self.d_head = d_model // n_heads
        self.q_proj = nn.Linear(d_model, d_model)
        self.k_proj = nn.Linear(d_model, d_model)
        self.v_proj = nn.Linear(d_model, d_model)
        self.out_proj = nn.Linear(d_model, d_model)

    def forward(self, query, key, value, mask=None):
        """mask: bool (batch, q_len, k_len), True = may attend."""
        b, q_len, _ = query.shape
        k_len = key.shape[1]

        def split(x, length):
            return x.view(b, length, self.n_heads, self.d_head).transpose(1, 2)

        q = split(self.q_proj(query), q_len)
        k = split(self.k_proj(key), k_len)
        v = split(self.v_proj(value), k_len)
        scores = q @ k.transpose(-2, -1) / math.sqrt(self.d_head)
        if mask is not None:
            scores = scores.masked_fill(~mask.unsqueeze(1), float("-inf"))
        attn = torch.softmax(scores, dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(b, q_len, -1)
        return self.out_proj(out)


class EncoderLayer(nn.Module):
    def __init__(self, d_model, n_heads, ffn, dropout):
        super().__init__()
        self.attn = MultiHeadAttention(d_model, n_heads)
        self.ff = nn.Sequential(nn.Linear(d_model, ffn), nn.GELU(), nn.Linear(ffn, d_model))
        self.norm1 = nn.LayerNorm(d_model)
        self.norm2 = nn.LayerNorm(d_model)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x, mask):
        h = self.norm1(x)
        x = x + self.dropout(self.attn(h, h, h, mask))
        x = x + self.dropout(self.ff(self.norm2(x)))
        return x


class DecoderLayer(nn.Module):
    def __init__(self, d_model, n_heads, ffn, dropout):
        super().__init__()
        self.self_attn = MultiHeadAttention(d_model, n_heads)
        self.cross_attn = MultiHeadAttention(d_model, n_heads)
        self.ff = nn.Sequential(nn.Linear(d_model, ffn), nn.GELU(), nn.Linear(ffn, d_model))
        self.norm1 = nn.LayerNorm(d_model)
        self.norm2 = nn.LayerNorm(d_model)
        self.norm3 = nn.LayerNorm(d_model)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x, memory, self_mask, cross_mask):
        h = self.norm1(x)
        x = x + self.dropout(self.self_attn(h, h, h, self_mask))
        x = x + self.dropout(self.cross_attn(self.norm2(x), memory, memory, cross_mask))
        x = x + self.dropout(self.ff(self.norm3(x)))
        return x


class Seq2SeqTransformer(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        c = config
        self.token_emb = nn.Embedding(c.vocab_size, c.d_model)
        self.enc_pos = nn.Embedding(c.max_positions, c.d_model)
        self.dec_pos = nn.Embedding(c.max_positions, c.d_model)
        self.enc_layers = nn.ModuleList(
            [EncoderLayer(c.d_model, c.n_heads, c.enc_ffn, c.enc_dropout)
             for _ in range(c.enc_layers)])
        self.dec_layers = nn.ModuleList(
            [DecoderLayer(c.d_model, c.n_heads, c.dec_ffn, c.dec_dropout)
             for _ in range(c.dec_layers)])
        self.enc_norm = nn.LayerNorm(c.d_model)
        self.dec_norm = nn.LayerNorm(c.d_model)
        self.enc_dropout = nn.Dropout(c.enc_dropout)
        self.dec_dropout = nn.Dropout(c.dec_dropout)
        if c.tie_embeddings:
            self.out_proj = None  # F.linear against token_emb.weight
        else:
            self.dec_token_emb = nn.Embedding(c.vocab_size, c.d_model)
            self.out_proj = nn.Linear(c.d_model, c.vocab_size, bias=False)
        self.scale = math.sqrt(c.d_model)
        # small-std embedding init keeps initial logits near-uniform
        for emb in (self.token_emb, self.enc_pos, self.dec_pos,
                    getattr(self, "dec_token_emb", None)):
            if emb is not None:
                nn.init.normal_(emb.weight, mean=0.0, std=c.d_model ** -0.5)

    def encoder_parameters(self):
        mods = [self.token_emb, self.enc_pos, self.enc_layers, self.enc_norm]
        for m in mods:
            yield from m.parameters()

    def decoder_parameters(self):
        mods = [self.dec_pos, self.dec_layers, self.dec_norm]
        if self.out_proj is not None:
            mods += [self.dec_token_emb, self.out_proj]
        for m in mods:
            yield from m.parameters()

    def encode(self, src_ids, src_pad_mask):
        """src_pad_mask: bool (batch, src_len), True = real token."""
        positions = torch.arange(src_ids.shape[1], device=src_ids.device)
        x = self.token_emb(src_ids) * self.scale + self.enc_pos(positions)
        x = self.enc_dropout(x)
        attn_mask = src_pad_mask.unsqueeze(1)  # (b, 1, src_len)
        for layer in self.enc_layers:
            x = layer(x, attn_mask)
        return self.enc_norm(x)

    def decode(self, memory, src_pad_mask, tgt_ids, tgt_pad_mask):
        b, t = tgt_ids.shape
        positions = torch.arange(t, device=tgt_ids.device)
        emb = self.token_emb if self.out_proj is None else self.dec_token_emb
        x = emb(tgt_ids) * self.scale + self.dec_pos(positions)
        x = self.dec_dropout(x)
        causal = torch.tril(torch.ones(t, t, dtype=torch.bool, device=tgt_ids.device))
        self_mask = causal.unsqueeze(0) & tgt_pad_mask.unsqueeze(1)
        cross_mask = src_pad_mask.unsqueeze(1)
        for layer in self.dec_layers:
            x = layer(x, memory, self_mask, cross_mask)
        x = self.dec_norm(x)
        if self.out_proj is None:
            return F.linear(x, self.token_emb.weight)
        return self.out_proj(x)

    def forward(self, src_ids, src_pad_mask, tgt_ids, tgt_pad_mask):
        memory = self.encode(src_ids, src_pad_mask)
        return self.decode(memory, src_pad_mask, tgt_ids, tgt_pad_mask)


@dataclass
class Batch:
    """Teacher-forcing batch: decoder input is BOS-prefixed, labels are
    EOS-suffixed, both padded with PAD which is excluded from the loss."""

    src_ids: torch.Tensor
    src_pad_mask: torch.Tensor
    tgt_in_ids: torch.Tensor
    tgt_pad_mask: torch.Tensor
    labels: torch.Tensor


def make_batch(examples: list[tuple[list[int], list[int]]],
               device: str = "cpu") -> Batch:
    """Build a padded batch from (source ids, target ids) pairs."""
    max_src = max(len(src) for src, _ in examples)
    max_tgt = max(len(tgt) for _, tgt in examples) + 1  # room for BOS/EOS
    n = len(examples)
    src_ids = torch.full((n, max_src), PAD_ID, dtype=torch.long)
    tgt_in = torch.full((n, max_tgt), PAD_ID, dtype=torch.long)
    labels = torch.full((n, max_tgt), PAD_ID, dtype=torch.long)
    for i, (src, tgt) in enumerate(examples):
        src_ids[i, :len(src)] = torch.tensor(src, dtype=torch.long)
        tgt_in[i, 0] = BOS_ID
        tgt_in[i, 1:len(tgt) + 1] = torch.tensor(tgt, dtype=torch.long)
        labels[i, :len(tgt)] = torch.tensor(tgt, dtype=torch.long)
        labels[i, len(tgt)] = EOS_ID
    return Batch(
        src_ids=src_ids.to(device),
        src_pad_mask=(src_ids != PAD_ID).to(device),
        tgt_in_ids=tgt_in.to(device),
        tgt_pad_mask=(tgt_in != PAD_ID).to(device),
        labels=labels.to(device),
    )


def loss_fn(logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Mean token negative log-likelihood over non-PAD label positions."""
    live = labels != PAD_ID
    if not live.any():
        raise AllPadded("every label position is padding")
    return F.cross_entropy(
        logits.reshape(-1, logits.shape[-1]), labels.reshape(-1),
        ignore_index=PAD_ID)


def lr_schedule(step: int, peak_lr: float, warmup: int) -> float:
    """Linear ramp to peak at step == warmup, then 1/sqrt(step) decay."""
    if step < 1 or warmup < 1:
        raise ValueError("step and warmup must be >= 1")
    return peak_lr * min(step / warmup, math.sqrt(warmup / step))


@dataclass
class OptimConfig:
    """Pre-training defaults; fine-tuning uses 2e-5/2e-5 with 4000 warmup."""

    enc_peak_lr: float = 2e-5
    dec_peak_lr: float = 1e-4
    warmup: int = 10_000

    @classmethod
    def finetune(cls, warmup: int = 4_000) -> "OptimConfig":
        return cls(enc_peak_lr=2e-5, dec_peak_lr=2e-5, warmup=warmup)


class DualOptimizer:
    """Two Adam optimizers, one per parameter group (encoder, decoder),
    each following its own warmup schedule. Moments and step counters
    are fully disjoint."""

    BETAS = (0.9, 0.98)

    def __init__(self, model: Seq2SeqTransformer, config: OptimConfig):
        self.config = config
        self.enc_opt = torch.optim.Adam(
            list(model.encoder_parameters()), lr=config.enc_peak_lr, betas=self.BETAS)
        self.dec_opt = torch.optim.Adam(
            list(model.decoder_parameters()), lr=config.dec_peak_lr, betas=self.BETAS)
        self.step_count = 0

    def step(self):
        self.step_count += 1
        for opt, peak in ((self.enc_opt, self.config.enc_peak_lr),
                          (self.dec_opt, self.config.dec_peak_lr)):
            lr = lr_schedule(self.step_count, peak, self.config.warmup)
            for group in opt.param_groups:
                group["lr"] = lr
            opt.step()

    def zero_grad(self):
        self.enc_opt.zero_grad()
        self.dec_opt.zero_grad()

    def state_dict(self):
        return {
            "enc": self.enc_opt.state_dict(),
            "dec": self.dec_opt.state_dict(),
            "step_count": self.step_count,
            "config": asdict(self.config),
        }

    def load_state_dict(self, state):
        self.enc_opt.load_state_dict(state["enc"])
        self.dec_opt.load_state_dict(state["dec"])
        self.step_count = state["step_count"]


def train_step(model: Seq2SeqTransformer, optimizer: DualOptimizer,
               batch: Batch) -> float:
    """One teacher-forcing update; aborts on a non-finite loss."""
    model.train()
    optimizer.zero_grad()
    logits = model(batch.src_ids, batch.src_pad_mask,
                   batch.tgt_in_ids, batch.tgt_pad_mask)
    loss = loss_fn(logits, batch.labels)
    if not torch.isfinite(loss):
        raise NonFiniteLoss(f"loss is {loss.item()} at step {optimizer.step_count + 1}")
    loss.backward()
    optimizer.step()
    return loss.item()


@torch.no_grad()
def evaluate_perplexity(model: Seq2SeqTransformer, batches: list[Batch]) -> float:
    """exp(mean token NLL) over non-PAD positions, dropout disabled."""
    if not batches:
        raise EmptyDataset("no evaluation batches")
    model.eval()
    total_nll = 0.0
    total_tokens = 0
    for batch in batches:
        logits = model(batch.src_ids, batch.src_pad_mask,
                       batch.tgt_in_ids, batch.tgt_pad_mask)
        live = batch.labels != PAD_ID
        nll = F.cross_entropy(
            logits.reshape(-1, logits.shape[-1]), batch.labels.reshape(-1),
            ignore_index=PAD_ID, reduction="sum")
        total_nll += nll.item()
        total_tokens += int(live.sum())
    return math.exp(total_nll / total_tokens)


# --- checkpoint format -------------------------------------------------
# header: magic, version u32, config-JSON (u32 length + bytes)
# then named tensor records for model weights, optimizer state, RNG state.

CKPT_MAGIC = b"MSUMCKP1"


def _write_tensor(buf, name: str, tensor: torch.Tensor):
    data = tensor.detach().cpu().contiguous()
    name_b = name.encode("utf-8")
    dtype = str(data.dtype).removeprefix("torch.")
    dtype_b = dtype.encode("ascii")
    buf.write(struct.pack("<HH", len(name_b), len(dtype_b)))
    buf.write(name_b)
    buf.write(dtype_b)
    buf.write(struct.pack("<B", data.dim()))
    buf.write(struct.pack(f"<{data.dim()}q", *data.shape) if data.dim() else b"")
    raw = data.numpy().tobytes()  # little-endian on all supported platforms
    buf.write(struct.pack("<Q", len(raw)))
    buf.write(raw)


def _read_tensor(buf):
    head = buf.read(4)
    if not head:
        return None
    name_len, dtype_len = struct.unpack("<HH", head)
    name = buf.read(name_len).decode("utf-8")
    dtype = getattr(torch, buf.read(dtype_len).decode("ascii"))
    ndim = struct.unpack("<B", buf.read(1))[0]
    shape = struct.unpack(f"<{ndim}q", buf.read(8 * ndim)) if ndim else ()
    nbytes = struct.unpack("<Q", buf.read(8))[0]
    raw = buf.read(nbytes)
    flat = torch.frombuffer(bytearray(raw), dtype=dtype)
    return name, flat.reshape(shape).clone()


def save_checkpoint(path, model: Seq2SeqTransformer,
                    optimizer: DualOptimizer | None = None,
                    extra: dict | None = None):
    """Write model weights (+ optimizer and RNG state) for exact resume."""
    with open(path, "wb") as f:
        f.write(CKPT_MAGIC)
        f.write(struct.pack("<I", 1))
        meta = {"config": asdict(model.config), "extra": extra or {}}
        if optimizer is not None:
            state = optimizer.state_dict()
            meta["optim"] = {
                "step_count": state["step_count"],
                "config": state["config"],
            }
        meta_b = json.dumps(meta, sort_keys=True).encode("utf-8")
        f.write(struct.pack("<I", len(meta_b)))
        f.write(meta_b)
        for name, tensor in model.state_dict().items():
            _write_tensor(f, f"model/{name}", tensor)
        if optimizer is not None:
            for side, opt in (("enc", optimizer.enc_opt), ("dec", optimizer.dec_opt)):
                sd = opt.state_dict()
                for pidx, pstate in sd["state"].items():
                    for key in ("exp_avg", "exp_avg_sq"):
                        _write_tensor(f, f"optim/{side}/{pidx}/{key}", pstate[key])
                    _write_tensor(f, f"optim/{side}/{pidx}/step",
                                  torch.as_tensor(pstate["step"]))
        _write_tensor(f, "rng/torch", torch.random.get_rng_state())


def load_checkpoint(path, restore_rng: bool = False):
    """Read a checkpoint; returns (model, optimizer-or-None, extra)."""
    with open(path, "rb") as f:
        if f.read(8) != CKPT_MAGIC:
            raise ValueError(f"not a checkpoint file: {path}")
        version = struct.unpack("<I", f.read(4))[0]
        if version != 1:
            raise ValueError(f"unsupported checkpoint version {version}")
        meta_len = struct.unpack("<I", f.read(4))[0]
        meta = json.loads(f.read(meta_len))
        tensors = {}
        while (rec := _read_tensor(f)) is not None:
            tensors[rec[0]] = rec[1]
    model = Seq2SeqTransformer(ModelConfig(**meta["config"]))
    model.load_state_dict({k.removeprefix("model/"): v
                           for k, v in tensors.items() if k.startswith("model/")})
    optimizer = None
    if "optim" in meta:
        optimizer = DualOptimizer(model, OptimConfig(**meta["optim"]["config"]))
        # run a zero-lr warm step so Adam allocates state, then overwrite
        for side, opt in (("enc", optimizer.enc_opt), ("dec", optimizer.dec_opt)):
            sd = opt.state_dict()
            state = {}
            pidx = 0
            while f"optim/{side}/{pidx}/step" in tensors:
                state[pidx] = {
                    "step": tensors[f"optim/{side}/{pidx}/step"],
                    "exp_avg": tensors[f"optim/{side}/{pidx}/exp_avg"],
                    "exp_avg_sq": tensors[f"optim/{side}/{pidx}/exp_avg_sq"],
                }
                pidx += 1
            sd["state"] = state
            opt.load_state_dict(sd)
        optimizer.step_count = meta["optim"]["step_count"]
    if restore_rng and "rng/torch" in tensors:
        torch.random.set_rng_state(tensors["rng/torch"].to(torch.uint8))
    return model, optimizer, meta.get("extra", {})
