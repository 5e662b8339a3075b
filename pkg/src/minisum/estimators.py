"""sklearn-style estimator fronts, so the toolkit composes with pipelines.

BpeTokenizer is a fit/transform text-to-ids transformer; Seq2SeqSummarizer
is a fit/predict document summarizer built on the miniature transformer.
"""

from __future__ import annotations

import torch
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from minisum import text_core as tc
from minisum.decoding import DecodeConfig, beam_search
from minisum.model import DualOptimizer, ModelConfig, OptimConfig, Seq2SeqTransformer
from minisum.trainer import finetune_examples, train_loop


class BpeTokenizer(TransformerMixin, BaseEstimator):
    """Byte-level BPE tokenizer with byte fallback (no UNK on input text).

    fit learns merge rules from an iterable of strings; transform maps
    strings to token-id lists; inverse_transform maps them back.
    """

    def __init__(self, vocab_size: int = 1000):
        self.vocab_size = vocab_size

    def fit(self, X, y=None):
        self.vocab_ = tc.train_bpe(iter(X), self.vocab_size)
        return self

    def transform(self, X) -> list[list[int]]:
        check_is_fitted(self, "vocab_")
        return [tc.encode(self.vocab_, text) for text in X]

    def inverse_transform(self, X) -> list[str]:
        check_is_fitted(self, "vocab_")
        return [tc.decode(self.vocab_, ids) for ids in X]

    def save(self, path):
        check_is_fitted(self, "vocab_")
        self.vocab_.save(path)

    @classmethod
    def from_file(cls, path) -> "BpeTokenizer":
        est = cls()
        est.vocab_ = tc.Vocabulary.load(path)
        est.vocab_size = est.vocab_.size
        return est


class Seq2SeqSummarizer(BaseEstimator):
    """Abstractive summarizer: fit on (documents, summaries), predict
    summaries for new documents via beam search.

    Training starts from the given checkpoint model if init_model is
    set (the pre-train -> fine-tune recipe), otherwise from random
    initialization.
    """

    def __init__(self, vocab_size: int = 600, d_model: int = 64, n_heads: int = 4,
                 enc_layers: int = 2, dec_layers: int = 2,
                 steps: int = 500, batch_size: int = 16,
                 peak_lr: float = 1e-3, warmup: int = 100,
                 beam_size: int = 5, min_len: int = 1, max_len: int = 64,
                 seed: int = 0, init_model: Seq2SeqTransformer | None = None,
                 tokenizer: BpeTokenizer | None = None):
        self.vocab_size = vocab_size
        self.d_model = d_model
        self.n_heads = n_heads
        self.enc_layers = enc_layers
        self.dec_layers = dec_layers
        self.steps = steps
        self.batch_size = batch_size
        self.peak_lr = peak_lr
        self.warmup = warmup
        self.beam_size = beam_size
        self.min_len = min_len
        self.max_len = max_len
        self.seed = seed
        self.init_model = init_model
        self.tokenizer = tokenizer

    def fit(self, X, y):
        """X: iterable of documents; y: matching summaries."""
        docs = list(X)
        summaries = list(y)
        if len(docs) != len(summaries):
            raise ValueError("X and y must have equal length")
        self.tokenizer_ = self.tokenizer or BpeTokenizer(self.vocab_size).fit(
            docs + summaries)
        vocab = self.tokenizer_.vocab_
        if self.init_model is not None:
            self.model_ = self.init_model
        else:
            torch.manual_seed(self.seed)
            self.model_ = Seq2SeqTransformer(ModelConfig(
                vocab_size=vocab.size, d_model=self.d_model, n_heads=self.n_heads,
                enc_layers=self.enc_layers, dec_layers=self.dec_layers))
        optimizer = DualOptimizer(self.model_, OptimConfig(
            enc_peak_lr=self.peak_lr, dec_peak_lr=self.peak_lr, warmup=self.warmup))
        pairs = [{"document": d, "summary": s} for d, s in zip(docs, summaries)]
        examples = finetune_examples(vocab, pairs)
        self.history_ = train_loop(self.model_, optimizer, examples,
                                   self.steps, self.batch_size, self.seed)
        return self

    def predict(self, X) -> list[str]:
        check_is_fitted(self, "model_")
        cfg = DecodeConfig(beam_size=self.beam_size, min_len=self.min_len,
                           max_len=self.max_len)
        vocab = self.tokenizer_.vocab_
        out = []
        for doc in X:
            src = tc.truncate(tc.encode(vocab, tc.normalize_whitespace(doc)), 512)
            hyp = beam_search(self.model_, src, cfg)
            out.append(tc.decode(vocab, hyp.tokens))
        return out
