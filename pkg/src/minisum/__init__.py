"""Desk-scale toolkit for seq2seq summarization pre-training.

Byte-level BPE tokenization, three denoising pre-training objectives
(sentence reordering, next-segment generation, masked document
generation), a miniature encoder-decoder transformer, beam search with
trigram blocking, and ROUGE evaluation.
"""

from minisum.estimators import BpeTokenizer, Seq2SeqSummarizer

__version__ = "0.1.0"

__all__ = ["BpeTokenizer", "Seq2SeqSummarizer", "__version__"]
