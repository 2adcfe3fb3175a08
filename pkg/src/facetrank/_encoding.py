"""Helpers shared by the encoder-based estimators."""

from __future__ import annotations

from typing import Iterable

from .corpus import Document
from .nn import EncoderConfig
from .text import WordPieceTokenizer, split_sentences

_CACHE_ATTR = "_sentence_cache"


def sentence_pieces(doc: Document, tokenizer: WordPieceTokenizer) -> list[list[str]]:
    """Wordpieces of each document sentence (empty sentences dropped)."""
    out = []
    for s in split_sentences(doc.text):
        pieces = tokenizer.tokenize(s)
        if pieces:
            out.append(pieces)
    return out


def sentence_words(doc: Document, tokenizer: WordPieceTokenizer) -> list[tuple[list[str], list[int]]]:
    """Per sentence: wordpieces plus the owning word index of each piece."""
    out = []
    for s in split_sentences(doc.text):
        pieces, owner = tokenizer.tokenize_words(s)
        if pieces:
            out.append((pieces, owner))
    return out


def fit_tokenizer(texts: Iterable[str], vocab_size: int) -> WordPieceTokenizer:
    return WordPieceTokenizer.train(texts, vocab_size=vocab_size)


def make_encoder_config(est, vocab_size: int) -> EncoderConfig:
    return EncoderConfig(
        vocab_size=vocab_size,
        layers=est.layers,
        model_dim=est.model_dim,
        heads=est.heads,
        ffn_dim=est.ffn_dim,
        max_positions=est.max_len,
        dropout=est.dropout,
    )
