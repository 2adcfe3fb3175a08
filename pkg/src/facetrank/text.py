"""Tokenizers shared by the index, the encoders and the decoder.

Three token spaces exist:

* index / content words: lowercase alphanumeric runs (``index_tokenize``).
* word tokens: rule-based, punctuation-splitting, used for decoder targets and
  for query-side comparisons (``word_tokenize``).
* wordpieces: greedy longest-match pieces over a vocabulary learned from the
  training documents, used by the encoders (``WordPieceTokenizer``).
"""

from __future__ import annotations

import json
import re
from collections import Counter
from pathlib import Path
from typing import Iterable, Sequence

PAD, UNK, CLS, SEP = "[PAD]", "[UNK]", "[CLS]", "[SEP]"
N_FACETS = 5
BOS_TOKENS = tuple(f"[unused_{i}]" for i in range(N_FACETS))
EOS_TOKENS = tuple(f"[unused_{100 + i}]" for i in range(N_FACETS))
SPECIAL_TOKENS = (PAD, UNK, CLS, SEP) + BOS_TOKENS + EOS_TOKENS
PAD_ID, UNK_ID, CLS_ID, SEP_ID = 0, 1, 2, 3
BOS_IDS = tuple(range(4, 4 + N_FACETS))
EOS_IDS = tuple(range(4 + N_FACETS, 4 + 2 * N_FACETS))
N_SPECIAL = len(SPECIAL_TOKENS)

_ALNUM = re.compile(r"[^\W_]+", re.UNICODE)
_WORD = re.compile(r"[^\W_]+|[^\w\s]|_", re.UNICODE)
_SENT_END = re.compile(r"(?<=[.?!])\s+")

# punctuation glued to its neighbours when detokenizing
_NO_SPACE_BEFORE = set(".,;:!?)]}%'-/")
_NO_SPACE_AFTER = set("([{-/")


def index_tokenize(text: str) -> list[str]:
    """Lowercase alphanumeric runs; everything else separates tokens."""
    return [t.lower() for t in _ALNUM.findall(text)]


def word_tokenize(text: str) -> list[str]:
    """Split into word runs and single punctuation marks, keeping case.

    >>> word_tokenize("BRAF (E586K), 64-year-old")
    ['BRAF', '(', 'E586K', ')', ',', '64', '-', 'year', '-', 'old']
    """
    return _WORD.findall(text)


def detokenize(tokens: Sequence[str]) -> str:
    """Inverse of :func:`word_tokenize` for conventionally spaced text."""
    out: list[str] = []
    glue = True
    for tok in tokens:
        if out and not glue and tok not in _NO_SPACE_BEFORE:
            out.append(" ")
        out.append(tok)
        glue = tok in _NO_SPACE_AFTER
    return "".join(out)


def content_words(text: str) -> list[str]:
    """Lowercased word tokens with punctuation removed (query/target space)."""
    return index_tokenize(text)


def split_sentences(text: str) -> list[str]:
    """Rule-based splitter: break after ``.``, ``?`` or ``!`` followed by whitespace."""
    return [s.strip() for s in _SENT_END.split(text.strip()) if s.strip()]


def distinct(tokens: Iterable[str]) -> list[str]:
    """Order-preserving de-duplication."""
    return list(dict.fromkeys(tokens))


class WordPieceTokenizer:
    """Greedy longest-match-first wordpiece tokenizer.

    Continuation pieces carry the ``##`` prefix. The first ``N_SPECIAL`` ids are
    the reserved tokens (PAD, UNK, CLS, SEP, then five facet bos and five facet
    eos signals).
    """

    def __init__(self, vocab: Sequence[str], max_word_chars: int = 100):
        if tuple(vocab[:N_SPECIAL]) != SPECIAL_TOKENS:
            raise ValueError("vocabulary must start with the reserved special tokens")
        self.vocab = list(vocab)
        self.index = {tok: i for i, tok in enumerate(self.vocab)}
        if len(self.index) != len(self.vocab):
            raise ValueError("duplicate entries in wordpiece vocabulary")
        self.max_word_chars = max_word_chars

    def __len__(self) -> int:
        return len(self.vocab)

    @classmethod
    def train(
        cls,
        texts: Iterable[str],
        vocab_size: int = 4000,
        min_word_freq: int = 3,
        max_piece_len: int = 4,
        word_share: float = 0.6,
    ) -> "WordPieceTokenizer":
        """Learn a vocabulary from raw text.

        Frequent whole words take up to ``word_share`` of the budget; the rest is
        filled with frequent word-initial prefixes and ``##`` suffix pieces.
        Every character seen is kept in both forms so any word built from known
        characters is representable.
        """
        counts = Counter(w for t in texts for w in index_tokenize(t))
        chars = sorted({c for w in counts for c in w})
        vocab = list(SPECIAL_TOKENS) + chars + ["##" + c for c in chars]
        seen = set(vocab)
        budget = max(vocab_size - len(vocab), 0)

        words = [w for w, c in counts.items() if c >= min_word_freq and len(w) > 1]
        words.sort(key=lambda w: (-counts[w], w))
        n_words = min(len(words), int(budget * word_share))
        for w in words[:n_words]:
            vocab.append(w)
            seen.add(w)

        pieces: Counter = Counter()
        for w, c in counts.items():
            for n in range(2, min(max_piece_len, len(w) - 1) + 1):
                pieces[w[:n]] += c
                pieces["##" + w[-n:]] += c
        ranked = sorted(pieces, key=lambda p: (-pieces[p], p))
        for p in ranked:
            if len(vocab) >= vocab_size:
                break
            if p not in seen:
                vocab.append(p)
                seen.add(p)
        return cls(vocab)

    def tokenize_word(self, word: str) -> list[str]:
        if len(word) > self.max_word_chars:
            return [UNK]
        pieces = []
        start = 0
        while start < len(word):
            end = len(word)
            found = None
            while start < end:
                sub = word[start:end] if start == 0 else "##" + word[start:end]
                if sub in self.index:
                    found = sub
                    break
                end -= 1
            if found is None:
                return [UNK]
            pieces.append(found)
            start = end
        return pieces

    def tokenize(self, text: str) -> list[str]:
        return [p for w in index_tokenize(text) for p in self.tokenize_word(w)]

    def tokenize_words(self, text: str) -> tuple[list[str], list[int]]:
        """Pieces plus, for each piece, the index of the word it came from."""
        pieces: list[str] = []
        owner: list[int] = []
        for i, w in enumerate(index_tokenize(text)):
            for p in self.tokenize_word(w):
                pieces.append(p)
                owner.append(i)
        return pieces, owner

    def convert_tokens_to_ids(self, tokens: Iterable[str]) -> list[int]:
        return [self.index.get(t, UNK_ID) for t in tokens]

    def convert_ids_to_tokens(self, ids: Iterable[int]) -> list[str]:
        return [self.vocab[i] for i in ids]

    def save(self, path) -> None:
        Path(path).write_text("\n".join(self.vocab) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "WordPieceTokenizer":
        return cls(Path(path).read_text(encoding="utf-8").splitlines())

    def to_json(self) -> str:
        return json.dumps(self.vocab)


def merge_pieces(pieces: Sequence[str]) -> list[str]:
    """Join ``##`` continuation pieces back into whole words."""
    words: list[str] = []
    for p in pieces:
        if p.startswith("##") and words:
            words[-1] += p[2:]
        else:
            words.append(p)
    return words
