"""Regex-class SMILES tokenizer and corpus-built vocabulary."""

from __future__ import annotations

import hashlib
import json
import re
from collections import Counter
from dataclasses import dataclass
from functools import lru_cache

from .tables import tokenizer_pattern

PAD, BOS, EOS, UNK = 0, 1, 2, 3
RESERVED = ("<pad>", "<bos>", "<eos>", "<unk>")


@lru_cache(maxsize=None)
def _regex():
    return re.compile(tokenizer_pattern())


def split_tokens(text: str):
    """Split into token strings; characters outside the token grammar come back as (None, char)."""
    out = []
    pos = 0
    for m in _regex().finditer(text):
        for ch in text[pos:m.start()]:
            out.append((None, ch))
        out.append((m.group(0), m.group(0)))
        pos = m.end()
    for ch in text[pos:]:
        out.append((None, ch))
    return out


@dataclass(frozen=True)
class Vocabulary:
    entries: tuple

    def __post_init__(self):
        if tuple(self.entries[:4]) != RESERVED:
            raise ValueError("vocabulary must start with the reserved entries")
        if len(set(self.entries)) != len(self.entries):
            raise ValueError("vocabulary entries must be unique")
        object.__setattr__(self, "_index", {t: i for i, t in enumerate(self.entries)})

    def __len__(self):
        return len(self.entries)

    @property
    def size(self):
        return len(self.entries)

    def id(self, token):
        return self._index.get(token, UNK)

    def __contains__(self, token):
        return token in self._index

    def digest(self):
        return hashlib.sha256("\n".join(self.entries).encode()).hexdigest()[:16]

    def to_json(self):
        return json.dumps(list(self.entries))

    @classmethod
    def from_json(cls, text):
        return cls(tuple(json.loads(text)))


def build_vocabulary(corpus) -> Vocabulary:
    """Reserved ids first, then tokens by descending frequency, ties lexicographic."""
    corpus = list(corpus)
    if not corpus:
        raise ValueError("corpus is empty")
    counts = Counter()
    for smi in corpus:
        counts.update(tok for tok, _ in split_tokens(smi) if tok is not None)
    tokens = sorted(counts, key=lambda t: (-counts[t], t))
    return Vocabulary(RESERVED + tuple(tokens))


@dataclass(frozen=True)
class TokenSequence:
    ids: tuple
    unk_count: int = 0

    @property
    def has_unk(self):
        return self.unk_count > 0

    def __len__(self):
        return len(self.ids)

    def __iter__(self):
        return iter(self.ids)


def tokenize(text: str, vocab: Vocabulary) -> TokenSequence:
    ids = [BOS]
    unk = 0
    for tok, _ in split_tokens(text):
        i = UNK if tok is None else vocab.id(tok)
        unk += i == UNK
        ids.append(i)
    ids.append(EOS)
    return TokenSequence(tuple(ids), unk)


def detokenize(ids, vocab: Vocabulary) -> str:
    """Join entries, skipping PAD/BOS and stopping at the first EOS."""
    out = []
    for i in ids:
        i = int(i)
        if i == EOS:
            break
        if i in (PAD, BOS):
            continue
        if not 0 <= i < len(vocab):
            raise ValueError(f"token id {i} outside vocabulary of size {len(vocab)}")
        out.append(vocab.entries[i])
    return "".join(out)
