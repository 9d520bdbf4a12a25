"""Token sequences and sparse tf-idf vectors for title+abstract text."""

from __future__ import annotations

import hashlib
import math
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

SEQ_START = "<s>"
SEP = "<sep>"
MARKERS = (SEQ_START, SEP)

DEFAULT_MAX_LEN = 300

# Unicode word characters (minus underscore), hyphen-joined compounds kept whole.
_WORD_RE = re.compile(r"[^\W_]+(?:-[^\W_]+)*", re.UNICODE)


class EmptyVocabularyError(Exception):
    pass


@dataclass(frozen=True)
class TokenSequence:
    """Marker-framed lowercase tokens: SEQ_START, title, SEP, abstract."""

    tokens: tuple[str, ...]

    def content_tokens(self) -> tuple[str, ...]:
        return tuple(t for t in self.tokens if t not in MARKERS)

    def __len__(self) -> int:
        return len(self.tokens)


def words(text: str) -> list[str]:
    return _WORD_RE.findall(text.lower())


def tokenize(title: str, abstract: str, max_len: int = DEFAULT_MAX_LEN) -> TokenSequence:
    """Build the canonical input sequence, truncated from the tail.

    Truncation only ever drops abstract tokens; a title that does not fit
    within ``max_len`` (with its two markers) is rejected.
    """
    title_tokens = words(title)
    if not title_tokens:
        raise ValueError("title has no tokens")
    fixed = 2 + len(title_tokens)
    if fixed > max_len:
        raise ValueError(
            f"title ({len(title_tokens)} tokens) does not fit in max_len={max_len}"
        )
    abstract_tokens = words(abstract)[: max_len - fixed]
    return TokenSequence(
        tokens=(SEQ_START, *title_tokens, SEP, *abstract_tokens)
    )


@dataclass
class Vocabulary:
    """Dense lexicographic term index with document frequencies."""

    index: dict[str, int]
    df: dict[str, int]
    n_documents: int

    def __len__(self) -> int:
        return len(self.index)

    @property
    def dim(self) -> int:
        """Feature dimension: one slot per term plus the trailing bias slot."""
        return len(self.index) + 1

    @property
    def bias_index(self) -> int:
        return len(self.index)

    def fingerprint(self) -> str:
        digest = hashlib.sha256()
        digest.update(f"{self.n_documents}\n".encode())
        for term in sorted(self.index):
            digest.update(f"{term}\t{self.index[term]}\t{self.df[term]}\n".encode())
        return digest.hexdigest()

    def save(self, path: str | Path) -> None:
        with Path(path).open("w", encoding="utf-8") as handle:
            handle.write(f"#n_documents\t{self.n_documents}\n")
            for term in sorted(self.index, key=lambda t: self.index[t]):
                handle.write(f"{term}\t{self.index[term]}\t{self.df[term]}\n")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        if not lines or not lines[0].startswith("#n_documents\t"):
            raise ValueError(f"{path}: missing vocabulary header")
        n_documents = int(lines[0].split("\t")[1])
        index: dict[str, int] = {}
        df: dict[str, int] = {}
        for line in lines[1:]:
            if not line.strip():
                continue
            term, idx, term_df = line.split("\t")
            index[term] = int(idx)
            df[term] = int(term_df)
        return cls(index=index, df=df, n_documents=n_documents)


def build_vocab(sequences: Iterable[TokenSequence], min_df: int = 1) -> Vocabulary:
    """Collect terms with document frequency >= min_df, indexed lexicographically."""
    df: Counter[str] = Counter()
    n_documents = 0
    for seq in sequences:
        n_documents += 1
        df.update(set(seq.content_tokens()))
    kept = sorted(t for t, count in df.items() if count >= min_df)
    if not kept:
        raise EmptyVocabularyError(
            f"no term reaches min_df={min_df} over {n_documents} documents"
        )
    return Vocabulary(
        index={term: i for i, term in enumerate(kept)},
        df={term: df[term] for term in kept},
        n_documents=n_documents,
    )


@dataclass(frozen=True)
class FeatureVector:
    """Sparse vector with strictly increasing indices; last slot is the bias."""

    indices: tuple[int, ...]
    weights: tuple[float, ...]
    dim: int


def featurize(seq: TokenSequence, vocab: Vocabulary) -> FeatureVector:
    """Weighted bag-of-terms vector for one sequence.

    Term weight is tf(t) * ln((1 + N) / (1 + df(t))); the non-bias part is
    L2-normalized (left as zero when nothing in the sequence carries
    weight), and the bias slot is fixed at 1.
    """
    tf = Counter(seq.content_tokens())
    n = vocab.n_documents
    entries: list[tuple[int, float]] = []
    for term, count in tf.items():
        idx = vocab.index.get(term)
        if idx is None:
            continue
        weight = count * math.log((1 + n) / (1 + vocab.df[term]))
        if weight != 0.0:
            entries.append((idx, weight))
    norm = math.sqrt(sum(w * w for _, w in entries))
    if norm > 0.0:
        entries = [(i, w / norm) for i, w in entries]
    else:
        entries = []
    entries.sort()
    entries.append((vocab.bias_index, 1.0))
    return FeatureVector(
        indices=tuple(i for i, _ in entries),
        weights=tuple(w for _, w in entries),
        dim=vocab.dim,
    )


def featurize_paper(
    title: str, abstract: str, vocab: Vocabulary, max_len: int = DEFAULT_MAX_LEN
) -> FeatureVector:
    return featurize(tokenize(title, abstract, max_len=max_len), vocab)
