"""Word vocabulary: the k most frequent words plus an UNK id."""

from collections import Counter
from dataclasses import dataclass
from pathlib import Path

from src.atomic import atomic_write_text
from src.errors import InputError

UNK = "<unk>"
UNK_ID = 0


@dataclass(frozen=True)
class Vocab:
    # id order; words[0] is UNK
    words: tuple[str, ...]

    def __post_init__(self):
        if not self.words or self.words[UNK_ID] != UNK:
            raise InputError(f"vocabulary must start with {UNK}")
        object.__setattr__(self, "_ids", {w: i for i, w in enumerate(self.words)})

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, word: str) -> bool:
        return word in self._ids

    def id(self, word: str) -> int:
        return self._ids.get(word, UNK_ID)


def build_vocab(corpus, k: int = 10000) -> Vocab:
    """Most frequent `k` words of a tokenized corpus; ties go to the lexicographically smaller word."""
    counts = Counter(w for sentence in corpus for w in sentence)
    counts.pop(UNK, None)
    if not counts:
        raise InputError("cannot build a vocabulary from an empty corpus")
    ranked = sorted(counts.items(), key=lambda item: (-item[1], item[0]))[:k]
    return Vocab((UNK,) + tuple(w for w, _ in ranked))


def encode(vocab: Vocab, tokens) -> list[int]:
    return [vocab.id(t) for t in tokens]


def decode(vocab: Vocab, ids) -> list[str]:
    return [vocab.words[i] for i in ids]


def save_vocab(path: str | Path, vocab: Vocab) -> None:
    atomic_write_text(path, "".join(w + "\n" for w in vocab.words))


def load_vocab(path: str | Path) -> Vocab:
    return Vocab(tuple(Path(path).read_text(encoding="utf-8").splitlines()))


def read_plain(path: str | Path) -> list[list[str]]:
    """Whitespace-tokenized sentences, one per line; blank lines are kept as empty sentences."""
    with open(path, "r", encoding="utf-8") as fh:
        return [line.split() for line in fh]
