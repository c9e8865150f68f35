"""Text normalization, byte-level BPE, corpus splits and frequency tables."""

from __future__ import annotations

import json
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, CorpusEncodingError, ValidationError
from .rng import stream

BASE_SIZE = 256
SPECIAL_NAMES = ("begin", "end", "pad", "unknown")
SPECIAL_TOKENS = {name: BASE_SIZE + i for i, name in enumerate(SPECIAL_NAMES)}
FIRST_MERGE_ID = BASE_SIZE + len(SPECIAL_NAMES)
TOKENIZER_VERSION = 1
# inputs at least this long are encoded with the vectorized per-merge pass
_VECTOR_THRESHOLD = 4096


def normalize(text: str | bytes) -> str:
    """Lowercase and compose to NFC."""
    if isinstance(text, (bytes, bytearray)):
        try:
            text = bytes(text).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CorpusEncodingError(f"input is not valid UTF-8: {exc}") from exc
    return unicodedata.normalize("NFC", unicodedata.normalize("NFC", text).lower())


def _merge_array(seq: np.ndarray, a: int, b: int, new_id: int) -> np.ndarray:
    """Replace non-overlapping left-to-right occurrences of ``(a, b)``."""
    if seq.size < 2:
        return seq
    hit = (seq[:-1] == a) & (seq[1:] == b)
    if not hit.any():
        return seq
    idx = np.flatnonzero(hit)
    if a == b:
        # in a run of consecutive hits only every other one can merge
        run_start = np.ones(idx.size, dtype=bool)
        run_start[1:] = np.diff(idx) != 1
        starts = np.maximum.accumulate(np.where(run_start, np.arange(idx.size), 0))
        idx = idx[(np.arange(idx.size) - starts) % 2 == 0]
    out = seq.copy()
    out[idx] = new_id
    keep = np.ones(seq.size, dtype=bool)
    keep[idx + 1] = False
    return out[keep]


@dataclass
class Tokenizer:
    """Byte-level BPE: ids 0-255 are bytes, then the special tokens, then merges."""

    merges: list[tuple[int, int]] = field(default_factory=list)
    special_tokens: dict[str, int] = field(default_factory=lambda: dict(SPECIAL_TOKENS))

    def __post_init__(self):
        self.merges = [(int(a), int(b)) for a, b in self.merges]
        self.vocab: list[bytes] = [bytes([i]) for i in range(BASE_SIZE)] + [b""] * len(SPECIAL_NAMES)
        self.ranks: dict[tuple[int, int], int] = {}
        for rank, (a, b) in enumerate(self.merges):
            if a >= len(self.vocab) or b >= len(self.vocab) or a in self.special_ids or b in self.special_ids:
                raise ValidationError(f"merge {rank} refers to tokens that do not exist yet: {(a, b)}")
            self.ranks[(a, b)] = rank
            self.vocab.append(self.vocab[a] + self.vocab[b])

    @property
    def special_ids(self) -> set[int]:
        return set(self.special_tokens.values())

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    def encode(self, text: str) -> list[int]:
        data = text.encode("utf-8")
        if len(data) >= _VECTOR_THRESHOLD:
            return self.encode_array(np.frombuffer(data, dtype=np.uint8).astype(np.int64)).tolist()
        ids = list(data)
        while len(ids) > 1:
            best = min(((self.ranks.get(p, len(self.merges)), p) for p in zip(ids, ids[1:])))
            rank, pair = best
            if rank == len(self.merges):
                break
            new_id, out, i = FIRST_MERGE_ID + rank, [], 0
            while i < len(ids):
                if i + 1 < len(ids) and (ids[i], ids[i + 1]) == pair:
                    out.append(new_id)
                    i += 2
                else:
                    out.append(ids[i])
                    i += 1
            ids = out
        return ids

    def encode_array(self, seq: np.ndarray) -> np.ndarray:
        """Apply every merge in training order to an id array."""
        for rank, (a, b) in enumerate(self.merges):
            seq = _merge_array(seq, a, b, FIRST_MERGE_ID + rank)
        return seq

    def decode(self, ids) -> str:
        out = bytearray()
        for i in ids:
            i = int(i)
            if not 0 <= i < len(self.vocab):
                raise IndexError(f"token id {i} outside vocabulary of size {len(self.vocab)}")
            out += self.vocab[i]
        return out.decode("utf-8", errors="replace")

    def to_json(self) -> dict:
        return {"version": TOKENIZER_VERSION, "base": "bytes", "merges": [list(m) for m in self.merges],
                "special_tokens": dict(self.special_tokens)}

    @classmethod
    def from_json(cls, doc: dict) -> "Tokenizer":
        if doc.get("version") != TOKENIZER_VERSION or doc.get("base") != "bytes":
            raise ValidationError("unsupported tokenizer document")
        return cls([tuple(m) for m in doc["merges"]], {k: int(v) for k, v in doc["special_tokens"].items()})

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_json(), sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Tokenizer":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def bpe_train(documents, target_vocab_size: int) -> Tokenizer:
    """Greedy byte-level BPE.

    Merges the most frequent adjacent pair (ties: smallest ``(a, b)`` id
    pair) until the vocabulary reaches ``target_vocab_size`` or no pair
    occurs at least twice.  Pairs never span document boundaries.
    """
    if isinstance(documents, str):
        documents = [documents]
    if target_vocab_size < FIRST_MERGE_ID:
        raise ConfigError(f"target vocabulary {target_vocab_size} is below the base size {FIRST_MERGE_ID}")
    chunks = []
    for doc in documents:
        chunks.append(np.frombuffer(doc.encode("utf-8"), dtype=np.uint8).astype(np.int64))
        chunks.append(np.array([-1], dtype=np.int64))
    seq = np.concatenate(chunks) if chunks else np.zeros(0, dtype=np.int64)
    merges: list[tuple[int, int]] = []
    stride = target_vocab_size + 1
    while FIRST_MERGE_ID + len(merges) < target_vocab_size and seq.size > 1:
        left, right = seq[:-1], seq[1:]
        valid = (left >= 0) & (right >= 0)
        codes = left[valid] * stride + right[valid]
        if codes.size == 0:
            break
        uniq, counts = np.unique(codes, return_counts=True)
        best = counts.max()
        if best < 2:
            break
        code = int(uniq[np.flatnonzero(counts == best)[0]])  # np.unique sorts, so this is the smallest pair
        a, b = divmod(code, stride)
        seq = _merge_array(seq, a, b, FIRST_MERGE_ID + len(merges))
        merges.append((a, b))
    return Tokenizer(merges)


@dataclass
class Corpus:
    documents: list[str]
    splits: dict[str, list[int]]

    def __post_init__(self):
        seen = sorted(i for ids in self.splits.values() for i in ids)
        if seen != list(range(len(self.documents))):
            raise ValidationError("splits must be disjoint and cover every document")

    def split(self, name: str) -> list[str]:
        return [self.documents[i] for i in self.splits.get(name, [])]


def split_documents(text: str) -> list[str]:
    """Blank-line separated paragraphs, normalized, empties dropped."""
    return [d for d in (normalize(p).strip() for p in text.split("\n\n")) if d]


def make_splits(n: int, fractions=(0.8, 0.1, 0.1), seed: int = 0) -> dict[str, list[int]]:
    if len(fractions) != 3 or any(f < 0 for f in fractions) or abs(sum(fractions) - 1) > 1e-9:
        raise ConfigError("split fractions must be three non-negative numbers summing to 1")
    order = stream(seed, "corpus/splits").permutation(n)
    n_val = int(round(fractions[1] * n))
    n_test = int(round(fractions[2] * n))
    n_train = n - n_val - n_test
    return {"train": sorted(order[:n_train].tolist()),
            "validation": sorted(order[n_train:n_train + n_val].tolist()),
            "test": sorted(order[n_train + n_val:].tolist())}


def load_corpus(paths, fractions=(0.8, 0.1, 0.1), seed: int = 0) -> Corpus:
    docs = []
    for p in [paths] if isinstance(paths, (str, Path)) else paths:
        path = Path(p)
        if not path.is_file():
            raise FileNotFoundError(f"corpus file not found: {path}")
        docs.extend(split_documents(path.read_bytes().decode("utf-8")))
    return Corpus(docs, make_splits(len(docs), fractions, seed))


def write_manifest(path, files, corpus: Corpus):
    doc = {"files": [str(f) for f in files], "splits": corpus.splits}
    Path(path).write_text(json.dumps(doc, sort_keys=True) + "\n", encoding="utf-8")


def read_manifest(path) -> Corpus:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    base = Path(path).parent
    docs = []
    for f in doc["files"]:
        fp = Path(f) if Path(f).is_absolute() else base / f
        if not fp.is_file():
            raise FileNotFoundError(f"corpus file not found: {fp}")
        docs.extend(split_documents(fp.read_bytes().decode("utf-8")))
    return Corpus(docs, {k: list(v) for k, v in doc["splits"].items()})


@dataclass
class FrequencyTable:
    counts: Counter
    rare: set[int]
    threshold: int


def build_frequency_tables(corpus: Corpus, tokenizer: Tokenizer, rare_threshold: int = 10) -> FrequencyTable:
    """Token counts over the train split; rare tokens have ``1 <= count < threshold``."""
    counts: Counter = Counter()
    for doc in corpus.split("train"):
        counts.update(tokenizer.encode(doc))
    rare = {t for t, c in counts.items() if 1 <= c < rare_threshold}
    return FrequencyTable(counts, rare, rare_threshold)


def encode_documents(tokenizer: Tokenizer, documents, separator: int | None = SPECIAL_TOKENS["end"]) -> np.ndarray:
    """Encode and concatenate documents, with ``separator`` after each one."""
    parts = []
    for doc in documents:
        parts.append(np.frombuffer(doc.encode("utf-8"), dtype=np.uint8).astype(np.int64))
        parts.append(np.array([-1], dtype=np.int64))
    if not parts:
        return np.zeros(0, dtype=np.int64)
    # the -1 sentinels never match a merge, so one vectorized pass encodes every document
    seq = tokenizer.encode_array(np.concatenate(parts))
    if separator is None:
        return seq[seq >= 0]
    seq[seq < 0] = separator
    return seq
