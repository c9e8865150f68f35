import json
import unicodedata
from collections import Counter
from importlib import resources

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from scet.corpus import (
    FIRST_MERGE_ID,
    Corpus,
    Tokenizer,
    _merge_array,
    bpe_train,
    build_frequency_tables,
    load_corpus,
    make_splits,
    normalize,
    read_manifest,
    split_documents,
    write_manifest,
)
from scet.errors import ConfigError, CorpusEncodingError, ValidationError

SAMPLE = resources.files("scet") / "data" / "sample_corpus.txt"


def naive_bpe(documents, target):
    """Slow reference trainer: list-of-lists, Counter, sequential scan."""
    seqs = [list(d.encode("utf-8")) for d in documents]
    merges = []
    while FIRST_MERGE_ID + len(merges) < target:
        counts = Counter()
        for s in seqs:
            for i in range(len(s) - 1):
                counts[(s[i], s[i + 1])] += 1
        if not counts:
            break
        top = max(counts.values())
        if top < 2:
            break
        pair = min(p for p, c in counts.items() if c == top)
        new = FIRST_MERGE_ID + len(merges)
        merges.append(pair)
        for k, s in enumerate(seqs):
            out, i = [], 0
            while i < len(s):
                if i + 1 < len(s) and (s[i], s[i + 1]) == pair:
                    out.append(new)
                    i += 2
                else:
                    out.append(s[i])
                    i += 1
            seqs[k] = out
    return merges


@pytest.fixture(scope="module")
def sample_docs():
    return split_documents(SAMPLE.read_text(encoding="utf-8"))


@pytest.fixture(scope="module")
def sample_tok(sample_docs):
    return bpe_train(sample_docs[:400], 512)


class TestNormalize:
    def test_lowercase(self):
        assert normalize("HeLLo World") == "hello world"

    def test_nfc(self):
        assert normalize("é").encode() == "é".encode()

    def test_bytes_input(self):
        assert normalize("ÄB".encode()) == "äb"

    def test_invalid_utf8(self):
        with pytest.raises(CorpusEncodingError):
            normalize(b"\xff\xfe abc")

    def test_idempotent_random_corpus(self):
        rng = np.random.default_rng(7)
        # mix of ASCII, Latin-1, combining marks, Greek, Turkish dotted I
        pool = list("aBcDeZ ") + ["́", "̈", "İ", "Σ", "Å", "ẞ", "ﬁ"]
        for _ in range(1000):
            s = "".join(rng.choice(pool, size=rng.integers(0, 12)))
            once = normalize(s)
            assert normalize(once) == once

    @given(st.text(max_size=40))
    @settings(max_examples=300)
    def test_idempotent_property(self, s):
        assert normalize(normalize(s)) == normalize(s)


class TestBpeTrain:
    def test_aaaa_first_merge(self):
        tok = bpe_train("aaaa", FIRST_MERGE_ID + 1)
        assert tok.merges == [(ord("a"), ord("a"))]
        assert tok.encode("aaaa") == [FIRST_MERGE_ID, FIRST_MERGE_ID]

    def test_target_at_base_is_byte_level(self):
        tok = bpe_train(["hello hello"], FIRST_MERGE_ID)
        assert tok.merges == []
        assert tok.encode("hi") == [ord("h"), ord("i")]

    def test_below_base_rejected(self):
        with pytest.raises(ConfigError):
            bpe_train(["abc"], FIRST_MERGE_ID - 1)

    def test_stops_when_no_repeated_pair(self):
        assert bpe_train(["abcdef"], 1000).merges == []

    def test_tie_break_smallest_pair(self):
        # (b,a) and (a,b) both occur twice; (a,b) < (b,a)
        tok = bpe_train(["abab", "ba"], FIRST_MERGE_ID + 1)
        assert tok.merges == [(ord("a"), ord("b"))]

    def test_pairs_do_not_cross_documents(self):
        assert bpe_train(["xa", "by", "az", "bw"], FIRST_MERGE_ID + 5).merges == []

    def test_odd_run_merges_left_to_right(self):
        a = ord("a")
        out = _merge_array(np.array([a, a, a, 1, a, a, a, a]), a, a, 999)
        assert out.tolist() == [999, a, 1, 999, 999]

    def test_matches_naive_oracle(self, sample_docs):
        docs = sample_docs[:60]
        assert bpe_train(docs, 420).merges == naive_bpe(docs, 420)

    def test_deterministic(self, sample_docs):
        docs = sample_docs[:100]
        assert bpe_train(docs, 400).merges == bpe_train(docs, 400).merges

    def test_invalid_merge_list(self):
        with pytest.raises(ValidationError):
            Tokenizer([(FIRST_MERGE_ID + 3, 97)])


class TestEncodeDecode:
    def test_empty(self, sample_tok):
        assert sample_tok.encode("") == []
        assert sample_tok.decode([]) == ""

    def test_single_unmerged_byte(self, sample_tok):
        assert sample_tok.encode("~") == [ord("~")]

    def test_unknown_id(self, sample_tok):
        with pytest.raises(IndexError):
            sample_tok.decode([sample_tok.vocab_size])

    def test_round_trip_every_sample_document(self, sample_docs, sample_tok):
        for doc in sample_docs:
            ids = sample_tok.encode(doc)
            assert sample_tok.decode(ids) == doc
            assert len(ids) <= len(doc.encode("utf-8"))

    def test_scalar_and_vector_paths_agree(self, sample_docs, sample_tok):
        text = " ".join(sample_docs[:50])
        assert len(text) > 4096
        assert sample_tok.decode(sample_tok.encode(text)) == text
        for doc in sample_docs[:200]:
            arr = np.frombuffer(doc.encode(), dtype=np.uint8).astype(np.int64)
            assert sample_tok.encode_array(arr).tolist() == sample_tok.encode(doc)

    @given(st.text(max_size=60))
    @settings(max_examples=300, deadline=None)
    def test_round_trip_property(self, sample_tok, s):
        s = normalize(s)
        assert sample_tok.decode(sample_tok.encode(s)) == s

    def test_json_round_trip(self, sample_tok, tmp_path):
        path = tmp_path / "tok.json"
        sample_tok.save(path)
        doc = json.loads(path.read_text())
        assert doc["base"] == "bytes" and set(doc["special_tokens"]) == {"begin", "end", "pad", "unknown"}
        again = Tokenizer.load(path)
        assert again.merges == sample_tok.merges
        assert again.encode("the old harbor") == sample_tok.encode("the old harbor")

    def test_specials_decode_empty(self, sample_tok):
        assert sample_tok.decode([sample_tok.special_tokens["end"], ord("a")]) == "a"


class TestCorpus:
    def test_hand_counted_frequencies(self):
        docs = ["ab", "aab", "b"]
        corpus = Corpus(docs, {"train": [0, 1, 2], "validation": [], "test": []})
        table = build_frequency_tables(corpus, Tokenizer(), rare_threshold=4)
        a, b = ord("a"), ord("b")
        assert table.counts == Counter({a: 3, b: 3})
        assert table.rare == {a, b}

    def test_train_split_only(self):
        corpus = Corpus(["aa", "zz"], {"train": [0], "validation": [1], "test": []})
        table = build_frequency_tables(corpus, Tokenizer(), rare_threshold=10)
        assert ord("z") not in table.counts

    def test_equal_frequency_no_rare(self):
        corpus = Corpus(["abcabc"], {"train": [0], "validation": [], "test": []})
        assert build_frequency_tables(corpus, Tokenizer(), rare_threshold=2).rare == set()

    def test_singleton_is_rare(self):
        corpus = Corpus(["aaaaaq"], {"train": [0], "validation": [], "test": []})
        assert ord("q") in build_frequency_tables(corpus, Tokenizer(), rare_threshold=5).rare

    @pytest.mark.parametrize("n", [0, 1, 7, 100, 3637])
    def test_splits_disjoint_and_cover(self, n):
        splits = make_splits(n, seed=3)
        ids = [i for v in splits.values() for i in v]
        assert sorted(ids) == list(range(n))

    def test_bad_splits_rejected(self):
        with pytest.raises(ValidationError):
            Corpus(["a", "b"], {"train": [0], "validation": [0], "test": [1]})
        with pytest.raises(ConfigError):
            make_splits(5, (0.5, 0.5, 0.5))

    def test_manifest_round_trip(self, tmp_path):
        src = tmp_path / "text.txt"
        src.write_text("One.\n\nTwo!\n\n\n\nTHREE?\n", encoding="utf-8")
        corpus = load_corpus(src, seed=1)
        assert corpus.documents == ["one.", "two!", "three?"]
        write_manifest(tmp_path / "m.json", [src.name], corpus)
        again = read_manifest(tmp_path / "m.json")
        assert again.documents == corpus.documents and again.splits == corpus.splits

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_corpus(tmp_path / "nope.txt")

    def test_nfc_applied_to_documents(self):
        assert split_documents("É") == [unicodedata.normalize("NFC", "é")]
