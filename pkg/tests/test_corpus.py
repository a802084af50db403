from __future__ import annotations

import json
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from newsloom.corpus import (
    BOS_ID,
    EOP,
    EOP_ID,
    EOS_ID,
    SPECIALS,
    UNK_ID,
    Article,
    CorpusError,
    CorpusStats,
    CorpusStore,
    DuplicateArticleError,
    Vocabulary,
    build_vocab,
    detokenize,
    tokenize,
    word_frequencies,
)


def make_store(tmp_path, records, name="store.jsonl", src="src.jsonl"):
    src_path = tmp_path / src
    with src_path.open("w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r) + "\n")
    store = CorpusStore(tmp_path / name)
    stats = store.ingest(src_path)
    return store, stats


class TestTokenize:
    def test_punctuation_splitting(self):
        assert tokenize('Trump said, "No."') == ["trump", "said", ",", '"', "no", ".", '"']

    def test_empty(self):
        assert tokenize("") == []
        assert tokenize("   \n \t ") == []

    def test_paragraph_break(self):
        assert tokenize("one two\n\nthree") == ["one", "two", EOP, "three"]
        # runs of blank lines collapse; no leading/trailing EOP
        assert tokenize("\n\na\n\n\n\nb\n\n") == ["a", EOP, "b"]

    def test_apostrophes_split(self):
        assert tokenize("don't") == ["don", "'", "t"]

    def test_idempotent_on_tokenized_text(self, sample_text):
        tokens = tokenize(sample_text)
        assert tokenize(detokenize(tokens)) == tokens

    def test_round_trip_ids(self, sample_text):
        vocab = Vocabulary.build(word_frequencies([sample_text]), min_count=1)
        ids = vocab.encode_text(sample_text)
        assert vocab.encode_text(vocab.decode_text(ids.ids)) == ids

    @given(
        st.text(
            alphabet=st.sampled_from(list("abz .,!?;:\"()'\n\t-3")),
            max_size=120,
        )
    )
    @settings(max_examples=200)
    def test_round_trip_property(self, text):
        tokens = tokenize(text)
        assert tokenize(detokenize(tokens)) == tokens


class TestVocabulary:
    def test_min_count_filter(self):
        vocab = Vocabulary.build(word_frequencies(["a a b"]), min_count=2)
        assert set(vocab.word_of[4:]) == {"a"}
        assert len(vocab) == 5

    def test_frequency_order(self):
        vocab = Vocabulary.build(word_frequencies(["a a b c c c"]), min_count=1, max_size=4)
        assert vocab.word_of[4:] == ["c", "a", "b"]

    def test_max_size_cap(self):
        vocab = Vocabulary.build(Counter({"w%d" % i: i + 1 for i in range(10)}), 1, max_size=3)
        assert vocab.word_of[4:] == ["w9", "w8", "w7"]

    def test_tie_break_lexicographic(self):
        vocab = Vocabulary.build(Counter({"zeta": 2, "alpha": 2, "mid": 2}), min_count=1)
        assert vocab.word_of[4:] == ["alpha", "mid", "zeta"]

    def test_specials_fixed(self):
        vocab = Vocabulary.build(Counter({"x": 5}), min_count=1)
        assert vocab.id_of["<unk>"] == UNK_ID == 0
        assert vocab.id_of["<s>"] == BOS_ID == 1
        assert vocab.id_of["</s>"] == EOS_ID == 2
        assert vocab.id_of["<p>"] == EOP_ID == 3

    def test_bijection(self, sample_text):
        vocab = Vocabulary.build(word_frequencies([sample_text]), min_count=1)
        for i, w in enumerate(vocab.word_of):
            assert vocab.id_of[w] == i

    def test_unknown_maps_to_unk(self):
        vocab = Vocabulary.build(Counter({"known": 3}), min_count=1)
        assert vocab.encode(["known", "mystery"]).ids == [4, UNK_ID]

    def test_against_independent_count_oracle(self, sample_text):
        # Oracle: plain recount over lowercased punctuation-split chunks.
        counts: Counter[str] = Counter()
        for chunk in sample_text.lower().split():
            word = ""
            for ch in chunk:
                if ch in ".,!?;:\"()'":
                    if word:
                        counts[word] += 1
                        word = ""
                    counts[ch] += 1
                else:
                    word += ch
            if word:
                counts[word] += 1
        expected = sorted((w for w, c in counts.items() if c >= 2), key=lambda w: (-counts[w], w))
        vocab = Vocabulary.build(word_frequencies([sample_text]), min_count=2)
        assert vocab.word_of[4:] == expected

    def test_save_load_round_trip(self, tmp_path, sample_text):
        vocab = Vocabulary.build(word_frequencies([sample_text]), min_count=1)
        vocab.save(tmp_path / "vocab.json")
        loaded = Vocabulary.load(tmp_path / "vocab.json")
        assert loaded.word_of == vocab.word_of
        assert loaded.id_of == vocab.id_of

    def test_vocab_file_schema(self, tmp_path):
        vocab = Vocabulary.build(Counter({"only": 4}), min_count=1)
        vocab.save(tmp_path / "vocab.json")
        payload = json.loads((tmp_path / "vocab.json").read_text())
        assert payload["specials"] == dict(SPECIALS)
        assert payload["words"][0] == "only"  # index 0 + 4 = token id 4

    def test_min_count_zero_rejected(self):
        with pytest.raises(ValueError):
            Vocabulary.build(Counter(), min_count=0)


class TestIngestAndStats:
    def test_word_counts(self, tmp_path):
        records = [
            {"id": "a", "title": "A", "body": " ".join(["w"] * 10)},
            {"id": "b", "title": "B", "body": " ".join(["w"] * 20)},
            {"id": "c", "title": "C", "body": " ".join(["w"] * 30)},
        ]
        _, stats = make_store(tmp_path, records)
        assert stats == CorpusStats(3, 60)

    def test_empty_file(self, tmp_path):
        _, stats = make_store(tmp_path, [])
        assert stats == CorpusStats(0, 0)

    def test_stats_single_article(self, tmp_path):
        store, _ = make_store(tmp_path, [{"id": "x", "title": "t", "body": "one two three"}])
        assert store.stats() == CorpusStats(1, 3)

    def test_stats_empty_store(self, tmp_path):
        store = CorpusStore(tmp_path / "s.jsonl")
        assert store.stats() == CorpusStats(0, 0)

    def test_incremental_equals_final(self, tmp_path):
        batches = [
            [{"id": "a", "title": "", "body": "x y"}],
            [{"id": "b", "title": "", "body": "p q r"}],
        ]
        store = CorpusStore(tmp_path / "s.jsonl")
        totals = CorpusStats(0, 0)
        for i, batch in enumerate(batches):
            src = tmp_path / f"b{i}.jsonl"
            src.write_text("\n".join(json.dumps(r) for r in batch) + "\n")
            got = store.ingest(src)
            totals = CorpusStats(
                totals.article_count + got.article_count, totals.word_count + got.word_count
            )
        assert store.stats() == totals == CorpusStats(2, 5)

    def test_three_group_fixture_counts(self, tmp_path):
        # Table-1-shaped fixture: three groups of differing sizes; oracle is a
        # direct recount of the records fed in.
        records = []
        for group, n_articles, n_words in (("g1", 2, 7), ("g2", 3, 5), ("g3", 1, 11)):
            for i in range(n_articles):
                records.append(
                    {
                        "id": f"{group}-{i}",
                        "title": group,
                        "body": " ".join(f"{group}w{j}" for j in range(n_words)),
                        "source": group,
                    }
                )
        store, stats = make_store(tmp_path, records)
        by_group: Counter[str] = Counter()
        words_by_group: Counter[str] = Counter()
        for r in records:
            by_group[r["source"]] += 1
            words_by_group[r["source"]] += len(r["body"].split())
        assert stats.article_count == sum(by_group.values()) == 6
        assert stats.word_count == sum(words_by_group.values()) == 2 * 7 + 3 * 5 + 11
        for group in ("g1", "g2", "g3"):
            members = [a for a in store if a.source == group]
            assert len(members) == by_group[group]
            assert sum(len(a.body.split()) for a in members) == words_by_group[group]

    def test_malformed_record_names_line(self, tmp_path):
        src = tmp_path / "bad.jsonl"
        src.write_text('{"id": "a", "title": "t", "body": "b"}\n{not json}\n')
        store = CorpusStore(tmp_path / "s.jsonl")
        with pytest.raises(CorpusError, match=r":2"):
            store.ingest(src)

    def test_missing_field_names_line(self, tmp_path):
        src = tmp_path / "bad.jsonl"
        src.write_text('{"id": "a", "title": "t"}\n')
        store = CorpusStore(tmp_path / "s.jsonl")
        with pytest.raises(CorpusError, match=r":1.*body"):
            store.ingest(src)

    def test_duplicate_id_named(self, tmp_path):
        records = [
            {"id": "dup", "title": "", "body": "x"},
            {"id": "dup", "title": "", "body": "y"},
        ]
        with pytest.raises(DuplicateArticleError, match="dup"):
            make_store(tmp_path, records)

    def test_plain_dir_ingest(self, tmp_path):
        d = tmp_path / "articles"
        d.mkdir()
        (d / "first.txt").write_text("Headline here\n\nBody text follows.")
        (d / "second.txt").write_text("Another piece of text.")
        store = CorpusStore(tmp_path / "s.jsonl")
        stats = store.ingest(d, fmt="plain_dir")
        assert stats.article_count == 2
        assert store.get("first").title == "Headline here"

    def test_store_reload(self, tmp_path):
        store, _ = make_store(tmp_path, [{"id": "a", "title": "t", "body": "one two"}])
        reloaded = CorpusStore(store.path)
        assert reloaded.stats() == CorpusStats(1, 2)
        assert reloaded.get("a").body == "one two"

    def test_empty_store_vocab_rejected(self, tmp_path):
        store = CorpusStore(tmp_path / "s.jsonl")
        with pytest.raises(CorpusError):
            build_vocab(store)

    def test_article_invariants(self):
        with pytest.raises(CorpusError):
            Article(id="", title="t", body="b")
        with pytest.raises(CorpusError):
            Article(id="x", title="t", body="")
