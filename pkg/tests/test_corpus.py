import json
import random

import pytest
from hypothesis import given, strategies as st

from monomine.corpus import (
    CorpusStats,
    Document,
    IngestReport,
    MonoCorpus,
    SentenceRecord,
    corpus_stats,
    dedup,
    dedup_corpora,
    document_from_annotated_obj,
    document_to_obj,
    load_documents,
    normalize_sentence,
    read_annotated,
    read_corpus,
    write_annotated,
    write_corpus,
)
from monomine.errors import ParseError
from monomine.filters import tokenize


def write_jsonl(path, lines):
    with open(path, "w", encoding="utf-8") as fh:
        for line in lines:
            fh.write(line + "\n")


class TestNormalize:
    def test_trim_and_collapse(self):
        assert normalize_sentence("  foo  bar ") == "foo bar"

    def test_empty(self):
        assert normalize_sentence("") == ""

    def test_tabs(self):
        assert normalize_sentence("a\t\tb") == "a b"

    def test_nfc(self):
        decomposed = "étude"  # e + combining acute
        assert normalize_sentence(decomposed) == "étude"

    @given(st.text(max_size=80))
    def test_idempotent(self, text):
        once = normalize_sentence(text)
        assert normalize_sentence(once) == once


class TestLoadDocuments:
    def test_sentences_list(self, tmp_path):
        path = tmp_path / "docs.jsonl"
        write_jsonl(path, ['{"id":"d1","sentences":["a","b"]}'])
        docs = list(load_documents(path))
        assert len(docs) == 1
        assert docs[0].id == "d1"
        assert docs[0].texts == ["a", "b"]

    def test_text_newline_split(self, tmp_path):
        path = tmp_path / "docs.jsonl"
        write_jsonl(path, ['{"id":"d2","text":"x\\ny"}'])
        (doc,) = load_documents(path)
        assert doc.texts == ["x", "y"]

    def test_empty_file(self, tmp_path):
        path = tmp_path / "docs.jsonl"
        path.write_text("")
        assert list(load_documents(path)) == []

    def test_url_kept(self, tmp_path):
        path = tmp_path / "docs.jsonl"
        write_jsonl(path, ['{"id":"d","url":"http://x","sentences":[]}'])
        (doc,) = load_documents(path)
        assert doc.url == "http://x"

    def test_lenient_counts_bad_lines(self, tmp_path):
        path = tmp_path / "docs.jsonl"
        write_jsonl(path, ['not json', '{"id":"ok","sentences":["a"]}', '{"sentences":[]}'])
        report = IngestReport()
        docs = list(load_documents(path, report=report))
        assert [d.id for d in docs] == ["ok"]
        assert report.skipped == 2
        assert [n for n, _ in report.errors] == [1, 3]

    def test_strict_raises_with_line_number(self, tmp_path):
        path = tmp_path / "docs.jsonl"
        write_jsonl(path, ['{"id":"ok","sentences":[]}', "garbage"])
        with pytest.raises(ParseError) as err:
            list(load_documents(path, strict=True))
        assert err.value.line_no == 2

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            list(load_documents(tmp_path / "nope.jsonl"))

    def test_sentences_normalized_at_ingest(self, tmp_path):
        path = tmp_path / "docs.jsonl"
        write_jsonl(path, ['{"id":"d","sentences":["  a   b "]}'])
        (doc,) = load_documents(path)
        assert doc.texts == ["a b"]


class TestDocumentModel:
    def test_id_required(self):
        with pytest.raises(ValueError):
            Document("", ())

    def test_cluster_requires_lang(self):
        with pytest.raises(ValueError):
            SentenceRecord("x", predicted_cluster=3)

    def test_annotated_roundtrip(self, tmp_path):
        doc = Document(
            "d",
            (
                SentenceRecord("hello", "aa", 0, 0.9),
                SentenceRecord("plain"),
            ),
            url="http://x",
        )
        path = tmp_path / "ann.jsonl"
        write_annotated([doc], path)
        (back,) = read_annotated(path)
        assert back == doc

    def test_obj_roundtrip(self):
        doc = Document("d", (SentenceRecord("s", "aa", 1, 0.5),))
        assert document_from_annotated_obj(document_to_obj(doc)) == doc


class TestDedup:
    def test_basic(self):
        corpus = MonoCorpus.from_sentences("xx", ["a", "b", "a"])
        deduped, report = dedup(corpus)
        assert deduped.sentences == ("a", "b")
        assert report.factor == pytest.approx(1.5)

    def test_no_duplicates(self):
        corpus = MonoCorpus.from_sentences("xx", ["a", "b", "c"])
        deduped, report = dedup(corpus)
        assert deduped.sentences == corpus.sentences
        assert report.factor == 1.0

    def test_random_against_set_oracle(self):
        rng = random.Random(99)
        pool = [f"sentence {i}" for i in range(1000)]
        sample = [rng.choice(pool) for _ in range(10000)]
        deduped, report = dedup(MonoCorpus.from_sentences("xx", sample))
        # oracle: insert all into a set
        assert set(deduped.sentences) == set(sample)
        assert len(deduped.sentences) == len(set(sample))
        assert report.before == 10000
        assert report.after == len(set(sample))

    def test_idempotent_and_subsequence(self):
        rng = random.Random(5)
        sample = [rng.choice("abcde") for _ in range(200)]
        corpus = MonoCorpus.from_sentences("xx", sample)
        once, _ = dedup(corpus)
        twice, _ = dedup(once)
        assert twice.sentences == once.sentences
        it = iter(sample)
        assert all(s in it for s in once.sentences)  # subsequence check

    def test_keeps_first_occurrence(self):
        deduped, _ = dedup(MonoCorpus.from_sentences("xx", ["b", "a", "b", "a"]))
        assert deduped.sentences == ("b", "a")

    def test_global_scope_shares_seen_set(self):
        corpora = {
            "aa": MonoCorpus.from_sentences("aa", ["x", "y"]),
            "bb": MonoCorpus.from_sentences("bb", ["x", "z"]),
        }
        out, reports = dedup_corpora(corpora, scope="global")
        assert out["aa"].sentences == ("x", "y")
        assert out["bb"].sentences == ("z",)
        assert reports["bb"].before == 2 and reports["bb"].after == 1
        per, _ = dedup_corpora(corpora, scope="per-language")
        assert per["bb"].sentences == ("x", "z")


class TestStats:
    def test_direct_count(self):
        stats = corpus_stats(MonoCorpus.from_sentences("xx", ["ab cd"]))
        assert stats == CorpusStats(1, 2, 5, 5.0)

    def test_empty(self):
        stats = corpus_stats(MonoCorpus.from_sentences("xx", []))
        assert stats == CorpusStats(0, 0, 0, 0.0)

    def test_against_counting_oracle(self):
        rng = random.Random(3)
        sentences = [
            " ".join(rng.choice(["je", "ne", "sais", "quoi!"]) for _ in range(rng.randint(1, 9)))
            for _ in range(100)
        ]
        stats = corpus_stats(MonoCorpus.from_sentences("xx", sentences))
        # independent counting pass
        n_tokens = 0
        n_chars = 0
        for s in sentences:
            n_chars += len(s)
            n_tokens += len(tokenize(s))
        assert stats.n_sentences == 100
        assert stats.n_tokens == n_tokens
        assert stats.n_chars == n_chars
        assert stats.chars_per_sentence == pytest.approx(n_chars / 100)


class TestCorpusFiles:
    def test_roundtrip(self, tmp_path):
        corpus = MonoCorpus.from_sentences("aa", ["one", "two", "three"])
        path = tmp_path / "aa.txt"
        write_corpus(corpus, path)
        back = read_corpus(path, "aa")
        assert back.sentences == corpus.sentences
        assert back.lang == "aa"

    def test_reports_serialize(self):
        _, report = dedup(MonoCorpus.from_sentences("xx", ["a", "a"]))
        assert json.loads(json.dumps(report.to_dict())) == {
            "before": 2,
            "after": 1,
            "factor": 2.0,
        }


class TestFunnel:
    def test_monotonic_ok(self):
        corpus = MonoCorpus.from_sentences("xx", ["a", "b"], stage="ingest")
        corpus = corpus.advanced("wordlist", ["a"])
        corpus.check_funnel()

    def test_growth_rejected(self):
        corpus = MonoCorpus.from_sentences("xx", ["a"], stage="ingest")
        corpus = MonoCorpus(corpus.lang, ("a", "b"), {"ingest": 1, "later": 2})
        with pytest.raises(ValueError):
            corpus.check_funnel()
