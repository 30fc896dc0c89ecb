"""Document and corpus data model: ingestion, normalization, dedup, stats.

Documents arrive as JSON-lines (one object per line, with an "id" and either
a "sentences" list or a "text" blob split on newlines). Sentence text is
normalized at ingestion so that exact-match dedup downstream is meaningful.
"""

from __future__ import annotations

import json
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Optional

from .errors import ParseError


def normalize_sentence(text: str) -> str:
    """Trim, collapse internal whitespace runs to one space, apply NFC.

    Idempotent; "" maps to "".
    """
    return unicodedata.normalize("NFC", " ".join(text.split()))


@dataclass(frozen=True)
class SentenceRecord:
    """One sentence of a document, plus whatever LangID has said about it."""

    text: str
    predicted_lang: Optional[str] = None
    predicted_cluster: Optional[int] = None
    confidence: Optional[float] = None

    def __post_init__(self) -> None:
        # A cluster assignment only makes sense alongside a language prediction.
        if (self.predicted_lang is None) != (self.predicted_cluster is None):
            raise ValueError("predicted_lang and predicted_cluster must be set together")


@dataclass(frozen=True)
class Document:
    """A crawled page: id, optional URL, ordered sentences."""

    id: str
    sentences: tuple[SentenceRecord, ...]
    url: Optional[str] = None

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("document id must be non-empty")

    @property
    def texts(self) -> list[str]:
        return [s.text for s in self.sentences]


@dataclass(frozen=True)
class MonoCorpus:
    """Per-language sentence list with a survival counter per pipeline stage.

    Cluster-level corpora (before declustering) use the synthetic label
    ``cluster:<id>`` in the ``lang`` field.
    """

    lang: str
    sentences: tuple[str, ...]
    stage_counts: Mapping[str, int] = field(default_factory=dict)

    @classmethod
    def from_sentences(cls, lang: str, sentences: Iterable[str], stage: Optional[str] = None) -> "MonoCorpus":
        sents = tuple(sentences)
        counts = {stage: len(sents)} if stage is not None else {}
        return cls(lang, sents, counts)

    def advanced(self, stage: str, sentences: Iterable[str]) -> "MonoCorpus":
        """New corpus with `sentences` surviving `stage` appended to the funnel."""
        sents = tuple(sentences)
        counts = dict(self.stage_counts)
        counts[stage] = len(sents)
        return MonoCorpus(self.lang, sents, counts)

    def check_funnel(self) -> None:
        """Assert stage counts never increase along their recorded order."""
        prev = None
        for stage, count in self.stage_counts.items():
            if prev is not None and count > prev:
                raise ValueError(f"{self.lang}: stage {stage!r} grew the corpus ({prev} -> {count})")
            prev = count


@dataclass(frozen=True)
class CorpusStats:
    n_sentences: int
    n_tokens: int
    n_chars: int
    chars_per_sentence: float

    def to_dict(self) -> dict:
        return {
            "n_sentences": self.n_sentences,
            "n_tokens": self.n_tokens,
            "n_chars": self.n_chars,
            "chars_per_sentence": self.chars_per_sentence,
        }


@dataclass(frozen=True)
class DedupReport:
    before: int
    after: int
    factor: float

    def to_dict(self) -> dict:
        return {"before": self.before, "after": self.after, "factor": self.factor}


@dataclass
class IngestReport:
    """Filled by load_documents when passed in; counts malformed lines."""

    lines: int = 0
    documents: int = 0
    skipped: int = 0
    errors: list[tuple[int, str]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "lines": self.lines,
            "documents": self.documents,
            "skipped": self.skipped,
            "errors": [{"line": n, "message": m} for n, m in self.errors],
        }


def _document_from_obj(obj: object) -> Document:
    if not isinstance(obj, dict):
        raise ValueError("not a JSON object")
    doc_id = obj.get("id")
    if not isinstance(doc_id, str) or not doc_id:
        raise ValueError("missing or empty 'id'")
    if "sentences" in obj:
        raw = obj["sentences"]
        if not isinstance(raw, list) or not all(isinstance(s, str) for s in raw):
            raise ValueError("'sentences' must be a list of strings")
        texts = [normalize_sentence(s) for s in raw]
    elif "text" in obj:
        if not isinstance(obj["text"], str):
            raise ValueError("'text' must be a string")
        # Newline splitting is the only sentence detection performed; blank
        # segments are not sentences.
        texts = [t for t in (normalize_sentence(p) for p in obj["text"].split("\n")) if t]
    else:
        raise ValueError("needs 'sentences' or 'text'")
    url = obj.get("url")
    if url is not None and not isinstance(url, str):
        raise ValueError("'url' must be a string")
    return Document(doc_id, tuple(SentenceRecord(t) for t in texts), url=url)


def load_documents(
    path: str | Path,
    format: str = "jsonl",
    strict: bool = False,
    report: Optional[IngestReport] = None,
) -> Iterator[Document]:
    """Stream Documents from a JSONL file in file order.

    Whitespace-only lines are ignored. A malformed line raises ParseError in
    strict mode; in lenient mode it is counted in `report` and skipped.
    """
    if format != "jsonl":
        raise ValueError(f"unsupported format: {format!r}")
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if report is not None:
                report.lines += 1
            if not line.strip():
                continue
            try:
                doc = _document_from_obj(json.loads(line))
            except (json.JSONDecodeError, ValueError) as exc:
                if strict:
                    raise ParseError(line_no, str(exc)) from exc
                if report is not None:
                    report.skipped += 1
                    report.errors.append((line_no, str(exc)))
                continue
            if report is not None:
                report.documents += 1
            yield doc


def document_to_obj(doc: Document) -> dict:
    """JSON-ready form of a (possibly annotated) document."""
    sentences = []
    for s in doc.sentences:
        obj: dict = {"text": s.text}
        if s.predicted_lang is not None:
            obj["lang"] = s.predicted_lang
            obj["cluster"] = s.predicted_cluster
        if s.confidence is not None:
            obj["confidence"] = s.confidence
        sentences.append(obj)
    out: dict = {"id": doc.id, "sentences": sentences}
    if doc.url is not None:
        out["url"] = doc.url
    return out


def document_from_annotated_obj(obj: dict) -> Document:
    records = []
    for s in obj["sentences"]:
        records.append(
            SentenceRecord(
                text=s["text"],
                predicted_lang=s.get("lang"),
                predicted_cluster=s.get("cluster"),
                confidence=s.get("confidence"),
            )
        )
    return Document(obj["id"], tuple(records), url=obj.get("url"))


def write_annotated(docs: Iterable[Document], path: str | Path) -> None:
    """One annotated document per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            fh.write(json.dumps(document_to_obj(doc), ensure_ascii=False) + "\n")


def read_annotated(path: str | Path) -> Iterator[Document]:
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                yield document_from_annotated_obj(json.loads(line))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise ParseError(line_no, str(exc)) from exc


def dedup(corpus: MonoCorpus) -> tuple[MonoCorpus, DedupReport]:
    """Drop exact duplicates, keeping the first occurrence in order."""
    seen: set[str] = set()
    kept: list[str] = []
    for s in corpus.sentences:
        if s not in seen:
            seen.add(s)
            kept.append(s)
    before, after = len(corpus.sentences), len(kept)
    report = DedupReport(before, after, before / max(after, 1))
    return corpus.advanced("dedup", kept), report


def dedup_corpora(
    corpora: Mapping[str, MonoCorpus], scope: str = "per-language"
) -> tuple[dict[str, MonoCorpus], dict[str, DedupReport]]:
    """Dedup a set of per-language corpora.

    scope="per-language" dedups each corpus independently; scope="global"
    shares one seen-set across corpora, visited in sorted language order so
    the outcome does not depend on dict ordering.
    """
    if scope not in ("per-language", "global"):
        raise ValueError(f"unknown dedup scope: {scope!r}")
    out: dict[str, MonoCorpus] = {}
    reports: dict[str, DedupReport] = {}
    if scope == "per-language":
        for lang, corpus in corpora.items():
            out[lang], reports[lang] = dedup(corpus)
        return out, reports
    seen: set[str] = set()
    for lang in sorted(corpora):
        corpus = corpora[lang]
        kept = []
        for s in corpus.sentences:
            if s not in seen:
                seen.add(s)
                kept.append(s)
        before, after = len(corpus.sentences), len(kept)
        out[lang] = corpus.advanced("dedup", kept)
        reports[lang] = DedupReport(before, after, before / max(after, 1))
    return out, reports


def corpus_stats(corpus: MonoCorpus) -> CorpusStats:
    """Sentence/token/char counts. Chars are Unicode scalar values."""
    from .filters import tokenize  # shared tokenizer; deferred to avoid an import cycle

    n_sentences = len(corpus.sentences)
    n_tokens = sum(len(tokenize(s)) for s in corpus.sentences)
    n_chars = sum(len(s) for s in corpus.sentences)
    return CorpusStats(n_sentences, n_tokens, n_chars, n_chars / max(n_sentences, 1))


def write_corpus(corpus: MonoCorpus, path: str | Path) -> None:
    """One UTF-8 sentence per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for s in corpus.sentences:
            fh.write(s + "\n")


def read_corpus(path: str | Path, lang: str) -> MonoCorpus:
    with open(path, "r", encoding="utf-8") as fh:
        sentences = [line.rstrip("\n") for line in fh]
    return MonoCorpus.from_sentences(lang, sentences, stage="loaded")
