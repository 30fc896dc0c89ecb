"""The filtering cascade that turns an annotated crawl into per-language corpora.

Stages, in pipeline order: document-consistency filtering at cluster level,
percent-threshold wordlist filtering, second-stage declustering with a
(possibly different) predictor, TF-IIF filtering gated by the relative recall
rate, and hand-authored negative token filters.
"""

from __future__ import annotations

import json
import math
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from .clustering import ClusterMap
from .corpus import Document, MonoCorpus, SentenceRecord
from .errors import (
    EmptyCorpus,
    EmptyDocument,
    MissingWordlist,
    UnknownLanguage,
    WrongListKind,
)
from .langid import ConfusionMatrix, Predictor

DEFAULT_DISTRACTORS = frozenset({"en", "de", "es", "hi", "id", "ar", "ru"})


def _strip_punct(token: str) -> str:
    start, end = 0, len(token)
    while start < end and unicodedata.category(token[start]).startswith("P"):
        start += 1
    while end > start and unicodedata.category(token[end - 1]).startswith("P"):
        end -= 1
    return token[start:end]


def _split_tokens(text: str, fold: bool) -> list[str]:
    out = []
    for raw in text.split():
        tok = _strip_punct(raw)
        if tok:
            out.append(tok.casefold() if fold else tok)
    return out


def tokenize(text: str) -> list[str]:
    """Whitespace split, edge punctuation stripped, case-folded."""
    return _split_tokens(text, fold=True)


@dataclass
class StageReport:
    """What one filter stage did to one corpus: {in, out, dropped_by_reason}."""

    stage: str = ""
    n_in: int = 0
    n_out: int = 0
    dropped_by_reason: dict[str, int] = field(default_factory=dict)

    def drop(self, reason: str) -> None:
        self.dropped_by_reason[reason] = self.dropped_by_reason.get(reason, 0) + 1

    def to_dict(self) -> dict:
        return {
            "stage": self.stage,
            "in": self.n_in,
            "out": self.n_out,
            "dropped_by_reason": dict(sorted(self.dropped_by_reason.items())),
        }


@dataclass(frozen=True)
class WordList:
    """Ranked (token, score) list for one language."""

    lang: str
    kind: str  # "frequency" or "tfiif"
    entries: tuple[tuple[str, float], ...]

    def __post_init__(self) -> None:
        if self.kind not in ("frequency", "tfiif"):
            raise ValueError(f"unknown wordlist kind: {self.kind!r}")
        scores = [s for _, s in self.entries]
        if any(a < b for a, b in zip(scores, scores[1:])):
            raise ValueError("entries must be sorted by descending score")
        tokens = [t for t, _ in self.entries]
        if len(set(tokens)) != len(tokens):
            raise ValueError("tokens must be unique")

    @property
    def tokens(self) -> frozenset[str]:
        return frozenset(t for t, _ in self.entries)

    def save_tsv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for token, score in self.entries:
                fh.write(f"{token}\t{score:g}\n")

    @classmethod
    def load_tsv(cls, path: str | Path, lang: str, kind: str) -> "WordList":
        entries = []
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.rstrip("\n")
                if not line:
                    continue
                token, score = line.split("\t")
                entries.append((token, float(score)))
        return cls(lang, kind, tuple(entries))


def predict_many(predictor: Predictor, texts: Sequence[str]) -> list[tuple[str, float]]:
    """Use the predictor's batch path when it has one."""
    batch = getattr(predictor, "predict_batch", None)
    if batch is not None:
        return batch(texts)
    return [predictor.predict(t) for t in texts]


def annotate_document(doc: Document, predictor: Predictor, clusters: ClusterMap) -> Document:
    """Attach a language, cluster, and confidence to every sentence."""
    predictions = predict_many(predictor, doc.texts)
    annotated = []
    for record, (lang, confidence) in zip(doc.sentences, predictions):
        if lang not in clusters.assignment:
            raise UnknownLanguage(f"predictor emitted unclustered language {lang!r}")
        annotated.append(
            SentenceRecord(
                text=record.text,
                predicted_lang=lang,
                predicted_cluster=clusters.cluster_of(lang),
                confidence=confidence,
            )
        )
    return Document(doc.id, tuple(annotated), url=doc.url)


def document_cluster(doc: Document) -> int:
    """The most-often predicted cluster; ties go to the smallest cluster id."""
    votes = Counter(
        s.predicted_cluster for s in doc.sentences if s.predicted_cluster is not None
    )
    if not votes:
        raise EmptyDocument(f"document {doc.id} has no annotated sentences")
    return min(votes, key=lambda cid: (-votes[cid], cid))


def consistency_score(doc: Document, sentence_index: int) -> float:
    """Fraction of the document sharing this sentence's predicted cluster."""
    if not 0 <= sentence_index < len(doc.sentences):
        raise IndexError(f"sentence index {sentence_index} out of range")
    target = doc.sentences[sentence_index].predicted_cluster
    if target is None:
        raise EmptyDocument(f"sentence {sentence_index} of {doc.id} is not annotated")
    same = sum(1 for s in doc.sentences if s.predicted_cluster == target)
    return same / len(doc.sentences)


def filter_doc_consistency(
    docs: Iterable[Document],
    reports: Optional[dict[int, StageReport]] = None,
) -> dict[int, MonoCorpus]:
    """Keep only sentences whose cluster matches their document's cluster.

    Output corpora are cluster-level, labeled ``cluster:<id>``. A sentence
    with a consistency score over 0.5 is in the strict majority and can
    never be dropped here.

    A refinement that would also keep minority sentences of genuinely
    multilingual pages (those below some consistency threshold) is a known
    extension point; it is deliberately not implemented, and a whole-document
    veto is applied instead.
    """
    kept: dict[int, list[str]] = {}
    dropped: dict[int, int] = {}
    for doc in docs:
        if not doc.sentences:
            continue
        doc_cid = document_cluster(doc)
        kept.setdefault(doc_cid, [])
        for record in doc.sentences:
            if record.predicted_cluster == doc_cid:
                kept[doc_cid].append(record.text)
            else:
                cid = record.predicted_cluster
                dropped[cid] = dropped.get(cid, 0) + 1
    out: dict[int, MonoCorpus] = {}
    for cid in sorted(kept):
        out[cid] = MonoCorpus.from_sentences(f"cluster:{cid}", kept[cid], stage="doc_consistency")
    if reports is not None:
        # report covers clusters that never won a document majority too
        for cid in sorted(set(kept) | set(dropped)):
            n_kept = len(kept.get(cid, ()))
            rep = StageReport("doc_consistency", n_in=n_kept + dropped.get(cid, 0), n_out=n_kept)
            if dropped.get(cid):
                rep.dropped_by_reason["cluster_mismatch"] = dropped[cid]
            reports[cid] = rep
    return out


@dataclass(frozen=True)
class Histogram:
    bin_width: float
    counts: tuple[int, ...]

    @property
    def edges(self) -> list[float]:
        return [i * self.bin_width for i in range(len(self.counts) + 1)]

    def to_dict(self) -> dict:
        return {"bin_width": self.bin_width, "counts": list(self.counts)}


def consistency_histogram(docs: Iterable[Document], bin_width: float = 0.1) -> Histogram:
    """Histogram of per-sentence consistency scores.

    Bins are [i*w, (i+1)*w), with the last bin closed so a score of 1.0 lands
    in it.
    """
    n_bins = max(1, math.ceil(round(1.0 / bin_width, 9)))
    counts = [0] * n_bins
    for doc in docs:
        for i in range(len(doc.sentences)):
            score = consistency_score(doc, i)
            # nudge avoids 0.3/0.1 -> 2.9999... misbinning
            idx = min(n_bins - 1, int(score / bin_width + 1e-9))
            counts[idx] += 1
    return Histogram(bin_width, tuple(counts))


def build_frequency_wordlist(train_corpus: MonoCorpus, top: int = 800) -> WordList:
    """Most frequent tokens of the corpus; ties broken lexicographically."""
    counts: Counter[str] = Counter()
    for sentence in train_corpus.sentences:
        counts.update(tokenize(sentence))
    if not counts:
        raise EmptyCorpus(f"no tokens in corpus for {train_corpus.lang}")
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:top]
    return WordList(train_corpus.lang, "frequency", tuple((t, float(c)) for t, c in ranked))


def _in_list_fraction(tokens: list[str], token_set: frozenset[str]) -> float:
    return sum(1 for t in tokens if t in token_set) / len(tokens)


def filter_wordlist(
    corpus: MonoCorpus,
    lists: Mapping[str, WordList],
    threshold: float = 0.2,
    report: Optional[StageReport] = None,
) -> MonoCorpus:
    """Keep a sentence if it looks in-language for at least one cluster member.

    A sentence needs >= threshold of its tokens in some language's wordlist.
    Sentences with no tokens at all are dropped and counted separately.
    """
    if not lists:
        raise MissingWordlist(f"no wordlists supplied for {corpus.lang}")
    token_sets = [wl.tokens for _, wl in sorted(lists.items())]
    if report is not None:
        report.stage = "wordlist"
        report.n_in = len(corpus.sentences)
    kept = []
    for sentence in corpus.sentences:
        tokens = tokenize(sentence)
        if not tokens:
            if report is not None:
                report.drop("empty_tokens")
            continue
        if max(_in_list_fraction(tokens, ts) for ts in token_sets) >= threshold:
            kept.append(sentence)
        elif report is not None:
            report.drop("below_threshold")
    if report is not None:
        report.n_out = len(kept)
    return corpus.advanced("wordlist", kept)


def decluster(
    cluster_corpora: Mapping[int, MonoCorpus],
    predictor: Predictor,
    clusters: ClusterMap,
    reports: Optional[dict[str, StageReport]] = None,
) -> dict[str, MonoCorpus]:
    """Split cluster corpora into per-language corpora by a fresh prediction.

    Earlier annotations are ignored; a sentence whose predicted language falls
    outside its cluster is dropped.
    """
    routed: dict[str, list[str]] = {}
    dropped: dict[str, int] = {}
    for cid in sorted(cluster_corpora):
        corpus = cluster_corpora[cid]
        members = set(clusters.members.get(cid, ()))
        for lang in members:
            routed.setdefault(lang, [])
        predictions = predict_many(predictor, list(corpus.sentences))
        for sentence, (lang, _) in zip(corpus.sentences, predictions):
            if lang in members:
                routed[lang].append(sentence)
            else:
                dropped[corpus.lang] = dropped.get(corpus.lang, 0) + 1
    out: dict[str, MonoCorpus] = {}
    for lang in sorted(routed):
        out[lang] = MonoCorpus.from_sentences(lang, routed[lang], stage="decluster")
        if reports is not None:
            reports[lang] = StageReport("decluster", n_in=len(routed[lang]), n_out=len(routed[lang]))
    if reports is not None:
        for label, n in sorted(dropped.items()):
            rep = reports.setdefault(label, StageReport("decluster"))
            rep.n_in += n
            rep.dropped_by_reason["out_of_cluster"] = n
    return out


@dataclass(frozen=True)
class IifTable:
    """Token -> open-web frequency, with the long tail clipped at rank kappa."""

    freqs: Mapping[str, int]
    kappa: int
    alpha: float

    def __post_init__(self) -> None:
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")

    @classmethod
    def from_counts(cls, counts: Mapping[str, int], kappa: int = 80000) -> "IifTable":
        if not counts:
            raise EmptyCorpus("internet frequency table is empty")
        if kappa < 1:
            raise ValueError("kappa must be >= 1")
        ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        # When the table is smaller than kappa, clip at the least common token.
        alpha = float(ranked[min(kappa, len(ranked)) - 1][1])
        return cls(dict(counts), kappa, alpha)

    def clipped_freq(self, token: str) -> float:
        return max(float(self.freqs.get(token, 0)), self.alpha)

    def save(self, path: str | Path) -> None:
        path = Path(path)
        with open(path, "w", encoding="utf-8") as fh:
            for token, count in sorted(self.freqs.items(), key=lambda kv: (-kv[1], kv[0])):
                fh.write(f"{token}\t{count}\n")
        with open(path.with_suffix(path.suffix + ".json"), "w", encoding="utf-8") as fh:
            json.dump({"kappa": self.kappa, "alpha": self.alpha}, fh)
            fh.write("\n")

    @classmethod
    def load(cls, path: str | Path) -> "IifTable":
        path = Path(path)
        freqs: dict[str, int] = {}
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.rstrip("\n")
                if not line:
                    continue
                token, count = line.split("\t")
                freqs[token] = int(count)
        with open(path.with_suffix(path.suffix + ".json"), "r", encoding="utf-8") as fh:
            meta = json.load(fh)
        return cls(freqs, int(meta["kappa"]), float(meta["alpha"]))


def build_tfiif_wordlist(lang_corpus: MonoCorpus, iif: IifTable, tau: int = 1000) -> WordList:
    """Rank tokens by corpus frequency over clipped internet frequency."""
    counts: Counter[str] = Counter()
    for sentence in lang_corpus.sentences:
        counts.update(tokenize(sentence))
    if not counts:
        raise EmptyCorpus(f"no tokens in corpus for {lang_corpus.lang}")
    scored = [(token, count / iif.clipped_freq(token)) for token, count in counts.items()]
    scored.sort(key=lambda kv: (-kv[1], kv[0]))
    return WordList(lang_corpus.lang, "tfiif", tuple(scored[:tau]))


def filter_tfiif(
    corpus: MonoCorpus,
    wordlist: WordList,
    threshold: float = 0.2,
    report: Optional[StageReport] = None,
) -> MonoCorpus:
    """Keep sentences with >= threshold of their tokens in the TF-IIF list."""
    if wordlist.kind != "tfiif":
        raise WrongListKind(f"expected a tfiif list, got {wordlist.kind!r}")
    token_set = wordlist.tokens
    if report is not None:
        report.stage = "tfiif"
        report.n_in = len(corpus.sentences)
    kept = []
    for sentence in corpus.sentences:
        tokens = tokenize(sentence)
        if not tokens:
            if report is not None:
                report.drop("empty_tokens")
            continue
        if _in_list_fraction(tokens, token_set) >= threshold:
            kept.append(sentence)
        elif report is not None:
            report.drop("below_threshold")
    if report is not None:
        report.n_out = len(kept)
    return corpus.advanced("tfiif", kept)


def survival_fraction(sentences: Sequence[str], wordlist: WordList, threshold: float = 0.2) -> float:
    """Fraction of sentences the TF-IIF filter would keep. Empty input -> 1.0."""
    if not sentences:
        return 1.0
    token_set = wordlist.tokens
    kept = 0
    for sentence in sentences:
        tokens = tokenize(sentence)
        if tokens and _in_list_fraction(tokens, token_set) >= threshold:
            kept += 1
    return kept / len(sentences)


def distractibility(
    cm: ConfusionMatrix,
    lang: str,
    distractors: frozenset[str] = DEFAULT_DISTRACTORS,
) -> float:
    """Worst false-discovery rate of any high-resource distractor toward lang."""
    cm.index(lang)  # raises UnknownLanguage
    present = [d for d in sorted(distractors) if d != lang and d in cm.languages]
    return max((cm.fdr(d, lang) for d in present), default=0.0)


@dataclass(frozen=True)
class RrrReport:
    lang: str
    r_gold: float
    r_crawl: float
    rho: float
    rrr: float
    apply_filter: bool
    reasons: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "lang": self.lang,
            "r_gold": self.r_gold,
            "r_crawl": self.r_crawl,
            "rho": self.rho,
            "rrr": self.rrr,
            "apply_filter": self.apply_filter,
            "reasons": list(self.reasons),
        }


def rrr_gate(
    r_gold: float,
    r_crawl: float,
    rho: float = 2.0,
    rrr_threshold: float = 1.0,
    min_crawl_removed: float = 0.2,
    min_recall: float = 0.8,
    lang: str = "",
) -> RrrReport:
    """Decide whether TF-IIF filtering is worth applying to a language.

    Filter only when the relative recall rate exceeds the threshold, the
    filter would remove at least min_crawl_removed of the crawl, and the gold
    recall stays at or above min_recall.
    """
    if not (0.0 <= r_gold <= 1.0 and 0.0 <= r_crawl <= 1.0):
        raise ValueError("r_gold and r_crawl must be in [0, 1]")
    reasons = []
    if r_crawl > 0:
        rrr = r_gold**rho / r_crawl
    else:
        rrr = math.inf
        reasons.append("zero crawl survival; rrr undefined, reported as +inf")
    flagged = rrr > rrr_threshold
    removes_enough = r_crawl <= 1.0 - min_crawl_removed
    keeps_recall = r_gold >= min_recall
    reasons.append(f"rrr {rrr:.4g} {'>' if flagged else '<='} threshold {rrr_threshold:g}")
    reasons.append(
        f"crawl survival {r_crawl:.4g} {'<=' if removes_enough else '>'} {1.0 - min_crawl_removed:g}"
    )
    reasons.append(f"gold recall {r_gold:.4g} {'>=' if keeps_recall else '<'} {min_recall:g}")
    return RrrReport(
        lang=lang,
        r_gold=r_gold,
        r_crawl=r_crawl,
        rho=rho,
        rrr=rrr,
        apply_filter=flagged and removes_enough and keeps_recall,
        reasons=tuple(reasons),
    )


@dataclass(frozen=True)
class NegativeFilterRule:
    lang: str
    rule: str  # "substring" or "token"
    pattern: str
    case_sensitive: bool = False

    def __post_init__(self) -> None:
        if self.rule not in ("substring", "token"):
            raise ValueError(f"unknown rule kind: {self.rule!r}")
        if not self.pattern:
            raise ValueError("pattern must be non-empty")

    def matches(self, sentence: str) -> bool:
        if self.rule == "substring":
            if self.case_sensitive:
                return self.pattern in sentence
            return self.pattern.casefold() in sentence.casefold()
        if self.case_sensitive:
            return self.pattern in _split_tokens(sentence, fold=False)
        return self.pattern.casefold() in tokenize(sentence)

    def to_dict(self) -> dict:
        return {
            "lang": self.lang,
            "rule": self.rule,
            "pattern": self.pattern,
            "case_sensitive": self.case_sensitive,
        }


def load_negative_rules(path: str | Path) -> list[NegativeFilterRule]:
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    return [
        NegativeFilterRule(
            lang=obj["lang"],
            rule=obj["rule"],
            pattern=obj["pattern"],
            case_sensitive=bool(obj.get("case_sensitive", False)),
        )
        for obj in raw
    ]


def negative_filter(
    corpus: MonoCorpus,
    rules: Sequence[NegativeFilterRule],
    report: Optional[StageReport] = None,
) -> MonoCorpus:
    """Drop any sentence matched by one of the hand-authored rules."""
    for rule in rules:
        if rule.lang != corpus.lang:
            raise ValueError(f"rule for {rule.lang!r} applied to corpus {corpus.lang!r}")
    if report is not None:
        report.stage = "negative"
        report.n_in = len(corpus.sentences)
    kept = []
    for sentence in corpus.sentences:
        hit = next((r for r in rules if r.matches(sentence)), None)
        if hit is None:
            kept.append(sentence)
        elif report is not None:
            report.drop(f"{hit.rule}:{hit.pattern}")
    if report is not None:
        report.n_out = len(kept)
    return corpus.advanced("negative", kept)
