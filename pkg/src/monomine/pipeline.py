"""Pipeline orchestration: run the full mining cascade from a config file.

Stage order: annotate -> doc-consistency -> wordlist -> decluster ->
tfiif (gated per language) -> negative -> dedup. Every stage leaves a
manifest with per-language in/out counts and drop reasons; disabling a
stage means no sentence is dropped by it.
"""

from __future__ import annotations

import hashlib
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import yaml

from . import corpus as corpus_mod
from . import filters
from .clustering import ClusterMap
from .corpus import Document, IngestReport, MonoCorpus, load_documents
from .errors import ConfigError, MissingWordlist
from .filters import StageReport, WordList
from .langid import Predictor, load_model

STAGE_ORDER = (
    "ingest",
    "annotate",
    "doc_consistency",
    "wordlist",
    "decluster",
    "tfiif",
    "negative",
    "dedup",
)


@dataclass
class StageToggle:
    enabled: bool = True


@dataclass
class WordlistStageConfig(StageToggle):
    dir: Optional[str] = None
    threshold: float = 0.2


@dataclass
class DeclusterStageConfig(StageToggle):
    model: Optional[str] = None  # None: reuse the annotation model


@dataclass
class TfiifStageConfig(StageToggle):
    iif: Optional[str] = None
    gold_dir: Optional[str] = None
    threshold: float = 0.2
    tau: int = 1000
    kappa: Optional[int] = None  # None: keep the IIF table's own kappa/alpha
    rho: float = 2.0
    rrr_threshold: float = 1.0
    min_crawl_removed: float = 0.2
    min_recall: float = 0.8


@dataclass
class NegativeStageConfig(StageToggle):
    rules: Optional[str] = None


@dataclass
class PipelineConfig:
    input: str
    output_dir: str
    model: str
    clusters: str
    workers: int = 1
    strict: bool = False
    min_sentences: int = 25000
    dedup_global: bool = False
    doc_consistency: StageToggle = field(default_factory=StageToggle)
    wordlist: WordlistStageConfig = field(default_factory=WordlistStageConfig)
    decluster: DeclusterStageConfig = field(default_factory=DeclusterStageConfig)
    tfiif: TfiifStageConfig = field(default_factory=TfiifStageConfig)
    negative: NegativeStageConfig = field(default_factory=NegativeStageConfig)
    dedup: StageToggle = field(default_factory=StageToggle)
    base_dir: Path = field(default_factory=Path)

    @classmethod
    def from_dict(cls, raw: dict, base_dir: str | Path = ".") -> "PipelineConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config must be a mapping")
        for key in ("input", "output_dir", "model", "clusters"):
            if key not in raw:
                raise ConfigError(f"config missing required key {key!r}")
        stages = raw.get("stages", {}) or {}
        unknown = set(stages) - {
            "doc_consistency", "wordlist", "decluster", "tfiif", "negative", "dedup",
        }
        if unknown:
            raise ConfigError(f"unknown stage(s) in config: {', '.join(sorted(unknown))}")

        def build(klass, name):
            section = stages.get(name, {}) or {}
            try:
                return klass(**section)
            except TypeError as exc:
                raise ConfigError(f"bad options for stage {name!r}: {exc}") from exc

        workers = int(raw.get("workers", 1))
        if workers < 1:
            raise ConfigError("workers must be >= 1")
        return cls(
            input=str(raw["input"]),
            output_dir=str(raw["output_dir"]),
            model=str(raw["model"]),
            clusters=str(raw["clusters"]),
            workers=workers,
            strict=bool(raw.get("strict", False)),
            min_sentences=int(raw.get("min_sentences", 25000)),
            dedup_global=bool(raw.get("dedup_global", False)),
            doc_consistency=build(StageToggle, "doc_consistency"),
            wordlist=build(WordlistStageConfig, "wordlist"),
            decluster=build(DeclusterStageConfig, "decluster"),
            tfiif=build(TfiifStageConfig, "tfiif"),
            negative=build(NegativeStageConfig, "negative"),
            dedup=build(StageToggle, "dedup"),
            base_dir=Path(base_dir),
        )

    @classmethod
    def from_yaml(cls, path: str | Path) -> "PipelineConfig":
        path = Path(path)
        with open(path, "r", encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
        return cls.from_dict(raw or {}, base_dir=path.parent)

    def resolve(self, p: str) -> Path:
        q = Path(p)
        return q if q.is_absolute() else self.base_dir / q

    def to_canonical_dict(self) -> dict:
        def stage_dict(obj) -> dict:
            return dict(vars(obj))

        return {
            "input": self.input,
            "output_dir": self.output_dir,
            "model": self.model,
            "clusters": self.clusters,
            "strict": self.strict,
            "min_sentences": self.min_sentences,
            "dedup_global": self.dedup_global,
            "stages": {
                "doc_consistency": stage_dict(self.doc_consistency),
                "wordlist": stage_dict(self.wordlist),
                "decluster": stage_dict(self.decluster),
                "tfiif": stage_dict(self.tfiif),
                "negative": stage_dict(self.negative),
                "dedup": stage_dict(self.dedup),
            },
        }

    def config_hash(self) -> str:
        # Worker count is excluded: it must not affect outputs, so two runs
        # differing only in workers share a hash.
        canon = json.dumps(self.to_canonical_dict(), sort_keys=True)
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]


@dataclass
class StageManifest:
    stage: str
    per_language: dict[str, dict]
    wall_time: float
    config_hash: str

    def to_dict(self) -> dict:
        return {
            "stage": self.stage,
            "per_language": self.per_language,
            "wall_time": self.wall_time,
            "config_hash": self.config_hash,
        }


@dataclass
class PipelineResult:
    manifests: list[StageManifest]
    corpora: dict[str, MonoCorpus]
    summary: dict

    def to_dict(self) -> dict:
        return {
            "stages": [m.to_dict() for m in self.manifests],
            "summary": self.summary,
        }


def _annotate_all(
    docs: list[Document], predictor: Predictor, clusters: ClusterMap, workers: int
) -> list[Document]:
    """Round-robin shards, merged back positionally: worker count cannot
    change the output order."""
    if workers <= 1 or len(docs) < 2:
        return [filters.annotate_document(d, predictor, clusters) for d in docs]
    shards = [docs[i::workers] for i in range(workers)]

    def work(shard: list[Document]) -> list[Document]:
        return [filters.annotate_document(d, predictor, clusters) for d in shard]

    with ThreadPoolExecutor(max_workers=workers) as pool:
        shard_results = list(pool.map(work, shards))
    merged: list[Optional[Document]] = [None] * len(docs)
    for s, result in enumerate(shard_results):
        for k, doc in enumerate(result):
            merged[s + k * workers] = doc
    return merged  # type: ignore[return-value]


def _load_wordlists_for(langs: list[str], directory: Path) -> dict[str, WordList]:
    lists = {}
    for lang in langs:
        path = directory / f"{lang}.txt"
        if not path.exists():
            raise MissingWordlist(f"no wordlist for cluster language {lang!r} at {path}")
        lists[lang] = WordList.load_tsv(path, lang, "frequency")
    return lists


def run_pipeline(config: PipelineConfig) -> PipelineResult:
    """Run every enabled stage and write per-language corpora + manifests."""
    cfg_hash = config.config_hash()
    out_dir = config.resolve(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifests: list[StageManifest] = []

    def add_manifest(stage: str, per_language: dict[str, dict], started: float) -> None:
        manifests.append(
            StageManifest(stage, per_language, time.perf_counter() - started, cfg_hash)
        )

    # ingest
    t0 = time.perf_counter()
    ingest_report = IngestReport()
    docs = list(
        load_documents(config.resolve(config.input), strict=config.strict, report=ingest_report)
    )
    n_sentences = sum(len(d.sentences) for d in docs)
    add_manifest(
        "ingest",
        {"*": {"in": ingest_report.lines, "out": ingest_report.documents,
               "dropped_by_reason": {"malformed": ingest_report.skipped} if ingest_report.skipped else {},
               "sentences": n_sentences}},
        t0,
    )

    # annotate
    t0 = time.perf_counter()
    model = load_model(config.resolve(config.model))
    clusters = ClusterMap.load_json(config.resolve(config.clusters))
    missing = [lang for lang in model.languages if lang not in clusters.assignment]
    if missing:
        raise ConfigError(f"model languages missing from cluster map: {', '.join(missing)}")
    docs = _annotate_all(docs, model, clusters, config.workers)
    add_manifest("annotate", {"*": {"in": n_sentences, "out": n_sentences, "dropped_by_reason": {}}}, t0)

    # doc consistency
    t0 = time.perf_counter()
    if config.doc_consistency.enabled:
        cluster_reports: dict[int, StageReport] = {}
        cluster_corpora = filters.filter_doc_consistency(docs, cluster_reports)
        per_lang = {f"cluster:{cid}": rep.to_dict() for cid, rep in sorted(cluster_reports.items())}
    else:
        # no veto: every sentence goes to its own sentence-level cluster
        routed: dict[int, list[str]] = {}
        for doc in docs:
            for record in doc.sentences:
                routed.setdefault(record.predicted_cluster, []).append(record.text)
        cluster_corpora = {
            cid: MonoCorpus.from_sentences(f"cluster:{cid}", sents, stage="doc_consistency")
            for cid, sents in sorted(routed.items())
        }
        per_lang = {
            f"cluster:{cid}": {"in": len(c.sentences), "out": len(c.sentences), "dropped_by_reason": {}}
            for cid, c in cluster_corpora.items()
        }
    add_manifest("doc_consistency", per_lang, t0)

    # wordlist
    t0 = time.perf_counter()
    per_lang = {}
    if config.wordlist.enabled:
        if not config.wordlist.dir:
            raise ConfigError("wordlist stage enabled but no wordlist dir configured")
        wl_dir = config.resolve(config.wordlist.dir)
        filtered = {}
        for cid in sorted(cluster_corpora):
            members = list(clusters.members.get(cid, ()))
            lists = _load_wordlists_for(members, wl_dir)
            rep = StageReport()
            filtered[cid] = filters.filter_wordlist(
                cluster_corpora[cid], lists, config.wordlist.threshold, rep
            )
            per_lang[f"cluster:{cid}"] = rep.to_dict()
        cluster_corpora = filtered
    else:
        per_lang = {
            f"cluster:{cid}": {"in": len(c.sentences), "out": len(c.sentences), "dropped_by_reason": {}}
            for cid, c in sorted(cluster_corpora.items())
        }
    add_manifest("wordlist", per_lang, t0)

    # decluster
    t0 = time.perf_counter()
    if config.decluster.model:
        second_predictor: Predictor = load_model(config.resolve(config.decluster.model))
    else:
        second_predictor = model
    decluster_reports: dict[str, StageReport] = {}
    if config.decluster.enabled:
        corpora = filters.decluster(cluster_corpora, second_predictor, clusters, decluster_reports)
        per_lang = {lang: rep.to_dict() for lang, rep in sorted(decluster_reports.items())}
    else:
        # no veto: route by prediction even when it leaves the cluster
        routed2: dict[str, list[str]] = {}
        for cid in sorted(cluster_corpora):
            sentences = list(cluster_corpora[cid].sentences)
            for sentence, (lang, _) in zip(
                sentences, filters.predict_many(second_predictor, sentences)
            ):
                routed2.setdefault(lang, []).append(sentence)
        corpora = {
            lang: MonoCorpus.from_sentences(lang, sents, stage="decluster")
            for lang, sents in sorted(routed2.items())
        }
        per_lang = {
            lang: {"in": len(c.sentences), "out": len(c.sentences), "dropped_by_reason": {}}
            for lang, c in corpora.items()
        }
    add_manifest("decluster", per_lang, t0)

    # tfiif, gated per language
    t0 = time.perf_counter()
    per_lang = {}
    if config.tfiif.enabled:
        if not config.tfiif.iif:
            raise ConfigError("tfiif stage enabled but no iif table configured")
        iif = filters.IifTable.load(config.resolve(config.tfiif.iif))
        if config.tfiif.kappa is not None and config.tfiif.kappa != iif.kappa:
            iif = filters.IifTable.from_counts(iif.freqs, config.tfiif.kappa)
        gold_dir = config.resolve(config.tfiif.gold_dir) if config.tfiif.gold_dir else None
        filtered_corpora = {}
        for lang in sorted(corpora):
            corpus = corpora[lang]
            entry: dict = {"in": len(corpus.sentences)}
            gold_path = gold_dir / f"{lang}.txt" if gold_dir else None
            if not corpus.sentences:
                entry.update(out=0, dropped_by_reason={}, decision="skipped:empty_corpus")
                filtered_corpora[lang] = corpus.advanced("tfiif", corpus.sentences)
            elif gold_path is None or not gold_path.exists():
                entry.update(out=len(corpus.sentences), dropped_by_reason={}, decision="skipped:no_gold_corpus")
                filtered_corpora[lang] = corpus.advanced("tfiif", corpus.sentences)
            else:
                wordlist = filters.build_tfiif_wordlist(corpus, iif, config.tfiif.tau)
                gold = corpus_mod.read_corpus(gold_path, lang)
                gate = filters.rrr_gate(
                    r_gold=filters.survival_fraction(gold.sentences, wordlist, config.tfiif.threshold),
                    r_crawl=filters.survival_fraction(corpus.sentences, wordlist, config.tfiif.threshold),
                    rho=config.tfiif.rho,
                    rrr_threshold=config.tfiif.rrr_threshold,
                    min_crawl_removed=config.tfiif.min_crawl_removed,
                    min_recall=config.tfiif.min_recall,
                    lang=lang,
                )
                entry["rrr"] = gate.to_dict()
                if gate.apply_filter:
                    rep = StageReport()
                    filtered_corpora[lang] = filters.filter_tfiif(
                        corpus, wordlist, config.tfiif.threshold, rep
                    )
                    entry.update(out=rep.n_out, dropped_by_reason=rep.dropped_by_reason, decision="filtered")
                else:
                    filtered_corpora[lang] = corpus.advanced("tfiif", corpus.sentences)
                    entry.update(out=len(corpus.sentences), dropped_by_reason={}, decision="skipped:gate")
            per_lang[lang] = entry
        corpora = filtered_corpora
    else:
        per_lang = {
            lang: {"in": len(c.sentences), "out": len(c.sentences), "dropped_by_reason": {}}
            for lang, c in sorted(corpora.items())
        }
    add_manifest("tfiif", per_lang, t0)

    # negative filters
    t0 = time.perf_counter()
    per_lang = {}
    rules_by_lang: dict[str, list[filters.NegativeFilterRule]] = {}
    if config.negative.enabled and config.negative.rules:
        for rule in filters.load_negative_rules(config.resolve(config.negative.rules)):
            rules_by_lang.setdefault(rule.lang, []).append(rule)
    if config.negative.enabled:
        filtered_corpora = {}
        for lang in sorted(corpora):
            rep = StageReport()
            filtered_corpora[lang] = filters.negative_filter(
                corpora[lang], rules_by_lang.get(lang, []), rep
            )
            per_lang[lang] = rep.to_dict()
        corpora = filtered_corpora
    else:
        per_lang = {
            lang: {"in": len(c.sentences), "out": len(c.sentences), "dropped_by_reason": {}}
            for lang, c in sorted(corpora.items())
        }
    add_manifest("negative", per_lang, t0)

    # dedup
    t0 = time.perf_counter()
    if config.dedup.enabled:
        scope = "global" if config.dedup_global else "per-language"
        corpora, dedup_reports = corpus_mod.dedup_corpora(corpora, scope)
        per_lang = {
            lang: {
                "in": rep.before,
                "out": rep.after,
                "dropped_by_reason": {"duplicate": rep.before - rep.after} if rep.before != rep.after else {},
                "factor": rep.factor,
            }
            for lang, rep in sorted(dedup_reports.items())
        }
    else:
        per_lang = {
            lang: {"in": len(c.sentences), "out": len(c.sentences), "dropped_by_reason": {}}
            for lang, c in sorted(corpora.items())
        }
    add_manifest("dedup", per_lang, t0)

    # write corpora + summary
    summary: dict = {"config_hash": cfg_hash, "languages": {}}
    for lang in sorted(corpora):
        corpus = corpora[lang]
        corpus.check_funnel()
        corpus_mod.write_corpus(corpus, out_dir / f"{lang}.txt")
        stats = corpus_mod.corpus_stats(corpus)
        summary["languages"][lang] = {
            "n_sentences": stats.n_sentences,
            "stats": stats.to_dict(),
            "stage_counts": dict(corpus.stage_counts),
            "below_training_threshold": stats.n_sentences < config.min_sentences,
        }
    result = PipelineResult(manifests, corpora, summary)
    with open(out_dir / "manifests.json", "w", encoding="utf-8") as fh:
        json.dump(result.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return result


def report(manifests_path: str | Path) -> dict:
    """Aggregate written manifests into a per-language funnel summary."""
    with open(manifests_path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    stages = data["stages"]
    funnel: dict[str, dict[str, int]] = {}
    for stage in stages:
        for label, entry in stage["per_language"].items():
            if "out" in entry:
                funnel.setdefault(label, {})[stage["stage"]] = entry["out"]
    totals = {
        stage["stage"]: sum(
            entry.get("out", 0) for entry in stage["per_language"].values()
        )
        for stage in stages
    }
    return {
        "funnel": {k: funnel[k] for k in sorted(funnel)},
        "totals": totals,
        "summary": data.get("summary", {}),
    }


def render_report_text(rep: dict) -> str:
    """Human-readable funnel table."""
    lines = []
    summary = rep.get("summary", {})
    lang_rows = summary.get("languages", {})
    stage_names = [s for s in STAGE_ORDER if s in rep.get("totals", {})]
    header = ["language"] + stage_names + ["below_threshold"]
    lines.append("\t".join(header))
    for label in sorted(rep["funnel"]):
        row = [label]
        for stage in stage_names:
            row.append(str(rep["funnel"][label].get(stage, "-")))
        flag = lang_rows.get(label, {}).get("below_training_threshold")
        row.append("" if flag is None else str(flag).lower())
        lines.append("\t".join(row))
    lines.append("")
    lines.append("totals:\t" + "\t".join(f"{s}={rep['totals'][s]}" for s in stage_names))
    return "\n".join(lines) + "\n"
