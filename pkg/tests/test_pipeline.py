import json
from pathlib import Path

import pytest

from monomine import corpus as corpus_mod
from monomine import filters
from monomine.clustering import ClusterMap
from monomine.corpus import load_documents, read_corpus
from monomine.errors import ConfigError
from monomine.langid import load_model
from monomine.pipeline import (
    PipelineConfig,
    render_report_text,
    report,
    run_pipeline,
)

from pipeline_env import build_env, corpus_quality


@pytest.fixture(scope="module")
def env(tmp_path_factory):
    return build_env(
        tmp_path_factory.mktemp("pipe"),
        n_docs=180,
        train_per_lang=200,
        gold_per_lang=50,
        plant_negative=True,
    )


@pytest.fixture(scope="module")
def first_run(env):
    config = PipelineConfig.from_yaml(env.config_path)
    result = run_pipeline(config)
    return config, result


def output_bytes(out_dir: Path) -> dict[str, bytes]:
    return {p.name: p.read_bytes() for p in sorted(out_dir.glob("*.txt"))}


class TestConfig:
    def test_from_yaml(self, env):
        config = PipelineConfig.from_yaml(env.config_path)
        assert config.wordlist.dir == "wordlists"
        assert config.tfiif.rho == 2.0
        assert config.min_sentences == 25000

    def test_missing_required_key(self):
        with pytest.raises(ConfigError):
            PipelineConfig.from_dict({"input": "x"})

    def test_unknown_stage_rejected(self):
        raw = {"input": "a", "output_dir": "b", "model": "c", "clusters": "d",
               "stages": {"mystery": {}}}
        with pytest.raises(ConfigError):
            PipelineConfig.from_dict(raw)

    def test_bad_stage_option_rejected(self):
        raw = {"input": "a", "output_dir": "b", "model": "c", "clusters": "d",
               "stages": {"wordlist": {"nope": 1}}}
        with pytest.raises(ConfigError):
            PipelineConfig.from_dict(raw)

    def test_hash_stable_and_worker_independent(self, env):
        a = PipelineConfig.from_yaml(env.config_path)
        b = PipelineConfig.from_yaml(env.config_path)
        assert a.config_hash() == b.config_hash()
        b.workers = 8
        assert a.config_hash() == b.config_hash()

    def test_hash_changes_with_config(self, env):
        a = PipelineConfig.from_yaml(env.config_path)
        b = PipelineConfig.from_yaml(env.config_path)
        b.wordlist.threshold = 0.3
        assert a.config_hash() != b.config_hash()


class TestRunPipeline:
    def test_corpora_written_per_language(self, env, first_run):
        config, result = first_run
        out_dir = env.root / "out"
        for lang in env.langs:
            assert (out_dir / f"{lang}.txt").exists()
            assert lang in result.summary["languages"]

    def test_quality_against_generator_labels(self, env, first_run):
        _, result = first_run
        for lang in env.langs:
            precision, recall = corpus_quality(env, lang, result.corpora[lang].sentences)
            assert precision >= 0.95, f"{lang}: precision {precision}"
            assert recall >= 0.70, f"{lang}: recall {recall}"

    def test_negative_rule_applied(self, env, first_run):
        _, result = first_run
        assert not any("kasino" in s for s in result.corpora["aa"].sentences)
        negative = next(m for m in result.manifests if m.stage == "negative")
        assert negative.per_language["aa"]["dropped_by_reason"].get("token:kasino", 0) > 0

    def test_funnel_monotone(self, env, first_run):
        _, result = first_run
        for lang, entry in result.summary["languages"].items():
            counts = list(entry["stage_counts"].values())
            assert all(b <= a for a, b in zip(counts, counts[1:])), lang

    def test_below_threshold_flagged(self, env, first_run):
        _, result = first_run
        for entry in result.summary["languages"].values():
            assert entry["below_training_threshold"] is (
                entry["n_sentences"] < 25000
            )

    def test_manifests_cover_all_stages(self, env, first_run):
        _, result = first_run
        stages = [m.stage for m in result.manifests]
        assert stages == [
            "ingest", "annotate", "doc_consistency", "wordlist",
            "decluster", "tfiif", "negative", "dedup",
        ]

    def test_tfiif_decisions_recorded(self, env, first_run):
        _, result = first_run
        tfiif = next(m for m in result.manifests if m.stage == "tfiif")
        for lang in env.langs:
            assert "decision" in tfiif.per_language[lang]

    def test_rerun_is_byte_identical(self, env, first_run):
        config, _ = first_run
        before = output_bytes(env.root / "out")
        run_pipeline(config)
        assert output_bytes(env.root / "out") == before

    def test_worker_count_does_not_change_bytes(self, env, first_run):
        config, _ = first_run
        baseline = output_bytes(env.root / "out")
        config8 = PipelineConfig.from_yaml(env.config_path)
        config8.workers = 4
        config8.output_dir = "out-w4"
        run_pipeline(config8)
        assert output_bytes(env.root / "out-w4") == baseline


class TestCompositionOracle:
    def test_matches_manual_stage_chain(self, env, first_run):
        config, result = first_run
        model = load_model(env.root / "langid.bin")
        clusters = ClusterMap.load_json(env.root / "clusters.json")
        docs = [
            filters.annotate_document(d, model, clusters)
            for d in load_documents(env.crawl_path)
        ]
        cluster_corpora = filters.filter_doc_consistency(docs)
        filtered = {}
        for cid, corpus in cluster_corpora.items():
            lists = {
                lang: filters.WordList.load_tsv(env.root / "wordlists" / f"{lang}.txt", lang, "frequency")
                for lang in clusters.members[cid]
            }
            filtered[cid] = filters.filter_wordlist(corpus, lists, 0.2)
        corpora = filters.decluster(filtered, model, clusters)
        iif = filters.IifTable.load(env.root / "iif.tsv")
        final = {}
        rules = filters.load_negative_rules(env.root / "rules.json")
        for lang, corpus in corpora.items():
            if corpus.sentences:
                wl = filters.build_tfiif_wordlist(corpus, iif, 1000)
                gold = read_corpus(env.root / "gold" / f"{lang}.txt", lang)
                gate = filters.rrr_gate(
                    filters.survival_fraction(gold.sentences, wl, 0.2),
                    filters.survival_fraction(corpus.sentences, wl, 0.2),
                    rho=2.0,
                    rrr_threshold=1.0,
                )
                if gate.apply_filter:
                    corpus = filters.filter_tfiif(corpus, wl, 0.2)
            corpus = filters.negative_filter(corpus, [r for r in rules if r.lang == lang])
            corpus, _ = corpus_mod.dedup(corpus)
            final[lang] = corpus
        for lang in env.langs:
            assert result.corpora[lang].sentences == final[lang].sentences, lang


class TestDisabledStages:
    def rerun(self, env, **overrides):
        config = PipelineConfig.from_yaml(env.config_path)
        for stage, enabled in overrides.items():
            getattr(config, stage).enabled = enabled
        config.output_dir = "out-" + "-".join(f"{k}{int(v)}" for k, v in sorted(overrides.items()))
        return run_pipeline(config)

    def test_disabled_filter_stage_drops_nothing(self, env, first_run):
        result = self.rerun(env, negative=False)
        manifest = next(m for m in result.manifests if m.stage == "negative")
        for entry in manifest.per_language.values():
            assert entry["in"] == entry["out"]
        assert any("kasino" in s for s in result.corpora["aa"].sentences)

    def test_disabled_wordlist_keeps_counts(self, env):
        result = self.rerun(env, wordlist=False)
        manifest = next(m for m in result.manifests if m.stage == "wordlist")
        for entry in manifest.per_language.values():
            assert entry["in"] == entry["out"]

    def test_disabled_doc_consistency_keeps_everything(self, env):
        result = self.rerun(env, doc_consistency=False)
        manifest = next(m for m in result.manifests if m.stage == "doc_consistency")
        total_out = sum(e["out"] for e in manifest.per_language.values())
        ingest = next(m for m in result.manifests if m.stage == "ingest")
        assert total_out == ingest.per_language["*"]["sentences"]

    def test_model_language_missing_from_clusters(self, env, tmp_path):
        # a cluster map that does not cover the model's languages is a config error
        partial = tmp_path / "partial.json"
        partial.write_text('{"aa": 0}')
        raw = env.config_dict()
        raw["clusters"] = str(partial)
        raw["output_dir"] = str(tmp_path / "out")
        config = PipelineConfig.from_dict(raw, base_dir=env.root)
        with pytest.raises(ConfigError):
            run_pipeline(config)

    def test_empty_crawl(self, tmp_path, env):
        crawl = tmp_path / "empty.jsonl"
        crawl.write_text("")
        raw = env.config_dict()
        raw["input"] = str(crawl)
        raw["output_dir"] = str(tmp_path / "out")
        config = PipelineConfig.from_dict(raw, base_dir=env.root)
        result = run_pipeline(config)
        assert result.corpora == {}
        assert [m.stage for m in result.manifests][0] == "ingest"
        assert (tmp_path / "out" / "manifests.json").exists()


class TestReport:
    def test_report_aggregates_manifests(self, env, first_run):
        rep = report(env.root / "out" / "manifests.json")
        assert "funnel" in rep and "totals" in rep
        # totals equal sums of per-language outs
        with open(env.root / "out" / "manifests.json") as fh:
            data = json.load(fh)
        for stage in data["stages"]:
            expected = sum(e.get("out", 0) for e in stage["per_language"].values())
            assert rep["totals"][stage["stage"]] == expected

    def test_funnel_matches_summary(self, env, first_run):
        _, result = first_run
        rep = report(env.root / "out" / "manifests.json")
        for lang, entry in result.summary["languages"].items():
            assert rep["funnel"][lang]["dedup"] == entry["n_sentences"]

    def test_text_rendering(self, env, first_run):
        rep = report(env.root / "out" / "manifests.json")
        text = render_report_text(rep)
        assert text.startswith("language\t")
        assert "totals:" in text
        for lang in env.langs:
            assert f"\n{lang}\t" in text


class TestIngestManifest:
    def test_lenient_counts_in_manifest(self, env, tmp_path):
        crawl = tmp_path / "messy.jsonl"
        crawl.write_text('{"id":"d1","sentences":["ok"]}\nnot json\n')
        raw = env.config_dict()
        raw["input"] = str(crawl)
        raw["output_dir"] = str(tmp_path / "out")
        config = PipelineConfig.from_dict(raw, base_dir=env.root)
        result = run_pipeline(config)
        ingest = next(m for m in result.manifests if m.stage == "ingest")
        assert ingest.per_language["*"]["dropped_by_reason"] == {"malformed": 1}
