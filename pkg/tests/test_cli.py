import json
import random

import numpy as np
import pytest
from click.testing import CliRunner

from stancelab import corpus
from stancelab.cli import main, write_tsv
from stancelab.features import build_vocab, tokenize
from stancelab.model import LinearModel, save_model

from conftest import make_paper


@pytest.fixture
def runner():
    return CliRunner()


BIB = """
@inproceedings{keep-2019, title = "A Valid Paper on Parsing",
  booktitle = "Proceedings of ACL", year = "2019",
  abstract = "We parse and report results."}
@inproceedings{review-2019, title = "Book Review: Grammar Tales",
  booktitle = "Proceedings of ACL", year = "2019"}
@inproceedings{old-1983, title = "Too Old To Keep",
  booktitle = "Proceedings of ACL", year = "1983"}
@inproceedings{ml-2020, title = "Deep Nets Do Things",
  booktitle = "Advances in Neural Information Processing Systems", year = "2020",
  abstract = "Learning happens."}
"""


def _write_inputs(tmp_path):
    bib = tmp_path / "input.bib"
    bib.write_text(BIB)
    fixture = tmp_path / "citations.tsv"
    fixture.write_text("keep-2019\t17\n")
    return bib, fixture


class TestIngest:
    def test_ingest_filters_and_enriches(self, runner, tmp_path):
        bib, fixture = _write_inputs(tmp_path)
        out = tmp_path / "out"
        result = runner.invoke(
            main,
            ["ingest", "--input", str(bib), "--citations", str(fixture), "--output", str(out)],
        )
        assert result.exit_code == 0, result.output
        papers = corpus.load_corpus(out / "corpus.jsonl")
        assert sorted(p.id for p in papers) == ["keep-2019", "ml-2020"]
        assert {p.id: p.citation_count for p in papers}["keep-2019"] == 17
        assert (out / "venue_counts.tsv").exists()
        assert (out / "manifest.json").exists()
        assert "Overall" in result.output

    def test_ingest_idempotent(self, runner, tmp_path):
        bib, fixture = _write_inputs(tmp_path)
        out1, out2 = tmp_path / "o1", tmp_path / "o2"
        for out in (out1, out2):
            result = runner.invoke(
                main,
                ["ingest", "--input", str(bib), "--citations", str(fixture),
                 "--output", str(out)],
            )
            assert result.exit_code == 0
        assert (out1 / "corpus.jsonl").read_text() == (out2 / "corpus.jsonl").read_text()
        assert (out1 / "venue_counts.tsv").read_text() == (out2 / "venue_counts.tsv").read_text()

    def test_ingest_empty_dir_errors(self, runner, tmp_path):
        empty = tmp_path / "empty"
        empty.mkdir()
        result = runner.invoke(
            main, ["ingest", "--input", str(empty), "--output", str(tmp_path / "o")]
        )
        assert result.exit_code != 0

    def test_rules_file_respected(self, runner, tmp_path):
        bib, _ = _write_inputs(tmp_path)
        rules = tmp_path / "rules.json"
        rules.write_text(json.dumps({"min_year_global": 2020}))
        out = tmp_path / "out"
        result = runner.invoke(
            main, ["ingest", "--input", str(bib), "--rules", str(rules), "--output", str(out)]
        )
        assert result.exit_code == 0
        papers = corpus.load_corpus(out / "corpus.jsonl")
        assert [p.id for p in papers] == ["ml-2020"]


def _labeled_corpus_file(tmp_path, n=120, seed=0):
    rng = random.Random(seed)
    pos_words = [f"good{i}" for i in range(6)]
    neg_words = [f"bad{i}" for i in range(6)]
    filler = [f"blah{i}" for i in range(12)]
    papers = []
    for i in range(n):
        n_pos, n_neg = rng.randint(0, 3), rng.randint(0, 3)
        stance = max(-1.0, min(1.0, (n_pos - n_neg) / 3))
        tokens = rng.choices(pos_words, k=n_pos) + rng.choices(neg_words, k=n_neg) + rng.choices(filler, k=10)
        rng.shuffle(tokens)
        papers.append(
            make_paper(
                id=f"p{i}", title=" ".join(tokens[:3]) or "title word",
                abstract=" ".join(tokens[3:]), year=rng.randint(2000, 2021),
                stance=stance,
            )
        )
    path = tmp_path / "labeled.jsonl"
    corpus.save_corpus(papers, path)
    return path, papers


class TestEvaluate:
    def test_baseline_run_writes_report(self, runner, tmp_path):
        corpus_path, _ = _labeled_corpus_file(tmp_path)
        out = tmp_path / "eval"
        result = runner.invoke(
            main,
            ["evaluate", "--input", str(corpus_path), "--scorer", "zero",
             "--output", str(out)],
        )
        assert result.exit_code == 0, result.output
        assert (out / "metrics.tsv").exists()
        assert (out / "metrics.txt").exists()
        content = (out / "metrics.tsv").read_text()
        assert "zero" in content and "avg" in content

    def test_linear_run_writes_model_and_is_deterministic(self, runner, tmp_path):
        corpus_path, _ = _labeled_corpus_file(tmp_path)
        outputs = []
        for name in ("e1", "e2"):
            out = tmp_path / name
            result = runner.invoke(
                main,
                ["evaluate", "--input", str(corpus_path), "--scorer", "linear",
                 "--seed", "3", "--epochs", "8", "--restarts", "2", "--repeats", "1",
                 "--min-df", "1", "--output", str(out)],
            )
            assert result.exit_code == 0, result.output
            assert (out / "model.txt").exists()
            assert (out / "vocab.tsv").exists()
            outputs.append((out / "metrics.tsv").read_text())
            outputs.append((out / "model.txt").read_text())
        assert outputs[0] == outputs[2]  # metrics byte-identical
        assert outputs[1] == outputs[3]  # model byte-identical

    def test_labels_log_joins_corpus(self, runner, tmp_path):
        papers = [make_paper(id=f"p{i}") for i in range(30)]
        corpus_path = tmp_path / "c.jsonl"
        corpus.save_corpus(papers, corpus_path)
        log = tmp_path / "ann.jsonl"
        rng = random.Random(1)
        with log.open("w") as handle:
            for i in range(30):
                handle.write(json.dumps({
                    "paper_id": f"p{i}", "annotator_id": "a",
                    "stance": round(rng.uniform(-1, 1), 2), "created_at": float(i),
                }) + "\n")
        out = tmp_path / "eval"
        result = runner.invoke(
            main,
            ["evaluate", "--input", str(corpus_path), "--labels", str(log),
             "--scorer", "avg", "--output", str(out)],
        )
        assert result.exit_code == 0, result.output


class TestScoreAndAnalyze:
    def _scored_setup(self, runner, tmp_path):
        rng = random.Random(4)
        words = [f"w{i}" for i in range(15)]
        papers = []
        for i in range(60):
            papers.append(
                make_paper(
                    id=f"p{i}",
                    title=" ".join(rng.choices(words, k=3)),
                    abstract=" ".join(rng.choices(words, k=12)) if i % 10 else "",
                    year=rng.randint(2005, 2021),
                    venue=rng.choice(("ACL", "NeurIPS")),
                    domain="NLP" if i % 2 else "ML",
                    citation_count=rng.randint(0, 50),
                    decision=rng.choice(("accepted", "rejected")),
                )
            )
        corpus_path = tmp_path / "c.jsonl"
        corpus.save_corpus(papers, corpus_path)
        vocab = build_vocab(
            [tokenize(p.title, p.abstract) for p in papers if p.abstract], min_df=1
        )
        vocab_path = tmp_path / "vocab.tsv"
        vocab.save(vocab_path)
        rng_np = np.random.default_rng(0)
        model = LinearModel(
            weights=rng_np.uniform(-0.3, 0.3, vocab.dim),
            vocab_fingerprint=vocab.fingerprint(),
        )
        model_path = tmp_path / "model.txt"
        save_model(model, model_path)
        return corpus_path, model_path, vocab_path, papers

    def test_score_fills_stances_and_skips_missing_abstracts(self, runner, tmp_path):
        corpus_path, model_path, vocab_path, papers = self._scored_setup(runner, tmp_path)
        out = tmp_path / "scored"
        result = runner.invoke(
            main,
            ["score", "--input", str(corpus_path), "--model", str(model_path),
             "--vocab", str(vocab_path), "--output", str(out)],
        )
        assert result.exit_code == 0, result.output
        scored = corpus.load_corpus(out / "scored.jsonl")
        n_missing = sum(1 for p in papers if not p.abstract)
        assert sum(1 for p in scored if p.stance is None) == n_missing
        assert f"skipped {n_missing}" in result.output
        assert all(-1 <= p.stance <= 1 for p in scored if p.stance is not None)

    def test_zero_weight_model_scores_zero(self, runner, tmp_path):
        corpus_path, _, vocab_path, _ = self._scored_setup(runner, tmp_path)
        from stancelab.features import Vocabulary

        vocab = Vocabulary.load(vocab_path)
        zero_path = tmp_path / "zero.txt"
        save_model(LinearModel(weights=np.zeros(vocab.dim)), zero_path)
        out = tmp_path / "zs"
        result = runner.invoke(
            main,
            ["score", "--input", str(corpus_path), "--model", str(zero_path),
             "--vocab", str(vocab_path), "--output", str(out)],
        )
        assert result.exit_code == 0
        scored = corpus.load_corpus(out / "scored.jsonl")
        assert all(p.stance == 0.0 for p in scored if p.stance is not None)

    def test_analyze_writes_all_tables(self, runner, tmp_path):
        corpus_path, model_path, vocab_path, _ = self._scored_setup(runner, tmp_path)
        scored_dir = tmp_path / "scored"
        runner.invoke(
            main,
            ["score", "--input", str(corpus_path), "--model", str(model_path),
             "--vocab", str(vocab_path), "--output", str(scored_dir)],
        )
        out = tmp_path / "analysis"
        result = runner.invoke(
            main,
            ["analyze", "--input", str(scored_dir / "scored.jsonl"),
             "--output", str(out), "--seed", "1"],
        )
        assert result.exit_code == 0, result.output
        for name in (
            "stance_histogram.tsv", "stance_summary.tsv", "avg_stance_by_year.tsv",
            "pct_negative_by_year.tsv", "conditional_avg_by_year.tsv",
            "venue_negativity.tsv", "citations_by_stance.tsv",
            "citation_diagnostics.tsv", "acceptance_by_stance.tsv", "manifest.json",
        ):
            assert (out / name).exists(), name

    def test_analyze_deterministic_tables(self, runner, tmp_path):
        corpus_path, model_path, vocab_path, _ = self._scored_setup(runner, tmp_path)
        scored_dir = tmp_path / "scored"
        runner.invoke(
            main,
            ["score", "--input", str(corpus_path), "--model", str(model_path),
             "--vocab", str(vocab_path), "--output", str(scored_dir)],
        )
        texts = []
        for name in ("a1", "a2"):
            out = tmp_path / name
            result = runner.invoke(
                main,
                ["analyze", "--input", str(scored_dir / "scored.jsonl"),
                 "--output", str(out), "--seed", "7", "--which", "yearly"],
            )
            assert result.exit_code == 0
            texts.append((out / "avg_stance_by_year.tsv").read_text())
        assert texts[0] == texts[1]

    def test_venue_export_keeps_exact_zero_and_floors_plot_value(self, runner, tmp_path):
        papers = [
            make_paper(id=f"p{i}", venue="ACL", year=2010, stance=0.9,
                       citation_count=i, decision="accepted")
            for i in range(5)
        ]
        corpus_path = tmp_path / "c.jsonl"
        corpus.save_corpus(papers, corpus_path)
        out = tmp_path / "a"
        result = runner.invoke(
            main,
            ["analyze", "--input", str(corpus_path), "--output", str(out),
             "--which", "venues", "--floor-epsilon", "0.001"],
        )
        assert result.exit_code == 0, result.output
        lines = (out / "venue_negativity.tsv").read_text().splitlines()
        header = lines[0].split("\t")
        row = dict(zip(header, lines[1].split("\t")))
        assert float(row["value"]) == 0.0
        assert float(row["plot_value"]) == 0.001

    def test_unscored_corpus_rejected(self, runner, tmp_path):
        papers = [make_paper(id="p0")]
        corpus_path = tmp_path / "c.jsonl"
        corpus.save_corpus(papers, corpus_path)
        result = runner.invoke(
            main, ["analyze", "--input", str(corpus_path), "--output", str(tmp_path / "o")]
        )
        assert result.exit_code != 0


class TestEnvOverrides:
    def test_env_seed_used_when_flag_absent(self, runner, tmp_path):
        corpus_path, _ = _labeled_corpus_file(tmp_path, n=40)
        out = tmp_path / "eval"
        result = runner.invoke(
            main,
            ["evaluate", "--input", str(corpus_path), "--scorer", "zero",
             "--output", str(out)],
            env={"STANCELAB_SEED": "9"},
        )
        assert result.exit_code == 0, result.output
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["config"]["seed"] == 9

    def test_flag_beats_env(self, runner, tmp_path):
        corpus_path, _ = _labeled_corpus_file(tmp_path, n=40)
        out = tmp_path / "eval"
        result = runner.invoke(
            main,
            ["evaluate", "--input", str(corpus_path), "--scorer", "zero",
             "--seed", "4", "--output", str(out)],
            env={"STANCELAB_SEED": "9"},
        )
        assert result.exit_code == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["config"]["seed"] == 4


def test_write_tsv_formats_none(tmp_path):
    path = tmp_path / "t.tsv"
    write_tsv(path, [{"a": None, "b": 0.5}], ["a", "b"])
    assert path.read_text() == "a\tb\nNA\t0.5\n"
