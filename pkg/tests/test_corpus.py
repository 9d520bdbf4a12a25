import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stancelab import corpus
from stancelab.corpus import (
    CorpusFormatError,
    FilterRules,
    PaperRecord,
    corpus_stats,
    filter_papers,
    load_corpus,
    parse_bibtex,
    save_corpus,
)

from conftest import make_paper


class TestPaperRecord:
    def test_valid_record(self):
        p = make_paper(stance=0.5, citation_count=17)
        assert p.stance == 0.5
        assert p.citation_count == 17

    @pytest.mark.parametrize("year", [1959, 3000, 1000])
    def test_year_bounds(self, year):
        with pytest.raises(ValueError):
            make_paper(year=year)

    @pytest.mark.parametrize("stance", [1.5, -1.0001, float("nan")])
    def test_stance_bounds(self, stance):
        with pytest.raises(ValueError):
            make_paper(stance=stance)

    def test_empty_title_rejected(self):
        with pytest.raises(ValueError):
            make_paper(title="   ")

    def test_dict_round_trip(self):
        p = make_paper(authors=("A. One", "B. Two"), stance=-0.83, decision="accepted")
        assert PaperRecord.from_dict(p.to_dict()) == p


BIB = """
@inproceedings{a-2019, title = "Probing Neural Network Comprehension of Arguments",
  booktitle = "Proceedings of ACL", year = "2019"}
@inproceedings{b-noyear, title = "No Year Here", booktitle = "Proceedings of ACL"}
@inproceedings{c-2020, title = "A Second Paper", booktitle = "Proceedings of the 2020 Conference on Empirical Methods in Natural Language Processing", year = "2020"}
"""


class TestParseBibtex:
    def test_field_extraction(self):
        result = parse_bibtex(BIB)
        assert [r.id for r in result.records] == ["a-2019", "c-2020"]
        first = result.records[0]
        assert first.title.startswith("Probing Neural Network")
        assert first.year == 2019
        assert first.venue == "ACL"
        assert first.domain == "NLP"
        assert result.records[1].venue == "EMNLP"

    def test_entry_order_preserved_and_diagnostics(self):
        result = parse_bibtex(BIB)
        assert len(result.records) == 2
        assert len(result.diagnostics) == 1
        assert "year" in result.diagnostics[0].reason

    def test_empty_input(self):
        result = parse_bibtex("")
        assert result.records == []
        assert result.diagnostics == []

    def test_missing_title_skipped(self):
        result = parse_bibtex('@article{x, year = "2001"}')
        assert result.records == []
        assert result.diagnostics[0].reason == "missing title"

    def test_duplicate_key_reported(self):
        text = '@article{dup, title={One}, year={2001}}\n@article{dup, title={Two}, year={2002}}'
        result = parse_bibtex(text)
        assert len(result.records) == 1
        assert result.records[0].title == "One"
        assert any("duplicate" in d.reason for d in result.diagnostics)

    def test_year_out_of_range_skipped(self):
        result = parse_bibtex('@article{old, title={Ancient}, year={1850}}')
        assert result.records == []
        assert result.diagnostics

    def test_ml_domain_inferred(self):
        result = parse_bibtex(
            '@inproceedings{m, title={Deep Nets}, booktitle={Advances in Neural Information Processing Systems}, year={2018}}'
        )
        assert result.records[0].venue == "NeurIPS"
        assert result.records[0].domain == "ML"

    def test_abstract_and_authors_carried(self):
        result = parse_bibtex(
            '@inproceedings{n, title={T}, year={2018}, author={One, A. and Two, B.}, abstract={We do things.}}'
        )
        record = result.records[0]
        assert record.authors == ("One, A.", "Two, B.")
        assert record.abstract == "We do things."

    @given(st.text(max_size=300))
    @settings(max_examples=60, deadline=None)
    def test_never_crashes_and_respects_invariants(self, text):
        result = parse_bibtex(text)
        for record in result.records:
            assert record.title.strip()
            assert 1000 <= record.year <= 3000


class TestFilterPapers:
    def test_cl_1985_excluded_by_default(self):
        papers = [make_paper(id="cl85", venue="CL", year=1985)]
        assert filter_papers(papers, FilterRules()) == []

    def test_acl_1984_included_by_default(self):
        papers = [make_paper(id="acl84", venue="ACL", year=1984)]
        assert filter_papers(papers, FilterRules()) == papers

    def test_cl_1986_included(self):
        papers = [make_paper(id="cl86", venue="CL", year=1986)]
        assert filter_papers(papers, FilterRules()) == papers

    def test_book_review_excluded(self):
        papers = [
            make_paper(id="br", title="Book Review: Parsing in Theory"),
            make_paper(id="ok", title="Parsing in Practice"),
            make_paper(id="toc", title="Table of Contents, Volume 12"),
        ]
        kept = filter_papers(papers, FilterRules())
        assert [p.id for p in kept] == ["ok"]

    def test_volume_allowlist(self):
        papers = [
            make_paper(id="main", volume="1"),
            make_paper(id="ws", volume="W19"),
            make_paper(id="none", volume=None),
        ]
        kept = filter_papers(papers, FilterRules(included_volumes=frozenset({"1"})))
        assert [p.id for p in kept] == ["main"]

    def test_idempotent(self):
        rng = random.Random(7)
        papers = [
            make_paper(
                id=f"p{i}",
                year=rng.randint(1980, 2021),
                venue=rng.choice(corpus.KNOWN_VENUES),
                title=rng.choice(["Real Paper on Parsing", "Book Review: Stuff"]),
            )
            for i in range(200)
        ]
        rules = FilterRules()
        once = filter_papers(papers, rules)
        assert filter_papers(once, rules) == once

    def test_order_preserved(self):
        papers = [make_paper(id=f"p{i}", year=2000 + i % 5) for i in range(20)]
        kept = filter_papers(papers, FilterRules())
        assert kept == [p for p in papers if p in kept]

    def test_empty_pattern_rejected(self):
        with pytest.raises(ValueError):
            FilterRules(excluded_title_patterns=("",))


# Venue counts published for the two corpora; stats must reproduce them exactly.
NLP_TABLE = {
    "ACL": 6819, "EMNLP": 5013, "COLING": 4653, "NAACL": 2636,
    "SemEval": 2384, "CoNLL": 1033, "CL": 952, "TACL": 351,
}
ML_TABLE = {"NeurIPS": 7537, "AAAI": 4384, "ICML": 3667, "ICLR": 2720}


class TestCorpusStats:
    def _expand(self, table, domain):
        papers = []
        for venue, count in table.items():
            papers.extend(
                make_paper(id=f"{venue}-{i}", venue=venue, domain=domain, year=2000)
                for i in range(count)
            )
        return papers

    def test_nlp_table_counts(self):
        stats = corpus_stats(self._expand(NLP_TABLE, "NLP"))
        assert stats.per_venue_counts["ACL"] == 6819
        assert stats.per_venue_counts == NLP_TABLE
        assert stats.total == 23841

    def test_ml_table_counts(self):
        stats = corpus_stats(self._expand(ML_TABLE, "ML"))
        assert stats.per_venue_counts["NeurIPS"] == 7537
        assert stats.total == 18308

    def test_empty_corpus(self):
        stats = corpus_stats([])
        assert stats.total == 0
        assert stats.per_venue_counts == {}
        assert stats.missing_abstract_count == 0

    def test_venue_counts_sum_to_total(self):
        rng = random.Random(3)
        papers = [
            make_paper(
                id=f"p{i}",
                venue=rng.choice(corpus.KNOWN_VENUES),
                year=rng.randint(1990, 2021),
                abstract=rng.choice(["", "text"]),
            )
            for i in range(500)
        ]
        stats = corpus_stats(papers)
        assert sum(stats.per_venue_counts.values()) == stats.total == 500
        assert sum(stats.per_year_counts.values()) == 500
        assert stats.missing_abstract_count == sum(1 for p in papers if not p.abstract)


class TestPersistence:
    def test_single_record_round_trip(self, tmp_path):
        papers = [make_paper(stance=0.25, citation_count=3)]
        path = tmp_path / "c.jsonl"
        save_corpus(papers, path)
        assert load_corpus(path) == papers

    def test_large_random_round_trip(self, tmp_path):
        rng = random.Random(11)
        papers = []
        for i in range(2170):
            papers.append(
                make_paper(
                    id=f"paper-{i}",
                    title=f"Title number {i}",
                    year=rng.randint(1984, 2021),
                    venue=rng.choice(corpus.KNOWN_VENUES),
                    domain=rng.choice(corpus.DOMAINS),
                    abstract=rng.choice(["", f"Abstract {i} with words."]),
                    authors=tuple(f"Author {j}" for j in range(rng.randint(0, 3))),
                    volume=rng.choice([None, "1", "2"]),
                    citation_count=rng.choice([None, rng.randint(0, 500)]),
                    decision=rng.choice(corpus.DECISIONS),
                    stance=rng.choice([None, round(rng.uniform(-1, 1), 6)]),
                )
            )
        path = tmp_path / "c.jsonl"
        save_corpus(papers, path)
        assert load_corpus(path) == papers

    def test_corrupted_line_names_line_number(self, tmp_path):
        papers = [make_paper(id=f"p{i}") for i in range(5)]
        path = tmp_path / "c.jsonl"
        save_corpus(papers, path)
        lines = path.read_text().splitlines()
        lines[4] = '{"this is": not json'
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(CorpusFormatError, match="line 5"):
            load_corpus(path)

    def test_version_mismatch(self, tmp_path):
        path = tmp_path / "c.jsonl"
        path.write_text(json.dumps({"format": corpus.CORPUS_FORMAT, "version": 99}) + "\n")
        with pytest.raises(CorpusFormatError, match="line 1"):
            load_corpus(path)

    def test_wrong_format(self, tmp_path):
        path = tmp_path / "c.jsonl"
        path.write_text('{"format": "something-else", "version": 1}\n')
        with pytest.raises(CorpusFormatError):
            load_corpus(path)
