from stancelab import bibtex


SAMPLE = """
@inproceedings{smith-2019-probing,
    title = "Probing {N}eural {N}etwork Comprehension of Natural Language Arguments",
    author = "Smith, Jane  and  Doe, John",
    booktitle = "Proceedings of the 57th Annual Meeting of the Association for Computational Linguistics",
    year = "2019",
    pages = "4658--4664",
}

@article{jones-1992-cl,
  title   = {The {S}tructure of Shared Forests in Ambiguous Parsing},
  author  = {Jones, Alice},
  journal = {Computational Linguistics},
  volume  = {18},
  year    = {1992}
}
"""


def test_scan_two_entries():
    entries, diagnostics = bibtex.scan_entries(SAMPLE)
    assert [e.key for e in entries] == ["smith-2019-probing", "jones-1992-cl"]
    assert diagnostics == []
    first = entries[0]
    assert first.entry_type == "inproceedings"
    assert first.fields["year"] == "2019"
    assert "Comprehension" in first.fields["title"]


def test_scan_skips_directives_and_reports_breakage():
    text = "@comment{nothing to see}\n@string{acl = \"ACL\"}\n@inproceedings{ok,\n title={T}, year={2001}}\n@article{broken, title={unclosed"
    entries, diagnostics = bibtex.scan_entries(text)
    assert [e.key for e in entries] == ["ok"]
    assert len(diagnostics) == 1
    assert "unterminated" in diagnostics[0].reason


def test_scan_empty_input():
    entries, diagnostics = bibtex.scan_entries("")
    assert entries == []
    assert diagnostics == []


def test_nested_braces_and_quotes():
    text = '@inproceedings{k1, title = {A {Nested {Deep}} Title}, note = "quoted {brace} value", year = {2000}}'
    entries, _ = bibtex.scan_entries(text)
    assert entries[0].fields["title"] == "A {Nested {Deep}} Title"
    assert entries[0].fields["note"] == "quoted {brace} value"


def test_concatenated_string_values():
    text = '@article{k2, title = "part one" # " and two", year = {1999}}'
    entries, _ = bibtex.scan_entries(text)
    assert entries[0].fields["title"] == "part one and two"


def test_parenthesized_entry():
    text = "@article(k3, title = {Parens Work Too}, year = {1998})"
    entries, _ = bibtex.scan_entries(text)
    assert entries[0].key == "k3"
    assert entries[0].fields["title"] == "Parens Work Too"


def test_diagnostic_line_numbers():
    text = "\n\n\n@article{k4, title = {unclosed"
    _, diagnostics = bibtex.scan_entries(text)
    assert diagnostics[0].line == 4


class TestLatexToText:
    def test_brace_removal(self):
        assert bibtex.latex_to_text("{BERT} Rediscovers the {NLP} Pipeline") == (
            "BERT Rediscovers the NLP Pipeline"
        )

    def test_accents(self):
        assert bibtex.latex_to_text(r"S\'emantique et {\'e}valuation") == "Sémantique et évaluation"
        assert bibtex.latex_to_text(r"M\"uller and G\~ao") == "Müller and Gão"
        assert bibtex.latex_to_text(r"Fran\c{c}ois") == "François"

    def test_special_glyphs(self):
        assert bibtex.latex_to_text(r"G\o{}del \ss{} \ae{}on") == "Gødel ß æon"

    def test_wrappers_and_commands(self):
        assert bibtex.latex_to_text(r"\emph{Fast} \textbf{and} \textsc{Accurate}") == (
            "Fast and Accurate"
        )

    def test_quotes_dashes_math(self):
        assert bibtex.latex_to_text("``quoted'' -- twice --- thrice") == '"quoted" - twice - thrice'
        assert bibtex.latex_to_text("$O(n)$ bound") == "O(n) bound"

    def test_escaped_specials(self):
        assert bibtex.latex_to_text(r"P \& R: 95\% of F\_1") == "P & R: 95% of F_1"

    def test_whitespace_collapse(self):
        assert bibtex.latex_to_text("too   much\n  space") == "too much space"
