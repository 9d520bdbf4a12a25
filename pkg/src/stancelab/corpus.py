"""Paper metadata corpus: records, venue filtering, statistics, persistence."""

from __future__ import annotations

import dataclasses
import datetime
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from . import bibtex

DOMAIN_NLP = "NLP"
DOMAIN_ML = "ML"
DOMAINS = (DOMAIN_NLP, DOMAIN_ML)

DECISION_ACCEPTED = "accepted"
DECISION_REJECTED = "rejected"
DECISION_UNKNOWN = "unknown"
DECISIONS = (DECISION_ACCEPTED, DECISION_REJECTED, DECISION_UNKNOWN)

NLP_VENUES = ("ACL", "EMNLP", "COLING", "NAACL", "SemEval", "CoNLL", "CL", "TACL")
ML_VENUES = ("NeurIPS", "AAAI", "ICML", "ICLR")
OTHER_VENUE = "Other"
WORKSHOP_VENUE = "WS"
KNOWN_VENUES = NLP_VENUES + ML_VENUES + (WORKSHOP_VENUE, OTHER_VENUE)

MIN_RECORD_YEAR = 1960

CORPUS_FORMAT = "stance-corpus"
CORPUS_VERSION = 1


class CorpusError(Exception):
    pass


class CorpusFormatError(CorpusError):
    """A corpus file could not be read; the message names the offending line."""


@dataclass(frozen=True)
class PaperRecord:
    """One publication with optional enrichment fields.

    ``stance`` stays unset until filled by annotation or a scorer;
    ``citation_count`` stays unset until enrichment resolves it.
    """

    id: str
    title: str
    year: int
    venue: str = OTHER_VENUE
    domain: str = DOMAIN_NLP
    abstract: str = ""
    authors: tuple[str, ...] = ()
    volume: str | None = None
    citation_count: int | None = None
    decision: str = DECISION_UNKNOWN
    stance: float | None = None

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("paper id must be non-empty")
        if not self.title.strip():
            raise ValueError(f"{self.id}: title must be non-empty")
        current_year = datetime.date.today().year
        if not (MIN_RECORD_YEAR <= self.year <= current_year):
            raise ValueError(
                f"{self.id}: year {self.year} outside [{MIN_RECORD_YEAR}, {current_year}]"
            )
        if self.domain not in DOMAINS:
            raise ValueError(f"{self.id}: unknown domain {self.domain!r}")
        if self.decision not in DECISIONS:
            raise ValueError(f"{self.id}: unknown decision {self.decision!r}")
        if self.citation_count is not None and self.citation_count < 0:
            raise ValueError(f"{self.id}: negative citation count")
        if self.stance is not None:
            if not math.isfinite(self.stance) or not -1.0 <= self.stance <= 1.0:
                raise ValueError(f"{self.id}: stance {self.stance} outside [-1, 1]")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["authors"] = list(self.authors)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PaperRecord":
        d = dict(d)
        d["authors"] = tuple(d.get("authors") or ())
        return cls(**d)


DEFAULT_TITLE_FILTERS = ("book review", "title index", "table of contents")


@dataclass
class FilterRules:
    """Inclusion rules applied to a parsed corpus.

    Per-venue year minima override the global minimum for their venue.
    Title patterns are case-insensitive regexes (plain substrings work).
    """

    min_year_global: int = 1984
    min_year_per_venue: dict[str, int] = field(default_factory=lambda: {"CL": 1986})
    excluded_title_patterns: tuple[str, ...] = DEFAULT_TITLE_FILTERS
    included_volumes: frozenset[str] | None = None

    def __post_init__(self) -> None:
        for pattern in self.excluded_title_patterns:
            if not pattern:
                raise ValueError("title filter patterns must be non-empty")
        if self.included_volumes is not None:
            self.included_volumes = frozenset(self.included_volumes)

    def min_year_for(self, venue: str) -> int:
        return self.min_year_per_venue.get(venue, self.min_year_global)

    @classmethod
    def from_json_file(cls, path: str | Path) -> "FilterRules":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        volumes = data.get("included_volumes")
        return cls(
            min_year_global=data.get("min_year_global", 1984),
            min_year_per_venue=dict(data.get("min_year_per_venue", {"CL": 1986})),
            excluded_title_patterns=tuple(
                data.get("excluded_title_patterns", DEFAULT_TITLE_FILTERS)
            ),
            included_volumes=frozenset(volumes) if volumes is not None else None,
        )


@dataclass
class CorpusStats:
    per_venue_counts: dict[str, int]
    per_year_counts: dict[int, int]
    total: int
    missing_abstract_count: int


@dataclass
class ParseResult:
    records: list[PaperRecord]
    diagnostics: list[bibtex.Diagnostic]


# Ordered: specific venue names must win over substrings they contain
# (e.g. COLING/TACL before the CL journal, NAACL before ACL).
_VENUE_PATTERNS: tuple[tuple[str, re.Pattern[str]], ...] = tuple(
    (code, re.compile(pattern, re.IGNORECASE))
    for code, pattern in [
        ("SemEval", r"semeval|semantic evaluation"),
        ("CoNLL", r"\bconll\b|computational natural language learning"),
        ("NAACL", r"\bnaacl\b|north american chapter"),
        ("TACL", r"\btacl\b|transactions of the association for computational"),
        ("EMNLP", r"\bemnlp\b|empirical methods in natural language"),
        ("COLING", r"\bcoling\b|international conference on computational linguistics"),
        ("NeurIPS", r"neurips|\bnips\b|neural information processing"),
        ("ICML", r"\bicml\b|international conference on machine learning"),
        ("ICLR", r"\biclr\b|learning representations"),
        ("AAAI", r"\baaai\b"),
        ("ACL", r"\bacl\b|association for computational linguistics|annual meeting"),
        ("CL", r"^cl$|^computational linguistics$"),
        ("WS", r"\bws\b|workshop"),
    ]
)

_EXACT_VENUES = {code.lower(): code for code in KNOWN_VENUES}


def normalize_venue(raw: str) -> str:
    """Map a free-form venue string to one of the known venue codes."""
    text = raw.strip()
    if not text:
        return OTHER_VENUE
    exact = _EXACT_VENUES.get(text.lower())
    if exact:
        return exact
    for code, pattern in _VENUE_PATTERNS:
        if pattern.search(text):
            return code
    return OTHER_VENUE


def domain_for_venue(venue: str) -> str:
    return DOMAIN_ML if venue in ML_VENUES else DOMAIN_NLP


def parse_bibtex(text: str) -> ParseResult:
    """Parse concatenated BibTeX entries into paper records.

    Entries missing a usable title or year are skipped and reported in the
    diagnostics list; duplicate citation keys keep the first occurrence.
    """
    entries, diagnostics = bibtex.scan_entries(text)
    records: list[PaperRecord] = []
    seen_ids: set[str] = set()
    for entry in entries:
        title = bibtex.latex_to_text(entry.fields.get("title", ""))
        raw_year = entry.fields.get("year", "").strip()
        if not title:
            diagnostics.append(
                bibtex.Diagnostic(entry.line, entry.key, "missing title")
            )
            continue
        if not raw_year:
            diagnostics.append(bibtex.Diagnostic(entry.line, entry.key, "missing year"))
            continue
        try:
            year = int(raw_year)
        except ValueError:
            diagnostics.append(
                bibtex.Diagnostic(entry.line, entry.key, f"unparseable year {raw_year!r}")
            )
            continue
        if entry.key in seen_ids:
            diagnostics.append(
                bibtex.Diagnostic(entry.line, entry.key, "duplicate citation key")
            )
            continue
        raw_venue = (
            entry.fields.get("venue")
            or entry.fields.get("booktitle")
            or entry.fields.get("journal")
            or ""
        )
        venue = normalize_venue(bibtex.latex_to_text(raw_venue))
        authors = tuple(
            bibtex.latex_to_text(a)
            for a in re.split(r"\s+and\s+", entry.fields.get("author", ""))
            if a.strip()
        )
        abstract = bibtex.latex_to_text(entry.fields.get("abstract", ""))
        try:
            record = PaperRecord(
                id=entry.key,
                title=title,
                year=year,
                venue=venue,
                domain=domain_for_venue(venue),
                abstract=abstract,
                authors=authors,
                volume=entry.fields.get("volume") or None,
            )
        except ValueError as exc:
            diagnostics.append(bibtex.Diagnostic(entry.line, entry.key, str(exc)))
            continue
        seen_ids.add(entry.key)
        records.append(record)
    return ParseResult(records, diagnostics)


def filter_papers(
    records: Sequence[PaperRecord], rules: FilterRules
) -> list[PaperRecord]:
    """Apply year minima, title exclusions, and the volume allowlist."""
    patterns = [re.compile(p, re.IGNORECASE) for p in rules.excluded_title_patterns]
    kept: list[PaperRecord] = []
    for record in records:
        if record.year < rules.min_year_for(record.venue):
            continue
        if any(p.search(record.title) for p in patterns):
            continue
        if rules.included_volumes is not None:
            if record.volume is None or record.volume not in rules.included_volumes:
                continue
        kept.append(record)
    return kept


def corpus_stats(records: Sequence[PaperRecord]) -> CorpusStats:
    per_venue: dict[str, int] = {}
    per_year: dict[int, int] = {}
    missing_abstract = 0
    for record in records:
        per_venue[record.venue] = per_venue.get(record.venue, 0) + 1
        per_year[record.year] = per_year.get(record.year, 0) + 1
        if not record.abstract.strip():
            missing_abstract += 1
    return CorpusStats(
        per_venue_counts=per_venue,
        per_year_counts=per_year,
        total=len(records),
        missing_abstract_count=missing_abstract,
    )


def save_corpus(records: Iterable[PaperRecord], path: str | Path) -> None:
    """Write one JSON record per line under a schema-version header."""
    path = Path(path)
    header = {"format": CORPUS_FORMAT, "version": CORPUS_VERSION}
    with path.open("w", encoding="utf-8") as handle:
        handle.write(json.dumps(header) + "\n")
        for record in records:
            handle.write(json.dumps(record.to_dict(), ensure_ascii=False) + "\n")


def load_corpus(path: str | Path) -> list[PaperRecord]:
    """Inverse of :func:`save_corpus`; errors name the offending line."""
    path = Path(path)
    records: list[PaperRecord] = []
    seen: set[str] = set()
    with path.open("r", encoding="utf-8") as handle:
        header_line = handle.readline()
        if not header_line.strip():
            raise CorpusFormatError(f"{path}: line 1: missing corpus header")
        try:
            header = json.loads(header_line)
        except json.JSONDecodeError as exc:
            raise CorpusFormatError(f"{path}: line 1: unreadable header: {exc}") from exc
        if not isinstance(header, dict) or header.get("format") != CORPUS_FORMAT:
            raise CorpusFormatError(f"{path}: line 1: not a {CORPUS_FORMAT} file")
        if header.get("version") != CORPUS_VERSION:
            raise CorpusFormatError(
                f"{path}: line 1: unsupported schema version {header.get('version')!r}"
            )
        for lineno, line in enumerate(handle, start=2):
            if not line.strip():
                continue
            try:
                record = PaperRecord.from_dict(json.loads(line))
            except (json.JSONDecodeError, TypeError, ValueError) as exc:
                raise CorpusFormatError(f"{path}: line {lineno}: {exc}") from exc
            if record.id in seen:
                raise CorpusFormatError(
                    f"{path}: line {lineno}: duplicate paper id {record.id!r}"
                )
            seen.add(record.id)
            records.append(record)
    return records
