"""Lenient BibTeX reader for venue metadata dumps.

Understands the common entry shape ``@type{key, field = value, ...}`` with
brace-delimited, quoted, or bare field values. Malformed entries never abort
a parse; they surface as :class:`Diagnostic` items instead. LaTeX markup in
field values is flattened to plain text.
"""

from __future__ import annotations

import bisect
import re
import unicodedata
from dataclasses import dataclass


@dataclass
class Diagnostic:
    """Why an entry (or part of one) was skipped."""

    line: int
    key: str | None
    reason: str

    def __str__(self) -> str:
        where = f"line {self.line}"
        if self.key:
            where += f" ({self.key})"
        return f"{where}: {self.reason}"


@dataclass
class RawEntry:
    """One syntactic entry before any semantic checks."""

    entry_type: str
    key: str
    fields: dict[str, str]
    line: int


# @string/@preamble/@comment carry no paper metadata.
_NON_PAPER_TYPES = frozenset({"string", "preamble", "comment"})

_TYPE_RE = re.compile(r"@\s*([A-Za-z]+)\s*([{(])")
_FIELD_NAME_RE = re.compile(r"\s*([A-Za-z][\w-]*)\s*=\s*")


class _LineIndex:
    def __init__(self, text: str) -> None:
        self._starts = [m.start() for m in re.finditer(r"\n", text)]

    def line_of(self, pos: int) -> int:
        return bisect.bisect_right(self._starts, pos - 1) + 1


def scan_entries(text: str) -> tuple[list[RawEntry], list[Diagnostic]]:
    """Split concatenated BibTeX source into raw entries.

    Non-paper directives (@string, @comment, @preamble) are silently
    skipped; structurally broken entries produce diagnostics.
    """
    lines = _LineIndex(text)
    entries: list[RawEntry] = []
    diagnostics: list[Diagnostic] = []
    pos = 0
    while True:
        at = text.find("@", pos)
        if at < 0:
            break
        match = _TYPE_RE.match(text, at)
        if not match:
            pos = at + 1
            continue
        entry_type = match.group(1).lower()
        opener = match.group(2)
        closer = "}" if opener == "{" else ")"
        body_start = match.end()
        body_end = _find_balanced_end(text, body_start, opener, closer)
        if body_end < 0:
            diagnostics.append(
                Diagnostic(lines.line_of(at), None, "unterminated entry")
            )
            pos = at + 1
            continue
        pos = body_end + 1
        if entry_type in _NON_PAPER_TYPES:
            continue
        body = text[body_start:body_end]
        entry, problem = _parse_body(entry_type, body, lines.line_of(at))
        if problem is not None:
            diagnostics.append(problem)
        if entry is not None:
            entries.append(entry)
    return entries, diagnostics


def _find_balanced_end(text: str, start: int, opener: str, closer: str) -> int:
    """Index of the closer matching the already-consumed opener, or -1."""
    depth = 1
    brace_depth = 0
    i = start
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "{":
            brace_depth += 1
            if opener == "{":
                depth += 1
        elif ch == "}":
            if brace_depth > 0:
                brace_depth -= 1
            if opener == "{":
                depth -= 1
                if depth == 0:
                    return i
        elif ch == closer and opener == "(" and brace_depth == 0:
            depth -= 1
            if depth == 0:
                return i
        i += 1
    return -1


def _parse_body(
    entry_type: str, body: str, line: int
) -> tuple[RawEntry | None, Diagnostic | None]:
    comma = body.find(",")
    if comma < 0:
        key = body.strip()
        if not key:
            return None, Diagnostic(line, None, "entry without citation key")
        return RawEntry(entry_type, key, {}, line), None
    key = body[:comma].strip()
    if not key:
        return None, Diagnostic(line, None, "entry without citation key")
    fields: dict[str, str] = {}
    rest = body[comma + 1 :]
    i = 0
    n = len(rest)
    problem: Diagnostic | None = None
    while i < n:
        match = _FIELD_NAME_RE.match(rest, i)
        if not match:
            if rest[i:].strip(" ,\t\r\n"):
                problem = Diagnostic(line, key, "unparseable field text ignored")
            break
        name = match.group(1).lower()
        value, i = _read_value(rest, match.end())
        if value is None:
            problem = Diagnostic(line, key, f"malformed value for field '{name}'")
            break
        fields[name] = value
        while i < n and rest[i] in ", \t\r\n":
            i += 1
    return RawEntry(entry_type, key, fields, line), problem


def _read_value(text: str, i: int) -> tuple[str | None, int]:
    """Read one field value (brace group, quoted string, or bare token).

    Handles '#' concatenation by joining the pieces.
    """
    parts: list[str] = []
    n = len(text)
    while True:
        while i < n and text[i] in " \t\r\n":
            i += 1
        if i >= n:
            break
        ch = text[i]
        if ch == "{":
            depth = 1
            j = i + 1
            while j < n and depth > 0:
                if text[j] == "{":
                    depth += 1
                elif text[j] == "}":
                    depth -= 1
                j += 1
            if depth != 0:
                return None, n
            parts.append(text[i + 1 : j - 1])
            i = j
        elif ch == '"':
            j = i + 1
            depth = 0
            while j < n:
                if text[j] == "{":
                    depth += 1
                elif text[j] == "}":
                    depth -= 1
                elif text[j] == '"' and depth == 0:
                    break
                j += 1
            if j >= n:
                return None, n
            parts.append(text[i + 1 : j])
            i = j + 1
        else:
            j = i
            while j < n and text[j] not in ",#\r\n":
                j += 1
            parts.append(text[i:j].strip())
            i = j
        while i < n and text[i] in " \t\r\n":
            i += 1
        if i < n and text[i] == "#":
            i += 1
            continue
        break
    return "".join(parts), i


# --- LaTeX flattening ---

_ACCENT_COMBINING = {
    "`": "\u0300",
    "'": "\u0301",
    "^": "\u0302",
    "~": "\u0303",
    "=": "\u0304",
    "u": "\u0306",
    ".": "\u0307",
    '"': "\u0308",
    "r": "\u030a",
    "H": "\u030b",
    "v": "\u030c",
    "c": "\u0327",
    "k": "\u0328",
    "d": "\u0323",
    "b": "\u0331",
}

_SPECIAL_GLYPHS = {
    "ss": "ß",
    "ae": "æ",
    "AE": "Æ",
    "oe": "œ",
    "OE": "Œ",
    "aa": "å",
    "AA": "Å",
    "o": "ø",
    "O": "Ø",
    "l": "ł",
    "L": "Ł",
    "i": "ı",
}

_ACCENT_RE = re.compile(
    r"\\([`'^\"~=.uvHckdbr])\s*(?:\{\\?([A-Za-z])\}|\\?([A-Za-z]))"
)
_GLYPH_RE = re.compile(r"\\(ss|ae|AE|oe|OE|aa|AA|o|O|l|L|i)(?![A-Za-z])\s*")
_WRAPPER_RE = re.compile(
    r"\\(?:emph|textit|textbf|texttt|textsc|textrm|textsf|mbox|hbox|url|text)\s*\{"
)
_COMMAND_RE = re.compile(r"\\[A-Za-z]+\s*")


def latex_to_text(value: str) -> str:
    """Flatten LaTeX-ish BibTeX field text to plain unicode."""
    s = value
    s = s.replace("\\&", "&").replace("\\%", "%").replace("\\_", "_")
    s = s.replace("\\#", "#").replace("\\$", "$")
    s = _ACCENT_RE.sub(_apply_accent, s)
    s = _GLYPH_RE.sub(lambda m: _SPECIAL_GLYPHS[m.group(1)], s)
    s = _WRAPPER_RE.sub("{", s)
    s = _COMMAND_RE.sub(" ", s)
    s = s.replace("``", '"').replace("''", '"').replace("`", "'")
    s = s.replace("---", "-").replace("--", "-")
    s = s.replace("~", " ")
    s = s.replace("{", "").replace("}", "").replace("$", "")
    s = re.sub(r"\s+", " ", s).strip()
    return unicodedata.normalize("NFC", s)


def _apply_accent(match: re.Match[str]) -> str:
    accent = match.group(1)
    base = match.group(2) or match.group(3)
    return unicodedata.normalize("NFC", base + _ACCENT_COMBINING[accent])
