"""Citation-count enrichment from a local fixture table or a live HTTP API."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

from .corpus import PaperRecord


class CitationLookupError(Exception):
    """A lookup failed after the retry budget was exhausted."""


class CitationSource(Protocol):
    def lookup(self, paper_id: str) -> int | None:
        """Citation count for ``paper_id``, or None when unresolvable."""
        ...


class FixtureCitationSource:
    """id<TAB>count table loaded from a line-delimited text file."""

    def __init__(self, path: str | Path) -> None:
        self._counts: dict[str, int] = {}
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip() or line.startswith("#"):
                continue
            try:
                paper_id, raw = line.split("\t")
                self._counts[paper_id] = int(raw)
            except ValueError as exc:
                raise CitationLookupError(f"{path}: line {lineno}: bad fixture row") from exc

    def lookup(self, paper_id: str) -> int | None:
        return self._counts.get(paper_id)


class _RateLimiter:
    """Blocks callers so requests never exceed the configured rate."""

    def __init__(self, requests_per_second: float) -> None:
        self._interval = 1.0 / requests_per_second if requests_per_second > 0 else 0.0
        self._lock = threading.Lock()
        self._next_ok = 0.0

    def wait(self) -> None:
        if self._interval <= 0:
            return
        with self._lock:
            now = time.monotonic()
            delay = self._next_ok - now
            self._next_ok = max(now, self._next_ok) + self._interval
        if delay > 0:
            time.sleep(delay)


class HttpCitationSource:
    """GET ``{base_url}/{paper_id}`` expecting ``{"citationCount": n}``.

    Responses are cached on disk keyed by paper id; 404 means unresolvable
    (cached as null), transient failures are retried with backoff.
    """

    def __init__(
        self,
        base_url: str,
        api_key: str | None = None,
        requests_per_second: float = 5.0,
        cache_dir: str | Path | None = None,
        max_retries: int = 3,
        timeout: float = 10.0,
    ) -> None:
        import httpx

        self._client = httpx.Client(timeout=timeout)
        self._base_url = base_url.rstrip("/")
        self._headers = {"x-api-key": api_key} if api_key else {}
        self._limiter = _RateLimiter(requests_per_second)
        self._cache_dir = Path(cache_dir) if cache_dir else None
        self._max_retries = max_retries
        if self._cache_dir:
            self._cache_dir.mkdir(parents=True, exist_ok=True)

    def _cache_path(self, paper_id: str) -> Path | None:
        if not self._cache_dir:
            return None
        digest = hashlib.sha256(paper_id.encode("utf-8")).hexdigest()[:24]
        return self._cache_dir / f"{digest}.json"

    def lookup(self, paper_id: str) -> int | None:
        import httpx

        cache_path = self._cache_path(paper_id)
        if cache_path and cache_path.exists():
            return json.loads(cache_path.read_text(encoding="utf-8"))["count"]
        last_error: Exception | None = None
        for attempt in range(self._max_retries):
            self._limiter.wait()
            try:
                response = self._client.get(
                    f"{self._base_url}/{paper_id}", headers=self._headers
                )
            except httpx.HTTPError as exc:
                last_error = exc
                time.sleep(min(2.0**attempt * 0.1, 2.0))
                continue
            if response.status_code == 404:
                count = None
            elif response.status_code >= 500 or response.status_code == 429:
                last_error = CitationLookupError(
                    f"{paper_id}: HTTP {response.status_code}"
                )
                time.sleep(min(2.0**attempt * 0.1, 2.0))
                continue
            else:
                response.raise_for_status()
                count = response.json().get("citationCount")
            if cache_path:
                cache_path.write_text(json.dumps({"count": count}), encoding="utf-8")
            return count
        raise CitationLookupError(f"{paper_id}: {last_error}")


@dataclass
class EnrichmentReport:
    resolved: int = 0
    unresolved_ids: list[str] = field(default_factory=list)
    failures: list[tuple[str, str]] = field(default_factory=list)


def enrich_citations(
    records: Sequence[PaperRecord],
    source: CitationSource,
    max_workers: int = 1,
) -> tuple[list[PaperRecord], EnrichmentReport]:
    """Attach citation counts where the source resolves them.

    Lookup failures skip the record (reported, never fatal). Results merge
    deterministically by paper id regardless of worker scheduling.
    """
    report = EnrichmentReport()
    counts: dict[str, int] = {}

    def fetch(paper_id: str) -> tuple[str, int | None, str | None]:
        try:
            return paper_id, source.lookup(paper_id), None
        except CitationLookupError as exc:
            return paper_id, None, str(exc)

    ids = [r.id for r in records]
    if max_workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            outcomes = list(pool.map(fetch, ids))
    else:
        outcomes = [fetch(paper_id) for paper_id in ids]

    for paper_id, count, error in sorted(outcomes, key=lambda o: o[0]):
        if error is not None:
            report.failures.append((paper_id, error))
        elif count is None:
            report.unresolved_ids.append(paper_id)
        else:
            counts[paper_id] = count
            report.resolved += 1

    enriched = [
        dataclasses.replace(r, citation_count=counts[r.id]) if r.id in counts else r
        for r in records
    ]
    return enriched, report
