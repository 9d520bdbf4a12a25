"""Stance annotations: storage, aggregation, agreement statistics, sampling."""

from __future__ import annotations

import json
import math
import random
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import PaperRecord

POSITIVE = "positive"
NEGATIVE = "negative"
NEUTRAL = "neutral"
COARSE_CLASSES = (POSITIVE, NEGATIVE, NEUTRAL)

POSITIVE_THRESHOLD = 0.1
NEGATIVE_THRESHOLD = -0.1


class UnlabeledPaperError(Exception):
    pass


class QueueExhaustedError(Exception):
    pass


class UndefinedMetricError(Exception):
    """A statistic is mathematically undefined on the given inputs."""


def coarsen(stance: float) -> str:
    """Project a continuous stance onto the three coarse classes.

    The boundaries are inclusive: +0.1 is already positive and -0.1 is
    already negative; only the open interval between them is neutral.
    """
    if not math.isfinite(stance) or not -1.0 <= stance <= 1.0:
        raise ValueError(f"stance {stance} outside [-1, 1]")
    if stance >= POSITIVE_THRESHOLD:
        return POSITIVE
    if stance <= NEGATIVE_THRESHOLD:
        return NEGATIVE
    return NEUTRAL


@dataclass(frozen=True)
class AnnotationRecord:
    paper_id: str
    annotator_id: str
    stance: float
    created_at: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.stance) or not -1.0 <= self.stance <= 1.0:
            raise ValueError(f"stance {self.stance} outside [-1, 1]")

    def to_dict(self) -> dict:
        return {
            "paper_id": self.paper_id,
            "annotator_id": self.annotator_id,
            "stance": self.stance,
            "created_at": self.created_at,
        }


@dataclass(frozen=True)
class AggregatedLabel:
    paper_id: str
    mean_stance: float
    n_annotators: int
    coarse: str


def aggregate(annotations: Sequence[AnnotationRecord]) -> AggregatedLabel:
    """Average one paper's annotations into its consensus label."""
    if not annotations:
        raise UnlabeledPaperError("no annotations to aggregate")
    paper_ids = {a.paper_id for a in annotations}
    if len(paper_ids) != 1:
        raise ValueError(f"annotations span multiple papers: {sorted(paper_ids)}")
    mean = sum(a.stance for a in annotations) / len(annotations)
    return AggregatedLabel(
        paper_id=annotations[0].paper_id,
        mean_stance=mean,
        n_annotators=len(annotations),
        coarse=coarsen(mean),
    )


def pearson(a: Sequence[float], b: Sequence[float]) -> float:
    """Sample Pearson correlation.

    Raises :class:`UndefinedMetricError` when either vector is constant
    instead of propagating a NaN.
    """
    if len(a) != len(b):
        raise ValueError("vectors differ in length")
    n = len(a)
    if n < 2:
        raise ValueError("correlation needs at least 2 points")
    mean_a = sum(a) / n
    mean_b = sum(b) / n
    sxx = sum((x - mean_a) ** 2 for x in a)
    syy = sum((y - mean_b) ** 2 for y in b)
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedMetricError("undefined correlation: constant vector")
    sxy = sum((x - mean_a) * (y - mean_b) for x, y in zip(a, b))
    return sxy / math.sqrt(sxx * syy)


def cohen_kappa(a: Sequence[str], b: Sequence[str]) -> float:
    """Unweighted Cohen's kappa over the three coarse classes.

    Chance agreement uses the two labelings' own marginals; the degenerate
    p_e = 1 case (both marginals concentrated on one shared class) forces
    p_o = 1 and is defined as kappa = 1.
    """
    if len(a) != len(b):
        raise ValueError("labelings differ in length")
    if not a:
        raise ValueError("kappa needs at least 1 item")
    for label in (*a, *b):
        if label not in COARSE_CLASSES:
            raise ValueError(f"unknown coarse class {label!r}")
    n = len(a)
    observed = sum(1 for x, y in zip(a, b) if x == y) / n
    expected = sum(
        (sum(1 for x in a if x == c) / n) * (sum(1 for y in b if y == c) / n)
        for c in COARSE_CLASSES
    )
    if expected >= 1.0:
        return 1.0
    return (observed - expected) / (1.0 - expected)


@dataclass
class AgreementReport:
    pairwise_pearson: dict[tuple[str, str], tuple[float, int]]
    pairwise_kappa: dict[tuple[str, str], tuple[float, int]]
    coverage_histogram: dict[int, int]
    omitted_pairs: list[tuple[tuple[str, str], str]]


class AnnotationStore:
    """Per-(paper, annotator) stance store with overwrite semantics.

    Submissions append to an optional line-delimited log; in memory the
    latest record wins, where "latest" orders by (created_at, stance) so a
    log replayed in any order reconstructs the same store.
    """

    def __init__(self, log_path: str | Path | None = None) -> None:
        self._records: dict[tuple[str, str], AnnotationRecord] = {}
        self._lock = threading.RLock()
        self._log_path = Path(log_path) if log_path else None
        self._log_handle = None
        if self._log_path is not None:
            if self._log_path.exists():
                for record in read_log(self._log_path):
                    self._apply(record)
            self._log_handle = self._log_path.open("a", encoding="utf-8")

    def _apply(self, record: AnnotationRecord) -> bool:
        key = (record.paper_id, record.annotator_id)
        current = self._records.get(key)
        if current is not None:
            if (record.created_at, record.stance) < (current.created_at, current.stance):
                return False
        self._records[key] = record
        return current is not None

    def submit(
        self,
        paper_id: str,
        annotator_id: str,
        stance: float,
        created_at: float | None = None,
    ) -> tuple[AnnotationRecord, bool]:
        """Record one judgment; returns (record, overwrote_existing)."""
        record = AnnotationRecord(
            paper_id=paper_id,
            annotator_id=annotator_id,
            stance=stance,
            created_at=time.time() if created_at is None else created_at,
        )
        with self._lock:
            overwrote = self._apply(record)
            if self._log_handle is not None:
                self._log_handle.write(json.dumps(record.to_dict()) + "\n")
                self._log_handle.flush()
        return record, overwrote

    def close(self) -> None:
        with self._lock:
            if self._log_handle is not None:
                self._log_handle.close()
                self._log_handle = None

    def __len__(self) -> int:
        with self._lock:
            return len(self._records)

    def snapshot(self) -> dict[tuple[str, str], AnnotationRecord]:
        with self._lock:
            return dict(self._records)

    def annotations_for(self, paper_id: str) -> list[AnnotationRecord]:
        with self._lock:
            found = [r for r in self._records.values() if r.paper_id == paper_id]
        return sorted(found, key=lambda r: r.annotator_id)

    def aggregate(self, paper_id: str) -> AggregatedLabel:
        annotations = self.annotations_for(paper_id)
        if not annotations:
            raise UnlabeledPaperError(f"paper {paper_id!r} has no annotations")
        return aggregate(annotations)

    def aggregate_all(self) -> dict[str, AggregatedLabel]:
        by_paper: dict[str, list[AnnotationRecord]] = {}
        for record in self.snapshot().values():
            by_paper.setdefault(record.paper_id, []).append(record)
        return {pid: aggregate(records) for pid, records in sorted(by_paper.items())}

    def annotators(self) -> list[str]:
        with self._lock:
            return sorted({r.annotator_id for r in self._records.values()})

    def papers_labeled_by(self, annotator_id: str) -> set[str]:
        with self._lock:
            return {
                pid for (pid, aid) in self._records.keys() if aid == annotator_id
            }

    def labels_of(self, annotator_id: str) -> dict[str, float]:
        with self._lock:
            return {
                pid: record.stance
                for (pid, aid), record in self._records.items()
                if aid == annotator_id
            }


def read_log(path: str | Path) -> list[AnnotationRecord]:
    records = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        d = json.loads(line)
        records.append(
            AnnotationRecord(
                paper_id=d["paper_id"],
                annotator_id=d["annotator_id"],
                stance=d["stance"],
                created_at=d["created_at"],
            )
        )
    return records


def replay_log(records: Iterable[AnnotationRecord]) -> AnnotationStore:
    """Rebuild a store from log records, independent of their order."""
    store = AnnotationStore()
    for record in records:
        store.submit(
            record.paper_id,
            record.annotator_id,
            record.stance,
            created_at=record.created_at,
        )
    return store


def agreement_report(store: AnnotationStore) -> AgreementReport:
    """Pairwise Pearson/kappa over co-annotated papers, plus coverage.

    Kappa compares the two annotators' individually coarsened labels.
    Pairs with fewer than 2 common papers (or an undefined correlation)
    are omitted and listed with the reason.
    """
    snapshot = store.snapshot()
    by_annotator: dict[str, dict[str, float]] = {}
    per_paper_count: dict[str, int] = {}
    for (paper_id, annotator_id), record in snapshot.items():
        by_annotator.setdefault(annotator_id, {})[paper_id] = record.stance
        per_paper_count[paper_id] = per_paper_count.get(paper_id, 0) + 1

    coverage: dict[int, int] = {}
    for count in per_paper_count.values():
        coverage[count] = coverage.get(count, 0) + 1

    pearson_map: dict[tuple[str, str], tuple[float, int]] = {}
    kappa_map: dict[tuple[str, str], tuple[float, int]] = {}
    omitted: list[tuple[tuple[str, str], str]] = []
    annotators = sorted(by_annotator)
    for i, first in enumerate(annotators):
        for second in annotators[i + 1 :]:
            pair = (first, second)
            common = sorted(set(by_annotator[first]) & set(by_annotator[second]))
            if len(common) < 2:
                omitted.append((pair, f"only {len(common)} common papers"))
                continue
            a = [by_annotator[first][pid] for pid in common]
            b = [by_annotator[second][pid] for pid in common]
            kappa_map[pair] = (
                cohen_kappa([coarsen(x) for x in a], [coarsen(y) for y in b]),
                len(common),
            )
            try:
                pearson_map[pair] = (pearson(a, b), len(common))
            except UndefinedMetricError as exc:
                omitted.append((pair, f"pearson: {exc}"))
    return AgreementReport(
        pairwise_pearson=pearson_map,
        pairwise_kappa=kappa_map,
        coverage_histogram=coverage,
        omitted_pairs=omitted,
    )


@dataclass
class SamplerConfig:
    """Controls the negativity-oversampling annotation queue."""

    negative_keywords: tuple[str, ...] = ("fail", "limitation")
    oversample_weight: float = 3.0
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if not math.isfinite(self.oversample_weight) or self.oversample_weight < 1.0:
            raise ValueError("oversample_weight must be finite and >= 1")
        if self.oversample_weight > 1.0 and not self.negative_keywords:
            raise ValueError("oversampling enabled but keyword list is empty")


def keyword_hit(paper: PaperRecord, keywords: Sequence[str]) -> bool:
    haystack = f"{paper.title}\n{paper.abstract}".lower()
    return any(k.lower() in haystack for k in keywords)


def sample_next(
    pool: Sequence[PaperRecord],
    config: SamplerConfig,
    rng: random.Random | None = None,
) -> PaperRecord:
    """Draw one paper, oversampling keyword hits by the configured weight."""
    if not pool:
        raise QueueExhaustedError("annotation pool is empty")
    if rng is None:
        rng = random.Random(config.rng_seed)
    weights = [
        config.oversample_weight if keyword_hit(p, config.negative_keywords) else 1.0
        for p in pool
    ]
    return rng.choices(pool, weights=weights, k=1)[0]


class StanceSampler:
    """Stateful sampler: fixed seed and pool order give a fixed draw sequence."""

    def __init__(self, config: SamplerConfig) -> None:
        self.config = config
        self._rng = random.Random(config.rng_seed)

    def next(self, pool: Sequence[PaperRecord]) -> PaperRecord:
        return sample_next(pool, self.config, rng=self._rng)
