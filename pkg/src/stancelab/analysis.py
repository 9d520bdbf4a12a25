"""Corpus-wide trend computations over scored papers.

Everything here is pure over an immutable snapshot: stance distributions,
yearly trend series with bootstrap confidence intervals, per-venue
negativity, citation normalization by publication year, acceptance-rate
breakdowns, and Gaussian smoothing of yearly aggregates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .annotation import NEGATIVE, POSITIVE, coarsen
from .corpus import DECISION_ACCEPTED, DECISION_REJECTED, PaperRecord

DEFAULT_BIN_WIDTH = 0.1
DEFAULT_SIGMA = 1.0
DEFAULT_CI_LEVEL = 0.95
DEFAULT_RESAMPLES = 1000

# Default acceptance-rate comparison: earlier vs. recent submission years.
DEFAULT_TIME_SPANS = ((2007, 2014), (2015, 2021))


class UnscoredPapersError(Exception):
    def __init__(self, ids: Sequence[str]) -> None:
        shown = ", ".join(ids[:5])
        more = f" (+{len(ids) - 5} more)" if len(ids) > 5 else ""
        super().__init__(f"{len(ids)} papers lack stance scores: {shown}{more}")
        self.ids = list(ids)


def _require_scored(papers: Sequence[PaperRecord]) -> None:
    missing = [p.id for p in papers if p.stance is None]
    if missing:
        raise UnscoredPapersError(missing)


def _filter_domain(
    papers: Sequence[PaperRecord], domain: str | None
) -> list[PaperRecord]:
    if domain is None:
        return list(papers)
    return [p for p in papers if p.domain == domain]


# --- Bootstrap confidence intervals ---


def bootstrap_ci(
    values: Sequence[float],
    level: float = DEFAULT_CI_LEVEL,
    n_resamples: int = DEFAULT_RESAMPLES,
    seed: int = 0,
) -> tuple[float, float]:
    """Seeded percentile bootstrap interval for the mean.

    The interval is widened to include the sample mean itself when heavy
    skew pushes both percentile bounds past it, keeping low <= mean <= high.
    """
    if len(values) < 2:
        raise ValueError("bootstrap CI needs at least 2 values")
    if not 0.0 < level < 1.0:
        raise ValueError("level must be in (0, 1)")
    data = np.asarray(values, dtype=np.float64)
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, len(data), size=(n_resamples, len(data)))
    means = data[idx].mean(axis=1)
    alpha = (1.0 - level) / 2.0
    low, high = np.quantile(means, [alpha, 1.0 - alpha])
    point = float(data.mean())
    return min(float(low), point), max(float(high), point)


def _point_ci(
    values: Sequence[float], level: float, n_resamples: int, seed: int
) -> tuple[float, float]:
    if len(values) == 1:
        return float(values[0]), float(values[0])
    return bootstrap_ci(values, level=level, n_resamples=n_resamples, seed=seed)


# --- Stance bins ---


def stance_bin_edges(bin_width: float = DEFAULT_BIN_WIDTH) -> list[tuple[float, float]]:
    n_bins = int(round(2.0 / bin_width))
    return [(-1.0 + i * bin_width, -1.0 + (i + 1) * bin_width) for i in range(n_bins)]


def stance_bin_index(stance: float, bin_width: float = DEFAULT_BIN_WIDTH) -> int:
    """Bin a stance into left-closed bins over [-1, 1]; +1.0 joins the last bin."""
    if not -1.0 <= stance <= 1.0:
        raise ValueError(f"stance {stance} outside [-1, 1]")
    n_bins = int(round(2.0 / bin_width))
    # Small slack keeps exact boundaries (e.g. -0.1) in their own bin.
    return min(int(math.floor((stance + 1.0) / bin_width + 1e-9)), n_bins - 1)


# --- Result containers ---


@dataclass
class StanceHistogram:
    bin_edges: list[tuple[float, float]]
    counts: list[int]
    shares: list[float]
    total: int
    share_negative: float
    share_high_positive: float  # stance >= 0.6

    def to_rows(self) -> list[dict]:
        return [
            {
                "bin_low": lo,
                "bin_high": hi,
                "count": c,
                "share": s,
            }
            for (lo, hi), c, s in zip(self.bin_edges, self.counts, self.shares)
        ]


@dataclass
class TimePoint:
    value: float | None
    ci_low: float | None
    ci_high: float | None
    n: int


@dataclass
class TimeSeries:
    """Yearly aggregates over a contiguous year range; n=0 marks gaps."""

    points: dict[int, TimePoint]
    sigma: float
    smoothed: dict[int, float] = field(default_factory=dict)

    def years(self) -> list[int]:
        return sorted(self.points)

    def values(self) -> dict[int, float]:
        return {
            y: p.value for y, p in self.points.items() if p.value is not None
        }

    def to_rows(self, group: str = "") -> list[dict]:
        rows = []
        for year in self.years():
            p = self.points[year]
            rows.append(
                {
                    "group": group,
                    "year": year,
                    "value": p.value,
                    "ci_low": p.ci_low,
                    "ci_high": p.ci_high,
                    "n": p.n,
                    "smoothed": self.smoothed.get(year),
                }
            )
        return rows


@dataclass
class BinStat:
    bin_low: float
    bin_high: float
    mean: float | None
    ci_low: float | None
    ci_high: float | None
    n: int


@dataclass
class BinnedStat:
    bins: list[BinStat]
    excluded_years: list[tuple[int, str, int]]
    missing_value_count: int

    def to_rows(self) -> list[dict]:
        return [
            {
                "bin_low": b.bin_low,
                "bin_high": b.bin_high,
                "mean": b.mean,
                "ci_low": b.ci_low,
                "ci_high": b.ci_high,
                "n": b.n,
            }
            for b in self.bins
        ]


@dataclass
class AcceptanceBin:
    bin_low: float
    bin_high: float
    rate: float | None
    n_accepted: int
    n: int


@dataclass
class AcceptanceSpan:
    years: tuple[int, int]
    span_rate: float | None
    bins: list[AcceptanceBin]
    deltas_pp: list[float | None]


@dataclass
class AcceptanceTable:
    bins: list[AcceptanceBin]
    overall_rate: float
    n_accepted: int
    n_total: int
    spans: list[AcceptanceSpan] = field(default_factory=list)

    def to_rows(self) -> list[dict]:
        rows = [
            {
                "span": "overall",
                "bin_low": b.bin_low,
                "bin_high": b.bin_high,
                "rate": b.rate,
                "delta_pp": None,
                "n_accepted": b.n_accepted,
                "n": b.n,
            }
            for b in self.bins
        ]
        for span in self.spans:
            label = f"{span.years[0]}-{span.years[1]}"
            for b, delta in zip(span.bins, span.deltas_pp):
                rows.append(
                    {
                        "span": label,
                        "bin_low": b.bin_low,
                        "bin_high": b.bin_high,
                        "rate": b.rate,
                        "delta_pp": delta,
                        "n_accepted": b.n_accepted,
                        "n": b.n,
                    }
                )
        return rows


# --- Operations ---


def stance_histogram(
    papers: Sequence[PaperRecord],
    domain: str | None = None,
    bin_width: float = DEFAULT_BIN_WIDTH,
) -> StanceHistogram:
    """Distribution of stance values plus headline shares."""
    selected = _filter_domain(papers, domain)
    if not selected:
        raise ValueError("no papers to histogram")
    _require_scored(selected)
    edges = stance_bin_edges(bin_width)
    counts = [0] * len(edges)
    negative = 0
    high_positive = 0
    for paper in selected:
        counts[stance_bin_index(paper.stance, bin_width)] += 1
        if paper.stance <= -0.1:
            negative += 1
        if paper.stance >= 0.6:
            high_positive += 1
    total = len(selected)
    return StanceHistogram(
        bin_edges=edges,
        counts=counts,
        shares=[c / total for c in counts],
        total=total,
        share_negative=negative / total,
        share_high_positive=high_positive / total,
    )


def _yearly_series(
    groups: Mapping[int, Sequence[float]],
    sigma: float,
    ci_level: float,
    n_resamples: int,
    seed: int,
) -> TimeSeries:
    points: dict[int, TimePoint] = {}
    if groups:
        for year in range(min(groups), max(groups) + 1):
            values = groups.get(year)
            if not values:
                points[year] = TimePoint(None, None, None, 0)
                continue
            mean = float(np.mean(values))
            low, high = _point_ci(
                values, ci_level, n_resamples, seed=_year_seed(seed, year)
            )
            points[year] = TimePoint(mean, low, high, len(values))
    series = TimeSeries(points=points, sigma=sigma)
    present = {y: p.value for y, p in points.items() if p.value is not None}
    series.smoothed = gaussian_smooth(present, sigma)
    return series


def _year_seed(seed: int, year: int) -> int:
    # Stable per-year stream regardless of iteration order.
    return (seed * 1_000_003 + year) % (2**63)


def avg_stance_by_year(
    papers: Sequence[PaperRecord],
    domain: str | None = None,
    sigma: float = DEFAULT_SIGMA,
    ci_level: float = DEFAULT_CI_LEVEL,
    n_resamples: int = DEFAULT_RESAMPLES,
    seed: int = 0,
) -> TimeSeries:
    """Mean stance per publication year with bootstrap CIs."""
    selected = _filter_domain(papers, domain)
    _require_scored(selected)
    groups: dict[int, list[float]] = {}
    for p in selected:
        groups.setdefault(p.year, []).append(p.stance)
    return _yearly_series(groups, sigma, ci_level, n_resamples, seed)


def pct_negative_by_year(
    papers: Sequence[PaperRecord],
    domain: str | None = None,
    sigma: float = DEFAULT_SIGMA,
    ci_level: float = DEFAULT_CI_LEVEL,
    n_resamples: int = DEFAULT_RESAMPLES,
    seed: int = 0,
) -> TimeSeries:
    """Share of coarse-negative papers per year (boundary -0.1 counts)."""
    selected = _filter_domain(papers, domain)
    _require_scored(selected)
    groups: dict[int, list[float]] = {}
    for p in selected:
        groups.setdefault(p.year, []).append(
            1.0 if coarsen(p.stance) == NEGATIVE else 0.0
        )
    return _yearly_series(groups, sigma, ci_level, n_resamples, seed)


def conditional_avg_by_year(
    papers: Sequence[PaperRecord],
    sign: str,
    domain: str | None = None,
    sigma: float = DEFAULT_SIGMA,
    ci_level: float = DEFAULT_CI_LEVEL,
    n_resamples: int = DEFAULT_RESAMPLES,
    seed: int = 0,
) -> TimeSeries:
    """Mean stance per year over papers of one coarse sign only."""
    if sign not in (POSITIVE, NEGATIVE):
        raise ValueError(f"sign must be positive or negative, got {sign!r}")
    selected = _filter_domain(papers, domain)
    _require_scored(selected)
    groups: dict[int, list[float]] = {}
    for p in selected:
        if coarsen(p.stance) == sign:
            groups.setdefault(p.year, []).append(p.stance)
    return _yearly_series(groups, sigma, ci_level, n_resamples, seed)


def venue_negativity(
    papers: Sequence[PaperRecord],
    sigma: float = DEFAULT_SIGMA,
    ci_level: float = DEFAULT_CI_LEVEL,
    n_resamples: int = DEFAULT_RESAMPLES,
    seed: int = 0,
) -> dict[str, TimeSeries]:
    """Per-venue share of negative papers per year.

    Stored values are exact (zeros included); flooring for log-scale plots
    belongs to the export step, never here.
    """
    _require_scored(papers)
    by_venue: dict[str, list[PaperRecord]] = {}
    for p in papers:
        by_venue.setdefault(p.venue, []).append(p)
    return {
        venue: pct_negative_by_year(
            group, sigma=sigma, ci_level=ci_level, n_resamples=n_resamples, seed=seed
        )
        for venue, group in sorted(by_venue.items())
    }


def citation_z_scores(
    papers: Sequence[PaperRecord],
) -> tuple[dict[int, list[tuple[PaperRecord, float]]], list[tuple[int, str, int]], int]:
    """Per-year citation z-scores with the population (1/n) std.

    Returns (year -> [(paper, z)], excluded year diagnostics, count of
    papers lacking a citation count). Years with fewer than 2 counted
    papers or zero variance are excluded.
    """
    _require_scored(papers)
    with_citations = [p for p in papers if p.citation_count is not None]
    missing = len(papers) - len(with_citations)
    by_year: dict[int, list[PaperRecord]] = {}
    for p in with_citations:
        by_year.setdefault(p.year, []).append(p)

    excluded: list[tuple[int, str, int]] = []
    z_by_year: dict[int, list[tuple[PaperRecord, float]]] = {}
    for year in sorted(by_year):
        group = by_year[year]
        counts = np.array([p.citation_count for p in group], dtype=np.float64)
        if len(group) < 2:
            excluded.append((year, "fewer than 2 papers", len(group)))
            continue
        std = float(counts.std())  # population std
        if std == 0.0:
            excluded.append((year, "zero citation variance", len(group)))
            continue
        mean = float(counts.mean())
        z_by_year[year] = [(p, (c - mean) / std) for p, c in zip(group, counts)]
    return z_by_year, excluded, missing


def normalize_citations(
    papers: Sequence[PaperRecord],
    bin_width: float = DEFAULT_BIN_WIDTH,
    ci_level: float = DEFAULT_CI_LEVEL,
    n_resamples: int = DEFAULT_RESAMPLES,
    seed: int = 0,
) -> BinnedStat:
    """Citation impact by stance bin, z-normalized within publication year.

    z = (count - year_mean) / year_std via :func:`citation_z_scores`,
    grouped into stance bins with bootstrap CIs per bin.
    """
    z_by_year, excluded, missing = citation_z_scores(papers)
    z_by_bin: dict[int, list[float]] = {}
    for year_scores in z_by_year.values():
        for p, z in year_scores:
            z_by_bin.setdefault(stance_bin_index(p.stance, bin_width), []).append(z)

    bins: list[BinStat] = []
    for i, (lo, hi) in enumerate(stance_bin_edges(bin_width)):
        zs = z_by_bin.get(i)
        if not zs:
            bins.append(BinStat(lo, hi, None, None, None, 0))
            continue
        low, high = _point_ci(zs, ci_level, n_resamples, seed=_year_seed(seed, i))
        bins.append(BinStat(lo, hi, float(np.mean(zs)), low, high, len(zs)))
    return BinnedStat(bins=bins, excluded_years=excluded, missing_value_count=missing)


def acceptance_by_stance(
    papers: Sequence[PaperRecord],
    time_spans: Sequence[tuple[int, int]] | None = None,
    bin_width: float = DEFAULT_BIN_WIDTH,
) -> AcceptanceTable:
    """Acceptance rate per stance bin over papers with known decisions.

    With time spans, each span's bins also carry percentage-point deltas
    from that span's own average acceptance rate.
    """
    _require_scored(papers)
    decided = [p for p in papers if p.decision in (DECISION_ACCEPTED, DECISION_REJECTED)]
    if not decided:
        raise ValueError("no papers with accept/reject decisions")

    def table_for(group: Sequence[PaperRecord]) -> tuple[list[AcceptanceBin], int, int]:
        edges = stance_bin_edges(bin_width)
        accepted = [0] * len(edges)
        totals = [0] * len(edges)
        for p in group:
            i = stance_bin_index(p.stance, bin_width)
            totals[i] += 1
            if p.decision == DECISION_ACCEPTED:
                accepted[i] += 1
        bins = [
            AcceptanceBin(
                lo, hi, (a / t) if t else None, a, t
            )
            for (lo, hi), a, t in zip(edges, accepted, totals)
        ]
        return bins, sum(accepted), sum(totals)

    bins, n_accepted, n_total = table_for(decided)
    table = AcceptanceTable(
        bins=bins,
        overall_rate=n_accepted / n_total,
        n_accepted=n_accepted,
        n_total=n_total,
    )
    for y0, y1 in time_spans or ():
        span_papers = [p for p in decided if y0 <= p.year <= y1]
        span_bins, span_accepted, span_total = table_for(span_papers)
        span_rate = span_accepted / span_total if span_total else None
        deltas = [
            None if b.rate is None or span_rate is None else (b.rate - span_rate) * 100.0
            for b in span_bins
        ]
        table.spans.append(
            AcceptanceSpan(years=(y0, y1), span_rate=span_rate, bins=span_bins, deltas_pp=deltas)
        )
    return table


def gaussian_smooth(series: Mapping[int, float], sigma: float) -> dict[int, float]:
    """Discrete Gaussian blur over a year-indexed series.

    The kernel is truncated at +-4 sigma and renormalized over the years
    actually present at each point, so boundaries and gaps keep unit mass.
    sigma == 0 is the identity.
    """
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0 or not series:
        return dict(series)
    radius = int(math.floor(4.0 * sigma))
    if radius == 0:
        return dict(series)
    offsets = range(-radius, radius + 1)
    kernel = {d: math.exp(-(d * d) / (2.0 * sigma * sigma)) for d in offsets}
    smoothed: dict[int, float] = {}
    for year in series:
        num = 0.0
        den = 0.0
        for d, w in kernel.items():
            neighbor = series.get(year + d)
            if neighbor is None:
                continue
            num += w * neighbor
            den += w
        smoothed[year] = num / den
    return smoothed
