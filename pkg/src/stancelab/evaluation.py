"""Metrics, split protocols, and experiment orchestration."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import model as model_mod
from .annotation import COARSE_CLASSES, UndefinedMetricError, coarsen
from .corpus import DOMAIN_NLP, PaperRecord
from .features import build_vocab, featurize, tokenize
from .model import (
    BASELINE_KINDS,
    KIND_LINEAR,
    TrainingConfig,
    clip_stance,
    stack_features,
    train_linear,
)

PROTOCOL_IN_DOMAIN = "in_domain"
PROTOCOL_CROSS_DOMAIN = "cross_domain"
PROTOCOL_COMBINED = "combined"
PROTOCOLS = (PROTOCOL_IN_DOMAIN, PROTOCOL_CROSS_DOMAIN, PROTOCOL_COMBINED)

TAG_HISTORIC = "Hist"
MODERN_YEAR = 2000


def r_squared(preds: Sequence[float], golds: Sequence[float]) -> float:
    """Coefficient of determination: 1 - SS_res / SS_tot about the gold mean.

    Unbounded below; exactly 0 for the constant gold-mean predictor and 1
    for perfect predictions. Constant golds make it undefined.
    """
    if len(preds) != len(golds):
        raise ValueError("prediction and gold lengths differ")
    if len(golds) < 2:
        raise ValueError("R^2 needs at least 2 points")
    mean = sum(golds) / len(golds)
    ss_tot = sum((g - mean) ** 2 for g in golds)
    if ss_tot == 0.0:
        raise UndefinedMetricError("undefined R^2: constant gold labels")
    ss_res = sum((p - g) ** 2 for p, g in zip(preds, golds))
    return 1.0 - ss_res / ss_tot


def f1_per_class(
    pred_stances: Sequence[float], gold_stances: Sequence[float]
) -> dict[str, float | None]:
    """Per-class F1 on coarsened labels; None marks classes absent from
    both gold and predictions (excluded from the macro average)."""
    if len(pred_stances) != len(gold_stances):
        raise ValueError("prediction and gold lengths differ")
    if not gold_stances:
        raise ValueError("empty inputs")
    preds = [coarsen(p) for p in pred_stances]
    golds = [coarsen(g) for g in gold_stances]
    scores: dict[str, float | None] = {}
    for cls in COARSE_CLASSES:
        tp = sum(1 for p, g in zip(preds, golds) if p == cls and g == cls)
        fp = sum(1 for p, g in zip(preds, golds) if p == cls and g != cls)
        fn = sum(1 for p, g in zip(preds, golds) if p != cls and g == cls)
        if tp + fp + fn == 0:
            scores[cls] = None
            continue
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        if precision + recall == 0.0:
            scores[cls] = 0.0
        else:
            scores[cls] = 2 * precision * recall / (precision + recall)
    return scores


def macro_f1(pred_stances: Sequence[float], gold_stances: Sequence[float]) -> float:
    """Unweighted mean of per-class F1 over the classes that occur."""
    scores = [s for s in f1_per_class(pred_stances, gold_stances).values() if s is not None]
    return sum(scores) / len(scores)


def largest_remainder_sizes(total: int, ratios: Sequence[float]) -> list[int]:
    """Integer part sizes that sum to ``total`` and track the ratios."""
    exact = [r * total for r in ratios]
    # Epsilon absorbs float dust so exact products floor cleanly.
    sizes = [int(math.floor(x + 1e-9)) for x in exact]
    remainders = sorted(
        range(len(ratios)), key=lambda i: (-(exact[i] + 1e-9 - sizes[i]), i)
    )
    for i in remainders[: total - sum(sizes)]:
        sizes[i] += 1
    return sizes


@dataclass
class SplitSpec:
    """One of the three split protocols.

    in_domain/combined shuffle the eligible items and cut train/dev/test;
    cross_domain splits the source tags into train/dev and uses every item
    with a target tag as the test set.
    """

    protocol: str
    ratios: tuple[float, ...] = ()
    source_tags: tuple[str, ...] = ()
    target_tags: tuple[str, ...] = ()
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.protocol not in PROTOCOLS:
            raise ValueError(f"unknown protocol {self.protocol!r}")
        if not self.ratios:
            self.ratios = (
                (0.7, 0.3) if self.protocol == PROTOCOL_CROSS_DOMAIN else (0.6, 0.1, 0.3)
            )
        expected = 2 if self.protocol == PROTOCOL_CROSS_DOMAIN else 3
        if len(self.ratios) != expected:
            raise ValueError(f"{self.protocol} expects {expected} ratios")
        if any(r <= 0 for r in self.ratios):
            raise ValueError("ratios must be positive")
        if abs(sum(self.ratios) - 1.0) > 1e-9:
            raise ValueError("ratios must sum to 1")
        if self.protocol == PROTOCOL_CROSS_DOMAIN:
            if not self.source_tags or not self.target_tags:
                raise ValueError("cross_domain needs source and target tags")
            overlap = set(self.source_tags) & set(self.target_tags)
            if overlap:
                raise ValueError(f"source/target tags overlap: {sorted(overlap)}")


@dataclass
class Splits:
    train: list
    dev: list
    test: list


def dataset_tag(paper: PaperRecord) -> str:
    """Subcorpus tag: NLP papers before 2000 form the historic slice."""
    if paper.domain == DOMAIN_NLP and paper.year < MODERN_YEAR:
        return TAG_HISTORIC
    return paper.domain


def make_splits(
    items: Sequence,
    spec: SplitSpec,
    tags: Sequence[str] | None = None,
) -> Splits:
    """Partition items per the split protocol; deterministic under its seed."""
    if len(items) < 10:
        raise ValueError(f"dataset too small to split: {len(items)}")
    if spec.protocol == PROTOCOL_CROSS_DOMAIN:
        if tags is None or len(tags) != len(items):
            raise ValueError("cross_domain requires one tag per item")
        source = [x for x, t in zip(items, tags) if t in spec.source_tags]
        target = [x for x, t in zip(items, tags) if t in spec.target_tags]
        if not source or not target:
            raise ValueError("cross_domain found an empty source or target set")
        shuffled = list(source)
        random.Random(spec.rng_seed).shuffle(shuffled)
        n_train, _ = largest_remainder_sizes(len(shuffled), spec.ratios)
        return Splits(train=shuffled[:n_train], dev=shuffled[n_train:], test=list(target))

    pool = list(items)
    if tags is not None and (spec.source_tags or spec.target_tags):
        allowed = set(spec.source_tags) | set(spec.target_tags)
        pool = [x for x, t in zip(items, tags) if t in allowed]
    random.Random(spec.rng_seed).shuffle(pool)
    n_train, n_dev, _ = largest_remainder_sizes(len(pool), spec.ratios)
    return Splits(
        train=pool[:n_train],
        dev=pool[n_train : n_train + n_dev],
        test=pool[n_train + n_dev :],
    )


@dataclass
class ScorerMetrics:
    r2: float
    macro_f1: float
    per_class_f1: dict[str, float | None]


@dataclass
class MetricsReport:
    """Evaluation outcome for one scorer plus the four baselines."""

    protocol: str
    scorer_kind: str
    train_tag: str
    test_tag: str
    n_test: int
    r2: float
    macro_f1: float
    per_class_f1: dict[str, float | None]
    baselines: dict[str, ScorerMetrics]
    repeat_metrics: list[ScorerMetrics] = field(default_factory=list)
    best_r2: float | None = None
    best_macro_f1: float | None = None
    selection: model_mod.SelectionReport | None = None

    def to_rows(self) -> list[dict]:
        rows = []

        def add(scorer: str, metric: str, value) -> None:
            rows.append(
                {
                    "protocol": self.protocol,
                    "train_tag": self.train_tag,
                    "test_tag": self.test_tag,
                    "scorer": scorer,
                    "metric": metric,
                    "value": value,
                }
            )

        add(self.scorer_kind, "r2", self.r2)
        add(self.scorer_kind, "macro_f1", self.macro_f1)
        if self.best_r2 is not None:
            add(self.scorer_kind, "best_r2", self.best_r2)
        if self.best_macro_f1 is not None:
            add(self.scorer_kind, "best_macro_f1", self.best_macro_f1)
        add(self.scorer_kind, "n_test", self.n_test)
        for kind, metrics in self.baselines.items():
            add(kind, "r2", metrics.r2)
            add(kind, "macro_f1", metrics.macro_f1)
        return rows

    def to_table(self) -> str:
        lines = [
            f"protocol={self.protocol} train={self.train_tag} "
            f"test={self.test_tag} n_test={self.n_test}",
            f"{'scorer':<10} {'R2':>10} {'macro F1':>10}",
        ]
        lines.append(f"{self.scorer_kind:<10} {self.r2:>10.4f} {self.macro_f1:>10.4f}")
        for kind, metrics in self.baselines.items():
            lines.append(f"{kind:<10} {metrics.r2:>10.4f} {metrics.macro_f1:>10.4f}")
        return "\n".join(lines)


def _score_constant(value: float, golds: Sequence[float]) -> ScorerMetrics:
    preds = [clip_stance(value)] * len(golds)
    return ScorerMetrics(
        r2=r_squared(preds, golds),
        macro_f1=macro_f1(preds, golds),
        per_class_f1=f1_per_class(preds, golds),
    )


def evaluate_baselines(
    train_golds: Sequence[float], test_golds: Sequence[float]
) -> dict[str, ScorerMetrics]:
    train_mean = sum(train_golds) / len(train_golds)
    values = {
        model_mod.KIND_POS: 1.0,
        model_mod.KIND_ZERO: 0.0,
        model_mod.KIND_NEG: -1.0,
        model_mod.KIND_AVG: train_mean,
    }
    return {kind: _score_constant(v, test_golds) for kind, v in values.items()}


def run_experiment(
    papers: Sequence[PaperRecord],
    spec: SplitSpec,
    scorer_kind: str = KIND_LINEAR,
    training: TrainingConfig | None = None,
    min_df: int = 2,
    max_len: int = 300,
    external_scorer=None,
) -> MetricsReport:
    """Split, train when applicable, and evaluate against all baselines.

    ``papers`` must carry gold stances in their ``stance`` field. For the
    linear scorer the report's headline metrics average the per-repeat
    winners; the best repeat is reported alongside.
    """
    unlabeled = [p.id for p in papers if p.stance is None]
    if unlabeled:
        raise ValueError(f"{len(unlabeled)} papers lack gold stances: {unlabeled[:5]}")
    tags = [dataset_tag(p) for p in papers]
    splits = make_splits(papers, spec, tags=tags)
    if not splits.train or not splits.test:
        raise ValueError("empty train or test split")

    train_golds = [p.stance for p in splits.train]
    test_golds = [p.stance for p in splits.test]
    baselines = evaluate_baselines(train_golds, test_golds)
    train_tag = (
        "+".join(spec.source_tags) if spec.source_tags else "all"
    )
    test_tag = "+".join(spec.target_tags) if spec.target_tags else "all"

    selection: model_mod.SelectionReport | None = None
    repeat_metrics: list[ScorerMetrics] = []
    if scorer_kind == KIND_LINEAR:
        training = training or TrainingConfig()
        sequences = [tokenize(p.title, p.abstract, max_len=max_len) for p in splits.train]
        vocab = build_vocab(sequences, min_df=min_df)
        x_train = stack_features([featurize(s, vocab) for s in sequences])
        y_train = np.array(train_golds)
        dev_sequences = [
            tokenize(p.title, p.abstract, max_len=max_len) for p in splits.dev
        ]
        x_dev = stack_features([featurize(s, vocab) for s in dev_sequences])
        y_dev = np.array([p.stance for p in splits.dev])
        result = train_linear(
            x_train,
            y_train,
            x_dev,
            y_dev,
            training,
            vocab_fingerprint=vocab.fingerprint(),
            trained_on=f"{spec.protocol}:{train_tag}:n={len(splits.train)}",
        )
        selection = result.report
        test_sequences = [
            tokenize(p.title, p.abstract, max_len=max_len) for p in splits.test
        ]
        x_test = stack_features([featurize(s, vocab) for s in test_sequences])
        for repeat_model in result.repeat_models:
            preds = np.clip(np.asarray(x_test @ repeat_model.weights), -1.0, 1.0)
            repeat_metrics.append(
                ScorerMetrics(
                    r2=r_squared(preds.tolist(), test_golds),
                    macro_f1=macro_f1(preds.tolist(), test_golds),
                    per_class_f1=f1_per_class(preds.tolist(), test_golds),
                )
            )
        headline_r2 = sum(m.r2 for m in repeat_metrics) / len(repeat_metrics)
        headline_f1 = sum(m.macro_f1 for m in repeat_metrics) / len(repeat_metrics)
        best = max(repeat_metrics, key=lambda m: m.r2)
        best_preds_metrics = repeat_metrics[repeat_metrics.index(best)]
        return MetricsReport(
            protocol=spec.protocol,
            scorer_kind=scorer_kind,
            train_tag=train_tag,
            test_tag=test_tag,
            n_test=len(splits.test),
            r2=headline_r2,
            macro_f1=headline_f1,
            per_class_f1=best_preds_metrics.per_class_f1,
            baselines=baselines,
            repeat_metrics=repeat_metrics,
            best_r2=best.r2,
            best_macro_f1=max(m.macro_f1 for m in repeat_metrics),
            selection=selection,
        )

    if scorer_kind in BASELINE_KINDS:
        metrics = baselines[scorer_kind]
    elif scorer_kind == model_mod.KIND_EXTERNAL:
        if external_scorer is None:
            raise ValueError("external scorer kind requires an adapter-backed scorer")
        preds = [model_mod.predict(external_scorer, p) for p in splits.test]
        metrics = ScorerMetrics(
            r2=r_squared(preds, test_golds),
            macro_f1=macro_f1(preds, test_golds),
            per_class_f1=f1_per_class(preds, test_golds),
        )
    else:
        raise ValueError(f"unknown scorer kind {scorer_kind!r}")
    return MetricsReport(
        protocol=spec.protocol,
        scorer_kind=scorer_kind,
        train_tag=train_tag,
        test_tag=test_tag,
        n_test=len(splits.test),
        r2=metrics.r2,
        macro_f1=metrics.macro_f1,
        per_class_f1=metrics.per_class_f1,
        baselines=baselines,
    )
