"""Command-line entry point tying the pipeline together.

Flag precedence is flag > environment variable (``STANCELAB_*``) > default.
Every subcommand writes a manifest (config, input fingerprints, version)
next to its outputs; tables are always written, charts are best-effort.
"""

from __future__ import annotations

import dataclasses
import datetime
import hashlib
import json
import time
from pathlib import Path

import click
import numpy as np

from . import __version__, analysis, annotation, corpus, evaluation
from . import model as model_mod
from .citations import FixtureCitationSource, enrich_citations
from .features import Vocabulary, build_vocab, featurize, tokenize

DEFAULT_TSV_NONE = "NA"


def _fingerprint(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()[:16]


def _write_manifest(output_dir: Path, command: str, config: dict, inputs: list[Path]) -> None:
    manifest = {
        "command": command,
        "version": __version__,
        "created_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "config": config,
        "inputs": {str(p): _fingerprint(p) for p in inputs if p.exists()},
    }
    (output_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8"
    )


def _format_cell(value) -> str:
    if value is None:
        return DEFAULT_TSV_NONE
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_tsv(path: Path, rows: list[dict], columns: list[str] | None = None) -> None:
    if columns is None:
        columns = list(rows[0].keys()) if rows else []
    with path.open("w", encoding="utf-8") as handle:
        handle.write("\t".join(columns) + "\n")
        for row in rows:
            handle.write("\t".join(_format_cell(row.get(c)) for c in columns) + "\n")


def _best_effort_chart(draw, path: Path) -> None:
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(8, 4.5))
        draw(ax)
        fig.tight_layout()
        fig.savefig(path, dpi=110)
        plt.close(fig)
    except Exception as exc:  # charts must never fail the run
        click.echo(f"chart skipped ({path.name}): {exc}", err=True)


@click.group()
@click.version_option(__version__)
def main() -> None:
    """Stance analytics pipeline for scholarly abstracts."""


@main.command()
@click.option("--input", "inputs", multiple=True, required=True, envvar="STANCELAB_INPUT",
              type=click.Path(exists=True, path_type=Path), help="BibTeX file or directory.")
@click.option("--citations", "citations_path", type=click.Path(exists=True, path_type=Path),
              envvar="STANCELAB_CITATIONS", default=None, help="id<TAB>count fixture file.")
@click.option("--rules", "rules_path", type=click.Path(exists=True, path_type=Path),
              envvar="STANCELAB_RULES", default=None, help="Filter rules JSON.")
@click.option("--output", "output_dir", required=True, envvar="STANCELAB_OUTPUT",
              type=click.Path(path_type=Path))
def ingest(inputs, citations_path, rules_path, output_dir) -> None:
    """Parse, filter, and enrich BibTeX metadata into a corpus file."""
    output_dir.mkdir(parents=True, exist_ok=True)
    bib_files: list[Path] = []
    for entry in inputs:
        if entry.is_dir():
            bib_files.extend(sorted(entry.glob("*.bib")))
        else:
            bib_files.append(entry)
    if not bib_files:
        raise click.ClickException("no .bib files found under --input")

    records = []
    diagnostics = []
    for bib_file in bib_files:
        result = corpus.parse_bibtex(bib_file.read_text(encoding="utf-8"))
        records.extend(result.records)
        diagnostics.extend(f"{bib_file}: {d}" for d in result.diagnostics)

    rules = corpus.FilterRules.from_json_file(rules_path) if rules_path else corpus.FilterRules()
    kept = corpus.filter_papers(records, rules)

    if citations_path is not None:
        source = FixtureCitationSource(citations_path)
        kept, report = enrich_citations(kept, source)
        click.echo(
            f"citations: {report.resolved} resolved, "
            f"{len(report.unresolved_ids)} unresolved, {len(report.failures)} failed"
        )

    corpus_path = output_dir / "corpus.jsonl"
    corpus.save_corpus(kept, corpus_path)
    stats = corpus.corpus_stats(kept)

    venue_rows = [
        {"venue": venue, "count": count}
        for venue, count in sorted(stats.per_venue_counts.items(), key=lambda kv: -kv[1])
    ]
    venue_rows.append({"venue": "Overall", "count": stats.total})
    write_tsv(output_dir / "venue_counts.tsv", venue_rows, ["venue", "count"])
    year_rows = [
        {"year": year, "count": count}
        for year, count in sorted(stats.per_year_counts.items())
    ]
    write_tsv(output_dir / "year_counts.tsv", year_rows, ["year", "count"])
    if diagnostics:
        (output_dir / "diagnostics.txt").write_text(
            "\n".join(diagnostics) + "\n", encoding="utf-8"
        )

    click.echo(f"{'Venue':<10} {'# papers':>9}")
    for row in venue_rows:
        click.echo(f"{row['venue']:<10} {row['count']:>9,}")
    click.echo(
        f"parsed {len(records)}, kept {stats.total}, "
        f"missing abstracts {stats.missing_abstract_count}, "
        f"diagnostics {len(diagnostics)}"
    )
    _write_manifest(
        output_dir,
        "ingest",
        {
            "inputs": [str(p) for p in bib_files],
            "rules": str(rules_path) if rules_path else None,
            "citations": str(citations_path) if citations_path else None,
        },
        [*bib_files, *( [citations_path] if citations_path else [] )],
    )


def _load_labeled_corpus(corpus_path: Path, labels_path: Path | None) -> list[corpus.PaperRecord]:
    papers = corpus.load_corpus(corpus_path)
    if labels_path is None:
        labeled = [p for p in papers if p.stance is not None]
        if not labeled:
            raise click.ClickException(
                "corpus has no stance fields; pass --labels with an annotation log"
            )
        return labeled
    store = annotation.replay_log(annotation.read_log(labels_path))
    aggregates = store.aggregate_all()
    labeled = [
        dataclasses.replace(p, stance=aggregates[p.id].mean_stance)
        for p in papers
        if p.id in aggregates
    ]
    if not labeled:
        raise click.ClickException("no corpus papers appear in the annotation log")
    return labeled


@main.command()
@click.option("--input", "corpus_path", required=True, envvar="STANCELAB_INPUT",
              type=click.Path(exists=True, path_type=Path), help="Corpus JSONL.")
@click.option("--labels", "labels_path", type=click.Path(exists=True, path_type=Path),
              envvar="STANCELAB_LABELS", default=None, help="Annotation log (JSONL).")
@click.option("--protocol", type=click.Choice(evaluation.PROTOCOLS), default="combined",
              envvar="STANCELAB_PROTOCOL")
@click.option("--source-tags", default="", help="Comma-separated tags (cross_domain).")
@click.option("--target-tags", default="", help="Comma-separated tags (cross_domain).")
@click.option("--scorer", "scorer_kind", default="linear", envvar="STANCELAB_SCORER",
              type=click.Choice([model_mod.KIND_LINEAR, *model_mod.BASELINE_KINDS]))
@click.option("--seed", default=0, type=int, envvar="STANCELAB_SEED")
@click.option("--epochs", default=30, type=int, help="Training epochs for the linear scorer.")
@click.option("--restarts", default=10, type=int)
@click.option("--repeats", default=3, type=int)
@click.option("--min-df", default=2, type=int)
@click.option("--output", "output_dir", required=True, envvar="STANCELAB_OUTPUT",
              type=click.Path(path_type=Path))
def evaluate(corpus_path, labels_path, protocol, source_tags, target_tags,
             scorer_kind, seed, epochs, restarts, repeats, min_df, output_dir) -> None:
    """Train (when applicable) and evaluate a scorer against all baselines."""
    output_dir.mkdir(parents=True, exist_ok=True)
    labeled = _load_labeled_corpus(corpus_path, labels_path)
    spec = evaluation.SplitSpec(
        protocol=protocol,
        source_tags=tuple(t for t in source_tags.split(",") if t),
        target_tags=tuple(t for t in target_tags.split(",") if t),
        rng_seed=seed,
    )
    training = model_mod.TrainingConfig(
        epochs=epochs, n_restarts=restarts, n_repeats=repeats, rng_seed=seed
    )
    report = evaluation.run_experiment(
        labeled, spec, scorer_kind=scorer_kind, training=training, min_df=min_df
    )
    write_tsv(
        output_dir / "metrics.tsv",
        report.to_rows(),
        ["protocol", "train_tag", "test_tag", "scorer", "metric", "value"],
    )
    (output_dir / "metrics.txt").write_text(report.to_table() + "\n", encoding="utf-8")
    click.echo(report.to_table())

    if scorer_kind == model_mod.KIND_LINEAR:
        # Refit the vocabulary exactly as run_experiment did so the saved
        # model and vocabulary stay consistent.
        tags = [evaluation.dataset_tag(p) for p in labeled]
        splits = evaluation.make_splits(labeled, spec, tags=tags)
        sequences = [tokenize(p.title, p.abstract) for p in splits.train]
        vocab = build_vocab(sequences, min_df=min_df)
        x_train = model_mod.stack_features([featurize(s, vocab) for s in sequences])
        y_train = np.array([p.stance for p in splits.train])
        dev_seq = [tokenize(p.title, p.abstract) for p in splits.dev]
        x_dev = model_mod.stack_features([featurize(s, vocab) for s in dev_seq])
        y_dev = np.array([p.stance for p in splits.dev])
        result = model_mod.train_linear(
            x_train, y_train, x_dev, y_dev, training,
            vocab_fingerprint=vocab.fingerprint(),
            trained_on=f"{protocol}:seed={seed}",
        )
        vocab.save(output_dir / "vocab.tsv")
        model_mod.save_model(result.model, output_dir / "model.txt")
        click.echo(f"model written to {output_dir / 'model.txt'}")

    _write_manifest(
        output_dir,
        "evaluate",
        {
            "corpus": str(corpus_path),
            "labels": str(labels_path) if labels_path else None,
            "protocol": protocol,
            "scorer": scorer_kind,
            "seed": seed,
            "epochs": epochs,
            "restarts": restarts,
            "repeats": repeats,
            "min_df": min_df,
        },
        [corpus_path, *( [labels_path] if labels_path else [] )],
    )


@main.command()
@click.option("--input", "corpus_path", required=True, envvar="STANCELAB_INPUT",
              type=click.Path(exists=True, path_type=Path))
@click.option("--model", "model_path", required=True, envvar="STANCELAB_MODEL",
              type=click.Path(exists=True, path_type=Path))
@click.option("--vocab", "vocab_path", required=True, envvar="STANCELAB_VOCAB",
              type=click.Path(exists=True, path_type=Path))
@click.option("--output", "output_dir", required=True, envvar="STANCELAB_OUTPUT",
              type=click.Path(path_type=Path))
def score(corpus_path, model_path, vocab_path, output_dir) -> None:
    """Fill stance predictions for every paper with an abstract."""
    output_dir.mkdir(parents=True, exist_ok=True)
    papers = corpus.load_corpus(corpus_path)
    vocab = Vocabulary.load(vocab_path)
    linear = model_mod.load_model(model_path)
    scorer = model_mod.LinearScorer(model=linear, vocab=vocab)

    started = time.monotonic()
    scored = []
    skipped = 0
    for paper in papers:
        if not paper.abstract.strip() or not paper.title.strip():
            skipped += 1
            scored.append(paper)
            continue
        stance = model_mod.predict(scorer, paper)
        scored.append(dataclasses.replace(paper, stance=stance))
    elapsed = time.monotonic() - started

    out_path = output_dir / "scored.jsonl"
    corpus.save_corpus(scored, out_path)
    n_scored = len(scored) - skipped
    rate = n_scored / elapsed if elapsed > 0 else float("inf")
    click.echo(
        f"scored {n_scored} papers in {elapsed:.1f}s ({rate:.0f}/s), "
        f"skipped {skipped} without abstracts"
    )
    _write_manifest(
        output_dir,
        "score",
        {"corpus": str(corpus_path), "model": str(model_path), "vocab": str(vocab_path)},
        [corpus_path, model_path, vocab_path],
    )


ANALYSES = ("histogram", "yearly", "venues", "citations", "acceptance")


@main.command()
@click.option("--input", "corpus_path", required=True, envvar="STANCELAB_INPUT",
              type=click.Path(exists=True, path_type=Path), help="Scored corpus JSONL.")
@click.option("--which", default="all", type=click.Choice(("all", *ANALYSES)),
              envvar="STANCELAB_WHICH")
@click.option("--sigma", default=analysis.DEFAULT_SIGMA, type=float, envvar="STANCELAB_SIGMA")
@click.option("--bin-width", default=analysis.DEFAULT_BIN_WIDTH, type=float,
              envvar="STANCELAB_BIN_WIDTH")
@click.option("--ci-level", default=analysis.DEFAULT_CI_LEVEL, type=float,
              envvar="STANCELAB_CI_LEVEL")
@click.option("--seed", default=0, type=int, envvar="STANCELAB_SEED")
@click.option("--floor-epsilon", default=1e-3, type=float,
              help="Log-plot floor for zero venue-negativity values (export only).")
@click.option("--output", "output_dir", required=True, envvar="STANCELAB_OUTPUT",
              type=click.Path(path_type=Path))
def analyze(corpus_path, which, sigma, bin_width, ci_level, seed, floor_epsilon,
            output_dir) -> None:
    """Emit plot-ready tables (and best-effort charts) for the trend analyses."""
    output_dir.mkdir(parents=True, exist_ok=True)
    papers = corpus.load_corpus(corpus_path)
    scored = [p for p in papers if p.stance is not None]
    if not scored:
        raise click.ClickException("corpus has no scored papers; run `stancelab score` first")
    wanted = set(ANALYSES) if which == "all" else {which}
    ci_kwargs = {"ci_level": ci_level, "seed": seed}

    if "histogram" in wanted:
        overall = analysis.stance_histogram(scored, bin_width=bin_width)
        rows = [dict(r, domain="all") for r in overall.to_rows()]
        summary = [
            {"domain": "all", "share_negative": overall.share_negative,
             "share_ge_0.6": overall.share_high_positive, "n": overall.total}
        ]
        for domain in corpus.DOMAINS:
            subset = [p for p in scored if p.domain == domain]
            if not subset:
                continue
            hist = analysis.stance_histogram(subset, bin_width=bin_width)
            rows.extend(dict(r, domain=domain) for r in hist.to_rows())
            summary.append(
                {"domain": domain, "share_negative": hist.share_negative,
                 "share_ge_0.6": hist.share_high_positive, "n": hist.total}
            )
        write_tsv(output_dir / "stance_histogram.tsv", rows,
                  ["domain", "bin_low", "bin_high", "count", "share"])
        write_tsv(output_dir / "stance_summary.tsv", summary,
                  ["domain", "share_negative", "share_ge_0.6", "n"])

        def draw(ax):
            centers = [(lo + hi) / 2 for lo, hi in overall.bin_edges]
            ax.bar(centers, overall.counts, width=bin_width * 0.9)
            ax.set_xlabel("stance")
            ax.set_ylabel("# papers")
            ax.set_title("Stance distribution")

        _best_effort_chart(draw, output_dir / "stance_histogram.png")

    if "yearly" in wanted:
        yearly_rows: list[dict] = []
        negative_rows: list[dict] = []
        conditional_rows: list[dict] = []
        for domain in corpus.DOMAINS:
            subset = [p for p in scored if p.domain == domain]
            if not subset:
                continue
            avg = analysis.avg_stance_by_year(subset, sigma=sigma, **ci_kwargs)
            yearly_rows.extend(avg.to_rows(group=domain))
            neg = analysis.pct_negative_by_year(subset, sigma=sigma, **ci_kwargs)
            negative_rows.extend(neg.to_rows(group=domain))
            for sign in (annotation.POSITIVE, annotation.NEGATIVE):
                cond = analysis.conditional_avg_by_year(
                    subset, sign, sigma=sigma, **ci_kwargs
                )
                conditional_rows.extend(cond.to_rows(group=f"{domain}:{sign}"))
        columns = ["group", "year", "value", "ci_low", "ci_high", "n", "smoothed"]
        write_tsv(output_dir / "avg_stance_by_year.tsv", yearly_rows, columns)
        write_tsv(output_dir / "pct_negative_by_year.tsv", negative_rows, columns)
        write_tsv(output_dir / "conditional_avg_by_year.tsv", conditional_rows, columns)

        def draw(ax):
            for domain in corpus.DOMAINS:
                rows = [r for r in yearly_rows if r["group"] == domain and r["value"] is not None]
                ax.plot([r["year"] for r in rows], [r["smoothed"] for r in rows], label=domain)
            ax.set_xlabel("year")
            ax.set_ylabel("average stance")
            ax.legend()
            ax.set_title("Average stance by year (smoothed)")

        _best_effort_chart(draw, output_dir / "avg_stance_by_year.png")

    if "venues" in wanted:
        venue_series = analysis.venue_negativity(scored, sigma=sigma, **ci_kwargs)
        rows = []
        for venue, series in venue_series.items():
            for row in series.to_rows(group=venue):
                value = row["value"]
                # Stored values stay exact; the floor only shapes log plots.
                row["plot_value"] = (
                    max(value, floor_epsilon) if value is not None else None
                )
                rows.append(row)
        write_tsv(
            output_dir / "venue_negativity.tsv", rows,
            ["group", "year", "value", "ci_low", "ci_high", "n", "smoothed", "plot_value"],
        )

        def draw(ax):
            for venue, series in venue_series.items():
                pts = [(y, v) for y, v in sorted(series.values().items())]
                if not pts:
                    continue
                ax.plot(
                    [y for y, _ in pts],
                    [max(v, floor_epsilon) for _, v in pts],
                    label=venue, alpha=0.7,
                )
            ax.set_yscale("log")
            ax.set_xlabel("year")
            ax.set_ylabel("share negative (log)")
            ax.legend(fontsize=6, ncol=2)
            ax.set_title("Venue negativity by year")

        _best_effort_chart(draw, output_dir / "venue_negativity.png")

    if "citations" in wanted:
        stat = analysis.normalize_citations(scored, bin_width=bin_width, **ci_kwargs)
        write_tsv(output_dir / "citations_by_stance.tsv", stat.to_rows(),
                  ["bin_low", "bin_high", "mean", "ci_low", "ci_high", "n"])
        diag_rows = [
            {"year": year, "reason": reason, "n": n} for year, reason, n in stat.excluded_years
        ]
        diag_rows.append(
            {"year": DEFAULT_TSV_NONE, "reason": "missing citation count",
             "n": stat.missing_value_count}
        )
        write_tsv(output_dir / "citation_diagnostics.tsv", diag_rows, ["year", "reason", "n"])

        def draw(ax):
            xs = [(b.bin_low + b.bin_high) / 2 for b in stat.bins if b.mean is not None]
            ys = [b.mean for b in stat.bins if b.mean is not None]
            ax.plot(xs, ys, marker="o")
            ax.axhline(0.0, color="gray", lw=0.8)
            ax.set_xlabel("stance bin")
            ax.set_ylabel("normalized citations (z)")
            ax.set_title("Citation impact by stance")

        _best_effort_chart(draw, output_dir / "citations_by_stance.png")

    if "acceptance" in wanted:
        decided = [
            p for p in scored
            if p.decision in (corpus.DECISION_ACCEPTED, corpus.DECISION_REJECTED)
        ]
        if decided:
            table = analysis.acceptance_by_stance(
                decided, time_spans=analysis.DEFAULT_TIME_SPANS, bin_width=bin_width
            )
            write_tsv(output_dir / "acceptance_by_stance.tsv", table.to_rows(),
                      ["span", "bin_low", "bin_high", "rate", "delta_pp", "n_accepted", "n"])

            def draw(ax):
                xs = [(b.bin_low + b.bin_high) / 2 for b in table.bins if b.rate is not None]
                ys = [b.rate for b in table.bins if b.rate is not None]
                ax.plot(xs, ys, marker="o")
                ax.axhline(table.overall_rate, ls=":", color="gray",
                           label=f"overall {table.overall_rate:.1%}")
                ax.set_xlabel("stance bin")
                ax.set_ylabel("acceptance rate")
                ax.legend()
                ax.set_title("Acceptance rate by stance")

            _best_effort_chart(draw, output_dir / "acceptance_by_stance.png")
        else:
            click.echo("acceptance analysis skipped: no accept/reject decisions", err=True)

    _write_manifest(
        output_dir,
        "analyze",
        {"corpus": str(corpus_path), "which": which, "sigma": sigma,
         "bin_width": bin_width, "ci_level": ci_level, "seed": seed},
        [corpus_path],
    )
    click.echo(f"analysis tables written to {output_dir}")


@main.command()
@click.option("--input", "corpus_path", required=True, envvar="STANCELAB_INPUT",
              type=click.Path(exists=True, path_type=Path))
@click.option("--labels", "labels_path", required=True, envvar="STANCELAB_LABELS",
              type=click.Path(path_type=Path), help="Append-only annotation log.")
@click.option("--bind", default="127.0.0.1:8787", envvar="STANCELAB_BIND",
              help="host:port to listen on.")
@click.option("--static", "static_dir", type=click.Path(exists=True, path_type=Path),
              envvar="STANCELAB_STATIC", default=None, help="UI bundle directory.")
@click.option("--model", "model_path", type=click.Path(exists=True, path_type=Path),
              envvar="STANCELAB_MODEL", default=None,
              help="Linear model exposed to POST /predict as 'linear'.")
@click.option("--vocab", "vocab_path", type=click.Path(exists=True, path_type=Path),
              envvar="STANCELAB_VOCAB", default=None)
@click.option("--seed", default=0, type=int, envvar="STANCELAB_SEED")
def serve(corpus_path, labels_path, bind, static_dir, model_path, vocab_path, seed) -> None:
    """Run the annotation service until interrupted."""
    import uvicorn

    from .annotation import AnnotationStore, SamplerConfig
    from .service import create_app

    papers = corpus.load_corpus(corpus_path)
    store = AnnotationStore(log_path=labels_path)
    scorers = {
        "pos": model_mod.pos_scorer(),
        "zero": model_mod.zero_scorer(),
        "neg": model_mod.neg_scorer(),
    }
    if model_path is not None:
        if vocab_path is None:
            raise click.ClickException("--model requires --vocab")
        scorers["linear"] = model_mod.LinearScorer(
            model=model_mod.load_model(model_path), vocab=Vocabulary.load(vocab_path)
        )
    app = create_app(
        papers,
        store,
        sampler_config=SamplerConfig(rng_seed=seed),
        scorers=scorers,
        static_dir=static_dir,
    )
    host, _, port = bind.partition(":")
    if not port:
        raise click.ClickException(f"--bind must be host:port, got {bind!r}")
    try:
        uvicorn.run(app, host=host, port=int(port), log_level="info")
    finally:
        store.close()


if __name__ == "__main__":
    main()
