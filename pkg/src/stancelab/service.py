"""HTTP service for the annotation queue, submissions, agreement feedback,
and stance prediction."""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

from fastapi import FastAPI, HTTPException, Query, Response
from fastapi.responses import PlainTextResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from . import __version__
from .annotation import (
    AnnotationStore,
    QueueExhaustedError,
    SamplerConfig,
    StanceSampler,
    agreement_report,
)
from .corpus import PaperRecord
from .model import Scorer, ScorerUnavailableError, predict

GUIDELINES_VERSION = "1"
DEFAULT_LEASE_SECONDS = 30 * 60
MIN_COMMON_FOR_FEEDBACK = 5


def default_guidelines() -> str:
    return (
        resources.files("stancelab").joinpath("assets/guidelines.md").read_text("utf-8")
    )


@dataclass
class SessionState:
    """Leases and counters for one annotator."""

    leases: dict[str, float] = field(default_factory=dict)  # paper id -> expiry
    labels_submitted: int = 0

    def active_leases(self, now: float) -> set[str]:
        self.leases = {pid: exp for pid, exp in self.leases.items() if exp > now}
        return set(self.leases)


class SubmitRequest(BaseModel):
    annotator_id: str = Field(min_length=1)
    paper_id: str = Field(min_length=1)
    stance: float = Field(ge=-1.0, le=1.0)


class PredictRequest(BaseModel):
    title: str = Field(min_length=1)
    abstract: str = ""
    scorer: str = Field(min_length=1)


def _agreement_rows(store: AnnotationStore, annotator_id: str, min_common: int) -> list[dict]:
    report = agreement_report(store)
    rows = []
    for pair, (kappa, n_common) in sorted(report.pairwise_kappa.items()):
        if annotator_id not in pair or n_common < min_common:
            continue
        other = pair[0] if pair[1] == annotator_id else pair[1]
        pearson_entry = report.pairwise_pearson.get(pair)
        rows.append(
            {
                "co_annotator": other,
                "pearson": pearson_entry[0] if pearson_entry else None,
                "kappa": kappa,
                "n_common": n_common,
            }
        )
    return rows


def create_app(
    papers: Sequence[PaperRecord],
    store: AnnotationStore,
    sampler_config: SamplerConfig | None = None,
    scorers: Mapping[str, Scorer] | None = None,
    guidelines_text: str | None = None,
    static_dir: str | Path | None = None,
    lease_seconds: float = DEFAULT_LEASE_SECONDS,
) -> FastAPI:
    """Wire the annotation service around a corpus and a store."""
    app = FastAPI(title="stancelab annotation service", version=__version__)
    papers_by_id = {p.id: p for p in papers}
    sampler = StanceSampler(sampler_config or SamplerConfig())
    sessions: dict[str, SessionState] = {}
    lock = threading.RLock()
    guidelines = guidelines_text if guidelines_text is not None else default_guidelines()
    available_scorers = dict(scorers or {})

    @app.get("/health")
    def health() -> dict:
        return {"version": __version__, "papers": len(papers_by_id)}

    @app.get("/queue/next")
    def queue_next(annotator: str = Query(min_length=1)) -> Response:
        now = time.time()
        with lock:
            session = sessions.setdefault(annotator, SessionState())
            leased = session.active_leases(now)
            labeled = store.papers_labeled_by(annotator)
            pool = [
                p for p in papers if p.id not in labeled and p.id not in leased
            ]
            if not pool:
                return Response(status_code=204)
            try:
                paper = sampler.next(pool)
            except QueueExhaustedError:
                return Response(status_code=204)
            session.leases[paper.id] = now + lease_seconds
        from fastapi.responses import JSONResponse

        return JSONResponse(
            {
                "paper": {
                    "id": paper.id,
                    "title": paper.title,
                    "abstract": paper.abstract,
                },
                "guidelines_version": GUIDELINES_VERSION,
            }
        )

    @app.post("/annotations")
    def submit(request: SubmitRequest) -> dict:
        if request.paper_id not in papers_by_id:
            raise HTTPException(status_code=404, detail=f"unknown paper {request.paper_id!r}")
        with lock:
            _, overwritten = store.submit(
                request.paper_id, request.annotator_id, request.stance
            )
            session = sessions.setdefault(request.annotator_id, SessionState())
            session.leases.pop(request.paper_id, None)
            session.labels_submitted += 1
            aggregate = store.aggregate(request.paper_id)
            rows = _agreement_rows(store, request.annotator_id, MIN_COMMON_FOR_FEEDBACK)
        return {
            "status": "ok",
            "overwritten": overwritten,
            "aggregate": {
                "paper_id": aggregate.paper_id,
                "mean_stance": aggregate.mean_stance,
                "n_annotators": aggregate.n_annotators,
                "coarse": aggregate.coarse,
            },
            "agreement": rows or None,
            "labels_submitted": session.labels_submitted,
        }

    @app.get("/agreement")
    def agreement(annotator: str = Query(min_length=1)) -> dict:
        with lock:
            if annotator not in store.annotators():
                raise HTTPException(status_code=404, detail=f"unknown annotator {annotator!r}")
            rows = _agreement_rows(store, annotator, min_common=2)
        return {"annotator_id": annotator, "rows": rows}

    @app.get("/papers/{paper_id}")
    def get_paper(paper_id: str) -> dict:
        paper = papers_by_id.get(paper_id)
        if paper is None:
            raise HTTPException(status_code=404, detail=f"unknown paper {paper_id!r}")
        return paper.to_dict()

    @app.post("/predict")
    def predict_stance(request: PredictRequest) -> dict:
        scorer = available_scorers.get(request.scorer)
        if scorer is None:
            raise HTTPException(status_code=404, detail=f"unknown scorer {request.scorer!r}")
        try:
            probe = PaperRecord(
                id="adhoc", title=request.title, year=2000, abstract=request.abstract
            )
            stance = predict(scorer, probe)
        except ScorerUnavailableError as exc:
            raise HTTPException(status_code=503, detail=str(exc)) from exc
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return {"stance": stance, "scorer": request.scorer}

    @app.get("/guidelines", response_class=PlainTextResponse)
    def get_guidelines() -> str:
        return guidelines

    if static_dir is not None:
        app.mount("/ui", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app
