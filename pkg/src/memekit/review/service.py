"""HTTP surface of the review backend.

Every payload that reaches an evaluator is built from blinded item views;
response models carry no model/condition fields anywhere, so blinding holds
at the schema level rather than by convention. The survey UI is served as
static assets when a bundle directory is present.
"""

from __future__ import annotations

import os
from pathlib import Path
from types import SimpleNamespace
from typing import Optional

from fastapi import FastAPI, HTTPException
from fastapi.responses import FileResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from ..matcher import MatcherError
from .store import ReviewError, ReviewStore, SourceDescriptor


class AnnotationPayload(BaseModel):
    image_caption: str = ""
    embedded_text: str = ""
    meme_caption: str = ""
    literary_devices: list[str] = Field(default_factory=list)
    emotions: Optional[list[str]] = None


class SurveySource(BaseModel):
    model: str
    with_context: bool
    records: dict[str, AnnotationPayload]


class SurveyMeme(BaseModel):
    meme_id: str
    image: str = ""


class CreateSurveyRequest(BaseModel):
    memes: list[SurveyMeme]
    annotation_sets: list[SurveySource]
    seed: int = 0


class CandidateView(BaseModel):
    candidate_id: str
    text: str


class ItemView(BaseModel):
    schema_version: int = 1
    item_id: str
    meme_id: str
    subtask: str
    selection_mode: str
    candidates: list[CandidateView]
    allow_none: bool


class ProgressView(BaseModel):
    answered: int
    total: int


class NextItemResponse(BaseModel):
    schema_version: int = 1
    done: bool
    item: Optional[ItemView] = None
    progress: ProgressView


class VoteRequest(BaseModel):
    evaluator_id: str
    item_id: str
    selected: list[str]


class VoteResponse(BaseModel):
    schema_version: int = 1
    item_id: str
    recorded: bool


class CreateSurveyResponse(BaseModel):
    schema_version: int = 1
    survey_id: str
    n_items: int


class QueueEntry(BaseModel):
    key: str
    instance_id: str
    template_id: str
    stage1_method: str
    stage1_score: float
    stage2_score: Optional[float]
    status: str


class VerdictRequest(BaseModel):
    verdict: str
    reviewer_id: str = ""


def _record_object(payload: AnnotationPayload) -> SimpleNamespace:
    return SimpleNamespace(
        image_caption=payload.image_caption,
        embedded_text=payload.embedded_text,
        meme_caption=payload.meme_caption,
        literary_devices=frozenset(payload.literary_devices),
        emotions=None if payload.emotions is None else frozenset(payload.emotions),
    )


def create_app(store: ReviewStore, static_dir: Optional[str | Path] = None) -> FastAPI:
    app = FastAPI(title="memekit review service")

    @app.post("/surveys", response_model=CreateSurveyResponse)
    def create_survey(request: CreateSurveyRequest) -> CreateSurveyResponse:
        memes = [SimpleNamespace(meme_id=m.meme_id, image=m.image) for m in request.memes]
        annotation_sets = [
            (
                SourceDescriptor(model=src.model, with_context=src.with_context),
                {mid: _record_object(rec) for mid, rec in src.records.items()},
            )
            for src in request.annotation_sets
        ]
        try:
            survey = store.create_survey(memes, annotation_sets, seed=request.seed)
        except ReviewError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return CreateSurveyResponse(survey_id=survey.survey_id, n_items=len(survey.items))

    @app.get("/surveys/{survey_id}/next", response_model=NextItemResponse)
    def next_item(survey_id: str, evaluator: str) -> NextItemResponse:
        try:
            item = store.next_item(survey_id, evaluator)
            answered, total = store.progress(survey_id, evaluator)
        except ReviewError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        progress = ProgressView(answered=answered, total=total)
        if item is None:
            return NextItemResponse(done=True, progress=progress)
        return NextItemResponse(
            done=False,
            item=ItemView(**item.blinded()),
            progress=progress,
        )

    @app.post("/votes", response_model=VoteResponse)
    def record_vote(request: VoteRequest) -> VoteResponse:
        try:
            vote = store.record_vote(request.evaluator_id, request.item_id, request.selected)
        except ReviewError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return VoteResponse(item_id=vote.item_id, recorded=True)

    @app.get("/surveys/{survey_id}/tally")
    def tally(survey_id: str) -> dict:
        # client payloads stay blinded everywhere: cell keys are anonymized
        # group labels; the unblinded tally lives server-side (store.tally)
        try:
            full = store.tally(survey_id).to_dict()
        except ReviewError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        cells = {
            f"group-{index + 1}": counts
            for index, (_, counts) in enumerate(sorted(full["cells"].items()))
        }
        return {**full, "cells": cells}

    @app.get("/matches/queue", response_model=list[QueueEntry])
    def queue() -> list[QueueEntry]:
        return [
            QueueEntry(
                key=store.queue.key_for(cand),
                instance_id=cand.instance_id,
                template_id=cand.template_id,
                stage1_method=cand.stage1_method,
                stage1_score=cand.stage1_score,
                stage2_score=cand.stage2_score,
                status=cand.status,
            )
            for cand in store.queue.pending()
        ]

    @app.post("/matches/{key}/verdict", response_model=QueueEntry)
    def verdict(key: str, request: VerdictRequest) -> QueueEntry:
        try:
            cand = store.match_verdict(key, request.verdict, request.reviewer_id)
        except ReviewError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        except MatcherError as exc:
            status = 404 if "unknown" in str(exc) else 409
            raise HTTPException(status_code=status, detail=str(exc)) from exc
        return QueueEntry(
            key=key,
            instance_id=cand.instance_id,
            template_id=cand.template_id,
            stage1_method=cand.stage1_method,
            stage1_score=cand.stage1_score,
            stage2_score=cand.stage2_score,
            status=cand.status,
        )

    @app.get("/media/{meme_id}")
    def media(meme_id: str) -> FileResponse:
        try:
            path = store.media_path(meme_id)
        except ReviewError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        if not Path(path).exists():
            raise HTTPException(status_code=404, detail=f"media file missing: {path}")
        return FileResponse(path)

    static_dir = static_dir or os.environ.get("MEMEKIT_UI_DIR")
    if static_dir and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")
    return app


def serve(data_dir: Optional[str] = None, port: int = 8321,
          static_dir: Optional[str] = None) -> None:
    import uvicorn

    store = ReviewStore(data_dir=data_dir)
    app = create_app(store, static_dir=static_dir)
    uvicorn.run(app, host="127.0.0.1", port=port)
