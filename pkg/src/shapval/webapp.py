"""HTTP surface over the study service.

Thin JSON adapters only: every behavior lives in StudyService, which keeps
this layer replaceable and the contract testable without sockets.
"""

from __future__ import annotations

from fastapi import Body, FastAPI, Header, Query
from fastapi.responses import JSONResponse, PlainTextResponse

from .study import (SCHEMA_VERSION, AnalystProfile, SessionLockedError, StudyService,
                    StudyStateError, UnknownSessionError, ValidationRejectedError)


def _status_for(exc: StudyStateError) -> int:
    if isinstance(exc, UnknownSessionError):
        return 404
    if isinstance(exc, ValidationRejectedError):
        return 422
    if isinstance(exc, SessionLockedError):
        return 409
    return 409


def create_app(service: StudyService) -> FastAPI:
    app = FastAPI(title="case-review study service", docs_url=None, redoc_url=None)

    @app.exception_handler(StudyStateError)
    async def _handle(request, exc: StudyStateError):
        return JSONResponse(status_code=_status_for(exc),
                            content={"schema_version": SCHEMA_VERSION, "error": str(exc)})

    @app.get("/health")
    async def health():
        return {"schema_version": SCHEMA_VERSION, "status": "ok",
                "dataset": service.ctx.dataset, "n_cases": len(service.ctx.cases),
                "records": len(service.log)}

    @app.post("/sessions")
    async def create_session(body: dict = Body(...)):
        try:
            profile = AnalystProfile(
                analyst_id=str(body["analyst_id"]),
                professional=bool(body["professional"]),
                ml_knowledge=str(body["ml_knowledge"]),
                shapley_familiarity=str(body["shapley_familiarity"]),
                domain_knowledge=str(body["domain_knowledge"]),
            )
            dataset = str(body["dataset"])
            seed = int(body["seed"])
        except (KeyError, TypeError, ValueError) as e:
            raise ValidationRejectedError(f"malformed session request: {e!r}") from None
        return service.create_session(profile, dataset, seed)

    @app.get("/sessions/{session_id}/next")
    async def next_case(session_id: str, x_client_token: str | None = Header(default=None)):
        return service.next_case(session_id, client_token=x_client_token)

    @app.post("/sessions/{session_id}/review")
    async def submit_review(session_id: str, body: dict = Body(...),
                            x_client_token: str | None = Header(default=None)):
        try:
            decision = str(body["decision"])
            confidence = str(body["confidence"])
            clarity = body.get("clarity")
            view_duration = float(body["view_duration"])
        except (KeyError, TypeError, ValueError) as e:
            raise ValidationRejectedError(f"malformed review request: {e!r}") from None
        return service.submit_review(
            session_id, decision, confidence,
            None if clarity is None else str(clarity), view_duration,
            case_id=body.get("case_id"), reloaded=bool(body.get("reloaded", False)),
            client_token=x_client_token)

    @app.get("/export")
    async def export(since: int | None = Query(default=None)):
        return PlainTextResponse(service.export_ndjson(since),
                                 media_type="application/x-ndjson")

    return app
