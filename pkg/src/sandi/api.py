# src/sandi/api.py
"""
HTTP + JSON surface of the accountability server (v1).

All bodies are UTF-8 JSON, binary fields base64. See docs/api_v1.md.
"""

from __future__ import annotations

import logging

from fastapi import FastAPI, Header, Request, Response
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from sandi import tagcrypt
from sandi.accountability import AccountabilityServer
from sandi.contracts import (
    AuthError,
    DecodeError,
    RejectReason,
    RequestError,
    SandiError,
    StorageError,
)

log = logging.getLogger(__name__)


class RegisterIn(BaseModel):
    token: str


class TagIn(BaseModel):
    credential: str
    com: str


class ReportIn(BaseModel):
    tag: str


def _bearer(authorization: str | None) -> str | None:
    if not authorization:
        return None
    scheme, _, value = authorization.partition(" ")
    if scheme.lower() != "bearer" or not value.strip():
        return None
    return value.strip()


def _error_body(exc: SandiError) -> dict[str, str]:
    return {"error": exc.error.code, "message": str(exc)}


def create_app(server: AccountabilityServer) -> FastAPI:
    app = FastAPI(title="sandi accountability server", version="1")

    # -----------------------------
    # Error mapping
    # -----------------------------

    @app.exception_handler(AuthError)
    async def _auth(_: Request, exc: AuthError) -> JSONResponse:
        return JSONResponse(status_code=401, content=_error_body(exc))

    @app.exception_handler(RequestError)
    async def _request(_: Request, exc: RequestError) -> JSONResponse:
        return JSONResponse(status_code=400, content=_error_body(exc))

    @app.exception_handler(DecodeError)
    async def _decode(_: Request, exc: DecodeError) -> JSONResponse:
        return JSONResponse(status_code=400, content=_error_body(exc))

    @app.exception_handler(StorageError)
    async def _storage(_: Request, exc: StorageError) -> JSONResponse:
        log.error("storage failure: %s %s", exc, exc.error.details or "")
        return JSONResponse(status_code=500, content={"error": exc.error.code})

    @app.exception_handler(RequestValidationError)
    async def _validation(_: Request, exc: RequestValidationError) -> JSONResponse:
        return JSONResponse(
            status_code=400, content={"error": "REQUEST_INVALID", "message": "malformed body"}
        )

    # -----------------------------
    # Routes
    # -----------------------------

    @app.post("/v1/register")
    def register(body: RegisterIn) -> dict[str, str]:
        return {"credential": server.register_sender(body.token)}

    @app.post("/v1/tag")
    def tag(body: TagIn) -> dict[str, str]:
        try:
            com = tagcrypt.b64d(body.com, field="com")
        except DecodeError as e:
            raise RequestError(str(e), code="REQUEST_BAD_COM") from e
        issued = server.issue_tag(body.credential, com)
        return {"tag": tagcrypt.b64e(tagcrypt.encode_tag(issued))}

    @app.post("/v1/report", status_code=204, response_model=None)
    def report(body: ReportIn) -> Response | JSONResponse:
        try:
            raw = tagcrypt.b64d(body.tag, field="tag")
        except DecodeError:
            return JSONResponse(status_code=400, content={"reason": RejectReason.DECODE.value})
        outcome = server.ingest_report(raw)
        if outcome.accepted:
            return Response(status_code=204)
        assert outcome.reason is not None
        return JSONResponse(status_code=400, content={"reason": outcome.reason.value})

    @app.post("/v1/epoch/advance")
    def advance(authorization: str | None = Header(default=None)) -> dict[str, int]:
        summary = server.advance_epoch(_bearer(authorization))
        return {"epoch": summary.epoch, "updated": summary.updated}

    @app.get("/v1/score")
    def score(authorization: str | None = Header(default=None)) -> dict[str, str]:
        sc, label = server.get_score(_bearer(authorization))
        return {"sc": str(sc), "y": label}

    @app.get("/v1/vk")
    def vk() -> dict[str, object]:
        return {
            "vk": tagcrypt.b64e(server.vk_bytes),
            "labels": list(server.reputation_cfg.labels),
        }

    return app
