"""HTTP session service: question -> SQL -> explanation -> step edits.

Endpoints::

    POST   /sessions                {"schema_id": ...}
    POST   /sessions/{id}/question  {"text": ...}
    GET    /sessions/{id}
    PUT    /sessions/{id}/steps/{n} {"text": ...}
    POST   /sessions/{id}/steps     {"position": ..., "text": ...}
    DELETE /sessions/{id}/steps/{n}
    GET    /schemas

Configuration comes from environment variables: SQLREFINE_DATA_DIR,
SQLREFINE_BIND (host:port, required to serve), SQLREFINE_SCHEMA_DIR,
SQLREFINE_T2S_URL, SQLREFINE_CLAUSEGEN_URL, SQLREFINE_EXECUTOR_DB.
"""

from __future__ import annotations

import os
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from .clausegen import RemoteGenerator, RuleBasedGenerator
from .errors import (
    ComposeError,
    EditError,
    GenerationError,
    RemoteBackendError,
    ResolutionError,
    SessionError,
    SqlRefineError,
    SqlSyntaxError,
)
from .evaluate import ExecutionChecker
from .schema import SchemaCatalog, load_schema
from .session import SessionStore
from .simulate import LiteralBackend, RemoteTextToSql


def load_schema_dir(path: str | Path) -> dict[str, SchemaCatalog]:
    schemas: dict[str, SchemaCatalog] = {}
    for file in sorted(Path(path).glob("*.json")):
        catalog = load_schema(file)
        schemas[catalog.schema_id] = catalog
    return schemas


def _status_for(exc: SqlRefineError) -> int:
    if isinstance(exc, SessionError):
        message = str(exc)
        if "unknown session" in message or "unknown schema" in message:
            return 404
        if "no step" in message or "out of range" in message or "position" in message:
            return 400
        return 422
    if isinstance(exc, RemoteBackendError):
        return 502 if exc.retryable else 422
    if isinstance(exc, (GenerationError, EditError, ComposeError,
                        SqlSyntaxError, ResolutionError)):
        return 422
    return 500


def create_app(store: SessionStore, executor: ExecutionChecker | None = None) -> FastAPI:
    app = FastAPI(title="sqlrefine", version="0.1.0")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    app.state.store = store
    app.state.executor = executor

    @app.exception_handler(SqlRefineError)
    async def _handle(request: Request, exc: SqlRefineError):
        return JSONResponse(status_code=_status_for(exc),
                            content={"error": str(exc), "kind": type(exc).__name__})

    def view(session_id: str, extra: dict | None = None) -> dict:
        out = store.view(session_id, executor=executor)
        if extra:
            out.update(extra)
        return out

    @app.get("/schemas")
    def list_schemas():
        return {
            "schemas": [
                {
                    "schema_id": sid,
                    "tables": {
                        t.name: [c for c, _ in t.columns] for t in catalog.tables
                    },
                }
                for sid, catalog in sorted(store.schemas.items())
            ]
        }

    @app.post("/sessions", status_code=201)
    def create_session(body: dict):
        schema_id = body.get("schema_id")
        if not schema_id:
            raise SessionError("request body must carry a schema_id")
        session = store.create(schema_id)
        return view(session.id)

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        return view(session_id)

    @app.post("/sessions/{session_id}/question")
    def ask(session_id: str, body: dict):
        text = body.get("text", "")
        if not text.strip():
            raise SessionError("question text must not be empty")
        store.ask(session_id, text)
        return view(session_id)

    @app.put("/sessions/{session_id}/steps/{index}")
    def edit_step(session_id: str, index: int, body: dict):
        text = body.get("text", "")
        _, path = store.edit_step(session_id, index, text)
        return view(session_id, {"edit_path": path})

    @app.post("/sessions/{session_id}/steps")
    def insert_step(session_id: str, body: dict):
        position = body.get("position")
        text = body.get("text", "")
        if not isinstance(position, int):
            raise SessionError("insert position must be an integer")
        store.insert_step(session_id, position, text)
        return view(session_id)

    @app.delete("/sessions/{session_id}/steps/{index}")
    def delete_step(session_id: str, index: int):
        store.delete_step(session_id, index)
        return view(session_id)

    return app


def build_store_from_env() -> tuple[SessionStore, ExecutionChecker | None]:
    data_dir = os.environ.get("SQLREFINE_DATA_DIR", "./sqlrefine-data")
    schema_dir = os.environ.get("SQLREFINE_SCHEMA_DIR")
    schemas = load_schema_dir(schema_dir) if schema_dir else {}
    t2s_url = os.environ.get("SQLREFINE_T2S_URL")
    backend = RemoteTextToSql(t2s_url) if t2s_url else LiteralBackend()
    gen_url = os.environ.get("SQLREFINE_CLAUSEGEN_URL")
    generator = RemoteGenerator(gen_url) if gen_url else RuleBasedGenerator()
    store = SessionStore(data_dir, schemas, text_to_sql=backend, generator=generator)
    db = os.environ.get("SQLREFINE_EXECUTOR_DB")
    executor = ExecutionChecker(db) if db else None
    return store, executor


def serve(bind: str | None = None) -> None:
    import uvicorn

    bind = bind or os.environ.get("SQLREFINE_BIND")
    if not bind:
        raise SystemExit("SQLREFINE_BIND (host:port) is required to serve")
    host, _, port = bind.partition(":")
    store, executor = build_store_from_env()
    app = create_app(store, executor)
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8000))


if __name__ == "__main__":
    serve()
