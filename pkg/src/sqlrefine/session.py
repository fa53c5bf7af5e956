"""Session management with append-only event-log persistence.

Each session is one JSON-lines file under the data directory; every mutation
appends an event carrying the resulting SQL snapshot. Reloading replays the
events through the same code paths and verifies the snapshots, so a restarted
service continues exactly where it stopped. Mutations to one session are
serialized by a per-session lock; reads are lock-free on immutable values.
"""

from __future__ import annotations

import json
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from .ast_nodes import Query
from .clausegen import RuleBasedGenerator
from .decompose import decompose
from .errors import SessionError, SqlRefineError
from .explain import Explanation, explain_query
from .parser import parse_sql
from .pipeline import apply_step_edit, delete_step, insert_step
from .render import render_sql
from .schema import SchemaCatalog
from .simulate import LiteralBackend


@dataclass
class Session:
    id: str
    schema_id: str
    question: str | None = None
    ast: Query | None = None
    history: list[dict] = field(default_factory=list)
    created: float = 0.0
    updated: float = 0.0
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def explanation(self, schema: SchemaCatalog) -> Explanation | None:
        if self.ast is None:
            return None
        return explain_query(decompose(self.ast), schema)

    def sql(self) -> str | None:
        return render_sql(self.ast) if self.ast is not None else None


class SessionStore:
    """All live sessions plus their event logs on disk."""

    def __init__(self, data_dir: str | Path, schemas: dict[str, SchemaCatalog],
                 text_to_sql=None, generator=None):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.schemas = schemas
        self.text_to_sql = text_to_sql or LiteralBackend()
        self.generator = generator or RuleBasedGenerator()
        self._sessions: dict[str, Session] = {}
        self._store_lock = threading.Lock()
        self._load_all()

    # -- persistence --------------------------------------------------------

    def _log_path(self, session_id: str) -> Path:
        return self.data_dir / f"{session_id}.jsonl"

    def _append(self, session: Session, event: dict) -> None:
        event = {"ts": time.time(), **event}
        session.history.append(event)
        session.updated = event["ts"]
        with self._log_path(session.id).open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(event) + "\n")

    def _load_all(self) -> None:
        for path in sorted(self.data_dir.glob("*.jsonl")):
            session = self._replay(path)
            self._sessions[session.id] = session

    def _replay(self, path: Path) -> Session:
        events = []
        with path.open(encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, 1):
                line = line.strip()
                if not line:
                    continue
                try:
                    events.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise SessionError(f"{path.name}:{line_no}: corrupt event: {exc}") from None
        if not events or events[0].get("type") != "created":
            raise SessionError(f"{path.name}: log does not start with a created event")
        head = events[0]
        schema = self._schema(head["schema_id"])
        session = Session(id=path.stem, schema_id=head["schema_id"],
                          created=head.get("ts", 0.0), updated=head.get("ts", 0.0))
        session.history = events
        for event in events[1:]:
            kind = event.get("type")
            if kind == "question":
                session.question = event["text"]
                session.ast = parse_sql(event["sql"], schema)
            elif kind == "edit":
                session.ast, _ = apply_step_edit(session.ast, schema, event["index"],
                                                 event["text"], self.generator)
            elif kind == "insert":
                session.ast = insert_step(session.ast, schema, event["position"],
                                          event["text"], self.generator)
            elif kind == "delete":
                session.ast = delete_step(session.ast, schema, event["index"])
            else:
                raise SessionError(f"{path.name}: unknown event type {kind!r}")
            expected = event.get("sql")
            actual = render_sql(session.ast) if session.ast is not None else None
            if expected != actual:
                raise SessionError(
                    f"{path.name}: replay mismatch: expected {expected!r}, got {actual!r}")
            session.updated = event.get("ts", session.updated)
        return session

    # -- lookups -------------------------------------------------------------

    def _schema(self, schema_id: str) -> SchemaCatalog:
        schema = self.schemas.get(schema_id)
        if schema is None:
            raise SessionError(f"unknown schema {schema_id!r}")
        return schema

    def get(self, session_id: str) -> Session:
        session = self._sessions.get(session_id)
        if session is None:
            raise SessionError(f"unknown session {session_id!r}")
        return session

    # -- operations ------------------------------------------------------------

    def create(self, schema_id: str) -> Session:
        self._schema(schema_id)
        session = Session(id=uuid.uuid4().hex, schema_id=schema_id, created=time.time())
        with self._store_lock:
            self._sessions[session.id] = session
        self._append(session, {"type": "created", "schema_id": schema_id})
        return session

    def ask(self, session_id: str, question: str) -> Session:
        session = self.get(session_id)
        schema = self._schema(session.schema_id)
        with session.lock:
            ast = self.text_to_sql(question, schema)
            # backend output must render/parse cleanly before it is accepted
            rendered = render_sql(ast)
            parse_sql(rendered, schema)
            session.question = question
            session.ast = ast
            self._append(session, {"type": "question", "text": question, "sql": rendered})
        return session

    def _require_query(self, session: Session) -> Query:
        if session.ast is None:
            raise SessionError("session has no query yet; ask a question first")
        return session.ast

    def edit_step(self, session_id: str, index: int, text: str) -> tuple[Session, str]:
        session = self.get(session_id)
        schema = self._schema(session.schema_id)
        with session.lock:
            ast = self._require_query(session)
            new_ast, path = apply_step_edit(ast, schema, index, text, self.generator)
            if path != "noop":
                session.ast = new_ast
                self._append(session, {"type": "edit", "index": index, "text": text,
                                       "path": path, "sql": render_sql(new_ast)})
        return session, path

    def insert_step(self, session_id: str, position: int, text: str) -> Session:
        session = self.get(session_id)
        schema = self._schema(session.schema_id)
        with session.lock:
            ast = self._require_query(session)
            new_ast = insert_step(ast, schema, position, text, self.generator)
            session.ast = new_ast
            self._append(session, {"type": "insert", "position": position,
                                   "text": text, "sql": render_sql(new_ast)})
        return session

    def delete_step(self, session_id: str, index: int) -> Session:
        session = self.get(session_id)
        schema = self._schema(session.schema_id)
        with session.lock:
            ast = self._require_query(session)
            new_ast = delete_step(ast, schema, index)
            session.ast = new_ast
            self._append(session, {"type": "delete", "index": index,
                                   "sql": render_sql(new_ast)})
        return session

    def view(self, session_id: str, executor=None) -> dict:
        session = self.get(session_id)
        schema = self._schema(session.schema_id)
        explanation = session.explanation(schema)
        out = {
            "id": session.id,
            "schema_id": session.schema_id,
            "question": session.question,
            "sql": session.sql(),
            "explanation": explanation.to_dict() if explanation else None,
            "history": [e for e in session.history if e.get("type") != "created"],
            "created": session.created,
            "updated": session.updated,
        }
        if executor is not None and session.ast is not None:
            try:
                out["result_preview"] = executor.run(session.sql())[:20]
            except SqlRefineError as exc:
                out["result_preview_error"] = str(exc)
        return out

    def verify_invariants(self, session_id: str) -> None:
        """Explanation/AST coherence plus replay determinism for one session."""
        session = self.get(session_id)
        schema = self._schema(session.schema_id)
        if session.ast is not None:
            recomputed = explain_query(decompose(session.ast), schema)
            live = session.explanation(schema)
            if live.texts() != recomputed.texts():
                raise SessionError(f"{session.id}: explanation out of sync with query")
        replayed = self._replay(self._log_path(session.id))
        if (replayed.sql() or "") != (session.sql() or ""):
            raise SessionError(f"{session.id}: history replay diverges from live state")
