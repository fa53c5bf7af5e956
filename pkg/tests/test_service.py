import json
import random

import pytest
from fastapi.testclient import TestClient

from sqlrefine.errors import SessionError
from sqlrefine.service import create_app, load_schema_dir
from sqlrefine.session import SessionStore


@pytest.fixture
def store(tmp_path, schemas):
    return SessionStore(tmp_path / "data", schemas)


@pytest.fixture
def client(store):
    return TestClient(create_app(store))


def test_create_session(client):
    r = client.post("/sessions", json={"schema_id": "concert_singer"})
    assert r.status_code == 201
    body = r.json()
    assert body["sql"] is None
    assert body["explanation"] is None


def test_create_unknown_schema_404(client):
    r = client.post("/sessions", json={"schema_id": "missing"})
    assert r.status_code == 404


def test_two_creates_have_distinct_ids(client):
    a = client.post("/sessions", json={"schema_id": "concert_singer"}).json()["id"]
    b = client.post("/sessions", json={"schema_id": "concert_singer"}).json()["id"]
    assert a != b


def _session_with_query(client, sql="SELECT name FROM singer WHERE age > 30"):
    sid = client.post("/sessions", json={"schema_id": "concert_singer"}).json()["id"]
    r = client.post(f"/sessions/{sid}/question", json={"text": sql})
    assert r.status_code == 200
    return sid, r.json()


def test_ask_literal_stub(client):
    sid, body = _session_with_query(client, "SELECT name FROM singer")
    assert body["sql"] == "SELECT name FROM singer"
    assert [s["text"] for s in body["explanation"]["steps"]] == [
        "In table singer", "Return the name"]


def test_ask_remote_backend_failure_is_retryable(tmp_path, schemas):
    from sqlrefine.errors import RemoteBackendError

    def failing_backend(question, schema):
        raise RemoteBackendError("text-to-SQL backend unreachable: timeout")

    store = SessionStore(tmp_path / "data", schemas, text_to_sql=failing_backend)
    client = TestClient(create_app(store))
    sid = client.post("/sessions", json={"schema_id": "concert_singer"}).json()["id"]
    r = client.post(f"/sessions/{sid}/question", json={"text": "anything"})
    assert r.status_code == 502
    assert "unreachable" in r.json()["error"]
    # the session is untouched and usable afterwards
    assert client.get(f"/sessions/{sid}").json()["sql"] is None


def test_ask_invalid_sql_flagged(client):
    sid = client.post("/sessions", json={"schema_id": "concert_singer"}).json()["id"]
    r = client.post(f"/sessions/{sid}/question", json={"text": "SELECT nope FROM singer"})
    assert r.status_code == 422
    assert "nope" in r.json()["error"]


def test_ask_empty_question_rejected(client):
    sid = client.post("/sessions", json={"schema_id": "concert_singer"}).json()["id"]
    r = client.post(f"/sessions/{sid}/question", json={"text": "  "})
    assert r.status_code == 422


def test_edit_step_direct_path(client):
    sid, _ = _session_with_query(client)
    r = client.put(f"/sessions/{sid}/steps/3", json={"text": "Return the age"})
    assert r.status_code == 200
    assert r.json()["edit_path"] == "direct"
    assert r.json()["sql"] == "SELECT age FROM singer WHERE age > 30"


def test_edit_step_noop(client):
    sid, before = _session_with_query(client)
    r = client.put(f"/sessions/{sid}/steps/3", json={"text": "Return the name"})
    assert r.json()["edit_path"] == "noop"
    assert r.json()["sql"] == before["sql"]
    assert r.json()["history"] == before["history"]


def test_edit_step_generated_path(client):
    sid, _ = _session_with_query(client)
    r = client.put(f"/sessions/{sid}/steps/2", json={
        "text": "Keep the records where the age is less than 20"})
    assert r.json()["edit_path"] == "generated"
    assert r.json()["sql"] == "SELECT name FROM singer WHERE age < 20"


def test_edit_unclassifiable_surfaced(client):
    sid, _ = _session_with_query(client)
    r = client.put(f"/sessions/{sid}/steps/2", json={"text": "gibberish beyond parsing"})
    assert r.status_code == 422
    assert "error" in r.json()


def test_edit_bad_index(client):
    sid, _ = _session_with_query(client)
    r = client.put(f"/sessions/{sid}/steps/99", json={"text": "Return the age"})
    assert r.status_code == 400


def test_insert_step(client):
    sid, _ = _session_with_query(client, "SELECT name FROM singer")
    r = client.post(f"/sessions/{sid}/steps", json={
        "position": 2, "text": "Keep the records where the age is greater than 40"})
    assert r.status_code == 200
    assert r.json()["sql"] == "SELECT name FROM singer WHERE age > 40"


def test_delete_step(client):
    sid, _ = _session_with_query(client)
    r = client.delete(f"/sessions/{sid}/steps/2")
    assert r.status_code == 200
    assert r.json()["sql"] == "SELECT name FROM singer"


def test_delete_sole_select_rejected(client):
    sid, _ = _session_with_query(client, "SELECT name FROM singer")
    r = client.delete(f"/sessions/{sid}/steps/2")
    assert r.status_code == 422
    assert "return something" in r.json()["error"]


def test_marker_not_editable(client):
    sid, _ = _session_with_query(
        client,
        "SELECT name FROM singer WHERE singer_id IN (SELECT singer_id FROM singer_in_concert)")
    r = client.put(f"/sessions/{sid}/steps/1", json={"text": "anything"})
    assert r.status_code == 422
    assert "structural" in r.json()["error"]


def test_combine_step_editable(client):
    sid, body = _session_with_query(
        client,
        "SELECT name FROM singer WHERE singer_id IN (SELECT singer_id FROM singer_in_concert)")
    steps = body["explanation"]["steps"]
    combine_index = steps[-1]["index"]
    r = client.put(f"/sessions/{sid}/steps/{combine_index}", json={
        "text": "Keep the records where the singer id not in q1"})
    assert r.status_code == 200
    assert "NOT IN" in r.json()["sql"]


def test_get_state_fresh_and_missing(client):
    sid = client.post("/sessions", json={"schema_id": "concert_singer"}).json()["id"]
    r = client.get(f"/sessions/{sid}")
    assert r.status_code == 200
    assert r.json()["sql"] is None
    assert client.get("/sessions/missing").status_code == 404


def test_history_grows(client):
    sid, _ = _session_with_query(client)
    client.put(f"/sessions/{sid}/steps/3", json={"text": "Return the age"})
    body = client.get(f"/sessions/{sid}").json()
    kinds = [h["type"] for h in body["history"]]
    assert kinds == ["question", "edit"]


def test_schemas_endpoint(client):
    r = client.get("/schemas")
    ids = [s["schema_id"] for s in r.json()["schemas"]]
    assert "concert_singer" in ids and "pets" in ids


def test_explanation_coherence_after_every_mutation(store):
    client = TestClient(create_app(store))
    sid, _ = _session_with_query(client)
    client.put(f"/sessions/{sid}/steps/3", json={"text": "Return the age"})
    store.verify_invariants(sid)
    client.post(f"/sessions/{sid}/steps", json={
        "position": 3, "text": "Group the records based on the country"})
    store.verify_invariants(sid)
    client.delete(f"/sessions/{sid}/steps/2")
    store.verify_invariants(sid)


def test_restart_reloads_sessions(tmp_path, schemas):
    data = tmp_path / "data"
    store = SessionStore(data, schemas)
    client = TestClient(create_app(store))
    sid, _ = _session_with_query(client)
    client.put(f"/sessions/{sid}/steps/3", json={"text": "Return the age"})
    final_sql = client.get(f"/sessions/{sid}").json()["sql"]

    reloaded = SessionStore(data, schemas)
    client2 = TestClient(create_app(reloaded))
    assert client2.get(f"/sessions/{sid}").json()["sql"] == final_sql
    reloaded.verify_invariants(sid)


def test_corrupt_log_refused(tmp_path, schemas):
    data = tmp_path / "data"
    store = SessionStore(data, schemas)
    session = store.create("concert_singer")
    log = data / f"{session.id}.jsonl"
    log.write_text(log.read_text() + "{broken\n", encoding="utf-8")
    with pytest.raises(SessionError):
        SessionStore(data, schemas)


def test_random_edit_chaos_never_corrupts_state(tmp_path, schemas, golden_corpus):
    # interleave valid simulated edits with garbage ones; failures must leave
    # the session untouched and every invariant intact afterwards
    from sqlrefine.parser import parse_sql
    from sqlrefine.simulate import CorruptingBackend, simulate_feedback

    store = SessionStore(tmp_path / "data", schemas)
    client = TestClient(create_app(store))
    rng = random.Random(626)
    garbage = ["total nonsense here", "Return the flibbertigibbet",
               "Keep the records where", ""]
    for entry in golden_corpus[::6]:
        schema = schemas[entry["db_id"]]
        sid = client.post("/sessions", json={"schema_id": entry["db_id"]}).json()["id"]
        r = client.post(f"/sessions/{sid}/question", json={"text": entry["sql"]})
        assert r.status_code == 200
        gold = parse_sql(entry["sql"], schema)
        target = CorruptingBackend(gold, random.Random(rng.randint(0, 9999)))("", schema)
        current = parse_sql(r.json()["sql"], schema)
        edits, _ = simulate_feedback(current, target, schema)
        for edit in edits[:4]:
            before = client.get(f"/sessions/{sid}").json()["sql"]
            bad = client.put(f"/sessions/{sid}/steps/1",
                             json={"text": rng.choice(garbage)})
            assert bad.status_code in (200, 422)
            if bad.status_code != 200:
                assert client.get(f"/sessions/{sid}").json()["sql"] == before
            if edit.op == "replace":
                r = client.put(f"/sessions/{sid}/steps/{edit.index}",
                               json={"text": edit.text})
            elif edit.op == "delete":
                r = client.delete(f"/sessions/{sid}/steps/{edit.index}")
            else:
                r = client.post(f"/sessions/{sid}/steps",
                                json={"position": edit.index, "text": edit.text})
            assert r.status_code == 200, r.text
        store.verify_invariants(sid)


def test_result_preview_with_executor(tmp_path, schemas):
    import sqlite3

    from sqlrefine.evaluate import ExecutionChecker

    db = tmp_path / "db.sqlite"
    conn = sqlite3.connect(db)
    conn.execute("CREATE TABLE singer (singer_id int, name text, age int, "
                 "country text, song_name text)")
    conn.execute("INSERT INTO singer VALUES (1, 'Ann', 30, 'USA', 'Hey')")
    conn.commit()
    conn.close()

    store = SessionStore(tmp_path / "data", schemas)
    client = TestClient(create_app(store, executor=ExecutionChecker(str(db))))
    sid, body = _session_with_query(client, "SELECT name FROM singer")
    assert body["result_preview"] == [["Ann"]]
