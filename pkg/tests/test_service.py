"""Orchestrator: message flow, degradation, manipulation, persistence."""

from __future__ import annotations

import json
import random

import pytest
from fastapi.testclient import TestClient

from maod.errors import (
    CorruptCheckpoint,
    ProviderFailure,
    SessionNotFound,
    UnknownComponent,
)
from maod.gateway import ModelGateway, ModelParams
from maod.service import (
    AgentClient,
    SessionService,
    create_service_app,
    session_from_dict,
)
from maod.storage import FileSessionStorage

GOLDEN_PROMPT = "# Release notes\n\nThe cut went out on schedule.\n\n- faster startup\n- smaller bundle\n\n```python\nprint('hi')\n```\n"


@pytest.fixture()
def live_service(agent_server, tmp_path):
    return SessionService(
        storage=FileSessionStorage(tmp_path / "data"),
        gateway=ModelGateway(),
        agent=AgentClient(agent_server.url),
    )


@pytest.fixture()
def degraded_service(tmp_path):
    return SessionService(
        storage=FileSessionStorage(tmp_path / "data"),
        gateway=ModelGateway(),
        agent=AgentClient(None),
    )


def start_session(service) -> str:
    return service.create_session().session_id


# --- message flow ------------------------------------------------------------------

def test_post_message_decomposes_via_agent(live_service):
    sid = start_session(live_service)
    result = live_service.post_message(sid, GOLDEN_PROMPT)
    assert result["degraded"] is False
    assert result["monolithic"] == GOLDEN_PROMPT  # echo model
    decomposed = result["decomposed"]
    assert [c["type"] for c in decomposed["components"]] == ["Heading", "Paragraph", "List", "Code"]
    assert decomposed["response_id"] == result["response_id"]


def test_post_message_degrades_without_agent(degraded_service):
    sid = start_session(degraded_service)
    result = degraded_service.post_message(sid, GOLDEN_PROMPT)
    assert result["degraded"] is True
    assert result["monolithic"] == GOLDEN_PROMPT
    assert result["decomposed"] is None


def test_post_message_unknown_session(degraded_service):
    with pytest.raises(SessionNotFound):
        degraded_service.post_message("missing", "hello")


def test_message_history_feeds_context(live_service):
    sid = start_session(live_service)
    live_service.post_message(sid, "first prompt")
    session = live_service.get_session(sid)
    assert [m.role for m in session.messages] == ["user", "assistant"]
    live_service.post_message(sid, "second prompt")
    assert [m.role for m in session.messages] == ["user", "assistant", "user", "assistant"]


def test_redecompose_upgrades_degraded_response(degraded_service, agent_server):
    sid = start_session(degraded_service)
    result = degraded_service.post_message(sid, GOLDEN_PROMPT)
    assert result["degraded"] is True
    # Agent comes back: the same response upgrades in place.
    degraded_service.agent = AgentClient(agent_server.url)
    upgraded = degraded_service.redecompose(result["response_id"])
    assert upgraded["degraded"] is False
    assert len(upgraded["decomposed"]["components"]) == 4
    artifact = degraded_service.recompose_response(result["response_id"])
    assert artifact.text == GOLDEN_PROMPT


# --- manipulation endpoints -----------------------------------------------------------

def make_componentized(service) -> tuple[str, str]:
    sid = start_session(service)
    result = service.post_message(sid, GOLDEN_PROMPT)
    assert result["degraded"] is False
    return sid, result["response_id"]


def test_toggle_then_recompose_drops_contribution(live_service):
    _, rid = make_componentized(live_service)
    ack = live_service.toggle_component(rid, "c2", False)
    assert ack["event_id"] == 1
    assert ack["changes"] == [{"component_id": "c2", "change": "excluded"}]
    artifact = live_service.recompose_response(rid)
    assert "The cut went out on schedule." not in artifact.text
    assert artifact.basis_event_id == 1
    assert artifact.text == GOLDEN_PROMPT.replace("\n\nThe cut went out on schedule.", "", 1)


def test_patch_with_identical_content_records_event(live_service):
    _, rid = make_componentized(live_service)
    before = live_service.recompose_response(rid)
    ack = live_service.patch_component(rid, "c2", "The cut went out on schedule.")
    assert ack["event_id"] == 1
    assert ack["changes"] == []
    after = live_service.recompose_response(rid)
    assert after.text == before.text
    assert after.basis_event_id == 1


def test_reprompt_applies_rewrite_model(live_service):
    sid = start_session(live_service)
    session = live_service.get_session(sid)
    session.params = ModelParams(vendor_id="mock", model_name="rewrite-1")
    result = live_service.post_message(sid, GOLDEN_PROMPT)
    rid = result["response_id"]
    ack = live_service.reprompt_component(rid, "c2", "sharper")
    assert ack["content"].startswith("[rewritten] ")
    artifact = live_service.recompose_response(rid)
    assert "[rewritten] " in artifact.text


def test_generate_failure_surfaces_as_provider_failure(live_service):
    sid = start_session(live_service)
    session = live_service.get_session(sid)
    session.params = ModelParams(vendor_id="mock", model_name="fail-1")
    with pytest.raises(ProviderFailure):
        live_service.post_message(sid, GOLDEN_PROMPT)


def test_reprompt_provider_failure_is_atomic(agent_server, tmp_path):
    service = SessionService(
        storage=FileSessionStorage(tmp_path / "data"),
        gateway=ModelGateway(),
        agent=AgentClient(agent_server.url),
    )
    sid, rid = make_componentized(service)
    session = service.get_session(sid)
    record = session.responses[rid]
    session.params = ModelParams(vendor_id="mock", model_name="fail-1")
    with pytest.raises(ProviderFailure):
        service.reprompt_component(rid, "c2", "anything")
    assert record.events == []
    assert service.storage.read_events(sid) == []
    assert service.recompose_response(rid).text == GOLDEN_PROMPT


def test_event_on_degraded_response_is_rejected(degraded_service):
    sid = start_session(degraded_service)
    result = degraded_service.post_message(sid, "plain text")
    with pytest.raises(UnknownComponent):
        degraded_service.toggle_component(result["response_id"], "c1", False)


def test_event_log_is_append_only(live_service):
    sid, rid = make_componentized(live_service)
    live_service.toggle_component(rid, "c2", False)
    first = live_service.storage.read_events(sid)
    live_service.patch_component(rid, "c3", "- different\n- bullets")
    second = live_service.storage.read_events(sid)
    assert [e.to_dict() for _, e in second[: len(first)]] == [e.to_dict() for _, e in first]
    assert len(second) == len(first) + 1
    assert [e.event_id for _, e in second] == [1, 2]


# --- persistence ---------------------------------------------------------------------

def test_checkpoint_restart_replay_reproduces_text(agent_server, tmp_path):
    storage_dir = tmp_path / "data"
    first = SessionService(
        storage=FileSessionStorage(storage_dir),
        gateway=ModelGateway(),
        agent=AgentClient(agent_server.url),
    )
    sid, rid = make_componentized(first)
    first.checkpoint_session(sid)
    # Two events after the checkpoint: they live only in the event log.
    first.toggle_component(rid, "c2", False)
    first.patch_component(rid, "c4", "```python\nprint('bye')\n```")
    live_text = first.recompose_response(rid).text

    second = SessionService(
        storage=FileSessionStorage(storage_dir),
        gateway=ModelGateway(),
        agent=AgentClient(None),
    )
    restored = second.restore_session(sid)
    assert restored.session_id == sid
    assert second.recompose_response(rid).text == live_text
    assert [e.event_id for e in restored.responses[rid].events] == [1, 2]


def test_restore_without_checkpoint_is_session_not_found(tmp_path):
    service = SessionService(storage=FileSessionStorage(tmp_path / "data"))
    with pytest.raises(SessionNotFound):
        service.restore_session("ghost")


def test_truncated_snapshot_is_corrupt_checkpoint(tmp_path):
    storage_dir = tmp_path / "data"
    service = SessionService(storage=FileSessionStorage(storage_dir))
    sid = start_session(service)
    snapshot = next((storage_dir / sid / "snapshots").glob("*.json"))
    snapshot.write_text(snapshot.read_text()[:10], encoding="utf-8")
    fresh = SessionService(storage=FileSessionStorage(storage_dir))
    with pytest.raises(CorruptCheckpoint):
        fresh.restore_session(sid)


def test_snapshot_round_trips_session_state(degraded_service):
    sid = start_session(degraded_service)
    degraded_service.post_message(sid, "note to self")
    session = degraded_service.get_session(sid)
    rebuilt, watermarks = session_from_dict(json.loads(json.dumps(session.to_dict())))
    assert rebuilt.session_id == session.session_id
    assert [m.text for m in rebuilt.messages] == [m.text for m in session.messages]
    assert set(watermarks) == set(session.responses)


def test_randomized_persistence_replay(agent_server, tmp_path):
    rng = random.Random(4242)
    storage_dir = tmp_path / "data"
    service = SessionService(
        storage=FileSessionStorage(storage_dir),
        gateway=ModelGateway(),
        agent=AgentClient(agent_server.url),
    )
    sid, rid = make_componentized(service)
    ids = [c["id"] for c in service.get_session(sid).responses[rid].decomposed.to_dict()["components"]]
    for step in range(30):
        cid = rng.choice(ids)
        if rng.random() < 0.5:
            service.patch_component(rid, cid, f"edit {step}")
        else:
            service.toggle_component(rid, cid, rng.random() < 0.5)
        if rng.random() < 0.2:
            service.checkpoint_session(sid)
    live = service.recompose_response(rid).text

    rebooted = SessionService(storage=FileSessionStorage(storage_dir))
    rebooted.restore_session(sid)
    assert rebooted.recompose_response(rid).text == live


# --- REST surface ------------------------------------------------------------------------

@pytest.fixture()
def api(live_service):
    return TestClient(create_service_app(live_service))


def test_rest_health(api):
    assert api.get("/api/health").json() == {"status": "ok"}


def test_rest_full_manipulation_loop(api):
    created = api.post("/api/sessions", json={})
    assert created.status_code == 201
    sid = created.json()["session_id"]

    posted = api.post(f"/api/sessions/{sid}/messages", json={"prompt": GOLDEN_PROMPT})
    assert posted.status_code == 200
    body = posted.json()
    rid = body["response_id"]
    assert body["degraded"] is False

    toggled = api.post(f"/api/responses/{rid}/components/c2/toggle", json={"includes": False})
    assert toggled.status_code == 200
    assert toggled.json()["changes"] == [{"component_id": "c2", "change": "excluded"}]

    patched = api.patch(f"/api/responses/{rid}/components/c3", json={"content": "- one\n- two"})
    assert patched.status_code == 200
    assert patched.json()["event_id"] == 2

    recomposed = api.get(f"/api/responses/{rid}/recompose")
    assert recomposed.status_code == 200
    artifact = recomposed.json()
    assert set(artifact) == {"text", "included_ids", "basis_event_id"}
    assert artifact["basis_event_id"] == 2
    assert "- one\n- two" in artifact["text"]
    assert "The cut went out" not in artifact["text"]


def test_rest_attach_text_file_to_prompt(api):
    import base64

    sid = api.post("/api/sessions", json={}).json()["session_id"]
    attachment = {
        "filename": "notes.md",
        "content_base64": base64.b64encode("# Attached\n\nFile body.\n".encode()).decode(),
    }
    body = api.post(
        f"/api/sessions/{sid}/messages",
        json={"prompt": "Summarize this:", "attachment": attachment},
    ).json()
    assert "File body." in body["monolithic"]
    assert body["monolithic"].startswith("Summarize this:")


def test_rest_bad_attachment_is_file_processing_error(api):
    import base64

    sid = api.post("/api/sessions", json={}).json()["session_id"]
    for content in ["%%%not base64%%%", base64.b64encode(b"\xff\xfe\x00binary").decode()]:
        reply = api.post(
            f"/api/sessions/{sid}/messages",
            json={"prompt": "x", "attachment": {"filename": "blob.bin", "content_base64": content}},
        )
        assert reply.status_code == 400
        assert reply.json()["error"]["code"] == "FileProcessingError"


def test_rest_error_codes_are_machine_readable(api):
    missing_session = api.post("/api/sessions/nope/messages", json={"prompt": "x"})
    assert missing_session.status_code == 404
    assert missing_session.json()["error"]["code"] == "SessionNotFound"

    missing_response = api.get("/api/responses/nope/recompose")
    assert missing_response.status_code == 404
    assert missing_response.json()["error"]["code"] == "ResponseNotFound"

    created = api.post("/api/sessions", json={})
    sid = created.json()["session_id"]
    rid = api.post(f"/api/sessions/{sid}/messages", json={"prompt": "hello"}).json()["response_id"]
    missing_component = api.patch(f"/api/responses/{rid}/components/c99", json={"content": "x"})
    assert missing_component.status_code == 404
    assert missing_component.json()["error"]["code"] == "UnknownComponent"


def test_rest_degraded_flow_and_recovery(tmp_path, agent_server):
    service = SessionService(
        storage=FileSessionStorage(tmp_path / "data"),
        gateway=ModelGateway(),
        agent=AgentClient(None),
    )
    api = TestClient(create_service_app(service))
    sid = api.post("/api/sessions", json={}).json()["session_id"]
    body = api.post(f"/api/sessions/{sid}/messages", json={"prompt": GOLDEN_PROMPT}).json()
    assert body["degraded"] is True

    recomposed = api.get(f"/api/responses/{body['response_id']}/recompose").json()
    assert recomposed["text"] == GOLDEN_PROMPT  # monolithic passthrough

    service.agent = AgentClient(agent_server.url)
    upgraded = api.post(f"/api/responses/{body['response_id']}/decompose").json()
    assert upgraded["degraded"] is False
    assert len(upgraded["decomposed"]["components"]) == 4
