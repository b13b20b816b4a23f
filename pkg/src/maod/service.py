"""REST orchestrator: sessions, message flow, manipulation, degradation.

The service generates text through the model gateway, delegates
decomposition to the agent over the task protocol, stores responses and
their event logs, serves recomposition, and keeps working when the agent
is down by falling back to the monolithic text (``degraded=true``). Every
error response carries a stable machine-readable code.
"""

import logging
import threading
import time
import uuid
from dataclasses import dataclass, field
from typing import Any

import httpx

from . import a2a, composer, model
from .errors import (
    AgentUnavailable,
    CorruptCheckpoint,
    FileProcessingError,
    MaodError,
    MalformedMessage,
    ResponseNotFound,
    SessionNotFound,
    UnknownComponent,
)
from .gateway import ModelGateway, ModelParams
from .storage import MemorySessionStorage, SessionStorage

logger = logging.getLogger(__name__)

DEFAULT_PARAMS = ModelParams(vendor_id="mock", model_name="echo-1", temperature=0.0)

ROLE_USER = "user"
ROLE_ASSISTANT = "assistant"


@dataclass
class Message:
    role: str
    text: str
    timestamp: float

    def to_dict(self) -> dict[str, Any]:
        return {"role": self.role, "text": self.text, "timestamp": self.timestamp}


@dataclass
class ResponseRecord:
    """One generated response: monolithic text plus, when the agent
    succeeded, its componentized form and event log."""

    response_id: str
    profile: str
    monolithic: str
    degraded: bool
    decomposed: model.DecomposedResponse | None = None
    events: list[composer.ManipulationEvent] = field(default_factory=list)

    @property
    def last_event_id(self) -> int:
        return self.events[-1].event_id if self.events else 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "response_id": self.response_id,
            "profile": self.profile,
            "monolithic": self.monolithic,
            "degraded": self.degraded,
            "decomposed": self.decomposed.to_dict() if self.decomposed else None,
            "last_event_id": self.last_event_id,
        }


@dataclass
class SessionState:
    """Conversation state: message history, decomposed responses, event
    logs, and model parameters."""

    session_id: str
    params: ModelParams
    messages: list[Message] = field(default_factory=list)
    responses: dict[str, ResponseRecord] = field(default_factory=dict)
    checkpoint_seq: int = 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "session_id": self.session_id,
            "params": self.params.to_dict(),
            "messages": [m.to_dict() for m in self.messages],
            "responses": [r.to_dict() for r in self.responses.values()],
            "checkpoint_seq": self.checkpoint_seq,
        }


def _params_from_dict(data: Any) -> ModelParams:
    if not isinstance(data, dict):
        raise CorruptCheckpoint("params must be an object")
    return ModelParams(
        vendor_id=str(data.get("vendor_id", DEFAULT_PARAMS.vendor_id)),
        model_name=str(data.get("model_name", DEFAULT_PARAMS.model_name)),
        temperature=float(data.get("temperature", 0.0)),
        extras={str(k): str(v) for k, v in (data.get("extras") or {}).items()},
    )


def session_from_dict(data: Any) -> tuple[SessionState, dict[str, int]]:
    """Rebuild a session from a snapshot payload.

    Returns the state plus the per-response event watermark recorded at
    checkpoint time; events after the watermark must be replayed on top.
    Raises CorruptCheckpoint for anything structurally broken.
    """
    try:
        session = SessionState(
            session_id=str(data["session_id"]),
            params=_params_from_dict(data.get("params", {})),
            checkpoint_seq=int(data.get("checkpoint_seq", 0)),
        )
        for raw in data.get("messages", []):
            session.messages.append(
                Message(role=str(raw["role"]), text=str(raw["text"]), timestamp=float(raw["timestamp"]))
            )
        watermarks: dict[str, int] = {}
        for raw in data.get("responses", []):
            decomposed = None
            if raw.get("decomposed") is not None:
                decomposed = model.response_from_dict(raw["decomposed"])
            record = ResponseRecord(
                response_id=str(raw["response_id"]),
                profile=str(raw.get("profile", model.PROFILE_DOCUMENT)),
                monolithic=str(raw.get("monolithic", "")),
                degraded=bool(raw.get("degraded", False)),
                decomposed=decomposed,
            )
            session.responses[record.response_id] = record
            watermarks[record.response_id] = int(raw.get("last_event_id", 0))
        return session, watermarks
    except CorruptCheckpoint:
        raise
    except (KeyError, TypeError, ValueError, MaodError) as exc:
        raise CorruptCheckpoint(f"snapshot does not parse: {exc}") from exc


class AgentClient:
    """HTTP client for the decomposition agent.

    Any transport problem, non-200 status, undecodable reply, or error
    reply surfaces as :class:`AgentUnavailable`, which the service turns
    into the monolithic fallback.
    """

    def __init__(self, base_url: str | None, timeout: float = 10.0, transport: Any = None):
        self.base_url = base_url.rstrip("/") if base_url else None
        self.timeout = timeout
        self._transport = transport

    def decompose(self, text: str, profile: str) -> model.DecomposedResponse:
        if not self.base_url:
            raise AgentUnavailable("no agent URL configured")
        task = a2a.new_task(text, profile)
        try:
            with httpx.Client(transport=self._transport, timeout=self.timeout) as client:
                http_reply = client.post(
                    f"{self.base_url}/a2a/tasks",
                    content=a2a.encode_task(task),
                    headers={"content-type": "application/json"},
                )
        except httpx.HTTPError as exc:
            raise AgentUnavailable(f"agent unreachable: {exc}") from exc
        if http_reply.status_code != 200:
            raise AgentUnavailable(f"agent answered HTTP {http_reply.status_code}")
        try:
            reply = a2a.decode_reply(http_reply.content)
        except MalformedMessage as exc:
            raise AgentUnavailable(f"agent reply malformed: {exc}") from exc
        if reply.status != a2a.STATUS_OK or reply.result is None:
            code = reply.error.code if reply.error else "unknown"
            raise AgentUnavailable(f"agent replied with error {code}")
        return reply.result


class SessionService:
    """Core orchestration behind the REST surface.

    Event application is serialized per session; storage writes for one
    session never interleave. Sessions absent from memory are restored
    from storage on demand, which is what makes restarts transparent.
    """

    def __init__(
        self,
        storage: SessionStorage | None = None,
        gateway: ModelGateway | None = None,
        agent: AgentClient | None = None,
        default_params: ModelParams = DEFAULT_PARAMS,
        clock=time.time,
    ):
        self.storage = storage or MemorySessionStorage()
        self.gateway = gateway or ModelGateway()
        self.agent = agent or AgentClient(base_url=None)
        self.default_params = default_params
        self.clock = clock
        self._sessions: dict[str, SessionState] = {}
        self._response_index: dict[str, str] = {}
        self._locks: dict[str, threading.RLock] = {}
        self._registry_lock = threading.RLock()

    # -- session plumbing ---------------------------------------------------

    def _session_lock(self, session_id: str) -> threading.RLock:
        with self._registry_lock:
            return self._locks.setdefault(session_id, threading.RLock())

    def create_session(self, params: ModelParams | None = None) -> SessionState:
        session = SessionState(session_id=str(uuid.uuid4()), params=params or self.default_params)
        with self._registry_lock:
            self._sessions[session.session_id] = session
        self.checkpoint_session(session.session_id)
        return session

    def get_session(self, session_id: str) -> SessionState:
        with self._registry_lock:
            session = self._sessions.get(session_id)
        if session is not None:
            return session
        return self.restore_session(session_id)

    def restore_session(self, session_id: str) -> SessionState:
        """Load the latest checkpoint and replay the events logged after it."""
        snapshot = self.storage.read_latest_snapshot(session_id)
        if snapshot is None:
            raise SessionNotFound(f"no session {session_id!r} (and no checkpoint to restore)")
        _, payload = snapshot
        session, watermarks = session_from_dict(payload)
        logged = self.storage.read_events(session_id)
        for response_id, event in logged:
            record = session.responses.get(response_id)
            if record is None:
                raise CorruptCheckpoint(f"event log references unknown response {response_id!r}")
            record.events.append(event)
            if record.decomposed is not None and event.event_id > watermarks.get(response_id, 0):
                record.decomposed = composer.apply(record.decomposed, event)
        with self._registry_lock:
            self._sessions[session.session_id] = session
            for response_id in session.responses:
                self._response_index[response_id] = session.session_id
        return session

    def checkpoint_session(self, session_id: str) -> int:
        with self._registry_lock:
            session = self._sessions.get(session_id)
        if session is None:
            raise SessionNotFound(f"no session {session_id!r}")
        with self._session_lock(session_id):
            session.checkpoint_seq += 1
            self.storage.write_snapshot(session_id, session.checkpoint_seq, session.to_dict())
            return session.checkpoint_seq

    # -- message flow ---------------------------------------------------------

    def post_message(
        self,
        session_id: str,
        prompt: str,
        params: ModelParams | None = None,
        profile: str = model.PROFILE_DOCUMENT,
    ) -> dict[str, Any]:
        session = self.get_session(session_id)
        with self._session_lock(session_id):
            theta = params or session.params
            handle = self.gateway.create_model(theta)
            context = [(m.role, m.text) for m in session.messages]
            monolithic = self.gateway.generate(handle, prompt, context)

            now = self.clock()
            session.messages.append(Message(ROLE_USER, prompt, now))
            session.messages.append(Message(ROLE_ASSISTANT, monolithic, self.clock()))

            response_id = str(uuid.uuid4())
            decomposed: model.DecomposedResponse | None = None
            degraded = False
            try:
                decomposed = self.agent.decompose(monolithic, profile)
                decomposed = model.DecomposedResponse(
                    response_id=response_id,
                    source_text=decomposed.source_text,
                    profile=decomposed.profile,
                    components=decomposed.components,
                )
            except AgentUnavailable as exc:
                degraded = True
                logger.warning("decomposition degraded for %s: %s", response_id, exc)

            record = ResponseRecord(
                response_id=response_id,
                profile=profile,
                monolithic=monolithic,
                degraded=degraded,
                decomposed=decomposed,
            )
            session.responses[response_id] = record
            with self._registry_lock:
                self._response_index[response_id] = session_id
        self.checkpoint_session(session_id)
        return {
            "response_id": response_id,
            "monolithic": monolithic,
            "decomposed": decomposed.to_dict() if decomposed else None,
            "degraded": degraded,
        }

    def redecompose(self, response_id: str) -> dict[str, Any]:
        """Retry agent decomposition for a degraded (monolithic) response."""
        session, record = self._find_response(response_id)
        with self._session_lock(session.session_id):
            if record.decomposed is None:
                decomposed = self.agent.decompose(record.monolithic, record.profile)
                record.decomposed = model.DecomposedResponse(
                    response_id=response_id,
                    source_text=decomposed.source_text,
                    profile=decomposed.profile,
                    components=decomposed.components,
                )
                record.degraded = False
        self.checkpoint_session(session.session_id)
        return {
            "response_id": response_id,
            "decomposed": record.decomposed.to_dict() if record.decomposed else None,
            "degraded": record.degraded,
        }

    # -- manipulation -----------------------------------------------------------

    def _find_response(self, response_id: str) -> tuple[SessionState, ResponseRecord]:
        with self._registry_lock:
            session_id = self._response_index.get(response_id)
        if session_id is None:
            for sid in self.storage.list_sessions():
                try:
                    self.get_session(sid)
                except (SessionNotFound, CorruptCheckpoint):
                    continue
            with self._registry_lock:
                session_id = self._response_index.get(response_id)
        if session_id is None:
            raise ResponseNotFound(f"no response {response_id!r}")
        session = self.get_session(session_id)
        record = session.responses.get(response_id)
        if record is None:
            raise ResponseNotFound(f"no response {response_id!r}")
        return session, record

    def _apply_event(self, response_id: str, make_event) -> dict[str, Any]:
        session, record = self._find_response(response_id)
        with self._session_lock(session.session_id):
            if record.decomposed is None:
                raise UnknownComponent(
                    f"response {response_id} is monolithic (degraded); no components to address"
                )
            event = make_event(record)
            before = composer.recompose(record.decomposed, record.last_event_id)
            updated = composer.apply(record.decomposed, event, last_event_id=record.last_event_id)
            # Persist first: if the append fails the in-memory state is untouched.
            self.storage.append_event(session.session_id, response_id, event)
            record.decomposed = updated
            record.events.append(event)
            after = composer.recompose(updated, event.event_id)
            changes = composer.component_diff(before, after)
            return {
                "event_id": event.event_id,
                "kind": event.kind,
                "component_id": event.component_id,
                "content": event.content,
                "includes": event.includes,
                "changes": [{"component_id": cid, "change": change} for cid, change in changes],
            }

    def patch_component(self, response_id: str, component_id: str, content: str) -> dict[str, Any]:
        return self._apply_event(
            response_id,
            lambda record: composer.manual_edit(record.last_event_id + 1, component_id, content),
        )

    def toggle_component(self, response_id: str, component_id: str, includes: bool) -> dict[str, Any]:
        return self._apply_event(
            response_id,
            lambda record: composer.toggle(record.last_event_id + 1, component_id, includes),
        )

    def reprompt_component(self, response_id: str, component_id: str, instruction: str) -> dict[str, Any]:
        session, record = self._find_response(response_id)
        with self._session_lock(session.session_id):
            if record.decomposed is None:
                raise UnknownComponent(
                    f"response {response_id} is monolithic (degraded); no components to address"
                )
            handle = self.gateway.create_model(session.params)
            # Generate before logging anything: a provider failure must leave
            # the event log and the response untouched.
            replacement = self.gateway.reprompt_component(
                handle, record.decomposed, component_id, instruction
            )
            return self._apply_event(
                response_id,
                lambda rec: composer.reprompt_result(
                    rec.last_event_id + 1,
                    component_id,
                    replacement,
                    model=handle.model_name,
                    instruction=instruction,
                ),
            )

    def recompose_response(self, response_id: str) -> composer.ComposedArtifact:
        session, record = self._find_response(response_id)
        with self._session_lock(session.session_id):
            if record.decomposed is None:
                return composer.ComposedArtifact(
                    text=record.monolithic,
                    included_ids=(),
                    basis_event_id=0,
                    response_id=response_id,
                )
            return composer.recompose(record.decomposed, record.last_event_id)


# --- REST surface ---------------------------------------------------------------

def _decode_attachment(filename: str, content_base64: str) -> str:
    """Text-file attachment: base64 over the wire, UTF-8 underneath.

    Anything that does not decode (bad base64, binary payloads) is a
    FileProcessingError; binary handling is out of scope.
    """
    import base64

    try:
        raw = base64.b64decode(content_base64, validate=True)
    except (ValueError, TypeError) as exc:
        raise FileProcessingError(f"attachment {filename!r} is not valid base64: {exc}") from exc
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FileProcessingError(f"attachment {filename!r} is not UTF-8 text: {exc}") from exc


ERROR_STATUS = {
    "SessionNotFound": 404,
    "ResponseNotFound": 404,
    "UnknownComponent": 404,
    "StaleEvent": 409,
    "ModelInitializationError": 400,
    "ValidationError": 400,
    "EmptyResponse": 400,
    "MalformedMessage": 400,
    "FileProcessingError": 400,
    "ProviderFailure": 502,
    "AgentUnavailable": 503,
    "CorruptCheckpoint": 500,
    "DecompositionError": 500,
}


def create_service_app(service: SessionService | None = None):
    """FastAPI app over a session service (built from env when omitted)."""
    from fastapi import FastAPI, Request
    from fastapi.responses import JSONResponse
    from pydantic import BaseModel

    svc = service or build_service_from_env()
    app = FastAPI(title="maod-service")
    app.state.service = svc

    class SessionBody(BaseModel):
        vendor_id: str | None = None
        model_name: str | None = None
        temperature: float = 0.0
        extras: dict[str, str] = {}

    class AttachmentBody(BaseModel):
        filename: str
        content_base64: str

    class MessageBody(BaseModel):
        prompt: str
        profile: str = model.PROFILE_DOCUMENT
        attachment: AttachmentBody | None = None

    class PatchBody(BaseModel):
        content: str

    class ToggleBody(BaseModel):
        includes: bool

    class RepromptBody(BaseModel):
        instruction: str = ""

    @app.exception_handler(MaodError)
    async def maod_error_handler(_request: Request, exc: MaodError) -> JSONResponse:
        status = ERROR_STATUS.get(exc.code, 500)
        return JSONResponse(
            status_code=status, content={"error": {"code": exc.code, "message": str(exc)}}
        )

    @app.get("/api/health")
    def health() -> dict[str, str]:
        return {"status": "ok"}

    @app.post("/api/sessions", status_code=201)
    def create_session(body: SessionBody | None = None) -> dict[str, Any]:
        params = None
        if body is not None and body.vendor_id and body.model_name:
            params = ModelParams(
                vendor_id=body.vendor_id,
                model_name=body.model_name,
                temperature=body.temperature,
                extras=body.extras,
            )
        session = svc.create_session(params)
        return {"session_id": session.session_id, "params": session.params.to_dict()}

    @app.post("/api/sessions/{session_id}/messages")
    def post_message(session_id: str, body: MessageBody) -> dict[str, Any]:
        prompt = body.prompt
        if body.attachment is not None:
            prompt = prompt + "\n\n" + _decode_attachment(body.attachment.filename, body.attachment.content_base64)
        return svc.post_message(session_id, prompt, profile=body.profile)

    @app.patch("/api/responses/{response_id}/components/{component_id}")
    def patch_component(response_id: str, component_id: str, body: PatchBody) -> dict[str, Any]:
        return svc.patch_component(response_id, component_id, body.content)

    @app.post("/api/responses/{response_id}/components/{component_id}/toggle")
    def toggle_component(response_id: str, component_id: str, body: ToggleBody) -> dict[str, Any]:
        return svc.toggle_component(response_id, component_id, body.includes)

    @app.post("/api/responses/{response_id}/components/{component_id}/reprompt")
    def reprompt_component(response_id: str, component_id: str, body: RepromptBody) -> dict[str, Any]:
        return svc.reprompt_component(response_id, component_id, body.instruction)

    @app.get("/api/responses/{response_id}/recompose")
    def get_recompose(response_id: str) -> dict[str, Any]:
        return svc.recompose_response(response_id).to_dict()

    @app.post("/api/responses/{response_id}/decompose")
    def redecompose(response_id: str) -> dict[str, Any]:
        return svc.redecompose(response_id)

    return app


def build_service_from_env() -> SessionService:
    """Wire a service from MAOD_* environment variables."""
    import os

    from .storage import FileSessionStorage

    storage: SessionStorage
    storage_path = os.environ.get("MAOD_STORAGE_PATH")
    storage = FileSessionStorage(storage_path) if storage_path else MemorySessionStorage()
    gateway = ModelGateway()
    vendors_path = os.environ.get("MAOD_VENDORS_PATH")
    if vendors_path:
        gateway.load_vendors_file(vendors_path)
    agent = AgentClient(os.environ.get("MAOD_AGENT_URL"))
    return SessionService(storage=storage, gateway=gateway, agent=agent)
