"""Typed task envelopes and the decomposition agent's state machine.

An orchestrator delegates decomposition by POSTing a task envelope; the
agent walks Received -> Parse -> Decompose -> Validate and replies with
either a decomposed response or a machine-readable error, carrying the
full transition trace either way. The codec is total: any byte string
either decodes to a value or raises MalformedMessage.
"""

import json
import time
import uuid
from dataclasses import dataclass
from typing import Any, Callable

from . import engine, model
from .errors import EmptyResponse, MaodError, MalformedMessage

PROTOCOL_VERSION = "1.0"

TASK_DECOMPOSE = "decompose"
TASK_TYPES = (TASK_DECOMPOSE,)

STATE_RECEIVED = "Received"
STATE_PARSE = "Parse"
STATE_DECOMPOSE = "Decompose"
STATE_VALIDATE = "Validate"
STATE_DONE = "Done"
STATE_FAILED = "Failed"
STATES = (STATE_RECEIVED, STATE_PARSE, STATE_DECOMPOSE, STATE_VALIDATE, STATE_DONE, STATE_FAILED)

#: Legal moves of the agent machine. Parse and Decompose may fail directly;
#: Validate ends in Done or Failed.
TRANSITIONS: dict[str, frozenset[str]] = {
    STATE_RECEIVED: frozenset({STATE_PARSE}),
    STATE_PARSE: frozenset({STATE_DECOMPOSE, STATE_FAILED}),
    STATE_DECOMPOSE: frozenset({STATE_VALIDATE, STATE_FAILED}),
    STATE_VALIDATE: frozenset({STATE_DONE, STATE_FAILED}),
    STATE_DONE: frozenset(),
    STATE_FAILED: frozenset(),
}

STATUS_OK = "ok"
STATUS_ERROR = "error"

ERROR_EMPTY = "EmptyResponse"
ERROR_DECOMPOSITION = "DecompositionError"
ERROR_INTERNAL = "InternalError"


def _now_ms() -> int:
    return time.time_ns() // 1_000_000


@dataclass(frozen=True)
class StateTransition:
    from_state: str
    to_state: str
    at: int  # UTC milliseconds

    def to_dict(self) -> dict[str, Any]:
        return {"from_state": self.from_state, "to_state": self.to_state, "at": self.at}


@dataclass(frozen=True)
class TaskPayload:
    text: str
    profile: str = model.PROFILE_DOCUMENT

    def to_dict(self) -> dict[str, Any]:
        return {"text": self.text, "profile": self.profile}


@dataclass(frozen=True)
class A2ATask:
    task_id: str
    payload: TaskPayload
    task_type: str = TASK_DECOMPOSE
    protocol_version: str = PROTOCOL_VERSION
    trace: tuple[StateTransition, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "protocol_version": self.protocol_version,
            "task_id": self.task_id,
            "task_type": self.task_type,
            "payload": self.payload.to_dict(),
            "trace": [t.to_dict() for t in self.trace],
        }


@dataclass(frozen=True)
class TaskError:
    code: str
    message: str

    def to_dict(self) -> dict[str, Any]:
        return {"code": self.code, "message": self.message}


@dataclass(frozen=True)
class A2AReply:
    task_id: str
    status: str
    result: model.DecomposedResponse | None = None
    error: TaskError | None = None
    trace: tuple[StateTransition, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "task_id": self.task_id,
            "status": self.status,
            "result": self.result.to_dict() if self.result is not None else None,
            "error": self.error.to_dict() if self.error is not None else None,
            "trace": [t.to_dict() for t in self.trace],
        }


def new_task(text: str, profile: str = model.PROFILE_DOCUMENT) -> A2ATask:
    return A2ATask(task_id=str(uuid.uuid4()), payload=TaskPayload(text=text, profile=profile))


# --- codec --------------------------------------------------------------------

def _load_object(data: bytes | str, what: str) -> dict[str, Any]:
    try:
        value = json.loads(data)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise MalformedMessage(f"{what}: invalid JSON: {exc}") from exc
    if not isinstance(value, dict):
        raise MalformedMessage(f"{what}: expected a JSON object")
    return value


def _field(obj: dict[str, Any], key: str, kind: type, what: str) -> Any:
    if key not in obj:
        raise MalformedMessage(f"{what}: missing field {key!r}")
    value = obj[key]
    if not isinstance(value, kind) or (kind is not bool and isinstance(value, bool)):
        raise MalformedMessage(f"{what}: field {key!r} must be {kind.__name__}")
    return value


def _check_keys(obj: dict[str, Any], allowed: set[str], what: str) -> None:
    unknown = set(obj) - allowed
    if unknown:
        raise MalformedMessage(f"{what}: unknown field(s) {sorted(unknown)}")


def _decode_trace(raw: Any, what: str) -> tuple[StateTransition, ...]:
    if not isinstance(raw, list):
        raise MalformedMessage(f"{what}: trace must be a list")
    transitions = []
    for item in raw:
        if not isinstance(item, dict):
            raise MalformedMessage(f"{what}: trace entries must be objects")
        _check_keys(item, {"from_state", "to_state", "at"}, f"{what} trace entry")
        from_state = _field(item, "from_state", str, f"{what} trace entry")
        to_state = _field(item, "to_state", str, f"{what} trace entry")
        at = _field(item, "at", int, f"{what} trace entry")
        for state in (from_state, to_state):
            if state not in STATES:
                raise MalformedMessage(f"{what}: unknown state {state!r}")
        transitions.append(StateTransition(from_state, to_state, at))
    return tuple(transitions)


def _check_task_id(value: str, what: str) -> str:
    try:
        uuid.UUID(value)
    except (ValueError, AttributeError, TypeError):
        raise MalformedMessage(f"{what}: task_id must be a UUID string") from None
    return value


def encode_task(task: A2ATask) -> bytes:
    return json.dumps(task.to_dict(), ensure_ascii=False).encode("utf-8")


def decode_task(data: bytes | str) -> A2ATask:
    obj = _load_object(data, "task")
    _check_keys(obj, {"protocol_version", "task_id", "task_type", "payload", "trace"}, "task")
    version = _field(obj, "protocol_version", str, "task")
    if version != PROTOCOL_VERSION:
        raise MalformedMessage(f"task: UnsupportedVersion: {version!r} (supported: {PROTOCOL_VERSION})")
    task_id = _check_task_id(_field(obj, "task_id", str, "task"), "task")
    task_type = _field(obj, "task_type", str, "task")
    if task_type not in TASK_TYPES:
        raise MalformedMessage(f"task: unknown task_type {task_type!r}")
    payload_raw = _field(obj, "payload", dict, "task")
    _check_keys(payload_raw, {"text", "profile"}, "task payload")
    text = _field(payload_raw, "text", str, "task payload")
    profile = payload_raw.get("profile", model.PROFILE_DOCUMENT)
    if not isinstance(profile, str):
        raise MalformedMessage("task payload: field 'profile' must be str")
    trace = _decode_trace(obj.get("trace", []), "task")
    return A2ATask(
        task_id=task_id,
        payload=TaskPayload(text=text, profile=profile),
        task_type=task_type,
        protocol_version=version,
        trace=trace,
    )


def encode_reply(reply: A2AReply) -> bytes:
    return json.dumps(reply.to_dict(), ensure_ascii=False).encode("utf-8")


def decode_reply(data: bytes | str) -> A2AReply:
    obj = _load_object(data, "reply")
    _check_keys(obj, {"task_id", "status", "result", "error", "trace"}, "reply")
    task_id = _check_task_id(_field(obj, "task_id", str, "reply"), "reply")
    status = _field(obj, "status", str, "reply")
    if status not in (STATUS_OK, STATUS_ERROR):
        raise MalformedMessage(f"reply: unknown status {status!r}")
    result_raw = obj.get("result")
    error_raw = obj.get("error")
    if (result_raw is None) == (error_raw is None):
        raise MalformedMessage("reply: exactly one of result/error must be present")
    if status == STATUS_OK and result_raw is None:
        raise MalformedMessage("reply: status ok requires a result")
    if status == STATUS_ERROR and error_raw is None:
        raise MalformedMessage("reply: status error requires an error")
    result = None
    error = None
    if result_raw is not None:
        try:
            result = model.response_from_dict(result_raw)
        except MaodError as exc:
            raise MalformedMessage(f"reply: bad result: {exc}") from exc
    if error_raw is not None:
        if not isinstance(error_raw, dict):
            raise MalformedMessage("reply: error must be an object")
        _check_keys(error_raw, {"code", "message"}, "reply error")
        error = TaskError(
            code=_field(error_raw, "code", str, "reply error"),
            message=_field(error_raw, "message", str, "reply error"),
        )
    trace = _decode_trace(obj.get("trace", []), "reply")
    return A2AReply(task_id=task_id, status=status, result=result, error=error, trace=trace)


# --- agent --------------------------------------------------------------------

Builder = Callable[[str, list, str], model.DecomposedResponse]


def is_legal_trace(trace: tuple[StateTransition, ...] | list[StateTransition]) -> bool:
    """True when the trace is a connected path of the agent machine ending
    in a terminal state."""
    if not trace:
        return False
    if trace[0].from_state != STATE_RECEIVED:
        return False
    for i, step in enumerate(trace):
        if step.to_state not in TRANSITIONS.get(step.from_state, frozenset()):
            return False
        if i + 1 < len(trace) and trace[i + 1].from_state != step.to_state:
            return False
    return trace[-1].to_state in (STATE_DONE, STATE_FAILED)


def run_agent_task(task: A2ATask, builder: Builder | None = None) -> A2AReply:
    """Execute one decomposition task under the agent state machine.

    Payload faults become error replies (never transport crashes); the
    trace records every transition taken. ``builder`` exists as the
    decomposition seam so tests can inject faults into the Validate phase.
    """
    trace: list[StateTransition] = [StateTransition(STATE_RECEIVED, STATE_PARSE, _now_ms())]

    def fail(from_state: str, code: str, message: str) -> A2AReply:
        trace.append(StateTransition(from_state, STATE_FAILED, _now_ms()))
        return A2AReply(
            task_id=task.task_id,
            status=STATUS_ERROR,
            error=TaskError(code=code, message=message),
            trace=tuple(trace),
        )

    if task.task_type != TASK_DECOMPOSE:
        return fail(STATE_PARSE, ERROR_INTERNAL, f"unsupported task_type {task.task_type!r}")

    try:
        blocks = engine.parse(task.payload.text)
    except EmptyResponse as exc:
        return fail(STATE_PARSE, ERROR_EMPTY, str(exc))
    except Exception as exc:  # grammar bugs must not crash the transport
        return fail(STATE_PARSE, ERROR_INTERNAL, f"parse failed: {exc}")
    trace.append(StateTransition(STATE_PARSE, STATE_DECOMPOSE, _now_ms()))

    build = builder or engine.build_response
    try:
        response = build(task.payload.text, blocks, task.payload.profile)
    except MaodError as exc:
        return fail(STATE_DECOMPOSE, ERROR_DECOMPOSITION, str(exc))
    except Exception as exc:
        return fail(STATE_DECOMPOSE, ERROR_INTERNAL, f"decompose failed: {exc}")
    trace.append(StateTransition(STATE_DECOMPOSE, STATE_VALIDATE, _now_ms()))

    report = model.validate(response)
    if not report.ok:
        first = report.violations[0]
        return fail(STATE_VALIDATE, ERROR_DECOMPOSITION, f"{first.rule}: {first.detail}")
    trace.append(StateTransition(STATE_VALIDATE, STATE_DONE, _now_ms()))
    return A2AReply(task_id=task.task_id, status=STATUS_OK, result=response, trace=tuple(trace))


def create_agent_app(builder: Builder | None = None):
    """FastAPI app exposing the agent over HTTP."""
    from fastapi import FastAPI, Request, Response
    from fastapi.responses import JSONResponse

    app = FastAPI(title="maod-agent")

    @app.get("/a2a/health")
    def health() -> dict[str, Any]:
        return {"status": "ok", "states": list(STATES)}

    @app.post("/a2a/tasks")
    async def tasks(request: Request) -> Response:
        body = await request.body()
        try:
            task = decode_task(body)
        except MalformedMessage as exc:
            return JSONResponse(
                status_code=400,
                content={"error": {"code": exc.code, "message": str(exc)}},
            )
        reply = run_agent_task(task, builder=builder)
        return Response(content=encode_reply(reply), media_type="application/json")

    return app
