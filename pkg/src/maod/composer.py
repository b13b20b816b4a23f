"""Manipulation events and dynamic recomposition.

A response is mutated only through events: Manual Edit (direct content
replacement), Toggle (include/exclude), and Reprompt (model-generated
replacement recorded with provenance). Applying an event touches exactly
one component and never its separator bytes, which makes edit locality a
structural guarantee rather than a convention: regenerating one component
cannot clobber its neighbours.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

from .errors import LineageMismatch, StaleEvent, UnknownComponent, ValidationError
from .model import Component, ComponentId, DecomposedResponse

MANUAL_EDIT = "manual_edit"
TOGGLE = "toggle"
REPROMPT_RESULT = "reprompt_result"
EVENT_KINDS = (MANUAL_EDIT, TOGGLE, REPROMPT_RESULT)

#: Separator inserted when exclusion leaves two components butted together.
ORPHAN_JOINER = "\n\n"

CHANGE_EDITED = "edited"
CHANGE_EXCLUDED = "excluded"
CHANGE_INCLUDED = "included"


@dataclass(frozen=True)
class Provenance:
    """Where a reprompt replacement came from."""

    model: str
    instruction: str

    def to_dict(self) -> dict[str, str]:
        return {"model": self.model, "instruction": self.instruction}


@dataclass(frozen=True)
class ManipulationEvent:
    """One user action against one component; the unit of the event log."""

    event_id: int
    kind: str
    component_id: ComponentId
    content: str | None = None
    includes: bool | None = None
    provenance: Provenance | None = None

    def payload(self) -> dict[str, Any]:
        if self.kind == TOGGLE:
            return {"includes": self.includes}
        payload: dict[str, Any] = {"content": self.content}
        if self.kind == REPROMPT_RESULT and self.provenance is not None:
            payload["provenance"] = self.provenance.to_dict()
        return payload

    def to_dict(self) -> dict[str, Any]:
        return {
            "event_id": self.event_id,
            "kind": self.kind,
            "component_id": self.component_id,
            "payload": self.payload(),
        }


def manual_edit(event_id: int, component_id: ComponentId, content: str) -> ManipulationEvent:
    return ManipulationEvent(event_id, MANUAL_EDIT, component_id, content=content)


def toggle(event_id: int, component_id: ComponentId, includes: bool) -> ManipulationEvent:
    return ManipulationEvent(event_id, TOGGLE, component_id, includes=includes)


def reprompt_result(
    event_id: int, component_id: ComponentId, content: str, model: str, instruction: str
) -> ManipulationEvent:
    return ManipulationEvent(
        event_id,
        REPROMPT_RESULT,
        component_id,
        content=content,
        provenance=Provenance(model=model, instruction=instruction),
    )


def event_from_dict(data: Any) -> ManipulationEvent:
    if not isinstance(data, dict):
        raise ValidationError("event: expected an object")
    try:
        event_id = data["event_id"]
        kind = data["kind"]
        component_id = data["component_id"]
        payload = data["payload"]
    except KeyError as exc:
        raise ValidationError(f"event: missing field {exc.args[0]!r}") from None
    if not isinstance(event_id, int) or isinstance(event_id, bool):
        raise ValidationError("event: event_id must be an integer")
    if kind not in EVENT_KINDS:
        raise ValidationError(f"event: unknown kind {kind!r}")
    if not isinstance(component_id, str):
        raise ValidationError("event: component_id must be a string")
    if not isinstance(payload, dict):
        raise ValidationError("event: payload must be an object")
    if kind == TOGGLE:
        includes = payload.get("includes")
        if not isinstance(includes, bool):
            raise ValidationError("event: toggle payload needs a boolean 'includes'")
        return toggle(event_id, component_id, includes)
    content = payload.get("content")
    if not isinstance(content, str):
        raise ValidationError(f"event: {kind} payload needs a string 'content'")
    if kind == MANUAL_EDIT:
        return manual_edit(event_id, component_id, content)
    provenance = payload.get("provenance") or {}
    if not isinstance(provenance, dict):
        raise ValidationError("event: provenance must be an object")
    return reprompt_result(
        event_id,
        component_id,
        content,
        model=str(provenance.get("model", "")),
        instruction=str(provenance.get("instruction", "")),
    )


@dataclass(frozen=True)
class ComposedArtifact:
    """The recomposed output plus enough bookkeeping to diff artifacts.

    Only ``text``, ``included_ids``, and ``basis_event_id`` are part of the
    wire format; ``response_id``, ``component_order``, and the per-component
    ``segments`` map exist so change tracking does not have to re-derive
    which component contributed which slice.
    """

    text: str
    included_ids: tuple[ComponentId, ...]
    basis_event_id: int
    response_id: str = ""
    component_order: tuple[ComponentId, ...] = ()
    segments: Mapping[ComponentId, str] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "text": self.text,
            "included_ids": list(self.included_ids),
            "basis_event_id": self.basis_event_id,
        }


def apply(
    response: DecomposedResponse,
    event: ManipulationEvent,
    last_event_id: int | None = None,
) -> DecomposedResponse:
    """Apply one event, returning a new response.

    Only the targeted component's content or inclusion flag changes; its
    prefix/suffix and every other component are untouched. When
    ``last_event_id`` is given, the event id must be strictly greater.
    """
    if last_event_id is not None and event.event_id <= last_event_id:
        raise StaleEvent(
            f"event {event.event_id} is not after last applied event {last_event_id}"
        )
    component = response.get(event.component_id)
    if component is None:
        raise UnknownComponent(f"no component {event.component_id!r} in response")
    if event.kind == TOGGLE:
        updated = component.with_includes(bool(event.includes))
    elif event.kind in (MANUAL_EDIT, REPROMPT_RESULT):
        updated = component.with_content(event.content or "")
    else:
        raise ValidationError(f"unknown event kind {event.kind!r}")
    return response.replace_component(updated)


def replay(
    response: DecomposedResponse,
    events: Iterable[ManipulationEvent],
    last_event_id: int = 0,
) -> DecomposedResponse:
    """Fold an event sequence over a response, enforcing monotonic ids."""
    current = response
    floor = last_event_id
    for event in events:
        current = apply(current, event, last_event_id=floor)
        floor = event.event_id
    return current


def recompose(response: DecomposedResponse, basis_event_id: int = 0) -> ComposedArtifact:
    """Assemble the output text from currently included components.

    Concatenates prefix + content + suffix in document order. When an
    exclusion leaves two included components with no separator bytes at all
    between them, exactly one ``"\\n\\n"`` joiner is inserted; with nothing
    excluded the output is byte-identical to the unedited source.
    """
    parts: list[str] = []
    included: list[ComponentId] = []
    segments: dict[ComponentId, str] = {}
    previous: Component | None = None
    gap_since_previous = False

    for component in response.components:
        if not component.includes:
            gap_since_previous = previous is not None
            continue
        if previous is not None and gap_since_previous:
            if previous.suffix + component.prefix == "":
                parts.append(ORPHAN_JOINER)
        rendered = component.prefix + component.content + component.suffix
        parts.append(rendered)
        segments[component.id] = rendered
        included.append(component.id)
        previous = component
        gap_since_previous = False

    return ComposedArtifact(
        text="".join(parts),
        included_ids=tuple(included),
        basis_event_id=basis_event_id,
        response_id=response.response_id,
        component_order=tuple(response.component_ids()),
        segments=segments,
    )


def component_diff(
    before: ComposedArtifact, after: ComposedArtifact
) -> list[tuple[ComponentId, str]]:
    """Components whose rendered contribution changed between two artifacts.

    Raises :class:`LineageMismatch` when the artifacts do not come from the
    same response.
    """
    if before.response_id != after.response_id:
        raise LineageMismatch(
            f"artifacts come from {before.response_id!r} and {after.response_id!r}"
        )
    order = after.component_order or before.component_order
    changes: list[tuple[ComponentId, str]] = []
    for cid in order:
        in_before = cid in before.segments
        in_after = cid in after.segments
        if in_before and not in_after:
            changes.append((cid, CHANGE_EXCLUDED))
        elif in_after and not in_before:
            changes.append((cid, CHANGE_INCLUDED))
        elif in_before and in_after and before.segments[cid] != after.segments[cid]:
            changes.append((cid, CHANGE_EDITED))
    return changes
