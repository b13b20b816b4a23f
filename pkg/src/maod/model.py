"""Component graph data model: typed components, links, and validation.

A decomposed response is an ordered list of components, each carrying its
text payload, metadata (including the separator bytes that surround it in
the original text), an inclusion flag, and links to other components.
Everything here is an immutable value; operations are pure functions.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from typing import Any, Mapping

from .errors import CyclicLinks, ValidationError

ComponentId = str

_ID_PATTERN = re.compile(r"^c[1-9][0-9]*$")

BELONGS_TO = "belongs_to"
REFERS_TO = "refers_to"
RELATIONS = frozenset({BELONGS_TO, REFERS_TO})

#: Core component vocabulary, available in every profile.
CORE_TYPES = ("Heading", "Paragraph", "List", "Code", "Citation")
#: Email-profile extension: role components of a message.
EMAIL_TYPES = ("Subject", "Greeting", "Closing", "Signature")

PROFILE_DOCUMENT = "document"
PROFILE_EMAIL = "email"
PROFILES = (PROFILE_DOCUMENT, PROFILE_EMAIL)

# type name -> owning profile; a name may be registered exactly once.
_TYPE_REGISTRY: dict[str, str] = {}

#: Canonical ordering of recognized meta keys in the wire format.
META_KEYS = ("level", "role", "style", "span_start", "span_end", "prefix", "suffix")


def register_component_type(name: str, profile: str) -> None:
    """Register a component type under the profile that owns it."""
    if not name:
        raise ValueError("component type name must be non-empty")
    if profile not in PROFILES:
        raise ValueError(f"unknown profile {profile!r}")
    owner = _TYPE_REGISTRY.get(name)
    if owner is not None and owner != profile:
        raise ValueError(f"type {name!r} already registered under {owner!r}")
    _TYPE_REGISTRY[name] = profile


for _name in CORE_TYPES:
    register_component_type(_name, PROFILE_DOCUMENT)
for _name in EMAIL_TYPES:
    register_component_type(_name, PROFILE_EMAIL)


def vocabulary(profile: str) -> frozenset[str]:
    """Type names legal for a profile. The email profile extends the core set."""
    names = {n for n, owner in _TYPE_REGISTRY.items() if owner == PROFILE_DOCUMENT}
    if profile == PROFILE_EMAIL:
        names.update(n for n, owner in _TYPE_REGISTRY.items() if owner == PROFILE_EMAIL)
    return frozenset(names)


def is_component_id(value: str) -> bool:
    return bool(_ID_PATTERN.match(value))


@dataclass(frozen=True)
class Link:
    """Directed relation between two components of the same response."""

    source: ComponentId
    target: ComponentId
    relation: str

    def to_dict(self) -> dict[str, str]:
        return {"source": self.source, "target": self.target, "relation": self.relation}


@dataclass(frozen=True)
class Component:
    """One semantic unit of a response.

    ``meta`` values are strings only; numeric fields (span offsets, heading
    level) are decimal-encoded. ``prefix``/``suffix`` hold the separator
    bytes captured around the content so recomposition is byte-exact.
    """

    id: ComponentId
    type: str
    content: str
    meta: Mapping[str, str] = field(default_factory=dict)
    includes: bool = True
    links: tuple[Link, ...] = ()

    @property
    def prefix(self) -> str:
        return self.meta.get("prefix", "")

    @property
    def suffix(self) -> str:
        return self.meta.get("suffix", "")

    def span(self) -> tuple[int, int] | None:
        """Offsets of the original content slice in the source text."""
        try:
            return int(self.meta["span_start"]), int(self.meta["span_end"])
        except (KeyError, ValueError):
            return None

    def with_content(self, content: str) -> "Component":
        return replace(self, content=content)

    def with_includes(self, includes: bool) -> "Component":
        return replace(self, includes=includes)

    def to_dict(self) -> dict[str, Any]:
        meta = {k: self.meta[k] for k in META_KEYS if k in self.meta}
        for key in sorted(self.meta):
            if key not in META_KEYS:
                meta[key] = self.meta[key]
        return {
            "id": self.id,
            "type": self.type,
            "content": self.content,
            "meta": meta,
            "includes": self.includes,
            "links": [link.to_dict() for link in self.links],
        }


@dataclass(frozen=True)
class DecomposedResponse:
    """Ordered component set plus the verbatim monolithic source text."""

    response_id: str
    source_text: str
    profile: str
    components: tuple[Component, ...] = ()

    def component_ids(self) -> list[ComponentId]:
        return [c.id for c in self.components]

    def get(self, component_id: ComponentId) -> Component | None:
        for c in self.components:
            if c.id == component_id:
                return c
        return None

    def replace_component(self, component: Component) -> "DecomposedResponse":
        updated = tuple(component if c.id == component.id else c for c in self.components)
        return replace(self, components=updated)

    def to_dict(self) -> dict[str, Any]:
        return {
            "response_id": self.response_id,
            "source_text": self.source_text,
            "profile": self.profile,
            "components": [c.to_dict() for c in self.components],
        }


@dataclass(frozen=True)
class Violation:
    rule: str
    component_id: ComponentId | None
    detail: str


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    violations: tuple[Violation, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "ok": self.ok,
            "violations": [
                {"rule": v.rule, "component_id": v.component_id, "detail": v.detail}
                for v in self.violations
            ],
        }


def _link_edges(response: DecomposedResponse) -> list[tuple[ComponentId, ComponentId]]:
    """(source, target) pairs whose endpoints both resolve."""
    ids = set(response.component_ids())
    edges = []
    for component in response.components:
        for link in component.links:
            if link.source in ids and link.target in ids and link.source != link.target:
                edges.append((link.source, link.target))
    return edges


def _find_cycle(order: list[ComponentId], edges: list[tuple[ComponentId, ComponentId]]) -> list[ComponentId]:
    """Extract one concrete cycle from a graph known to contain one.

    Walks lowest-document-order outgoing edges until a node repeats, which
    keeps the reported cycle deterministic.
    """
    index = {cid: i for i, cid in enumerate(order)}
    adjacency: dict[ComponentId, list[ComponentId]] = {cid: [] for cid in order}
    for source, target in edges:
        adjacency[source].append(target)
    for targets in adjacency.values():
        targets.sort(key=index.__getitem__)

    remaining = _kahn_leftover(order, edges)
    start = min(remaining, key=index.__getitem__)
    path = [start]
    seen = {start}
    node = start
    while True:
        node = next(t for t in adjacency[node] if t in remaining)
        if node in seen:
            cycle = path[path.index(node):]
            return sorted(cycle, key=index.__getitem__)
        seen.add(node)
        path.append(node)


def _kahn_leftover(order: list[ComponentId], edges: list[tuple[ComponentId, ComponentId]]) -> set[ComponentId]:
    """Nodes that survive iterative peeling of dependency-free nodes.

    Empty exactly when the link graph is acyclic.
    """
    deps: dict[ComponentId, set[ComponentId]] = {cid: set() for cid in order}
    for source, target in edges:
        deps[source].add(target)
    remaining = set(order)
    changed = True
    while changed:
        changed = False
        for cid in list(remaining):
            if not (deps[cid] & remaining):
                remaining.discard(cid)
                changed = True
    return remaining


def validate(response: DecomposedResponse) -> ValidationReport:
    """Check every invariant of a decomposed response.

    Violations are data, not faults; the report lists them in a stable
    order keyed by component id and rule name.
    """
    violations: list[Violation] = []
    if response.profile not in PROFILES:
        violations.append(Violation("UnknownProfile", None, f"profile {response.profile!r} is not registered"))
        legal_types: frozenset[str] = frozenset()
    else:
        legal_types = vocabulary(response.profile)

    ids = response.component_ids()
    seen: set[ComponentId] = set()
    id_set = set(ids)
    for component in response.components:
        cid = component.id
        if not is_component_id(cid):
            violations.append(Violation("InvalidId", cid, f"id {cid!r} does not match c<positive integer>"))
        if cid in seen:
            violations.append(Violation("DuplicateId", cid, "component id occurs more than once"))
        seen.add(cid)
        if component.content == "":
            violations.append(Violation("EmptyComponent", cid, "content is empty"))
        if response.profile in PROFILES and component.type not in legal_types:
            violations.append(
                Violation("UnknownType", cid, f"type {component.type!r} not in the {response.profile} vocabulary")
            )
        span_start = component.meta.get("span_start")
        span_end = component.meta.get("span_end")
        if span_start is not None or span_end is not None:
            try:
                start, end = int(span_start), int(span_end)
            except (TypeError, ValueError):
                violations.append(Violation("SpanOrder", cid, "span offsets must be decimal integers"))
            else:
                if start >= end:
                    violations.append(Violation("SpanOrder", cid, f"span_start {start} >= span_end {end}"))
        for link in component.links:
            if link.relation not in RELATIONS:
                violations.append(Violation("UnknownRelation", cid, f"relation {link.relation!r}"))
            if link.source == link.target:
                violations.append(Violation("SelfLink", cid, f"link {link.source} -> {link.target}"))
            for endpoint in (link.source, link.target):
                if endpoint not in id_set:
                    violations.append(Violation("UnresolvedLink", cid, f"link endpoint {endpoint!r} does not resolve"))

    edges = _link_edges(response)
    if _kahn_leftover(ids, edges):
        cycle = _find_cycle(ids, edges)
        violations.append(Violation("CyclicLinks", cycle[0], f"cycle through {cycle}"))

    violations.extend(_coverage_violations(response))
    return ValidationReport(ok=not violations, violations=tuple(violations))


def _coverage_violations(response: DecomposedResponse) -> list[Violation]:
    """Check that spans plus captured separators rebuild the source text.

    Only applies when every component carries span offsets (i.e. it came
    out of the decomposition pipeline); hand-built responses without spans
    skip the rule. Uses spans rather than content so that edited components
    do not break the check: spans always address the original source.
    """
    spans = [c.span() for c in response.components]
    if not spans or any(s is None or s[0] >= s[1] for s in spans):
        return []
    parts = []
    for component, span in zip(response.components, spans):
        start, end = span  # type: ignore[misc]
        parts.append(component.prefix)
        parts.append(response.source_text[start:end])
        parts.append(component.suffix)
    if "".join(parts) != response.source_text:
        return [Violation("SourceMismatch", None, "spans plus separators do not reconstruct source_text")]
    return []


def topological_order(response: DecomposedResponse) -> list[ComponentId]:
    """Order component ids so every link source appears after its target.

    Ties broken by document order. Raises :class:`CyclicLinks` when the
    link graph has a cycle (the validate precondition was violated).
    """
    ids = response.component_ids()
    edges = _link_edges(response)
    deps: dict[ComponentId, set[ComponentId]] = {cid: set() for cid in ids}
    for source, target in edges:
        deps[source].add(target)

    placed: list[ComponentId] = []
    placed_set: set[ComponentId] = set()
    remaining = list(ids)
    while remaining:
        ready = next((cid for cid in remaining if deps[cid] <= placed_set), None)
        if ready is None:
            raise CyclicLinks(_find_cycle(ids, edges))
        placed.append(ready)
        placed_set.add(ready)
        remaining.remove(ready)
    return placed


# --- canonical JSON encoding -------------------------------------------------

def to_json(response: DecomposedResponse) -> str:
    """Canonical JSON: fixed key order, UTF-8 text, trailing newline."""
    return json.dumps(response.to_dict(), ensure_ascii=False, indent=2) + "\n"


def _expect(mapping: Any, key: str, kind: type, where: str) -> Any:
    if not isinstance(mapping, dict):
        raise ValidationError(f"{where}: expected an object")
    if key not in mapping:
        raise ValidationError(f"{where}: missing field {key!r}")
    value = mapping[key]
    if kind is bool:
        if not isinstance(value, bool):
            raise ValidationError(f"{where}: field {key!r} must be a boolean")
    elif not isinstance(value, kind) or isinstance(value, bool):
        raise ValidationError(f"{where}: field {key!r} must be {kind.__name__}")
    return value


def link_from_dict(data: Any, where: str = "link") -> Link:
    return Link(
        source=_expect(data, "source", str, where),
        target=_expect(data, "target", str, where),
        relation=_expect(data, "relation", str, where),
    )


def component_from_dict(data: Any, where: str = "component") -> Component:
    cid = _expect(data, "id", str, where)
    ctype = _expect(data, "type", str, where)
    content = _expect(data, "content", str, where)
    meta_raw = data.get("meta", {})
    if not isinstance(meta_raw, dict):
        raise ValidationError(f"{where} {cid}: meta must be an object")
    meta: dict[str, str] = {}
    for key, value in meta_raw.items():
        if not isinstance(key, str) or not isinstance(value, str):
            raise ValidationError(f"{where} {cid}: meta keys and values must be strings")
        meta[key] = value
    includes = data.get("includes", True)
    if not isinstance(includes, bool):
        raise ValidationError(f"{where} {cid}: includes must be a boolean")
    links_raw = data.get("links", [])
    if not isinstance(links_raw, list):
        raise ValidationError(f"{where} {cid}: links must be a list")
    links = tuple(link_from_dict(item, f"{where} {cid} link") for item in links_raw)
    return Component(id=cid, type=ctype, content=content, meta=meta, includes=includes, links=links)


def response_from_dict(data: Any) -> DecomposedResponse:
    """Build a response value from parsed JSON.

    Checks structure only (field presence and JSON types); semantic rules
    are the business of :func:`validate`, so that invalid-but-parseable
    files can still be loaded and reported on.
    """
    response_id = _expect(data, "response_id", str, "response")
    source_text = _expect(data, "source_text", str, "response")
    profile = _expect(data, "profile", str, "response")
    components_raw = _expect(data, "components", list, "response")
    components = tuple(component_from_dict(item) for item in components_raw)
    return DecomposedResponse(
        response_id=response_id, source_text=source_text, profile=profile, components=components
    )


def from_json(text: str | bytes) -> DecomposedResponse:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"invalid JSON: {exc}") from exc
    return response_from_dict(data)
