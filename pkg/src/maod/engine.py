"""Deterministic decomposition of monolithic text into typed components.

The pipeline runs six steps: parse the text into a lossless block cover,
segment blocks into component-sized groups, classify each group, link
related components, validate the result, and export it as a
:class:`~maod.model.DecomposedResponse`.

Losslessness is the load-bearing property: every byte of the input ends up
in exactly one component's ``prefix``, ``content``, or ``suffix``, so the
recomposed text with nothing edited or excluded is the input, byte for
byte. Separator bytes between components are assigned to the *following*
component's prefix; trailing bytes go to the last component's suffix.

The block grammar is a line-oriented, CommonMark-inspired subset:

* ATX headings: 1-6 ``#`` followed by a space.
* Fenced code: ``` or ~~~ open/close; the interior is never split.
* List items: ``-``, ``*``, ``+``, or ``N.`` plus a space; an indented
  follow-up line continues the item; adjacent items merge into one group.
* Blockquotes: contiguous ``>`` lines (classified as a quote-styled
  paragraph).
* Citation lines: ``[N]`` at the start of a line, or any plain line inside
  a section whose heading text equals "References".
* Everything else: paragraphs, separated by blank lines.

No full CommonMark compliance is attempted; tables and HTML blocks fall
through to paragraphs.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, replace
from typing import Callable, Iterable

from . import model
from .errors import DecompositionError, EmptyResponse, ValidationError

KIND_HEADING = "heading"
KIND_PARAGRAPH = "paragraph"
KIND_LIST = "list"
KIND_CODE = "code_fence"
KIND_QUOTE = "blockquote"
KIND_CITATION = "citation_line"
KIND_BLANK = "blank"

_HEADING_RE = re.compile(r"^ {0,3}(#{1,6})[ \t]+(.*\S)")
_FENCE_OPEN_RE = re.compile(r"^ {0,3}(`{3,}|~{3,})")
_LIST_ITEM_RE = re.compile(r"^ {0,3}(?:([-*+])|\d{1,9}\.)[ \t]+\S")
_QUOTE_RE = re.compile(r"^ {0,3}>")
_CITATION_RE = re.compile(r"^ {0,3}\[\d+\]")
_CONTINUATION_RE = re.compile(r"^(?: {2,}|\t)\S")

_SUBJECT_RE = re.compile(r"^Subject:[ \t]*")
_SALUTATION_RE = re.compile(r"^(?:Hi|Hello|Dear)\b[^\n]*,[ \t]*$")
_CLOSING_RE = re.compile(r"^(?:Best|Regards|Sincerely|Thanks)\b[^\n]*?,?[ \t]*$")
_CLOSING_MAX_LEN = 30
_SIGNATURE_MAX_LINES = 3
_SIGNATURE_MAX_LINE_LEN = 40

_REFERENCES_TITLE = "References"


@dataclass(frozen=True)
class Block:
    """One structural block plus the separator bytes it owns.

    ``prefix + text + suffix`` concatenated over all blocks in order equals
    the parsed input exactly.
    """

    kind: str
    text: str
    span: tuple[int, int]
    prefix: str = ""
    suffix: str = ""


@dataclass(frozen=True)
class SpanGroup:
    """A contiguous source span destined to become one component.

    ``content_offset`` counts leading characters of ``text`` that belong to
    the component's prefix rather than its content (the ``Subject:`` tag of
    an email header, for instance). ``role`` is an email-profile hint
    consumed by classification.
    """

    kind: str
    text: str
    start: int
    end: int
    prefix: str = ""
    suffix: str = ""
    role: str | None = None
    content_offset: int = 0
    level: int | None = None
    list_style: str | None = None

    @property
    def content(self) -> str:
        return self.text[self.content_offset:]

    @property
    def lines(self) -> list[str]:
        return self.text.split("\n")


ClassifierRule = Callable[[SpanGroup], "tuple[str, dict[str, str]] | None"]


@dataclass(frozen=True)
class Profile:
    """Named rule set steering segmentation refinement and classification.

    ``rules`` is the pluggable classifier hook: the first rule returning a
    (type, meta) pair wins, and a missing match falls back to Paragraph.
    """

    name: str
    rules: tuple[ClassifierRule, ...]
    refine: Callable[[list[SpanGroup]], list[SpanGroup]] | None = None


# --- step 1: parse -----------------------------------------------------------

def _scan_lines(raw: str) -> list[tuple[int, int]]:
    """(start, end) offsets of every line, end excluding the newline."""
    lines = []
    pos = 0
    length = len(raw)
    while pos < length:
        newline = raw.find("\n", pos)
        if newline == -1:
            lines.append((pos, length))
            break
        lines.append((pos, newline))
        pos = newline + 1
    return lines


def _heading_title(line: str) -> str:
    match = _HEADING_RE.match(line)
    return match.group(2).strip() if match else ""


def _fence_closes(line: str, char: str, length: int) -> bool:
    stripped = line.strip()
    return bool(stripped) and set(stripped) == {char} and len(stripped) >= length


def parse(raw: str) -> list[Block]:
    """Split text into a lossless block cover.

    Raises :class:`EmptyResponse` for empty or whitespace-only input.
    Code-fence interiors are consumed verbatim and never split.
    """
    if not raw or not raw.strip():
        raise EmptyResponse("input is empty or whitespace-only")

    lines = _scan_lines(raw)
    texts = [raw[start:end] for start, end in lines]

    # First pass: group line indices into (kind, first, last) runs.
    runs: list[list] = []  # mutable [kind, first_line, last_line]
    fence: tuple[str, int] | None = None
    in_references = False

    def open_run(kind: str, index: int) -> None:
        runs.append([kind, index, index])

    def last_run_is(kind: str, index: int) -> bool:
        return bool(runs) and runs[-1][0] == kind and runs[-1][2] == index - 1

    for i, text in enumerate(texts):
        if fence is not None:
            runs[-1][2] = i
            if _fence_closes(text, fence[0], fence[1]):
                fence = None
            continue
        if not text.strip():
            if last_run_is(KIND_BLANK, i):
                runs[-1][2] = i
            else:
                open_run(KIND_BLANK, i)
            continue
        fence_match = _FENCE_OPEN_RE.match(text)
        if fence_match:
            marker = fence_match.group(1)
            fence = (marker[0], len(marker))
            open_run(KIND_CODE, i)
            continue
        if _HEADING_RE.match(text):
            in_references = _heading_title(text) == _REFERENCES_TITLE
            open_run(KIND_HEADING, i)
            continue
        if _LIST_ITEM_RE.match(text):
            open_run(KIND_LIST, i)
            continue
        if _QUOTE_RE.match(text):
            if last_run_is(KIND_QUOTE, i):
                runs[-1][2] = i
            else:
                open_run(KIND_QUOTE, i)
            continue
        if _CITATION_RE.match(text):
            open_run(KIND_CITATION, i)
            continue
        if last_run_is(KIND_LIST, i) and _CONTINUATION_RE.match(text):
            runs[-1][2] = i
            continue
        if in_references:
            open_run(KIND_CITATION, i)
            continue
        if last_run_is(KIND_PARAGRAPH, i):
            runs[-1][2] = i
        else:
            open_run(KIND_PARAGRAPH, i)

    # Second pass: materialize blocks with separator custody.
    blocks: list[Block] = []
    previous_end = 0
    for kind, first, last in runs:
        start = lines[first][0]
        end = lines[last][1]
        blocks.append(
            Block(kind=kind, text=raw[start:end], span=(start, end), prefix=raw[previous_end:start])
        )
        previous_end = end
    if blocks:
        trailer = raw[previous_end:]
        if trailer:
            blocks[-1] = replace(blocks[-1], suffix=trailer)
    return blocks


# --- step 2: segment ---------------------------------------------------------

def _group_from_blocks(blocks: list[Block], prefix: str) -> SpanGroup:
    text_parts = [blocks[0].text]
    for block in blocks[1:]:
        text_parts.append(block.prefix)
        text_parts.append(block.text)
    text = "".join(text_parts)
    first_line = blocks[0].text.split("\n", 1)[0]
    level = None
    list_style = None
    if blocks[0].kind == KIND_HEADING:
        match = _HEADING_RE.match(first_line)
        level = len(match.group(1)) if match else 1
    elif blocks[0].kind == KIND_LIST:
        match = _LIST_ITEM_RE.match(first_line)
        list_style = "bullet" if match and match.group(1) else "ordered"
    return SpanGroup(
        kind=blocks[0].kind,
        text=text,
        start=blocks[0].span[0],
        end=blocks[-1].span[1],
        prefix=prefix,
        suffix=blocks[-1].suffix,
        level=level,
        list_style=list_style,
    )


def segment(blocks: Iterable[Block], profile: "Profile | str" = "document") -> list[SpanGroup]:
    """Group blocks into component-sized spans.

    Directly adjacent list-item blocks merge into one group; blank blocks
    contribute their bytes to the following group's prefix (or the last
    group's suffix at end of input) and never form groups themselves.
    """
    profile_obj = resolve_profile(profile)
    groups: list[SpanGroup] = []
    run: list[Block] = []
    run_prefix = ""
    pending = ""

    def flush() -> None:
        nonlocal run, run_prefix
        if run:
            groups.append(_group_from_blocks(run, run_prefix))
            run = []
            run_prefix = ""

    for block in blocks:
        if block.kind == KIND_BLANK:
            flush()
            pending += block.prefix + block.text + block.suffix
            continue
        if run and block.kind == KIND_LIST and run[-1].kind == KIND_LIST and not pending:
            run.append(block)
            continue
        flush()
        run = [block]
        run_prefix = pending + block.prefix
        pending = ""
    flush()

    if pending and groups:
        groups[-1] = replace(groups[-1], suffix=groups[-1].suffix + pending)

    if profile_obj.refine is not None:
        groups = profile_obj.refine(groups)
    return groups


# --- email-profile refinement ------------------------------------------------

def _split_group_at(group: SpanGroup, line_count: int) -> tuple[SpanGroup, SpanGroup]:
    """Split a group after ``line_count`` lines, giving the boundary newline
    to the tail's prefix."""
    lines = group.lines
    head_text = "\n".join(lines[:line_count])
    tail_text = "\n".join(lines[line_count:])
    head = replace(group, text=head_text, end=group.start + len(head_text), suffix="")
    tail = replace(
        group,
        text=tail_text,
        start=group.start + len(head_text) + 1,
        prefix="\n",
    )
    return head, tail


def _is_closing_line(line: str) -> bool:
    stripped = line.rstrip()
    return len(stripped) <= _CLOSING_MAX_LEN and bool(_CLOSING_RE.match(stripped))


def _is_signature_lines(lines: list[str]) -> bool:
    if not lines or len(lines) > _SIGNATURE_MAX_LINES:
        return False
    return all(0 < len(line.strip()) <= _SIGNATURE_MAX_LINE_LEN for line in lines)


def _refine_email(groups: list[SpanGroup]) -> list[SpanGroup]:
    """Line-level re-segmentation of the email header and footer zones.

    The subject, salutation, closing, and signature rules are scoped to
    single lines, so a paragraph group carrying several of them is split at
    line boundaries (separator custody preserved by :func:`_split_group_at`).
    """
    out = list(groups)

    # Subject: the first nonblank line, when tagged.
    if out and out[0].kind == KIND_PARAGRAPH:
        first_line = out[0].lines[0]
        match = _SUBJECT_RE.match(first_line)
        if match and first_line[match.end():].strip():
            if len(out[0].lines) == 1:
                out[0] = replace(out[0], role="subject", content_offset=match.end())
            else:
                head, tail = _split_group_at(out[0], 1)
                out[0:1] = [replace(head, role="subject", content_offset=match.end()), tail]

    # Greeting: the next line after the subject (or the first line without one).
    index = 1 if out and out[0].role == "subject" else 0
    if index < len(out) and out[index].kind == KIND_PARAGRAPH and out[index].role is None:
        if _SALUTATION_RE.match(out[index].lines[0]):
            if len(out[index].lines) == 1:
                out[index] = replace(out[index], role="greeting")
            else:
                head, tail = _split_group_at(out[index], 1)
                out[index:index + 1] = [replace(head, role="greeting"), tail]

    # Closing and signature at the tail.
    _refine_email_tail(out)
    return out


def _refine_email_tail(out: list[SpanGroup]) -> None:
    if not out:
        return
    last = out[-1]
    if last.kind != KIND_PARAGRAPH or last.role is not None:
        return

    lines = last.lines
    closing_at = None
    for i in range(len(lines) - 1, -1, -1):
        trailer = lines[i + 1:]
        if _is_closing_line(lines[i]) and (not trailer or _is_signature_lines(trailer)):
            closing_at = i
            break

    if closing_at is not None:
        pieces: list[SpanGroup] = []
        rest = last
        if closing_at > 0:
            body, rest = _split_group_at(last, closing_at)
            pieces.append(body)
        if len(rest.lines) > 1:
            closing, signature = _split_group_at(rest, 1)
            pieces.append(replace(closing, role="closing"))
            pieces.append(replace(signature, role="signature"))
        else:
            pieces.append(replace(rest, role="closing"))
        out[-1:] = pieces
        return

    # The signature may sit in its own block after a closing-final block.
    if len(out) >= 2 and _is_signature_lines(lines):
        previous = out[-2]
        if previous.kind == KIND_PARAGRAPH and previous.role is None and _is_closing_line(previous.lines[-1]):
            if len(previous.lines) > 1:
                body, closing = _split_group_at(previous, len(previous.lines) - 1)
                out[-2:-1] = [body, replace(closing, role="closing")]
            else:
                out[-2] = replace(previous, role="closing")
            out[-1] = replace(out[-1], role="signature")


# --- step 3: classify ---------------------------------------------------------

def _rule_heading(group: SpanGroup):
    if group.kind == KIND_HEADING:
        return "Heading", {"level": str(group.level or 1)}
    return None


def _rule_code(group: SpanGroup):
    if group.kind == KIND_CODE:
        return "Code", {}
    return None


def _rule_list(group: SpanGroup):
    if group.kind == KIND_LIST:
        return "List", {"style": group.list_style or "bullet"}
    return None


def _rule_citation(group: SpanGroup):
    if group.kind == KIND_CITATION:
        return "Citation", {}
    return None


def _rule_quote(group: SpanGroup):
    if group.kind == KIND_QUOTE:
        return "Paragraph", {"style": "quote"}
    return None


_EMAIL_ROLE_TYPES = {
    "subject": "Subject",
    "greeting": "Greeting",
    "closing": "Closing",
    "signature": "Signature",
}


def _rule_email_role(group: SpanGroup):
    if group.role in _EMAIL_ROLE_TYPES:
        return _EMAIL_ROLE_TYPES[group.role], {"role": group.role}
    return None


DOCUMENT_PROFILE = Profile(
    name=model.PROFILE_DOCUMENT,
    rules=(_rule_heading, _rule_code, _rule_list, _rule_citation, _rule_quote),
)

EMAIL_PROFILE = Profile(
    name=model.PROFILE_EMAIL,
    rules=(_rule_email_role,),
    refine=_refine_email,
)

PROFILES: dict[str, Profile] = {
    DOCUMENT_PROFILE.name: DOCUMENT_PROFILE,
    EMAIL_PROFILE.name: EMAIL_PROFILE,
}


def resolve_profile(profile: "Profile | str") -> Profile:
    if isinstance(profile, Profile):
        return profile
    try:
        return PROFILES[profile]
    except KeyError:
        raise ValidationError(f"unknown profile {profile!r}") from None


def classify(group: SpanGroup, profile: "Profile | str" = "document") -> tuple[str, dict[str, str]]:
    """Type and metadata for a group: first matching profile rule, with
    Paragraph as the always-matching fallback."""
    profile_obj = resolve_profile(profile)
    for rule in profile_obj.rules:
        result = rule(group)
        if result is not None:
            return result
    return "Paragraph", {}


# --- step 4: link -------------------------------------------------------------

def link(components: Iterable[model.Component], profile: "Profile | str" = "document") -> list[model.Link]:
    """Infer belongs_to edges.

    Document profile: each non-heading component belongs to the innermost
    open section, which is always the nearest preceding heading. Email
    profile: body paragraphs belong to the subject when one exists. No
    other edges are produced.
    """
    profile_obj = resolve_profile(profile)
    components = list(components)
    links: list[model.Link] = []
    if profile_obj.name == model.PROFILE_EMAIL:
        subject_id = next((c.id for c in components if c.type == "Subject"), None)
        if subject_id is not None:
            links.extend(
                model.Link(c.id, subject_id, model.BELONGS_TO)
                for c in components
                if c.type == "Paragraph"
            )
        return links

    current_heading: str | None = None
    for component in components:
        if component.type == "Heading":
            current_heading = component.id
        elif current_heading is not None:
            links.append(model.Link(component.id, current_heading, model.BELONGS_TO))
    return links


# --- steps 5-6: validate and export --------------------------------------------

def _deterministic_response_id(raw: str, profile_name: str) -> str:
    digest = hashlib.sha256(f"{profile_name}\n{raw}".encode("utf-8")).hexdigest()
    return f"r{digest[:12]}"


def build_response(
    raw: str,
    blocks: Iterable[Block],
    profile: "Profile | str" = "document",
    response_id: str | None = None,
) -> model.DecomposedResponse:
    """Segment, classify, and link parsed blocks into a response value.

    Performs no validation; :func:`decompose` adds the validation gate, and
    the agent state machine runs it as a separate phase.
    """
    profile_obj = resolve_profile(profile)
    groups = segment(list(blocks), profile_obj)

    components: list[model.Component] = []
    for index, group in enumerate(groups, start=1):
        ctype, meta = classify(group, profile_obj)
        meta = dict(meta)
        meta["span_start"] = str(group.start + group.content_offset)
        meta["span_end"] = str(group.end)
        prefix = group.prefix + group.text[:group.content_offset]
        if prefix:
            meta["prefix"] = prefix
        if group.suffix:
            meta["suffix"] = group.suffix
        components.append(
            model.Component(id=f"c{index}", type=ctype, content=group.content, meta=meta)
        )

    by_source: dict[str, list[model.Link]] = {}
    for edge in link(components, profile_obj):
        by_source.setdefault(edge.source, []).append(edge)
    components = [
        replace(c, links=tuple(by_source.get(c.id, ()))) for c in components
    ]

    return model.DecomposedResponse(
        response_id=response_id or _deterministic_response_id(raw, profile_obj.name),
        source_text=raw,
        profile=profile_obj.name,
        components=tuple(components),
    )


def decompose(
    raw: str,
    profile: "Profile | str" = "document",
    response_id: str | None = None,
) -> model.DecomposedResponse:
    """Run the full pipeline and return a validated response.

    Raises :class:`EmptyResponse` for blank input and
    :class:`DecompositionError` if the produced response fails validation
    (an engine bug surfaced, never silently returned).
    """
    blocks = parse(raw)
    response = build_response(raw, blocks, profile, response_id=response_id)
    report = model.validate(response)
    if not report.ok:
        first = report.violations[0]
        raise DecompositionError(
            f"decomposition failed validation: {first.rule} ({first.detail})", report=report
        )
    return response
