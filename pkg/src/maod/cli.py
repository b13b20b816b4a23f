"""Command-line front door: decompose, recompose, validate, serve, agent.

Standard output carries only artifact data; diagnostics and reports go to
standard error (as JSON when --json is set). Exit codes are stable:

    0  success
    2  empty input (nothing to decompose)
    3  file processing error (unreadable input, bad JSON file)
    4  unknown component referenced by an operation
    5  validation error (invalid decomposition, bad op script)
"""

from __future__ import annotations

import argparse
import json
import re
import sys
from collections import Counter
from pathlib import Path

from . import composer, model
from .engine import decompose
from .errors import (
    EmptyResponse,
    FileProcessingError,
    MaodError,
    UnknownComponent,
    ValidationError,
)

EXIT_CODES = {
    "EmptyResponse": 2,
    "FileProcessingError": 3,
    "UnknownComponent": 4,
    "ValidationError": 5,
    "DecompositionError": 5,
}

_OP_LINE_RE = re.compile(r"^\s*(exclude|include|edit)\s+(\S+)(?:\s+(.+?))?\s*$")


def _read_text(path: str) -> str:
    # Bytes in, bytes out: newline translation would break byte-exact
    # round-trips for CRLF documents.
    try:
        return Path(path).read_bytes().decode("utf-8")
    except OSError as exc:
        raise FileProcessingError(f"cannot read {path}: {exc}") from exc
    except UnicodeDecodeError as exc:
        raise FileProcessingError(f"{path} is not valid UTF-8: {exc}") from exc


def _write_text(path: str, text: str) -> None:
    if path == "-":
        sys.stdout.write(text)
        return
    try:
        Path(path).write_bytes(text.encode("utf-8"))
    except OSError as exc:
        raise FileProcessingError(f"cannot write {path}: {exc}") from exc


def _report(message: dict, as_json: bool) -> None:
    if as_json:
        print(json.dumps(message, ensure_ascii=False), file=sys.stderr)
    else:
        print(message.get("message", str(message)), file=sys.stderr)


def parse_ops(script: str) -> list[tuple[str, str, str | None]]:
    """Parse a line-oriented op script: exclude/include ID, edit ID FILE.

    Blank lines and #-comments are skipped; unknown verbs and malformed
    ids are rejected.
    """
    ops: list[tuple[str, str, str | None]] = []
    for number, line in enumerate(script.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        match = _OP_LINE_RE.match(line)
        if not match:
            raise ValidationError(f"op script line {number}: cannot parse {line!r}")
        verb, cid, argument = match.groups()
        if not model.is_component_id(cid):
            raise ValidationError(f"op script line {number}: {cid!r} is not a component id")
        if verb == "edit" and not argument:
            raise ValidationError(f"op script line {number}: edit needs a content file")
        if verb != "edit" and argument:
            raise ValidationError(f"op script line {number}: {verb} takes no argument")
        ops.append((verb, cid, argument))
    return ops


def cmd_decompose(args: argparse.Namespace) -> int:
    raw = _read_text(args.infile)
    try:
        response = decompose(raw, args.profile)
    except EmptyResponse as exc:
        _report({"code": exc.code, "message": str(exc)}, args.json)
        return EXIT_CODES[exc.code]
    _write_text(args.out, model.to_json(response))
    if args.stats:
        counts = Counter(c.type for c in response.components)
        stats = {"file": args.infile, "components": len(response.components), "counts": dict(sorted(counts.items()))}
        if args.json:
            print(json.dumps(stats, ensure_ascii=False), file=sys.stderr)
        else:
            for name, count in sorted(counts.items()):
                print(f"{name}: {count}", file=sys.stderr)
    return 0


def _load_response(path: str) -> model.DecomposedResponse:
    text = _read_text(path)
    return model.from_json(text)


def cmd_recompose(args: argparse.Namespace) -> int:
    response = _load_response(args.infile)
    report = model.validate(response)
    if not report.ok:
        first = report.violations[0]
        raise ValidationError(f"input decomposition invalid: {first.rule} ({first.detail})")

    events: list[composer.ManipulationEvent] = []
    if args.ops:
        ops = parse_ops(_read_text(args.ops))
        next_id = 1
        for verb, cid, argument in ops:
            if response.get(cid) is None:
                raise UnknownComponent(f"no component {cid!r} in {args.infile}")
            if verb == "exclude":
                events.append(composer.toggle(next_id, cid, False))
            elif verb == "include":
                events.append(composer.toggle(next_id, cid, True))
            else:
                events.append(composer.manual_edit(next_id, cid, _read_text(argument)))
            next_id += 1

    final = composer.replay(response, events)
    artifact = composer.recompose(final, basis_event_id=events[-1].event_id if events else 0)
    _write_text(args.out, artifact.text)
    return 0


def cmd_validate(args: argparse.Namespace) -> int:
    response = _load_response(args.infile)
    report = model.validate(response)
    if args.json:
        print(json.dumps(report.to_dict(), ensure_ascii=False))
    else:
        if report.ok:
            print("ok")
        for violation in report.violations:
            target = violation.component_id or "-"
            print(f"{violation.rule} {target}: {violation.detail}")
    return 0 if report.ok else 5


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_service_app

    app = create_service_app()
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def cmd_agent(args: argparse.Namespace) -> int:
    import uvicorn

    from .a2a import create_agent_app

    app = create_agent_app()
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="maod", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_dec = sub.add_parser("decompose", help="decompose a text file into components")
    p_dec.add_argument("--in", dest="infile", required=True)
    p_dec.add_argument("--profile", choices=list(model.PROFILES), default=model.PROFILE_DOCUMENT)
    p_dec.add_argument("--out", default="-")
    p_dec.add_argument("--stats", action="store_true", help="emit component counts by type")
    p_dec.add_argument("--json", action="store_true", help="machine-readable reports on stderr")
    p_dec.set_defaults(func=cmd_decompose)

    p_rec = sub.add_parser("recompose", help="apply ops to a decomposition and emit text")
    p_rec.add_argument("--in", dest="infile", required=True)
    p_rec.add_argument("--ops", default=None, help="op script: exclude/include ID, edit ID FILE")
    p_rec.add_argument("--out", default="-")
    p_rec.add_argument("--json", action="store_true")
    p_rec.set_defaults(func=cmd_recompose)

    p_val = sub.add_parser("validate", help="validate a decomposition JSON file")
    p_val.add_argument("--in", dest="infile", required=True)
    p_val.add_argument("--json", action="store_true")
    p_val.set_defaults(func=cmd_validate)

    p_srv = sub.add_parser("serve", help="run the REST orchestrator")
    p_srv.add_argument("--host", default="127.0.0.1")
    p_srv.add_argument("--port", type=int, default=None)
    p_srv.set_defaults(func=cmd_serve)

    p_agent = sub.add_parser("agent", help="run the decomposition agent")
    p_agent.add_argument("--host", default="127.0.0.1")
    p_agent.add_argument("--port", type=int, default=None)
    p_agent.set_defaults(func=cmd_agent)

    return parser


def main(argv: list[str] | None = None) -> int:
    import os

    args = build_parser().parse_args(argv)
    if getattr(args, "port", None) is None and args.command in ("serve", "agent"):
        args.port = int(os.environ.get("MAOD_PORT", "8000" if args.command == "serve" else "8100"))
    try:
        return args.func(args)
    except MaodError as exc:
        _report({"code": exc.code, "message": str(exc)}, getattr(args, "json", False))
        return EXIT_CODES.get(exc.code, 1)


if __name__ == "__main__":
    sys.exit(main())
