"""Command-line front end.

Exit codes: 0 success, 1 validation findings at error severity, 2 format or
parse error, 3 network/protocol error, 4 usage error. Machine-readable
results go to stdout, diagnostics to stderr. Configuration precedence:
flags > environment (METABRIDGE_STORE, METABRIDGE_PORT) > config file
(INI, ``[metabridge]`` section).
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import logging
import os
import sys
from pathlib import Path

from . import articulatus, ojs, template
from .errors import BadDatestamp, MetabridgeError, NetworkError, ProtocolError
from .model import validate_for_indexing
from .oai.client import HarvestJob, harvest_into_store
from .oai.core import parse_datestamp
from .oai.provider import ProviderConfig, make_http_server
from .store import Store

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_FORMAT = 2
EXIT_NETWORK = 3
EXIT_USAGE = 4


class _Usage(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _Usage(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="metabridge", description=__doc__.split("\n", 1)[0])
    parser.add_argument("--quiet", action="store_true", help="suppress diagnostics")
    parser.add_argument("--config", metavar="PATH", help="INI config file")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)

    p = sub.add_parser("template", help="template file -> OJS article XML")
    p.add_argument("input", metavar="TEMPLATE")
    p.add_argument("output", metavar="OJS_XML")
    p.set_defaults(func=cmd_template)

    p = sub.add_parser("convert", help="crosswalk between OJS and Articulatus XML")
    p.add_argument("--from", dest="source", required=True, choices=("ojs", "neb"))
    p.add_argument("--to", dest="target", required=True, choices=("ojs", "neb"))
    p.add_argument("--rules", metavar="PATH", help="custom crosswalk rule table")
    p.add_argument("--affiliation", metavar="TEXT",
                   help="orgName for authors without an affiliation (ojs->neb)")
    p.add_argument("input", metavar="IN_XML")
    p.add_argument("output", metavar="OUT_XML")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("harvest", help="harvest an OAI-PMH endpoint into a store")
    p.add_argument("endpoint", metavar="URL")
    p.add_argument("store_dir", metavar="STORE", nargs="?")
    p.add_argument("--from", dest="from_date", metavar="DATESTAMP")
    p.add_argument("--until", dest="until_date", metavar="DATESTAMP")
    p.add_argument("--set", dest="set_spec", metavar="SPEC")
    p.add_argument("--prefix", default="oai_dc", choices=("oai_dc", "ojs_native"))
    p.add_argument("--delay", type=int, default=1000, metavar="MS",
                   help="politeness delay between page requests")
    p.set_defaults(func=cmd_harvest)

    p = sub.add_parser("serve", help="serve a store over OAI-PMH (plus /rss)")
    p.add_argument("store_dir", metavar="STORE", nargs="?")
    p.add_argument("--port", type=int)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--name", default="metabridge repository")
    p.add_argument("--page-size", type=int, default=100)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("validate", help="indexing-readiness report for a record file")
    p.add_argument("input", metavar="OJS_XML")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("store", help="inspect or edit a record store")
    store_sub = p.add_subparsers(dest="store_command", parser_class=_Parser, required=True)
    for name, needs_id in (("list", False), ("show", True), ("delete", True)):
        sp = store_sub.add_parser(name)
        sp.add_argument("store_dir", metavar="STORE", nargs="?")
        if needs_id:
            sp.add_argument("identifier", metavar="ID")
        sp.set_defaults(func=cmd_store, store_command=name)

    return parser


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def _load_config(path: str | None) -> dict[str, str]:
    if not path:
        return {}
    parser = configparser.ConfigParser()
    try:
        with open(path, encoding="utf-8") as handle:
            parser.read_file(handle)
    except OSError as exc:
        raise _Usage(f"cannot read config file: {exc}") from exc
    except configparser.Error as exc:
        raise _Usage(f"bad config file: {exc}") from exc
    return dict(parser["metabridge"]) if parser.has_section("metabridge") else {}


def _resolve_store_dir(args, config: dict[str, str]) -> str:
    value = getattr(args, "store_dir", None) or os.environ.get("METABRIDGE_STORE") \
        or config.get("store")
    if not value:
        raise _Usage("no store directory: pass STORE, set METABRIDGE_STORE, "
                     "or put 'store' in the config file")
    return value


def _resolve_port(args, config: dict[str, str]) -> int:
    if args.port is not None:
        return args.port
    env = os.environ.get("METABRIDGE_PORT")
    if env:
        try:
            return int(env)
        except ValueError:
            raise _Usage(f"METABRIDGE_PORT is not a number: {env!r}") from None
    if "port" in config:
        return int(config["port"])
    return 8080


def _diag(args, message: str) -> None:
    if not args.quiet:
        print(message, file=sys.stderr)


def _read_bytes(path: str) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise MetabridgeError(f"cannot read {path}: {exc}") from exc


def _write_atomic(path: str, data: bytes) -> None:
    target = Path(path)
    tmp = target.with_name(target.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, target)


def _parse_stamp_arg(value: str | None, flag: str):
    if value is None:
        return None
    try:
        return parse_datestamp(value)
    except BadDatestamp:
        raise _Usage(f"{flag} must be YYYY-MM-DD or YYYY-MM-DDThh:mm:ssZ, got {value!r}") from None


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_template(args, config) -> int:
    text = _read_bytes(args.input).decode("utf-8")
    doc = template.parse_document(text)
    record = template.to_record(doc)

    galleys = []
    base_dir = Path(args.input).parent
    for path_value, galley in zip(template.galley_paths(doc), record.galleys):
        source = base_dir / path_value
        try:
            payload = source.read_bytes()
        except OSError:
            raise MetabridgeError(f"galley file not found: {source}") from None
        galleys.append(dataclasses.replace(galley, payload=payload))
    record = dataclasses.replace(record, galleys=tuple(galleys))

    for finding in validate_for_indexing(record).findings:
        _diag(args, f"{finding.severity}: {finding.code}: {finding.message}")
    _write_atomic(args.output, ojs.emit_article(record))
    print(f"wrote {args.output} records=1")
    return EXIT_OK


def cmd_convert(args, config) -> int:
    if args.source == args.target:
        raise _Usage("--from and --to must differ")
    rules = articulatus.parse_rules(_read_bytes(args.rules).decode("utf-8")) \
        if args.rules else None
    data = _read_bytes(args.input)
    report = articulatus.CrosswalkReport()
    if args.source == "ojs":
        options = articulatus.CrosswalkOptions(default_affiliation=args.affiliation)
        output = articulatus.crosswalk_ojs_to_neb(data, rules, options, report)
    else:
        output = articulatus.crosswalk_neb_to_ojs(data, rules, report)
    _write_atomic(args.output, output)
    print(f"wrote {args.output}")
    for line in report.dropped:
        print(f"loss: {line}")
    for line in report.warnings:
        _diag(args, f"warning: {line}")
    return EXIT_OK


def cmd_harvest(args, config) -> int:
    store = Store(_resolve_store_dir(args, config))
    job = HarvestJob(
        endpoint=args.endpoint,
        metadata_prefix=args.prefix,
        from_date=_parse_stamp_arg(args.from_date, "--from"),
        until_date=_parse_stamp_arg(args.until_date, "--until"),
        set_spec=args.set_spec,
        politeness_delay_ms=args.delay,
    )
    summary = harvest_into_store(job, store)
    print(summary.line())
    for error in summary.errors:
        _diag(args, f"error: {error}")
    return EXIT_NETWORK if summary.errors else EXIT_OK


def cmd_serve(args, config) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(message)s")
    store = Store(_resolve_store_dir(args, config))
    provider_config = ProviderConfig(repository_name=args.name, page_size=args.page_size)
    server = make_http_server(store, provider_config, args.host, _resolve_port(args, config))
    host, port = server.server_address[:2]
    print(f"serving on http://{host}:{port}{provider_config.base_path} "
          f"(rss at {provider_config.rss_path})", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        _diag(args, "interrupted")
    finally:
        server.server_close()
    return EXIT_OK


def cmd_validate(args, config) -> int:
    doc = ojs.parse_ojs(_read_bytes(args.input))
    worst = EXIT_OK
    for record in doc.records:
        report = validate_for_indexing(record)
        for finding in report.findings:
            print(f"{finding.severity}\t{finding.code}\t{finding.message}")
        if report.errors():
            worst = EXIT_VALIDATION
    print(f"records={len(doc.records)} status={'errors' if worst else 'ok'}")
    return worst


def cmd_store(args, config) -> int:
    store = Store(_resolve_store_dir(args, config))
    if args.store_command == "list":
        from .oai.core import format_datestamp
        for header in store.list():
            status = "deleted" if header.deleted else "active"
            print(f"{header.identifier}\t{format_datestamp(header.datestamp)}\t{status}")
        return EXIT_OK
    if args.store_command == "show":
        record = store.get(args.identifier)
        if record is None:
            _diag(args, f"no such record: {args.identifier}")
            return EXIT_FORMAT
        sys.stdout.buffer.write(ojs.emit_article(record))
        return EXIT_OK
    # delete
    if store.header(args.identifier) is None:
        _diag(args, f"no such record: {args.identifier}")
        return EXIT_FORMAT
    outcome = store.mark_deleted(args.identifier)
    print(f"{args.identifier}\t{outcome}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        config = _load_config(args.config)
        return args.func(args, config)
    except _Usage as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NetworkError, ProtocolError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NETWORK
    except MetabridgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
