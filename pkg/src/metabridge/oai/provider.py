"""Minimal OAI-PMH 2.0 data provider over a local store, plus an RSS feed.

Every malformed request is answered in-protocol (HTTP 200 with an
``<error>`` body); only transport failures surface as HTTP errors.
Resumption tokens are stateless: each token carries the list filters, the
offset and a fingerprint of the matching record set, so a provider restart
cannot break an in-flight harvest, while any change to the underlying
records invalidates outstanding tokens with badResumptionToken.
"""

from __future__ import annotations

import base64
import binascii
import datetime as dt
import email.utils
import hashlib
import json
import logging
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Iterable, Mapping
from urllib.parse import parse_qsl, urlsplit

from .. import ojs
from ..errors import BadDatestamp
from ..model import Lang
from .core import (
    Datestamp,
    EPOCH,
    GetRecord,
    Granularity,
    Identify,
    ListIdentifiers,
    ListMetadataFormats,
    ListRecords,
    MetadataFormat,
    OaiError,
    OaiErrorCode,
    OaiRecord,
    OaiVerb,
    RecordHeader,
    ResumptionToken,
    UTC,
    emit_oai_response,
    format_datestamp,
    parse_datestamp,
    record_to_dc,
)

log = logging.getLogger("metabridge.provider")

METADATA_FORMATS = (
    MetadataFormat("oai_dc",
                   "http://www.openarchives.org/OAI/2.0/oai_dc.xsd",
                   "http://www.openarchives.org/OAI/2.0/oai_dc/"),
    MetadataFormat("ojs_native",
                   "http://pkp.sfu.ca/ojs/dtds/native.dtd",
                   "http://pkp.sfu.ca"),
)
_PREFIXES = tuple(f.prefix for f in METADATA_FORMATS)


@dataclass(frozen=True)
class ProviderConfig:
    repository_name: str = "metabridge repository"
    base_path: str = "/oai"
    page_size: int = 100
    granularity: Granularity = Granularity.SECOND
    admin_email: str = "admin@example.invalid"

    def __post_init__(self):
        if self.page_size < 1:
            raise ValueError("page_size must be >= 1")

    @property
    def rss_path(self) -> str:
        return self.base_path.rsplit("/", 1)[0] + "/rss"


# ---------------------------------------------------------------------------
# stateless resumption tokens
# ---------------------------------------------------------------------------

def _fingerprint(prefix: str, from_arg: str, until_arg: str, page_size: int,
                 headers: Iterable[RecordHeader]) -> str:
    h = hashlib.sha256()
    h.update(f"{prefix}|{from_arg}|{until_arg}|{page_size}".encode())
    for header in headers:
        h.update(f"|{header.identifier}@{format_datestamp(header.datestamp)}"
                 f"@{'D' if header.deleted else 'A'}".encode())
    return h.hexdigest()[:16]


def make_token(prefix: str, from_arg: str, until_arg: str, offset: int,
               fingerprint: str) -> str:
    payload = {"p": prefix, "f": from_arg, "u": until_arg, "o": offset, "h": fingerprint}
    return base64.urlsafe_b64encode(json.dumps(payload, sort_keys=True).encode()).decode()


def parse_token(opaque: str) -> dict:
    try:
        data = json.loads(base64.urlsafe_b64decode(opaque.encode()))
        if not isinstance(data, dict) or not isinstance(data.get("o"), int):
            raise ValueError
        return data
    except (binascii.Error, ValueError, UnicodeDecodeError):
        raise ValueError(f"undecodable resumption token {opaque!r}") from None


# ---------------------------------------------------------------------------
# request handling
# ---------------------------------------------------------------------------

_ALLOWED_ARGS = {
    OaiVerb.IDENTIFY: set(),
    OaiVerb.LIST_METADATA_FORMATS: {"identifier"},
    OaiVerb.LIST_SETS: {"resumptionToken"},
    OaiVerb.LIST_IDENTIFIERS: {"metadataPrefix", "from", "until", "set", "resumptionToken"},
    OaiVerb.LIST_RECORDS: {"metadataPrefix", "from", "until", "set", "resumptionToken"},
    OaiVerb.GET_RECORD: {"identifier", "metadataPrefix"},
}


class _Reply(Exception):
    """Internal short-circuit carrying an in-protocol error."""

    def __init__(self, code: OaiErrorCode, message: str, echo: bool = True):
        super().__init__(message)
        self.error = OaiError(code, message)
        self.echo = echo


def handle_request(
    store,
    config: ProviderConfig,
    params: Mapping[str, str] | Iterable[tuple[str, str]],
    base_url: str = "http://localhost/oai",
    now: Datestamp | None = None,
) -> tuple[int, str, bytes]:
    """Answer one OAI-PMH request; returns (status, content-type, body)."""
    pairs = list(params.items()) if isinstance(params, Mapping) else list(params)
    args = dict(pairs)
    response_date = now or Datestamp(dt.datetime.now(UTC))
    echo_attrs: dict[str, str] = {}

    def respond(payload, attrs: Mapping[str, str]) -> tuple[int, str, bytes]:
        body = emit_oai_response(payload, base_url, attrs, response_date)
        return 200, "text/xml; charset=utf-8", body

    try:
        if len(pairs) != len(args):
            raise _Reply(OaiErrorCode.BAD_ARGUMENT, "repeated query argument", echo=False)
        verb_name = args.pop("verb", None)
        if verb_name is None:
            raise _Reply(OaiErrorCode.BAD_VERB, "missing verb argument", echo=False)
        try:
            verb = OaiVerb(verb_name)
        except ValueError:
            raise _Reply(OaiErrorCode.BAD_VERB, f"unknown verb {verb_name!r}", echo=False) from None
        echo_attrs = {"verb": verb_name, **args}

        extra = set(args) - _ALLOWED_ARGS[verb]
        if extra:
            raise _Reply(OaiErrorCode.BAD_ARGUMENT,
                         f"illegal argument(s) for {verb.value}: {', '.join(sorted(extra))}",
                         echo=False)

        payload = _dispatch(verb, args, store, config, base_url)
    except _Reply as reply:
        return respond(reply.error, echo_attrs if reply.echo else {})

    return respond(payload, echo_attrs)


def _dispatch(verb: OaiVerb, args: dict, store, config: ProviderConfig, base_url: str):
    if verb is OaiVerb.IDENTIFY:
        return _identify(store, config, base_url)
    if verb is OaiVerb.LIST_METADATA_FORMATS:
        return _list_metadata_formats(store, args)
    if verb is OaiVerb.LIST_SETS:
        raise _Reply(OaiErrorCode.NO_SET_HIERARCHY, "this repository does not support sets")
    if verb is OaiVerb.GET_RECORD:
        return _get_record(store, args)
    return _list(verb, store, config, args)


def _identify(store, config: ProviderConfig, base_url: str) -> Identify:
    headers = store.list()
    earliest = min((h.datestamp for h in headers), default=EPOCH)
    return Identify(
        repository_name=config.repository_name,
        base_url=base_url,
        admin_email=config.admin_email,
        earliest_datestamp=earliest.at_granularity(config.granularity),
        granularity=config.granularity,
    )


def _list_metadata_formats(store, args: dict) -> ListMetadataFormats:
    identifier = args.get("identifier")
    if identifier is not None and store.header(identifier) is None:
        raise _Reply(OaiErrorCode.ID_DOES_NOT_EXIST, f"unknown identifier {identifier!r}")
    return ListMetadataFormats(METADATA_FORMATS)


def _require_prefix(value: str | None) -> str:
    if value is None:
        raise _Reply(OaiErrorCode.BAD_ARGUMENT, "metadataPrefix is required", echo=False)
    if value not in _PREFIXES:
        raise _Reply(OaiErrorCode.CANNOT_DISSEMINATE_FORMAT,
                     f"unsupported metadataPrefix {value!r}")
    return value


def _get_record(store, args: dict):
    identifier = args.get("identifier")
    if identifier is None:
        raise _Reply(OaiErrorCode.BAD_ARGUMENT, "identifier is required", echo=False)
    prefix = _require_prefix(args.get("metadataPrefix"))
    header = store.header(identifier)
    if header is None:
        raise _Reply(OaiErrorCode.ID_DOES_NOT_EXIST, f"unknown identifier {identifier!r}")
    return GetRecord(_oai_record(store, header, prefix))


def _parse_window_arg(args: dict, name: str) -> Datestamp | None:
    value = args.get(name)
    if value is None:
        return None
    try:
        return parse_datestamp(value)
    except Exception:
        raise _Reply(OaiErrorCode.BAD_ARGUMENT, f"bad {name} datestamp {value!r}",
                     echo=False) from None


def _list(verb: OaiVerb, store, config: ProviderConfig, args: dict):
    token_arg = args.get("resumptionToken")
    if token_arg is not None:
        if len(args) > 1:
            raise _Reply(OaiErrorCode.BAD_ARGUMENT,
                         "resumptionToken is an exclusive argument", echo=False)
        try:
            data = parse_token(token_arg)
        except ValueError:
            raise _Reply(OaiErrorCode.BAD_RESUMPTION_TOKEN, "undecodable token") from None
        prefix, from_arg, until_arg, offset = data.get("p", ""), data.get("f", ""), data.get("u", ""), data["o"]
        if prefix not in _PREFIXES:
            raise _Reply(OaiErrorCode.BAD_RESUMPTION_TOKEN, "unknown prefix in token")
        try:
            headers = _window(store, from_arg, until_arg)
        except BadDatestamp:
            raise _Reply(OaiErrorCode.BAD_RESUMPTION_TOKEN, "bad window in token") from None
        fingerprint = _fingerprint(prefix, from_arg, until_arg, config.page_size, headers)
        if fingerprint != data.get("h"):
            raise _Reply(OaiErrorCode.BAD_RESUMPTION_TOKEN,
                         "stale token: the record set changed")
    else:
        if args.get("set") is not None:
            raise _Reply(OaiErrorCode.NO_SET_HIERARCHY, "this repository does not support sets")
        prefix = _require_prefix(args.get("metadataPrefix"))
        _parse_window_arg(args, "from")
        _parse_window_arg(args, "until")
        from_arg, until_arg, offset = args.get("from", ""), args.get("until", ""), 0
        headers = _window(store, from_arg, until_arg)
        if not headers:
            raise _Reply(OaiErrorCode.NO_RECORDS_MATCH, "no records in the requested window")
        fingerprint = _fingerprint(prefix, from_arg, until_arg, config.page_size, headers)

    page = headers[offset:offset + config.page_size]
    next_offset = offset + config.page_size
    if next_offset < len(headers):
        token = ResumptionToken(make_token(prefix, from_arg, until_arg, next_offset, fingerprint),
                                complete_list_size=len(headers), cursor=offset)
    elif offset > 0:
        token = ResumptionToken("", complete_list_size=len(headers), cursor=offset)
    else:
        token = None

    if verb is OaiVerb.LIST_IDENTIFIERS:
        return ListIdentifiers(tuple(page), token)
    return ListRecords(tuple(_oai_record(store, h, prefix) for h in page), token)


def _window(store, from_arg: str, until_arg: str) -> list[RecordHeader]:
    from_stamp = parse_datestamp(from_arg) if from_arg else None
    until_stamp = parse_datestamp(until_arg) if until_arg else None
    return store.list(from_stamp, until_stamp)


def _oai_record(store, header: RecordHeader, prefix: str) -> OaiRecord:
    if header.deleted:
        return OaiRecord(header)
    record = store.get(header.identifier)
    if prefix == "oai_dc":
        return OaiRecord(header, dc=record_to_dc(record))
    raw = ET.tostring(ojs.article_element(record), encoding="unicode")
    return OaiRecord(header, raw_metadata=raw)


# ---------------------------------------------------------------------------
# RSS feed
# ---------------------------------------------------------------------------

def emit_rss(store, limit: int, channel_title: str = "metabridge repository",
             channel_link: str = "http://localhost/", description: str = "Recent records") -> bytes:
    """RSS 2.0 feed of the newest non-deleted records, newest first."""
    if limit < 1:
        raise ValueError("limit must be >= 1")
    headers = [h for h in store.list() if not h.deleted]
    headers.sort(key=lambda h: (-h.datestamp.instant.timestamp(), h.identifier))

    rss = ET.Element("rss", {"version": "2.0"})
    channel = ET.SubElement(rss, "channel")
    ET.SubElement(channel, "title").text = channel_title
    ET.SubElement(channel, "link").text = channel_link
    ET.SubElement(channel, "description").text = description

    for header in headers[:limit]:
        record = store.get(header.identifier)
        title = (record.titles.get(Lang.RUS) or record.titles.get(Lang.ENG)
                 or header.identifier)
        link = (header.identifier if header.identifier.startswith(("http://", "https://"))
                else channel_link.rstrip("/") + "/record/" + header.identifier)
        item = ET.SubElement(channel, "item")
        ET.SubElement(item, "title").text = title
        ET.SubElement(item, "link").text = link
        ET.SubElement(item, "guid").text = link
        ET.SubElement(item, "pubDate").text = email.utils.format_datetime(header.datestamp.instant)

    ET.indent(rss, space="  ")
    return ET.tostring(rss, encoding="UTF-8", xml_declaration=True) + b"\n"


# ---------------------------------------------------------------------------
# HTTP front end
# ---------------------------------------------------------------------------

def make_http_server(store, config: ProviderConfig, host: str = "127.0.0.1",
                     port: int = 0) -> ThreadingHTTPServer:
    """Build (but do not start) the HTTP server; port 0 picks a free port."""

    class Handler(BaseHTTPRequestHandler):
        def do_GET(self):  # noqa: N802  (stdlib naming)
            try:
                split = urlsplit(self.path)
                if split.path == config.base_path:
                    params = parse_qsl(split.query, keep_blank_values=True)
                    host_header = self.headers.get("Host", f"{host}:{self.server.server_port}")
                    base_url = f"http://{host_header}{config.base_path}"
                    status, content_type, body = handle_request(store, config, params, base_url)
                elif split.path == config.rss_path:
                    host_header = self.headers.get("Host", f"{host}:{self.server.server_port}")
                    status, content_type = 200, "application/rss+xml; charset=utf-8"
                    body = emit_rss(store, limit=20, channel_title=config.repository_name,
                                    channel_link=f"http://{host_header}/")
                else:
                    status, content_type, body = 404, "text/plain; charset=utf-8", b"not found\n"
            except Exception as exc:  # transport-level failure, not in-protocol
                log.exception("request failed")
                status, content_type = 500, "text/plain; charset=utf-8"
                body = f"internal error: {exc}\n".encode()
            self.send_response(status)
            self.send_header("Content-Type", content_type)
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def log_message(self, fmt, *fmt_args):
            log.info("%s %s", self.address_string(), fmt % fmt_args)

    return ThreadingHTTPServer((host, port), Handler)
