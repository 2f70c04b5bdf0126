"""OAI-PMH 2.0 shared vocabulary: verbs, errors, datestamps, resumption
tokens, response envelopes and the Dublin Core record mapping.

Emission and parsing are exact inverses over every verb payload and every
protocol error code, so the provider and the harvester can use this module
as a loopback oracle for each other.
"""

from __future__ import annotations

import datetime as dt
import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from enum import Enum
from functools import total_ordering
from typing import Mapping, Union

from ..errors import BadDatestamp, UnknownVerbElement, XmlSyntax
from ..model import (
    ArticleRecord,
    Author,
    Lang,
    LocalizedText,
    locale_map,
    locale_unmap,
)

OAI_NS = "http://www.openarchives.org/OAI/2.0/"
OAI_DC_NS = "http://www.openarchives.org/OAI/2.0/oai_dc/"
DC_NS = "http://purl.org/dc/elements/1.1/"
XSI_NS = "http://www.w3.org/2001/XMLSchema-instance"
OAI_DC_SCHEMA = "http://www.openarchives.org/OAI/2.0/oai_dc.xsd"

ET.register_namespace("", OAI_NS)
ET.register_namespace("oai_dc", OAI_DC_NS)
ET.register_namespace("dc", DC_NS)
ET.register_namespace("xsi", XSI_NS)


class OaiVerb(Enum):
    IDENTIFY = "Identify"
    LIST_METADATA_FORMATS = "ListMetadataFormats"
    LIST_SETS = "ListSets"
    LIST_IDENTIFIERS = "ListIdentifiers"
    LIST_RECORDS = "ListRecords"
    GET_RECORD = "GetRecord"


class OaiErrorCode(Enum):
    BAD_ARGUMENT = "badArgument"
    BAD_RESUMPTION_TOKEN = "badResumptionToken"
    BAD_VERB = "badVerb"
    CANNOT_DISSEMINATE_FORMAT = "cannotDisseminateFormat"
    ID_DOES_NOT_EXIST = "idDoesNotExist"
    NO_RECORDS_MATCH = "noRecordsMatch"
    NO_METADATA_FORMATS = "noMetadataFormats"
    NO_SET_HIERARCHY = "noSetHierarchy"


class Granularity(Enum):
    DAY = "day"
    SECOND = "second"

    @property
    def display(self) -> str:
        return "YYYY-MM-DD" if self is Granularity.DAY else "YYYY-MM-DDThh:mm:ssZ"


_DAY_RE = re.compile(r"^\d{4}-\d{2}-\d{2}$")
_SECOND_RE = re.compile(r"^\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}Z$")

UTC = dt.timezone.utc


@total_ordering
@dataclass(frozen=True)
class Datestamp:
    """A UTC moment at one of the two legal OAI-PMH precisions.

    Ordering compares instants only (a day stamp sorts as its midnight);
    equality, as everywhere in this package, is strict field equality.
    """

    instant: dt.datetime
    granularity: Granularity = Granularity.SECOND

    def __post_init__(self):
        instant = self.instant
        if instant.tzinfo is None:
            instant = instant.replace(tzinfo=UTC)
        else:
            instant = instant.astimezone(UTC)
        instant = instant.replace(microsecond=0)
        if self.granularity is Granularity.DAY:
            instant = instant.replace(hour=0, minute=0, second=0)
        object.__setattr__(self, "instant", instant)

    def __lt__(self, other: "Datestamp") -> bool:
        return self.instant < other.instant

    def compare(self, other: "Datestamp") -> int:
        """-1, 0, or 1 by instant, ignoring granularity."""
        if self.instant < other.instant:
            return -1
        if self.instant > other.instant:
            return 1
        return 0

    def window_end(self) -> dt.datetime:
        """Inclusive upper bound of the interval this stamp denotes: a day
        stamp used as ``until`` covers its whole day."""
        if self.granularity is Granularity.DAY:
            return self.instant + dt.timedelta(hours=23, minutes=59, seconds=59)
        return self.instant

    def at_granularity(self, granularity: Granularity) -> "Datestamp":
        return Datestamp(self.instant, granularity)


def parse_datestamp(text: str) -> Datestamp:
    if _DAY_RE.match(text):
        fmt, granularity = "%Y-%m-%d", Granularity.DAY
    elif _SECOND_RE.match(text):
        fmt, granularity = "%Y-%m-%dT%H:%M:%SZ", Granularity.SECOND
    else:
        raise BadDatestamp(text)
    try:
        instant = dt.datetime.strptime(text, fmt).replace(tzinfo=UTC)
    except ValueError:
        raise BadDatestamp(text) from None
    return Datestamp(instant, granularity)


def format_datestamp(stamp: Datestamp) -> str:
    if stamp.granularity is Granularity.DAY:
        return stamp.instant.strftime("%Y-%m-%d")
    return stamp.instant.strftime("%Y-%m-%dT%H:%M:%SZ")


EPOCH = Datestamp(dt.datetime(1970, 1, 1, tzinfo=UTC))


@dataclass(frozen=True)
class RecordHeader:
    identifier: str
    datestamp: Datestamp
    set_specs: tuple[str, ...] = ()
    deleted: bool = False

    def __post_init__(self):
        object.__setattr__(self, "set_specs", tuple(self.set_specs))


@dataclass(frozen=True)
class ResumptionToken:
    """Opaque continuation marker; an empty string means the list is done."""

    opaque: str
    complete_list_size: int | None = None
    cursor: int | None = None

    @property
    def is_final(self) -> bool:
        return self.opaque == ""


# ---------------------------------------------------------------------------
# Dublin Core
# ---------------------------------------------------------------------------

DC_FIELDS = ("title", "creator", "subject", "description", "publisher",
             "date", "type", "format", "identifier", "language")


@dataclass(frozen=True)
class DcRecord:
    title: tuple[str, ...] = ()
    creator: tuple[str, ...] = ()
    subject: tuple[str, ...] = ()
    description: tuple[str, ...] = ()
    publisher: tuple[str, ...] = ()
    date: tuple[str, ...] = ()
    type: tuple[str, ...] = ()
    format: tuple[str, ...] = ()
    identifier: tuple[str, ...] = ()
    language: tuple[str, ...] = ()

    def __post_init__(self):
        for name in DC_FIELDS:
            object.__setattr__(self, name, tuple(getattr(self, name)))


def _creator_name(author: Author) -> str:
    given = " ".join(part for part in (author.firstname, author.middlename) if part)
    return f"{author.lastname}, {given}" if given else author.lastname


def record_to_dc(record: ArticleRecord, rus_first: bool = True) -> DcRecord:
    """Project a record onto Dublin Core (lossy).

    Localized fields are flattened Russian-first unless ``rus_first`` is
    cleared; creators render as "lastname, firstname middlename".
    """
    def ordered(text: LocalizedText) -> list[str]:
        items = text.items_ordered()
        if not rus_first:
            items = list(reversed(items))
        return [value for _, value in items]

    langs = [lang for lang in (Lang.RUS, Lang.ENG)
             if lang in record.titles.entries
             or lang in record.abstracts.entries
             or lang in record.subjects]
    if not rus_first:
        langs.reverse()

    subjects: list[str] = []
    subject_items = record.subjects_ordered()
    if not rus_first:
        subject_items = list(reversed(subject_items))
    for _, words in subject_items:
        subjects.extend(words)

    return DcRecord(
        title=tuple(ordered(record.titles)),
        creator=tuple(_creator_name(a) for a in record.authors),
        subject=tuple(subjects),
        description=tuple(ordered(record.abstracts)),
        date=(record.date_published.isoformat(),) if record.date_published else (),
        format=tuple(g.mime_type for g in record.galleys if g.mime_type),
        identifier=(record.identifier,) if record.identifier else (),
        language=tuple(locale_map(lang) for lang in langs),
    )


_CREATOR_RE = re.compile(r"^(?P<last>[^,]+),\s*(?P<given>.+)$")


def dc_to_record(identifier: str, dc: DcRecord) -> ArticleRecord:
    """Best-effort inverse of :func:`record_to_dc` for harvested oai_dc.

    Dublin Core does not tag values with languages, so localized fields are
    reassigned positionally against dc:language (Russian-first emission
    order); harvest with the ojs_native prefix when fidelity matters.
    """
    langs: list[Lang] = []
    for code in dc.language:
        try:
            langs.append(locale_unmap(code))
        except Exception:
            continue
    if not langs:
        langs = [Lang.RUS, Lang.ENG]

    def localized(values: tuple[str, ...]) -> LocalizedText:
        entries: dict[Lang, str] = {}
        for i, value in enumerate(values):
            if not value:
                continue
            lang = langs[i] if i < len(langs) else (Lang.ENG if Lang.ENG not in entries else Lang.RUS)
            if lang not in entries:
                entries[lang] = value
        return LocalizedText(entries)

    authors = []
    for i, creator in enumerate(dc.creator):
        m = _CREATOR_RE.match(creator)
        if m:
            given = m.group("given").split()
            authors.append(Author(
                firstname=given[0],
                lastname=m.group("last").strip(),
                middlename=" ".join(given[1:]) or None,
                primary_contact=i == 0,
            ))
        else:
            authors.append(Author(lastname=creator.strip(), primary_contact=i == 0))

    date_published = None
    for value in dc.date:
        try:
            date_published = dt.date.fromisoformat(value[:10])
            break
        except ValueError:
            continue

    subjects = {langs[0]: tuple(s for s in dc.subject if s)} if dc.subject else {}

    return ArticleRecord(
        identifier=identifier,
        titles=localized(dc.title),
        abstracts=localized(dc.description),
        subjects={k: v for k, v in subjects.items() if v},
        authors=tuple(authors),
        date_published=date_published,
    )


# ---------------------------------------------------------------------------
# verb payloads
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Identify:
    repository_name: str
    base_url: str
    admin_email: str
    earliest_datestamp: Datestamp
    granularity: Granularity
    protocol_version: str = "2.0"
    deleted_record: str = "persistent"


@dataclass(frozen=True)
class MetadataFormat:
    prefix: str
    schema: str
    namespace: str


@dataclass(frozen=True)
class ListMetadataFormats:
    formats: tuple[MetadataFormat, ...]

    def __post_init__(self):
        object.__setattr__(self, "formats", tuple(self.formats))


@dataclass(frozen=True)
class OaiSet:
    spec: str
    name: str


@dataclass(frozen=True)
class ListSets:
    sets: tuple[OaiSet, ...]
    resumption_token: ResumptionToken | None = None

    def __post_init__(self):
        object.__setattr__(self, "sets", tuple(self.sets))


@dataclass(frozen=True)
class OaiRecord:
    header: RecordHeader
    dc: DcRecord | None = None
    #: serialized metadata payload for non-oai_dc formats
    raw_metadata: str | None = None


@dataclass(frozen=True)
class ListIdentifiers:
    headers: tuple[RecordHeader, ...]
    resumption_token: ResumptionToken | None = None

    def __post_init__(self):
        object.__setattr__(self, "headers", tuple(self.headers))


@dataclass(frozen=True)
class ListRecords:
    records: tuple[OaiRecord, ...]
    resumption_token: ResumptionToken | None = None

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))


@dataclass(frozen=True)
class GetRecord:
    record: OaiRecord


@dataclass(frozen=True)
class OaiError:
    code: OaiErrorCode
    message: str = ""


Payload = Union[Identify, ListMetadataFormats, ListSets, ListIdentifiers,
                ListRecords, GetRecord, OaiError]

_VERB_BY_PAYLOAD = {
    Identify: OaiVerb.IDENTIFY,
    ListMetadataFormats: OaiVerb.LIST_METADATA_FORMATS,
    ListSets: OaiVerb.LIST_SETS,
    ListIdentifiers: OaiVerb.LIST_IDENTIFIERS,
    ListRecords: OaiVerb.LIST_RECORDS,
    GetRecord: OaiVerb.GET_RECORD,
}


@dataclass(frozen=True)
class OaiResponse:
    response_date: Datestamp
    base_url: str
    request_attrs: Mapping[str, str]
    payload: Payload

    def __post_init__(self):
        object.__setattr__(self, "request_attrs", dict(self.request_attrs))

    @property
    def error(self) -> OaiError | None:
        return self.payload if isinstance(self.payload, OaiError) else None


# ---------------------------------------------------------------------------
# envelope emission
# ---------------------------------------------------------------------------

def emit_oai_response(
    payload: Payload,
    base_url: str,
    request_attrs: Mapping[str, str] | None = None,
    response_date: Datestamp | None = None,
) -> bytes:
    """Wrap a verb payload (or protocol error) in the standard envelope.

    The verb element is derived from the payload type. For badVerb and
    badArgument errors callers must pass empty ``request_attrs``, per the
    protocol.
    """
    if response_date is None:
        response_date = Datestamp(dt.datetime.now(UTC))
    root = ET.Element(f"{{{OAI_NS}}}OAI-PMH")
    root.set(f"{{{XSI_NS}}}schemaLocation",
             f"{OAI_NS} http://www.openarchives.org/OAI/2.0/OAI-PMH.xsd")
    ET.SubElement(root, f"{{{OAI_NS}}}responseDate").text = format_datestamp(
        response_date.at_granularity(Granularity.SECOND))
    request = ET.SubElement(root, f"{{{OAI_NS}}}request", dict(request_attrs or {}))
    request.text = base_url

    if isinstance(payload, OaiError):
        error = ET.SubElement(root, f"{{{OAI_NS}}}error", {"code": payload.code.value})
        error.text = payload.message
    else:
        verb = _VERB_BY_PAYLOAD[type(payload)]
        verb_el = ET.SubElement(root, f"{{{OAI_NS}}}{verb.value}")
        _fill_verb_element(verb_el, payload)

    ET.indent(root, space="  ")
    return ET.tostring(root, encoding="UTF-8", xml_declaration=True) + b"\n"


def _oai(parent: ET.Element, tag: str, text: str | None = None,
         attrs: Mapping[str, str] | None = None) -> ET.Element:
    el = ET.SubElement(parent, f"{{{OAI_NS}}}{tag}", dict(attrs or {}))
    if text is not None:
        el.text = text
    return el


def _fill_verb_element(el: ET.Element, payload: Payload) -> None:
    if isinstance(payload, Identify):
        _oai(el, "repositoryName", payload.repository_name)
        _oai(el, "baseURL", payload.base_url)
        _oai(el, "protocolVersion", payload.protocol_version)
        _oai(el, "adminEmail", payload.admin_email)
        _oai(el, "earliestDatestamp", format_datestamp(payload.earliest_datestamp))
        _oai(el, "deletedRecord", payload.deleted_record)
        _oai(el, "granularity", payload.granularity.display)
    elif isinstance(payload, ListMetadataFormats):
        for fmt in payload.formats:
            f = _oai(el, "metadataFormat")
            _oai(f, "metadataPrefix", fmt.prefix)
            _oai(f, "schema", fmt.schema)
            _oai(f, "metadataNamespace", fmt.namespace)
    elif isinstance(payload, ListSets):
        for s in payload.sets:
            set_el = _oai(el, "set")
            _oai(set_el, "setSpec", s.spec)
            _oai(set_el, "setName", s.name)
        _append_token(el, payload.resumption_token)
    elif isinstance(payload, ListIdentifiers):
        for header in payload.headers:
            el.append(_header_element(header))
        _append_token(el, payload.resumption_token)
    elif isinstance(payload, ListRecords):
        for record in payload.records:
            el.append(_record_element(record))
        _append_token(el, payload.resumption_token)
    elif isinstance(payload, GetRecord):
        el.append(_record_element(payload.record))
    else:  # pragma: no cover - guarded by _VERB_BY_PAYLOAD
        raise TypeError(f"cannot emit payload {payload!r}")


def _append_token(el: ET.Element, token: ResumptionToken | None) -> None:
    if token is None:
        return
    attrs = {}
    if token.complete_list_size is not None:
        attrs["completeListSize"] = str(token.complete_list_size)
    if token.cursor is not None:
        attrs["cursor"] = str(token.cursor)
    _oai(el, "resumptionToken", token.opaque, attrs)


def _header_element(header: RecordHeader) -> ET.Element:
    el = ET.Element(f"{{{OAI_NS}}}header", {"status": "deleted"} if header.deleted else {})
    _oai(el, "identifier", header.identifier)
    _oai(el, "datestamp", format_datestamp(header.datestamp))
    for spec in header.set_specs:
        _oai(el, "setSpec", spec)
    return el


def _record_element(record: OaiRecord) -> ET.Element:
    el = ET.Element(f"{{{OAI_NS}}}record")
    el.append(_header_element(record.header))
    if record.header.deleted:
        return el
    if record.dc is not None:
        metadata = _oai(el, "metadata")
        metadata.append(_dc_element(record.dc))
    elif record.raw_metadata is not None:
        metadata = _oai(el, "metadata")
        metadata.append(ET.fromstring(record.raw_metadata))
    return el


def _dc_element(dc: DcRecord) -> ET.Element:
    root = ET.Element(f"{{{OAI_DC_NS}}}dc")
    root.set(f"{{{XSI_NS}}}schemaLocation", f"{OAI_DC_NS} {OAI_DC_SCHEMA}")
    for name in DC_FIELDS:
        for value in getattr(dc, name):
            ET.SubElement(root, f"{{{DC_NS}}}{name}").text = value
    return root


# ---------------------------------------------------------------------------
# envelope parsing
# ---------------------------------------------------------------------------

def parse_oai_response(data: bytes | str) -> OaiResponse:
    """Parse an OAI-PMH response into its typed payload or error."""
    try:
        root = ET.fromstring(data)
    except ET.ParseError as exc:
        raise XmlSyntax(f"not well-formed XML: {exc}") from None
    if root.tag != f"{{{OAI_NS}}}OAI-PMH":
        raise XmlSyntax(f"not an OAI-PMH envelope: {root.tag}")

    response_date: Datestamp | None = None
    base_url = ""
    request_attrs: dict[str, str] = {}
    payload: Payload | None = None

    for child in root:
        tag = child.tag.rsplit("}", 1)[-1]
        if tag == "responseDate":
            response_date = parse_datestamp(child.text or "")
        elif tag == "request":
            base_url = child.text or ""
            request_attrs = dict(child.attrib)
        elif tag == "error":
            try:
                code = OaiErrorCode(child.get("code", ""))
            except ValueError:
                raise XmlSyntax(f"unknown error code {child.get('code')!r}") from None
            if payload is None:  # first error wins
                payload = OaiError(code, child.text or "")
        else:
            payload = _parse_verb_element(tag, child)

    if response_date is None or payload is None:
        raise XmlSyntax("incomplete OAI-PMH envelope")
    return OaiResponse(response_date, base_url, request_attrs, payload)


def _parse_verb_element(tag: str, el: ET.Element) -> Payload:
    def texts(parent: ET.Element, name: str) -> list[str]:
        return [e.text or "" for e in parent.findall(f"{{{OAI_NS}}}{name}")]

    def text(parent: ET.Element, name: str) -> str:
        found = parent.find(f"{{{OAI_NS}}}{name}")
        return found.text or "" if found is not None else ""

    if tag == OaiVerb.IDENTIFY.value:
        granularity = (Granularity.DAY if text(el, "granularity") == "YYYY-MM-DD"
                       else Granularity.SECOND)
        return Identify(
            repository_name=text(el, "repositoryName"),
            base_url=text(el, "baseURL"),
            admin_email=text(el, "adminEmail"),
            earliest_datestamp=parse_datestamp(text(el, "earliestDatestamp")),
            granularity=granularity,
            protocol_version=text(el, "protocolVersion"),
            deleted_record=text(el, "deletedRecord"),
        )
    if tag == OaiVerb.LIST_METADATA_FORMATS.value:
        formats = tuple(
            MetadataFormat(text(f, "metadataPrefix"), text(f, "schema"),
                           text(f, "metadataNamespace"))
            for f in el.findall(f"{{{OAI_NS}}}metadataFormat")
        )
        return ListMetadataFormats(formats)
    if tag == OaiVerb.LIST_SETS.value:
        sets = tuple(OaiSet(text(s, "setSpec"), text(s, "setName"))
                     for s in el.findall(f"{{{OAI_NS}}}set"))
        return ListSets(sets, _parse_token(el))
    if tag == OaiVerb.LIST_IDENTIFIERS.value:
        headers = tuple(_parse_header(h) for h in el.findall(f"{{{OAI_NS}}}header"))
        return ListIdentifiers(headers, _parse_token(el))
    if tag == OaiVerb.LIST_RECORDS.value:
        records = tuple(_parse_record(r) for r in el.findall(f"{{{OAI_NS}}}record"))
        return ListRecords(records, _parse_token(el))
    if tag == OaiVerb.GET_RECORD.value:
        record_el = el.find(f"{{{OAI_NS}}}record")
        if record_el is None:
            raise XmlSyntax("GetRecord response without a record")
        return GetRecord(_parse_record(record_el))
    raise UnknownVerbElement(tag)


def _parse_token(el: ET.Element) -> ResumptionToken | None:
    token_el = el.find(f"{{{OAI_NS}}}resumptionToken")
    if token_el is None:
        return None
    size = token_el.get("completeListSize")
    cursor = token_el.get("cursor")
    return ResumptionToken(
        opaque=token_el.text or "",
        complete_list_size=int(size) if size is not None else None,
        cursor=int(cursor) if cursor is not None else None,
    )


def _parse_header(el: ET.Element) -> RecordHeader:
    identifier = el.find(f"{{{OAI_NS}}}identifier")
    datestamp = el.find(f"{{{OAI_NS}}}datestamp")
    if identifier is None or datestamp is None:
        raise XmlSyntax("record header lacks identifier or datestamp")
    return RecordHeader(
        identifier=identifier.text or "",
        datestamp=parse_datestamp(datestamp.text or ""),
        set_specs=tuple(s.text or "" for s in el.findall(f"{{{OAI_NS}}}setSpec")),
        deleted=el.get("status") == "deleted",
    )


def _parse_record(el: ET.Element) -> OaiRecord:
    header_el = el.find(f"{{{OAI_NS}}}header")
    if header_el is None:
        raise XmlSyntax("record without a header")
    header = _parse_header(header_el)
    metadata = el.find(f"{{{OAI_NS}}}metadata")
    if metadata is None or len(metadata) == 0:
        return OaiRecord(header)
    child = metadata[0]
    if child.tag == f"{{{OAI_DC_NS}}}dc":
        values = {name: tuple(e.text or "" for e in child.findall(f"{{{DC_NS}}}{name}"))
                  for name in DC_FIELDS}
        return OaiRecord(header, dc=DcRecord(**values))
    return OaiRecord(header, raw_metadata=ET.tostring(child, encoding="unicode"))
