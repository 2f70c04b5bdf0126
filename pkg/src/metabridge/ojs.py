"""Codec for the OJS native article/issue XML import-export format.

Parsing is namespace-agnostic and never validates against a DTD; structural
checks replace DTD validation. Emission is deterministic: fixed element
order, fixed attribute order, UTF-8 with an XML declaration, so identical
documents always produce identical bytes.

Unknown elements found inside an ``<article>`` are kept verbatim in a
side map (`OjsDocument.raw_extras`) and re-emitted after the known
elements, which makes parse -> emit lossless for foreign files.
"""

from __future__ import annotations

import base64
import binascii
import datetime as dt
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .errors import BadBase64, MissingLocaleAttribute, UnsupportedRoot, XmlSyntax
from .model import (
    ArticleRecord,
    Author,
    GalleyFile,
    LocalizedText,
    Reference,
    join_keywords,
    locale_map,
    locale_unmap,
    split_keywords,
)

ROOT_KINDS = ("article", "articles", "issue", "issues")

#: Article children the parser understands; anything else goes to raw_extras.
_KNOWN_ARTICLE_TAGS = frozenset(
    {"id", "title", "abstract", "indexing", "subject", "author", "pages",
     "date_published", "galley", "references"}
)


@dataclass(frozen=True)
class IssueMetadata:
    title: LocalizedText = LocalizedText()
    volume: str | None = None
    number: str | None = None
    year: str | None = None


@dataclass(frozen=True)
class OjsDocument:
    root_kind: str = "articles"
    records: tuple[ArticleRecord, ...] = ()
    issue_metadata: IssueMetadata | None = None
    #: record index -> serialized unknown elements, in document order
    raw_extras: Mapping[int, tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self):
        if self.root_kind not in ROOT_KINDS:
            raise UnsupportedRoot(self.root_kind)
        object.__setattr__(self, "records", tuple(self.records))
        object.__setattr__(self, "raw_extras", dict(self.raw_extras))
        if self.root_kind == "article" and len(self.records) != 1:
            raise ValueError("an 'article' root holds exactly one record")


def _local(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def _text(elem: ET.Element) -> str:
    return elem.text or ""


def _locale_lang(elem: ET.Element, what: str):
    locale = elem.get("locale")
    if locale is None:
        raise MissingLocaleAttribute(what)
    return locale_unmap(locale)


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

def parse_ojs(data: bytes | str) -> OjsDocument:
    """Parse OJS native XML with any of the four supported roots."""
    try:
        root = ET.fromstring(data)
    except ET.ParseError as exc:
        raise XmlSyntax(f"not well-formed XML: {exc}") from None

    kind = _local(root.tag)
    if kind not in ROOT_KINDS:
        raise UnsupportedRoot(kind)

    records: list[ArticleRecord] = []
    extras: dict[int, tuple[str, ...]] = {}
    issue_meta: IssueMetadata | None = None

    def eat_article(elem: ET.Element) -> None:
        record, extra = _parse_article(elem)
        if extra:
            extras[len(records)] = extra
        records.append(record)

    def eat_issue(elem: ET.Element) -> IssueMetadata:
        titles: dict = {}
        volume = number = year = None
        for child in elem:
            tag = _local(child.tag)
            if tag == "article":
                eat_article(child)
            elif tag == "title":
                lang = _locale_lang(child, "title")
                if _text(child):
                    titles[lang] = _text(child)
            elif tag == "volume":
                volume = _text(child)
            elif tag == "number":
                number = _text(child)
            elif tag == "year":
                year = _text(child)
        return IssueMetadata(LocalizedText(titles), volume, number, year)

    if kind == "article":
        eat_article(root)
    elif kind == "articles":
        for child in root:
            if _local(child.tag) == "article":
                eat_article(child)
    elif kind == "issue":
        issue_meta = eat_issue(root)
    else:  # issues: concatenate; metadata of the first issue wins
        for child in root:
            if _local(child.tag) == "issue":
                meta = eat_issue(child)
                issue_meta = issue_meta or meta

    return OjsDocument(kind, tuple(records), issue_meta, extras)


def parse_article(data: bytes | str) -> ArticleRecord:
    """Parse a single-article OJS file (the store's canonical on-disk form)."""
    doc = parse_ojs(data)
    if doc.root_kind != "article":
        raise UnsupportedRoot(doc.root_kind)
    return doc.records[0]


def _parse_article(elem: ET.Element) -> tuple[ArticleRecord, tuple[str, ...]]:
    identifier = ""
    titles: dict = {}
    abstracts: dict = {}
    subjects: dict = {}
    authors: list[Author] = []
    pages = None
    date_published = None
    references: list[Reference] = []
    galleys: list[GalleyFile] = []
    extras: list[str] = []

    def add_subject(sub: ET.Element) -> None:
        lang = _locale_lang(sub, "subject")
        words = split_keywords(_text(sub))
        if words:
            subjects[lang] = subjects.get(lang, ()) + words

    for child in elem:
        tag = _local(child.tag)
        if tag == "id":
            identifier = _text(child)
        elif tag == "title":
            lang = _locale_lang(child, "title")
            if _text(child):
                titles[lang] = _text(child)
        elif tag == "abstract":
            lang = _locale_lang(child, "abstract")
            if _text(child):
                abstracts[lang] = _text(child)
        elif tag == "indexing":
            for sub in child:
                if _local(sub.tag) == "subject":
                    add_subject(sub)
        elif tag == "subject":
            # tolerated outside <indexing> as well
            add_subject(child)
        elif tag == "author":
            authors.append(_parse_author(child))
        elif tag == "pages":
            pages = _text(child) or None
        elif tag == "date_published":
            try:
                date_published = dt.date.fromisoformat(_text(child))
            except ValueError:
                raise XmlSyntax(f"bad date_published {_text(child)!r}") from None
        elif tag == "references":
            for ref in child:
                if _local(ref.tag) == "reference" and _text(ref).strip():
                    references.append(Reference(_text(ref)))
        elif tag == "galley":
            galleys.append(_parse_galley(child))
        else:
            extras.append(ET.tostring(child, encoding="unicode"))

    record = ArticleRecord(
        identifier=identifier,
        titles=LocalizedText(titles),
        abstracts=LocalizedText(abstracts),
        subjects=subjects,
        authors=tuple(authors),
        pages=pages,
        references=tuple(references),
        galleys=tuple(galleys),
        date_published=date_published,
    )
    return record, tuple(extras)


def _parse_author(elem: ET.Element) -> Author:
    parts: dict[str, str] = {}
    biography: dict = {}
    for child in elem:
        tag = _local(child.tag)
        if tag == "biography":
            lang = _locale_lang(child, "biography")
            if _text(child):
                biography[lang] = _text(child)
        elif tag in ("firstname", "middlename", "lastname", "country", "email", "affiliation"):
            parts[tag] = _text(child)
    return Author(
        firstname=parts.get("firstname", ""),
        lastname=parts.get("lastname", ""),
        middlename=parts.get("middlename") or None,
        country=parts.get("country") or None,
        email=parts.get("email") or None,
        biography=LocalizedText(biography) if biography else None,
        affiliation=parts.get("affiliation") or None,
        primary_contact=elem.get("primary_contact") == "true",
    )


def _parse_galley(elem: ET.Element) -> GalleyFile:
    label = ""
    filename = ""
    mime_type = ""
    payload = b""
    for child in elem:
        tag = _local(child.tag)
        if tag == "label":
            label = _text(child)
        elif tag == "file":
            for embed in child:
                if _local(embed.tag) != "embed":
                    continue
                filename = embed.get("filename", "")
                mime_type = embed.get("mime_type", "")
                blob = "".join((embed.text or "").split())
                try:
                    payload = base64.b64decode(blob, validate=True)
                except (binascii.Error, ValueError):
                    raise BadBase64(filename) from None
    return GalleyFile(label=label, filename=filename, mime_type=mime_type, payload=payload)


# ---------------------------------------------------------------------------
# emission
# ---------------------------------------------------------------------------

def emit_ojs(doc: OjsDocument) -> bytes:
    """Serialize a document; raises UnsupportedRoot when issue metadata is
    required but absent, ValueError on tombstone records."""
    for record in doc.records:
        if record.deleted:
            raise ValueError(f"record {record.identifier!r} is deleted; tombstones are not emitted")

    if doc.root_kind in ("issue", "issues") and doc.issue_metadata is None:
        raise UnsupportedRoot(f"{doc.root_kind} (issue metadata required)")

    if doc.root_kind == "article":
        root = _article_element(doc.records[0], doc.raw_extras.get(0, ()))
    elif doc.root_kind == "articles":
        root = ET.Element("articles")
        for i, record in enumerate(doc.records):
            root.append(_article_element(record, doc.raw_extras.get(i, ())))
    else:
        issue = ET.Element("issue")
        meta = doc.issue_metadata
        for lang, text in meta.title.items_ordered():
            el = ET.SubElement(issue, "title", {"locale": locale_map(lang)})
            el.text = text
        for tag, value in (("volume", meta.volume), ("number", meta.number), ("year", meta.year)):
            if value is not None:
                ET.SubElement(issue, tag).text = value
        for i, record in enumerate(doc.records):
            issue.append(_article_element(record, doc.raw_extras.get(i, ())))
        if doc.root_kind == "issue":
            root = issue
        else:
            root = ET.Element("issues")
            root.append(issue)

    return _serialize(root)


def emit_article(record: ArticleRecord) -> bytes:
    """Serialize one record as a single-article document."""
    return emit_ojs(OjsDocument("article", (record,)))


def article_element(record: ArticleRecord) -> ET.Element:
    """Bare ``<article>`` element for grafting into other XML (OAI metadata)."""
    if record.deleted:
        raise ValueError(f"record {record.identifier!r} is deleted; tombstones are not emitted")
    return _article_element(record)


def _serialize(root: ET.Element) -> bytes:
    ET.indent(root, space="  ")
    return ET.tostring(root, encoding="UTF-8", xml_declaration=True) + b"\n"


def _article_element(record: ArticleRecord, extras: Iterable[str] = ()) -> ET.Element:
    art = ET.Element("article")
    if record.identifier:
        ET.SubElement(art, "id").text = record.identifier
    for lang, text in record.titles.items_ordered():
        el = ET.SubElement(art, "title", {"locale": locale_map(lang)})
        el.text = text
    for lang, text in record.abstracts.items_ordered():
        el = ET.SubElement(art, "abstract", {"locale": locale_map(lang)})
        el.text = text
    if record.subjects:
        indexing = ET.SubElement(art, "indexing")
        for lang, words in record.subjects_ordered():
            el = ET.SubElement(indexing, "subject", {"locale": locale_map(lang)})
            el.text = join_keywords(words)
    for author in record.authors:
        art.append(_author_element(author))
    if record.pages is not None:
        ET.SubElement(art, "pages").text = record.pages
    if record.date_published is not None:
        ET.SubElement(art, "date_published").text = record.date_published.isoformat()
    for galley in record.galleys:
        art.append(_galley_element(galley))
    if record.references:
        refs = ET.SubElement(art, "references")
        for ref in record.references:
            ET.SubElement(refs, "reference").text = ref.text
    for raw in extras:
        art.append(ET.fromstring(raw))
    return art


def _author_element(author: Author) -> ET.Element:
    attrs = {"primary_contact": "true"} if author.primary_contact else {}
    el = ET.Element("author", attrs)
    ET.SubElement(el, "firstname").text = author.firstname
    if author.middlename is not None:
        ET.SubElement(el, "middlename").text = author.middlename
    ET.SubElement(el, "lastname").text = author.lastname
    if author.affiliation is not None:
        ET.SubElement(el, "affiliation").text = author.affiliation
    if author.country is not None:
        ET.SubElement(el, "country").text = author.country
    if author.email is not None:
        ET.SubElement(el, "email").text = author.email
    if author.biography is not None:
        for lang, text in author.biography.items_ordered():
            bio = ET.SubElement(el, "biography", {"locale": locale_map(lang)})
            bio.text = text
    return el


def _galley_element(galley: GalleyFile) -> ET.Element:
    el = ET.Element("galley", {"locale": "ru_RU"})
    ET.SubElement(el, "label").text = galley.label
    file_el = ET.SubElement(el, "file")
    embed = ET.SubElement(
        file_el,
        "embed",
        {"filename": galley.filename, "encoding": "base64", "mime_type": galley.mime_type},
    )
    embed.text = base64.b64encode(galley.payload).decode("ascii")
    return el
