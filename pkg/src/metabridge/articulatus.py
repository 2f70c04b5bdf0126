"""Articulatus XML codec and the declarative OJS <-> Articulatus crosswalk.

The Articulatus format carries surname+initials authors, localized titles
and abstracts, pages, an article-type code and plain-text references. Full
texts stay out of the file by design (the target library links to them), so
an empty ``<text lang="RUS">`` element is emitted by default.

Crosswalks run as parse-source -> field transfer -> emit-target, where the
transfers are driven by a rule table. Rules are data: the built-in tables
live in ``rules/*.rules`` files and custom tables load from the same
line-oriented format, ``source-path -> target-path : transform``.
"""

from __future__ import annotations

import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, Mapping, Sequence

from .errors import BadLangAttribute, MissingTitle, RuleConflict, XmlSyntax
from . import ojs
from .model import (
    ArticleRecord,
    Author,
    Lang,
    LocalizedText,
    Reference,
    initials_of,
    split_initials,
)

TRANSFORMS = ("identity", "locale-map", "initials", "split-name", "constant", "join-keywords")


@dataclass(frozen=True)
class ArticulatusOptions:
    default_art_type: str = "PRC"
    emit_empty_text: bool = True


@dataclass(frozen=True)
class ArticulatusDocument:
    records: tuple[ArticleRecord, ...] = ()
    options: ArticulatusOptions = ArticulatusOptions()

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))

    def emit(self, warnings: list[str] | None = None) -> bytes:
        return emit_articulatus(self.records, self.options, warnings)


# ---------------------------------------------------------------------------
# codec
# ---------------------------------------------------------------------------

def emit_articulatus(
    records: Iterable[ArticleRecord],
    options: ArticulatusOptions = ArticulatusOptions(),
    warnings: list[str] | None = None,
) -> bytes:
    """Serialize records; single records emit a bare ``<article>`` root,
    collections get an ``<articles>`` wrapper.

    Authors without an affiliation lose their ``<orgName>`` element; each
    omission lands on the ``warnings`` channel when one is passed.
    """
    records = list(records)
    elements = [_article_element(r, options, warnings) for r in records]
    if len(elements) == 1:
        root = elements[0]
    else:
        root = ET.Element("articles")
        root.extend(elements)
    ET.indent(root, space="  ")
    return ET.tostring(root, encoding="UTF-8", xml_declaration=True) + b"\n"


def _article_element(
    record: ArticleRecord,
    options: ArticulatusOptions,
    warnings: list[str] | None,
) -> ET.Element:
    if record.deleted:
        raise ValueError(f"record {record.identifier!r} is deleted; tombstones are not emitted")
    if not record.titles:
        raise MissingTitle(record.identifier)

    art = ET.Element("article")
    if record.pages is not None:
        ET.SubElement(art, "pages").text = record.pages
    ET.SubElement(art, "artType").text = record.art_type or options.default_art_type

    if record.authors:
        authors = ET.SubElement(art, "authors")
        for i, author in enumerate(record.authors, start=1):
            author_el = ET.SubElement(authors, "author", {"num": f"{i:03d}"})
            info = ET.SubElement(author_el, "individInfo", {"lang": "RUS"})
            ET.SubElement(info, "surname").text = author.lastname
            initials = initials_of(author)
            if initials:
                ET.SubElement(info, "initials").text = initials
            if author.affiliation:
                ET.SubElement(info, "orgName").text = author.affiliation
            elif warnings is not None:
                warnings.append(
                    f"author {author.lastname or i!r}: no affiliation, orgName omitted"
                )

    titles = ET.SubElement(art, "artTitles")
    for lang, text in record.titles.items_ordered():
        el = ET.SubElement(titles, "artTitle", {"lang": lang.value})
        el.text = text
    if record.abstracts:
        abstracts = ET.SubElement(art, "abstracts")
        for lang, text in record.abstracts.items_ordered():
            el = ET.SubElement(abstracts, "abstract", {"lang": lang.value})
            el.text = text
    if options.emit_empty_text:
        ET.SubElement(art, "text", {"lang": "RUS"})
    if record.references:
        refs = ET.SubElement(art, "references")
        for ref in record.references:
            ET.SubElement(refs, "reference").text = ref.text
    return art


def parse_articulatus(data: bytes | str) -> list[ArticleRecord]:
    """Parse Articulatus XML (bare ``<article>`` or an ``<articles>`` list).

    Author names arrive as surname+initials; the initials are split into the
    firstname/middlename slots and the record is flagged ``initials_only``
    since full names cannot be reconstructed.
    """
    try:
        root = ET.fromstring(data)
    except ET.ParseError as exc:
        raise XmlSyntax(f"not well-formed XML: {exc}") from None
    tag = root.tag.rsplit("}", 1)[-1]
    if tag == "article":
        return [_parse_article(root)]
    if tag == "articles":
        return [_parse_article(el) for el in root if el.tag.rsplit("}", 1)[-1] == "article"]
    raise XmlSyntax(f"unexpected root element {tag!r}")


def _lang_of(elem: ET.Element) -> Lang:
    value = elem.get("lang", "")
    try:
        return Lang(value)
    except ValueError:
        raise BadLangAttribute(value) from None


def _parse_article(elem: ET.Element) -> ArticleRecord:
    titles: dict = {}
    abstracts: dict = {}
    authors: list[Author] = []
    references: list[Reference] = []
    pages = None
    art_type = "PRC"

    for child in elem:
        tag = child.tag.rsplit("}", 1)[-1]
        if tag == "pages":
            pages = child.text or None
        elif tag == "artType":
            art_type = child.text or "PRC"
        elif tag == "authors":
            for author_el in child:
                if author_el.tag.rsplit("}", 1)[-1] == "author":
                    authors.append(_parse_author(author_el))
        elif tag == "artTitles":
            for t in child:
                if t.tag.rsplit("}", 1)[-1] == "artTitle" and (t.text or ""):
                    titles[_lang_of(t)] = t.text
        elif tag == "abstracts":
            for a in child:
                if a.tag.rsplit("}", 1)[-1] == "abstract" and (a.text or ""):
                    abstracts[_lang_of(a)] = a.text
        elif tag == "references":
            for r in child:
                if r.tag.rsplit("}", 1)[-1] == "reference" and (r.text or "").strip():
                    references.append(Reference(r.text))
        elif tag == "text":
            _lang_of(child)  # validated, content intentionally unused

    return ArticleRecord(
        titles=LocalizedText(titles),
        abstracts=LocalizedText(abstracts),
        authors=tuple(authors),
        pages=pages,
        art_type=art_type,
        references=tuple(references),
    )


def _parse_author(elem: ET.Element) -> Author:
    surname = ""
    first: str = ""
    middle: str | None = None
    org = None
    has_initials = False
    for info in elem:
        if info.tag.rsplit("}", 1)[-1] != "individInfo":
            continue
        _lang_of(info)
        for part in info:
            tag = part.tag.rsplit("}", 1)[-1]
            if tag == "surname":
                surname = part.text or ""
            elif tag == "initials":
                first, middle = split_initials(part.text or "")
                has_initials = bool(first)
            elif tag == "orgName":
                org = part.text or None
    return Author(
        firstname=first,
        lastname=surname,
        middlename=middle,
        affiliation=org,
        initials_only=has_initials,
    )


# ---------------------------------------------------------------------------
# crosswalk rules
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CrosswalkRule:
    source_path: str
    target_path: str
    transform: str
    value: str | None = None  # constant payload

    def __post_init__(self):
        if self.transform not in TRANSFORMS:
            raise RuleConflict(f"unknown transform {self.transform!r}")
        if self.transform == "constant" and not self.value:
            raise RuleConflict("constant transform needs a value, e.g. constant(PRC)")


_RULE_LINE_RE = re.compile(
    r"^(?P<src>\S+)\s*->\s*(?P<tgt>\S+)\s*:\s*(?P<tf>[a-z-]+)(?:\((?P<val>[^)]*)\))?$"
)


def parse_rules(text: str) -> tuple[CrosswalkRule, ...]:
    """Parse a rule table: one ``source -> target : transform`` per line,
    ``#`` comments and blank lines ignored."""
    rules = []
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        m = _RULE_LINE_RE.match(line)
        if not m:
            raise RuleConflict(f"line {lineno}: cannot parse rule {line!r}")
        rules.append(CrosswalkRule(m.group("src"), m.group("tgt"), m.group("tf"), m.group("val")))
    return tuple(rules)


def load_default_rules(direction: str) -> tuple[CrosswalkRule, ...]:
    """Built-in rule tables: direction is ``ojs_to_neb`` or ``neb_to_ojs``."""
    text = resources.files("metabridge").joinpath(f"rules/{direction}.rules").read_text("utf-8")
    return parse_rules(text)


@dataclass(frozen=True)
class _Transfer:
    field: str
    allowed: tuple[str, ...]
    required: bool


# (source_path, target_path) -> transfer description, per direction
_OJS_TO_NEB: Mapping[tuple[str, str], _Transfer] = {
    ("article/pages", "article/pages"): _Transfer("pages", ("identity",), True),
    ("-", "article/artType"): _Transfer("art_type", ("constant",), True),
    ("article/title[@locale]", "article/artTitles/artTitle[@lang]"):
        _Transfer("titles", ("locale-map",), True),
    ("article/abstract[@locale]", "article/abstracts/abstract[@lang]"):
        _Transfer("abstracts", ("locale-map",), True),
    ("article/author/lastname", "article/authors/author/individInfo/surname"):
        _Transfer("surname", ("identity",), True),
    ("article/author", "article/authors/author/individInfo/initials"):
        _Transfer("initials", ("initials",), True),
    ("article/author/affiliation", "article/authors/author/individInfo/orgName"):
        _Transfer("orgname", ("identity",), False),
    ("article/references/reference", "article/references/reference"):
        _Transfer("references", ("identity",), False),
}

_NEB_TO_OJS: Mapping[tuple[str, str], _Transfer] = {
    ("article/pages", "article/pages"): _Transfer("pages", ("identity",), True),
    ("article/artTitles/artTitle[@lang]", "article/title[@locale]"):
        _Transfer("titles", ("locale-map",), True),
    ("article/abstracts/abstract[@lang]", "article/abstract[@locale]"):
        _Transfer("abstracts", ("locale-map",), True),
    ("article/authors/author/individInfo/surname", "article/author/lastname"):
        _Transfer("surname", ("identity",), True),
    ("article/authors/author/individInfo/initials", "article/author/firstname"):
        _Transfer("initials", ("split-name",), True),
    ("article/authors/author/individInfo/orgName", "article/author/affiliation"):
        _Transfer("orgname", ("identity",), False),
    ("article/references/reference", "article/references/reference"):
        _Transfer("references", ("identity",), False),
}


def _check_rules(
    rules: Sequence[CrosswalkRule], registry: Mapping[tuple[str, str], _Transfer]
) -> dict[str, CrosswalkRule]:
    """Validate a rule table against a direction registry.

    Returns transfer-field -> rule. Rejects unknown paths, disallowed
    transforms, duplicate targets and missing required transfers.
    """
    by_field: dict[str, CrosswalkRule] = {}
    seen_targets: set[str] = set()
    for rule in rules:
        transfer = registry.get((rule.source_path, rule.target_path))
        if transfer is None:
            raise RuleConflict(
                f"no known mapping {rule.source_path} -> {rule.target_path}"
            )
        if rule.transform not in transfer.allowed:
            raise RuleConflict(
                f"transform {rule.transform!r} not applicable to {rule.target_path}"
            )
        if rule.target_path in seen_targets:
            raise RuleConflict(f"two rules share target {rule.target_path}")
        seen_targets.add(rule.target_path)
        by_field[transfer.field] = rule
    for (src, tgt), transfer in registry.items():
        if transfer.required and transfer.field not in by_field:
            raise RuleConflict(f"rule table lacks required mapping {src} -> {tgt}")
    return by_field


# ---------------------------------------------------------------------------
# crosswalk engine
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CrosswalkOptions:
    articulatus: ArticulatusOptions = ArticulatusOptions()
    #: orgName sidecar: affiliation by author email (exact match), falling
    #: back to the default. No scraping of biography prose ever happens.
    affiliations: Mapping[str, str] = field(default_factory=dict)
    default_affiliation: str | None = None


@dataclass
class CrosswalkReport:
    dropped: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)


def _affiliation_for(author: Author, options: CrosswalkOptions) -> str | None:
    if author.affiliation:
        return author.affiliation
    if author.email and author.email in options.affiliations:
        return options.affiliations[author.email]
    return options.default_affiliation


def _transfer_record_ojs_to_neb(
    record: ArticleRecord,
    rules: dict[str, CrosswalkRule],
    options: CrosswalkOptions,
    report: CrosswalkReport,
) -> ArticleRecord:
    def dropped(label: str, count: int) -> None:
        if count:
            report.dropped.append(f"{label}: {count} dropped")

    authors = []
    if "surname" in rules:
        for author in record.authors:
            keep_names = "initials" in rules
            authors.append(Author(
                firstname=author.firstname if keep_names else "",
                lastname=author.lastname,
                middlename=author.middlename if keep_names else None,
                affiliation=_affiliation_for(author, options) if "orgname" in rules else None,
            ))
    else:
        dropped("authors", len(record.authors))

    for lang, words in record.subjects_ordered():
        dropped(f"subjects ({lang.value})", len(words))
    dropped("galleys", len(record.galleys))
    dropped("author biographies", sum(1 for a in record.authors if a.biography))
    if record.identifier:
        report.dropped.append("identifier: dropped")
    if record.date_published is not None:
        report.dropped.append("date_published: dropped")

    art_type_rule = rules.get("art_type")
    return ArticleRecord(
        titles=record.titles if "titles" in rules else LocalizedText(),
        abstracts=record.abstracts if "abstracts" in rules else LocalizedText(),
        authors=tuple(authors),
        pages=record.pages if "pages" in rules else None,
        art_type=art_type_rule.value if art_type_rule else "PRC",
        references=record.references if "references" in rules else (),
    )


def _transfer_record_neb_to_ojs(
    record: ArticleRecord,
    rules: dict[str, CrosswalkRule],
    report: CrosswalkReport,
) -> ArticleRecord:
    authors = []
    if "surname" in rules:
        for author in record.authors:
            split = "initials" in rules and author.firstname
            authors.append(Author(
                firstname=author.firstname if split else "",
                lastname=author.lastname,
                middlename=author.middlename if split else None,
                affiliation=author.affiliation if "orgname" in rules else None,
                initials_only=bool(split) and author.initials_only,
            ))
    if record.art_type and record.art_type != "PRC":
        report.dropped.append(f"artType ({record.art_type}): dropped")

    return ArticleRecord(
        titles=record.titles if "titles" in rules else LocalizedText(),
        abstracts=record.abstracts if "abstracts" in rules else LocalizedText(),
        authors=tuple(authors),
        pages=record.pages if "pages" in rules else None,
        references=record.references if "references" in rules else (),
    )


def crosswalk_ojs_to_neb(
    xml: bytes | str,
    rules: Sequence[CrosswalkRule] | None = None,
    options: CrosswalkOptions = CrosswalkOptions(),
    report: CrosswalkReport | None = None,
) -> bytes:
    """Convert OJS native XML to Articulatus XML via the rule table."""
    table = _check_rules(rules if rules is not None else load_default_rules("ojs_to_neb"),
                         _OJS_TO_NEB)
    report = report if report is not None else CrosswalkReport()
    doc = ojs.parse_ojs(xml)
    records = [_transfer_record_ojs_to_neb(r, table, options, report) for r in doc.records]
    return emit_articulatus(records, options.articulatus, report.warnings)


def crosswalk_neb_to_ojs(
    xml: bytes | str,
    rules: Sequence[CrosswalkRule] | None = None,
    report: CrosswalkReport | None = None,
) -> bytes:
    """Convert Articulatus XML to OJS native XML via the rule table."""
    table = _check_rules(rules if rules is not None else load_default_rules("neb_to_ojs"),
                         _NEB_TO_OJS)
    report = report if report is not None else CrosswalkReport()
    records = parse_articulatus(xml)
    converted = [_transfer_record_neb_to_ojs(r, table, report) for r in records]
    if len(converted) == 1:
        return ojs.emit_ojs(ojs.OjsDocument("article", tuple(converted)))
    return ojs.emit_ojs(ojs.OjsDocument("articles", tuple(converted)))
